#include <doctest.h>

#include <filesystem>

#include "binio.hpp"
#include "catalog.hpp"
#include "fields.hpp"
#include "pipeline.hpp"
#include "support.hpp"

using namespace bflow;
using namespace bflow::pipeline;
namespace fs = std::filesystem;

namespace {

RunConfig desk_config(const std::string& dir, int steps) {
  RunConfig cfg;
  cfg.out_dir = dir;
  cfg.scene = "desk";
  cfg.steps = steps;
  return cfg;
}

std::size_t count_files(const std::string& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("two steps with three bubbles give six rows and six images") {
  testing::TempDir dir;
  // two voids plus the freeboard per step
  auto scene = synth::presets::desk();
  scene.voids.resize(2);
  scene.n_timesteps = 2;
  synth::write_scene(scene, dir / "scene_in.json");
  RunConfig cfg;
  cfg.out_dir = dir / "run";
  cfg.scene_file = dir / "scene_in.json";
  generate(cfg);
  summarize(cfg);
  const auto ex = extract(cfg);
  REQUIRE(ex.steps.size() == 2);
  for (const auto& s : ex.steps) CHECK(s.bubbles.size() == 3);
  const auto res = build_catalog(cfg);
  CHECK(res.rows == 6);
  CHECK(res.images == 6);
  CHECK(count_files(cfg.out_dir + "/images", ".png") == 6);
}

TEST_CASE("desk run end to end") {
  testing::TempDir dir;
  auto cfg = desk_config(dir / "run", 3);
  const RunPaths paths(cfg.out_dir);
  const auto gen = generate(cfg);
  CHECK(gen.scene.n_timesteps == 3);
  CHECK(fs::exists(paths.scene()));

  const auto sum = summarize(cfg);
  CHECK(sum.steps == std::vector<int>{0, 1, 2});
  CHECK(sum.feature.gaussian.mean == 0.0);
  CHECK(sum.feature.gaussian.var == similarity::kVarianceFloor);
  CHECK(sum.summary_bytes == 3 * 2 * fields::field_file_size(GridSpec::from_bounds(gen.scene.domain_bounds, kDeskDims)));
  const auto info = read_summary(cfg.out_dir);
  CHECK(info.steps == sum.steps);
  CHECK(info.dt == gen.scene.timestep_dt);
  CHECK_FALSE(info.has_density);

  const auto ex = extract(cfg);
  for (const auto& s : ex.steps) {
    // synthetic empty top region: exactly one flagged component
    CHECK(std::count_if(s.bubbles.begin(), s.bubbles.end(), [](const auto& b) { return b.is_freeboard; }) == 1);
    CHECK(s.bubbles.size() == 6);
  }

  const auto cat = build_catalog(cfg);
  CHECK(cat.rows == 18);
  CHECK(cat.tracks == 5);
  const auto csv = binio::read_text_file(paths.catalog_csv());
  const auto rows = catalog::parse_csv(csv);
  REQUIRE(rows.size() == 18);

  // row volumes are the extracted volumes, bit for bit
  for (const auto& r : rows) {
    const auto& s = ex.steps[static_cast<std::size_t>(r.time_index)];
    const auto it = std::find_if(s.bubbles.begin(), s.bubbles.end(), [&](const auto& b) { return b.bubble_id == r.bubble_id; });
    REQUIRE(it != s.bubbles.end());
    CHECK(r.volume == it->volume);
    CHECK(fs::exists(cfg.out_dir + "/" + r.image_path));
  }

  // rebuild is idempotent
  build_catalog(cfg);
  CHECK(binio::read_text_file(paths.catalog_csv()) == csv);

  const auto meta = nlohmann::json::parse(binio::read_text_file(paths.meta_json()));
  CHECK(meta.at("dt").get<double>() == gen.scene.timestep_dt);
  CHECK(meta.at("threshold").get<double>() == 0.92);
  CHECK(meta.at("time_range") == nlohmann::json::array({0, 2}));
}

TEST_CASE("stages after summarize never read particles") {
  testing::TempDir dir;
  auto cfg = desk_config(dir / "run", 2);
  generate(cfg);
  summarize(cfg);
  extract(cfg);
  track(cfg);
  build_catalog(cfg);
  const auto before = binio::read_text_file(RunPaths(cfg.out_dir).catalog_csv());
  fs::remove_all(RunPaths(cfg.out_dir).particles());
  extract(cfg);
  track(cfg);
  build_catalog(cfg);
  CHECK(binio::read_text_file(RunPaths(cfg.out_dir).catalog_csv()) == before);
}

TEST_CASE("every Nth step and kept density") {
  testing::TempDir dir;
  auto cfg = desk_config(dir / "run", 5);
  cfg.every = 2;
  cfg.keep_density = true;
  generate(cfg);
  const auto sum = summarize(cfg);
  CHECK(sum.steps == std::vector<int>{0, 2, 4});
  const RunPaths paths(cfg.out_dir);
  CHECK(fs::exists(paths.field(FieldName::density, 2)));
  CHECK_FALSE(fs::exists(paths.field(FieldName::bsf, 1)));
  const auto d = fields::read_field(paths.field(FieldName::density, 4));
  double total = 0;
  for (double v : d.values) total += v;
  CHECK(total == 100000.0);
}

TEST_CASE("stage preconditions") {
  testing::TempDir dir;
  auto cfg = desk_config(dir / "run", 2);
  SUBCASE("summarize before generate") {
    try {
      summarize(cfg);
      FAIL("expected NotFound");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotFound);
    }
  }
  SUBCASE("extract before summarize") {
    generate(cfg);
    CHECK_THROWS_AS(extract(cfg), Error);
  }
  SUBCASE("missing field files are listed") {
    generate(cfg);
    summarize(cfg);
    fs::remove(RunPaths(cfg.out_dir).field(FieldName::bsf, 1));
    try {
      extract(cfg);
      FAIL("expected NotFound");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotFound);
      CHECK(std::string(e.what()).find("[1]") != std::string::npos);
    }
  }
  SUBCASE("template box outside the grid") {
    generate(cfg);
    cfg.template_box = VoxelBox{{0, 0, 0}, {64, 1, 1}};
    CHECK_THROWS_AS(summarize(cfg), Error);
  }
  SUBCASE("template step that was not processed") {
    generate(cfg);
    cfg.template_step = 7;
    CHECK_THROWS_AS(summarize(cfg), Error);
  }
}

TEST_CASE("auto template box lies inside the void") {
  const auto scene = synth::presets::desk();
  const auto spec = GridSpec::from_bounds(scene.domain_bounds, kDeskDims);
  const auto box = auto_template_box(scene, spec, 0);
  REQUIRE(box);
  const auto st = synth::void_state(scene.voids[0], 0, scene.timestep_dt);
  for (int i : {box->lo[0], box->hi[0] + 1})
    for (int j : {box->lo[1], box->hi[1] + 1})
      for (int k : {box->lo[2], box->hi[2] + 1}) {
        const Vec3 corner{spec.origin[0] + i * spec.spacing[0], spec.origin[1] + j * spec.spacing[1],
                          spec.origin[2] + k * spec.spacing[2]};
        CHECK(st.normalized_r2(corner) < 1.0);
      }
  // empty bed: the freeboard layers
  const auto empty = synth::presets::empty_bed();
  const auto fb = auto_template_box(empty, spec, 0);
  REQUIRE(fb);
  CHECK(fb->hi[0] == spec.dims[0] - 1);
  CHECK(fb->lo[0] >= static_cast<int>(empty.bed_fraction * spec.dims[0]));
}

}
