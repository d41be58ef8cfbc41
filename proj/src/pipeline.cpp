#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "binio.hpp"
#include "catalog.hpp"
#include "fields.hpp"

namespace fs = std::filesystem;

namespace bflow::pipeline {

std::string RunPaths::field(FieldName name, int t) const { return summary() + "/" + fields::field_file_name(name, t); }

namespace {

void validate_config(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw Error(ErrorCode::InvalidArgument, "output directory is empty");
  for (int a = 0; a < 3; ++a)
    if (cfg.grid[a] < 1) throw Error(ErrorCode::InvalidArgument, "grid dims must be >= 1");
  if (cfg.every < 1) throw Error(ErrorCode::InvalidArgument, "--every must be >= 1");
  if (cfg.ranks < 1) throw Error(ErrorCode::InvalidArgument, "--ranks must be >= 1");
  if (cfg.image_scale < 1) throw Error(ErrorCode::InvalidArgument, "image scale must be >= 1");
  if (cfg.dt && !(*cfg.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "--dt must be > 0");
}

std::uint64_t file_size_or_zero(const std::string& path) {
  std::error_code ec;
  const auto n = fs::file_size(path, ec);
  return ec ? 0 : static_cast<std::uint64_t>(n);
}

std::vector<int> every_nth(const std::vector<int>& all, int every) {
  std::vector<int> out;
  if (all.empty()) return out;
  for (int t : all)
    if ((t - all.front()) % every == 0) out.push_back(t);
  return out;
}

}  // namespace

synth::SceneSpec resolve_scene(const RunConfig& cfg) {
  auto scene = cfg.scene_file.empty() ? synth::presets::by_name(cfg.scene) : synth::read_scene(cfg.scene_file);
  if (cfg.dt) scene.timestep_dt = *cfg.dt;
  if (cfg.seed) scene.rng_seed = *cfg.seed;
  if (cfg.steps) scene.n_timesteps = *cfg.steps;
  if (cfg.particles) scene.n_particles = *cfg.particles;
  synth::validate(scene);
  return scene;
}

std::optional<VoxelBox> auto_template_box(const synth::SceneSpec& scene, const GridSpec& spec, int t) {
  for (const auto& v : scene.voids) {
    const auto s = synth::void_state(v, t, scene.timestep_dt);
    if (!s.active || s.split) continue;
    std::array<int, 3> c{};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<int>(std::floor((s.center[a] - spec.origin[a]) / spec.spacing[a]));
      inside = inside && c[a] >= 0 && c[a] < spec.dims[a];
    }
    if (!inside) continue;
    // shrink until every corner of every boxed voxel is inside the ellipsoid
    for (int step = 20; step >= 0; --step) {
      VoxelBox b;
      for (int a = 0; a < 3; ++a) {
        const int h = static_cast<int>(std::floor(0.05 * step * s.radii[a] / spec.spacing[a]));
        b.lo[a] = std::max(0, c[a] - h);
        b.hi[a] = std::min(spec.dims[a] - 1, c[a] + h);
      }
      bool ok = true;
      for (int m = 0; m < 8 && ok; ++m) {
        Vec3 p;
        for (int a = 0; a < 3; ++a) p[a] = spec.origin[a] + spec.spacing[a] * ((m >> a & 1) ? b.hi[a] + 1 : b.lo[a]);
        ok = s.normalized_r2(p) < 1.0;
      }
      if (ok) return b;
    }
  }
  const double bed_top = scene.domain_bounds.min[0] + scene.bed_fraction * scene.domain_bounds.extent()[0];
  const int first_free = static_cast<int>(std::ceil((bed_top - spec.origin[0]) / spec.spacing[0]));
  if (first_free < spec.dims[0]) {
    VoxelBox b;
    b.lo = {std::max(first_free, 0), 0, 0};
    b.hi = {spec.dims[0] - 1, spec.dims[1] - 1, spec.dims[2] - 1};
    return b;
  }
  return std::nullopt;
}

StepSummary summarize_step(const std::vector<synth::ParticleChunk>& chunks, const GridSpec& spec,
                           const slic::SlicParams& params, const similarity::FeatureTemplate& feature, int t) {
  StepSummary out;
  const auto hist = fields::bin_and_reduce(chunks, spec);
  out.density = fields::finalize_density(hist, t);
  out.pvf = fields::finalize_pvf(hist, t);
  const auto labels = slic::slic_partition(out.density, params, &out.slic);
  const auto dfield = similarity::build_distribution_field(out.density, labels, feature);
  out.bsf = similarity::build_bsf(dfield, t);
  for (double d : dfield.distances) out.max_distance = std::max(out.max_distance, d);
  return out;
}

GenerateResult generate(const RunConfig& cfg) {
  validate_config(cfg);
  const RunPaths paths(cfg.out_dir);
  GenerateResult res;
  res.scene = resolve_scene(cfg);
  std::error_code ec;
  fs::remove_all(paths.particles(), ec);
  fs::create_directories(paths.particles());
  synth::write_scene(res.scene, paths.scene());
  for (int t = 0; t < res.scene.n_timesteps; ++t) {
    const auto chunks = synth::generate(res.scene, t, cfg.ranks);
    synth::write_particles(chunks, paths.particles(), t);
    for (const auto& c : chunks)
      res.particle_bytes += file_size_or_zero(paths.particles() + "/" + synth::particle_file_name(t, c.rank));
  }
  return res;
}

SummarizeResult summarize(const RunConfig& cfg) {
  validate_config(cfg);
  const RunPaths paths(cfg.out_dir);
  if (!fs::exists(paths.scene()))
    throw Error(ErrorCode::NotFound, fmt::format("{} not found; run `generate` first", paths.scene()));
  const auto scene = synth::read_scene(paths.scene());
  const auto spec = GridSpec::from_bounds(scene.domain_bounds, cfg.grid);

  SummarizeResult res;
  res.steps = every_nth(synth::particle_steps(paths.particles()), cfg.every);
  if (res.steps.empty())
    throw Error(ErrorCode::NotFound, fmt::format("no particle files under {}", paths.particles()));

  const int tmpl_t = cfg.template_step.value_or(res.steps.front());
  if (std::find(res.steps.begin(), res.steps.end(), tmpl_t) == res.steps.end())
    throw Error(ErrorCode::InvalidArgument, fmt::format("template step {} is not a processed step", tmpl_t));
  auto box = cfg.template_box ? cfg.template_box : auto_template_box(scene, spec, tmpl_t);
  if (!box) throw Error(ErrorCode::InvalidArgument, "no void or freeboard to take the template from; pass --template-box");
  {
    const auto chunks = synth::read_particles(paths.particles(), tmpl_t);
    const auto density = fields::finalize_density(fields::bin_and_reduce(chunks, spec), tmpl_t);
    res.feature = similarity::fit_template(density, *box);
  }

  std::error_code ec;
  fs::remove_all(paths.summary(), ec);
  fs::create_directories(paths.summary());
  similarity::write_template(res.feature, paths.template_json());

  nlohmann::json diag = nlohmann::json::array();
  for (int t : res.steps) {
    const auto chunks = synth::read_particles(paths.particles(), t);
    for (const auto& c : chunks) res.particle_bytes += file_size_or_zero(paths.particles() + "/" + synth::particle_file_name(t, c.rank));
    const auto s = summarize_step(chunks, spec, cfg.slic, res.feature, t);
    fields::write_field(s.bsf, paths.field(FieldName::bsf, t));
    fields::write_field(s.pvf, paths.field(FieldName::pvf, t));
    res.summary_bytes += 2 * fields::field_file_size(spec);
    if (cfg.keep_density) fields::write_field(s.density, paths.field(FieldName::density, t));
    diag.push_back({{"t", t},
                    {"slic_iterations", s.slic.iterations},
                    {"slic_converged", s.slic.converged},
                    {"unassigned_voxels", s.slic.unassigned_voxels},
                    {"fragments_relabeled", s.slic.fragments_relabeled},
                    {"max_distance", s.max_distance}});
    res.slic.push_back(s.slic);
  }

  nlohmann::json j;
  j["grid"] = bubbles::grid_to_json(spec);
  j["steps"] = res.steps;
  j["dt"] = scene.timestep_dt;
  j["every"] = cfg.every;
  j["has_density"] = cfg.keep_density;
  j["slic"] = {{"cluster_size", cfg.slic.cluster_size}, {"gamma", cfg.slic.gamma}, {"max_iters", cfg.slic.max_iters}};
  j["template"] = similarity::template_to_json(res.feature);
  j["diagnostics"] = diag;
  binio::write_text_file(paths.summary_json(), j.dump(2) + "\n");
  return res;
}

SummaryInfo read_summary(const std::string& run_dir) {
  const RunPaths paths(run_dir);
  if (!fs::exists(paths.summary_json()))
    throw Error(ErrorCode::NotFound, fmt::format("{} not found; run `summarize` first", paths.summary_json()));
  SummaryInfo info;
  try {
    info.json = nlohmann::json::parse(binio::read_text_file(paths.summary_json()));
    info.grid = bubbles::grid_from_json(info.json.at("grid"));
    info.steps = info.json.at("steps").get<std::vector<int>>();
    info.dt = info.json.at("dt").get<double>();
    info.every = info.json.at("every").get<int>();
    info.has_density = info.json.value("has_density", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, paths.summary_json() + ": " + e.what());
  }
  return info;
}

void require_fields(const RunPaths& paths, const SummaryInfo& info, FieldName name) {
  std::vector<int> missing;
  for (int t : info.steps)
    if (!fs::exists(paths.field(name, t))) missing.push_back(t);
  if (!missing.empty())
    throw Error(ErrorCode::NotFound,
                fmt::format("missing {} field files for time steps [{}] under {}; rerun `summarize`", field_name_str(name),
                            fmt::join(missing, ", "), paths.summary()));
}

ExtractResult extract(const RunConfig& cfg) {
  validate_config(cfg);
  const RunPaths paths(cfg.out_dir);
  const auto info = read_summary(cfg.out_dir);
  require_fields(paths, info, FieldName::bsf);
  const bubbles::ExtractParams params{cfg.threshold, cfg.min_voxels};

  std::error_code ec;
  fs::remove_all(paths.bubbles(), ec);
  fs::create_directories(paths.bubbles());
  ExtractResult res;
  for (int t : info.steps) {
    const auto bsf = fields::read_field(paths.field(FieldName::bsf, t));
    bubbles::StepBubbles step{t, bsf.spec, cfg.threshold, bubbles::extract(bsf, params)};
    bubbles::write_step(step, paths.bubbles() + "/" + bubbles::bubbles_file_name(t));
    res.steps.push_back(std::move(step));
  }
  return res;
}

tracking::TrackParams track_params(const RunConfig& cfg, const SummaryInfo& info) {
  tracking::TrackParams p;
  p.dt = cfg.dt.value_or(info.dt);
  p.low_confidence_dice = cfg.low_confidence_dice;
  p.volume_jump_ratio = cfg.volume_jump_ratio;
  return p;
}

TrackResult track(const RunConfig& cfg) {
  validate_config(cfg);
  const RunPaths paths(cfg.out_dir);
  const auto info = read_summary(cfg.out_dir);
  if (!fs::exists(paths.bubbles()))
    throw Error(ErrorCode::NotFound, fmt::format("{} not found; run `extract` first", paths.bubbles()));
  const auto store = tracking::BubbleStore::load(paths.bubbles());
  const auto params = track_params(cfg, info);

  std::error_code ec;
  fs::remove_all(paths.tracks(), ec);
  fs::create_directories(paths.tracks());

  TrackResult res;
  std::set<tracking::BubbleKey> covered;
  nlohmann::json index = nlohmann::json::array();
  for (int t : store.times()) {
    for (const auto& b : store.step(t)->bubbles) {
      const tracking::BubbleKey key{t, b.bubble_id};
      if (b.is_freeboard || covered.count(key)) continue;
      auto tr = tracking::track(key, store, params);
      for (const auto& s : tr.steps) covered.insert({s.t, s.bubble_id});
      binio::write_text_file(paths.tracks() + "/" + tracking::track_file_name(tr.track_id),
                             tracking::track_to_json(tr).dump(2) + "\n");
      index.push_back({{"track_id", tr.track_id},
                       {"first_t", tr.steps.front().t},
                       {"last_t", tr.steps.back().t},
                       {"n_steps", tr.steps.size()},
                       {"n_events", tr.events.size()}});
      res.tracks.push_back(std::move(tr));
    }
  }
  binio::write_text_file(paths.tracks() + "/index.json", index.dump(2) + "\n");
  return res;
}

CatalogResult build_catalog(const RunConfig& cfg) {
  validate_config(cfg);
  const RunPaths paths(cfg.out_dir);
  const auto info = read_summary(cfg.out_dir);
  require_fields(paths, info, FieldName::bsf);
  require_fields(paths, info, FieldName::pvf);

  std::vector<int> missing;
  for (int t : info.steps)
    if (!fs::exists(paths.bubbles() + "/" + bubbles::bubbles_file_name(t))) missing.push_back(t);
  if (!missing.empty())
    throw Error(ErrorCode::NotFound, fmt::format("missing bubble files for time steps [{}] under {}; run `extract` first",
                                                 fmt::join(missing, ", "), paths.bubbles()));

  CatalogResult res;
  res.tracks = track(cfg).tracks.size();

  std::error_code ec;
  fs::remove_all(paths.root + "/images", ec);
  fs::create_directories(paths.root + "/images");
  std::vector<catalog::CatalogRow> rows;
  double threshold = cfg.threshold;
  for (int t : info.steps) {
    const auto step = bubbles::read_step(paths.bubbles() + "/" + bubbles::bubbles_file_name(t));
    threshold = step.threshold;
    const auto bsf = fields::read_field(paths.field(FieldName::bsf, t));
    catalog::RenderOptions opts;
    opts.scale = cfg.image_scale;
    opts.context = &bsf;
    for (const auto& b : step.bubbles) {
      auto row = catalog::row_from_bubble(b);
      catalog::write_png(catalog::render_projection(b.voxels, step.spec, opts), paths.root + "/" + row.image_path);
      ++res.images;
      rows.push_back(std::move(row));
    }
  }
  binio::write_text_file(paths.catalog_csv(), catalog::write_csv(rows));
  res.rows = rows.size();

  nlohmann::json meta;
  meta["grid"] = info.json.at("grid");
  meta["threshold"] = threshold;
  meta["min_voxels"] = cfg.min_voxels;
  meta["dt"] = track_params(cfg, info).dt;
  meta["every"] = info.every;
  meta["steps"] = info.steps;
  meta["time_range"] = info.steps.empty() ? nlohmann::json(nullptr) : nlohmann::json{info.steps.front(), info.steps.back()};
  meta["template"] = info.json.at("template");
  meta["slic"] = info.json.at("slic");
  meta["fields"] = info.has_density ? nlohmann::json{"density", "pvf", "bsf"} : nlohmann::json{"pvf", "bsf"};
  meta["low_confidence_dice"] = cfg.low_confidence_dice;
  meta["volume_jump_ratio"] = cfg.volume_jump_ratio;
  meta["image_scale"] = cfg.image_scale;
  meta["columns"] = {"time_index", "bubble_id",       "volume",       "x_center",  "y_center",
                     "z_center",   "aspect_ratio",    "mean_similarity", "is_freeboard", "image_path"};
  binio::write_text_file(paths.meta_json(), meta.dump(2) + "\n");
  return res;
}

}  // namespace bflow::pipeline
