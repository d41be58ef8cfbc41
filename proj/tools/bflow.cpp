// bflow: command-line driver for the bubble workflow. Talks to the library only through its C API.

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bubbleflow/bubbleflow.h"

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kNotFound = 3 };

int exit_code(bf_status s) {
  switch (s) {
    case BF_OK:
      return kOk;
    case BF_INVALID_ARGUMENT:
    case BF_INVALID_SCENE:
    case BF_OUT_OF_BOUNDS:
      return kUsage;
    case BF_NOT_FOUND:
      return kNotFound;
    default:
      return kFailure;
  }
}

int report_error(bf_status s) {
  std::fprintf(stderr, "bflow: %s: %s\n", bf_status_str(s), bf_last_error());
  return exit_code(s);
}

struct Config {
  bf_config* h = nullptr;
  Config() {
    if (bf_config_create(&h) != BF_OK) h = nullptr;
  }
  ~Config() { bf_config_destroy(h); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
};

void print_row_header() {
  std::printf("time_index,bubble_id,volume,x_center,y_center,z_center,aspect_ratio,mean_similarity,is_freeboard,image_path\n");
}

void print_row(const bf_row& r) {
  std::printf("%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%s,%s\n", r.time_index, r.bubble_id, r.volume, r.x_center,
              r.y_center, r.z_center, r.aspect_ratio, r.mean_similarity, r.is_freeboard ? "true" : "false",
              r.image_path);
}

int run_query(const std::string& run_dir, const std::string& where) {
  bf_catalog* cat = nullptr;
  if (const auto s = bf_catalog_open(run_dir.c_str(), &cat); s != BF_OK) return report_error(s);
  size_t n = 0;
  const auto s = bf_catalog_query(cat, where.c_str(), &n);
  if (s != BF_OK) {
    bf_catalog_close(cat);
    return report_error(s);
  }
  print_row_header();
  for (size_t i = 0; i < n; ++i) {
    bf_row row{};
    bf_catalog_row(cat, i, &row);
    print_row(row);
  }
  bf_catalog_close(cat);
  return kOk;
}

void on_ready(int port, void* user) {
  std::printf("serving %s on http://%s:%d\n", "catalog", static_cast<const char*>(user), port);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bubble detection, tracking and cataloguing for particle-based multiphase flow data"};
  app.set_version_flag("--version", std::string(bf_version()));
  app.require_subcommand(1);
  app.fallthrough();

  // Options are kept as strings; the library validates them and reports the offending key.
  std::map<std::string, std::string> opts;
  std::vector<std::pair<const char*, const char*>> string_opts = {
      {"--out", "out"},
      {"--scene", "scene"},
      {"--scene-file", "scene_file"},
      {"--grid", "grid"},
      {"--gamma", "gamma"},
      {"--cluster", "cluster"},
      {"--max-iters", "max_iters"},
      {"--threshold", "threshold"},
      {"--min-voxels", "min_voxels"},
      {"--every", "every"},
      {"--dt", "dt"},
      {"--seed", "seed"},
      {"--steps", "steps"},
      {"--particles", "particles"},
      {"--ranks", "ranks"},
      {"--template-box", "template_box"},
      {"--template-step", "template_step"},
      {"--low-confidence", "low_confidence"},
      {"--volume-jump-ratio", "volume_jump_ratio"},
      {"--image-scale", "image_scale"},
  };
  const std::map<std::string, std::string> help = {
      {"out", "run directory (default: run)"},
      {"scene", "scene preset: desk, rising, growing, merge, split, empty"},
      {"scene_file", "scene JSON file; overrides --scene"},
      {"grid", "summary grid NXxNYxNZ (default 64x8x64)"},
      {"gamma", "SLIC spatial weight in [0,1] (default 0.3)"},
      {"cluster", "SLIC block size AxBxC (default 3x3x3)"},
      {"max_iters", "SLIC iteration cap (default 10)"},
      {"threshold", "BSF threshold for bubble voxels (default 0.92)"},
      {"min_voxels", "smallest bubble kept, in voxels (default 2)"},
      {"every", "process every Nth time step (default 1)"},
      {"dt", "simulation time per step index"},
      {"seed", "particle generator seed"},
      {"steps", "number of time steps to generate"},
      {"particles", "particles per step"},
      {"ranks", "files per time step (default 1)"},
      {"template_box", "template voxel box i,j,k:i,j,k (default: inside a known void)"},
      {"template_step", "time step the template is taken from (default: first processed)"},
      {"low_confidence", "Dice below which a match is flagged (default 0.2)"},
      {"volume_jump_ratio", "relative volume change reported as an event (default 0.25)"},
      {"image_scale", "pixels per voxel in catalog images (default 4)"},
  };
  for (const auto& [flag, key] : string_opts) app.add_option(flag, opts[key], help.at(key));
  bool keep_density = false;
  app.add_flag("--keep-density", keep_density, "also store the density field per step");

  std::string host = "127.0.0.1";
  int port = 8080;
  double duration = 0.0;
  std::string where;

  auto* gen = app.add_subcommand("generate", "write a synthetic scene and its particle files");
  auto* sum = app.add_subcommand("summarize", "in situ stage: density, SLIC, similarity -> BSF and PVF fields");
  auto* ext = app.add_subcommand("extract", "threshold the BSF fields into bubbles");
  auto* trk = app.add_subcommand("track", "link bubbles over time and detect events");
  auto* cat = app.add_subcommand("catalog", "build catalog.csv, images and tracks");
  auto* run = app.add_subcommand("run", "generate, summarize, extract, track and catalog in one go");
  auto* srv = app.add_subcommand("serve", "serve the catalog over HTTP");
  srv->add_option("--host", host, "bind address")->capture_default_str();
  srv->add_option("--port", port, "port; 0 picks a free one")->capture_default_str()->check(CLI::Range(0, 65535));
  srv->add_option("--duration", duration, "stop after this many seconds (0 = run until killed)")->check(CLI::NonNegativeNumber);
  auto* qry = app.add_subcommand("query", "filter the catalog and print matching rows as CSV");
  qry->add_option("where", where, "query string, e.g. t0=0&t1=20&volume_min=10&freeboard=false");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  Config cfg;
  if (!cfg.h) return report_error(BF_INTERNAL);
  for (const auto& [key, value] : opts) {
    if (value.empty()) continue;
    if (const auto s = bf_config_set(cfg.h, key.c_str(), value.c_str()); s != BF_OK) return report_error(s);
  }
  if (keep_density) bf_config_set(cfg.h, "keep_density", "true");
  const std::string out = opts["out"].empty() ? "run" : opts["out"];

  using Stage = bf_status (*)(const bf_config*);
  const auto stage = [&](Stage fn) -> int {
    const auto s = fn(cfg.h);
    if (s != BF_OK) return report_error(s);
    std::printf("%s\n", bf_last_report());
    return kOk;
  };

  if (*gen) return stage(bf_generate);
  if (*sum) return stage(bf_summarize);
  if (*ext) return stage(bf_extract);
  if (*trk) return stage(bf_track);
  if (*cat) return stage(bf_build_catalog);
  if (*run) {
    for (Stage fn : {bf_generate, bf_summarize, bf_extract, bf_build_catalog})
      if (const int rc = stage(fn); rc != kOk) return rc;
    return kOk;
  }
  if (*srv) {
    const auto s = bf_serve(cfg.h, host.c_str(), port, duration, on_ready, const_cast<char*>(host.c_str()));
    return s == BF_OK ? kOk : report_error(s);
  }
  if (*qry) return run_query(out, where);
  return kUsage;
}
