#pragma once

// Run-directory stages: generate -> summarize -> extract -> track -> catalog.
//
// Layout under the run root:
//   scene.json                      synthetic scene with ground-truth trajectories
//   particles/                      raw per-rank particle files (only generate and summarize read them)
//   summary/                        BSF + PVF fields per processed step, template.json, summary.json
//   bubbles/                        extracted bubbles per step
//   tracks/                         one TrackRecord per distinct track, index.json
//   images/ catalog.csv meta.json   the catalog

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubbles.hpp"
#include "common.hpp"
#include "similarity.hpp"
#include "slic.hpp"
#include "synth.hpp"
#include "tracking.hpp"

namespace bflow::pipeline {

inline constexpr std::array<int, 3> kDeskDims{64, 8, 64};

struct RunConfig {
  std::string out_dir = "run";
  std::string scene = "desk";  // preset name
  std::string scene_file;      // scene JSON; takes precedence over the preset
  std::array<int, 3> grid = kDeskDims;
  slic::SlicParams slic;
  double threshold = bubbles::kDefaultThreshold;
  std::size_t min_voxels = bubbles::kDefaultMinVoxels;
  int every = 1;

  // scene overrides applied by generate
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::uint64_t> particles;
  int ranks = 1;

  std::optional<VoxelBox> template_box;
  std::optional<int> template_step;  // defaults to the first processed step
  bool keep_density = false;

  double low_confidence_dice = 0.2;
  double volume_jump_ratio = 0.25;
  int image_scale = 4;
};

struct RunPaths {
  std::string root;
  explicit RunPaths(std::string r) : root(std::move(r)) {}
  std::string scene() const { return root + "/scene.json"; }
  std::string particles() const { return root + "/particles"; }
  std::string summary() const { return root + "/summary"; }
  std::string summary_json() const { return root + "/summary/summary.json"; }
  std::string template_json() const { return root + "/summary/template.json"; }
  std::string field(FieldName name, int t) const;
  std::string bubbles() const { return root + "/bubbles"; }
  std::string tracks() const { return root + "/tracks"; }
  std::string catalog_csv() const { return root + "/catalog.csv"; }
  std::string meta_json() const { return root + "/meta.json"; }
};

/// Preset or scene file with the config overrides applied.
synth::SceneSpec resolve_scene(const RunConfig& cfg);

/// Template box inside the first active, unsplit void at step t whose voxels lie entirely inside
/// the ellipsoid; falls back to the freeboard layers above the bed. Empty when neither exists.
std::optional<VoxelBox> auto_template_box(const synth::SceneSpec& scene, const GridSpec& spec, int t);

struct StepSummary {
  ScalarGrid density;
  ScalarGrid pvf;
  ScalarGrid bsf;
  slic::SlicDiagnostics slic;
  double max_distance = 0.0;
};

/// In-memory form of one summarize step.
StepSummary summarize_step(const std::vector<synth::ParticleChunk>& chunks, const GridSpec& spec,
                           const slic::SlicParams& params, const similarity::FeatureTemplate& feature, int t);

struct GenerateResult {
  synth::SceneSpec scene;
  std::uint64_t particle_bytes = 0;
};
GenerateResult generate(const RunConfig& cfg);

struct SummarizeResult {
  std::vector<int> steps;
  similarity::FeatureTemplate feature;
  std::uint64_t summary_bytes = 0;   // field files only
  std::uint64_t particle_bytes = 0;  // raw files read for the processed steps
  std::vector<slic::SlicDiagnostics> slic;
};
SummarizeResult summarize(const RunConfig& cfg);

/// Contents of summary/summary.json.
struct SummaryInfo {
  GridSpec grid;
  std::vector<int> steps;
  double dt = 0.0;
  int every = 1;
  bool has_density = false;
  nlohmann::json json;
};
SummaryInfo read_summary(const std::string& run_dir);

/// Field-file presence check; throws NotFound listing the absent steps.
void require_fields(const RunPaths& paths, const SummaryInfo& info, FieldName name);

struct ExtractResult {
  std::vector<bubbles::StepBubbles> steps;
};
ExtractResult extract(const RunConfig& cfg);

struct TrackResult {
  std::vector<tracking::TrackRecord> tracks;
};
tracking::TrackParams track_params(const RunConfig& cfg, const SummaryInfo& info);
/// Tracks seeded at every bubble not already covered by an earlier track.
TrackResult track(const RunConfig& cfg);

struct CatalogResult {
  std::size_t rows = 0;
  std::size_t images = 0;
  std::size_t tracks = 0;
};
CatalogResult build_catalog(const RunConfig& cfg);

}  // namespace bflow::pipeline
