#pragma once

// Gaussian cluster summaries, Bhattacharyya scoring against a bubble template, and the
// bubble similarity field (BSF).

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "slic.hpp"

namespace bflow::similarity {

/// Variance floor in density^2 units; keeps the distance finite for constant clusters.
inline constexpr double kVarianceFloor = 1e-6;

struct GaussianSummary {
  double mean = 0.0;
  double var = kVarianceFloor;
  std::size_t n = 1;
};

struct FeatureTemplate {
  GaussianSummary gaussian;
  VoxelBox source_box;
  std::int32_t created_from = 0;  // time step the box was taken from
};

struct DistributionField {
  slic::SupervoxelLabels labels;
  std::vector<GaussianSummary> per_cluster;
  std::vector<double> distances;
};

/// Population mean and variance, variance floored.
GaussianSummary fit_gaussian(const std::vector<double>& values);

FeatureTemplate fit_template(const ScalarGrid& density, const VoxelBox& box);

/// Closed-form Bhattacharyya distance between two 1D Gaussians given by variance.
double bhattacharyya(const GaussianSummary& g1, const GaussianSummary& g2);

DistributionField build_distribution_field(const ScalarGrid& density, const slic::SupervoxelLabels& labels,
                                           const FeatureTemplate& feature);

/// Per-cluster similarity 1 - d/max(d), broadcast to member voxels.
ScalarGrid build_bsf(const DistributionField& dfield, std::int32_t time_index = 0);

nlohmann::json template_to_json(const FeatureTemplate& t);
FeatureTemplate template_from_json(const nlohmann::json& j);
void write_template(const FeatureTemplate& t, const std::string& path);
FeatureTemplate read_template(const std::string& path);

}  // namespace bflow::similarity
