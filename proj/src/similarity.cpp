#include "similarity.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "binio.hpp"

namespace bflow::similarity {

GaussianSummary fit_gaussian(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::EmptySample, "cannot fit a Gaussian to an empty sample");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::max(ss / n, kVarianceFloor), values.size()};
}

FeatureTemplate fit_template(const ScalarGrid& density, const VoxelBox& box) {
  const auto& spec = density.spec;
  for (int a = 0; a < 3; ++a) {
    if (box.lo[a] < 0 || box.hi[a] >= spec.dims[a] || box.lo[a] > box.hi[a])
      throw Error(ErrorCode::OutOfBounds,
                  fmt::format("template box [{},{},{}]..[{},{},{}] is empty or outside grid {}", box.lo[0], box.lo[1],
                              box.lo[2], box.hi[0], box.hi[1], box.hi[2], format_triple(spec.dims)));
  }
  std::vector<double> values;
  for (int k = box.lo[2]; k <= box.hi[2]; ++k)
    for (int j = box.lo[1]; j <= box.hi[1]; ++j)
      for (int i = box.lo[0]; i <= box.hi[0]; ++i) values.push_back(density.at(i, j, k));
  return {fit_gaussian(values), box, density.time_index};
}

double bhattacharyya(const GaussianSummary& g1, const GaussianSummary& g2) {
  const double v1 = std::max(g1.var, kVarianceFloor);
  const double v2 = std::max(g2.var, kVarianceFloor);
  const double avg = 0.5 * (v1 + v2);
  const double dm = g1.mean - g2.mean;
  const double d = 0.125 * dm * dm / avg + 0.5 * std::log(avg / std::sqrt(v1 * v2));
  return std::max(d, 0.0);
}

DistributionField build_distribution_field(const ScalarGrid& density, const slic::SupervoxelLabels& labels,
                                           const FeatureTemplate& feature) {
  if (!(density.spec == labels.spec)) throw Error(ErrorCode::SpecMismatch, "labels and density grids differ");
  DistributionField out;
  out.labels = labels;
  const auto members = labels.members();
  out.per_cluster.reserve(members.size());
  out.distances.reserve(members.size());
  std::vector<double> values;
  for (const auto& m : members) {
    values.clear();
    for (auto v : m) values.push_back(density.values[v]);
    out.per_cluster.push_back(fit_gaussian(values));
    out.distances.push_back(bhattacharyya(out.per_cluster.back(), feature.gaussian));
  }
  return out;
}

ScalarGrid build_bsf(const DistributionField& dfield, std::int32_t time_index) {
  const auto& labels = dfield.labels;
  if (dfield.distances.size() != labels.n_clusters())
    throw Error(ErrorCode::InvalidArgument, "distance count does not match cluster count");
  double dmax = 0.0;
  for (double d : dfield.distances) dmax = std::max(dmax, d);
  std::vector<double> sim(dfield.distances.size(), 1.0);
  if (dmax > 0.0)
    for (std::size_t c = 0; c < sim.size(); ++c) sim[c] = std::clamp(1.0 - dfield.distances[c] / dmax, 0.0, 1.0);
  ScalarGrid g(labels.spec, FieldName::bsf, time_index);
  for (std::size_t v = 0; v < g.values.size(); ++v) g.values[v] = sim[static_cast<std::size_t>(labels.labels[v])];
  return g;
}

nlohmann::json template_to_json(const FeatureTemplate& t) {
  return {{"mean", t.gaussian.mean},
          {"var", t.gaussian.var},
          {"n", t.gaussian.n},
          {"box", {{"lo", t.source_box.lo}, {"hi", t.source_box.hi}}},
          {"created_from", t.created_from}};
}

FeatureTemplate template_from_json(const nlohmann::json& j) {
  try {
    FeatureTemplate t;
    t.gaussian.mean = j.at("mean").get<double>();
    t.gaussian.var = std::max(j.at("var").get<double>(), kVarianceFloor);
    t.gaussian.n = j.value("n", std::size_t{1});
    t.source_box.lo = j.at("box").at("lo").get<std::array<int, 3>>();
    t.source_box.hi = j.at("box").at("hi").get<std::array<int, 3>>();
    t.created_from = j.value("created_from", 0);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("template json: ") + e.what());
  }
}

void write_template(const FeatureTemplate& t, const std::string& path) {
  binio::write_text_file(path, template_to_json(t).dump(2) + "\n");
}

FeatureTemplate read_template(const std::string& path) {
  try {
    return template_from_json(nlohmann::json::parse(binio::read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Format, path + ": " + e.what());
  }
}

}  // namespace bflow::similarity
