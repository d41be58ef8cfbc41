#include "bubbles.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "binio.hpp"

namespace bflow::bubbles {

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

Mask segment(const ScalarGrid& bsf, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in [0, 1]");
  Mask m{bsf.spec, std::vector<std::uint8_t>(bsf.values.size(), 0)};
  for (std::size_t v = 0; v < bsf.values.size(); ++v) m.bits[v] = bsf.values[v] >= threshold ? 1 : 0;
  return m;
}

std::vector<std::vector<std::size_t>> connected_components(const Mask& mask) {
  const auto& spec = mask.spec;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.bits.size(); ++seed) {
    if (!mask.bits[seed] || seen[seed]) continue;
    std::vector<std::size_t> comp;
    seen[seed] = 1;
    stack.push_back(seed);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for_each_face_neighbor(spec, v, [&](std::size_t n) {
        if (mask.bits[n] && !seen[n]) {
          seen[n] = 1;
          stack.push_back(n);
        }
      });
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  // discovery order is ascending first voxel, so a stable sort keeps that as the tie-break
  std::stable_sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return comps;
}

BubbleRecord characterize(const std::vector<std::size_t>& voxels, const GridSpec& spec, const ScalarGrid& bsf,
                          std::int32_t time_index) {
  if (voxels.empty()) throw Error(ErrorCode::EmptySample, "cannot characterize an empty voxel set");
  BubbleRecord r;
  r.time_index = time_index;
  r.voxels = voxels;
  std::sort(r.voxels.begin(), r.voxels.end());
  r.volume = static_cast<double>(voxels.size()) * spec.voxel_volume();
  r.bbox.lo = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
  r.bbox.hi = {-1, -1, -1};
  Vec3 sum{0, 0, 0};
  double sim = 0.0;
  for (auto v : r.voxels) {
    const auto c = spec.ijk(v);
    const auto p = spec.voxel_center(v);
    for (int a = 0; a < 3; ++a) {
      sum[a] += p[a];
      r.bbox.lo[a] = std::min(r.bbox.lo[a], c[a]);
      r.bbox.hi[a] = std::max(r.bbox.hi[a], c[a]);
    }
    sim += bsf.values[v];
  }
  const double n = static_cast<double>(r.voxels.size());
  for (int a = 0; a < 3; ++a) r.centroid[a] = sum[a] / n;
  r.mean_similarity = sim / n;
  const auto extent = [&](int a) { return (r.bbox.hi[a] - r.bbox.lo[a] + 1) * spec.spacing[a]; };
  const double width = 0.5 * (extent(1) + extent(2));
  const double height = extent(0);
  r.aspect_ratio = width / height;
  return r;
}

std::vector<BubbleRecord> filter_freeboard(std::vector<BubbleRecord> records, const GridSpec& spec) {
  for (auto& r : records) r.is_freeboard = r.bbox.hi[0] == spec.dims[0] - 1;
  return records;
}

std::vector<BubbleRecord> extract(const ScalarGrid& bsf, const ExtractParams& params) {
  const auto comps = connected_components(segment(bsf, params.threshold));
  std::vector<BubbleRecord> out;
  for (const auto& c : comps) {
    if (c.size() < params.min_voxels) continue;
    out.push_back(characterize(c, bsf.spec, bsf, bsf.time_index));
    out.back().bubble_id = static_cast<std::int32_t>(out.size() - 1);
  }
  return filter_freeboard(std::move(out), bsf.spec);
}

std::string bubbles_file_name(int t) { return fmt::format("bubbles_t{:06}.json", t); }

nlohmann::json grid_to_json(const GridSpec& spec) {
  return {{"dims", spec.dims}, {"origin", spec.origin}, {"spacing", spec.spacing}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.dims = j.at("dims").get<std::array<int, 3>>();
  g.origin = j.at("origin").get<Vec3>();
  g.spacing = j.at("spacing").get<Vec3>();
  return g;
}

nlohmann::json step_to_json(const StepBubbles& step) {
  nlohmann::json bubbles = nlohmann::json::array();
  for (const auto& r : step.bubbles) {
    bubbles.push_back({{"bubble_id", r.bubble_id},
                       {"volume", r.volume},
                       {"centroid", r.centroid},
                       {"bbox", {{"lo", r.bbox.lo}, {"hi", r.bbox.hi}}},
                       {"aspect_ratio", r.aspect_ratio},
                       {"is_freeboard", r.is_freeboard},
                       {"mean_similarity", r.mean_similarity},
                       {"voxels", r.voxels}});
  }
  return {{"time_index", step.time_index}, {"grid", grid_to_json(step.spec)}, {"threshold", step.threshold},
          {"bubbles", bubbles}};
}

StepBubbles step_from_json(const nlohmann::json& j) {
  try {
    StepBubbles s;
    s.time_index = j.at("time_index").get<std::int32_t>();
    s.spec = grid_from_json(j.at("grid"));
    s.threshold = j.at("threshold").get<double>();
    for (const auto& jb : j.at("bubbles")) {
      BubbleRecord r;
      r.time_index = s.time_index;
      r.bubble_id = jb.at("bubble_id").get<std::int32_t>();
      r.volume = jb.at("volume").get<double>();
      r.centroid = jb.at("centroid").get<Vec3>();
      r.bbox.lo = jb.at("bbox").at("lo").get<std::array<int, 3>>();
      r.bbox.hi = jb.at("bbox").at("hi").get<std::array<int, 3>>();
      r.aspect_ratio = jb.at("aspect_ratio").get<double>();
      r.is_freeboard = jb.at("is_freeboard").get<bool>();
      r.mean_similarity = jb.at("mean_similarity").get<double>();
      r.voxels = jb.at("voxels").get<std::vector<std::size_t>>();
      s.bubbles.push_back(std::move(r));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("bubble store json: ") + e.what());
  }
}

void write_step(const StepBubbles& step, const std::string& path) {
  binio::write_text_file(path, step_to_json(step).dump() + "\n");
}

StepBubbles read_step(const std::string& path) {
  try {
    return step_from_json(nlohmann::json::parse(binio::read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Format, path + ": " + e.what());
  }
}

}  // namespace bflow::bubbles
