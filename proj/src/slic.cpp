#include "slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace bflow::slic {

namespace {

struct Component {
  std::int32_t label;
  std::size_t size;
  std::size_t first;  // lowest voxel index
};

// Face-connected components of equal-label voxels, discovered in ascending voxel order.
std::vector<Component> label_components(const GridSpec& spec, const std::vector<std::int32_t>& labels,
                                        std::vector<std::int32_t>& comp_of) {
  std::vector<Component> comps;
  comp_of.assign(labels.size(), -1);
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < labels.size(); ++seed) {
    if (comp_of[seed] >= 0) continue;
    const auto id = static_cast<std::int32_t>(comps.size());
    const std::int32_t lab = labels[seed];
    std::size_t size = 0;
    comp_of[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ++size;
      for_each_face_neighbor(spec, v, [&](std::size_t n) {
        if (comp_of[n] < 0 && labels[n] == lab) {
          comp_of[n] = id;
          stack.push_back(n);
        }
      });
    }
    comps.push_back({lab, size, seed});
  }
  return comps;
}

std::size_t enforce_connectivity(const GridSpec& spec, std::vector<std::int32_t>& labels, std::size_t n_labels) {
  std::size_t relabeled = 0;
  std::vector<std::int32_t> comp_of;
  for (int pass = 0; pass < 1000; ++pass) {
    const auto comps = label_components(spec, labels, comp_of);

    std::vector<std::int32_t> main_comp(n_labels, -1);
    std::vector<std::size_t> label_size(n_labels, 0);
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const auto lab = static_cast<std::size_t>(comps[c].label);
      label_size[lab] += comps[c].size;
      if (main_comp[lab] < 0 || comps[c].size > comps[static_cast<std::size_t>(main_comp[lab])].size)
        main_comp[lab] = static_cast<std::int32_t>(c);
    }

    std::vector<std::vector<std::size_t>> fragment_voxels(comps.size());
    bool any_fragment = false;
    for (std::size_t v = 0; v < labels.size(); ++v) {
      const auto c = static_cast<std::size_t>(comp_of[v]);
      if (main_comp[static_cast<std::size_t>(comps[c].label)] != static_cast<std::int32_t>(c)) {
        fragment_voxels[c].push_back(v);
        any_fragment = true;
      }
    }
    if (!any_fragment) return relabeled;

    bool progressed = false;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      if (fragment_voxels[c].empty()) continue;
      std::int32_t target = -1;
      for (std::size_t v : fragment_voxels[c]) {
        for_each_face_neighbor(spec, v, [&](std::size_t n) {
          const auto nc = comp_of[n];
          const auto nl = comps[static_cast<std::size_t>(nc)].label;
          if (nl == comps[c].label || main_comp[static_cast<std::size_t>(nl)] != nc) return;
          const auto ns = label_size[static_cast<std::size_t>(nl)];
          if (target < 0 || ns > label_size[static_cast<std::size_t>(target)] ||
              (ns == label_size[static_cast<std::size_t>(target)] && nl < target))
            target = nl;
        });
      }
      if (target < 0) continue;  // only touches other fragments; retried next pass
      for (std::size_t v : fragment_voxels[c]) labels[v] = target;
      label_size[static_cast<std::size_t>(target)] += fragment_voxels[c].size();
      label_size[static_cast<std::size_t>(comps[c].label)] -= fragment_voxels[c].size();
      ++relabeled;
      progressed = true;
    }
    if (!progressed) break;
  }
  throw Error(ErrorCode::Internal, "connectivity enforcement did not settle");
}

}  // namespace

std::vector<std::vector<std::size_t>> SupervoxelLabels::members() const {
  std::vector<std::vector<std::size_t>> out(n_clusters());
  for (std::size_t v = 0; v < labels.size(); ++v) out[static_cast<std::size_t>(labels[v])].push_back(v);
  return out;
}

double slic_distance(const ClusterCenter& center, const Vec3& point, double point_value, const SlicParams& params) {
  const double dx = center.position[0] - point[0];
  const double dy = center.position[1] - point[1];
  const double dz = center.position[2] - point[2];
  const double spatial = std::sqrt(dx * dx + dy * dy + dz * dz);
  const double scale = params.value_scale > 0.0 ? params.value_scale : 1.0;
  return params.gamma * spatial + (1.0 - params.gamma) * std::abs(center.value - point_value) / scale;
}

SupervoxelLabels slic_partition(const ScalarGrid& field, const SlicParams& params_in, SlicDiagnostics* diagnostics) {
  const GridSpec& spec = field.spec;
  if (field.values.size() != spec.size()) throw Error(ErrorCode::InvalidArgument, "field value count does not match grid");
  for (int a = 0; a < 3; ++a) {
    if (params_in.cluster_size[a] < 1) throw Error(ErrorCode::InvalidArgument, "cluster size must be >= 1 per axis");
    if (spec.dims[a] < params_in.cluster_size[a])
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("grid {} is smaller than cluster size {}", format_triple(spec.dims),
                              format_triple(params_in.cluster_size)));
  }
  if (!(params_in.gamma >= 0.0 && params_in.gamma <= 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be in [0, 1]");
  if (params_in.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");

  SlicParams params = params_in;
  if (params.value_scale <= 0.0) {
    const auto [lo, hi] = std::minmax_element(field.values.begin(), field.values.end());
    params.value_scale = (*hi - *lo) > 0.0 ? (*hi - *lo) : 1.0;
  }
  SlicDiagnostics diag;
  diag.value_scale = params.value_scale;

  const auto& cs = params.cluster_size;
  std::array<int, 3> n_blocks{};
  for (int a = 0; a < 3; ++a) n_blocks[a] = (spec.dims[a] + cs[a] - 1) / cs[a];

  // Regular lattice: one center per cluster_size block, at the block midpoint, carrying the block mean.
  std::vector<ClusterCenter> centers;
  for (int bk = 0; bk < n_blocks[2]; ++bk)
    for (int bj = 0; bj < n_blocks[1]; ++bj)
      for (int bi = 0; bi < n_blocks[0]; ++bi) {
        const std::array<int, 3> b{bi, bj, bk};
        std::array<int, 3> lo{}, hi{};
        ClusterCenter c;
        for (int a = 0; a < 3; ++a) {
          lo[a] = b[a] * cs[a];
          hi[a] = std::min((b[a] + 1) * cs[a], spec.dims[a]) - 1;
          c.position[a] = 0.5 * (lo[a] + hi[a]);
        }
        double sum = 0.0;
        std::size_t n = 0;
        for (int k = lo[2]; k <= hi[2]; ++k)
          for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i) {
              sum += field.at(i, j, k);
              ++n;
            }
        c.value = sum / static_cast<double>(n);
        centers.push_back(c);
      }

  const std::size_t n_vox = spec.size();
  std::vector<std::int32_t> labels(n_vox, -1);
  std::vector<std::int32_t> next(n_vox);
  std::vector<double> best(n_vox);

  for (int iter = 0; iter < params.max_iters; ++iter) {
    std::fill(next.begin(), next.end(), -1);
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const auto& c = centers[ci];
      std::array<int, 3> lo{}, hi{};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(0, static_cast<int>(std::ceil(c.position[a] - cs[a])));
        hi[a] = std::min(spec.dims[a] - 1, static_cast<int>(std::floor(c.position[a] + cs[a])));
      }
      for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
          for (int i = lo[0]; i <= hi[0]; ++i) {
            const std::size_t v = spec.index(i, j, k);
            const double d = slic_distance(c, {double(i), double(j), double(k)}, field.values[v], params);
            if (d < best[v]) {
              best[v] = d;
              next[v] = static_cast<std::int32_t>(ci);
            }
          }
    }
    for (std::size_t v = 0; v < n_vox; ++v) {
      if (next[v] >= 0) continue;
      const auto p = spec.ijk(v);
      const Vec3 pos{double(p[0]), double(p[1]), double(p[2])};
      for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        const double d = slic_distance(centers[ci], pos, field.values[v], params);
        if (d < best[v]) {
          best[v] = d;
          next[v] = static_cast<std::int32_t>(ci);
        }
      }
      ++diag.unassigned_voxels;
    }

    std::size_t changes = 0;
    for (std::size_t v = 0; v < n_vox; ++v) changes += next[v] != labels[v];
    labels.swap(next);
    diag.iterations = iter + 1;
    diag.changes_per_iteration.push_back(changes);
    if (changes == 0) {
      diag.converged = true;
      break;
    }

    std::vector<Vec3> pos_sum(centers.size(), Vec3{0, 0, 0});
    std::vector<double> val_sum(centers.size(), 0.0);
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t v = 0; v < n_vox; ++v) {
      const auto l = static_cast<std::size_t>(labels[v]);
      const auto p = spec.ijk(v);
      for (int a = 0; a < 3; ++a) pos_sum[l][a] += p[a];
      val_sum[l] += field.values[v];
      ++count[l];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (count[ci] == 0) continue;
      const double n = static_cast<double>(count[ci]);
      centers[ci].position = {pos_sum[ci][0] / n, pos_sum[ci][1] / n, pos_sum[ci][2] / n};
      centers[ci].value = val_sum[ci] / n;
    }
  }

  diag.fragments_relabeled = enforce_connectivity(spec, labels, centers.size());

  // Dense ids in order of the original center ids; empty clusters are dropped.
  std::vector<std::int32_t> remap(centers.size(), -1);
  std::vector<std::size_t> count(centers.size(), 0);
  for (auto l : labels) ++count[static_cast<std::size_t>(l)];
  std::int32_t next_id = 0;
  for (std::size_t ci = 0; ci < centers.size(); ++ci)
    if (count[ci] > 0) remap[ci] = next_id++;

  SupervoxelLabels out;
  out.spec = spec;
  out.labels.resize(n_vox);
  for (std::size_t v = 0; v < n_vox; ++v) out.labels[v] = remap[static_cast<std::size_t>(labels[v])];
  out.centers.assign(static_cast<std::size_t>(next_id), ClusterCenter{});
  std::vector<std::size_t> n_members(out.centers.size(), 0);
  for (std::size_t v = 0; v < n_vox; ++v) {
    const auto l = static_cast<std::size_t>(out.labels[v]);
    const auto p = spec.ijk(v);
    for (int a = 0; a < 3; ++a) out.centers[l].position[a] += p[a];
    out.centers[l].value += field.values[v];
    ++n_members[l];
  }
  for (std::size_t l = 0; l < out.centers.size(); ++l) {
    const double n = static_cast<double>(n_members[l]);
    for (auto& x : out.centers[l].position) x /= n;
    out.centers[l].value /= n;
  }

  if (diagnostics) *diagnostics = diag;
  return out;
}

ScalarGrid labels_as_field(const SupervoxelLabels& labels, std::int32_t time_index) {
  ScalarGrid g(labels.spec, FieldName::labels, time_index);
  for (std::size_t v = 0; v < g.values.size(); ++v) g.values[v] = labels.labels[v];
  return g;
}

bool labels_are_connected(const SupervoxelLabels& labels) {
  std::vector<std::int32_t> comp_of;
  const auto comps = label_components(labels.spec, labels.labels, comp_of);
  std::vector<int> seen(labels.n_clusters(), 0);
  for (const auto& c : comps) {
    if (c.label < 0 || static_cast<std::size_t>(c.label) >= seen.size()) return false;
    if (++seen[static_cast<std::size_t>(c.label)] > 1) return false;
  }
  return true;
}

}  // namespace bflow::slic
