#pragma once

// Supervoxel partitioning of a scalar grid with a local k-means over a combined
// spatial/value distance.

#include <cstdint>
#include <vector>

#include "common.hpp"

namespace bflow::slic {

struct SlicParams {
  std::array<int, 3> cluster_size{3, 3, 3};
  double gamma = 0.3;   // weight of the spatial term; 1 - gamma weights the value term
  int max_iters = 10;
  double value_scale = 0.0;  // <= 0 selects max - min of the field (1 for a flat field)
};

/// Center position is in voxel-index units (voxel (i,j,k) sits at (i,j,k)).
struct ClusterCenter {
  Vec3 position{};
  double value = 0.0;
};

struct SupervoxelLabels {
  GridSpec spec;
  std::vector<std::int32_t> labels;
  std::vector<ClusterCenter> centers;

  std::size_t n_clusters() const { return centers.size(); }
  /// Voxel indices per label, each list ascending.
  std::vector<std::vector<std::size_t>> members() const;
};

struct SlicDiagnostics {
  int iterations = 0;
  bool converged = false;
  std::vector<std::size_t> changes_per_iteration;
  std::size_t unassigned_voxels = 0;  // voxels outside every center window, summed over iterations
  std::size_t fragments_relabeled = 0;
  double value_scale = 1.0;
};

double slic_distance(const ClusterCenter& center, const Vec3& point, double point_value, const SlicParams& params);

SupervoxelLabels slic_partition(const ScalarGrid& field, const SlicParams& params, SlicDiagnostics* diagnostics = nullptr);

/// Labels as a field (name-id 3) for debug dumps.
ScalarGrid labels_as_field(const SupervoxelLabels& labels, std::int32_t time_index = 0);

/// True when every label's voxels form one face-connected set.
bool labels_are_connected(const SupervoxelLabels& labels);

}  // namespace bflow::slic
