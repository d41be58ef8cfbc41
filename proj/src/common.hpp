#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bflow {

using Vec3 = std::array<double, 3>;
using Vec3f = std::array<float, 3>;

enum class ErrorCode : int {
  InvalidArgument = 1,
  InvalidScene,
  OutOfBounds,
  Format,
  SpecMismatch,
  EmptySample,
  NotFound,
  Io,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Axis-aligned box in world units. Closed on both ends.
struct Box3 {
  Vec3 min{0.0, 0.0, 0.0};
  Vec3 max{1.0, 1.0, 1.0};

  bool degenerate() const {
    return !(max[0] > min[0] && max[1] > min[1] && max[2] > min[2]);
  }
  Vec3 extent() const { return {max[0] - min[0], max[1] - min[1], max[2] - min[2]}; }
};

/// Inclusive voxel-index box.
struct VoxelBox {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};

  bool operator==(const VoxelBox&) const = default;
};

/// Regular grid layout. Values are stored x-fastest: idx = i + nx*(j + ny*k).
struct GridSpec {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 origin{0.0, 0.0, 0.0};
  Vec3 spacing{1.0, 1.0, 1.0};

  static GridSpec from_bounds(const Box3& bounds, std::array<int, 3> dims);

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  std::array<int, 3> ijk(std::size_t idx) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  Vec3 voxel_center(std::size_t idx) const;
  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }
  double voxel_diagonal() const;
  Vec3 upper() const {
    return {origin[0] + spacing[0] * dims[0], origin[1] + spacing[1] * dims[1], origin[2] + spacing[2] * dims[2]};
  }

  bool operator==(const GridSpec&) const = default;
};

/// Calls fn(neighbor_index) for each in-grid face neighbor of idx.
template <class Fn>
void for_each_face_neighbor(const GridSpec& spec, std::size_t idx, Fn&& fn) {
  const auto c = spec.ijk(idx);
  const std::size_t stride[3] = {1, static_cast<std::size_t>(spec.dims[0]),
                                 static_cast<std::size_t>(spec.dims[0]) * static_cast<std::size_t>(spec.dims[1])};
  for (int a = 0; a < 3; ++a) {
    if (c[a] > 0) fn(idx - stride[a]);
    if (c[a] + 1 < spec.dims[a]) fn(idx + stride[a]);
  }
}

enum class FieldName : std::uint8_t { density = 0, pvf = 1, bsf = 2, labels = 3 };

const char* field_name_str(FieldName name);
FieldName field_name_from_str(const std::string& s);

struct ScalarGrid {
  GridSpec spec;
  std::vector<double> values;
  FieldName name = FieldName::density;
  std::int32_t time_index = 0;

  ScalarGrid() = default;
  ScalarGrid(const GridSpec& s, FieldName n, std::int32_t t = 0) : spec(s), values(s.size(), 0.0), name(n), time_index(t) {}

  double at(int i, int j, int k) const { return values[spec.index(i, j, k)]; }
};

/// Parses "AxBxC" into three positive integers.
std::array<int, 3> parse_triple(const std::string& text);
std::string format_triple(const std::array<int, 3>& v);

}  // namespace bflow
