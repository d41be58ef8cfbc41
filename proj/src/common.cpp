#include "common.hpp"

#include <cmath>
#include <sstream>

namespace bflow {

GridSpec GridSpec::from_bounds(const Box3& bounds, std::array<int, 3> dims) {
  if (bounds.degenerate()) throw Error(ErrorCode::InvalidArgument, "grid bounds are degenerate");
  GridSpec g;
  g.dims = dims;
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw Error(ErrorCode::InvalidArgument, "grid dims must be >= 1 per axis");
    g.origin[a] = bounds.min[a];
    g.spacing[a] = (bounds.max[a] - bounds.min[a]) / dims[a];
  }
  return g;
}

Vec3 GridSpec::voxel_center(std::size_t idx) const {
  const auto c = ijk(idx);
  return {origin[0] + (c[0] + 0.5) * spacing[0], origin[1] + (c[1] + 0.5) * spacing[1],
          origin[2] + (c[2] + 0.5) * spacing[2]};
}

double GridSpec::voxel_diagonal() const {
  return std::sqrt(spacing[0] * spacing[0] + spacing[1] * spacing[1] + spacing[2] * spacing[2]);
}

const char* field_name_str(FieldName name) {
  switch (name) {
    case FieldName::density: return "density";
    case FieldName::pvf: return "pvf";
    case FieldName::bsf: return "bsf";
    case FieldName::labels: return "labels";
  }
  return "unknown";
}

FieldName field_name_from_str(const std::string& s) {
  if (s == "density") return FieldName::density;
  if (s == "pvf") return FieldName::pvf;
  if (s == "bsf") return FieldName::bsf;
  if (s == "labels") return FieldName::labels;
  throw Error(ErrorCode::InvalidArgument, "unknown field name '" + s + "'");
}

std::array<int, 3> parse_triple(const std::string& text) {
  std::array<int, 3> out{};
  std::istringstream in(text);
  for (int a = 0; a < 3; ++a) {
    long v = 0;
    if (!(in >> v) || v < 1) throw Error(ErrorCode::InvalidArgument, "expected AxBxC with positive integers, got '" + text + "'");
    out[a] = static_cast<int>(v);
    if (a < 2) {
      char sep = 0;
      if (!(in >> sep) || (sep != 'x' && sep != 'X'))
        throw Error(ErrorCode::InvalidArgument, "expected AxBxC with positive integers, got '" + text + "'");
    }
  }
  char extra = 0;
  if (in >> extra) throw Error(ErrorCode::InvalidArgument, "trailing characters in '" + text + "'");
  return out;
}

std::string format_triple(const std::array<int, 3>& v) {
  return std::to_string(v[0]) + "x" + std::to_string(v[1]) + "x" + std::to_string(v[2]);
}

}  // namespace bflow
