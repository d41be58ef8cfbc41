#pragma once

// Spatial-histogram density field and particle rise-velocity field (PVF).

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "synth.hpp"

namespace bflow::fields {

/// Default bin counts for production-size runs; desk-scale runs use 64x8x64.
inline constexpr std::array<int, 3> kDefaultDims{128, 16, 128};

/// Per-bin x-velocity sum in signed fixed point with 64 fractional bits. Integer addition is
/// associative, so the reduced sum is identical for every chunking of the particles.
class VelocitySum {
 public:
  static constexpr int kFracBits = 64;

  VelocitySum() = default;
  static VelocitySum from(double v);
  VelocitySum& operator+=(const VelocitySum& o) {
    raw_ += o.raw_;
    return *this;
  }
  double value() const;
  bool operator==(const VelocitySum&) const = default;

 private:
  __int128 raw_ = 0;
};

struct PartialHistogram {
  GridSpec spec;
  std::vector<std::uint64_t> counts;
  std::vector<VelocitySum> vx_sums;

  PartialHistogram() = default;
  explicit PartialHistogram(const GridSpec& s) : spec(s), counts(s.size(), 0), vx_sums(s.size()) {}
};

/// Bin index of a world position, or throws OutOfBounds. Points on the upper bound land in the last bin.
std::size_t bin_of(const GridSpec& spec, const Vec3& p);

PartialHistogram bin_particles(const synth::ParticleChunk& chunk, const GridSpec& spec);
/// Elementwise sum in list order.
PartialHistogram reduce(const std::vector<PartialHistogram>& partials);
/// Bins every chunk and reduces in ascending rank order.
PartialHistogram bin_and_reduce(const std::vector<synth::ParticleChunk>& chunks, const GridSpec& spec);

ScalarGrid finalize_density(const PartialHistogram& global, std::int32_t time_index = 0);
/// Mean x-velocity per bin; empty bins are 0.
ScalarGrid finalize_pvf(const PartialHistogram& global, std::int32_t time_index = 0);

// Field files ("BBLF"): values are stored as float32.
std::vector<std::uint8_t> encode_field(const ScalarGrid& grid);
ScalarGrid decode_field(const std::vector<std::uint8_t>& bytes, const std::string& source);
std::string field_file_name(FieldName name, int t);
void write_field(const ScalarGrid& grid, const std::string& path);
ScalarGrid read_field(const std::string& path);
/// Size in bytes of a field file for the given grid.
std::size_t field_file_size(const GridSpec& spec);

}  // namespace bflow::fields
