#include "fields.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "binio.hpp"

namespace bflow::fields {

namespace {
constexpr std::uint32_t kFieldVersion = 1;
constexpr std::size_t kFieldHeaderBytes = 4 + 4 + 4 + 1 + 3 * 4 + 3 * 8 + 3 * 8;
}  // namespace

VelocitySum VelocitySum::from(double v) {
  VelocitySum s;
  // Velocities read from float32 files are exact here unless |v| < 2^-41.
  s.raw_ = static_cast<__int128>(std::ldexp(v, kFracBits));
  return s;
}

double VelocitySum::value() const { return std::ldexp(static_cast<double>(raw_), -kFracBits); }

std::size_t bin_of(const GridSpec& spec, const Vec3& p) {
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - spec.origin[a]) / spec.spacing[a];
    if (!(u >= 0.0) || u > spec.dims[a] * (1.0 + 1e-9)) throw Error(ErrorCode::OutOfBounds, "position outside grid");
    idx[a] = std::min(static_cast<int>(std::floor(u)), spec.dims[a] - 1);
  }
  return spec.index(idx[0], idx[1], idx[2]);
}

PartialHistogram bin_particles(const synth::ParticleChunk& chunk, const GridSpec& spec) {
  if (chunk.positions.size() != chunk.velocities.size())
    throw Error(ErrorCode::InvalidArgument, "positions and velocities differ in length");
  PartialHistogram h(spec);
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const auto& pf = chunk.positions[i];
    std::size_t b = 0;
    try {
      b = bin_of(spec, {pf[0], pf[1], pf[2]});
    } catch (const Error&) {
      throw Error(ErrorCode::OutOfBounds, fmt::format("particle {} of rank {} at ({}, {}, {}) lies outside the grid", i,
                                                      chunk.rank, pf[0], pf[1], pf[2]));
    }
    h.counts[b] += 1;
    h.vx_sums[b] += VelocitySum::from(chunk.velocities[i][0]);
  }
  return h;
}

PartialHistogram reduce(const std::vector<PartialHistogram>& partials) {
  if (partials.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to reduce");
  PartialHistogram out(partials.front().spec);
  for (std::size_t p = 0; p < partials.size(); ++p) {
    const auto& h = partials[p];
    if (!(h.spec == out.spec)) throw Error(ErrorCode::SpecMismatch, fmt::format("partial {} has a different grid", p));
    if (h.counts.size() != out.counts.size() || h.vx_sums.size() != out.vx_sums.size())
      throw Error(ErrorCode::SpecMismatch, fmt::format("partial {} has mismatched array lengths", p));
    for (std::size_t b = 0; b < out.counts.size(); ++b) {
      out.counts[b] += h.counts[b];
      out.vx_sums[b] += h.vx_sums[b];
    }
  }
  return out;
}

PartialHistogram bin_and_reduce(const std::vector<synth::ParticleChunk>& chunks, const GridSpec& spec) {
  if (chunks.empty()) return PartialHistogram(spec);
  std::vector<const synth::ParticleChunk*> ordered;
  for (const auto& c : chunks) ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
  std::vector<PartialHistogram> partials;
  partials.reserve(ordered.size());
  for (const auto* c : ordered) partials.push_back(bin_particles(*c, spec));
  return reduce(partials);
}

ScalarGrid finalize_density(const PartialHistogram& global, std::int32_t time_index) {
  ScalarGrid g(global.spec, FieldName::density, time_index);
  for (std::size_t b = 0; b < g.values.size(); ++b) g.values[b] = static_cast<double>(global.counts[b]);
  return g;
}

ScalarGrid finalize_pvf(const PartialHistogram& global, std::int32_t time_index) {
  ScalarGrid g(global.spec, FieldName::pvf, time_index);
  for (std::size_t b = 0; b < g.values.size(); ++b) {
    if (global.counts[b] > 0) g.values[b] = global.vx_sums[b].value() / static_cast<double>(global.counts[b]);
  }
  return g;
}

std::vector<std::uint8_t> encode_field(const ScalarGrid& grid) {
  if (grid.values.size() != grid.spec.size()) throw Error(ErrorCode::InvalidArgument, "field value count does not match grid");
  binio::Writer w;
  w.reserve(field_file_size(grid.spec));
  w.bytes("BBLF", 4);
  w.u32(kFieldVersion);
  w.u32(static_cast<std::uint32_t>(grid.time_index));
  w.u8(static_cast<std::uint8_t>(grid.name));
  for (int d : grid.spec.dims) w.u32(static_cast<std::uint32_t>(d));
  for (double o : grid.spec.origin) w.f64(o);
  for (double s : grid.spec.spacing) w.f64(s);
  for (double v : grid.values) w.f32(static_cast<float>(v));
  return w.data();
}

ScalarGrid decode_field(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("BBLF");
  const auto version = r.u32("version");
  if (version != kFieldVersion) r.fail(fmt::format("unsupported version {}", version));
  ScalarGrid g;
  g.time_index = static_cast<std::int32_t>(r.u32("time_index"));
  const auto name = r.u8("name-id");
  if (name > 3) r.fail(fmt::format("unknown name-id {}", name));
  g.name = static_cast<FieldName>(name);
  for (auto& d : g.spec.dims) {
    d = static_cast<int>(r.u32("dims"));
    if (d < 1) r.fail("zero grid dimension");
  }
  for (auto& o : g.spec.origin) o = r.f64("origin");
  for (auto& s : g.spec.spacing) {
    s = r.f64("spacing");
    if (!(s > 0.0)) r.fail("non-positive spacing");
  }
  const std::size_t n = g.spec.size();
  if (r.remaining() / 4 < n) r.fail(fmt::format("truncated: expected {} values", n));
  g.values.resize(n);
  for (auto& v : g.values) v = r.f32("value");
  if (r.remaining() != 0) r.fail("trailing bytes after field values");
  return g;
}

std::string field_file_name(FieldName name, int t) { return fmt::format("field_{}_t{:06}.bblf", field_name_str(name), t); }

void write_field(const ScalarGrid& grid, const std::string& path) { binio::write_file(path, encode_field(grid)); }

ScalarGrid read_field(const std::string& path) { return decode_field(binio::read_file(path), path); }

std::size_t field_file_size(const GridSpec& spec) { return kFieldHeaderBytes + 4 * spec.size(); }

}  // namespace bflow::fields
