#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <regex>

#include <fmt/format.h>

#include "binio.hpp"

namespace bflow::synth {

namespace {

constexpr std::uint32_t kParticleVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform01(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

Vec3 to_vec3(const Vec3f& p) { return {p[0], p[1], p[2]}; }

double growth_scale(const VoidSpec& v, int t) {
  return 1.0 + v.growth_rate * std::max(0, t - v.birth_t);
}

}  // namespace

double VoidState::normalized_r2(const Vec3& p) const {
  double q = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = (p[a] - center[a]) / radii[a];
    q += d * d;
  }
  return q;
}

bool VoidState::contains(const Vec3& p) const {
  if (!active) return false;
  if (normalized_r2(p) >= 1.0) return false;
  if (split && std::abs(p[2] - center[2]) < 0.5 * split_wall) return false;
  return true;
}

void validate(const SceneSpec& scene) {
  if (scene.domain_bounds.degenerate()) throw Error(ErrorCode::InvalidScene, "domain bounds are degenerate");
  if (!(scene.timestep_dt > 0.0)) throw Error(ErrorCode::InvalidScene, "timestep_dt must be > 0");
  if (scene.n_timesteps < 1) throw Error(ErrorCode::InvalidScene, "n_timesteps must be >= 1");
  if (!(scene.bed_fraction > 0.0 && scene.bed_fraction <= 1.0))
    throw Error(ErrorCode::InvalidScene, "bed_fraction must be in (0, 1]");
  for (std::size_t i = 0; i < scene.voids.size(); ++i) {
    const auto& v = scene.voids[i];
    if (!(v.radii[0] > 0 && v.radii[1] > 0 && v.radii[2] > 0))
      throw Error(ErrorCode::InvalidScene, fmt::format("void {} has non-positive radii", i));
    if (v.birth_t > v.death_t) throw Error(ErrorCode::InvalidScene, fmt::format("void {} has birth_t > death_t", i));
    if (v.growth_rate < 0.0) throw Error(ErrorCode::InvalidScene, fmt::format("void {} has negative growth_rate", i));
  }
}

VoidState void_state(const VoidSpec& v, int t, double dt) {
  VoidState s;
  s.active = v.active(t);
  s.center = v.center_at_t0;
  double x = v.center_at_t0[0];
  for (int k = 0; k < t; ++k) x += v.rise_velocity * std::pow(growth_scale(v, k), v.speed_exponent) * dt;
  s.center[0] = x;
  const double g = growth_scale(v, t);
  s.radii = {v.radii[0] * g, v.radii[1], v.radii[2] * g};
  s.split = v.split_t >= 0 && t >= v.split_t;
  s.split_wall = v.split_wall;
  return s;
}

std::vector<ParticleChunk> generate(const SceneSpec& scene, int t, int n_ranks) {
  validate(scene);
  if (t < 0 || t >= scene.n_timesteps)
    throw Error(ErrorCode::InvalidArgument, fmt::format("time step {} outside [0, {})", t, scene.n_timesteps));
  if (n_ranks < 1) throw Error(ErrorCode::InvalidArgument, "rank count must be >= 1");

  std::vector<VoidState> states;
  std::vector<double> wakes;
  for (const auto& v : scene.voids) {
    auto s = void_state(v, t, scene.timestep_dt);
    if (s.active) {
      states.push_back(s);
      wakes.push_back(v.wake_speed);
    }
  }

  const auto& b = scene.domain_bounds;
  const Vec3 ext = b.extent();
  const double bed_top = b.min[0] + scene.bed_fraction * ext[0];

  std::mt19937_64 gen(splitmix64(scene.rng_seed ^ splitmix64(static_cast<std::uint64_t>(t) + 1)));

  ParticleChunk all;
  all.time_index = t;
  all.positions.reserve(scene.n_particles);
  all.velocities.reserve(scene.n_particles);

  const std::uint64_t max_attempts = 1000 * scene.n_particles + 1000000;
  std::uint64_t attempts = 0;
  while (all.positions.size() < scene.n_particles) {
    if (++attempts > max_attempts)
      throw Error(ErrorCode::InvalidScene, "voids leave no room for particles in the bed");
    const double ux = uniform01(gen), uy = uniform01(gen), uz = uniform01(gen);
    Vec3f pf{static_cast<float>(b.min[0] + ux * (bed_top - b.min[0])), static_cast<float>(b.min[1] + uy * ext[1]),
             static_cast<float>(b.min[2] + uz * ext[2])};
    for (int a = 0; a < 3; ++a) pf[a] = std::clamp(pf[a], static_cast<float>(b.min[a]), static_cast<float>(b.max[a]));
    // float rounding may nudge the clamp past the double bounds
    for (int a = 0; a < 3; ++a) {
      if (static_cast<double>(pf[a]) < b.min[a]) pf[a] = std::nextafter(pf[a], static_cast<float>(b.max[a]));
      if (static_cast<double>(pf[a]) > b.max[a]) pf[a] = std::nextafter(pf[a], static_cast<float>(b.min[a]));
    }
    const Vec3 p = to_vec3(pf);
    bool rejected = false;
    for (const auto& s : states) {
      if (s.contains(p)) {
        rejected = true;
        break;
      }
    }
    if (rejected) continue;

    Vec3 vel = scene.background_velocity;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto& s = states[i];
      const double dy = p[1] - s.center[1], dz = p[2] - s.center[2];
      const double lateral = std::max(s.radii[1], s.radii[2]);
      const double below = (s.center[0] - s.radii[0]) - p[0];
      if (below > 0.0 && below <= 2.0 * s.radii[0] && dy * dy + dz * dz <= lateral * lateral) {
        vel[0] = wakes[i];
        break;
      }
      const double dx = (p[0] - s.center[0]) / s.radii[0];
      const double fy = dy / (1.5 * s.radii[1]), fz = dz / (1.5 * s.radii[2]);
      if (dx * dx + fy * fy + fz * fz < 1.0) {
        vel[0] = -0.5 * wakes[i];
        break;
      }
    }
    all.positions.push_back(pf);
    all.velocities.push_back({static_cast<float>(vel[0]), static_cast<float>(vel[1]), static_cast<float>(vel[2])});
  }
  return chunk(all, n_ranks, scene.domain_bounds);
}

std::vector<ParticleChunk> chunk(const ParticleChunk& all, int k, const Box3& bounds) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "chunk count must be >= 1");
  if (all.positions.size() != all.velocities.size())
    throw Error(ErrorCode::InvalidArgument, "positions and velocities differ in length");
  std::vector<ParticleChunk> out(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    out[r].rank = r;
    out[r].time_index = all.time_index;
  }
  const double width = (bounds.max[0] - bounds.min[0]) / k;
  for (std::size_t i = 0; i < all.positions.size(); ++i) {
    const double x = all.positions[i][0];
    auto s = static_cast<long>(std::floor((x - bounds.min[0]) / width));
    s = std::clamp<long>(s, 0, k - 1);
    out[s].positions.push_back(all.positions[i]);
    out[s].velocities.push_back(all.velocities[i]);
  }
  return out;
}

ParticleChunk concat(const std::vector<ParticleChunk>& chunks) {
  ParticleChunk all;
  if (!chunks.empty()) all.time_index = chunks.front().time_index;
  for (const auto& c : chunks) {
    all.positions.insert(all.positions.end(), c.positions.begin(), c.positions.end());
    all.velocities.insert(all.velocities.end(), c.velocities.begin(), c.velocities.end());
  }
  return all;
}

std::vector<std::uint8_t> encode_particles(const ParticleChunk& chunk) {
  if (chunk.positions.size() != chunk.velocities.size())
    throw Error(ErrorCode::InvalidArgument, "positions and velocities differ in length");
  binio::Writer w;
  w.reserve(20 + chunk.size() * 24);
  w.bytes("BBLP", 4);
  w.u32(kParticleVersion);
  w.u32(static_cast<std::uint32_t>(chunk.time_index));
  w.u64(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    for (float v : chunk.positions[i]) w.f32(v);
    for (float v : chunk.velocities[i]) w.f32(v);
  }
  return w.data();
}

ParticleChunk decode_particles(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("BBLP");
  const auto version = r.u32("version");
  if (version != kParticleVersion) r.fail(fmt::format("unsupported version {}", version));
  ParticleChunk c;
  c.time_index = static_cast<std::int32_t>(r.u32("time_index"));
  const auto n = r.u64("particle count");
  if (n > r.remaining() / 24) r.fail(fmt::format("truncated: header declares {} particles", n));
  c.positions.resize(n);
  c.velocities.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (auto& v : c.positions[i]) v = r.f32("position");
    for (auto& v : c.velocities[i]) v = r.f32("velocity");
  }
  if (r.remaining() != 0) r.fail("trailing bytes after particle records");
  return c;
}

std::string particle_file_name(int t, int rank) { return fmt::format("particles_t{:06}_r{:04}.bblp", t, rank); }

void write_particle_file(const ParticleChunk& chunk, const std::string& path) {
  binio::write_file(path, encode_particles(chunk));
}

ParticleChunk read_particle_file(const std::string& path, int rank) {
  auto c = decode_particles(binio::read_file(path), path);
  c.rank = rank;
  return c;
}

void write_particles(const std::vector<ParticleChunk>& chunks, const std::string& dir, int t) {
  std::filesystem::create_directories(dir);
  if (chunks.empty()) {
    ParticleChunk empty;
    empty.time_index = t;
    write_particle_file(empty, (std::filesystem::path(dir) / particle_file_name(t, 0)).string());
    return;
  }
  for (const auto& c : chunks) {
    if (c.time_index != t)
      throw Error(ErrorCode::InvalidArgument, fmt::format("chunk time {} does not match step {}", c.time_index, t));
    write_particle_file(c, (std::filesystem::path(dir) / particle_file_name(t, c.rank)).string());
  }
}

namespace {
const std::regex kParticleRe(R"(particles_t(\d{6})_r(\d{4})\.bblp)");
}

std::vector<ParticleChunk> read_particles(const std::string& dir, int t) {
  std::vector<std::pair<int, std::string>> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      std::smatch m;
      const auto name = e.path().filename().string();
      if (std::regex_match(name, m, kParticleRe) && std::stoi(m[1]) == t) files.emplace_back(std::stoi(m[2]), e.path().string());
    }
  }
  if (files.empty()) throw Error(ErrorCode::NotFound, fmt::format("no particle files for step {} in '{}'", t, dir));
  std::sort(files.begin(), files.end());
  std::vector<ParticleChunk> out;
  for (const auto& [rank, path] : files) {
    auto c = read_particle_file(path, rank);
    if (c.time_index != t) throw Error(ErrorCode::Format, fmt::format("{}: header time {} != {}", path, c.time_index, t));
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<int> particle_steps(const std::string& dir) {
  std::vector<int> steps;
  if (!std::filesystem::is_directory(dir)) return steps;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, kParticleRe)) steps.push_back(std::stoi(m[1]));
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

nlohmann::json scene_to_json(const SceneSpec& scene, bool with_trajectories) {
  using nlohmann::json;
  json j;
  j["domain_bounds"] = {{"min", scene.domain_bounds.min}, {"max", scene.domain_bounds.max}};
  j["n_particles"] = scene.n_particles;
  j["background_velocity"] = scene.background_velocity;
  j["timestep_dt"] = scene.timestep_dt;
  j["n_timesteps"] = scene.n_timesteps;
  j["rng_seed"] = scene.rng_seed;
  j["bed_fraction"] = scene.bed_fraction;
  json voids = json::array();
  for (const auto& v : scene.voids) {
    json jv{{"center_at_t0", v.center_at_t0}, {"radii", v.radii},           {"rise_velocity", v.rise_velocity},
            {"birth_t", v.birth_t},           {"death_t", v.death_t},       {"wake_speed", v.wake_speed},
            {"growth_rate", v.growth_rate},   {"split_t", v.split_t},       {"split_wall", v.split_wall},
            {"speed_exponent", v.speed_exponent}};
    if (with_trajectories) {
      json traj = json::array();
      for (int t = v.birth_t; t <= v.death_t && t < scene.n_timesteps; ++t) {
        const auto s = void_state(v, t, scene.timestep_dt);
        traj.push_back({{"t", t}, {"center", s.center}, {"radii", s.radii}, {"split", s.split}});
      }
      jv["trajectory"] = traj;
    }
    voids.push_back(jv);
  }
  j["voids"] = voids;
  return j;
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  try {
    SceneSpec s;
    s.domain_bounds.min = j.at("domain_bounds").at("min").get<Vec3>();
    s.domain_bounds.max = j.at("domain_bounds").at("max").get<Vec3>();
    s.n_particles = j.at("n_particles").get<std::uint64_t>();
    s.background_velocity = j.at("background_velocity").get<Vec3>();
    s.timestep_dt = j.at("timestep_dt").get<double>();
    s.n_timesteps = j.at("n_timesteps").get<int>();
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    s.bed_fraction = j.value("bed_fraction", 0.8);
    for (const auto& jv : j.at("voids")) {
      VoidSpec v;
      v.center_at_t0 = jv.at("center_at_t0").get<Vec3>();
      v.radii = jv.at("radii").get<Vec3>();
      v.rise_velocity = jv.at("rise_velocity").get<double>();
      v.birth_t = jv.at("birth_t").get<int>();
      v.death_t = jv.at("death_t").get<int>();
      v.wake_speed = jv.at("wake_speed").get<double>();
      v.growth_rate = jv.value("growth_rate", 0.0);
      v.split_t = jv.value("split_t", -1);
      v.split_wall = jv.value("split_wall", 0.0);
      v.speed_exponent = jv.value("speed_exponent", 1.0);
      s.voids.push_back(v);
    }
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("scene json: ") + e.what());
  }
}

void write_scene(const SceneSpec& scene, const std::string& path) {
  binio::write_text_file(path, scene_to_json(scene).dump(2) + "\n");
}

SceneSpec read_scene(const std::string& path) {
  try {
    return scene_from_json(nlohmann::json::parse(binio::read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Format, path + ": " + e.what());
  }
}

namespace presets {

namespace {

SceneSpec base(int n_steps) {
  SceneSpec s;
  s.domain_bounds = Box3{{0.0, 0.0, 0.0}, {64 * kVoxel, 8 * kVoxel, 64 * kVoxel}};
  s.n_particles = 100000;
  s.background_velocity = {0.0, 0.0, 0.0};
  s.timestep_dt = 0.01;
  s.n_timesteps = n_steps;
  s.rng_seed = 20210527;
  return s;
}

// Void in voxel units. The y semi-axis exceeds the half-thickness of the bed so the void
// core spans the whole y extent, as bubbles do in pseudo-2D beds.
VoidSpec vox_void(double x, double z, double rx, double rz, double rise_vox_per_step, int birth, int death) {
  VoidSpec v;
  v.center_at_t0 = {x * kVoxel, 4 * kVoxel, z * kVoxel};
  v.radii = {rx * kVoxel, 5 * kVoxel, rz * kVoxel};
  v.rise_velocity = rise_vox_per_step * kVoxel / 0.01;
  v.birth_t = birth;
  v.death_t = death;
  v.wake_speed = 0.8;
  return v;
}

}  // namespace

SceneSpec desk() {
  auto s = base(50);
  s.voids = {vox_void(10, 11, 6, 6, 0.25, 0, 49), vox_void(10, 32, 6, 6, 0.25, 0, 49),
             vox_void(10, 53, 6, 6, 0.25, 0, 49), vox_void(27, 21.5, 6, 6, 0.25, 0, 49),
             vox_void(27, 42.5, 6, 6, 0.25, 0, 49)};
  return s;
}

SceneSpec rising() {
  auto s = base(40);
  s.voids = {vox_void(12, 32, 8, 8, 0.5, 0, 39)};
  return s;
}

SceneSpec growing() {
  auto s = base(40);
  auto v = vox_void(10, 32, 4, 4, 0.2, 0, 39);
  v.growth_rate = 0.025;
  v.speed_exponent = 3.0;
  s.voids = {v};
  return s;
}

SceneSpec merge() {
  auto s = base(20);
  // upper void slow, lower void fast; the gap between them is 1.5 voxels at step 6 and they
  // overlap by 1.5 voxels at step 7; the fast one dissolves into the slow one after step 8
  auto upper = vox_void(35, 32, 6, 6, 0.25, 0, 19);
  auto lower = vox_void(5.5, 32, 5, 5, 3.25, 0, 8);
  s.voids = {upper, lower};
  return s;
}

SceneSpec split() {
  auto s = base(20);
  auto v = vox_void(16, 32, 6, 11, 0.25, 0, 19);
  v.split_t = 10;
  v.split_wall = 4 * kVoxel;
  s.voids = {v};
  return s;
}

SceneSpec empty_bed() {
  auto s = base(1);
  return s;
}

SceneSpec by_name(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "rising") return rising();
  if (name == "growing") return growing();
  if (name == "merge") return merge();
  if (name == "split") return split();
  if (name == "empty") return empty_bed();
  throw Error(ErrorCode::InvalidArgument, "unknown scene preset '" + name + "'");
}

}  // namespace presets

}  // namespace bflow::synth
