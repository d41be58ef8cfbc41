#pragma once

// Deterministic synthetic fluidized-bed particles with ground-truth voids.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace bflow::synth {

/// An ellipsoidal void rising along +x. The optional growth and split fields drive the
/// growing-bubble and bisected-bubble scenes.
struct VoidSpec {
  Vec3 center_at_t0{0.0, 0.0, 0.0};
  Vec3 radii{1.0, 1.0, 1.0};
  double rise_velocity = 0.0;
  int birth_t = 0;
  int death_t = 0;
  double wake_speed = 0.0;

  double growth_rate = 0.0;  // fractional growth of the x/z semi-axes per step after birth
  double speed_exponent = 1.0;  // rise speed scales with (semi-axis growth)^exponent
  int split_t = -1;          // from this step on a particle wall normal to z bisects the void
  double split_wall = 0.0;   // wall thickness

  bool active(int t) const { return t >= birth_t && t <= death_t; }
};

struct VoidState {
  Vec3 center{};
  Vec3 radii{};
  bool active = false;
  bool split = false;
  double split_wall = 0.0;

  /// Normalized ellipsoid radius squared; < 1 inside.
  double normalized_r2(const Vec3& p) const;
  bool contains(const Vec3& p) const;
};

struct SceneSpec {
  Box3 domain_bounds;
  std::uint64_t n_particles = 0;
  std::vector<VoidSpec> voids;
  Vec3 background_velocity{0.0, 0.0, 0.0};
  double timestep_dt = 1.0;
  int n_timesteps = 1;
  std::uint64_t rng_seed = 0;
  double bed_fraction = 0.8;  // particles fill the lower part of the x-extent; the rest is freeboard
};

struct ParticleChunk {
  int rank = 0;
  std::int32_t time_index = 0;
  std::vector<Vec3f> positions;
  std::vector<Vec3f> velocities;

  std::size_t size() const { return positions.size(); }
  bool operator==(const ParticleChunk&) const = default;
};

void validate(const SceneSpec& scene);

VoidState void_state(const VoidSpec& v, int t, double dt);

/// Particles for step t, split into n_ranks x-slabs. Pure function of (scene, t, n_ranks).
std::vector<ParticleChunk> generate(const SceneSpec& scene, int t, int n_ranks = 1);

/// Disjoint x-slab partition of `all`; slab s holds x in [min + s*w, min + (s+1)*w), the last
/// slab also takes x == max. Input order is preserved inside each slab.
std::vector<ParticleChunk> chunk(const ParticleChunk& all, int k, const Box3& bounds);

/// Concatenates chunks in rank order.
ParticleChunk concat(const std::vector<ParticleChunk>& chunks);

// Particle files ("BBLP").
std::vector<std::uint8_t> encode_particles(const ParticleChunk& chunk);
ParticleChunk decode_particles(const std::vector<std::uint8_t>& bytes, const std::string& source);
std::string particle_file_name(int t, int rank);
void write_particle_file(const ParticleChunk& chunk, const std::string& path);
ParticleChunk read_particle_file(const std::string& path, int rank = 0);
/// Writes one file per chunk into dir. An empty list still writes an empty rank-0 file for step t.
void write_particles(const std::vector<ParticleChunk>& chunks, const std::string& dir, int t);
/// Reads every rank file of step t in dir, ordered by rank.
std::vector<ParticleChunk> read_particles(const std::string& dir, int t);
/// Time steps that have at least one particle file in dir.
std::vector<int> particle_steps(const std::string& dir);

// scene.json
nlohmann::json scene_to_json(const SceneSpec& scene, bool with_trajectories = true);
SceneSpec scene_from_json(const nlohmann::json& j);
void write_scene(const SceneSpec& scene, const std::string& path);
SceneSpec read_scene(const std::string& path);

// Built-in scenes on a 0.64 x 0.08 x 0.64 domain (64x8x64 voxels of 0.01).
namespace presets {
constexpr double kVoxel = 0.01;
SceneSpec desk();        // five rising voids, 50 steps
SceneSpec rising();      // one void at constant velocity, 40-step lifespan
SceneSpec growing();     // one void whose size and speed increase together
SceneSpec merge();       // a fast void catches a slower one
SceneSpec split();       // one void bisected by a particle wall
SceneSpec empty_bed();   // no voids
SceneSpec by_name(const std::string& name);
}  // namespace presets

}  // namespace bflow::synth
