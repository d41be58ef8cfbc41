#pragma once

// Bubble extraction from a BSF: threshold, face-connected components, characterization,
// freeboard flagging.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace bflow::bubbles {

inline constexpr double kDefaultThreshold = 0.92;
inline constexpr std::size_t kDefaultMinVoxels = 2;

struct Mask {
  GridSpec spec;
  std::vector<std::uint8_t> bits;

  std::size_t count() const;
};

struct BubbleRecord {
  std::int32_t time_index = 0;
  std::int32_t bubble_id = 0;
  std::vector<std::size_t> voxels;  // ascending linear indices
  double volume = 0.0;
  Vec3 centroid{};
  VoxelBox bbox;
  double aspect_ratio = 0.0;  // width / height, height along the rise axis x
  bool is_freeboard = false;
  double mean_similarity = 0.0;
};

struct ExtractParams {
  double threshold = kDefaultThreshold;
  std::size_t min_voxels = kDefaultMinVoxels;
};

Mask segment(const ScalarGrid& bsf, double threshold);

/// Maximal face-connected components of the set voxels, largest first (ties: lowest first voxel).
std::vector<std::vector<std::size_t>> connected_components(const Mask& mask);

BubbleRecord characterize(const std::vector<std::size_t>& voxels, const GridSpec& spec, const ScalarGrid& bsf,
                          std::int32_t time_index);

/// Flags records whose bbox reaches the last voxel plane along x.
std::vector<BubbleRecord> filter_freeboard(std::vector<BubbleRecord> records, const GridSpec& spec);

/// segment + components + size filter + characterize + freeboard flag; ids are dense in size order.
std::vector<BubbleRecord> extract(const ScalarGrid& bsf, const ExtractParams& params);

/// One time step's extraction result as persisted under bubbles/.
struct StepBubbles {
  std::int32_t time_index = 0;
  GridSpec spec;
  double threshold = kDefaultThreshold;
  std::vector<BubbleRecord> bubbles;
};

std::string bubbles_file_name(int t);
nlohmann::json step_to_json(const StepBubbles& step);
StepBubbles step_from_json(const nlohmann::json& j);
void write_step(const StepBubbles& step, const std::string& path);
StepBubbles read_step(const std::string& path);

nlohmann::json grid_to_json(const GridSpec& spec);
GridSpec grid_from_json(const nlohmann::json& j);

}  // namespace bflow::bubbles
