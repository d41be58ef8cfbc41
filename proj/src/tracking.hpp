#pragma once

// Overlap-based bubble tracking with Dice confidence, merge/split detection and rise velocity.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubbles.hpp"

namespace bflow::tracking {

struct BubbleKey {
  std::int32_t t = 0;
  std::int32_t id = 0;
  auto operator<=>(const BubbleKey&) const = default;
};

struct Match {
  BubbleKey from;
  BubbleKey to;
  double dice = 0.0;
  std::size_t overlap = 0;
  bool low_confidence = false;
};

enum class EventKind { merge, split, birth, death, volume_jump };
const char* event_kind_str(EventKind k);
EventKind event_kind_from_str(const std::string& s);

struct Event {
  EventKind kind = EventKind::birth;
  std::int32_t t = 0;
  std::vector<std::int32_t> participants;
  double detail = 0.0;  // relative volume change for volume_jump

  bool operator==(const Event&) const = default;
};

struct TrackStep {
  std::int32_t t = 0;
  std::int32_t bubble_id = 0;
  std::optional<double> dice_to_previous;  // empty on the first step
  double volume = 0.0;
  Vec3 centroid{};
  double rise_velocity = 0.0;
  bool low_confidence = false;

  bool operator==(const TrackStep&) const = default;
};

struct TrackRecord {
  std::string track_id;
  BubbleKey seed;
  std::vector<TrackStep> steps;  // ascending t
  std::vector<Event> events;
  std::vector<std::string> diagnostics;
};

struct TrackParams {
  double dt = 0.0;                    // simulation time per step index; required
  double low_confidence_dice = 0.2;
  double volume_jump_ratio = 0.25;
};

/// 2|a∩b| / (|a|+|b|); both empty gives 0.
double dice(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);
std::size_t overlap_count(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

/// Best-Dice correspondence for every non-freeboard bubble of `from` among the non-freeboard
/// bubbles of `to`. Ties: larger overlap, then lower id. Bubbles without overlap get no match.
std::vector<Match> match_step(const std::vector<bubbles::BubbleRecord>& from, const std::vector<bubbles::BubbleRecord>& to,
                              double low_confidence_dice = 0.2);

double bubble_rise_velocity(const Vec3& c_prev, const Vec3& c_next, double dt);

/// Read-only per-step bubble catalog.
class BubbleStore {
 public:
  BubbleStore() = default;
  explicit BubbleStore(std::vector<bubbles::StepBubbles> steps);
  static BubbleStore load(const std::string& dir);

  const std::vector<std::int32_t>& times() const { return times_; }
  const bubbles::StepBubbles* step(std::int32_t t) const;
  const bubbles::BubbleRecord* find(BubbleKey key) const;
  std::optional<std::int32_t> next_time(std::int32_t t) const;
  std::optional<std::int32_t> prev_time(std::int32_t t) const;

 private:
  std::map<std::int32_t, bubbles::StepBubbles> steps_;
  std::vector<std::int32_t> times_;
};

std::string track_id_for(BubbleKey seed);
std::optional<BubbleKey> parse_track_id(const std::string& id);

TrackRecord track(BubbleKey seed, const BubbleStore& store, const TrackParams& params);
std::vector<TrackRecord> track_all(std::int32_t t, const BubbleStore& store, const TrackParams& params);
std::vector<Event> detect_events(const TrackRecord& track, const BubbleStore& store, const TrackParams& params);

nlohmann::json track_to_json(const TrackRecord& track);
TrackRecord track_from_json(const nlohmann::json& j);
std::string track_file_name(const std::string& track_id);

}  // namespace bflow::tracking
