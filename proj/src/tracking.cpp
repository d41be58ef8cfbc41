#include "tracking.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <regex>

#include <fmt/format.h>

namespace bflow::tracking {

namespace {

struct Candidate {
  std::int32_t id;
  std::size_t overlap;
  double dice;
};

std::vector<std::size_t> sorted_copy(const std::vector<std::size_t>& v) {
  if (std::is_sorted(v.begin(), v.end())) return v;
  auto s = v;
  std::sort(s.begin(), s.end());
  return s;
}

std::size_t sorted_overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

// Best candidate for `a` among the non-freeboard bubbles of `to`.
std::optional<Candidate> best_candidate(const bubbles::BubbleRecord& a, const std::vector<bubbles::BubbleRecord>& to) {
  std::optional<Candidate> best;
  for (const auto& b : to) {
    if (b.is_freeboard) continue;
    const auto ov = sorted_overlap(a.voxels, b.voxels);
    if (ov == 0) continue;
    const double d = 2.0 * static_cast<double>(ov) / static_cast<double>(a.voxels.size() + b.voxels.size());
    const Candidate c{b.bubble_id, ov, d};
    if (!best || c.dice > best->dice || (c.dice == best->dice && (c.overlap > best->overlap ||
                                                                  (c.overlap == best->overlap && c.id < best->id))))
      best = c;
  }
  return best;
}

}  // namespace

const char* event_kind_str(EventKind k) {
  switch (k) {
    case EventKind::merge: return "merge";
    case EventKind::split: return "split";
    case EventKind::birth: return "birth";
    case EventKind::death: return "death";
    case EventKind::volume_jump: return "volume_jump";
  }
  return "unknown";
}

EventKind event_kind_from_str(const std::string& s) {
  for (auto k : {EventKind::merge, EventKind::split, EventKind::birth, EventKind::death, EventKind::volume_jump})
    if (s == event_kind_str(k)) return k;
  throw Error(ErrorCode::Format, "unknown event kind '" + s + "'");
}

std::size_t overlap_count(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  return sorted_overlap(sorted_copy(a), sorted_copy(b));
}

double dice(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  return 2.0 * static_cast<double>(overlap_count(a, b)) / static_cast<double>(a.size() + b.size());
}

std::vector<Match> match_step(const std::vector<bubbles::BubbleRecord>& from, const std::vector<bubbles::BubbleRecord>& to,
                              double low_confidence_dice) {
  std::vector<Match> out;
  for (const auto& a : from) {
    if (a.is_freeboard) continue;
    const auto best = best_candidate(a, to);
    if (!best) continue;
    const std::int32_t to_t = to.empty() ? a.time_index : to.front().time_index;
    out.push_back({{a.time_index, a.bubble_id}, {to_t, best->id}, best->dice, best->overlap, best->dice < low_confidence_dice});
  }
  return out;
}

double bubble_rise_velocity(const Vec3& c_prev, const Vec3& c_next, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be > 0");
  return (c_next[0] - c_prev[0]) / dt;
}

BubbleStore::BubbleStore(std::vector<bubbles::StepBubbles> steps) {
  for (auto& s : steps) {
    const auto t = s.time_index;
    if (!steps_.emplace(t, std::move(s)).second) throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate step {}", t));
  }
  for (const auto& [t, s] : steps_) times_.push_back(t);
}

BubbleStore BubbleStore::load(const std::string& dir) {
  static const std::regex re(R"(bubbles_t(\d{6})\.json)");
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::NotFound, "bubble store '" + dir + "' does not exist");
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (std::regex_match(name, re)) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<bubbles::StepBubbles> steps;
  for (const auto& f : files) steps.push_back(bubbles::read_step(f));
  return BubbleStore(std::move(steps));
}

const bubbles::StepBubbles* BubbleStore::step(std::int32_t t) const {
  const auto it = steps_.find(t);
  return it == steps_.end() ? nullptr : &it->second;
}

const bubbles::BubbleRecord* BubbleStore::find(BubbleKey key) const {
  const auto* s = step(key.t);
  if (!s) return nullptr;
  for (const auto& b : s->bubbles)
    if (b.bubble_id == key.id) return &b;
  return nullptr;
}

std::optional<std::int32_t> BubbleStore::next_time(std::int32_t t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.end()) return std::nullopt;
  return *it;
}

std::optional<std::int32_t> BubbleStore::prev_time(std::int32_t t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return std::nullopt;
  return *std::prev(it);
}

std::string track_id_for(BubbleKey seed) { return fmt::format("t{:06}_b{:04}", seed.t, seed.id); }

std::optional<BubbleKey> parse_track_id(const std::string& id) {
  static const std::regex re(R"(t(\d{1,9})_b(\d{1,9}))");
  std::smatch m;
  if (!std::regex_match(id, m, re)) return std::nullopt;
  return BubbleKey{std::stoi(m[1]), std::stoi(m[2])};
}

TrackRecord track(BubbleKey seed, const BubbleStore& store, const TrackParams& params) {
  if (!(params.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be > 0");
  const auto* seed_rec = store.find(seed);
  if (!seed_rec) throw Error(ErrorCode::NotFound, fmt::format("no bubble {} at time step {}", seed.id, seed.t));

  TrackRecord tr;
  tr.track_id = track_id_for(seed);
  tr.seed = seed;

  struct Link {
    const bubbles::BubbleRecord* rec;
    double dice;  // with the neighbor closer to the seed
  };

  const auto follow = [&](bool forward) {
    std::vector<Link> chain;
    const bubbles::BubbleRecord* cur = seed_rec;
    while (true) {
      const auto t = forward ? store.next_time(cur->time_index) : store.prev_time(cur->time_index);
      if (!t) break;
      const auto& next_bubbles = store.step(*t)->bubbles;
      if (cur->is_freeboard) break;
      const auto best = best_candidate(*cur, next_bubbles);
      if (!best) break;
      const auto* nxt = store.find({*t, best->id});
      const auto back = best_candidate(*nxt, store.step(cur->time_index)->bubbles);
      if (!back || back->id != cur->bubble_id)
        tr.diagnostics.push_back(fmt::format("non-mutual best match {} t{} b{} -> t{} b{}", forward ? "forward" : "backward",
                                             cur->time_index, cur->bubble_id, *t, best->id));
      chain.push_back({nxt, best->dice});
      cur = nxt;
    }
    return chain;
  };

  const auto backward = follow(false);
  const auto forward = follow(true);

  const auto make_step = [](const bubbles::BubbleRecord& r) {
    TrackStep s;
    s.t = r.time_index;
    s.bubble_id = r.bubble_id;
    s.volume = r.volume;
    s.centroid = r.centroid;
    return s;
  };

  // backward links hold dice with the later neighbor, so shift them onto that neighbor
  for (auto it = backward.rbegin(); it != backward.rend(); ++it) tr.steps.push_back(make_step(*it->rec));
  tr.steps.push_back(make_step(*seed_rec));
  for (std::size_t i = 0; i < backward.size(); ++i) {
    tr.steps[backward.size() - i].dice_to_previous = backward[i].dice;
  }
  for (const auto& l : forward) {
    tr.steps.push_back(make_step(*l.rec));
    tr.steps.back().dice_to_previous = l.dice;
  }
  for (auto& s : tr.steps) s.low_confidence = s.dice_to_previous && *s.dice_to_previous < params.low_confidence_dice;

  const auto& st = tr.steps;
  if (st.size() >= 2) {
    for (std::size_t i = 0; i < st.size(); ++i) {
      // central difference inside the track, one-sided at its ends
      const std::size_t a = i == 0 ? 0 : i - 1;
      const std::size_t b = i + 1 == st.size() ? i : i + 1;
      tr.steps[i].rise_velocity = bubble_rise_velocity(st[a].centroid, st[b].centroid, (st[b].t - st[a].t) * params.dt);
    }
  }

  tr.events = detect_events(tr, store, params);
  return tr;
}

std::vector<TrackRecord> track_all(std::int32_t t, const BubbleStore& store, const TrackParams& params) {
  std::vector<TrackRecord> out;
  const auto* s = store.step(t);
  if (!s) return out;
  std::vector<std::int32_t> ids;
  for (const auto& b : s->bubbles)
    if (!b.is_freeboard) ids.push_back(b.bubble_id);
  std::sort(ids.begin(), ids.end());
  for (auto id : ids) out.push_back(track({t, id}, store, params));
  return out;
}

std::vector<Event> detect_events(const TrackRecord& tr, const BubbleStore& store, const TrackParams& params) {
  std::vector<Event> events;
  if (tr.steps.empty()) return events;
  events.push_back({EventKind::birth, tr.steps.front().t, {tr.steps.front().bubble_id}, 0.0});
  for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) {
    const auto& s0 = tr.steps[i];
    const auto& s1 = tr.steps[i + 1];
    const auto* step0 = store.step(s0.t);
    const auto* step1 = store.step(s1.t);
    const auto* b0 = store.find({s0.t, s0.bubble_id});
    if (!step0 || !step1 || !b0) throw Error(ErrorCode::NotFound, "track refers to bubbles missing from the store");

    std::vector<std::int32_t> sources;
    for (const auto& m : match_step(step0->bubbles, step1->bubbles, params.low_confidence_dice))
      if (m.to.id == s1.bubble_id) sources.push_back(m.from.id);
    if (sources.size() >= 2) {
      std::sort(sources.begin(), sources.end());
      events.push_back({EventKind::merge, s1.t, sources, 0.0});
    }

    std::vector<std::int32_t> targets;
    for (const auto& b : step1->bubbles)
      if (!b.is_freeboard && sorted_overlap(b0->voxels, b.voxels) > 0) targets.push_back(b.bubble_id);
    if (targets.size() >= 2) {
      std::sort(targets.begin(), targets.end());
      events.push_back({EventKind::split, s1.t, targets, 0.0});
    }

    const double rel = (s1.volume - s0.volume) / s0.volume;
    if (std::abs(rel) >= params.volume_jump_ratio) events.push_back({EventKind::volume_jump, s1.t, {s1.bubble_id}, rel});
  }
  events.push_back({EventKind::death, tr.steps.back().t, {tr.steps.back().bubble_id}, 0.0});
  return events;
}

nlohmann::json track_to_json(const TrackRecord& tr) {
  using nlohmann::json;
  json steps = json::array();
  for (const auto& s : tr.steps) {
    steps.push_back({{"t", s.t},
                     {"bubble_id", s.bubble_id},
                     {"dice", s.dice_to_previous ? json(*s.dice_to_previous) : json(nullptr)},
                     {"volume", s.volume},
                     {"centroid", s.centroid},
                     {"rise_velocity", s.rise_velocity},
                     {"low_confidence", s.low_confidence}});
  }
  json events = json::array();
  for (const auto& e : tr.events)
    events.push_back({{"kind", event_kind_str(e.kind)}, {"t", e.t}, {"participants", e.participants}, {"detail", e.detail}});
  return {{"track_id", tr.track_id},
          {"seed", {{"t", tr.seed.t}, {"id", tr.seed.id}}},
          {"steps", steps},
          {"events", events},
          {"diagnostics", tr.diagnostics}};
}

TrackRecord track_from_json(const nlohmann::json& j) {
  try {
    TrackRecord tr;
    tr.track_id = j.at("track_id").get<std::string>();
    tr.seed = {j.at("seed").at("t").get<std::int32_t>(), j.at("seed").at("id").get<std::int32_t>()};
    for (const auto& js : j.at("steps")) {
      TrackStep s;
      s.t = js.at("t").get<std::int32_t>();
      s.bubble_id = js.at("bubble_id").get<std::int32_t>();
      if (!js.at("dice").is_null()) s.dice_to_previous = js.at("dice").get<double>();
      s.volume = js.at("volume").get<double>();
      s.centroid = js.at("centroid").get<Vec3>();
      s.rise_velocity = js.at("rise_velocity").get<double>();
      s.low_confidence = js.at("low_confidence").get<bool>();
      tr.steps.push_back(s);
    }
    for (const auto& je : j.at("events")) {
      tr.events.push_back({event_kind_from_str(je.at("kind").get<std::string>()), je.at("t").get<std::int32_t>(),
                           je.at("participants").get<std::vector<std::int32_t>>(), je.at("detail").get<double>()});
    }
    tr.diagnostics = j.value("diagnostics", std::vector<std::string>{});
    return tr;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("track json: ") + e.what());
  }
}

std::string track_file_name(const std::string& track_id) { return "track_" + track_id + ".json"; }

}  // namespace bflow::tracking
