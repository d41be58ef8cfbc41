// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <httplib.h>

#include "binio.hpp"
#include "bubbles.hpp"
#include "fields.hpp"
#include "pipeline.hpp"
#include "similarity.hpp"
#include "slic.hpp"
#include "synth.hpp"
#include "tracking.hpp"

#ifndef BFLOW_CLI
#error "BFLOW_CLI must name the bflow executable"
#endif

using namespace bflow;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch_root() {
  static const fs::path root = [] {
    std::random_device rd;
    auto p = fs::temp_directory_path() / fmt::format("bflow_accept_{:08x}", rd());
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// Runs the stages up to extract for a preset and returns the config used.
pipeline::RunConfig run_scene(const std::string& preset, bool with_tracks) {
  pipeline::RunConfig cfg;
  cfg.scene = preset;
  cfg.out_dir = (scratch_root() / preset).string();
  pipeline::generate(cfg);
  pipeline::summarize(cfg);
  pipeline::extract(cfg);
  if (with_tracks) pipeline::track(cfg);
  return cfg;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto a = average_ranks(x), b = average_ranks(y);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Voxels whose centers lie inside the void at its state for step t.
std::vector<std::size_t> void_voxels(const synth::VoidState& st, const GridSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < spec.size(); ++v)
    if (st.contains(spec.voxel_center(v))) out.push_back(v);
  return out;
}

const tracking::TrackRecord* longest_track(const std::vector<tracking::TrackRecord>& tracks) {
  const tracking::TrackRecord* best = nullptr;
  for (const auto& t : tracks)
    if (!best || t.steps.size() > best->steps.size()) best = &t;
  return best;
}

// Events that several tracks share are one structural event.
std::set<std::tuple<tracking::EventKind, std::int32_t, std::vector<std::int32_t>>> distinct_events(
    const std::vector<tracking::TrackRecord>& tracks, tracking::EventKind kind) {
  std::set<std::tuple<tracking::EventKind, std::int32_t, std::vector<std::int32_t>>> out;
  for (const auto& t : tracks)
    for (const auto& e : t.events)
      if (e.kind == kind) {
        auto p = e.participants;
        std::sort(p.begin(), p.end());
        out.insert({e.kind, e.t, p});
      }
  return out;
}

// ---------------------------------------------------------------------------------------------

Outcome reduction_equivalence() {
  const auto t0 = Clock::now();
  const auto scene = synth::presets::desk();
  const auto spec = GridSpec::from_bounds(scene.domain_bounds, pipeline::kDeskDims);
  const auto all = synth::concat(synth::generate(scene, 0));
  const auto serial = fields::bin_particles(all, spec);
  const auto d0 = fields::finalize_density(serial), p0 = fields::finalize_pvf(serial);
  bool same = true;
  for (int k : {1, 2, 4, 8, 16}) {
    const auto h = fields::bin_and_reduce(synth::chunk(all, k, scene.domain_bounds), spec);
    const auto d = fields::finalize_density(h), p = fields::finalize_pvf(h);
    // bitwise comparison of the doubles
    same = same && d.values.size() == d0.values.size() && p.values.size() == p0.values.size() &&
           std::memcmp(d.values.data(), d0.values.data(), d.values.size() * sizeof(double)) == 0 &&
           std::memcmp(p.values.data(), p0.values.data(), p.values.size() * sizeof(double)) == 0;
  }
  const double secs = seconds_since(t0);
  return {same && all.size() == 100000 && secs < 5.0,
          fmt::format("{} particles, k in {{1,2,4,8,16}} bit-identical={}, {:.2f}s", all.size(), same, secs)};
}

// -ln of the Bhattacharyya coefficient by composite Simpson over +-12 sigma of both Gaussians.
double quadrature_distance(double m1, double v1, double m2, double v2) {
  const long double s1 = std::sqrt(static_cast<long double>(v1)), s2 = std::sqrt(static_cast<long double>(v2));
  const long double lo = std::min(m1 - 12 * s1, m2 - 12 * s2), hi = std::max(m1 + 12 * s1, m2 + 12 * s2);
  const int n = 400000;
  const long double h = (hi - lo) / n, pi = std::acos(-1.0L);
  auto f = [&](long double x) {
    const long double p1 = std::exp(-(x - m1) * (x - m1) / (2 * v1)) / std::sqrt(2 * pi * v1);
    const long double p2 = std::exp(-(x - m2) * (x - m2) / (2 * v2)) / std::sqrt(2 * pi * v2);
    return std::sqrt(p1 * p2);
  };
  long double sum = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) sum += f(lo + i * h) * (i % 2 ? 4 : 2);
  return static_cast<double>(-std::log(sum * h / 3));
}

Outcome bhattacharyya_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(505);
  std::uniform_real_distribution<double> mean(-3.0, 3.0), var(0.05, 4.0);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double m1 = mean(gen), v1 = var(gen), m2 = mean(gen), v2 = var(gen);
    const double got = similarity::bhattacharyya({m1, v1, 1}, {m2, v2, 1});
    worst = std::max(worst, std::abs(got - quadrature_distance(m1, v1, m2, v2)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 5.0, fmt::format("50 pairs, max |error| {:.2e}, {:.2f}s", worst, secs)};
}

Outcome dice_oracle() {
  std::mt19937_64 gen(606);
  const std::size_t universe = 64 * 8 * 64;
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    // sets drawn around a common center so overlaps range from none to full
    const std::size_t na = 1 + gen() % 300, nb = 1 + gen() % 300, base = gen() % (universe - 600);
    std::set<std::size_t> a, b;
    while (a.size() < na) a.insert(base + gen() % 600);
    while (b.size() < nb) b.insert(base + gen() % 600);
    std::size_t both = 0;
    for (std::size_t v = 0; v < universe; ++v) both += a.count(v) && b.count(v);
    const double expect = 2.0 * static_cast<double>(both) / static_cast<double>(a.size() + b.size());
    const double got = tracking::dice({a.begin(), a.end()}, {b.begin(), b.end()});
    mismatches += got != expect;
  }
  return {mismatches == 0, fmt::format("200 pairs, {} mismatches", mismatches)};
}

struct DeskRun {
  pipeline::RunConfig cfg;
  pipeline::SummarizeResult summary;
  pipeline::ExtractResult extracted;
  double seconds = 0.0;
};

const DeskRun& desk_run() {
  static const DeskRun run = [] {
    DeskRun r;
    r.cfg.scene = "desk";
    r.cfg.out_dir = (scratch_root() / "desk").string();
    const auto t0 = Clock::now();
    pipeline::generate(r.cfg);
    r.summary = pipeline::summarize(r.cfg);
    r.extracted = pipeline::extract(r.cfg);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome bubble_recovery() {
  const auto& run = desk_run();
  const auto scene = pipeline::resolve_scene(run.cfg);
  int injected = 0, recovered = 0, false_bubbles = 0, freeboard_ok = 0;
  double worst_centroid = 0.0;
  for (const auto& step : run.extracted.steps) {
    const auto& spec = step.spec;
    const double diag = std::sqrt(spec.spacing[0] * spec.spacing[0] + spec.spacing[1] * spec.spacing[1] +
                                  spec.spacing[2] * spec.spacing[2]);
    std::vector<int> claimed(step.bubbles.size(), 0);
    for (const auto& v : scene.voids) {
      const auto st = synth::void_state(v, step.time_index, scene.timestep_dt);
      if (!st.active) continue;
      ++injected;
      const auto inside = void_voxels(st, spec);
      std::vector<std::size_t> hits;
      for (std::size_t b = 0; b < step.bubbles.size(); ++b) {
        const auto& rec = step.bubbles[b];
        if (rec.is_freeboard || tracking::overlap_count(rec.voxels, inside) == 0) continue;
        hits.push_back(b);
        claimed[b] = 1;
      }
      if (hits.size() != 1) continue;
      const auto& c = step.bubbles[hits[0]].centroid;
      const double err = std::hypot(c[0] - st.center[0], c[1] - st.center[1], c[2] - st.center[2]);
      worst_centroid = std::max(worst_centroid, err / diag);
      recovered += err <= diag;
    }
    int flagged = 0;
    for (std::size_t b = 0; b < step.bubbles.size(); ++b) {
      const auto& rec = step.bubbles[b];
      if (rec.is_freeboard) {
        flagged += rec.bbox.hi[0] == spec.dims[0] - 1;
        continue;
      }
      false_bubbles += !claimed[b];
    }
    freeboard_ok += flagged == 1;
  }
  const double rate = injected ? static_cast<double>(recovered) / injected : 0.0;
  const bool pass = rate >= 0.9 && false_bubbles == 0 &&
                    freeboard_ok == static_cast<int>(run.extracted.steps.size()) && run.seconds < 60.0;
  return {pass, fmt::format("{} steps: recovered {}/{} ({:.1f}%), worst centroid error {:.2f} voxel diagonals, "
                            "{} false bubbles, freeboard flagged in {} steps, {:.1f}s",
                            run.extracted.steps.size(), recovered, injected, 100 * rate, worst_centroid,
                            false_bubbles, freeboard_ok, run.seconds)};
}

Outcome tracking_fidelity() {
  const auto cfg = run_scene("rising", false);
  const auto scene = pipeline::resolve_scene(cfg);
  const auto tracks = pipeline::track(cfg).tracks;
  const auto* tr = longest_track(tracks);
  if (!tr) return {false, "no track on the rising scene"};
  const auto& v = scene.voids.at(0);
  const int lifespan = v.death_t - v.birth_t + 1;
  double min_dice = 1.0, sum_v = 0.0;
  for (const auto& s : tr->steps) {
    if (s.dice_to_previous) min_dice = std::min(min_dice, *s.dice_to_previous);
    sum_v += s.rise_velocity;
  }
  const double mean_v = sum_v / static_cast<double>(tr->steps.size());
  const double rel = std::abs(mean_v - v.rise_velocity) / v.rise_velocity;
  const bool rising_ok = static_cast<int>(tr->steps.size()) == lifespan && min_dice > 0.3 && rel <= 0.1;

  const auto gcfg = run_scene("growing", false);
  const auto gtracks = pipeline::track(gcfg).tracks;
  const auto* gt = longest_track(gtracks);
  double rho = 0.0;
  if (gt) {
    std::vector<double> vol, vel;
    for (const auto& s : gt->steps) vol.push_back(s.volume), vel.push_back(s.rise_velocity);
    rho = spearman(vol, vel);
  }
  return {rising_ok && rho > 0.8,
          fmt::format("rising: {}/{} steps, min Dice {:.3f}, mean velocity {:.4f} vs {:.4f} ({:.1f}%); "
                      "growing: {} steps, Spearman {:.3f}",
                      tr->steps.size(), lifespan, min_dice, mean_v, v.rise_velocity, 100 * rel,
                      gt ? gt->steps.size() : 0, rho)};
}

Outcome event_detection() {
  // merge: the contact step is the first step where the two ground-truth voids share a voxel
  const auto mcfg = run_scene("merge", false);
  const auto mscene = pipeline::resolve_scene(mcfg);
  const auto mspec = GridSpec::from_bounds(mscene.domain_bounds, mcfg.grid);
  int contact = -1;
  for (int t = 0; t < mscene.n_timesteps && contact < 0; ++t) {
    const auto a = synth::void_state(mscene.voids[0], t, mscene.timestep_dt);
    const auto b = synth::void_state(mscene.voids[1], t, mscene.timestep_dt);
    if (a.active && b.active && tracking::overlap_count(void_voxels(a, mspec), void_voxels(b, mspec)) > 0) contact = t;
  }
  const auto mtracks = pipeline::track(mcfg).tracks;
  const auto merges = distinct_events(mtracks, tracking::EventKind::merge);
  bool jump_at_contact = false;
  for (const auto& tr : mtracks)
    for (const auto& e : tr.events)
      jump_at_contact = jump_at_contact || (e.kind == tracking::EventKind::volume_jump && e.t == contact && e.detail > 0);
  const bool merge_ok = merges.size() == 1 && std::get<1>(*merges.begin()) == contact && jump_at_contact;

  const auto scfg = run_scene("split", false);
  const auto sscene = pipeline::resolve_scene(scfg);
  const auto splits = distinct_events(pipeline::track(scfg).tracks, tracking::EventKind::split);
  const int split_t = sscene.voids.at(0).split_t;
  const bool split_ok = splits.size() == 1 && std::get<1>(*splits.begin()) == split_t;

  // constant-volume scene: births and deaths only, at the track ends
  const auto rcfg = run_scene("rising", false);
  int spurious = 0;
  for (const auto& tr : pipeline::track(rcfg).tracks)
    for (const auto& e : tr.events)
      spurious += e.kind != tracking::EventKind::birth && e.kind != tracking::EventKind::death;

  const auto ts = [](const auto& evs) {
    std::vector<int> t;
    for (const auto& e : evs) t.push_back(std::get<1>(e));
    return t;
  };
  return {merge_ok && split_ok && spurious == 0,
          fmt::format("merge events at {} (contact {}), volume_jump at contact {}; split events at {} (wall at {}); "
                      "{} spurious events on the constant-volume scene",
                      ts(merges), contact, jump_at_contact, ts(splits), split_t, spurious)};
}

Outcome storage_reduction() {
  const auto& run = desk_run();
  const auto n = static_cast<double>(run.summary.steps.size());
  const double per_summary = static_cast<double>(run.summary.summary_bytes) / n;
  const double per_raw = static_cast<double>(run.summary.particle_bytes) / n;
  const double ratio = per_summary / per_raw;
  return {ratio <= 0.05, fmt::format("{:.0f} summary bytes vs {:.0f} particle bytes per step: {:.2f}% (limit 5%)",
                                     per_summary, per_raw, 100 * ratio)};
}

int run_cli(const std::string& args) {
  const int rc = std::system(fmt::format("\"{}\" {} >/dev/null 2>&1", BFLOW_CLI, args).c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome post_hoc_independence() {
  const std::string dir = (scratch_root() / "cli").string();
  const std::string out = "--out \"" + dir + "\" --steps 4";
  std::vector<std::string> problems;
  for (const char* stage : {"generate", "summarize", "extract", "track", "catalog"})
    if (const int rc = run_cli(fmt::format("{} {}", stage, out)); rc != 0)
      problems.push_back(fmt::format("{} exit {}", stage, rc));
  const pipeline::RunPaths paths(dir);
  const auto before = fs::exists(paths.catalog_csv()) ? binio::read_text_file(paths.catalog_csv()) : "";
  fs::remove_all(paths.particles());

  for (const char* stage : {"extract", "track", "catalog"})
    if (const int rc = run_cli(fmt::format("{} {}", stage, out)); rc != 0)
      problems.push_back(fmt::format("post hoc {} exit {}", stage, rc));
  const auto after = fs::exists(paths.catalog_csv()) ? binio::read_text_file(paths.catalog_csv()) : "";
  const bool identical = !before.empty() && before == after;

  // serve on an ephemeral port and query it
  int serve_rc = -1, served = 0;
  const std::string cmd = fmt::format("\"{}\" serve {} --port 0 --duration 3 2>&1", BFLOW_CLI, out);
  if (FILE* p = popen(cmd.c_str(), "r")) {
    char line[256] = {};
    int port = 0;
    if (std::fgets(line, sizeof line, p)) {
      std::smatch m;
      const std::string s(line);
      if (std::regex_search(s, m, std::regex(R"(:(\d+)\s*$)"))) port = std::stoi(m[1]);
    }
    if (port > 0) {
      httplib::Client cli("127.0.0.1", port);
      for (const char* path : {"/api/meta", "/api/bubbles?t0=1", "/api/tracks_all/0"})
        if (auto r = cli.Get(path); r && r->status == 200) ++served;
      if (auto r = cli.Post("/api/tracks", R"({"t":0,"id":1})", "application/json"); r && r->status == 200) ++served;
    }
    while (std::fgets(line, sizeof line, p)) {
    }
    const int rc = pclose(p);
    serve_rc = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
  if (serve_rc != 0) problems.push_back(fmt::format("serve exit {}", serve_rc));
  if (served != 4) problems.push_back(fmt::format("{}/4 requests served", served));
  if (!identical) problems.push_back("catalog.csv changed");
  return {problems.empty(), problems.empty() ? fmt::format("particles deleted; extract/track/catalog/serve exit 0, "
                                                           "catalog.csv identical ({} bytes), 4/4 requests served",
                                                           after.size())
                                             : fmt::format("{}", fmt::join(problems, "; "))};
}

Outcome slic_properties() {
  const auto& run = desk_run();
  const auto scene = pipeline::resolve_scene(run.cfg);
  const auto spec = GridSpec::from_bounds(scene.domain_bounds, run.cfg.grid);
  int total = 0, connected = 0, deterministic = 0, converged = 0;
  std::size_t worst_tail = 0;
  const int n = static_cast<int>(run.summary.steps.size());
  for (int t : run.summary.steps) {
    const auto density = fields::finalize_density(fields::bin_and_reduce(synth::generate(scene, t), spec), t);
    slic::SlicDiagnostics d1, d2;
    const auto a = slic::slic_partition(density, run.cfg.slic, &d1);
    const auto b = slic::slic_partition(density, run.cfg.slic, &d2);
    deterministic += a.labels == b.labels && a.labels.size() == spec.size();
    std::vector<int> used(a.n_clusters(), 0);
    bool in_range = a.labels.size() == spec.size();
    for (auto l : a.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= used.size()) {
        in_range = false;
        break;
      }
      used[static_cast<std::size_t>(l)] = 1;
    }
    total += in_range && std::all_of(used.begin(), used.end(), [](int u) { return u; });
    connected += slic::labels_are_connected(a);
    converged += d1.converged && d1.iterations <= 10;
    if (!d1.converged && !d1.changes_per_iteration.empty())
      worst_tail = std::max(worst_tail, d1.changes_per_iteration.back());
  }
  const bool pass = total == n && connected == n && deterministic == n && converged == n;
  std::string detail = fmt::format("{} desk fields: total {}, 6-connected {}, deterministic {}, converged within 10 "
                                   "iterations {}",
                                   n, total, connected, deterministic, converged);
  if (converged != n) detail += fmt::format(" (largest final-iteration change count {} voxels)", worst_tail);
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 reduction equivalence", reduction_equivalence},
      {"2 bhattacharyya oracle", bhattacharyya_oracle},
      {"3 dice oracle", dice_oracle},
      {"4 bubble recovery", bubble_recovery},
      {"5 tracking fidelity", tracking_fidelity},
      {"6 event detection", event_detection},
      {"7 storage reduction", storage_reduction},
      {"8 post hoc independence", post_hoc_independence},
      {"9 slic properties", slic_properties},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.pass;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
