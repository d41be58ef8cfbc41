#include "bubbleflow/bubbleflow.h"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <new>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "catalog.hpp"
#include "binio.hpp"
#include "common.hpp"
#include "pipeline.hpp"
#include "service.hpp"

using namespace bflow;

struct bf_config {
  pipeline::RunConfig cfg;
};

struct bf_catalog {
  std::vector<catalog::CatalogRow> rows;
  std::vector<catalog::CatalogRow> result;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_report = "{}";

bf_status to_status(ErrorCode code) { return static_cast<bf_status>(static_cast<int>(code)); }

bf_status fail(bf_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class Fn>
bf_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return BF_OK;
  } catch (const Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(BF_INTERNAL, "out of memory");
  } catch (const nlohmann::json::exception& e) {
    return fail(BF_FORMAT, e.what());
  } catch (const std::exception& e) {
    return fail(BF_INTERNAL, e.what());
  }
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out))
    throw Error(ErrorCode::InvalidArgument, key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v, long long lo) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw Error(ErrorCode::InvalidArgument, key + ": expected an integer, got '" + v + "'");
  if (out < lo) throw Error(ErrorCode::InvalidArgument, key + ": must be >= " + std::to_string(lo));
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::InvalidArgument, key + ": expected a boolean, got '" + v + "'");
}

VoxelBox to_box(const std::string& v) {
  static const std::regex re(R"((\d+),(\d+),(\d+):(\d+),(\d+),(\d+))");
  std::smatch m;
  if (!std::regex_match(v, m, re))
    throw Error(ErrorCode::InvalidArgument, "template_box: expected i,j,k:i,j,k, got '" + v + "'");
  VoxelBox b;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = std::stoi(m[1 + a]);
    b.hi[a] = std::stoi(m[4 + a]);
  }
  return b;
}

void set_key(pipeline::RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "out") {
    if (v.empty()) throw Error(ErrorCode::InvalidArgument, "out: empty path");
    c.out_dir = v;
  } else if (key == "scene") {
    synth::presets::by_name(v);  // validates the name
    c.scene = v;
  } else if (key == "scene_file") {
    c.scene_file = v;
  } else if (key == "grid") {
    c.grid = parse_triple(v);
  } else if (key == "gamma") {
    const double g = to_double(key, v);
    if (g < 0.0 || g > 1.0) throw Error(ErrorCode::InvalidArgument, "gamma: must lie in [0, 1]");
    c.slic.gamma = g;
  } else if (key == "cluster") {
    c.slic.cluster_size = parse_triple(v);
  } else if (key == "max_iters") {
    c.slic.max_iters = static_cast<int>(to_int(key, v, 1));
  } else if (key == "threshold") {
    const double t = to_double(key, v);
    if (t < 0.0 || t > 1.0) throw Error(ErrorCode::InvalidArgument, "threshold: must lie in [0, 1]");
    c.threshold = t;
  } else if (key == "min_voxels") {
    c.min_voxels = static_cast<std::size_t>(to_int(key, v, 1));
  } else if (key == "every") {
    c.every = static_cast<int>(to_int(key, v, 1));
  } else if (key == "dt") {
    const double dt = to_double(key, v);
    if (dt <= 0.0) throw Error(ErrorCode::InvalidArgument, "dt: must be positive");
    c.dt = dt;
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(to_int(key, v, 0));
  } else if (key == "steps") {
    c.steps = static_cast<int>(to_int(key, v, 1));
  } else if (key == "particles") {
    c.particles = static_cast<std::uint64_t>(to_int(key, v, 0));
  } else if (key == "ranks") {
    c.ranks = static_cast<int>(to_int(key, v, 1));
  } else if (key == "template_box") {
    c.template_box = to_box(v);
  } else if (key == "template_step") {
    c.template_step = static_cast<int>(to_int(key, v, 0));
  } else if (key == "keep_density") {
    c.keep_density = to_bool(key, v);
  } else if (key == "low_confidence") {
    const double d = to_double(key, v);
    if (d < 0.0 || d > 1.0) throw Error(ErrorCode::InvalidArgument, "low_confidence: must lie in [0, 1]");
    c.low_confidence_dice = d;
  } else if (key == "volume_jump_ratio") {
    const double r = to_double(key, v);
    if (r <= 0.0) throw Error(ErrorCode::InvalidArgument, "volume_jump_ratio: must be positive");
    c.volume_jump_ratio = r;
  } else if (key == "image_scale") {
    c.image_scale = static_cast<int>(to_int(key, v, 1));
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  }
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string url_decode(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() && hex_digit(s[i + 1]) >= 0 && hex_digit(s[i + 2]) >= 0) {
      out += static_cast<char>(hex_digit(s[i + 1]) * 16 + hex_digit(s[i + 2]));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::multimap<std::string, std::string> parse_query_string(const std::string& q) {
  std::multimap<std::string, std::string> out;
  std::size_t i = q.empty() || q[0] != '?' ? 0 : 1;
  while (i < q.size()) {
    auto amp = q.find('&', i);
    if (amp == std::string::npos) amp = q.size();
    const auto part = q.substr(i, amp - i);
    if (!part.empty()) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "query term '" + part + "' has no value");
      out.emplace(url_decode(part.substr(0, eq)), url_decode(part.substr(eq + 1)));
    }
    i = amp + 1;
  }
  return out;
}

}  // namespace

extern "C" {

const char* bf_version(void) { return "1.0.0"; }

const char* bf_status_str(bf_status status) {
  switch (status) {
    case BF_OK: return "ok";
    case BF_INVALID_ARGUMENT: return "invalid argument";
    case BF_INVALID_SCENE: return "invalid scene";
    case BF_OUT_OF_BOUNDS: return "out of bounds";
    case BF_FORMAT: return "format error";
    case BF_SPEC_MISMATCH: return "grid spec mismatch";
    case BF_EMPTY_SAMPLE: return "empty sample";
    case BF_NOT_FOUND: return "not found";
    case BF_IO: return "i/o error";
    case BF_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* bf_last_error(void) { return g_last_error.c_str(); }
const char* bf_last_report(void) { return g_last_report.c_str(); }

bf_status bf_config_create(bf_config** out) {
  if (!out) return fail(BF_INVALID_ARGUMENT, "null output pointer");
  return guarded([&] { *out = new bf_config(); });
}

void bf_config_destroy(bf_config* cfg) { delete cfg; }

bf_status bf_config_set(bf_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(BF_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    auto copy = cfg->cfg;
    set_key(copy, key, value);
    cfg->cfg = std::move(copy);
  });
}

bf_status bf_generate(const bf_config* cfg) {
  if (!cfg) return fail(BF_INVALID_ARGUMENT, "null config");
  return guarded([&] {
    const auto r = pipeline::generate(cfg->cfg);
    g_last_report = nlohmann::json{{"stage", "generate"},
                                   {"scene", cfg->cfg.scene_file.empty() ? cfg->cfg.scene : cfg->cfg.scene_file},
                                   {"steps", r.scene.n_timesteps},
                                   {"particles", r.scene.n_particles},
                                   {"particle_bytes", r.particle_bytes}}
                        .dump();
  });
}

bf_status bf_summarize(const bf_config* cfg) {
  if (!cfg) return fail(BF_INVALID_ARGUMENT, "null config");
  return guarded([&] {
    const auto r = pipeline::summarize(cfg->cfg);
    nlohmann::json slic = nlohmann::json::array();
    std::size_t converged = 0;
    for (const auto& d : r.slic) {
      slic.push_back({{"iterations", d.iterations}, {"converged", d.converged}});
      converged += d.converged ? 1 : 0;
    }
    g_last_report = nlohmann::json{{"stage", "summarize"},
                                   {"steps", r.steps},
                                   {"summary_bytes", r.summary_bytes},
                                   {"particle_bytes", r.particle_bytes},
                                   {"storage_ratio", r.particle_bytes ? double(r.summary_bytes) / double(r.particle_bytes) : 0.0},
                                   {"slic_converged", converged},
                                   {"slic", slic}}
                        .dump();
  });
}

bf_status bf_extract(const bf_config* cfg) {
  if (!cfg) return fail(BF_INVALID_ARGUMENT, "null config");
  return guarded([&] {
    const auto r = pipeline::extract(cfg->cfg);
    nlohmann::json per_step = nlohmann::json::object();
    std::size_t total = 0;
    for (const auto& s : r.steps) {
      per_step[std::to_string(s.time_index)] = s.bubbles.size();
      total += s.bubbles.size();
    }
    g_last_report =
        nlohmann::json{{"stage", "extract"}, {"steps", r.steps.size()}, {"bubbles", total}, {"per_step", per_step}}.dump();
  });
}

bf_status bf_track(const bf_config* cfg) {
  if (!cfg) return fail(BF_INVALID_ARGUMENT, "null config");
  return guarded([&] {
    const auto r = pipeline::track(cfg->cfg);
    std::size_t events = 0;
    for (const auto& t : r.tracks) events += t.events.size();
    g_last_report = nlohmann::json{{"stage", "track"}, {"tracks", r.tracks.size()}, {"events", events}}.dump();
  });
}

bf_status bf_build_catalog(const bf_config* cfg) {
  if (!cfg) return fail(BF_INVALID_ARGUMENT, "null config");
  return guarded([&] {
    const auto r = pipeline::build_catalog(cfg->cfg);
    g_last_report =
        nlohmann::json{{"stage", "catalog"}, {"rows", r.rows}, {"images", r.images}, {"tracks", r.tracks}}.dump();
  });
}

bf_status bf_serve(const bf_config* cfg, const char* host, int port, double duration_s, bf_ready_fn ready, void* user) {
  if (!cfg) return fail(BF_INVALID_ARGUMENT, "null config");
  if (port < 0 || port > 65535) return fail(BF_INVALID_ARGUMENT, "port must lie in [0, 65535]");
  return guarded([&] {
    service::ServeOptions opt;
    opt.run_dir = cfg->cfg.out_dir;
    if (host && *host) opt.host = host;
    opt.port = port;
    opt.duration_s = duration_s;
    if (ready) opt.on_ready = [ready, user](int p) { ready(p, user); };
    service::serve(opt);
  });
}

bf_status bf_catalog_open(const char* run_dir, bf_catalog** out) {
  if (!run_dir || !out) return fail(BF_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const pipeline::RunPaths paths(run_dir);
    if (!std::filesystem::exists(paths.catalog_csv()))
      throw Error(ErrorCode::NotFound, "no catalog.csv under " + paths.root + "; run `catalog` first");
    auto cat = std::make_unique<bf_catalog>();
    cat->rows = catalog::parse_csv(binio::read_text_file(paths.catalog_csv()));
    *out = cat.release();
  });
}

void bf_catalog_close(bf_catalog* cat) { delete cat; }

size_t bf_catalog_size(const bf_catalog* cat) { return cat ? cat->rows.size() : 0; }

bf_status bf_catalog_query(bf_catalog* cat, const char* query, size_t* n_out) {
  if (!cat || !n_out) return fail(BF_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const auto spec = catalog::query_from_params(parse_query_string(query ? query : ""));
    cat->result = catalog::query(cat->rows, spec);
    *n_out = cat->result.size();
  });
}

bf_status bf_catalog_row(const bf_catalog* cat, size_t i, bf_row* out) {
  if (!cat || !out) return fail(BF_INVALID_ARGUMENT, "null argument");
  if (i >= cat->result.size()) return fail(BF_OUT_OF_BOUNDS, "row index past the last query result");
  const auto& r = cat->result[i];
  *out = bf_row{r.time_index, r.bubble_id,     r.volume,          r.x_center,         r.y_center,
                r.z_center,   r.aspect_ratio,  r.mean_similarity, r.is_freeboard ? 1 : 0, r.image_path.c_str()};
  g_last_error.clear();
  return BF_OK;
}

}  // extern "C"
