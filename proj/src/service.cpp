#include "service.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "binio.hpp"
#include "fields.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;

namespace bflow::service {

namespace {

Response json_response(const nlohmann::json& j, int status = 200) { return {status, "application/json", j.dump()}; }

Response error_response(int status, const std::string& msg) { return json_response({{"error", msg}}, status); }

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::OutOfBounds:
      return 400;
    case ErrorCode::NotFound:
      return 404;
    default:
      return 500;
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    const auto j = path.find('/', i);
    const auto end = j == std::string::npos ? path.size() : j;
    if (end > i) parts.push_back(path.substr(i, end - i));
    i = end + 1;
  }
  return parts;
}

std::optional<std::int32_t> parse_int(const std::string& s) {
  std::int32_t v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
  return v;
}

}  // namespace

CatalogService::CatalogService(std::string run_dir) : run_dir_(std::move(run_dir)) {}

std::shared_ptr<const CatalogService::Loaded> CatalogService::load() {
  std::lock_guard lock(load_mutex_);
  if (loaded_) return loaded_;
  const pipeline::RunPaths paths(run_dir_);
  if (!fs::exists(paths.catalog_csv()) || !fs::exists(paths.meta_json()))
    throw Error(ErrorCode::NotFound, fmt::format("no catalog under {}; run `catalog` first", run_dir_));
  auto s = std::make_shared<Loaded>();
  try {
    s->meta = nlohmann::json::parse(binio::read_text_file(paths.meta_json()));
    s->params.dt = s->meta.at("dt").get<double>();
    s->params.low_confidence_dice = s->meta.value("low_confidence_dice", 0.2);
    s->params.volume_jump_ratio = s->meta.value("volume_jump_ratio", 0.25);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, paths.meta_json() + ": " + e.what());
  }
  s->rows = catalog::parse_csv(binio::read_text_file(paths.catalog_csv()));
  s->store = tracking::BubbleStore::load(paths.bubbles());
  loaded_ = s;
  return loaded_;
}

Response CatalogService::handle(const Request& req) {
  const auto parts = split_path(req.path);
  try {
    if (req.method == "GET" && parts.size() == 2 && parts[0] == "images") return image(parts[1]);
    if (parts.empty() || parts[0] != "api") return error_response(404, "no route for " + req.path);

    std::shared_ptr<const Loaded> s;
    try {
      s = load();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) return error_response(409, e.what());
      throw;
    }

    const auto n = parts.size();
    if (req.method == "GET") {
      if (n == 2 && parts[1] == "meta") return meta(*s);
      if (n == 2 && parts[1] == "bubbles") return bubbles(*s, req);
      if (n == 4 && parts[1] == "bubbles") return bubble(*s, parts[2], parts[3]);
      if (n == 3 && parts[1] == "tracks") return get_track(*s, parts[2]);
      if (n == 3 && parts[1] == "tracks_all") return tracks_all(*s, parts[2]);
      if (n == 5 && parts[1] == "fields" && parts[4] == "projection") return projection(*s, parts[2], parts[3], req);
    } else if (req.method == "POST") {
      if (n == 2 && parts[1] == "tracks") return post_track(*s, req);
    }
    return error_response(404, "no route for " + req.method + " " + req.path);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

Response CatalogService::meta(const Loaded& s) {
  auto j = s.meta;
  j["n_rows"] = s.rows.size();
  return json_response(j);
}

Response CatalogService::bubbles(const Loaded& s, const Request& req) {
  const auto spec = catalog::query_from_params(req.params);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : catalog::query(s.rows, spec)) out.push_back(catalog::row_to_json(r));
  return json_response(out);
}

Response CatalogService::bubble(const Loaded& s, const std::string& ts, const std::string& ids) {
  const auto t = parse_int(ts);
  const auto id = parse_int(ids);
  if (!t || !id) return error_response(400, "time step and bubble id must be integers");
  const auto* rec = s.store.find({*t, *id});
  if (!rec) return error_response(404, fmt::format("no bubble {} at time step {}", *id, *t));
  auto j = catalog::row_to_json(catalog::row_from_bubble(*rec));
  j["bbox"] = {{"lo", rec->bbox.lo}, {"hi", rec->bbox.hi}};
  j["voxel_count"] = rec->voxels.size();
  return json_response(j);
}

const nlohmann::json& CatalogService::cached_track(const Loaded& s, tracking::BubbleKey key) {
  const auto id = tracking::track_id_for(key);
  std::lock_guard lock(track_mutex_);
  auto it = track_cache_.find(id);
  if (it == track_cache_.end())
    it = track_cache_.emplace(id, tracking::track_to_json(tracking::track(key, s.store, s.params))).first;
  return it->second;
}

Response CatalogService::post_track(const Loaded& s, const Request& req) {
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error&) {
    return error_response(400, "body must be JSON {\"t\": T, \"id\": B}");
  }
  if (!body.is_object() || !body.contains("t") || !body.contains("id") || !body["t"].is_number_integer() ||
      !body["id"].is_number_integer())
    return error_response(400, "body must be JSON {\"t\": T, \"id\": B}");
  const tracking::BubbleKey key{body["t"].get<std::int32_t>(), body["id"].get<std::int32_t>()};
  if (!s.store.find(key)) return error_response(404, fmt::format("no bubble {} at time step {}", key.id, key.t));
  return json_response(cached_track(s, key));
}

Response CatalogService::get_track(const Loaded& s, const std::string& track_id) {
  const auto key = tracking::parse_track_id(track_id);
  if (!key || !s.store.find(*key)) return error_response(404, "unknown track '" + track_id + "'");
  return json_response(cached_track(s, *key));
}

Response CatalogService::tracks_all(const Loaded& s, const std::string& ts) {
  const auto t = parse_int(ts);
  if (!t) return error_response(400, "time step must be an integer");
  const auto* step = s.store.step(*t);
  if (!step) return error_response(404, fmt::format("no time step {}", *t));
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& b : step->bubbles) {
    if (b.is_freeboard) continue;
    cached_track(s, {*t, b.bubble_id});
    ids.push_back(tracking::track_id_for({*t, b.bubble_id}));
  }
  return json_response({{"t", *t}, {"track_ids", ids}});
}

Response CatalogService::projection(const Loaded& s, const std::string& ts, const std::string& name_s,
                                    const Request& req) {
  const auto t = parse_int(ts);
  if (!t) return error_response(400, "time step must be an integer");
  FieldName name;
  try {
    name = field_name_from_str(name_s);
  } catch (const Error&) {
    return error_response(400, "field name must be density, pvf or bsf");
  }
  if (name == FieldName::labels) return error_response(400, "field name must be density, pvf or bsf");
  if (!s.store.step(*t)) return error_response(404, fmt::format("no time step {}", *t));
  const auto path = pipeline::RunPaths(run_dir_).field(name, *t);
  if (!fs::exists(path)) return error_response(404, fmt::format("no {} field for time step {}", name_s, *t));
  const auto field = fields::read_field(path);

  std::vector<std::vector<double>> values;
  std::string mode;
  const auto y = req.params.find("y");
  if (y != req.params.end()) {
    const auto j = parse_int(y->second);
    if (!j) return error_response(400, "y must be an integer slab index");
    values = catalog::y_slab(field, *j);
    mode = "slab";
  } else if (name == FieldName::pvf) {
    values = catalog::mean_projection(field);
    mode = "mean";
  } else {
    values = catalog::max_projection(field);
    mode = "max";
  }
  return json_response({{"t", *t},
                        {"name", name_s},
                        {"mode", mode},
                        {"shape", {field.spec.dims[0], field.spec.dims[2]}},
                        {"axes", {"x", "z"}},
                        {"values", values}});
}

Response CatalogService::image(const std::string& file) {
  if (file.find("..") != std::string::npos || file.find('\\') != std::string::npos)
    return error_response(400, "bad image name");
  const auto path = run_dir_ + "/images/" + file;
  if (!fs::is_regular_file(path)) return error_response(404, "no image " + file);
  const auto bytes = binio::read_file(path);
  return {200, "image/png", std::string(bytes.begin(), bytes.end())};
}

void serve(const ServeOptions& options) {
  CatalogService svc(options.run_dir);
  httplib::Server server;
  const auto bridge = [&svc](const httplib::Request& hreq, httplib::Response& hres) {
    Request req;
    req.method = hreq.method;
    req.path = hreq.path;
    for (const auto& [k, v] : hreq.params) req.params.emplace(k, v);
    req.body = hreq.body;
    const auto res = svc.handle(req);
    hres.status = res.status;
    hres.set_content(res.body, res.content_type.c_str());
  };
  server.Get(".*", bridge);
  server.Post(".*", bridge);

  int port = options.port;
  if (port == 0) {
    port = server.bind_to_any_port(options.host.c_str());
  } else if (!server.bind_to_port(options.host.c_str(), port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorCode::Io, fmt::format("cannot listen on {}:{}", options.host, options.port));

  std::thread stopper;
  std::atomic<bool> done{false};
  if (options.duration_s > 0.0) {
    stopper = std::thread([&] {
      const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(options.duration_s);
      while (!done && std::chrono::steady_clock::now() < until) std::this_thread::sleep_for(std::chrono::milliseconds(20));
      server.stop();
    });
  }
  if (options.on_ready) options.on_ready(port);
  const bool ok = server.listen_after_bind();
  done = true;
  if (stopper.joinable()) stopper.join();
  if (!ok && options.duration_s <= 0.0) throw Error(ErrorCode::Io, "server stopped unexpectedly");
}

}  // namespace bflow::service
