#pragma once

// Read-mostly HTTP/JSON service over a built catalog.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "catalog.hpp"
#include "tracking.hpp"

namespace bflow::service {

struct Request {
  std::string method = "GET";
  std::string path;
  std::multimap<std::string, std::string> params;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request routing and state. Safe to call from several threads.
class CatalogService {
 public:
  explicit CatalogService(std::string run_dir);

  Response handle(const Request& req);

 private:
  struct Loaded {
    nlohmann::json meta;
    std::vector<catalog::CatalogRow> rows;
    tracking::BubbleStore store;
    tracking::TrackParams params;
  };

  std::shared_ptr<const Loaded> load();  // throws Error(NotFound) when the catalog is missing
  Response meta(const Loaded& s);
  Response bubbles(const Loaded& s, const Request& req);
  Response bubble(const Loaded& s, const std::string& t, const std::string& id);
  Response post_track(const Loaded& s, const Request& req);
  Response get_track(const Loaded& s, const std::string& track_id);
  Response tracks_all(const Loaded& s, const std::string& t);
  Response projection(const Loaded& s, const std::string& t, const std::string& name, const Request& req);
  Response image(const std::string& file);
  const nlohmann::json& cached_track(const Loaded& s, tracking::BubbleKey key);

  std::string run_dir_;
  std::mutex load_mutex_;
  std::shared_ptr<const Loaded> loaded_;
  std::mutex track_mutex_;
  std::map<std::string, nlohmann::json> track_cache_;
};

struct ServeOptions {
  std::string run_dir;
  std::string host = "127.0.0.1";
  int port = 8080;           // 0 picks a free port
  double duration_s = 0.0;   // > 0 stops the server after this many seconds
  std::function<void(int port)> on_ready;
};

/// Blocks until stopped (duration elapsed or listen failure).
void serve(const ServeOptions& options);

}  // namespace bflow::service
