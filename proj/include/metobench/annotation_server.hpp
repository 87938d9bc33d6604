#pragma once

// JSON-over-HTTP surface for the annotation UI.
//
//   GET  /tasks/next?annotator=<id>[&style=][&supersense=]   {done:false, ...task} | {done:true}
//   POST /labels                                             201 stored record
//   GET  /stats/agreement
//   GET  /stats/metonymic-rate?group=overall|by_pipeline|by_supersense
//   GET  /export                                             ndjson, one current label per line
//   GET  /images/<image_id>                                  image/png
//   GET  /guidelines                                         text/plain
//
// Errors are {"error": "..."} with 400/401/403/404. With a non-empty token
// map every route except OPTIONS and /guidelines needs "Authorization: Bearer
// <token>" (images also take ?access_token= for <img> tags), and the
// annotator named in a request must be the token's owner.

#include "metobench/annotation.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace metobench {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks an ephemeral port
  std::map<std::string, std::string> tokens;  // token -> annotator id
  std::optional<std::filesystem::path> ui_dir;
  std::string guidelines;
  std::string cors_origin = "*";
};

// {"<token>": "<annotator>"}; the file is never echoed anywhere.
std::map<std::string, std::string> load_tokens(const std::filesystem::path& path);

class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, ServerConfig cfg);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop() from elsewhere.
  void run();
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();
  int bind();

  AnnotationStore& store_;
  ServerConfig cfg_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace metobench
