#include "metobench/annotation_server.hpp"

#include "metobench/store.hpp"
#include "metobench/text.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

namespace metobench {

namespace fs = std::filesystem;

std::map<std::string, std::string> load_tokens(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open token file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error&) {
    throw std::runtime_error("token file " + path.string() + " is not valid JSON");
  }
  if (!j.is_object()) throw std::runtime_error("token file must map token -> annotator id");
  std::map<std::string, std::string> out;
  for (const auto& [token, who] : j.items()) {
    if (!who.is_string() || token.empty()) throw std::runtime_error("token file must map token -> annotator id");
    out.emplace(token, who.get<std::string>());
  }
  return out;
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, status, {{"error", msg}});
}

std::optional<std::string> param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  std::string v = trim(req.get_param_value(key));
  if (v.empty()) return std::nullopt;
  return v;
}

Json rate_json(const GroupRate& g) {
  const auto r = g.rate();
  return {{"n_images", g.n_images}, {"n_metonymic", g.n_metonymic}, {"rate", r ? Json(*r) : Json(nullptr)}};
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerConfig cfg)
    : store_(store), cfg_(std::move(cfg)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::install_routes() {
  auto& svr = *server_;
  svr.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                           {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  svr.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  // Returns the caller's annotator id (empty when auth is off), or nullopt
  // after writing a 401.
  auto authenticate = [this](const httplib::Request& req, httplib::Response& res,
                             bool allow_query) -> std::optional<std::string> {
    if (cfg_.tokens.empty()) return std::string();
    std::string token;
    const std::string header = req.get_header_value("Authorization");
    if (header.rfind("Bearer ", 0) == 0) {
      token = trim(std::string_view(header).substr(7));
    } else if (allow_query && req.has_param("access_token")) {
      token = req.get_param_value("access_token");
    }
    const auto it = cfg_.tokens.find(token);
    if (token.empty() || it == cfg_.tokens.end()) {
      send_error(res, 401, "missing or unknown bearer token");
      return std::nullopt;
    }
    return it->second;
  };

  svr.Get("/tasks/next", [this, authenticate](const httplib::Request& req, httplib::Response& res) {
    const auto who = authenticate(req, res, false);
    if (!who) return;
    const auto annotator = param(req, "annotator");
    if (!annotator) return send_error(res, 400, "query parameter 'annotator' is required");
    if (!who->empty() && *who != *annotator) return send_error(res, 403, "token does not belong to this annotator");
    TaskFilter filter;
    filter.style = param(req, "style");
    if (const auto ss = param(req, "supersense")) {
      filter.supersense = parse_supersense(*ss);
      if (!filter.supersense) return send_error(res, 400, "unknown supersense '" + *ss + "'");
    }
    const auto task = store_.next_task(*annotator, filter);
    if (!task) return send_json(res, 200, {{"done", true}, {"remaining", 0}});
    send_json(res, 200,
              {{"done", false},
               {"image_id", task->image_id},
               {"concept", task->concept_lemma},
               {"image_url", task->image_url},
               {"remaining", task->remaining}});
  });

  svr.Post("/labels", [this, authenticate](const httplib::Request& req, httplib::Response& res) {
    const auto who = authenticate(req, res, false);
    if (!who) return;
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (const Json::parse_error&) {
      return send_error(res, 400, "body is not valid JSON");
    }
    try {
      AnnotationRecord rec = annotation_from_json(body);
      if (!who->empty() && *who != rec.annotator_id) {
        return send_error(res, 403, "token does not belong to this annotator");
      }
      send_json(res, 201, to_json(store_.submit(std::move(rec))));
    } catch (const AnnotationError& e) {
      send_error(res, e.status, e.what());
    }
  });

  svr.Get("/stats/agreement", [this, authenticate](const httplib::Request& req, httplib::Response& res) {
    if (!authenticate(req, res, false)) return;
    const auto current = store_.current();
    const auto agreement = raw_agreement(current);
    std::set<std::string> annotated;
    for (const auto& r : current) annotated.insert(r.image_id);
    send_json(res, 200,
              {{"raw_agreement", agreement ? Json(*agreement) : Json(nullptr)},
               {"doubly_labeled", doubly_labeled(current)},
               {"annotated_images", annotated.size()},
               {"labels", current.size()},
               {"excluded", store_.excluded().size()}});
  });

  svr.Get("/stats/metonymic-rate", [this, authenticate](const httplib::Request& req, httplib::Response& res) {
    if (!authenticate(req, res, false)) return;
    const std::string group = param(req, "group").value_or("overall");
    const auto grouping = parse_grouping(group);
    if (!grouping) return send_error(res, 400, "group must be overall, by_pipeline or by_supersense");
    Json rates = Json::object();
    for (const auto& [key, g] : metonymic_rate(store_.current(), store_.images(), *grouping)) {
      rates[key] = rate_json(g);
    }
    send_json(res, 200, {{"group", group}, {"rates", rates}});
  });

  svr.Get("/export", [this, authenticate](const httplib::Request& req, httplib::Response& res) {
    if (!authenticate(req, res, false)) return;
    std::ostringstream out;
    for (const auto& r : store_.current()) out << to_json(r).dump() << '\n';
    res.status = 200;
    res.set_content(out.str(), "application/x-ndjson");
  });

  svr.Get(R"(/images/([0-9a-f]{64}))", [this, authenticate](const httplib::Request& req, httplib::Response& res) {
    if (!authenticate(req, res, true)) return;
    const std::string id = req.matches[1];
    if (!store_.images().count(id)) return send_error(res, 404, "unknown image");
    std::ifstream in(store_.root() / CorpusStore::relative_image_path(id), std::ios::binary);
    if (!in) return send_error(res, 404, "image file missing");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    res.status = 200;
    res.set_content(bytes.str(), "image/png");
  });

  svr.Get("/guidelines", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(cfg_.guidelines, "text/plain; charset=utf-8");
  });

  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      spdlog::error("annotation server: {}", e.what());
    } catch (...) {
    }
    send_error(res, 500, "internal error");
  });

  if (cfg_.ui_dir) {
    if (!svr.set_mount_point("/", cfg_.ui_dir->string())) {
      throw std::runtime_error("ui directory " + cfg_.ui_dir->string() + " does not exist");
    }
  }
}

int AnnotationServer::bind() {
  if (cfg_.port == 0) {
    port_ = server_->bind_to_any_port(cfg_.host);
  } else {
    port_ = server_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
  }
  if (port_ < 0) throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  return port_;
}

int AnnotationServer::start() {
  bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void AnnotationServer::run() {
  bind();
  spdlog::info("annotation server listening on http://{}:{}", cfg_.host, port_);
  server_->listen_after_bind();
}

void AnnotationServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace metobench
