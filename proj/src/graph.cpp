#include "metobench/graph.hpp"

#include "metobench/hashing.hpp"
#include "metobench/text.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace metobench {

namespace fs = std::filesystem;

std::string to_node_label(std::string_view lemma) {
  return replace_all(normalize_lemma(lemma), " ", "_");
}

std::string from_node_label(std::string_view node) {
  std::string_view s = node;
  if (s.rfind("/c/", 0) == 0) {
    // /c/<lang>/<term>[/<pos>[/...]]
    s.remove_prefix(3);
    const auto lang_end = s.find('/');
    s = lang_end == std::string_view::npos ? std::string_view{} : s.substr(lang_end + 1);
    s = s.substr(0, s.find('/'));
  }
  return normalize_lemma(replace_all(std::string(s), "_", " "));
}

std::string normalize_relation(std::string_view relation) {
  std::string r = trim(relation);
  if (r.rfind("/r/", 0) == 0) r.erase(0, 3);
  return r;
}

EdgeFileGraph::EdgeFileGraph(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open graph file " + path.string());
  *this = parse(in, path.string());
}

EdgeFileGraph EdgeFileGraph::parse(std::istream& in, const std::string& source) {
  EdgeFileGraph g;
  g.source_ = source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto cols = split(line, '\t');
    if (!cols.empty() && cols[0].rfind("/a/", 0) == 0) cols.erase(cols.begin());
    if (cols.size() < 3 || trim(cols[0]).empty() || trim(cols[1]).empty() || trim(cols[2]).empty()) {
      spdlog::warn("{}:{}: expected relation, node1, node2", source, lineno);
      ++g.skipped_;
      continue;
    }
    // only English nodes when the file carries language-tagged URIs
    const bool uri1 = cols[1].rfind("/c/", 0) == 0, uri2 = cols[2].rfind("/c/", 0) == 0;
    if ((uri1 && cols[1].rfind("/c/en/", 0) != 0) || (uri2 && cols[2].rfind("/c/en/", 0) != 0)) continue;
    g.add_edge(cols[0], cols[1], cols[2]);
  }
  return g;
}

void EdgeFileGraph::add_edge(std::string_view relation, std::string_view a, std::string_view b) {
  const std::string rel = normalize_relation(relation);
  const std::string na = from_node_label(a), nb = from_node_label(b);
  if (na.empty() || nb.empty()) return;
  nodes_.insert(na);
  nodes_.insert(nb);
  if (na == nb) return;
  auto& adj = adj_[rel];
  adj[na].insert(nb);
  adj[nb].insert(na);
  ++edges_;
}

std::set<std::string> EdgeFileGraph::neighbors(std::string_view lemma, std::string_view relation) {
  const auto rel = adj_.find(normalize_relation(relation));
  if (rel == adj_.end()) return {};
  const auto it = rel->second.find(normalize_lemma(lemma));
  return it == rel->second.end() ? std::set<std::string>{} : it->second;
}

bool EdgeFileGraph::contains(std::string_view lemma) { return nodes_.count(normalize_lemma(lemma)) > 0; }

std::vector<std::string> EdgeFileGraph::nodes() const { return {nodes_.begin(), nodes_.end()}; }

ConceptNetGraph::ConceptNetGraph(ConceptNetConfig cfg) : cfg_(std::move(cfg)), limiter_(cfg_.max_concurrent) {
  if (cfg_.limit <= 0) throw std::invalid_argument("graph query limit must be positive");
  if (!cfg_.cache_dir.empty()) fs::create_directories(cfg_.cache_dir);
}

std::string ConceptNetGraph::query_url(std::string_view lemma, std::string_view relation) const {
  std::string base = cfg_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + "/query?node=/c/en/" + httplib::detail::encode_query_param(to_node_label(lemma)) +
         "&rel=/r/" + normalize_relation(relation) + "&limit=" + std::to_string(cfg_.limit);
}

Json ConceptNetGraph::fetch(const std::string& url) {
  {
    std::lock_guard lock(mu_);
    if (const auto it = memory_.find(url); it != memory_.end()) return it->second;
  }
  const std::string key = sha256_hex(url);
  const fs::path cache_file = cfg_.cache_dir.empty() ? fs::path() : cfg_.cache_dir / (key + ".json");
  if (!cache_file.empty() && fs::exists(cache_file)) {
    std::ifstream in(cache_file);
    Json j = Json::parse(in);
    std::lock_guard lock(mu_);
    return memory_.emplace(url, std::move(j)).first->second;
  }
  if (cfg_.offline) throw GraphError("graph cache miss in offline mode: " + url);

  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string host = url.substr(0, path_start);
  const std::string path = url.substr(path_start);

  std::string last_error;
  std::mt19937_64 jitter(fnv1a64(url));
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    limiter_.acquire();
    httplib::Result res;
    {
      httplib::Client client(host);
      const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg_.timeout_s * 1000));
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_follow_location(true);
      res = client.Get(path);
      std::lock_guard lock(mu_);
      ++requests_;
    }
    limiter_.release();
    if (res && res->status == 200) {
      Json j;
      try {
        j = Json::parse(res->body);
      } catch (const Json::parse_error& e) {
        throw GraphError("graph API returned invalid JSON for " + url + ": " + e.what());
      }
      if (!cache_file.empty()) {
        const fs::path tmp = cache_file.string() + ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
        {
          std::ofstream out(tmp);
          out << res->body;
        }
        fs::rename(tmp, cache_file);
      }
      std::lock_guard lock(mu_);
      return memory_.emplace(url, std::move(j)).first->second;
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (res && res->status >= 400 && res->status < 500 && res->status != 429) break;
    if (attempt < cfg_.max_attempts) {
      const double factor = 1.0 + std::uniform_real_distribution<double>(0, 0.5)(jitter);
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(200 * (1 << (attempt - 1)) * factor)));
    }
  }
  throw GraphError("graph query failed after retries (" + last_error + "): " + url);
}

std::set<std::string> ConceptNetGraph::neighbors(std::string_view lemma, std::string_view relation) {
  const std::string self = normalize_lemma(lemma);
  const Json res = fetch(query_url(lemma, relation));
  std::set<std::string> out;
  if (!res.contains("edges")) return out;
  if (res["edges"].size() >= static_cast<std::size_t>(cfg_.limit)) {
    spdlog::info("graph lookup for '{}' ({}) hit the {}-edge page limit", self, normalize_relation(relation),
                 cfg_.limit);
  }
  for (const auto& e : res["edges"]) {
    const std::string start = e.at("start").at("@id"), end = e.at("end").at("@id");
    if (start.rfind("/c/en/", 0) != 0 || end.rfind("/c/en/", 0) != 0) continue;
    const std::string a = from_node_label(start), b = from_node_label(end);
    if (a == self && b != self) out.insert(b);
    else if (b == self && a != self) out.insert(a);
  }
  return out;
}

bool ConceptNetGraph::contains(std::string_view lemma) {
  const Json res = fetch(query_url(lemma, kRelatedTo));
  return res.contains("edges") && !res["edges"].empty();
}

std::unique_ptr<KnowledgeGraph> open_graph(std::string_view spec, const fs::path& cache_dir) {
  if (spec.rfind("file:", 0) == 0) return std::make_unique<EdgeFileGraph>(fs::path(std::string(spec.substr(5))));
  if (spec == "api" || spec.rfind("api:", 0) == 0) {
    ConceptNetConfig cfg;
    if (spec.size() > 4) cfg.base_url = std::string(spec.substr(4));
    cfg.cache_dir = cache_dir;
    return std::make_unique<ConceptNetGraph>(cfg);
  }
  throw GraphError("graph must be 'api', 'api:<url>' or 'file:<path>', got '" + std::string(spec) + "'");
}

}  // namespace metobench
