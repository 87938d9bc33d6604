#pragma once

#include "metobench/gateway.hpp"
#include "metobench/jsonl.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metobench {

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kRelatedTo = "RelatedTo";
inline constexpr std::string_view kSynonym = "Synonym";

// "Ice  Cream" -> "ice_cream"
std::string to_node_label(std::string_view lemma);
// "/c/en/ice_cream/n" or "ice_cream" -> "ice cream"
std::string from_node_label(std::string_view node);
// "/r/RelatedTo" -> "RelatedTo"
std::string normalize_relation(std::string_view relation);

// Read-only view of a commonsense graph. Every relation is treated as
// undirected: neighbours include edges in either direction. Labels in and out
// are surface lemmas.
class KnowledgeGraph {
 public:
  virtual ~KnowledgeGraph() = default;
  virtual std::set<std::string> neighbors(std::string_view lemma, std::string_view relation) = 0;
  // Whether the node occurs in the graph at all.
  virtual bool contains(std::string_view lemma) = 0;
  virtual std::string describe() const = 0;
};

// Offline graph loaded from tab-separated "relation<TAB>node1<TAB>node2"
// lines. Raw assertion dumps whose first column is an "/a/..." URI are
// accepted too; the URI column is skipped. Blank lines and lines starting
// with '#' are ignored.
class EdgeFileGraph : public KnowledgeGraph {
 public:
  EdgeFileGraph() = default;
  explicit EdgeFileGraph(const std::filesystem::path& path);
  static EdgeFileGraph parse(std::istream& in, const std::string& source = "<stream>");

  void add_edge(std::string_view relation, std::string_view a, std::string_view b);

  std::set<std::string> neighbors(std::string_view lemma, std::string_view relation) override;
  bool contains(std::string_view lemma) override;
  std::string describe() const override { return "file:" + source_; }

  std::size_t edge_count() const { return edges_; }
  std::size_t skipped_lines() const { return skipped_; }
  // Every node label, sorted.
  std::vector<std::string> nodes() const;

 private:
  std::string source_ = "<memory>";
  std::map<std::string, std::map<std::string, std::set<std::string>>> adj_;  // relation -> node -> nodes
  std::set<std::string> nodes_;
  std::size_t edges_ = 0;
  std::size_t skipped_ = 0;
};

struct ConceptNetConfig {
  std::string base_url = "https://api.conceptnet.io";
  std::filesystem::path cache_dir;  // empty disables the disk cache
  int limit = 200;
  double timeout_s = 30;
  int max_attempts = 3;
  int max_concurrent = 4;
  bool offline = false;  // serve from cache only; a miss is an error
};

// Client for the public commonsense-graph REST API. Queries have the form
// /query?node=/c/en/<term>&rel=/r/<Relation>&limit=<n>, which returns edges in
// both directions. Responses are cached in memory and, when cache_dir is set,
// on disk as <sha256(url)>.json, so lookups are stable within and across runs.
class ConceptNetGraph : public KnowledgeGraph {
 public:
  explicit ConceptNetGraph(ConceptNetConfig cfg);

  std::set<std::string> neighbors(std::string_view lemma, std::string_view relation) override;
  bool contains(std::string_view lemma) override;
  std::string describe() const override { return "api:" + cfg_.base_url; }

  std::string query_url(std::string_view lemma, std::string_view relation) const;
  std::size_t network_requests() const { return requests_; }

 private:
  Json fetch(const std::string& url);

  ConceptNetConfig cfg_;
  std::mutex mu_;
  std::map<std::string, Json> memory_;
  std::size_t requests_ = 0;
  ConcurrencyLimiter limiter_;
};

// "file:<path>" loads an edge file; "api" or "api:<base url>" uses the REST
// client with the given cache directory.
std::unique_ptr<KnowledgeGraph> open_graph(std::string_view spec, const std::filesystem::path& cache_dir);

}  // namespace metobench
