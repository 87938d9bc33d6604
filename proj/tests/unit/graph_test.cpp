#include "metobench/distractors.hpp"
#include "metobench/graph.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <sstream>
#include <thread>

using namespace metobench;
using metobench::testing::TempDir;

namespace {

EdgeFileGraph graph_of(const std::string& text) {
  std::istringstream in(text);
  return EdgeFileGraph::parse(in);
}

// Serves /query from an in-memory edge list in the public API's response shape.
class FakeGraphApi {
 public:
  explicit FakeGraphApi(std::vector<std::tuple<std::string, std::string, std::string>> edges)
      : edges_(std::move(edges)) {
    server_.Get("/query", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      if (fail_next > 0) {
        --fail_next;
        res.status = 503;
        return;
      }
      const std::string node = req.get_param_value("node");
      const std::string rel = req.get_param_value("rel");
      Json out = {{"edges", Json::array()}};
      for (const auto& [r, a, b] : edges_) {
        if ("/r/" + r != rel) continue;
        if (a != node && b != node) continue;
        out["edges"].push_back({{"start", {{"@id", a}}}, {"end", {{"@id", b}}}, {"rel", {{"@id", "/r/" + r}}}});
      }
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeGraphApi() {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::atomic<int> hits{0};
  std::atomic<int> fail_next{0};

 private:
  std::vector<std::tuple<std::string, std::string, std::string>> edges_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(NodeLabels, RoundTrip) {
  EXPECT_EQ(to_node_label("Ice  Cream"), "ice_cream");
  EXPECT_EQ(from_node_label("/c/en/ice_cream/n"), "ice cream");
  EXPECT_EQ(from_node_label("/c/en/hope"), "hope");
  EXPECT_EQ(from_node_label("ice_cream"), "ice cream");
  EXPECT_EQ(normalize_relation("/r/RelatedTo"), "RelatedTo");
}

TEST(EdgeFile, ParsesBothFormatsAndSkipsJunk) {
  const auto g = graph_of(
      "# comment\n"
      "RelatedTo\thope\twish\n"
      "/a/[/r/RelatedTo/,/c/en/wish/,/c/en/desire/]\t/r/RelatedTo\t/c/en/wish\t/c/en/desire\t{}\n"
      "/a/x\t/r/RelatedTo\t/c/en/wish\t/c/fr/souhait\n"
      "broken line\n"
      "\n");
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(g.skipped_lines(), 1u);
  auto copy = g;
  EXPECT_EQ(copy.neighbors("wish", kRelatedTo), (std::set<std::string>{"desire", "hope"}));
  EXPECT_FALSE(copy.contains("souhait"));
}

TEST(EdgeFile, RelatedTermsAndUnknownNode) {
  auto g = graph_of("RelatedTo\thope\twish\n");
  EXPECT_EQ(related_terms(g, "hope"), std::set<std::string>{"wish"});
  EXPECT_TRUE(related_terms(g, "quokka").empty());
}

TEST(EdgeFile, SynonymSetIsSymmetric) {
  auto g = graph_of("Synonym\tsofa\tcouch\nSynonym\tsettee\tsofa\n");
  const auto s = synonym_set(g, "sofa");
  EXPECT_TRUE(s.contains("sofa") && s.contains("couch") && s.contains("settee"));
  EXPECT_TRUE(synonym_set(g, "couch").contains("sofa"));
  EXPECT_EQ(synonym_set(g, "lamp"), std::set<std::string>{"lamp"});
}

TEST(EdgeFile, FixtureLoads) {
  EdgeFileGraph g(std::filesystem::path(METOBENCH_FIXTURES) / "edges.tsv");
  EXPECT_TRUE(g.contains("age"));
  EXPECT_TRUE(g.neighbors("hope", kRelatedTo).contains("wish"));
  EXPECT_THROW(EdgeFileGraph(std::filesystem::path("/nonexistent/edges.tsv")), GraphError);
}

TEST(OpenGraph, Specs) {
  TempDir dir;
  EXPECT_NE(open_graph("file:" + std::string(METOBENCH_FIXTURES) + "/edges.tsv", dir.path()), nullptr);
  EXPECT_NE(open_graph("api:http://127.0.0.1:1", dir.path()), nullptr);
  EXPECT_THROW(open_graph("sql:x", dir.path()), GraphError);
}

TEST(ConceptNet, QueryUrlShape) {
  ConceptNetConfig cfg;
  cfg.base_url = "http://host/";
  cfg.limit = 50;
  ConceptNetGraph g(cfg);
  EXPECT_EQ(g.query_url("Ice Cream", "RelatedTo"), "http://host/query?node=/c/en/ice_cream&rel=/r/RelatedTo&limit=50");
}

TEST(ConceptNet, FakeServerWithDiskCache) {
  FakeGraphApi api({{"RelatedTo", "/c/en/hope", "/c/en/wish/n"},
                    {"RelatedTo", "/c/en/future", "/c/en/hope"},
                    {"RelatedTo", "/c/en/hope", "/c/fr/espoir"},
                    {"Synonym", "/c/en/hope", "/c/en/hopefulness"}});
  TempDir dir;
  ConceptNetConfig cfg;
  cfg.base_url = api.base();
  cfg.cache_dir = dir / "cache";
  {
    ConceptNetGraph g(cfg);
    EXPECT_EQ(g.neighbors("hope", kRelatedTo), (std::set<std::string>{"future", "wish"}));
    EXPECT_EQ(g.neighbors("hope", kRelatedTo), (std::set<std::string>{"future", "wish"}));
    EXPECT_EQ(g.network_requests(), 1u);
    EXPECT_EQ(synonym_set(g, "hope"), (std::set<std::string>{"hope", "hopefulness"}));
    EXPECT_FALSE(g.contains("quokka"));
  }
  const int before = api.hits.load();
  cfg.offline = true;
  ConceptNetGraph cached(cfg);
  EXPECT_EQ(cached.neighbors("hope", kRelatedTo), (std::set<std::string>{"future", "wish"}));
  EXPECT_EQ(api.hits.load(), before);
  EXPECT_EQ(cached.network_requests(), 0u);
  EXPECT_THROW(cached.neighbors("never-seen", kRelatedTo), GraphError);
}

TEST(ConceptNet, RetriesServerErrors) {
  FakeGraphApi api({{"RelatedTo", "/c/en/a", "/c/en/b"}});
  api.fail_next = 1;
  ConceptNetConfig cfg;
  cfg.base_url = api.base();
  ConceptNetGraph g(cfg);
  EXPECT_EQ(g.neighbors("a", kRelatedTo), std::set<std::string>{"b"});
  EXPECT_EQ(api.hits.load(), 2);

  api.fail_next = 100;
  cfg.max_attempts = 2;
  ConceptNetGraph h(cfg);
  EXPECT_THROW(h.neighbors("z", kRelatedTo), GraphError);
}

TEST(ConceptNet, LiveSmoke) {
  if (!std::getenv("METOBENCH_LIVE_GRAPH")) GTEST_SKIP() << "set METOBENCH_LIVE_GRAPH=1 to query the public graph";
  TempDir dir;
  ConceptNetConfig cfg;
  cfg.cache_dir = dir / "cache";
  ConceptNetGraph g(cfg);
  EXPECT_FALSE(g.neighbors("vacation", kRelatedTo).empty());
}
