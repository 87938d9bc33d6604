#include "metobench/distractors.hpp"
#include "metobench/mock_backends.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace metobench;
using metobench::testing::backend;
using metobench::testing::TempDir;

namespace {

EdgeFileGraph graph_of(const std::string& text) {
  std::istringstream in(text);
  return EdgeFileGraph::parse(in);
}

Embedding axis(int dim, int i, float other = 0.0f, int j = -1) {
  Embedding v = Embedding::Zero(dim);
  v[i] = 1.0f;
  if (j >= 0) v[j] = other;
  return v / v.norm();
}

// Store of pattern images, one per (lemma, n), with pinnable embedders.
struct Fixture {
  TempDir dir;
  CorpusStore store{dir.path(), logical_clock()};
  std::shared_ptr<HashImageEmbedder> clip = std::make_shared<HashImageEmbedder>(16);
  std::shared_ptr<HashTextEmbedder> text = std::make_shared<HashTextEmbedder>(32);
  Gateway gw;
  ImageEmbeddingCache cache{gw, store};

  Fixture() {
    auto ic = backend("clip", Capability::ImageEmbed);
    ic.joint = true;
    gw.add_image_embed(ic, clip);
    gw.add_text_embed(backend("txt", Capability::TextEmbed), text);
  }
  std::string image(const std::string& key, const Embedding& v) {
    const auto put = store.put_image(encode_png(PatternRenderer::pattern(key, 1)));
    clip->pin_image(put.image_id, v);
    return put.image_id;
  }
};

}  // namespace

TEST(Mix, Parse) {
  EXPECT_EQ(parse_mix("1v2s").visual, 1);
  EXPECT_EQ(parse_mix("3V0S").semantic, 0);
  EXPECT_THROW(parse_mix("2v2s"), std::invalid_argument);
  EXPECT_THROW(parse_mix("vs"), std::invalid_argument);
}

TEST(TwoStep, MinimalPathAndExclusion) {
  auto g = graph_of("RelatedTo\ta\tb\nRelatedTo\tb\tc\n");
  EXPECT_EQ(two_step_candidates(g, "a"), std::set<std::string>{"c"});
  EXPECT_EQ(two_step_paths(g, "a").at("c"), "b");
  auto h = graph_of("RelatedTo\ta\tb\nRelatedTo\tb\tc\nRelatedTo\ta\tc\n");
  EXPECT_TRUE(two_step_candidates(h, "a").empty());
}

TEST(TwoStep, DisjointFromDirectAndCapped) {
  auto g = graph_of("RelatedTo\ta\tb\nRelatedTo\ta\tc\nRelatedTo\tb\td\nRelatedTo\tc\te\nRelatedTo\tb\tc\n");
  const auto two = two_step_candidates(g, "a");
  EXPECT_EQ(two, (std::set<std::string>{"d", "e"}));
  for (const auto& x : related_terms(g, "a")) EXPECT_FALSE(two.contains(x));
  EXPECT_EQ(two_step_candidates(g, "a", 1), std::set<std::string>{"d"});
}

TEST(VerifyPath, RewalksTheGraph) {
  auto g = graph_of("RelatedTo\ta\tb\nRelatedTo\tb\tc\nRelatedTo\ta\td\nRelatedTo\td\tb\n");
  EXPECT_TRUE(verify_path(g, {"a", "b", "c"}));
  EXPECT_TRUE(verify_path(g, {"a", "b"}));
  EXPECT_FALSE(verify_path(g, {"a", "c"}));
  EXPECT_FALSE(verify_path(g, {"a", "d", "b"}));  // direct edge a-b
  EXPECT_FALSE(verify_path(g, {"a"}));
}

TEST(VisualNeighbors, IdenticalEmbeddingRanksFirst) {
  Fixture f;
  const auto t = f.image("target", axis(16, 0));
  std::vector<PoolImage> pool{{f.image("x1", axis(16, 1)), "xylophone"},
                              {f.image("m1", axis(16, 0)), "mirror"},
                              {f.image("m2", axis(16, 2)), "mirror"}};
  const auto r = visual_neighbors(f.cache, t, pool, 10);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].concept_lemma, "mirror");
  EXPECT_NEAR(r[0].cosine, 1.0, 1e-6);
  EXPECT_EQ(r[0].image_id, pool[1].image_id);
  EXPECT_TRUE(visual_neighbors(f.cache, t, {}, 3).empty());
}

TEST(VisualNeighbors, OrthogonalTiesAreLexicographic) {
  Fixture f;
  const auto t = f.image("target", axis(16, 0));
  std::vector<PoolImage> pool{{f.image("z", axis(16, 3)), "zebra"},
                              {f.image("a", axis(16, 4)), "apple"},
                              {f.image("m", axis(16, 5)), "mango"}};
  const auto r = visual_neighbors(f.cache, t, pool, 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].concept_lemma, "apple");
  EXPECT_EQ(r[1].concept_lemma, "mango");
  EXPECT_NEAR(r[0].cosine, 0.0, 1e-9);
  EXPECT_EQ(f.cache.size(), 4u);
}

TEST(BandFilter, RemovesNearDuplicates) {
  Fixture f;
  f.text->pin("hope", axis(32, 0));
  f.text->pin("wish", axis(32, 0, 0.2f, 1));   // cos ~0.98
  f.text->pin("ladder", axis(32, 1));          // orthogonal
  f.text->pin("hope2", axis(32, 0));           // identical embedding
  const auto r = similarity_band_filter(f.gw, {"wish", "ladder", "hope2", "hope"}, "hope", 0.85);
  EXPECT_TRUE(r.kept.contains("ladder"));
  EXPECT_TRUE(r.removed.contains("wish"));
  EXPECT_TRUE(r.removed.contains("hope"));
  EXPECT_TRUE(r.removed.contains("hope2"));
  const auto loose = similarity_band_filter(f.gw, {"wish", "ladder", "hope2"}, "hope", 1.0);
  EXPECT_TRUE(loose.kept.contains("wish"));
  EXPECT_TRUE(loose.removed.contains("hope2"));
  EXPECT_THROW(similarity_band_filter(f.gw, {"x"}, "hope", 0.0), std::invalid_argument);
}

TEST(BuildDistractors, PrefersTwoStepForSemanticSlots) {
  Fixture f;
  auto g = graph_of(
      "RelatedTo\tage\told\nRelatedTo\told\tdisability\nRelatedTo\tage\tmaturity\n"
      "RelatedTo\tmaturity\tcontentment\nSynonym\tage\tepoch\n");
  const auto t = f.image("age", axis(16, 0));
  std::vector<PoolImage> pool{{t, "age"},
                              {f.image("r", axis(16, 0, 0.5f, 1)), "recuperation"},
                              {f.image("e", axis(16, 0, 0.1f, 1)), "epoch"}};
  const auto out = build_distractors(f.gw, g, f.cache, "age", t, pool, {}, {});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].lemma, "recuperation");  // epoch is a synonym
  EXPECT_EQ(out[0].source, DistractorSource::Visual);
  std::set<std::string> semantic;
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_EQ(out[i].source, DistractorSource::Semantic);
    EXPECT_EQ(out[i].path.size(), 3u);
    EXPECT_TRUE(verify_path(g, out[i].path));
    semantic.insert(out[i].lemma);
  }
  EXPECT_EQ(semantic, (std::set<std::string>{"contentment", "disability"}));
}

TEST(BuildDistractors, BackfillsFromOtherSourceThenGlobal) {
  Fixture f;
  // every graph neighbour is a synonym, so no semantic candidate survives
  auto g = graph_of("RelatedTo\thope\twish\nSynonym\thope\twish\nRelatedTo\thope\tdesire\nSynonym\tdesire\thope\n");
  const auto t = f.image("hope", axis(16, 0));
  std::vector<PoolImage> pool{{f.image("a", axis(16, 0, 0.9f, 1)), "lantern"},
                              {f.image("b", axis(16, 0, 0.3f, 2)), "sunrise"}};
  const auto out = build_distractors(f.gw, g, f.cache, "hope", t, pool, {"hope", "wish", "anchor", "lantern"}, {});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].lemma, "sunrise");
  EXPECT_EQ(out[0].source, DistractorSource::Visual);
  EXPECT_FALSE(out[0].backfill);
  EXPECT_EQ(out[1].lemma, "lantern");
  EXPECT_TRUE(out[1].backfill);
  EXPECT_EQ(out[2].lemma, "anchor");
  EXPECT_EQ(out[2].source, DistractorSource::Global);
  EXPECT_TRUE(out[2].backfill);
}

TEST(BuildDistractors, DuplicateEmbeddingNeverSelected) {
  Fixture f;
  f.text->pin("hope", axis(32, 0));
  f.text->pin("optimism", axis(32, 0));
  auto g = graph_of("RelatedTo\thope\toptimism\nRelatedTo\thope\tdawn\nRelatedTo\thope\tbird\n");
  const auto t = f.image("hope", axis(16, 0));
  std::vector<PoolImage> pool{{f.image("o", axis(16, 0)), "optimism"}, {f.image("c", axis(16, 1)), "candle"}};
  DistractorConfig cfg;
  cfg.tau_high = 1.0;
  const auto out = build_distractors(f.gw, g, f.cache, "hope", t, pool, {}, cfg);
  for (const auto& c : out) EXPECT_NE(c.lemma, "optimism");
}

TEST(BuildDistractors, TooFewSurvivorsIsAnError) {
  Fixture f;
  auto g = graph_of("RelatedTo\thope\twish\n");
  const auto t = f.image("hope", axis(16, 0));
  EXPECT_THROW(build_distractors(f.gw, g, f.cache, "hope", t, {}, {}, {}), DistractorError);
}

TEST(BuildDistractors, DeterministicAndJsonRoundTrip) {
  Fixture f;
  EdgeFileGraph g(std::filesystem::path(METOBENCH_FIXTURES) / "edges.tsv");
  const auto t = f.image("vacation", axis(16, 0));
  std::vector<PoolImage> pool{{f.image("1", axis(16, 1)), "leisure"}, {f.image("2", axis(16, 2)), "winter"}};
  const std::vector<std::string> global{"hope", "love", "anger", "memory"};
  const auto a = build_distractors(f.gw, g, f.cache, "vacation", t, pool, global, {});
  const auto b = build_distractors(f.gw, g, f.cache, "vacation", t, pool, global, {});
  ASSERT_EQ(a.size(), 3u);
  std::set<std::string> distinct;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(to_json(a[i]), to_json(b[i]));
    EXPECT_EQ(to_json(distractor_from_json(to_json(a[i]))), to_json(a[i]));
    EXPECT_NE(a[i].lemma, "vacation");
    EXPECT_NE(a[i].lemma, "holiday");  // synonym
    distinct.insert(a[i].lemma);
  }
  EXPECT_EQ(distinct.size(), 3u);
}
