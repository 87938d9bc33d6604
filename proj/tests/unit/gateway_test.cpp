#include "metobench/gateway.hpp"
#include "metobench/mock_backends.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace metobench;
using metobench::testing::backend;
using metobench::testing::TempDir;

namespace {

class FlakyText : public TextBackend {
 public:
  explicit FlakyText(int failures) : failures_(failures) {}
  std::string model_id() const override { return "flaky"; }
  Completion complete(const std::string&, const SamplingParams&) override {
    if (calls_++ < failures_) throw TransportError("503");
    return {"ok", std::nullopt, std::nullopt};
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  std::atomic<int> calls_{0};
};

// Records the peak number of overlapping calls.
class SlowText : public TextBackend {
 public:
  std::string model_id() const override { return "slow"; }
  Completion complete(const std::string&, const SamplingParams&) override {
    const int now = ++inflight_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --inflight_;
    return {"done", std::nullopt, std::nullopt};
  }
  std::atomic<int> inflight_{0};
  std::atomic<int> peak_{0};
};

class WrongDim : public TextEmbedBackend {
 public:
  std::string model_id() const override { return "wrong"; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    std::vector<Embedding> out;
    for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(Embedding::Ones(++n_));
    return out;
  }
  int n_ = 2;
};

}  // namespace

TEST(Params, Validation) {
  SamplingParams s;
  EXPECT_NO_THROW(s.validate());
  s.top_p = 0;
  EXPECT_THROW(s.validate(), PreconditionError);
  RenderParams r;
  EXPECT_EQ(r.inference_steps, 35);
  EXPECT_DOUBLE_EQ(r.guidance_scale, 7.5);
  r.width = 0;
  EXPECT_THROW(r.validate(), PreconditionError);
}

TEST(BackendConfig, ValidatesAndOmitsSecrets) {
  auto b = backend("x", Capability::Text);
  b.auth_env = "SOME_TOKEN_VAR";
  EXPECT_NO_THROW(b.validate());
  const Json j = b.to_json();
  EXPECT_EQ(j["auth_env"], "SOME_TOKEN_VAR");
  EXPECT_EQ(BackendConfig::from_json(j).to_json(), j);
  b.max_concurrent = 0;
  EXPECT_THROW(b.validate(), ConfigError);
  b = backend("x", Capability::Text);
  b.retry.max_attempts = 0;
  EXPECT_THROW(b.validate(), ConfigError);
  b = backend("", Capability::Text);
  EXPECT_THROW(b.validate(), ConfigError);
}

TEST(Gateway, RegistrationErrors) {
  Gateway g;
  g.add_text(backend("t", Capability::Text), std::make_shared<TemplatedTextBackend>());
  EXPECT_THROW(g.add_text(backend("t", Capability::Text), std::make_shared<TemplatedTextBackend>()),
               ConfigError);
  EXPECT_THROW(g.add_text(backend("u", Capability::Image), std::make_shared<TemplatedTextBackend>()),
               ConfigError);
  EXPECT_THROW(g.complete_text("x", {}, "missing"), CapabilityError);
  EXPECT_THROW(g.render_image("x", {}), CapabilityError);
  EXPECT_TRUE(g.has(Capability::Text));
  EXPECT_EQ(g.names(Capability::Text), std::vector<std::string>{"t"});
}

TEST(Gateway, TextIsDeterministicForSeed) {
  auto g = metobench::testing::mock_gateway();
  SamplingParams p;
  p.seed = 7;
  const std::string prompt = "Word: Hope -> Representamen:";
  EXPECT_EQ(g->complete_text(prompt, p), g->complete_text(prompt, p));
  EXPECT_THROW(g->complete_text("", p), PreconditionError);
}

TEST(Gateway, EmptyCompletionIsAnError) {
  Gateway g;
  g.add_text(backend("s", Capability::Text), std::make_shared<ScriptedTextBackend>(std::vector<std::string>{"  "}));
  EXPECT_THROW(g.complete_text("p", {}), EmptyCompletion);
}

TEST(Gateway, RenderDefaultsAndSeeds) {
  auto g = metobench::testing::mock_gateway();
  RenderParams p;
  p.seed = 11;
  const auto a = g->render_image("a quiet harbour", p);
  const auto b = g->render_image("a quiet harbour", p);
  EXPECT_EQ(a.png, b.png);
  EXPECT_EQ(a.effective.inference_steps, 35);
  EXPECT_DOUBLE_EQ(a.effective.guidance_scale, 7.5);
  p.seed = 12;
  EXPECT_NE(g->render_image("a quiet harbour", p).png, a.png);
  RenderParams unseeded;
  EXPECT_TRUE(g->render_image("x", unseeded).effective.seed.has_value());
  EXPECT_THROW(g->render_image("   ", p), PreconditionError);
}

TEST(Gateway, ModerationRefusalIsNotRetried) {
  Gateway g;
  auto cfg = backend("r", Capability::Image);
  g.add_image(cfg, std::make_shared<PatternRenderer>(std::set<std::string>{"blood"}));
  RenderParams p;
  p.seed = 1;
  EXPECT_THROW(g.render_image("blood on snow", p), ModerationRefusal);
}

TEST(Gateway, EmbeddingsAreUnitNorm) {
  auto g = metobench::testing::mock_gateway();
  const auto vs = g->embed_text({"hope", "wish", "hope"});
  for (const auto& v : vs) EXPECT_NEAR(v.norm(), 1.0, 1e-5);
  EXPECT_EQ(vs[0], vs[2]);
  EXPECT_THROW(g->embed_text({}), PreconditionError);
}

TEST(Gateway, BasisEmbedderIsOrthogonal) {
  Gateway g;
  g.add_text_embed(backend("b", Capability::TextEmbed), std::make_shared<BasisTextEmbedder>(16));
  const auto vs = g.embed_text({"a", "b", "c"});
  EXPECT_NEAR(dot(vs[0], vs[1]), 0.0, 1e-12);
  EXPECT_NEAR(dot(vs[1], vs[2]), 0.0, 1e-12);
}

TEST(Gateway, DimensionChangeIsConfigError) {
  Gateway g;
  g.add_text_embed(backend("w", Capability::TextEmbed), std::make_shared<WrongDim>());
  g.embed_text({"a"});
  EXPECT_THROW(g.embed_text({"b"}), ConfigError);
}

TEST(Gateway, JointSimilarityAndCapabilityError) {
  Gateway g;
  auto clip = std::make_shared<HashImageEmbedder>(8);
  auto cfg = backend("clip", Capability::ImageEmbed);
  cfg.joint = true;
  g.add_image_embed(cfg, clip);
  const Bytes png = encode_png(PatternRenderer::pattern("x", 1));
  Embedding e = Embedding::Zero(8);
  e[0] = 1;
  clip->pin_image(sha256_hex(png), e);
  clip->pin_text("match", e);
  EXPECT_NEAR(g.joint_similarity(png, "match"), 100.0, 1e-4);

  class ImageOnly : public ImageEmbedBackend {
   public:
    std::string model_id() const override { return "img"; }
    Embedding embed_image(std::span<const std::uint8_t>) override { return Embedding::Ones(4); }
  };
  Gateway h;
  h.add_image_embed(backend("img", Capability::ImageEmbed), std::make_shared<ImageOnly>());
  EXPECT_THROW(h.joint_similarity(png, "x"), CapabilityError);
}

TEST(Gateway, RetriesTransportErrors) {
  Gateway g;
  auto cfg = backend("f", Capability::Text);
  cfg.retry.max_attempts = 3;
  auto flaky = std::make_shared<FlakyText>(2);
  g.add_text(cfg, flaky);
  EXPECT_EQ(g.complete_text("p", {}), "ok");
  EXPECT_EQ(flaky->calls(), 3);

  Gateway h;
  auto dead = std::make_shared<FlakyText>(100);
  h.add_text(cfg, dead);
  EXPECT_THROW(h.complete_text("p", {}), BackoffExhausted);
  EXPECT_EQ(dead->calls(), 3);
}

TEST(Gateway, ConcurrencyBoundHolds) {
  Gateway g;
  auto cfg = backend("slow", Capability::Text);
  cfg.max_concurrent = 2;
  auto slow = std::make_shared<SlowText>();
  g.add_text(cfg, slow);
  std::vector<std::thread> ts;
  for (int i = 0; i < 8; ++i) ts.emplace_back([&] { g.complete_text("p", {}); });
  for (auto& t : ts) t.join();
  EXPECT_LE(slow->peak_.load(), 2);
  EXPECT_GE(slow->peak_.load(), 1);
}

TEST(Gateway, RunLogHoldsMetadataOnly) {
  TempDir dir;
  auto log = std::make_shared<RunLog>(dir / "run.log", logical_clock());
  auto g = build_gateway(GatewayConfig::all_mock(), log);
  g->complete_text("Word: Secretive -> Representamen:", {});
  const std::string text = metobench::testing::slurp(dir / "run.log");
  EXPECT_EQ(text.find("Secretive"), std::string::npos);
  const Json line = Json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(line["op"], "complete_text");
  EXPECT_EQ(line["outcome"], "ok");
  EXPECT_TRUE(line.contains("ts"));
}

TEST(Gateway, MultimodalDownscalesLargeImages) {
  Gateway g;
  auto cfg = backend("vlm", Capability::Multimodal);
  cfg.max_image_side = 16;
  std::pair<int, int> seen{0, 0};
  g.add_multimodal(cfg, std::make_shared<FunctionMultimodalBackend>(
                            [&](std::span<const std::uint8_t> png, const std::string&) {
                              const auto img = decode_png(Bytes(png.begin(), png.end()));
                              seen = {img.width, img.height};
                              return std::string("A");
                            },
                            "vlm"));
  const Bytes png = encode_png(PatternRenderer::pattern("x", 1));
  EXPECT_EQ(g.answer_multimodal(png, "q", {}), "A");
  EXPECT_EQ(seen, std::make_pair(16, 16));
}

TEST(GatewayConfig, JsonRoundTripAndMockBuild) {
  const auto cfg = GatewayConfig::all_mock();
  EXPECT_EQ(GatewayConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  auto g = build_gateway(cfg);
  for (auto c : {Capability::Text, Capability::Image, Capability::TextEmbed, Capability::ImageEmbed,
                 Capability::Multimodal})
    EXPECT_TRUE(g->has(c));
  EXPECT_THROW(GatewayConfig::from_json(Json::object()), ConfigError);
}
