#include "metobench/http_backends.hpp"
#include "metobench/mock_backends.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace metobench;
using metobench::testing::TempDir;

namespace {

// In-process fake provider on an ephemeral port.
class FakeProvider {
 public:
  FakeProvider() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

BackendConfig http_backend(const std::string& name, Capability cap, const std::string& url) {
  auto b = metobench::testing::backend(name, cap);
  b.url = url;
  b.timeout_s = 5;
  return b;
}

}  // namespace

TEST(ParseUrl, SplitsHostAndPath) {
  const auto u = parse_url("http://localhost:8000/v1/chat/completions");
  EXPECT_EQ(u.scheme_host_port, "http://localhost:8000");
  EXPECT_EQ(u.path, "/v1/chat/completions");
  EXPECT_EQ(parse_url("https://example.org").path, "/");
  EXPECT_THROW(parse_url("ftp://x/y"), ConfigError);
  EXPECT_THROW(parse_url("localhost:80"), ConfigError);
}

TEST(HttpBackends, ChatSendsBearerFromEnvAndParses) {
  FakeProvider fake;
  std::string auth;
  Json body;
  fake.server().Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    body = Json::parse(req.body);
    res.set_content(R"({"choices":[{"message":{"content":"Representamen: a, b, c"}}]})", "application/json");
  });
  ::setenv("METOBENCH_TEST_SECRET", "s3cr3t-value", 1);
  TempDir dir;
  auto log = std::make_shared<RunLog>(dir / "run.log", logical_clock());
  Gateway g(log);
  auto cfg = http_backend("chat", Capability::Text, fake.url("/v1/chat"));
  cfg.auth_env = "METOBENCH_TEST_SECRET";
  g.add_text(cfg, make_http_text_backend(cfg));
  SamplingParams p;
  p.seed = 4;
  EXPECT_EQ(g.complete_text("hello", p), "Representamen: a, b, c");
  EXPECT_EQ(auth, "Bearer s3cr3t-value");
  EXPECT_EQ(body["messages"][0]["content"], "hello");
  EXPECT_EQ(body["seed"], 4);
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.9);

  const std::string logged = metobench::testing::slurp(dir / "run.log");
  EXPECT_EQ(logged.find("s3cr3t"), std::string::npos);
  EXPECT_EQ(cfg.to_json().dump().find("s3cr3t"), std::string::npos);
  ::unsetenv("METOBENCH_TEST_SECRET");
}

TEST(HttpBackends, RetriesOn429ThenSucceeds) {
  FakeProvider fake;
  std::atomic<int> hits{0};
  fake.server().Post("/chat", [&](const httplib::Request&, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 429;
      res.set_content(R"({"error":"slow down"})", "application/json");
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"fine"}}]})", "application/json");
  });
  Gateway g;
  auto cfg = http_backend("chat", Capability::Text, fake.url("/chat"));
  g.add_text(cfg, make_http_text_backend(cfg));
  EXPECT_EQ(g.complete_text("x", {}), "fine");
  EXPECT_EQ(hits.load(), 2);
}

TEST(HttpBackends, PersistentServerErrorExhaustsRetries) {
  FakeProvider fake;
  std::atomic<int> hits{0};
  fake.server().Post("/chat", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  Gateway g;
  auto cfg = http_backend("chat", Capability::Text, fake.url("/chat"));
  cfg.retry.max_attempts = 2;
  g.add_text(cfg, make_http_text_backend(cfg));
  EXPECT_THROW(g.complete_text("x", {}), BackoffExhausted);
  EXPECT_EQ(hits.load(), 2);
}

TEST(HttpBackends, UnreachableHostIsTransportFailure) {
  Gateway g;
  auto cfg = http_backend("dead", Capability::Text, "http://127.0.0.1:1/none");
  cfg.retry.max_attempts = 2;
  cfg.timeout_s = 1;
  g.add_text(cfg, make_http_text_backend(cfg));
  EXPECT_THROW(g.complete_text("x", {}), BackoffExhausted);
}

TEST(HttpBackends, Status451IsModeration) {
  FakeProvider fake;
  fake.server().Post("/render", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 451;
    res.set_content(R"({"error":"blocked"})", "application/json");
  });
  Gateway g;
  auto cfg = http_backend("img", Capability::Image, fake.url("/render"));
  g.add_image(cfg, make_http_image_backend(cfg));
  RenderParams p;
  p.seed = 1;
  EXPECT_THROW(g.render_image("x", p), ModerationRefusal);
}

TEST(HttpBackends, RenderDecodesBase64AndSendsParams) {
  FakeProvider fake;
  const Bytes png = encode_png(PatternRenderer::pattern("scene", 3));
  Json sent;
  fake.server().Post("/render", [&](const httplib::Request& req, httplib::Response& res) {
    sent = Json::parse(req.body);
    res.set_content(Json{{"data", {{{"b64_json", base64_encode(png)}}}}}.dump(), "application/json");
  });
  Gateway g;
  auto cfg = http_backend("img", Capability::Image, fake.url("/render"));
  g.add_image(cfg, make_http_image_backend(cfg));
  RenderParams p;
  p.seed = 99;
  EXPECT_EQ(g.render_image("scene", p).png, png);
  EXPECT_EQ(sent["params"]["steps"], 35);
  EXPECT_EQ(sent["params"]["seed"], 99);
}

TEST(HttpBackends, EmbeddingsFollowIndexField) {
  FakeProvider fake;
  fake.server().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"index":1,"embedding":[0,2]},{"index":0,"embedding":[3,0]}]})",
                    "application/json");
  });
  Gateway g;
  auto cfg = http_backend("emb", Capability::TextEmbed, fake.url("/embed"));
  g.add_text_embed(cfg, make_http_text_embed_backend(cfg));
  const auto v = g.embed_text({"a", "b"});
  EXPECT_FLOAT_EQ(v[0][0], 1.0f);
  EXPECT_FLOAT_EQ(v[1][1], 1.0f);
}

TEST(HttpBackends, MultimodalSendsDataUrl) {
  FakeProvider fake;
  std::string url;
  fake.server().Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
    url = Json::parse(req.body)["messages"][0]["content"][0]["image_url"]["url"];
    res.set_content(R"({"choices":[{"message":{"content":"B"}}]})", "application/json");
  });
  Gateway g;
  auto cfg = http_backend("vlm", Capability::Multimodal, fake.url("/chat"));
  g.add_multimodal(cfg, make_http_multimodal_backend(cfg));
  const Bytes png = encode_png(PatternRenderer::pattern("q", 1));
  EXPECT_EQ(g.answer_multimodal(png, "which?", {}), "B");
  EXPECT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
}
