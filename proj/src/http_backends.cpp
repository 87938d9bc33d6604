#include "metobench/http_backends.hpp"

#include "metobench/mock_backends.hpp"
#include "metobench/text.hpp"

#include <httplib.h>

#include <cstdlib>

namespace metobench {

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("url '" + url + "' has no scheme");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported url scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (out.scheme_host_port.size() <= scheme_end + 3) throw ConfigError("url '" + url + "' has no host");
  return out;
}

namespace {

// Thin JSON-over-HTTP client shared by every backend kind.
class JsonEndpoint {
 public:
  explicit JsonEndpoint(const BackendConfig& cfg) : cfg_(cfg), url_(parse_url(cfg.url)) {}

  Json post(const Json& body) const {
    httplib::Client client(url_.scheme_host_port);
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg_.timeout_s * 1000));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!cfg_.auth_env.empty()) {
      if (const char* secret = std::getenv(cfg_.auth_env.c_str()); secret != nullptr && *secret) {
        headers.emplace("Authorization", std::string("Bearer ") + secret);
      }
    }
    const auto res = client.Post(url_.path, headers, body.dump(), "application/json");
    if (!res) {
      throw TransportError("backend '" + cfg_.name + "': " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransportError("backend '" + cfg_.name + "': HTTP " + std::to_string(res->status));
    }
    Json parsed;
    try {
      parsed = Json::parse(res->body);
    } catch (const Json::parse_error&) {
      if (res->status >= 400) {
        throw GatewayError("backend '" + cfg_.name + "': HTTP " + std::to_string(res->status));
      }
      throw GatewayError("backend '" + cfg_.name + "': response is not JSON");
    }
    if (res->status >= 400) {
      const std::string message = parsed.contains("error") ? parsed["error"].dump() : res->body;
      const std::string lower = to_lower(message);
      if (res->status == 451 || lower.find("content_policy") != std::string::npos ||
          lower.find("moderation") != std::string::npos || lower.find("safety") != std::string::npos) {
        throw ModerationRefusal("backend '" + cfg_.name + "' refused: " + message);
      }
      throw GatewayError("backend '" + cfg_.name + "': HTTP " + std::to_string(res->status) + ": " + message);
    }
    return parsed;
  }

  const BackendConfig& config() const { return cfg_; }

 private:
  BackendConfig cfg_;
  ParsedUrl url_;
};

Json sampling_fields(const BackendConfig& cfg, const SamplingParams& p) {
  Json body = {{"model", cfg.model},
               {"temperature", p.temperature},
               {"top_p", p.top_p},
               {"max_tokens", p.max_tokens},
               {"repetition_penalty", p.repetition_penalty}};
  if (p.seed) body["seed"] = *p.seed;
  return body;
}

Completion parse_chat(const Json& res, const std::string& backend) {
  try {
    const auto& choice = res.at("choices").at(0);
    if (choice.value("finish_reason", "") == "content_filter") {
      throw ModerationRefusal("backend '" + backend + "' filtered the completion");
    }
    Completion c;
    if (choice.contains("message")) {
      const auto& content = choice["message"]["content"];
      c.text = content.is_string() ? content.get<std::string>() : std::string();
    } else {
      c.text = choice.value("text", "");
    }
    if (res.contains("usage")) {
      const auto& u = res["usage"];
      if (u.contains("prompt_tokens")) c.prompt_tokens = u["prompt_tokens"].get<int>();
      if (u.contains("completion_tokens")) c.completion_tokens = u["completion_tokens"].get<int>();
    }
    return c;
  } catch (const Json::exception& e) {
    throw GatewayError("backend '" + backend + "': malformed chat response: " + e.what());
  }
}

Embedding parse_vector(const Json& v, const std::string& backend) {
  if (!v.is_array() || v.empty()) throw GatewayError("backend '" + backend + "': malformed embedding");
  Embedding out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i].get<float>();
  return out;
}

class HttpTextBackend : public TextBackend {
 public:
  explicit HttpTextBackend(const BackendConfig& cfg) : ep_(cfg) {}
  std::string model_id() const override { return ep_.config().model; }
  Completion complete(const std::string& prompt, const SamplingParams& params) override {
    Json body = sampling_fields(ep_.config(), params);
    body["messages"] = Json::array({{{"role", "user"}, {"content", prompt}}});
    return parse_chat(ep_.post(body), ep_.config().name);
  }

 private:
  JsonEndpoint ep_;
};

class HttpMultimodalBackend : public MultimodalBackend {
 public:
  explicit HttpMultimodalBackend(const BackendConfig& cfg) : ep_(cfg) {}
  std::string model_id() const override { return ep_.config().model; }
  Completion answer(std::span<const std::uint8_t> png, const std::string& prompt,
                    const SamplingParams& params) override {
    Json body = sampling_fields(ep_.config(), params);
    body["messages"] = Json::array(
        {{{"role", "user"},
          {"content",
           Json::array({{{"type", "image_url"},
                         {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}},
                        {{"type", "text"}, {"text", prompt}}})}}});
    return parse_chat(ep_.post(body), ep_.config().name);
  }

 private:
  JsonEndpoint ep_;
};

class HttpTextEmbedBackend : public TextEmbedBackend {
 public:
  explicit HttpTextEmbedBackend(const BackendConfig& cfg) : ep_(cfg) {}
  std::string model_id() const override { return ep_.config().model; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    const Json res = ep_.post({{"model", ep_.config().model}, {"input", texts}});
    std::vector<Embedding> out(texts.size());
    try {
      const auto& data = res.at("data");
      for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t idx = data[i].value("index", i);
        if (idx >= out.size()) throw GatewayError("embedding index out of range");
        out[idx] = parse_vector(data[i].at("embedding"), ep_.config().name);
      }
    } catch (const Json::exception& e) {
      throw GatewayError("backend '" + ep_.config().name + "': malformed embeddings: " + e.what());
    }
    return out;
  }

 private:
  JsonEndpoint ep_;
};

class HttpImageEmbedBackend : public ImageEmbedBackend {
 public:
  explicit HttpImageEmbedBackend(const BackendConfig& cfg) : ep_(cfg) {}
  std::string model_id() const override { return ep_.config().model; }
  bool joint() const override { return ep_.config().joint; }
  Embedding embed_image(std::span<const std::uint8_t> png) override {
    return first(ep_.post({{"model", ep_.config().model},
                           {"input", Json::array({{{"image", base64_encode(png)}}})}}));
  }
  Embedding embed_text(const std::string& text) override {
    if (!joint()) return ImageEmbedBackend::embed_text(text);
    return first(ep_.post({{"model", ep_.config().model}, {"input", Json::array({{{"text", text}}})}}));
  }

 private:
  Embedding first(const Json& res) const {
    try {
      return parse_vector(res.at("data").at(0).at("embedding"), ep_.config().name);
    } catch (const Json::exception& e) {
      throw GatewayError("backend '" + ep_.config().name + "': malformed embedding: " + e.what());
    }
  }
  JsonEndpoint ep_;
};

class HttpImageBackend : public ImageBackend {
 public:
  explicit HttpImageBackend(const BackendConfig& cfg) : ep_(cfg) {}
  std::string model_id() const override { return ep_.config().model; }
  Bytes render(const std::string& description, const RenderParams& params) override {
    const Json res = ep_.post({{"model", ep_.config().model},
                               {"prompt", description},
                               {"params",
                                {{"steps", params.inference_steps},
                                 {"guidance_scale", params.guidance_scale},
                                 {"width", params.width},
                                 {"height", params.height},
                                 {"seed", params.seed.value_or(0)}}}});
    try {
      if (res.contains("image")) return base64_decode(res["image"].get<std::string>());
      return base64_decode(res.at("data").at(0).at("b64_json").get<std::string>());
    } catch (const std::exception& e) {
      throw GatewayError("backend '" + ep_.config().name + "': malformed render response: " + e.what());
    }
  }

 private:
  JsonEndpoint ep_;
};

bool is_mock(const BackendConfig& cfg) { return cfg.url.rfind("mock:", 0) == 0; }

std::string mock_variant(const BackendConfig& cfg) { return cfg.url.substr(5); }

}  // namespace

std::shared_ptr<TextBackend> make_http_text_backend(const BackendConfig& cfg) {
  return std::make_shared<HttpTextBackend>(cfg);
}
std::shared_ptr<ImageBackend> make_http_image_backend(const BackendConfig& cfg) {
  return std::make_shared<HttpImageBackend>(cfg);
}
std::shared_ptr<TextEmbedBackend> make_http_text_embed_backend(const BackendConfig& cfg) {
  return std::make_shared<HttpTextEmbedBackend>(cfg);
}
std::shared_ptr<ImageEmbedBackend> make_http_image_embed_backend(const BackendConfig& cfg) {
  return std::make_shared<HttpImageEmbedBackend>(cfg);
}
std::shared_ptr<MultimodalBackend> make_http_multimodal_backend(const BackendConfig& cfg) {
  return std::make_shared<HttpMultimodalBackend>(cfg);
}

std::unique_ptr<Gateway> build_gateway(const GatewayConfig& cfg, std::shared_ptr<RunLog> log) {
  auto gw = std::make_unique<Gateway>(std::move(log));
  for (const auto& b : cfg.backends) {
    const std::string model = b.model.empty() ? b.name : b.model;
    switch (b.capability) {
      case Capability::Text:
        gw->add_text(b, is_mock(b) ? std::make_shared<TemplatedTextBackend>(model) : make_http_text_backend(b));
        break;
      case Capability::Image:
        gw->add_image(b, is_mock(b) ? std::make_shared<PatternRenderer>(std::set<std::string>{}, model)
                                    : make_http_image_backend(b));
        break;
      case Capability::TextEmbed:
        gw->add_text_embed(b, is_mock(b) ? std::make_shared<HashTextEmbedder>(64, 0, model)
                                         : make_http_text_embed_backend(b));
        break;
      case Capability::ImageEmbed:
        gw->add_image_embed(b, is_mock(b) ? std::make_shared<HashImageEmbedder>(64, model)
                                          : make_http_image_embed_backend(b));
        break;
      case Capability::Multimodal: {
        if (!is_mock(b)) {
          gw->add_multimodal(b, make_http_multimodal_backend(b));
          break;
        }
        const std::string v = mock_variant(b);
        if (v == "hash") {
          gw->add_multimodal(b, image_hash_answer_backend(model));
        } else if (v.rfind("always-", 0) == 0) {
          gw->add_multimodal(b, constant_answer_backend(v.substr(7), model));
        } else {
          throw ConfigError("unknown multimodal mock '" + v + "' (use mock:hash or mock:always-<text>)");
        }
        break;
      }
    }
  }
  return gw;
}

}  // namespace metobench
