#pragma once

#include "metobench/hashing.hpp"
#include "metobench/jsonl.hpp"
#include "metobench/linalg.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metobench {

// LLM sampling settings. Defaults are the ones used for both text stages.
struct SamplingParams {
  double temperature = 0.9;
  double top_p = 0.9;
  double repetition_penalty = 1.1;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  void validate() const;
};

struct RenderParams {
  int inference_steps = 35;
  double guidance_scale = 7.5;
  int width = 1024;
  int height = 1024;
  std::optional<std::int64_t> seed;

  void validate() const;
};

Json to_json(const SamplingParams& p);
Json to_json(const RenderParams& p);
RenderParams render_params_from_json(const Json& j);

enum class Capability { Text, Image, TextEmbed, ImageEmbed, Multimodal };
std::string_view to_string(Capability c);
Capability parse_capability(std::string_view s);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{250};
  double jitter = 0.5;  // backoff is scaled by a uniform factor in [1, 1 + jitter]
};

// One backend section of the gateway config file. `auth_env` names the
// environment variable holding the credential; the secret itself is only
// read at request time and never stored here.
struct BackendConfig {
  std::string name;
  Capability capability = Capability::Text;
  std::string url;
  std::string model;
  std::string auth_env;
  double timeout_s = 120;
  int max_concurrent = 4;
  RetryPolicy retry;
  bool joint = false;        // image_embed backends that also embed text
  int max_image_side = 0;    // multimodal input limit in pixels; 0 = none

  void validate() const;
  Json to_json() const;
  static BackendConfig from_json(const Json& j);
};

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Retryable failure raised by a backend (connection, timeout, 5xx, 429).
struct TransportError : GatewayError {
  using GatewayError::GatewayError;
};
struct BackoffExhausted : GatewayError {
  using GatewayError::GatewayError;
};
struct EmptyCompletion : GatewayError {
  using GatewayError::GatewayError;
};
struct ModerationRefusal : GatewayError {
  using GatewayError::GatewayError;
};
struct CapabilityError : GatewayError {
  using GatewayError::GatewayError;
};
struct ConfigError : GatewayError {
  using GatewayError::GatewayError;
};
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Completion {
  std::string text;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string model_id() const = 0;
  virtual Completion complete(const std::string& prompt, const SamplingParams& params) = 0;
};

class ImageBackend {
 public:
  virtual ~ImageBackend() = default;
  virtual std::string model_id() const = 0;
  // `params.seed` is always set by the gateway before this is called.
  virtual Bytes render(const std::string& description, const RenderParams& params) = 0;
};

class TextEmbedBackend {
 public:
  virtual ~TextEmbedBackend() = default;
  virtual std::string model_id() const = 0;
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
};

class ImageEmbedBackend {
 public:
  virtual ~ImageEmbedBackend() = default;
  virtual std::string model_id() const = 0;
  virtual Embedding embed_image(std::span<const std::uint8_t> png) = 0;
  // Joint image-text backends embed text into the image space.
  virtual bool joint() const { return false; }
  virtual Embedding embed_text(const std::string& text);
  // Multiplier applied to the cosine to produce the backend's raw score.
  virtual double logit_scale() const { return 100.0; }
};

class MultimodalBackend {
 public:
  virtual ~MultimodalBackend() = default;
  virtual std::string model_id() const = 0;
  virtual Completion answer(std::span<const std::uint8_t> png, const std::string& prompt,
                            const SamplingParams& params) = 0;
};

// Counting semaphore with a runtime bound.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit);
  void acquire();
  void release();
  int limit() const { return limit_; }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int available_;
};

// Line-delimited JSON log of request metadata. Never receives prompts'
// credentials or backend secrets, only sizes, timings and model ids.
class RunLog {
 public:
  RunLog() = default;
  RunLog(const std::filesystem::path& path, Clock clock);
  void write(Json entry);

 private:
  std::mutex mu_;
  std::ofstream out_;
  Clock clock_;
};

struct RenderedImage {
  Bytes png;
  RenderParams effective;
  std::string model;
};

// Provider-agnostic front door to every model capability. Thread-safe; each
// backend bounds its own in-flight requests. Backends are addressed by name;
// an empty name selects the first backend registered for the capability.
class Gateway {
 public:
  Gateway();
  explicit Gateway(std::shared_ptr<RunLog> log);
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void add_text(BackendConfig cfg, std::shared_ptr<TextBackend> backend);
  void add_image(BackendConfig cfg, std::shared_ptr<ImageBackend> backend);
  void add_text_embed(BackendConfig cfg, std::shared_ptr<TextEmbedBackend> backend);
  void add_image_embed(BackendConfig cfg, std::shared_ptr<ImageEmbedBackend> backend);
  void add_multimodal(BackendConfig cfg, std::shared_ptr<MultimodalBackend> backend);

  bool has(Capability c, std::string_view name = {}) const;
  std::vector<std::string> names(Capability c) const;
  std::string model_id(Capability c, std::string_view name = {}) const;

  std::string complete_text(const std::string& prompt, const SamplingParams& params,
                            std::string_view backend = {});
  RenderedImage render_image(const std::string& description, const RenderParams& params,
                             std::string_view backend = {});
  // Unit-normalised, one vector per input.
  std::vector<Embedding> embed_text(const std::vector<std::string>& texts,
                                    std::string_view backend = {});
  Embedding embed_image(std::span<const std::uint8_t> png, std::string_view backend = {});
  // Raw backend score: logit_scale * cosine in the joint space.
  double joint_similarity(std::span<const std::uint8_t> png, const std::string& text,
                          std::string_view backend = {});
  std::string answer_multimodal(std::span<const std::uint8_t> png, const std::string& prompt,
                                const SamplingParams& params, std::string_view backend = {});

 private:
  template <typename B>
  struct Slot {
    BackendConfig config;
    std::shared_ptr<B> backend;
    std::shared_ptr<ConcurrencyLimiter> limiter;
    std::shared_ptr<std::optional<Eigen::Index>> dim;  // embedding dimension seen so far
  };
  template <typename B>
  using Registry = std::vector<Slot<B>>;

  template <typename B>
  void add_slot(Registry<B>& registry, BackendConfig cfg, std::shared_ptr<B> backend, Capability cap);
  template <typename B>
  static Slot<B>& find(Registry<B>& reg, Capability c, std::string_view name);
  template <typename B>
  static const Slot<B>* find_opt(const Registry<B>& reg, std::string_view name);
  template <typename B, typename F>
  auto call(Slot<B>& slot, Capability c, Json meta, F&& fn);
  Embedding normalize_checked(Embedding v, std::optional<Eigen::Index>& dim,
                              const std::string& backend);

  std::shared_ptr<RunLog> log_;
  mutable std::mutex mu_;
  Registry<TextBackend> text_;
  Registry<ImageBackend> image_;
  Registry<TextEmbedBackend> text_embed_;
  Registry<ImageEmbedBackend> image_embed_;
  Registry<MultimodalBackend> multimodal_;
};

struct GatewayConfig {
  std::vector<BackendConfig> backends;

  static GatewayConfig from_json(const Json& j);
  static GatewayConfig load(const std::filesystem::path& path);
  // One in-tree mock per capability.
  static GatewayConfig all_mock();
  Json to_json() const;
};

// Instantiates every configured backend. URLs of the form "mock:<variant>"
// select the in-tree mock providers; anything else is an HTTP endpoint.
std::unique_ptr<Gateway> build_gateway(const GatewayConfig& cfg, std::shared_ptr<RunLog> log = nullptr);

}  // namespace metobench
