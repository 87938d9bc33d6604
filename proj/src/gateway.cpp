#include "metobench/gateway.hpp"

#include "metobench/png.hpp"
#include "metobench/text.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

namespace metobench {

void SamplingParams::validate() const {
  if (!(temperature >= 0)) throw PreconditionError("temperature must be >= 0");
  if (!(top_p > 0 && top_p <= 1)) throw PreconditionError("top_p must lie in (0, 1]");
  if (!(repetition_penalty >= 1)) throw PreconditionError("repetition_penalty must be >= 1");
  if (max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
}

void RenderParams::validate() const {
  if (inference_steps <= 0) throw PreconditionError("inference_steps must be positive");
  if (width <= 0 || height <= 0) throw PreconditionError("width and height must be positive");
}

Json to_json(const SamplingParams& p) {
  Json j = {{"temperature", p.temperature},
            {"top_p", p.top_p},
            {"repetition_penalty", p.repetition_penalty},
            {"max_tokens", p.max_tokens}};
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

Json to_json(const RenderParams& p) {
  Json j = {{"inference_steps", p.inference_steps},
            {"guidance_scale", p.guidance_scale},
            {"width", p.width},
            {"height", p.height}};
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

RenderParams render_params_from_json(const Json& j) {
  RenderParams p;
  p.inference_steps = j.value("inference_steps", p.inference_steps);
  p.guidance_scale = j.value("guidance_scale", p.guidance_scale);
  p.width = j.value("width", p.width);
  p.height = j.value("height", p.height);
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
  return p;
}

std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::Text: return "text";
    case Capability::Image: return "image";
    case Capability::TextEmbed: return "text_embed";
    case Capability::ImageEmbed: return "image_embed";
    case Capability::Multimodal: return "multimodal";
  }
  return "?";
}

Capability parse_capability(std::string_view s) {
  for (auto c : {Capability::Text, Capability::Image, Capability::TextEmbed, Capability::ImageEmbed,
                 Capability::Multimodal}) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown capability '" + std::string(s) + "'");
}

void BackendConfig::validate() const {
  if (name.empty()) throw ConfigError("backend name is empty");
  if (url.empty()) throw ConfigError("backend '" + name + "' has no url");
  if (max_concurrent < 1) throw ConfigError("backend '" + name + "': max_concurrent must be >= 1");
  if (retry.max_attempts < 1) throw ConfigError("backend '" + name + "': retries must be >= 1");
  if (!(timeout_s > 0)) throw ConfigError("backend '" + name + "': timeout_s must be positive");
}

Json BackendConfig::to_json() const {
  return {{"name", name},
          {"capability", std::string(metobench::to_string(capability))},
          {"url", url},
          {"model", model},
          {"auth_env", auth_env},
          {"timeout_s", timeout_s},
          {"max_concurrent", max_concurrent},
          {"retries", retry.max_attempts},
          {"backoff_ms", retry.base_backoff.count()},
          {"joint", joint},
          {"max_image_side", max_image_side}};
}

BackendConfig BackendConfig::from_json(const Json& j) {
  BackendConfig c;
  try {
    c.capability = parse_capability(j.at("capability").get<std::string>());
    c.name = j.value("name", std::string(metobench::to_string(c.capability)));
    c.url = j.at("url").get<std::string>();
    c.model = j.value("model", "");
    c.auth_env = j.value("auth_env", "");
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_concurrent = j.value("max_concurrent", c.max_concurrent);
    c.retry.max_attempts = j.value("retries", c.retry.max_attempts);
    c.retry.base_backoff = std::chrono::milliseconds(j.value("backoff_ms", c.retry.base_backoff.count()));
    c.joint = j.value("joint", false);
    c.max_image_side = j.value("max_image_side", 0);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("backend config: ") + e.what());
  }
  c.validate();
  return c;
}

Embedding ImageEmbedBackend::embed_text(const std::string&) {
  throw CapabilityError("backend '" + model_id() + "' has no joint text embedding");
}

ConcurrencyLimiter::ConcurrencyLimiter(int limit) : limit_(limit), available_(limit) {
  if (limit < 1) throw ConfigError("concurrency limit must be >= 1");
}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

RunLog::RunLog(const std::filesystem::path& path, Clock clock) : clock_(std::move(clock)) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open run log " + path.string());
}

void RunLog::write(Json entry) {
  std::lock_guard lock(mu_);
  if (!out_.is_open()) return;
  if (clock_) entry["ts"] = clock_();
  out_ << entry.dump() << '\n';
  out_.flush();
}

Gateway::Gateway() : log_(std::make_shared<RunLog>()) {}

Gateway::Gateway(std::shared_ptr<RunLog> log) : log_(log ? std::move(log) : std::make_shared<RunLog>()) {}

namespace {

template <typename B>
void check_backend(const BackendConfig& cfg, const std::shared_ptr<B>& backend, Capability expect) {
  if (!backend) throw ConfigError("backend '" + cfg.name + "' is null");
  if (cfg.capability != expect) {
    throw ConfigError("backend '" + cfg.name + "' is configured as " +
                      std::string(to_string(cfg.capability)) + ", registered as " +
                      std::string(to_string(expect)));
  }
  cfg.validate();
}

struct LimiterGuard {
  explicit LimiterGuard(ConcurrencyLimiter& l) : limiter(l) { limiter.acquire(); }
  ~LimiterGuard() { limiter.release(); }
  ConcurrencyLimiter& limiter;
};

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt) {
  thread_local std::mt19937 rng{std::random_device{}()};
  std::uniform_real_distribution<double> u(1.0, 1.0 + policy.jitter);
  const double base = static_cast<double>(policy.base_backoff.count()) * (1 << (attempt - 1));
  return std::chrono::milliseconds(static_cast<long long>(base * u(rng)));
}

}  // namespace

template <typename B>
void Gateway::add_slot(Registry<B>& registry, BackendConfig cfg, std::shared_ptr<B> backend, Capability cap) {
  check_backend(cfg, backend, cap);
  std::lock_guard lock(mu_);
  for (const auto& s : registry) {
    if (s.config.name == cfg.name) throw ConfigError("duplicate backend name '" + cfg.name + "'");
  }
  auto limiter = std::make_shared<ConcurrencyLimiter>(cfg.max_concurrent);
  registry.push_back({std::move(cfg), std::move(backend), std::move(limiter),
                      std::make_shared<std::optional<Eigen::Index>>()});
}

void Gateway::add_text(BackendConfig cfg, std::shared_ptr<TextBackend> backend) {
  add_slot(text_, std::move(cfg), std::move(backend), Capability::Text);
}
void Gateway::add_image(BackendConfig cfg, std::shared_ptr<ImageBackend> backend) {
  add_slot(image_, std::move(cfg), std::move(backend), Capability::Image);
}
void Gateway::add_text_embed(BackendConfig cfg, std::shared_ptr<TextEmbedBackend> backend) {
  add_slot(text_embed_, std::move(cfg), std::move(backend), Capability::TextEmbed);
}
void Gateway::add_image_embed(BackendConfig cfg, std::shared_ptr<ImageEmbedBackend> backend) {
  add_slot(image_embed_, std::move(cfg), std::move(backend), Capability::ImageEmbed);
}
void Gateway::add_multimodal(BackendConfig cfg, std::shared_ptr<MultimodalBackend> backend) {
  add_slot(multimodal_, std::move(cfg), std::move(backend), Capability::Multimodal);
}

template <typename B>
const Gateway::Slot<B>* Gateway::find_opt(const Registry<B>& reg, std::string_view name) {
  if (reg.empty()) return nullptr;
  if (name.empty()) return &reg.front();
  for (const auto& s : reg) {
    if (s.config.name == name) return &s;
  }
  return nullptr;
}

template <typename B>
Gateway::Slot<B>& Gateway::find(Registry<B>& reg, Capability c, std::string_view name) {
  const auto* slot = find_opt(reg, name);
  if (slot == nullptr) {
    throw CapabilityError(name.empty() ? "no backend configured for capability " + std::string(to_string(c))
                                       : "no " + std::string(to_string(c)) + " backend named '" +
                                             std::string(name) + "'");
  }
  return const_cast<Slot<B>&>(*slot);
}

bool Gateway::has(Capability c, std::string_view name) const {
  std::lock_guard lock(mu_);
  switch (c) {
    case Capability::Text: return find_opt(text_, name) != nullptr;
    case Capability::Image: return find_opt(image_, name) != nullptr;
    case Capability::TextEmbed: return find_opt(text_embed_, name) != nullptr;
    case Capability::ImageEmbed: return find_opt(image_embed_, name) != nullptr;
    case Capability::Multimodal: return find_opt(multimodal_, name) != nullptr;
  }
  return false;
}

std::vector<std::string> Gateway::names(Capability c) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  auto collect = [&](const auto& reg) {
    for (const auto& s : reg) out.push_back(s.config.name);
  };
  switch (c) {
    case Capability::Text: collect(text_); break;
    case Capability::Image: collect(image_); break;
    case Capability::TextEmbed: collect(text_embed_); break;
    case Capability::ImageEmbed: collect(image_embed_); break;
    case Capability::Multimodal: collect(multimodal_); break;
  }
  return out;
}

std::string Gateway::model_id(Capability c, std::string_view name) const {
  std::lock_guard lock(mu_);
  auto& self = const_cast<Gateway&>(*this);
  switch (c) {
    case Capability::Text: return find(self.text_, c, name).backend->model_id();
    case Capability::Image: return find(self.image_, c, name).backend->model_id();
    case Capability::TextEmbed: return find(self.text_embed_, c, name).backend->model_id();
    case Capability::ImageEmbed: return find(self.image_embed_, c, name).backend->model_id();
    case Capability::Multimodal: return find(self.multimodal_, c, name).backend->model_id();
  }
  return {};
}

// Runs `fn` under the slot's concurrency bound, retrying transport failures
// with exponential backoff, and writes one run-log line per logical call.
template <typename B, typename F>
auto Gateway::call(Slot<B>& slot, Capability c, Json meta, F&& fn) {
  const auto& cfg = slot.config;
  meta["capability"] = std::string(to_string(c));
  meta["backend"] = cfg.name;
  meta["model"] = slot.backend->model_id();
  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
    try {
      LimiterGuard guard(*slot.limiter);
      auto result = fn(*slot.backend);
      meta["attempts"] = attempt;
      meta["outcome"] = "ok";
      meta["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return std::make_pair(std::move(result), std::move(meta));
    } catch (const TransportError& e) {
      last_error = e.what();
      spdlog::debug("{} attempt {}/{} failed: {}", cfg.name, attempt, cfg.retry.max_attempts, last_error);
      if (attempt < cfg.retry.max_attempts) std::this_thread::sleep_for(backoff_delay(cfg.retry, attempt));
    } catch (const std::exception& e) {
      meta["attempts"] = attempt;
      meta["outcome"] = "error";
      meta["error"] = e.what();
      log_->write(meta);
      throw;
    }
  }
  meta["attempts"] = cfg.retry.max_attempts;
  meta["outcome"] = "backoff_exhausted";
  meta["error"] = last_error;
  log_->write(meta);
  throw BackoffExhausted("backend '" + cfg.name + "' failed after " +
                         std::to_string(cfg.retry.max_attempts) + " attempts: " + last_error);
}

std::string Gateway::complete_text(const std::string& prompt, const SamplingParams& params,
                                   std::string_view backend) {
  if (prompt.empty()) throw PreconditionError("complete_text: prompt is empty");
  params.validate();
  Slot<TextBackend> slot;
  {
    std::lock_guard lock(mu_);
    slot = find(text_, Capability::Text, backend);
  }
  Json meta = {{"op", "complete_text"}, {"prompt_chars", prompt.size()}, {"params", to_json(params)}};
  auto [completion, info] =
      call(slot, Capability::Text, std::move(meta), [&](TextBackend& b) { return b.complete(prompt, params); });
  info["completion_chars"] = completion.text.size();
  if (completion.prompt_tokens) info["prompt_tokens"] = *completion.prompt_tokens;
  if (completion.completion_tokens) info["completion_tokens"] = *completion.completion_tokens;
  if (trim(completion.text).empty()) {
    info["outcome"] = "empty_completion";
    log_->write(info);
    throw EmptyCompletion("backend '" + slot.config.name + "' returned an empty completion");
  }
  log_->write(info);
  return completion.text;
}

RenderedImage Gateway::render_image(const std::string& description, const RenderParams& params,
                                    std::string_view backend) {
  if (trim(description).empty()) throw PreconditionError("render_image: description is empty");
  params.validate();
  Slot<ImageBackend> slot;
  {
    std::lock_guard lock(mu_);
    slot = find(image_, Capability::Image, backend);
  }
  RenderParams effective = params;
  if (!effective.seed) {
    std::random_device rd;
    effective.seed = static_cast<std::int64_t>((static_cast<std::uint64_t>(rd()) << 31) ^ rd()) &
                     0x7fffffffffffLL;
  }
  Json meta = {{"op", "render_image"}, {"prompt_chars", description.size()}, {"params", to_json(effective)}};
  auto [png, info] = call(slot, Capability::Image, std::move(meta),
                          [&](ImageBackend& b) { return b.render(description, effective); });
  info["bytes"] = png.size();
  log_->write(info);
  return {std::move(png), effective, slot.backend->model_id()};
}

Embedding Gateway::normalize_checked(Embedding v, std::optional<Eigen::Index>& dim,
                                     const std::string& backend) {
  {
    std::lock_guard lock(mu_);
    if (!dim) {
      dim = v.size();
    } else if (*dim != v.size()) {
      throw ConfigError("backend '" + backend + "' returned dimension " + std::to_string(v.size()) +
                        ", expected " + std::to_string(*dim));
    }
  }
  try {
    return unit_normalized(v);
  } catch (const std::domain_error&) {
    throw GatewayError("backend '" + backend + "' returned a zero or non-finite embedding");
  }
}

std::vector<Embedding> Gateway::embed_text(const std::vector<std::string>& texts, std::string_view backend) {
  if (texts.empty()) throw PreconditionError("embed_text: no inputs");
  Slot<TextEmbedBackend> slot;
  {
    std::lock_guard lock(mu_);
    slot = find(text_embed_, Capability::TextEmbed, backend);
  }
  Json meta = {{"op", "embed_text"}, {"inputs", texts.size()}};
  auto [vectors, info] = call(slot, Capability::TextEmbed, std::move(meta),
                              [&](TextEmbedBackend& b) { return b.embed(texts); });
  log_->write(info);
  if (vectors.size() != texts.size()) {
    throw GatewayError("backend '" + slot.config.name + "' returned " + std::to_string(vectors.size()) +
                       " vectors for " + std::to_string(texts.size()) + " inputs");
  }
  for (auto& v : vectors) v = normalize_checked(std::move(v), *slot.dim, slot.config.name);
  return vectors;
}

Embedding Gateway::embed_image(std::span<const std::uint8_t> png, std::string_view backend) {
  if (png.empty()) throw PreconditionError("embed_image: empty image");
  Slot<ImageEmbedBackend> slot;
  {
    std::lock_guard lock(mu_);
    slot = find(image_embed_, Capability::ImageEmbed, backend);
  }
  Json meta = {{"op", "embed_image"}, {"bytes", png.size()}};
  auto [vec, info] = call(slot, Capability::ImageEmbed, std::move(meta),
                          [&](ImageEmbedBackend& b) { return b.embed_image(png); });
  log_->write(info);
  return normalize_checked(std::move(vec), *slot.dim, slot.config.name);
}

double Gateway::joint_similarity(std::span<const std::uint8_t> png, const std::string& text,
                                 std::string_view backend) {
  if (png.empty() || text.empty()) throw PreconditionError("joint_similarity: empty input");
  Slot<ImageEmbedBackend> slot;
  {
    std::lock_guard lock(mu_);
    slot = find(image_embed_, Capability::ImageEmbed, backend);
  }
  if (!slot.backend->joint()) {
    throw CapabilityError("backend '" + slot.config.name + "' has no joint image-text embedding");
  }
  const Embedding img = embed_image(png, slot.config.name);
  Json meta = {{"op", "embed_text_joint"}, {"prompt_chars", text.size()}};
  auto [vec, info] = call(slot, Capability::ImageEmbed, std::move(meta),
                          [&](ImageEmbedBackend& b) { return b.embed_text(text); });
  log_->write(info);
  const Embedding txt = normalize_checked(std::move(vec), *slot.dim, slot.config.name);
  return slot.backend->logit_scale() * dot(img, txt);
}

std::string Gateway::answer_multimodal(std::span<const std::uint8_t> png, const std::string& prompt,
                                       const SamplingParams& params, std::string_view backend) {
  if (png.empty() || prompt.empty()) throw PreconditionError("answer_multimodal: empty input");
  params.validate();
  Slot<MultimodalBackend> slot;
  {
    std::lock_guard lock(mu_);
    slot = find(multimodal_, Capability::Multimodal, backend);
  }
  Json meta = {{"op", "answer_multimodal"}, {"prompt_chars", prompt.size()}, {"bytes", png.size()}};
  Bytes resized;
  std::span<const std::uint8_t> payload = png;
  if (slot.config.max_image_side > 0) {
    const RgbImage img = decode_png(png);
    if (std::max(img.width, img.height) > slot.config.max_image_side) {
      const RgbImage small = downscale_to_fit(img, slot.config.max_image_side);
      resized = encode_png(small);
      payload = resized;
      meta["downscaled"] = {{"from", {img.width, img.height}}, {"to", {small.width, small.height}}};
      spdlog::info("downscaled {}x{} image to {}x{} for backend '{}'", img.width, img.height, small.width,
                   small.height, slot.config.name);
    }
  }
  auto [completion, info] = call(slot, Capability::Multimodal, std::move(meta),
                                 [&](MultimodalBackend& b) { return b.answer(payload, prompt, params); });
  info["completion_chars"] = completion.text.size();
  if (trim(completion.text).empty()) {
    info["outcome"] = "empty_completion";
    log_->write(info);
    throw EmptyCompletion("backend '" + slot.config.name + "' returned an empty answer");
  }
  log_->write(info);
  return completion.text;
}

GatewayConfig GatewayConfig::from_json(const Json& j) {
  GatewayConfig cfg;
  if (!j.contains("backends") || !j["backends"].is_array()) {
    throw ConfigError("gateway config needs a 'backends' array");
  }
  for (const auto& b : j["backends"]) cfg.backends.push_back(BackendConfig::from_json(b));
  return cfg;
}

GatewayConfig GatewayConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open gateway config " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

GatewayConfig GatewayConfig::all_mock() {
  GatewayConfig cfg;
  auto mock = [](std::string name, Capability c, std::string url) {
    BackendConfig b;
    b.name = std::move(name);
    b.capability = c;
    b.url = std::move(url);
    b.model = b.name;
    b.retry.base_backoff = std::chrono::milliseconds(0);
    b.joint = c == Capability::ImageEmbed;
    return b;
  };
  cfg.backends = {mock("mock-llm", Capability::Text, "mock:templated"),
                  mock("mock-renderer", Capability::Image, "mock:pattern"),
                  mock("mock-text-embed", Capability::TextEmbed, "mock:hash"),
                  mock("mock-clip", Capability::ImageEmbed, "mock:hash"),
                  mock("mock-vlm", Capability::Multimodal, "mock:always-A")};
  return cfg;
}

Json GatewayConfig::to_json() const {
  Json arr = Json::array();
  for (const auto& b : backends) arr.push_back(b.to_json());
  return {{"backends", arr}};
}

}  // namespace metobench
