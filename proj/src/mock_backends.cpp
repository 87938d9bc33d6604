#include "metobench/mock_backends.hpp"

#include "metobench/png.hpp"
#include "metobench/text.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace metobench {

namespace {

constexpr std::array<std::string_view, 48> kObjects = {
    "candle",       "hourglass",     "compass",       "lantern",      "umbrella",     "violin",
    "bicycle",      "teapot",        "folded map",    "brass key",    "feather",      "wall clock",
    "rope ladder",  "anchor",        "paper kite",   "stone bridge", "open window",  "worn book",
    "hand mirror",  "park bench",    "envelope",      "telescope",    "harp",         "suitcase",
    "camera",       "chessboard",    "glass bottle",  "coiled rope",  "bronze bell",  "seashell",
    "flag",         "typewriter",    "globe",         "oil lamp",     "wicker basket", "cart wheel",
    "crown",        "balance scale", "quill pen",     "seed pods",    "paper boat",   "stone steps",
    "kettle",       "garden gate",   "wooden chair",  "broken chain", "pocket watch", "leather boots",
};

std::string last_between(const std::string& s, std::string_view open, std::string_view close) {
  const auto close_pos = s.rfind(close);
  if (close_pos == std::string::npos) return {};
  const auto open_pos = s.rfind(open, close_pos);
  if (open_pos == std::string::npos) return {};
  const auto begin = open_pos + open.size();
  return trim(std::string_view(s).substr(begin, close_pos - begin));
}

}  // namespace

Embedding hashed_gaussian(std::string_view key, int dim, std::uint64_t salt) {
  std::mt19937_64 rng(mix_seed(fnv1a64(key), salt));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Embedding v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

Completion TemplatedTextBackend::complete(const std::string& prompt, const SamplingParams& params) {
  const std::uint64_t seed = static_cast<std::uint64_t>(params.seed.value_or(0));
  const std::string body = trim(prompt);

  if (body.ends_with("-> Representamen:")) {
    const std::string word = last_between(body, "Object:", "-> Representamen:");
    std::mt19937_64 rng(mix_seed(fnv1a64(to_lower(word)), seed));
    std::vector<std::string_view> pool(kObjects.begin(), kObjects.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::string> picks;
    for (std::size_t i = 0; i < 5; ++i) picks.push_back(capitalize(pool[i]));
    return {"Object: " + word + " -> Representamen: " + join(picks, ", "), std::nullopt, std::nullopt};
  }

  if (body.ends_with("|| Output:")) {
    const std::string objects_field = last_between(body, "Objects:", "|| Concept Word:");
    std::vector<std::string> objects;
    for (const auto& o : split(objects_field, ',')) {
      const auto t = to_lower(trim(o));
      if (!t.empty()) objects.push_back(t);
    }
    while (objects.size() < 4) objects.push_back("an empty frame");
    const bool abstract = body.find("abstract artistic description") != std::string::npos;
    std::mt19937_64 rng(mix_seed(fnv1a64(objects_field), seed));
    std::shuffle(objects.begin(), objects.end(), rng);
    std::string text;
    if (abstract) {
      text = "Fractured planes of ochre and teal split the " + objects[0] +
             " into angular shards. The " + objects[1] + " spirals through a cubist grid while the " +
             objects[2] + " and the " + objects[3] + " dissolve into restless geometric rhythm.";
    } else {
      text = "In soft morning haze, the " + objects[0] + " rests beside the " + objects[1] +
             ", while the " + objects[2] + " and the " + objects[3] +
             " catch a faint glow on a weathered wooden surface, arranged as if someone just stepped away.";
    }
    return {text, std::nullopt, std::nullopt};
  }

  std::mt19937_64 rng(mix_seed(fnv1a64(body), seed));
  return {"mock completion " + std::to_string(rng() % 100000), std::nullopt, std::nullopt};
}

ScriptedTextBackend::ScriptedTextBackend(std::vector<std::string> responses, std::string model)
    : responses_(std::move(responses)), model_(std::move(model)) {
  if (responses_.empty()) throw std::invalid_argument("scripted backend needs at least one response");
}

Completion ScriptedTextBackend::complete(const std::string& prompt, const SamplingParams&) {
  {
    std::lock_guard lock(mu_);
    prompts_.push_back(prompt);
  }
  const std::size_t i = calls_.fetch_add(1);
  return {responses_[std::min(i, responses_.size() - 1)], std::nullopt, std::nullopt};
}

std::vector<std::string> ScriptedTextBackend::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

RgbImage PatternRenderer::pattern(const std::string& description, std::int64_t seed) {
  std::mt19937_64 rng(mix_seed(fnv1a64(description), static_cast<std::uint64_t>(seed)));
  RgbImage img{kSide, kSide, Bytes(static_cast<std::size_t>(kSide) * kSide * 3)};
  std::array<std::uint8_t, 6> base{};
  for (auto& b : base) b = static_cast<std::uint8_t>(rng() & 0xff);
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int v = base[c] + (base[c + 3] - base[c]) * (x + y) / (2 * kSide);
        img.pixels[(static_cast<std::size_t>(y) * kSide + x) * 3 + c] = static_cast<std::uint8_t>(v);
      }
    }
  }
  for (int r = 0; r < 6; ++r) {
    const int x0 = static_cast<int>(rng() % kSide);
    const int y0 = static_cast<int>(rng() % kSide);
    const int w = 4 + static_cast<int>(rng() % 20);
    const int h = 4 + static_cast<int>(rng() % 20);
    const std::array<std::uint8_t, 3> color{static_cast<std::uint8_t>(rng() & 0xff),
                                            static_cast<std::uint8_t>(rng() & 0xff),
                                            static_cast<std::uint8_t>(rng() & 0xff)};
    for (int y = y0; y < std::min(kSide, y0 + h); ++y)
      for (int x = x0; x < std::min(kSide, x0 + w); ++x)
        for (int c = 0; c < 3; ++c) img.pixels[(static_cast<std::size_t>(y) * kSide + x) * 3 + c] = color[c];
  }
  return img;
}

Bytes PatternRenderer::render(const std::string& description, const RenderParams& params) {
  const std::string lower = to_lower(description);
  for (const auto& term : refusal_terms_) {
    if (lower.find(to_lower(term)) != std::string::npos) {
      throw ModerationRefusal("mock content policy rejected the prompt (matched '" + term + "')");
    }
  }
  return encode_png(pattern(description, params.seed.value_or(0)));
}

std::vector<Embedding> HashTextEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(3.0f * vector_for(t));
  return out;
}

void HashTextEmbedder::pin(const std::string& text, Embedding v) {
  std::lock_guard lock(mu_);
  pinned_[to_lower(trim(text))] = std::move(v);
}

Embedding HashTextEmbedder::vector_for(const std::string& text) const {
  const std::string key = to_lower(trim(text));
  {
    std::lock_guard lock(mu_);
    if (const auto it = pinned_.find(key); it != pinned_.end()) return it->second;
  }
  return hashed_gaussian(key, dim_, salt_);
}

std::vector<Embedding> BasisTextEmbedder::embed(const std::vector<std::string>& texts) {
  std::lock_guard lock(mu_);
  std::vector<Embedding> out;
  for (const auto& t : texts) {
    const auto [it, inserted] = index_.emplace(t, static_cast<int>(index_.size()));
    if (it->second >= dim_) throw GatewayError("basis embedder ran out of dimensions");
    out.push_back(Embedding::Unit(dim_, it->second));
  }
  return out;
}

Embedding HashImageEmbedder::embed_image(std::span<const std::uint8_t> png) {
  ++image_calls_;
  {
    std::lock_guard lock(mu_);
    if (const auto it = pinned_images_.find(sha256_hex(png)); it != pinned_images_.end()) return it->second;
  }
  const RgbImage img = decode_png(png);
  const std::string_view pixels(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return hashed_gaussian(pixels, dim_, 0x1a6e);
}

Embedding HashImageEmbedder::embed_text(const std::string& text) {
  const std::string key = to_lower(trim(text));
  {
    std::lock_guard lock(mu_);
    if (const auto it = pinned_texts_.find(key); it != pinned_texts_.end()) return it->second;
  }
  return hashed_gaussian(key, dim_, 0x7e47);
}

void HashImageEmbedder::pin_image(const std::string& image_id, Embedding v) {
  std::lock_guard lock(mu_);
  pinned_images_[image_id] = std::move(v);
}

void HashImageEmbedder::pin_text(const std::string& text, Embedding v) {
  std::lock_guard lock(mu_);
  pinned_texts_[to_lower(trim(text))] = std::move(v);
}

std::shared_ptr<MultimodalBackend> constant_answer_backend(std::string answer, std::string model) {
  return std::make_shared<FunctionMultimodalBackend>(
      [answer = std::move(answer)](std::span<const std::uint8_t>, const std::string&) { return answer; },
      std::move(model));
}

std::shared_ptr<MultimodalBackend> image_hash_answer_backend(std::string model) {
  return std::make_shared<FunctionMultimodalBackend>(
      [](std::span<const std::uint8_t> png, const std::string&) {
        const std::string_view bytes(reinterpret_cast<const char*>(png.data()), png.size());
        return std::string(1, static_cast<char>('A' + fnv1a64(bytes) % 4));
      },
      std::move(model));
}

}  // namespace metobench
