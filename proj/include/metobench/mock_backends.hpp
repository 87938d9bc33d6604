#pragma once

// Deterministic in-process providers. Every output is a pure function of the
// inputs and the seed, so whole pipeline runs are reproducible without any
// external service.

#include "metobench/gateway.hpp"
#include "metobench/png.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace metobench {

// Answers representamen prompts with five items drawn from a fixed list of
// concrete nouns and description prompts with a templated scene over the
// given objects. Choice depends on (concept, seed).
class TemplatedTextBackend : public TextBackend {
 public:
  explicit TemplatedTextBackend(std::string model = "mock-llm") : model_(std::move(model)) {}
  std::string model_id() const override { return model_; }
  Completion complete(const std::string& prompt, const SamplingParams& params) override;

 private:
  std::string model_;
};

// Replays canned completions in order; the last one repeats once exhausted.
class ScriptedTextBackend : public TextBackend {
 public:
  explicit ScriptedTextBackend(std::vector<std::string> responses, std::string model = "mock-scripted");
  std::string model_id() const override { return model_; }
  Completion complete(const std::string& prompt, const SamplingParams& params) override;

  std::size_t calls() const { return calls_; }
  std::vector<std::string> prompts() const;

 private:
  std::vector<std::string> responses_;
  std::string model_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mu_;
  std::vector<std::string> prompts_;
};

class FunctionTextBackend : public TextBackend {
 public:
  using Fn = std::function<std::string(const std::string&, const SamplingParams&)>;
  FunctionTextBackend(Fn fn, std::string model) : fn_(std::move(fn)), model_(std::move(model)) {}
  std::string model_id() const override { return model_; }
  Completion complete(const std::string& prompt, const SamplingParams& params) override {
    return {fn_(prompt, params), std::nullopt, std::nullopt};
  }

 private:
  Fn fn_;
  std::string model_;
};

// 64x64 procedural test pattern seeded by (description, seed). Descriptions
// containing any refusal term raise ModerationRefusal.
class PatternRenderer : public ImageBackend {
 public:
  static constexpr int kSide = 64;
  explicit PatternRenderer(std::set<std::string> refusal_terms = {}, std::string model = "mock-renderer")
      : refusal_terms_(std::move(refusal_terms)), model_(std::move(model)) {}
  std::string model_id() const override { return model_; }
  Bytes render(const std::string& description, const RenderParams& params) override;

  // The raw pixels the renderer would produce, for tests.
  static RgbImage pattern(const std::string& description, std::int64_t seed);

 private:
  std::set<std::string> refusal_terms_;
  std::string model_;
};

// Seeded-hash text embeddings: each (lowercased, trimmed) string maps to a
// fixed Gaussian vector. Individual strings can be pinned to explicit
// vectors. Outputs are deliberately not unit length.
class HashTextEmbedder : public TextEmbedBackend {
 public:
  explicit HashTextEmbedder(int dim = 64, std::uint64_t salt = 0, std::string model = "mock-text-embed")
      : dim_(dim), salt_(salt), model_(std::move(model)) {}
  std::string model_id() const override { return model_; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

  void pin(const std::string& text, Embedding v);
  Embedding vector_for(const std::string& text) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  std::uint64_t salt_;
  std::string model_;
  mutable std::mutex mu_;
  std::map<std::string, Embedding> pinned_;
};

// Gives every distinct string its own standard basis vector, in order of
// first appearance. Any two distinct strings are orthogonal.
class BasisTextEmbedder : public TextEmbedBackend {
 public:
  explicit BasisTextEmbedder(int dim = 256, std::string model = "mock-basis-embed")
      : dim_(dim), model_(std::move(model)) {}
  std::string model_id() const override { return model_; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

 private:
  int dim_;
  std::string model_;
  std::mutex mu_;
  std::map<std::string, int> index_;
};

// Joint image-text mock. Images embed by hashing their decoded pixels; text
// embeds by hashing the string. Either side can be pinned (images by their
// content id, the SHA-256 of the PNG bytes).
class HashImageEmbedder : public ImageEmbedBackend {
 public:
  explicit HashImageEmbedder(int dim = 64, std::string model = "mock-clip")
      : dim_(dim), model_(std::move(model)) {}
  std::string model_id() const override { return model_; }
  Embedding embed_image(std::span<const std::uint8_t> png) override;
  bool joint() const override { return true; }
  Embedding embed_text(const std::string& text) override;

  void pin_image(const std::string& image_id, Embedding v);
  void pin_text(const std::string& text, Embedding v);

  std::size_t image_calls() const { return image_calls_; }

 private:
  int dim_;
  std::string model_;
  std::mutex mu_;
  std::map<std::string, Embedding> pinned_images_;
  std::map<std::string, Embedding> pinned_texts_;
  std::atomic<std::size_t> image_calls_{0};
};

class FunctionMultimodalBackend : public MultimodalBackend {
 public:
  using Fn = std::function<std::string(std::span<const std::uint8_t>, const std::string&)>;
  FunctionMultimodalBackend(Fn fn, std::string model) : fn_(std::move(fn)), model_(std::move(model)) {}
  std::string model_id() const override { return model_; }
  Completion answer(std::span<const std::uint8_t> png, const std::string& prompt,
                    const SamplingParams&) override {
    return {fn_(png, prompt), std::nullopt, std::nullopt};
  }

 private:
  Fn fn_;
  std::string model_;
};

// Always replies with the same text.
std::shared_ptr<MultimodalBackend> constant_answer_backend(std::string answer, std::string model = "mock-vlm");
// Replies with a letter A-D chosen by hashing the image bytes.
std::shared_ptr<MultimodalBackend> image_hash_answer_backend(std::string model = "mock-vlm-hash");

// Deterministic Gaussian vector for a string; the basis of the hash mocks.
Embedding hashed_gaussian(std::string_view key, int dim, std::uint64_t salt);

}  // namespace metobench
