#pragma once

#include "metobench/gateway.hpp"
#include "metobench/graph.hpp"
#include "metobench/store.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace metobench {

struct DistractorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Image embeddings keyed by image id, loaded from the store on first use.
class ImageEmbeddingCache {
 public:
  ImageEmbeddingCache(Gateway& gw, const CorpusStore& store, std::string backend = {})
      : gw_(gw), store_(store), backend_(std::move(backend)) {}
  Embedding get(const std::string& image_id);
  std::size_t size() const;

 private:
  Gateway& gw_;
  const CorpusStore& store_;
  std::string backend_;
  mutable std::mutex mu_;
  std::map<std::string, Embedding> cache_;
};

struct PoolImage {
  std::string image_id;
  std::string concept_lemma;
};

struct VisualNeighbor {
  std::string concept_lemma;
  double cosine = 0;
  std::string image_id;  // the pool image that achieved the maximum
};

// Top-k concepts by the maximum cosine between the target image and any of
// that concept's pool images. Ties go to the lexicographically smaller lemma.
std::vector<VisualNeighbor> visual_neighbors(ImageEmbeddingCache& cache, const std::string& target_image_id,
                                             const std::vector<PoolImage>& pool, std::size_t k);

// RelatedTo neighbours. An unknown node yields an empty set and a warning.
std::set<std::string> related_terms(KnowledgeGraph& graph, const std::string& lemma);

// Synonym neighbours plus the lemma itself.
std::set<std::string> synonym_set(KnowledgeGraph& graph, const std::string& lemma);

struct BandFilterResult {
  std::map<std::string, double> kept;     // candidate -> cosine to target
  std::map<std::string, double> removed;
};

// Cosines at or above this count as the same embedding, whatever tau_high is.
inline constexpr double kDuplicateCosine = 1.0 - 1e-6;

// Drops candidates whose text-embedding cosine to the target exceeds
// tau_high, and exact-duplicate embeddings in every case.
BandFilterResult similarity_band_filter(Gateway& gw, const std::set<std::string>& candidates,
                                        const std::string& target, double tau_high,
                                        std::string_view embed_backend = {});

// Nodes at exactly two undirected RelatedTo hops, each with the smallest
// intermediate that reaches it. At most `intermediate_cap` intermediates are
// expanded (in sorted order); hitting the cap is logged.
std::map<std::string, std::string> two_step_paths(KnowledgeGraph& graph, const std::string& lemma,
                                                  std::size_t intermediate_cap = 200);
std::set<std::string> two_step_candidates(KnowledgeGraph& graph, const std::string& lemma,
                                          std::size_t intermediate_cap = 200);

enum class DistractorSource { Visual, Semantic, Global };
std::string_view to_string(DistractorSource s);

struct DistractorCandidate {
  std::string lemma;
  DistractorSource source = DistractorSource::Visual;
  std::optional<double> visual_cosine;      // visual: max cosine to the target image
  std::optional<std::string> visual_image;  // visual: the pool image that achieved it
  double text_cosine = 0;                   // cosine to the target word, as checked by the band filter
  std::vector<std::string> path;            // semantic: target, [intermediate,] lemma
  bool backfill = false;                    // filled a slot meant for the other source
};

Json to_json(const DistractorCandidate& c);
DistractorCandidate distractor_from_json(const Json& j);

struct DistractorMix {
  int visual = 1;
  int semantic = 2;
  int total() const { return visual + semantic; }
};

// "1v2s" -> {1, 2}. The two counts must add up to 3.
DistractorMix parse_mix(std::string_view s);

struct DistractorConfig {
  DistractorMix mix;
  double tau_high = 0.85;
  std::size_t visual_k = 10;
  std::size_t intermediate_cap = 200;
  std::string text_embed_backend;
};

// Three distractors for one target image: visual neighbours and graph
// candidates, minus the target's synonyms, minus anything above tau_high;
// semantic slots prefer two-step candidates over direct RelatedTo ones and
// rank by cosine to the target. Underfilled slots borrow from the other
// source, then from `global_lemmas` by descending cosine under tau_high.
// Throws DistractorError when fewer than three survive.
std::vector<DistractorCandidate> build_distractors(Gateway& gw, KnowledgeGraph& graph, ImageEmbeddingCache& images,
                                                   const std::string& target, const std::string& target_image_id,
                                                   const std::vector<PoolImage>& pool,
                                                   const std::vector<std::string>& global_lemmas,
                                                   const DistractorConfig& cfg);

// Re-walks a recorded semantic path against the graph: consecutive nodes must
// be RelatedTo neighbours and a two-hop path must not have a direct edge.
bool verify_path(KnowledgeGraph& graph, const std::vector<std::string>& path);

}  // namespace metobench
