#pragma once

#include "metobench/distractors.hpp"
#include "metobench/gateway.hpp"
#include "metobench/pipeline.hpp"
#include "metobench/store.hpp"
#include "metobench/templates.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace metobench {

enum class AssociationType { Cultural, Contextual, Symbolic };
std::string_view to_string(AssociationType a);
std::optional<AssociationType> parse_association(std::string_view s);

struct ItemError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct OptionProvenance {
  std::string lemma;
  std::string role;  // "target", or the distractor source
  Json evidence;     // the distractor record, or {} for the target
};

struct MCQItem {
  std::string item_id;
  std::string image_id;
  std::string target;
  std::array<std::string, 4> options;
  int answer_index = 0;
  std::string style;
  std::optional<AssociationType> association_type;
  std::array<OptionProvenance, 4> provenance;  // parallel to options

  // Throws ItemError when the item breaks an invariant.
  void validate() const;
};

Json to_json(const MCQItem& item);
MCQItem item_from_json(const Json& j);

// Shuffles [target, d0, d1, d2] with a permutation drawn uniformly from S4 by
// a generator seeded with `seed`.
MCQItem assemble_item(const std::string& image_id, const std::string& target, const std::string& style,
                      const std::vector<DistractorCandidate>& distractors, std::uint64_t seed);

// The permutation assemble_item applies for `seed`: options[i] = input[perm[i]].
std::array<int, 4> option_permutation(std::uint64_t seed);

std::string mcq_prompt(const TemplateSet& templates, const MCQItem& item);

// 0-3, or nullopt when the response is unparsed. Precedence: a leading
// letter (optionally bracketed or punctuated), then "answer is X" /
// "answer: X", then exactly one option named as a whole word.
std::optional<int> parse_choice(std::string_view response, const std::array<std::string, 4>& options);

struct EvalConfig {
  std::string backend;
  int workers = 4;
  SamplingParams sampling{.temperature = 0.0, .top_p = 1.0, .repetition_penalty = 1.0, .max_tokens = 16, .seed = 0};
};

struct ItemResult {
  std::string item_id;
  std::string model;
  std::string status;  // "answered" or "errored"
  std::string raw_response;
  std::optional<int> parsed_choice;
  bool correct = false;
  std::string error;
};

Json to_json(const ItemResult& r);
ItemResult result_from_json(const Json& j);

struct EvalRun {
  std::string model;
  std::size_t queried = 0;
  std::size_t resumed = 0;
  std::vector<ItemResult> results;  // latest result per item, in item order
};

// Queries the backend once per item not yet answered in results/<model>.jsonl
// and appends each response before it is scored. Errored items are retried on
// the next run.
EvalRun evaluate(Gateway& gw, CorpusStore& store, const TemplateSet& templates, const std::vector<MCQItem>& items,
                 const EvalConfig& cfg);

struct SliceScore {
  std::size_t total = 0;     // items in the slice
  std::size_t answered = 0;  // total minus errored
  std::size_t correct = 0;
  std::size_t unparsed = 0;
  std::size_t errored = 0;
  // 100 * correct / answered; nullopt when nothing was answered.
  std::optional<double> accuracy() const;
  std::optional<double> unparsed_rate() const;
};

struct ScoreReport {
  std::string model;
  SliceScore overall;
  std::map<std::string, SliceScore> by_style;
  std::map<std::string, SliceScore> by_association;  // only labeled items
};

// Latest result per item wins. Items without a result are ignored.
ScoreReport score(const std::vector<ItemResult>& results, const std::vector<MCQItem>& items);

Json to_json(const ScoreReport& r);
std::string to_markdown(const std::vector<ScoreReport>& reports);
Json reports_to_json(const std::vector<ScoreReport>& reports);

struct Prediction {
  std::string image_id;
  std::string gold;
  std::string word;
  double cosine = 0;
};

// Asks for the concept in one word and compares it with the gold lemma in
// the text-embedding space.
Prediction predict_concept(Gateway& gw, const TemplateSet& templates, const std::string& image_id,
                           const Bytes& png, const std::string& gold, const std::string& vlm_backend = {},
                           const std::string& embed_backend = {});

// First word of a free-form answer, lowercased and stripped of punctuation.
std::string clean_prediction(std::string_view response);

struct Histogram {
  double lo = 0, hi = 0;
  std::vector<std::size_t> counts;
  std::size_t n = 0;
};

Histogram histogram(const std::vector<double>& values, std::size_t bins);

struct SimilarityReport {
  std::vector<double> concept_image_scores;  // joint_similarity per image, manifest order
  Histogram concept_image_histogram;
  double concept_image_mean = 0;
  std::size_t style_pairs = 0;
  std::optional<double> style_pair_mean;  // mean cosine of (naturalistic, stylistic) pairs
  std::map<std::string, double> style_pair_by_concept;
};

struct SimilarityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Throws SimilarityError on a corpus without images.
SimilarityReport similarity_reports(Gateway& gw, const CorpusStore& store, std::size_t bins = 20,
                                    const std::string& embed_backend = {});
Json to_json(const SimilarityReport& r);

}  // namespace metobench
