#pragma once

#include "metobench/catalog.hpp"
#include "metobench/gateway.hpp"
#include "metobench/leakage.hpp"
#include "metobench/store.hpp"
#include "metobench/templates.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace metobench {

// Naturalistic and stylistic are the two description styles of the semiotic
// pipeline; plain is the single style of the baseline pipeline, which renders
// the bare concept word.
enum class Style { Naturalistic, Stylistic, Plain };
std::string_view to_string(Style s);
std::optional<Style> parse_style(std::string_view s);
// "naturalistic,stylistic" -> {Naturalistic, Stylistic}; throws std::invalid_argument.
std::vector<Style> parse_styles(std::string_view list);

enum class PipelineVariant { Semiotic, Baseline };
std::string_view to_string(PipelineVariant v);
std::optional<PipelineVariant> parse_variant(std::string_view s);

struct RepresentamenSet {
  std::string concept_lemma;
  std::vector<std::string> items;
  std::string model;
  std::string template_id;
  std::string raw;  // the completion the items were parsed from
  int attempts = 1;
};

Json to_json(const RepresentamenSet& r);
RepresentamenSet representamens_from_json(const Json& j);

struct VisualDescription {
  std::string description_id;
  std::string concept_lemma;
  Style style = Style::Naturalistic;
  std::string text;
  std::size_t word_count = 0;
  int attempts = 1;
  bool leakage_passed = false;
  std::string model;
};

Json to_json(const VisualDescription& d);
VisualDescription description_from_json(const Json& j);

// Target length from the prompt templates. Recorded against each description,
// never enforced.
std::size_t word_target(Style s);

struct GeneratedImage {
  std::string image_id;
  std::string concept_lemma;
  Style style = Style::Naturalistic;
  PipelineVariant pipeline = PipelineVariant::Semiotic;
  std::string path;
  std::string renderer;
  std::int64_t seed = 0;
  RenderParams params;
  std::string description_id;
  std::optional<Supersense> supersense;
  std::set<std::string> flags;
};

Json to_json(const GeneratedImage& g);
GeneratedImage image_from_json(const Json& j);

struct RepresentamenParseError : std::runtime_error {
  RepresentamenParseError(const std::string& what, std::vector<std::string> completions)
      : std::runtime_error(what), completions(std::move(completions)) {}
  std::vector<std::string> completions;
};

struct LeakageExhausted : std::runtime_error {
  LeakageExhausted(const std::string& what, std::vector<std::string> attempts)
      : std::runtime_error(what), attempts(std::move(attempts)) {}
  std::vector<std::string> attempts;  // every rejected description, in order
};

inline constexpr std::size_t kMinRepresentamens = 3;
inline constexpr std::size_t kMaxRepresentamens = 7;

// Items from one completion: the text after the last "Representamen:" marker
// (the whole completion when there is none) up to the end of that line, split
// on commas, trimmed, lowercased, deduplicated case-insensitively, without
// the concept itself, and truncated to kMaxRepresentamens.
std::vector<std::string> parse_representamens(std::string_view completion, std::string_view concept_lemma);

struct GenerationConfig {
  SamplingParams sampling;
  RenderParams render;
  int max_parse_attempts = 3;
  int max_leakage_attempts = 5;
  std::string text_backend;
  std::string image_backend;
};

// Derived seeds. Every stochastic call in the pipeline draws its seed from
// (run seed, lemma, stage, style, attempt), so reruns are reproducible while
// every call gets a distinct seed.
std::uint64_t concept_seed(std::uint64_t run_seed, std::string_view lemma);
std::int64_t stage_seed(std::uint64_t concept_seed, std::string_view stage, int attempt);

RepresentamenSet generate_representamens(Gateway& gw, const TemplateSet& templates, const Concept& c,
                                         const GenerationConfig& cfg, std::uint64_t seed);

VisualDescription compose_description(Gateway& gw, const TemplateSet& templates, const Concept& c,
                                      const RepresentamenSet& reps, Style style, const GenerationConfig& cfg,
                                      std::uint64_t seed);

// The baseline description is the concept word itself, so it is recorded with
// leakage_passed = false.
VisualDescription baseline_description(const TemplateSet& templates, const Concept& c, const std::string& model);

// Renders and stores the image. Requires desc.leakage_passed unless
// `variant` is the baseline.
GeneratedImage render_metonymic_image(Gateway& gw, CorpusStore& store, const VisualDescription& desc,
                                      const RenderParams& params, PipelineVariant variant,
                                      std::optional<Supersense> supersense = std::nullopt,
                                      std::string_view backend = {});

struct PipelineConfig {
  std::vector<Style> styles{Style::Naturalistic, Style::Stylistic};
  PipelineVariant variant = PipelineVariant::Semiotic;
  std::uint64_t run_seed = 0;
  int workers = 4;
  bool retry_failed = false;
  GenerationConfig generation;
};

struct PipelineSummary {
  std::string run_id;
  std::size_t images = 0;
  std::size_t failures = 0;
  std::size_t resumed = 0;            // pairs skipped because an earlier run finished them
  std::size_t not_retained = 0;       // concepts ignored because they were not retained
  std::map<std::string, std::size_t> failures_by_stage;
};

Json to_json(const PipelineSummary& s);

// Produces at most one image per retained concept and style. Concepts run
// concurrently on `workers` threads; their records are appended in input
// order so the manifest does not depend on scheduling. Per-pair failures are
// recorded as attempt rows and never abort the run. Pairs that already have
// an attempt row are skipped (failed ones are retried when retry_failed).
PipelineSummary run_pipeline(Gateway& gw, CorpusStore& store, const TemplateSet& templates,
                             std::span<const Concept> concepts, const PipelineConfig& cfg);

struct AgreementReport {
  std::vector<std::string> models;
  Matrix<double> mean;                                 // models x models
  std::map<std::string, std::size_t> concepts_scored;  // "a|b" -> count
  std::vector<std::string> warnings;
};

Json to_json(const AgreementReport& r);

// Greedy matching between two embedded item lists: repeatedly take the
// highest-cosine cross pair, remove both items, stop when either side is
// empty. Equal cosines are broken by the unordered item pair (smaller string
// first, then larger), which makes the score symmetric in its arguments.
// Returns the mean matched cosine.
double greedy_match_score(const std::vector<std::string>& a, const std::vector<Embedding>& va,
                          const std::vector<std::string>& b, const std::vector<Embedding>& vb);

// Mean over concepts of the greedy match score for every pair of models.
// All models must cover the same concepts; concepts with an empty set are
// skipped with a warning.
AgreementReport representamen_agreement(Gateway& gw,
                                        const std::map<std::string, std::vector<RepresentamenSet>>& sets_by_model,
                                        std::string_view embed_backend = {});

}  // namespace metobench
