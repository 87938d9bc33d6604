#pragma once

#include "metobench/jsonl.hpp"
#include "metobench/linalg.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace metobench {

// The 26 WordNet noun lexicographer classes.
enum class Supersense : std::uint8_t {
  Tops, Act, Animal, Artifact, Attribute, Body, Cognition, Communication, Event,
  Feeling, Food, Group, Location, Motive, Object, Person, Phenomenon, Plant,
  Possession, Process, Quantity, Relation, Shape, State, Substance, Time,
};

inline constexpr std::size_t kSupersenseCount = 26;

const std::array<Supersense, kSupersenseCount>& all_supersenses();
std::string_view to_string(Supersense s);
// Accepts both "act" and the WordNet lexname form "noun.act", any case.
std::optional<Supersense> parse_supersense(std::string_view name);

using SupersenseSet = std::set<Supersense>;

// act, attribute, cognition, communication, event, feeling, group, location,
// motive, person, possession, process, state, time.
SupersenseSet default_retained_categories();

enum class ConceptStatus { Candidate, Retained, Rejected };
enum class RejectReason { Concreteness, Category, Moderation };

std::string_view to_string(ConceptStatus s);
std::string_view to_string(RejectReason r);

struct ConceptError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class Concept {
 public:
  // Normalises the lemma; throws ConceptError on an empty lemma or a rating
  // outside [1, 5].
  Concept(std::string_view lemma, Supersense supersense, double concreteness);

  const std::string& lemma() const { return lemma_; }
  Supersense supersense() const { return supersense_; }
  double concreteness() const { return concreteness_; }
  ConceptStatus status() const { return status_; }
  std::optional<RejectReason> reject_reason() const { return reason_; }

  // Only candidate -> retained and candidate -> rejected are legal.
  void retain();
  void reject(RejectReason reason);

  friend bool operator==(const Concept&, const Concept&) = default;

 private:
  std::string lemma_;
  Supersense supersense_;
  double concreteness_;
  ConceptStatus status_ = ConceptStatus::Candidate;
  std::optional<RejectReason> reason_;
};

Json to_json(const Concept& c);
Concept concept_from_json(const Json& j);

void write_catalog(const std::filesystem::path& path, std::span<const Concept> concepts);
std::vector<Concept> read_catalog(const std::filesystem::path& path);

struct FilterConfig {
  double concreteness_cutoff = 3.5;
  SupersenseSet retained_categories = default_retained_categories();
  double retention_threshold = 0.60;

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct LexiconWarning {
  std::string source;
  std::size_t line = 0;
  std::string message;
};

struct UnmatchedLemma {
  std::string lemma;
  std::string missing_from;  // "ratings" or "supersenses"
};

struct LexiconLoad {
  std::vector<Concept> concepts;
  std::vector<UnmatchedLemma> unmatched;
  std::vector<LexiconWarning> warnings;
};

// Thrown when the two sources share no lemma; carries the full report.
struct EmptyCatalogError : std::runtime_error {
  explicit EmptyCatalogError(LexiconLoad r)
      : std::runtime_error("ratings and supersense sources share no lemma"), report(std::move(r)) {}
  LexiconLoad report;
};

// Joins a concreteness ratings table with a supersense table. Both are
// delimited text with a header row; comma or tab is detected from the header.
// Output follows ratings-file order.
LexiconLoad load_lexicon(std::istream& ratings, std::istream& supersenses);
LexiconLoad load_lexicon(const std::filesystem::path& ratings,
                         const std::filesystem::path& supersenses);

// Assigns retained/rejected to every candidate; already decided concepts are
// left alone, which makes the function idempotent on its own output.
std::vector<Concept> filter_concepts(std::vector<Concept> concepts, const FilterConfig& cfg);

enum class MetonymyLabel { Metonymic, NonMetonymic };
std::string_view to_string(MetonymyLabel l);
std::optional<MetonymyLabel> parse_label(std::string_view s);

struct CategoryStats {
  std::size_t n_annotated = 0;
  std::size_t n_metonymic = 0;
  // nullopt when the category has no annotations.
  std::optional<double> rate() const;
};

struct CategoryRetentionReport {
  std::map<Supersense, CategoryStats> per_category;  // all 26 present
  SupersenseSet retained;
  double threshold = 0.60;
};

CategoryRetentionReport category_retention(
    std::span<const std::pair<Supersense, MetonymyLabel>> annotations, const FilterConfig& cfg);

Json to_json(const CategoryRetentionReport& report);

struct DensityCurve {
  Vector<double> density;
  double bandwidth = 0;
  std::size_t samples = 0;
};

struct CrossoverReport {
  Vector<double> grid;
  double grid_spacing = 0;
  DensityCurve metonymic;
  DensityCurve non_metonymic;
  // Smallest grid point at or above the metonymic mode where the
  // non-metonymic density is higher; nullopt when the curves never cross.
  std::optional<double> crossover;
};

struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gaussian KDE with Silverman bandwidth on a uniform grid over [1, 5].
CrossoverReport concreteness_crossover(std::span<const std::pair<double, MetonymyLabel>> annotated,
                                       Eigen::Index grid_points = 256);

Json to_json(const CrossoverReport& report);

}  // namespace metobench
