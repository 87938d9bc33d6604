#include "metobench/catalog.hpp"

#include "metobench/density.hpp"
#include "metobench/text.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <unordered_map>
#include <unordered_set>

namespace metobench {

namespace {

constexpr std::array<std::string_view, kSupersenseCount> kSupersenseNames = {
    "Tops",     "act",       "animal",     "artifact",  "attribute", "body",    "cognition",
    "communication", "event", "feeling",   "food",      "group",     "location", "motive",
    "object",   "person",    "phenomenon", "plant",     "possession", "process", "quantity",
    "relation", "shape",     "state",      "substance", "time",
};

// Splits one delimited row. Double-quoted fields may contain the delimiter;
// a doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_row(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::optional<double> parse_number(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct Table {
  char delim = ',';
  std::vector<std::string> header;
  // (line number, fields)
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!have_header) {
      t.delim = line.find('\t') != std::string::npos ? '\t' : ',';
      for (auto& h : split_row(line, t.delim)) t.header.push_back(to_lower(trim(h)));
      have_header = true;
      continue;
    }
    t.rows.emplace_back(line_no, split_row(line, t.delim));
  }
  return t;
}

std::size_t find_column(const std::vector<std::string>& header,
                        std::initializer_list<std::string_view> needles, std::size_t fallback) {
  for (const auto needle : needles) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == needle) return i;
    }
  }
  for (const auto needle : needles) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i].find(needle) != std::string::npos) return i;
    }
  }
  return fallback;
}

}  // namespace

const std::array<Supersense, kSupersenseCount>& all_supersenses() {
  static const auto kAll = [] {
    std::array<Supersense, kSupersenseCount> a{};
    for (std::size_t i = 0; i < kSupersenseCount; ++i) a[i] = static_cast<Supersense>(i);
    return a;
  }();
  return kAll;
}

std::string_view to_string(Supersense s) { return kSupersenseNames[static_cast<std::size_t>(s)]; }

std::optional<Supersense> parse_supersense(std::string_view name) {
  std::string n = to_lower(trim(name));
  if (n.rfind("noun.", 0) == 0) n = n.substr(5);
  for (std::size_t i = 0; i < kSupersenseCount; ++i) {
    if (to_lower(kSupersenseNames[i]) == n) return static_cast<Supersense>(i);
  }
  return std::nullopt;
}

SupersenseSet default_retained_categories() {
  using S = Supersense;
  return {S::Act,    S::Attribute, S::Cognition, S::Communication, S::Event,
          S::Feeling, S::Group,    S::Location,  S::Motive,        S::Person,
          S::Possession, S::Process, S::State,   S::Time};
}

std::string_view to_string(ConceptStatus s) {
  switch (s) {
    case ConceptStatus::Candidate: return "candidate";
    case ConceptStatus::Retained: return "retained";
    case ConceptStatus::Rejected: return "rejected";
  }
  return "?";
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::Concreteness: return "concreteness";
    case RejectReason::Category: return "category";
    case RejectReason::Moderation: return "moderation";
  }
  return "?";
}

Concept::Concept(std::string_view lemma, Supersense supersense, double concreteness)
    : lemma_(normalize_lemma(lemma)), supersense_(supersense), concreteness_(concreteness) {
  if (lemma_.empty()) throw ConceptError("concept lemma is empty");
  if (!(concreteness >= 1.0 && concreteness <= 5.0)) {
    throw ConceptError("concreteness " + std::to_string(concreteness) + " for '" + lemma_ +
                       "' is outside [1, 5]");
  }
}

void Concept::retain() {
  if (status_ != ConceptStatus::Candidate) throw ConceptError("'" + lemma_ + "' is not a candidate");
  status_ = ConceptStatus::Retained;
}

void Concept::reject(RejectReason reason) {
  if (status_ != ConceptStatus::Candidate) throw ConceptError("'" + lemma_ + "' is not a candidate");
  status_ = ConceptStatus::Rejected;
  reason_ = reason;
}

Json to_json(const Concept& c) {
  Json j = {{"lemma", c.lemma()},
            {"supersense", std::string(to_string(c.supersense()))},
            {"concreteness", c.concreteness()},
            {"status", std::string(to_string(c.status()))}};
  if (c.reject_reason()) j["reject_reason"] = std::string(to_string(*c.reject_reason()));
  return j;
}

Concept concept_from_json(const Json& j) {
  const auto ss = parse_supersense(j.at("supersense").get<std::string>());
  if (!ss) throw ConceptError("unknown supersense " + j.at("supersense").dump());
  Concept c(j.at("lemma").get<std::string>(), *ss, j.at("concreteness").get<double>());
  const std::string status = j.value("status", "candidate");
  if (status == "retained") {
    c.retain();
  } else if (status == "rejected") {
    const std::string reason = j.value("reject_reason", "");
    if (reason == "concreteness") c.reject(RejectReason::Concreteness);
    else if (reason == "category") c.reject(RejectReason::Category);
    else if (reason == "moderation") c.reject(RejectReason::Moderation);
    else throw ConceptError("rejected concept '" + c.lemma() + "' has no valid reject_reason");
  } else if (status != "candidate") {
    throw ConceptError("unknown concept status '" + status + "'");
  }
  return c;
}

void write_catalog(const std::filesystem::path& path, std::span<const Concept> concepts) {
  std::vector<Json> rows;
  rows.reserve(concepts.size());
  for (const auto& c : concepts) rows.push_back(to_json(c));
  write_jsonl(path, rows);
}

std::vector<Concept> read_catalog(const std::filesystem::path& path) {
  std::vector<Concept> out;
  for (const auto& row : read_jsonl(path)) out.push_back(concept_from_json(row));
  return out;
}

void FilterConfig::validate() const {
  if (!(concreteness_cutoff >= 1.0 && concreteness_cutoff <= 5.0)) {
    throw std::invalid_argument("concreteness_cutoff must lie in [1, 5]");
  }
  if (!(retention_threshold >= 0.0 && retention_threshold <= 1.0)) {
    throw std::invalid_argument("retention_threshold must lie in [0, 1]");
  }
}

LexiconLoad load_lexicon(std::istream& ratings_in, std::istream& supersenses_in) {
  LexiconLoad out;
  const Table ratings = read_table(ratings_in);
  const Table senses = read_table(supersenses_in);
  if (ratings.header.empty()) out.warnings.push_back({"ratings", 0, "missing header row"});
  if (senses.header.empty()) out.warnings.push_back({"supersenses", 0, "missing header row"});

  const std::size_t r_word = find_column(ratings.header, {"word", "lemma", "noun"}, 0);
  const std::size_t r_conc = find_column(ratings.header, {"concreteness", "conc.m", "conc"}, 1);
  const std::size_t s_word = find_column(senses.header, {"word", "lemma", "noun"}, 0);
  const std::size_t s_sense = find_column(senses.header, {"supersense", "lexname", "category"}, 1);

  auto warn = [&](std::string source, std::size_t line, std::string msg) {
    spdlog::warn("{}:{}: {}", source, line, msg);
    out.warnings.push_back({std::move(source), line, std::move(msg)});
  };

  std::unordered_map<std::string, Supersense> sense_of;
  std::vector<std::string> sense_order;
  for (const auto& [line, fields] : senses.rows) {
    if (fields.size() <= std::max(s_word, s_sense)) {
      warn("supersenses", line, "expected at least " + std::to_string(std::max(s_word, s_sense) + 1) +
                                    " columns");
      continue;
    }
    const std::string lemma = normalize_lemma(fields[s_word]);
    if (lemma.empty()) {
      warn("supersenses", line, "empty lemma");
      continue;
    }
    const auto sense = parse_supersense(fields[s_sense]);
    if (!sense) {
      warn("supersenses", line, "unknown supersense '" + trim(fields[s_sense]) + "'");
      continue;
    }
    const auto [it, inserted] = sense_of.emplace(lemma, *sense);
    if (!inserted) {
      if (it->second != *sense) {
        warn("supersenses", line,
             "'" + lemma + "' also listed as " + std::string(to_string(*sense)) + "; keeping " +
                 std::string(to_string(it->second)));
      } else {
        warn("supersenses", line, "duplicate lemma '" + lemma + "'");
      }
      continue;
    }
    sense_order.push_back(lemma);
  }

  std::unordered_set<std::string> seen_ratings;
  for (const auto& [line, fields] : ratings.rows) {
    if (fields.size() <= std::max(r_word, r_conc)) {
      warn("ratings", line, "expected at least " + std::to_string(std::max(r_word, r_conc) + 1) +
                                " columns");
      continue;
    }
    const std::string lemma = normalize_lemma(fields[r_word]);
    if (lemma.empty()) {
      warn("ratings", line, "empty lemma");
      continue;
    }
    if (!seen_ratings.insert(lemma).second) {
      warn("ratings", line, "duplicate lemma '" + lemma + "'; keeping first");
      continue;
    }
    const auto rating = parse_number(fields[r_conc]);
    if (!rating) {
      warn("ratings", line, "non-numeric rating '" + trim(fields[r_conc]) + "'");
    } else if (*rating < 1.0 || *rating > 5.0) {
      warn("ratings", line, "rating " + trim(fields[r_conc]) + " outside [1, 5]");
    }
    const auto sense = sense_of.find(lemma);
    if (sense == sense_of.end()) {
      out.unmatched.push_back({lemma, "supersenses"});
      continue;
    }
    if (!rating || *rating < 1.0 || *rating > 5.0) continue;
    out.concepts.emplace_back(lemma, sense->second, *rating);
  }
  for (const auto& lemma : sense_order) {
    if (!seen_ratings.contains(lemma)) out.unmatched.push_back({lemma, "ratings"});
  }

  if (out.concepts.empty()) throw EmptyCatalogError(std::move(out));
  return out;
}

LexiconLoad load_lexicon(const std::filesystem::path& ratings,
                         const std::filesystem::path& supersenses) {
  std::ifstream r(ratings);
  if (!r) throw std::runtime_error("cannot open ratings file " + ratings.string());
  std::ifstream s(supersenses);
  if (!s) throw std::runtime_error("cannot open supersense file " + supersenses.string());
  return load_lexicon(r, s);
}

std::vector<Concept> filter_concepts(std::vector<Concept> concepts, const FilterConfig& cfg) {
  cfg.validate();
  for (auto& c : concepts) {
    if (c.status() != ConceptStatus::Candidate) continue;
    if (!(c.concreteness() < cfg.concreteness_cutoff)) {
      c.reject(RejectReason::Concreteness);
    } else if (!cfg.retained_categories.contains(c.supersense())) {
      c.reject(RejectReason::Category);
    } else {
      c.retain();
    }
  }
  return concepts;
}

std::string_view to_string(MetonymyLabel l) {
  return l == MetonymyLabel::Metonymic ? "metonymic" : "non_metonymic";
}

std::optional<MetonymyLabel> parse_label(std::string_view s) {
  const std::string t = to_lower(trim(s));
  if (t == "metonymic" || t == "m") return MetonymyLabel::Metonymic;
  if (t == "non_metonymic" || t == "non-metonymic" || t == "nonmetonymic" || t == "n") {
    return MetonymyLabel::NonMetonymic;
  }
  return std::nullopt;
}

std::optional<double> CategoryStats::rate() const {
  if (n_annotated == 0) return std::nullopt;
  return static_cast<double>(n_metonymic) / static_cast<double>(n_annotated);
}

CategoryRetentionReport category_retention(
    std::span<const std::pair<Supersense, MetonymyLabel>> annotations, const FilterConfig& cfg) {
  cfg.validate();
  CategoryRetentionReport report;
  report.threshold = cfg.retention_threshold;
  for (const auto s : all_supersenses()) report.per_category[s] = {};
  for (const auto& [sense, label] : annotations) {
    auto& stats = report.per_category[sense];
    ++stats.n_annotated;
    if (label == MetonymyLabel::Metonymic) ++stats.n_metonymic;
  }
  for (const auto& [sense, stats] : report.per_category) {
    const auto rate = stats.rate();
    if (rate && *rate > cfg.retention_threshold) report.retained.insert(sense);
  }
  return report;
}

Json to_json(const CategoryRetentionReport& report) {
  Json per = Json::object();
  for (const auto& [sense, stats] : report.per_category) {
    Json row = {{"n_annotated", stats.n_annotated}, {"n_metonymic", stats.n_metonymic}};
    if (const auto rate = stats.rate()) {
      row["rate"] = *rate;
    } else {
      row["rate"] = "no data";
    }
    per[std::string(to_string(sense))] = std::move(row);
  }
  Json retained = Json::array();
  for (const auto s : report.retained) retained.push_back(std::string(to_string(s)));
  return {{"threshold", report.threshold}, {"per_category", per}, {"retained", retained}};
}

CrossoverReport concreteness_crossover(std::span<const std::pair<double, MetonymyLabel>> annotated,
                                       Eigen::Index grid_points) {
  std::vector<double> met;
  std::vector<double> non;
  for (const auto& [c, label] : annotated) {
    (label == MetonymyLabel::Metonymic ? met : non).push_back(c);
  }
  if (met.size() < 2 || non.size() < 2) {
    throw EstimationError("cannot estimate crossover: need at least 2 samples of each label");
  }

  CrossoverReport report;
  report.grid = uniform_grid<double>(1.0, 5.0, grid_points);
  report.grid_spacing = 4.0 / static_cast<double>(grid_points - 1);

  const auto to_vec = [](const std::vector<double>& v) {
    return Vector<double>(Eigen::Map<const Vector<double>>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  const Vector<double> met_v = to_vec(met);
  const Vector<double> non_v = to_vec(non);
  report.metonymic.bandwidth = silverman_bandwidth<double>(met_v, report.grid_spacing);
  report.non_metonymic.bandwidth = silverman_bandwidth<double>(non_v, report.grid_spacing);
  report.metonymic.samples = met.size();
  report.non_metonymic.samples = non.size();

  const Vector<double> met_log = gaussian_kde_log<double>(met_v, report.grid, report.metonymic.bandwidth);
  const Vector<double> non_log =
      gaussian_kde_log<double>(non_v, report.grid, report.non_metonymic.bandwidth);
  report.metonymic.density = met_log.array().exp();
  report.non_metonymic.density = non_log.array().exp();

  Eigen::Index mode = 0;
  met_log.maxCoeff(&mode);
  // Compared in the log domain; the margin keeps identical curves from
  // "crossing" on rounding noise.
  constexpr double kMargin = 1e-9;
  for (Eigen::Index g = mode; g < report.grid.size(); ++g) {
    if (non_log[g] > met_log[g] + kMargin) {
      report.crossover = report.grid[g];
      break;
    }
  }
  return report;
}

Json to_json(const CrossoverReport& report) {
  const auto vec = [](const Vector<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  Json j = {{"grid", vec(report.grid)},
            {"grid_spacing", report.grid_spacing},
            {"metonymic",
             {{"density", vec(report.metonymic.density)},
              {"bandwidth", report.metonymic.bandwidth},
              {"samples", report.metonymic.samples}}},
            {"non_metonymic",
             {{"density", vec(report.non_metonymic.density)},
              {"bandwidth", report.non_metonymic.bandwidth},
              {"samples", report.non_metonymic.samples}}}};
  if (report.crossover) {
    j["crossover"] = *report.crossover;
  } else {
    j["crossover"] = "no crossover";
  }
  return j;
}

}  // namespace metobench
