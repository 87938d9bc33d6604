#include "metobench/benchmark.hpp"

#include "metobench/leakage.hpp"
#include "metobench/parallel.hpp"
#include "metobench/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

namespace metobench {

std::string_view to_string(AssociationType a) {
  switch (a) {
    case AssociationType::Cultural: return "cultural";
    case AssociationType::Contextual: return "contextual";
    case AssociationType::Symbolic: return "symbolic";
  }
  return "?";
}

std::optional<AssociationType> parse_association(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "cultural") return AssociationType::Cultural;
  if (v == "contextual") return AssociationType::Contextual;
  if (v == "symbolic") return AssociationType::Symbolic;
  return std::nullopt;
}

void MCQItem::validate() const {
  if (answer_index < 0 || answer_index > 3) throw ItemError("item " + item_id + ": answer_index out of range");
  std::set<std::string> seen;
  int target_count = 0;
  for (const auto& o : options) {
    if (o.empty()) throw ItemError("item " + item_id + ": empty option");
    if (!seen.insert(o).second) throw ItemError("item " + item_id + ": duplicate option '" + o + "'");
    if (o == target) ++target_count;
  }
  if (target_count != 1) throw ItemError("item " + item_id + ": target must appear exactly once");
  if (options[answer_index] != target) throw ItemError("item " + item_id + ": answer key does not point at the target");
}

Json to_json(const MCQItem& item) {
  Json prov = Json::array();
  for (const auto& p : item.provenance) prov.push_back({{"lemma", p.lemma}, {"role", p.role}, {"evidence", p.evidence}});
  return {{"item_id", item.item_id},
          {"image_id", item.image_id},
          {"target", item.target},
          {"options", item.options},
          {"answer_index", item.answer_index},
          {"style", item.style},
          {"association_type", item.association_type ? Json(to_string(*item.association_type)) : Json(nullptr)},
          {"provenance", prov}};
}

MCQItem item_from_json(const Json& j) {
  MCQItem item;
  item.item_id = j.at("item_id");
  item.image_id = j.at("image_id");
  item.target = j.at("target");
  const auto options = j.at("options").get<std::vector<std::string>>();
  if (options.size() != 4) throw ItemError("item " + item.item_id + ": expected 4 options");
  std::copy(options.begin(), options.end(), item.options.begin());
  item.answer_index = j.at("answer_index");
  item.style = j.at("style");
  if (j.contains("association_type") && j["association_type"].is_string()) {
    item.association_type = parse_association(j["association_type"].get<std::string>());
  }
  const auto& prov = j.at("provenance");
  if (prov.size() != 4) throw ItemError("item " + item.item_id + ": expected 4 provenance entries");
  for (std::size_t i = 0; i < 4; ++i) {
    item.provenance[i] = {prov[i].at("lemma"), prov[i].at("role"), prov[i].value("evidence", Json::object())};
  }
  item.validate();
  return item;
}

std::array<int, 4> option_permutation(std::uint64_t seed) {
  std::array<int, 4> perm{0, 1, 2, 3};
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

MCQItem assemble_item(const std::string& image_id, const std::string& target, const std::string& style,
                      const std::vector<DistractorCandidate>& distractors, std::uint64_t seed) {
  if (distractors.size() != 3) throw ItemError("an item needs exactly 3 distractors");
  std::array<OptionProvenance, 4> input;
  input[0] = {target, "target", Json::object()};
  for (std::size_t i = 0; i < 3; ++i) {
    input[i + 1] = {distractors[i].lemma, std::string(to_string(distractors[i].source)), to_json(distractors[i])};
  }
  MCQItem item;
  item.item_id = "q-" + image_id.substr(0, 16);
  item.image_id = image_id;
  item.target = target;
  item.style = style;
  const auto perm = option_permutation(seed);
  for (int i = 0; i < 4; ++i) {
    item.provenance[i] = input[perm[i]];
    item.options[i] = input[perm[i]].lemma;
    if (perm[i] == 0) item.answer_index = i;
  }
  item.validate();
  return item;
}

std::string mcq_prompt(const TemplateSet& templates, const MCQItem& item) {
  return fill(templates.get("mcq_question"),
              {{"A", item.options[0]}, {"B", item.options[1]}, {"C", item.options[2]}, {"D", item.options[3]}});
}

namespace {

bool is_closer(char c) { return c == ')' || c == ']' || c == '.' || c == ':' || c == ',' || c == '-' || c == ';'; }

std::optional<int> leading_letter(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) || s[i] == '*' || s[i] == '"')) ++i;
  bool bracketed = false;
  if (i < s.size() && (s[i] == '(' || s[i] == '[')) {
    bracketed = true;
    ++i;
  }
  if (i >= s.size()) return std::nullopt;
  const char c = s[i];
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper < 'A' || upper > 'D') return std::nullopt;
  ++i;
  while (i < s.size() && s[i] == '*') ++i;
  if (bracketed) {
    if (i < s.size() && (s[i] == ')' || s[i] == ']')) return upper - 'A';
    return std::nullopt;
  }
  if (i == s.size() || is_closer(s[i])) return upper - 'A';
  return std::nullopt;
}

std::optional<int> answer_is(std::string_view s) {
  static const std::regex re(R"(answer(?:\s+is|\s*:)\s*(\(|\[)?\s*([A-Da-d])(?=([\)\]\.,:;!]|\s|$)))",
                             std::regex::ECMAScript | std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(s.begin(), s.end(), m, re)) return std::nullopt;
  const char letter = m[2].str()[0];
  const bool bracketed = m[1].matched;
  const std::string after = m[3].str();
  const bool upper = std::isupper(static_cast<unsigned char>(letter));
  // a lowercase letter followed by a space is usually the article "a"
  if (!upper && !bracketed && (after.empty() ? false : std::isspace(static_cast<unsigned char>(after[0])))) {
    return std::nullopt;
  }
  return std::toupper(static_cast<unsigned char>(letter)) - 'A';
}

}  // namespace

std::optional<int> parse_choice(std::string_view response, const std::array<std::string, 4>& options) {
  if (const auto l = leading_letter(response)) return l;
  if (const auto a = answer_is(response)) return a;
  std::optional<int> found;
  for (int i = 0; i < 4; ++i) {
    if (options[i].empty() || !leakage_check(response, options[i])) continue;
    if (found) return std::nullopt;
    found = i;
  }
  return found;
}

Json to_json(const ItemResult& r) {
  Json j = {{"item_id", r.item_id}, {"model", r.model}, {"status", r.status}};
  if (r.status == "answered") {
    j["raw_response"] = r.raw_response;
    j["parsed_choice"] = r.parsed_choice ? Json(*r.parsed_choice) : Json(nullptr);
    j["correct"] = r.correct;
  } else {
    j["error"] = r.error;
  }
  return j;
}

ItemResult result_from_json(const Json& j) {
  ItemResult r;
  r.item_id = j.at("item_id");
  r.model = j.at("model");
  r.status = j.at("status");
  r.raw_response = j.value("raw_response", "");
  if (j.contains("parsed_choice") && j["parsed_choice"].is_number_integer()) r.parsed_choice = j["parsed_choice"].get<int>();
  r.correct = j.value("correct", false);
  r.error = j.value("error", "");
  return r;
}

EvalRun evaluate(Gateway& gw, CorpusStore& store, const TemplateSet& templates, const std::vector<MCQItem>& items,
                 const EvalConfig& cfg) {
  EvalRun run;
  run.model = gw.model_id(Capability::Multimodal, cfg.backend);
  std::map<std::string, ItemResult> latest;
  for (const auto& j : store.read_results(run.model)) {
    auto r = result_from_json(j);
    latest[r.item_id] = std::move(r);
  }
  std::vector<const MCQItem*> pending;
  for (const auto& item : items) {
    const auto it = latest.find(item.item_id);
    if (it != latest.end() && it->second.status == "answered") {
      ++run.resumed;
    } else {
      pending.push_back(&item);
    }
  }

  RecordLog& log = store.results(run.model);
  ordered_parallel(
      pending.size(), cfg.workers,
      [&](std::size_t i) {
        const MCQItem& item = *pending[i];
        ItemResult r;
        r.item_id = item.item_id;
        r.model = run.model;
        try {
          const Bytes png = store.read_image(item.image_id);
          r.raw_response = gw.answer_multimodal(png, mcq_prompt(templates, item), cfg.sampling, cfg.backend);
          r.status = "answered";
          r.parsed_choice = parse_choice(r.raw_response, item.options);
          r.correct = r.parsed_choice && *r.parsed_choice == item.answer_index;
        } catch (const ConfigError&) {
          throw;
        } catch (const CapabilityError&) {
          throw;
        } catch (const std::exception& e) {
          r.status = "errored";
          r.error = e.what();
        }
        return r;
      },
      [&](std::size_t, ItemResult r) {
        log.append("result", to_json(r));
        ++run.queried;
        latest[r.item_id] = std::move(r);
      });

  for (const auto& item : items) {
    if (const auto it = latest.find(item.item_id); it != latest.end()) run.results.push_back(it->second);
  }
  return run;
}

std::optional<double> SliceScore::accuracy() const {
  if (answered == 0) return std::nullopt;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(answered);
}

std::optional<double> SliceScore::unparsed_rate() const {
  if (answered == 0) return std::nullopt;
  return 100.0 * static_cast<double>(unparsed) / static_cast<double>(answered);
}

ScoreReport score(const std::vector<ItemResult>& results, const std::vector<MCQItem>& items) {
  std::map<std::string, const ItemResult*> latest;
  for (const auto& r : results) latest[r.item_id] = &r;
  ScoreReport report;
  if (!results.empty()) report.model = results.front().model;
  for (const auto& item : items) {
    const auto it = latest.find(item.item_id);
    if (it == latest.end()) continue;
    const ItemResult& r = *it->second;
    std::vector<SliceScore*> slices{&report.overall, &report.by_style[item.style]};
    if (item.association_type) slices.push_back(&report.by_association[std::string(to_string(*item.association_type))]);
    for (auto* s : slices) {
      ++s->total;
      if (r.status != "answered") {
        ++s->errored;
        continue;
      }
      ++s->answered;
      if (!r.parsed_choice) ++s->unparsed;
      else if (*r.parsed_choice == item.answer_index) ++s->correct;
    }
  }
  return report;
}

namespace {

Json slice_json(const SliceScore& s) {
  const auto acc = s.accuracy();
  const auto unp = s.unparsed_rate();
  return {{"total", s.total},
          {"answered", s.answered},
          {"correct", s.correct},
          {"unparsed", s.unparsed},
          {"errored", s.errored},
          {"accuracy", acc ? Json(*acc) : Json("no data")},
          {"unparsed_rate", unp ? Json(*unp) : Json("no data")}};
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "no data";
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << *v;
  return out.str();
}

struct ReferenceRow {
  const char* model;
  double naturalistic, stylistic, overall;
};

constexpr ReferenceRow kReferenceAccuracy[] = {
    {"Llama 3.2 11B", 61.5, 60.8, 61.2},    {"Llama 3.2 90B", 61.5, 63.9, 62.7},
    {"Llama 4 Scout", 62.8, 63.5, 63.2},    {"InternVL3 8B", 62.2, 63.6, 62.9},
    {"InternVL3 78B", 65.4, 66.4, 65.9},    {"Qwen2.5-VL 7B", 64.8, 62.6, 63.7},
    {"Qwen2.5-VL 72B", 66.4, 64.4, 65.4},   {"Gemini 2.5 Flash", 62.3, 62.9, 62.6},
    {"Gemini 2.5 Pro", 66.2, 64.2, 65.2},   {"Human", 85.6, 88.1, 86.9},
};

struct ReferenceAssociation {
  const char* who;
  double cultural, contextual, symbolic;
};

constexpr ReferenceAssociation kReferenceAssociation[] = {
    {"VLMs", 66.6, 54.5, 76.3},
    {"Humans", 88.3, 75.2, 92.1},
};

std::optional<double> slice_acc(const std::map<std::string, SliceScore>& m, const std::string& key) {
  const auto it = m.find(key);
  return it == m.end() ? std::nullopt : it->second.accuracy();
}

}  // namespace

Json to_json(const ScoreReport& r) {
  Json by_style = Json::object(), by_assoc = Json::object();
  for (const auto& [k, v] : r.by_style) by_style[k] = slice_json(v);
  for (const auto& k : {"cultural", "contextual", "symbolic"}) {
    const auto it = r.by_association.find(k);
    by_assoc[k] = it == r.by_association.end() ? Json("no data") : slice_json(it->second);
  }
  return {{"model", r.model}, {"overall", slice_json(r.overall)}, {"by_style", by_style}, {"by_association", by_assoc}};
}

Json reports_to_json(const std::vector<ScoreReport>& reports) {
  Json models = Json::array();
  for (const auto& r : reports) models.push_back(to_json(r));
  Json ref = Json::array();
  for (const auto& row : kReferenceAccuracy) {
    ref.push_back({{"model", row.model},
                   {"naturalistic", row.naturalistic},
                   {"stylistic", row.stylistic},
                   {"overall", row.overall}});
  }
  Json ref_assoc = Json::array();
  for (const auto& row : kReferenceAssociation) {
    ref_assoc.push_back(
        {{"who", row.who}, {"cultural", row.cultural}, {"contextual", row.contextual}, {"symbolic", row.symbolic}});
  }
  return {{"models", models},
          {"reference",
           {{"note", "reference, not reproduced"}, {"accuracy", ref}, {"association", ref_assoc}}}};
}

std::string to_markdown(const std::vector<ScoreReport>& reports) {
  std::ostringstream md;
  md << "# Benchmark accuracy\n\n"
     << "Accuracy is correct / answered items in percent; unparsed answers count as incorrect.\n\n"
     << "| Model | Nat. | Styl. | Overall | Answered | Unparsed | Errored |\n"
     << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    md << "| " << r.model << " | " << pct(slice_acc(r.by_style, "naturalistic")) << " | "
       << pct(slice_acc(r.by_style, "stylistic")) << " | " << pct(r.overall.accuracy()) << " | "
       << r.overall.answered << " | " << r.overall.unparsed << " | " << r.overall.errored << " |\n";
  }
  md << "\n## By association type\n\n| Model | Cultural | Contextual | Symbolic |\n|---|---|---|---|\n";
  for (const auto& r : reports) {
    md << "| " << r.model << " | " << pct(slice_acc(r.by_association, "cultural")) << " | "
       << pct(slice_acc(r.by_association, "contextual")) << " | " << pct(slice_acc(r.by_association, "symbolic"))
       << " |\n";
  }
  md << "\n## Published accuracies (reference, not reproduced)\n\n"
     << "| Model | Nat. | Styl. | Overall |\n|---|---|---|---|\n";
  for (const auto& row : kReferenceAccuracy) {
    md << "| " << row.model << " | " << pct(row.naturalistic) << " | " << pct(row.stylistic) << " | "
       << pct(row.overall) << " |\n";
  }
  md << "\n| Association (reference, not reproduced) | Cultural | Contextual | Symbolic |\n|---|---|---|---|\n";
  for (const auto& row : kReferenceAssociation) {
    md << "| " << row.who << " | " << pct(row.cultural) << " | " << pct(row.contextual) << " | "
       << pct(row.symbolic) << " |\n";
  }
  return md.str();
}

std::string clean_prediction(std::string_view response) {
  std::string s = to_lower(trim(response));
  std::size_t i = 0;
  while (i < s.size() && !std::isalnum(static_cast<unsigned char>(s[i]))) ++i;
  std::size_t j = i;
  while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '-' || s[j] == '\'')) ++j;
  std::string word = s.substr(i, j - i);
  while (!word.empty() && (word.back() == '-' || word.back() == '\'')) word.pop_back();
  return word;
}

Prediction predict_concept(Gateway& gw, const TemplateSet& templates, const std::string& image_id,
                           const Bytes& png, const std::string& gold, const std::string& vlm_backend,
                           const std::string& embed_backend) {
  SamplingParams params;
  params.max_tokens = 16;
  const std::string raw = gw.answer_multimodal(png, templates.get("predict_concept"), params, vlm_backend);
  Prediction p;
  p.image_id = image_id;
  p.gold = gold;
  p.word = clean_prediction(raw);
  if (p.word.empty()) throw EmptyCompletion("prediction for image " + image_id + " contains no word");
  const auto vecs = gw.embed_text({p.word, gold}, embed_backend);
  p.cosine = dot(vecs[0], vecs[1]);
  return p;
}

Histogram histogram(const std::vector<double>& values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  h.n = values.size();
  if (values.empty()) return h;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  h.lo = *lo;
  h.hi = *hi > *lo ? *hi : *lo + 1.0;
  for (const double v : values) {
    auto b = static_cast<std::size_t>(std::floor((v - h.lo) / (h.hi - h.lo) * static_cast<double>(bins)));
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

SimilarityReport similarity_reports(Gateway& gw, const CorpusStore& store, std::size_t bins,
                                    const std::string& embed_backend) {
  std::vector<GeneratedImage> images;
  for (const auto& j : store.read_manifest("image")) {
    auto g = image_from_json(j);
    if (g.pipeline == PipelineVariant::Semiotic) images.push_back(std::move(g));
  }
  if (images.empty()) throw SimilarityError("the corpus has no generated images");

  SimilarityReport r;
  std::map<std::string, std::map<std::string, std::string>> by_concept;  // concept -> style -> image id
  for (const auto& g : images) {
    const Bytes png = store.read_image(g.image_id);
    r.concept_image_scores.push_back(gw.joint_similarity(png, g.concept_lemma, embed_backend));
    by_concept[g.concept_lemma].try_emplace(std::string(to_string(g.style)), g.image_id);
  }
  r.concept_image_histogram = histogram(r.concept_image_scores, bins);
  r.concept_image_mean = std::accumulate(r.concept_image_scores.begin(), r.concept_image_scores.end(), 0.0) /
                         static_cast<double>(r.concept_image_scores.size());

  double sum = 0;
  for (const auto& [lemma, styles] : by_concept) {
    const auto nat = styles.find("naturalistic"), sty = styles.find("stylistic");
    if (nat == styles.end() || sty == styles.end()) continue;
    const double c = dot(gw.embed_image(store.read_image(nat->second), embed_backend),
                         gw.embed_image(store.read_image(sty->second), embed_backend));
    r.style_pair_by_concept[lemma] = c;
    sum += c;
    ++r.style_pairs;
  }
  if (r.style_pairs) r.style_pair_mean = sum / static_cast<double>(r.style_pairs);
  return r;
}

Json to_json(const SimilarityReport& r) {
  return {{"concept_image_similarity",
           {{"n", r.concept_image_scores.size()},
            {"mean", r.concept_image_mean},
            {"histogram",
             {{"lo", r.concept_image_histogram.lo},
              {"hi", r.concept_image_histogram.hi},
              {"counts", r.concept_image_histogram.counts}}},
            {"scores", r.concept_image_scores},
            {"reference", "published corpus: scores concentrate in 20.0-25.0, peak near 22.5 (reference, not reproduced)"}}},
          {"style_pairs",
           {{"n", r.style_pairs},
            {"mean", r.style_pair_mean ? Json(*r.style_pair_mean) : Json("no data")},
            {"by_concept", r.style_pair_by_concept},
            {"reference", "published corpus: mean 0.70 (reference, not reproduced)"}}}};
}

}  // namespace metobench
