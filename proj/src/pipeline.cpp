#include "metobench/pipeline.hpp"
#include "metobench/png.hpp"

#include "metobench/parallel.hpp"
#include "metobench/text.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <tuple>

namespace metobench {

std::string_view to_string(Style s) {
  switch (s) {
    case Style::Naturalistic: return "naturalistic";
    case Style::Stylistic: return "stylistic";
    case Style::Plain: return "plain";
  }
  return "?";
}

std::optional<Style> parse_style(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "naturalistic") return Style::Naturalistic;
  if (v == "stylistic") return Style::Stylistic;
  if (v == "plain") return Style::Plain;
  return std::nullopt;
}

std::vector<Style> parse_styles(std::string_view list) {
  std::vector<Style> out;
  for (const auto& part : split(list, ',')) {
    if (trim(part).empty()) continue;
    const auto s = parse_style(part);
    if (!s) throw std::invalid_argument("unknown style '" + trim(part) + "'");
    if (std::find(out.begin(), out.end(), *s) == out.end()) out.push_back(*s);
  }
  if (out.empty()) throw std::invalid_argument("no styles given");
  return out;
}

std::string_view to_string(PipelineVariant v) { return v == PipelineVariant::Semiotic ? "semiotic" : "baseline"; }

std::optional<PipelineVariant> parse_variant(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "semiotic") return PipelineVariant::Semiotic;
  if (v == "baseline") return PipelineVariant::Baseline;
  return std::nullopt;
}

Json to_json(const RepresentamenSet& r) {
  return {{"concept", r.concept_lemma}, {"items", r.items},     {"model", r.model},
          {"template", r.template_id},  {"raw", r.raw},         {"attempts", r.attempts}};
}

RepresentamenSet representamens_from_json(const Json& j) {
  RepresentamenSet r;
  r.concept_lemma = j.at("concept");
  r.items = j.at("items").get<std::vector<std::string>>();
  r.model = j.value("model", "");
  r.template_id = j.value("template", "");
  r.raw = j.value("raw", "");
  r.attempts = j.value("attempts", 1);
  return r;
}

std::size_t word_target(Style s) {
  switch (s) {
    case Style::Naturalistic: return 70;
    case Style::Stylistic: return 60;
    case Style::Plain: return 0;
  }
  return 0;
}

Json to_json(const VisualDescription& d) {
  return {{"description_id", d.description_id},
          {"concept", d.concept_lemma},
          {"style", to_string(d.style)},
          {"text", d.text},
          {"word_count", d.word_count},
          {"word_target", word_target(d.style)},
          {"attempts", d.attempts},
          {"leakage_passed", d.leakage_passed},
          {"model", d.model}};
}

VisualDescription description_from_json(const Json& j) {
  VisualDescription d;
  d.description_id = j.at("description_id");
  d.concept_lemma = j.at("concept");
  const auto style = parse_style(j.at("style").get<std::string>());
  if (!style) throw SchemaError("description: unknown style");
  d.style = *style;
  d.text = j.at("text");
  d.word_count = j.at("word_count");
  d.attempts = j.at("attempts");
  d.leakage_passed = j.at("leakage_passed");
  d.model = j.value("model", "");
  return d;
}

Json to_json(const GeneratedImage& g) {
  Json j = {{"image_id", g.image_id},
            {"concept", g.concept_lemma},
            {"style", to_string(g.style)},
            {"pipeline", to_string(g.pipeline)},
            {"path", g.path},
            {"renderer", g.renderer},
            {"seed", g.seed},
            {"params", to_json(g.params)},
            {"description_id", g.description_id},
            {"flags", g.flags}};
  if (g.supersense) j["supersense"] = to_string(*g.supersense);
  return j;
}

GeneratedImage image_from_json(const Json& j) {
  GeneratedImage g;
  g.image_id = j.at("image_id");
  g.concept_lemma = j.at("concept");
  const auto style = parse_style(j.at("style").get<std::string>());
  const auto variant = parse_variant(j.at("pipeline").get<std::string>());
  if (!style || !variant) throw SchemaError("image: unknown style or pipeline");
  g.style = *style;
  g.pipeline = *variant;
  g.path = j.at("path");
  g.renderer = j.at("renderer");
  g.seed = j.at("seed");
  g.params = render_params_from_json(j.at("params"));
  g.description_id = j.at("description_id");
  if (j.contains("supersense")) g.supersense = parse_supersense(j["supersense"].get<std::string>());
  g.flags = j.at("flags").get<std::set<std::string>>();
  return g;
}

namespace {

std::string strip_item(std::string_view s) {
  std::string t = trim(s);
  // list markers and quoting that models sometimes add around items
  while (!t.empty() && (t.front() == '"' || t.front() == '\'' || t.front() == '*' || t.front() == '-')) t.erase(0, 1);
  while (!t.empty() && (t.back() == '"' || t.back() == '\'' || t.back() == '*' || t.back() == '.')) t.pop_back();
  return normalize_lemma(t);
}

std::string description_id_for(std::string_view lemma, Style style, std::string_view text) {
  std::string key(lemma);
  key += '\x1f';
  key += to_string(style);
  key += '\x1f';
  key += text;
  return sha256_hex(key).substr(0, 16);
}

// The model continues after "Output:"; keep the first paragraph of its answer
// and drop anything that starts another few-shot line.
std::string clean_description(std::string_view completion) {
  std::string text = trim(completion);
  if (text.rfind("Output:", 0) == 0) text = trim(std::string_view(text).substr(7));
  for (const std::string_view stop : {"\nObjects:", "||"}) {
    if (const auto pos = text.find(stop); pos != std::string::npos) text = trim(std::string_view(text).substr(0, pos));
  }
  return text;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<std::string> parse_representamens(std::string_view completion, std::string_view concept_lemma) {
  static constexpr std::string_view kMarker = "Representamen:";
  std::string_view body = completion;
  if (const auto pos = completion.rfind(kMarker); pos != std::string_view::npos) {
    body = completion.substr(pos + kMarker.size());
    body = body.substr(0, body.find('\n'));
  } else {
    // no marker: the first non-empty line is taken as the list
    std::size_t start = 0;
    while (start < body.size()) {
      const auto end = body.find('\n', start);
      const auto line = body.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
      if (!trim(line).empty()) {
        body = line;
        break;
      }
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
  }
  const std::string target = normalize_lemma(concept_lemma);
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& raw : split(body, ',')) {
    const std::string item = strip_item(raw);
    if (item.empty() || item == target) continue;
    if (!seen.insert(item).second) continue;
    out.push_back(item);
    if (out.size() == kMaxRepresentamens) break;
  }
  return out;
}

std::uint64_t concept_seed(std::uint64_t run_seed, std::string_view lemma) {
  return mix_seed(run_seed, fnv1a64(lemma));
}

std::int64_t stage_seed(std::uint64_t cseed, std::string_view stage, int attempt) {
  const std::uint64_t s = mix_seed(mix_seed(cseed, fnv1a64(stage)), static_cast<std::uint64_t>(attempt));
  // 31 bits keeps the seed valid for every common diffusion backend
  return static_cast<std::int64_t>(s & 0x7fffffffULL);
}

RepresentamenSet generate_representamens(Gateway& gw, const TemplateSet& templates, const Concept& c,
                                         const GenerationConfig& cfg, std::uint64_t seed) {
  if (c.status() != ConceptStatus::Retained) {
    throw PreconditionError("generate_representamens: '" + c.lemma() + "' is not retained");
  }
  const std::string prompt = fill(templates.get("representamen"), {{"word", capitalize(c.lemma())}});
  std::vector<std::string> completions;
  for (int attempt = 1; attempt <= cfg.max_parse_attempts; ++attempt) {
    SamplingParams params = cfg.sampling;
    params.seed = stage_seed(seed, "representamen", attempt);
    std::string completion;
    try {
      completion = gw.complete_text(prompt, params, cfg.text_backend);
    } catch (const EmptyCompletion& e) {
      completions.emplace_back();
      continue;
    }
    auto items = parse_representamens(completion, c.lemma());
    completions.push_back(completion);
    if (items.size() >= kMinRepresentamens) {
      return {c.lemma(), std::move(items), gw.model_id(Capability::Text, cfg.text_backend),
              templates.id("representamen"), completion, attempt};
    }
  }
  throw RepresentamenParseError("no usable representamen list for '" + c.lemma() + "' after " +
                                    std::to_string(cfg.max_parse_attempts) + " completions",
                                std::move(completions));
}

VisualDescription compose_description(Gateway& gw, const TemplateSet& templates, const Concept& c,
                                      const RepresentamenSet& reps, Style style, const GenerationConfig& cfg,
                                      std::uint64_t seed) {
  if (style == Style::Plain) throw PreconditionError("compose_description: plain style has no template");
  if (reps.items.size() < kMinRepresentamens || reps.concept_lemma != c.lemma()) {
    throw PreconditionError("compose_description: invalid representamen set for '" + c.lemma() + "'");
  }
  const std::string template_name(to_string(style));
  const std::string prompt = fill(templates.get(template_name),
                                  {{"rep_input", join(reps.items, ", ")}, {"goal", capitalize(c.lemma())}});
  const std::string stage = "description:" + template_name;
  std::vector<std::string> rejected;
  for (int attempt = 1; attempt <= cfg.max_leakage_attempts; ++attempt) {
    SamplingParams params = cfg.sampling;
    params.seed = stage_seed(seed, stage, attempt);
    std::string text;
    try {
      text = clean_description(gw.complete_text(prompt, params, cfg.text_backend));
    } catch (const EmptyCompletion&) {
      rejected.emplace_back();
      continue;
    }
    if (text.empty()) {
      rejected.emplace_back();
      continue;
    }
    if (const auto leak = leakage_check(text, c.lemma()); leak) {
      spdlog::debug("description for '{}' ({}) leaked '{}' on attempt {}", c.lemma(), template_name, leak.matched,
                    attempt);
      rejected.push_back(std::move(text));
      continue;
    }
    VisualDescription d;
    d.description_id = description_id_for(c.lemma(), style, text);
    d.concept_lemma = c.lemma();
    d.style = style;
    d.word_count = word_count(text);
    d.text = std::move(text);
    d.attempts = attempt;
    d.leakage_passed = true;
    d.model = gw.model_id(Capability::Text, cfg.text_backend);
    return d;
  }
  throw LeakageExhausted("every description for '" + c.lemma() + "' (" + template_name + ") named the concept after " +
                             std::to_string(cfg.max_leakage_attempts) + " attempts",
                         std::move(rejected));
}

VisualDescription baseline_description(const TemplateSet& templates, const Concept& c, const std::string& model) {
  VisualDescription d;
  d.text = fill(templates.get("baseline"), {{"word", c.lemma()}});
  d.concept_lemma = c.lemma();
  d.style = Style::Plain;
  d.description_id = description_id_for(c.lemma(), Style::Plain, d.text);
  d.word_count = word_count(d.text);
  d.attempts = 1;
  d.leakage_passed = false;
  d.model = model;
  return d;
}

GeneratedImage render_metonymic_image(Gateway& gw, CorpusStore& store, const VisualDescription& desc,
                                      const RenderParams& params, PipelineVariant variant,
                                      std::optional<Supersense> supersense, std::string_view backend) {
  if (variant == PipelineVariant::Semiotic && !desc.leakage_passed) {
    throw PreconditionError("render_metonymic_image: description for '" + desc.concept_lemma +
                            "' has not passed the leakage check");
  }
  RenderedImage rendered = gw.render_image(desc.text, params, backend);
  const auto put = store.put_image(rendered.png);
  GeneratedImage g;
  g.image_id = put.image_id;
  g.concept_lemma = desc.concept_lemma;
  g.style = desc.style;
  g.pipeline = variant;
  g.path = put.path;
  g.renderer = rendered.model;
  g.seed = rendered.effective.seed.value_or(0);
  g.params = rendered.effective;
  g.description_id = desc.description_id;
  g.supersense = supersense;
  return g;
}

Json to_json(const PipelineSummary& s) {
  return {{"run_id", s.run_id},
          {"images", s.images},
          {"failures", s.failures},
          {"resumed", s.resumed},
          {"not_retained", s.not_retained},
          {"failures_by_stage", s.failures_by_stage}};
}

namespace {

using PairKey = std::tuple<std::string, std::string, std::string>;  // concept, style, pipeline

struct ConceptOutcome {
  std::vector<std::pair<std::string, Json>> records;
  std::size_t images = 0;
  std::size_t failures = 0;
  std::map<std::string, std::size_t> failures_by_stage;
};

struct ResumeState {
  std::map<PairKey, std::string> outcome;  // "ok" or "failed"
  std::map<std::string, RepresentamenSet> representamens;
  std::map<std::pair<std::string, std::string>, VisualDescription> descriptions;
};

ResumeState load_resume_state(const CorpusStore& store) {
  ResumeState st;
  for (const auto& r : store.read_manifest()) {
    const std::string type = r["type"];
    if (type == "attempt") {
      auto& o = st.outcome[{r["concept"], r["style"], r["pipeline"]}];
      if (o != "ok") o = r["outcome"].get<std::string>();
    } else if (type == "image") {
      st.outcome[{r["concept"], r["style"], r["pipeline"]}] = "ok";
    } else if (type == "representamens") {
      st.representamens[r["concept"]] = representamens_from_json(r);
    } else if (type == "description" && r["leakage_passed"].get<bool>()) {
      st.descriptions[{r["concept"], r["style"]}] = description_from_json(r);
    }
  }
  return st;
}

class ConceptJob {
 public:
  ConceptJob(Gateway& gw, CorpusStore& store, const TemplateSet& templates, const PipelineConfig& cfg,
             const ResumeState& resume)
      : gw_(gw), store_(store), templates_(templates), cfg_(cfg), resume_(resume) {}

  ConceptOutcome run(const Concept& c, const std::vector<Style>& pending) const {
    ConceptOutcome out;
    const std::uint64_t cseed = concept_seed(cfg_.run_seed, c.lemma());
    const std::string pipeline(to_string(cfg_.variant));

    auto fail = [&](Style style, std::string stage, std::string error, Json extra = Json::object()) {
      Json row = {{"concept", c.lemma()}, {"style", to_string(style)}, {"pipeline", pipeline},
                  {"outcome", "failed"},  {"stage", stage},            {"error", std::move(error)}};
      row.update(extra);
      out.records.emplace_back("attempt", std::move(row));
      ++out.failures;
      ++out.failures_by_stage[stage];
    };

    std::optional<RepresentamenSet> reps;
    if (cfg_.variant == PipelineVariant::Semiotic) {
      if (const auto it = resume_.representamens.find(c.lemma()); it != resume_.representamens.end()) {
        reps = it->second;
      } else {
        try {
          reps = generate_representamens(gw_, templates_, c, cfg_.generation, cseed);
          out.records.emplace_back("representamens", to_json(*reps));
        } catch (const RepresentamenParseError& e) {
          for (const Style s : pending) fail(s, "representamen", e.what(), {{"completions", e.completions}});
          return out;
        } catch (const ConfigError&) {
          throw;
        } catch (const CapabilityError&) {
          throw;
        } catch (const GatewayError& e) {
          for (const Style s : pending) fail(s, "representamen", e.what());
          return out;
        }
      }
    }

    for (const Style style : pending) {
      VisualDescription desc;
      if (cfg_.variant == PipelineVariant::Baseline) {
        desc = baseline_description(templates_, c, gw_.model_id(Capability::Image, cfg_.generation.image_backend));
        out.records.emplace_back("description", to_json(desc));
      } else if (const auto it = resume_.descriptions.find({c.lemma(), std::string(to_string(style))});
                 it != resume_.descriptions.end()) {
        desc = it->second;
      } else {
        try {
          desc = compose_description(gw_, templates_, c, *reps, style, cfg_.generation, cseed);
          out.records.emplace_back("description", to_json(desc));
        } catch (const LeakageExhausted& e) {
          fail(style, "description", e.what(), {{"rejected", e.attempts}});
          continue;
        } catch (const ConfigError&) {
          throw;
        } catch (const CapabilityError&) {
          throw;
        } catch (const GatewayError& e) {
          fail(style, "description", e.what());
          continue;
        }
      }

      RenderParams params = cfg_.generation.render;
      params.seed = stage_seed(cseed, "render:" + std::string(to_string(style)), 0);
      try {
        const GeneratedImage img = render_metonymic_image(gw_, store_, desc, params, cfg_.variant, c.supersense(),
                                                          cfg_.generation.image_backend);
        out.records.emplace_back("image", to_json(img));
        out.records.emplace_back("attempt", Json{{"concept", c.lemma()},
                                                 {"style", to_string(style)},
                                                 {"pipeline", pipeline},
                                                 {"outcome", "ok"},
                                                 {"image_id", img.image_id}});
        ++out.images;
      } catch (const ModerationRefusal& e) {
        spdlog::warn("render refused for '{}' ({}): {}", c.lemma(), to_string(style), e.what());
        fail(style, "render", std::string("moderation: ") + e.what(), {{"flags", Json::array({"other"})}});
      } catch (const ConfigError&) {
        throw;
      } catch (const CapabilityError&) {
        throw;
      } catch (const GatewayError& e) {
        fail(style, "render", e.what());
      } catch (const StoreError& e) {
        fail(style, "render", e.what());
      } catch (const ImageDecodeError& e) {
        fail(style, "render", std::string("renderer returned an undecodable image: ") + e.what());
      }
    }
    return out;
  }

 private:
  Gateway& gw_;
  CorpusStore& store_;
  const TemplateSet& templates_;
  const PipelineConfig& cfg_;
  const ResumeState& resume_;
};

}  // namespace

PipelineSummary run_pipeline(Gateway& gw, CorpusStore& store, const TemplateSet& templates,
                             std::span<const Concept> concepts, const PipelineConfig& cfg) {
  if (!gw.has(Capability::Image, cfg.generation.image_backend)) {
    throw ConfigError("run_pipeline: no image backend configured");
  }
  if (cfg.variant == PipelineVariant::Semiotic && !gw.has(Capability::Text, cfg.generation.text_backend)) {
    throw ConfigError("run_pipeline: no text backend configured");
  }
  cfg.generation.sampling.validate();
  cfg.generation.render.validate();

  const std::vector<Style> styles = cfg.variant == PipelineVariant::Baseline ? std::vector<Style>{Style::Plain}
                                                                              : cfg.styles;
  for (const Style s : styles) {
    if (cfg.variant == PipelineVariant::Semiotic && s == Style::Plain) {
      throw std::invalid_argument("the plain style belongs to the baseline pipeline");
    }
  }

  PipelineSummary summary;
  std::uint64_t run_key = fnv1a64(to_string(cfg.variant));
  for (const auto& c : concepts) run_key = mix_seed(run_key, fnv1a64(c.lemma()));
  for (const Style s : styles) run_key = mix_seed(run_key, fnv1a64(to_string(s)));
  summary.run_id = "run-" + hex64(mix_seed(cfg.run_seed, run_key));

  const ResumeState resume = load_resume_state(store);
  const std::string pipeline(to_string(cfg.variant));

  struct Work {
    const Concept* concept_ptr;
    std::vector<Style> pending;
  };
  std::vector<Work> work;
  for (const auto& c : concepts) {
    if (c.status() != ConceptStatus::Retained) {
      ++summary.not_retained;
      continue;
    }
    Work w{&c, {}};
    for (const Style s : styles) {
      const auto it = resume.outcome.find({c.lemma(), std::string(to_string(s)), pipeline});
      const bool done = it != resume.outcome.end() && (it->second == "ok" || !cfg.retry_failed);
      if (done) {
        ++summary.resumed;
      } else {
        w.pending.push_back(s);
      }
    }
    if (!w.pending.empty()) work.push_back(std::move(w));
  }

  RecordLog& manifest = store.manifest();
  Json styles_json = Json::array();
  for (const Style s : styles) styles_json.push_back(to_string(s));
  manifest.append("run", {{"run_id", summary.run_id},
                          {"seed", cfg.run_seed},
                          {"schema_version", kSchemaVersion},
                          {"pipeline", pipeline},
                          {"styles", styles_json},
                          {"concepts", concepts.size()},
                          {"pending", work.size()}});

  const ConceptJob job(gw, store, templates, cfg, resume);
  // Commit in input order while later concepts are still being processed.
  ordered_parallel(
      work.size(), cfg.workers, [&](std::size_t i) { return job.run(*work[i].concept_ptr, work[i].pending); },
      [&](std::size_t, ConceptOutcome outcome) {
        for (auto& [type, payload] : outcome.records) manifest.append(type, std::move(payload));
        summary.images += outcome.images;
        summary.failures += outcome.failures;
        for (const auto& [stage, n] : outcome.failures_by_stage) summary.failures_by_stage[stage] += n;
      });
  spdlog::info("pipeline {}: {} images, {} failures, {} resumed", summary.run_id, summary.images, summary.failures,
               summary.resumed);
  return summary;
}

double greedy_match_score(const std::vector<std::string>& a, const std::vector<Embedding>& va,
                          const std::vector<std::string>& b, const std::vector<Embedding>& vb) {
  if (a.size() != va.size() || b.size() != vb.size()) throw std::invalid_argument("items and vectors differ in size");
  if (a.empty() || b.empty()) throw std::invalid_argument("greedy matching needs two nonempty sets");
  Matrix<double> sim(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) sim(i, j) = cosine(va[i], vb[j]);
  }
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  const std::size_t rounds = std::min(a.size(), b.size());
  double total = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    auto better = [&](std::size_t i, std::size_t j, std::size_t bi, std::size_t bj) {
      if (sim(i, j) != sim(bi, bj)) return sim(i, j) > sim(bi, bj);
      const auto key = std::tie(std::min(a[i], b[j]), std::max(a[i], b[j]), a[i]);
      const auto best_key = std::tie(std::min(a[bi], b[bj]), std::max(a[bi], b[bj]), a[bi]);
      return key < best_key;
    };
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (used_a[i]) continue;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (used_b[j]) continue;
        if (!best || better(i, j, best->first, best->second)) best = {i, j};
      }
    }
    used_a[best->first] = true;
    used_b[best->second] = true;
    total += sim(best->first, best->second);
  }
  return total / static_cast<double>(rounds);
}

Json to_json(const AgreementReport& r) {
  Json matrix = Json::array();
  for (Eigen::Index i = 0; i < r.mean.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < r.mean.cols(); ++j) row.push_back(r.mean(i, j));
    matrix.push_back(row);
  }
  return {{"models", r.models}, {"matrix", matrix}, {"concepts_scored", r.concepts_scored}, {"warnings", r.warnings}};
}

AgreementReport representamen_agreement(Gateway& gw,
                                        const std::map<std::string, std::vector<RepresentamenSet>>& sets_by_model,
                                        std::string_view embed_backend) {
  AgreementReport report;
  std::map<std::string, std::map<std::string, const RepresentamenSet*>> by_model;
  std::set<std::string> concepts;
  for (const auto& [model, sets] : sets_by_model) {
    report.models.push_back(model);
    for (const auto& s : sets) {
      by_model[model][s.concept_lemma] = &s;
      concepts.insert(s.concept_lemma);
    }
  }
  for (const auto& [model, sets] : by_model) {
    if (sets.size() != concepts.size()) {
      throw PreconditionError("representamen_agreement: model '" + model + "' does not cover every concept");
    }
  }

  // One embedding per distinct item string keeps ties exact across models.
  std::map<std::string, Embedding> cache;
  {
    std::vector<std::string> pending;
    for (const auto& [model, sets] : by_model)
      for (const auto& [lemma, s] : sets)
        for (const auto& item : s->items)
          if (!cache.count(item)) cache.emplace(item, Embedding()), pending.push_back(item);
    if (!pending.empty()) {
      const auto vecs = gw.embed_text(pending, embed_backend);
      for (std::size_t i = 0; i < pending.size(); ++i) cache[pending[i]] = vecs[i];
    }
  }
  auto vectors = [&](const RepresentamenSet& s) {
    std::vector<Embedding> out;
    for (const auto& item : s.items) out.push_back(cache.at(item));
    return out;
  };

  const auto n = static_cast<Eigen::Index>(report.models.size());
  report.mean = Matrix<double>::Zero(n, n);
  std::set<std::string> warned;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const auto& ma = by_model[report.models[i]];
      const auto& mb = by_model[report.models[j]];
      double sum = 0;
      std::size_t count = 0;
      for (const auto& lemma : concepts) {
        const RepresentamenSet& sa = *ma.at(lemma);
        const RepresentamenSet& sb = *mb.at(lemma);
        if (sa.items.empty() || sb.items.empty()) {
          if (warned.insert(lemma).second) {
            report.warnings.push_back("concept '" + lemma + "' has an empty representamen set; skipped");
            spdlog::warn("{}", report.warnings.back());
          }
          continue;
        }
        sum += greedy_match_score(sa.items, vectors(sa), sb.items, vectors(sb));
        ++count;
      }
      const double value = count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
      report.mean(i, j) = value;
      report.mean(j, i) = value;
      report.concepts_scored[report.models[i] + "|" + report.models[j]] = count;
    }
  }
  return report;
}

}  // namespace metobench
