// metobench command line: one subcommand per stage of the dataset factory.
// JSON goes to stdout, logs to stderr.

#include "metobench/annotation.hpp"
#include "metobench/annotation_server.hpp"
#include "metobench/benchmark.hpp"
#include "metobench/catalog.hpp"
#include "metobench/distractors.hpp"
#include "metobench/gateway.hpp"
#include "metobench/graph.hpp"
#include "metobench/pipeline.hpp"
#include "metobench/store.hpp"
#include "metobench/templates.hpp"
#include "metobench/text.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace metobench;

namespace {

struct Globals {
  std::string config;
  bool mock = false;
  bool deterministic_clock = false;
  int workers = 4;
  std::string templates_dir;
  std::string run_log;
  std::string log_level = "info";
};

Clock make_clock(const Globals& g) { return g.deterministic_clock ? logical_clock() : system_clock(); }

std::unique_ptr<Gateway> make_gateway(const Globals& g) {
  GatewayConfig cfg;
  if (!g.config.empty()) {
    cfg = GatewayConfig::load(g.config);
  } else if (g.mock) {
    cfg = GatewayConfig::all_mock();
  } else {
    throw ConfigError("no backends: pass --config <file> or --mock");
  }
  std::shared_ptr<RunLog> log;
  if (!g.run_log.empty()) log = std::make_shared<RunLog>(g.run_log, make_clock(g));
  return build_gateway(cfg, log);
}

TemplateSet make_templates(const Globals& g) {
  return g.templates_dir.empty() ? TemplateSet() : TemplateSet::with_overrides(g.templates_dir);
}

void print(const Json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<AnnotationRecord> current_annotations(const fs::path& store) {
  return current_labels(read_annotations(store / "annotations.jsonl"));
}

std::set<std::string> flagged_images(const fs::path& store) {
  return excluded_images(read_annotations(store / "annotations.jsonl"));
}

// Latest record per key, first-seen order.
std::vector<Json> latest_by(const std::vector<Json>& rows, const char* key) {
  std::map<std::string, std::size_t> index;
  std::vector<Json> out;
  for (const auto& r : rows) {
    const std::string k = r[key];
    if (auto it = index.find(k); it != index.end()) {
      out[it->second] = r;
    } else {
      index.emplace(k, out.size());
      out.push_back(r);
    }
  }
  return out;
}

std::vector<MCQItem> load_items(const fs::path& path) {
  std::vector<MCQItem> items;
  for (const auto& j : latest_by(read_records(path, "item"), "item_id")) items.push_back(item_from_json(j));
  return items;
}

// ---- filter ---------------------------------------------------------------

struct FilterArgs {
  std::string ratings, supersenses, out, categories = "default", store;
  double cutoff = 3.5, threshold = 0.60;
};

int cmd_filter(const FilterArgs& a) {
  LexiconLoad load;
  try {
    load = load_lexicon(fs::path(a.ratings), fs::path(a.supersenses));
  } catch (const EmptyCatalogError& e) {
    spdlog::error("{} ({} unmatched lemmas)", e.what(), e.report.unmatched.size());
    return 2;
  }
  for (const auto& w : load.warnings) spdlog::warn("{}:{}: {}", w.source, w.line, w.message);

  FilterConfig cfg;
  cfg.concreteness_cutoff = a.cutoff;
  cfg.retention_threshold = a.threshold;
  Json retention = nullptr;
  if (a.categories == "auto") {
    if (a.store.empty()) throw std::invalid_argument("--categories auto needs --store with annotations");
    const auto report = category_retention(
        supersense_consensus(current_annotations(a.store), images_from_manifest(fs::path(a.store) / "manifest.jsonl")),
        cfg);
    cfg.retained_categories = report.retained;
    retention = to_json(report);
  } else if (a.categories != "default") {
    cfg.retained_categories.clear();
    for (const auto& name : split(a.categories, ',')) {
      const auto s = parse_supersense(trim(name));
      if (!s) throw std::invalid_argument("unknown supersense '" + trim(name) + "'");
      cfg.retained_categories.insert(*s);
    }
  }
  cfg.validate();

  const auto concepts = filter_concepts(std::move(load.concepts), cfg);
  write_catalog(a.out, concepts);

  std::map<std::string, std::size_t> by_status;
  for (const auto& c : concepts) {
    by_status[c.reject_reason() ? "rejected_" + std::string(to_string(*c.reject_reason()))
                                : std::string(to_string(c.status()))]++;
  }
  Json unmatched = Json::array();
  for (const auto& u : load.unmatched) unmatched.push_back({{"lemma", u.lemma}, {"missing_from", u.missing_from}});
  Json report = {{"catalog", a.out},
                 {"concepts", concepts.size()},
                 {"by_status", by_status},
                 {"unmatched", load.unmatched.size()},
                 {"warnings", load.warnings.size()},
                 {"retained_categories", Json::array()}};
  for (const auto s : cfg.retained_categories) report["retained_categories"].push_back(to_string(s));
  if (!retention.is_null()) report["category_retention"] = retention;
  std::ofstream(a.out + ".report.json") << Json{{"summary", report}, {"unmatched", unmatched}}.dump(2) << '\n';
  print(report);
  return 0;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string catalog, out_dir, styles = "naturalistic,stylistic", variant = "semiotic";
  std::string text_backend, image_backend;
  std::uint64_t seed = 0;
  bool retry_failed = false;
  int steps = 35;
  double guidance = 7.5;
  int width = 1024, height = 1024;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  const auto variant = parse_variant(a.variant);
  if (!variant) throw std::invalid_argument("--variant must be semiotic or baseline");
  PipelineConfig cfg;
  cfg.styles = parse_styles(a.styles);
  cfg.variant = *variant;
  cfg.run_seed = a.seed;
  cfg.workers = g.workers;
  cfg.retry_failed = a.retry_failed;
  cfg.generation.text_backend = a.text_backend;
  cfg.generation.image_backend = a.image_backend;
  cfg.generation.render.inference_steps = a.steps;
  cfg.generation.render.guidance_scale = a.guidance;
  cfg.generation.render.width = a.width;
  cfg.generation.render.height = a.height;
  cfg.generation.render.validate();

  auto gw = make_gateway(g);
  const auto templates = make_templates(g);
  CorpusStore store(a.out_dir, make_clock(g));
  const auto concepts = read_catalog(a.catalog);
  const auto summary = run_pipeline(*gw, store, templates, concepts, cfg);
  print(to_json(summary));
  return 0;
}

// ---- distract -------------------------------------------------------------

struct DistractArgs {
  std::string catalog, store, graph = "api", mix = "1v2s", pool = "same-style", graph_cache;
  std::string text_embed_backend, image_embed_backend;
  double tau_high = 0.85;
  std::size_t visual_k = 10, intermediate_cap = 200, limit = 0;
};

int cmd_distract(const Globals& g, const DistractArgs& a) {
  if (a.pool != "same-style" && a.pool != "all") throw std::invalid_argument("--pool must be same-style or all");
  DistractorConfig cfg;
  cfg.mix = parse_mix(a.mix);
  cfg.tau_high = a.tau_high;
  cfg.visual_k = a.visual_k;
  cfg.intermediate_cap = a.intermediate_cap;
  cfg.text_embed_backend = a.text_embed_backend;

  auto gw = make_gateway(g);
  CorpusStore store(a.store, make_clock(g));
  const fs::path cache = a.graph_cache.empty() ? store.root() / "graph_cache" : fs::path(a.graph_cache);
  auto graph = open_graph(a.graph, cache);
  ImageEmbeddingCache embeddings(*gw, store, a.image_embed_backend);

  std::vector<std::string> global;
  for (const auto& c : read_catalog(a.catalog)) {
    if (c.status() == ConceptStatus::Retained) global.push_back(c.lemma());
  }
  const auto flagged = flagged_images(store.root());
  std::vector<ImageInfo> targets;
  for (const auto& j : store.read_manifest("image")) {
    const auto img = image_from_json(j);
    if (img.pipeline != PipelineVariant::Semiotic || flagged.count(img.image_id)) continue;
    targets.push_back({img.image_id, img.concept_lemma, std::string(to_string(img.style)), "semiotic", img.supersense});
  }
  std::set<std::string> done;
  for (const auto& j : store.read_items("distractors")) done.insert(j["image_id"].get<std::string>());

  std::size_t built = 0, skipped = 0, failed = 0;
  for (const auto& t : targets) {
    if (a.limit && built >= a.limit) break;
    if (done.count(t.image_id)) {
      ++skipped;
      continue;
    }
    std::vector<PoolImage> pool;
    for (const auto& o : targets) {
      if (o.concept_lemma == t.concept_lemma) continue;
      if (a.pool == "same-style" && o.style != t.style) continue;
      pool.push_back({o.image_id, o.concept_lemma});
    }
    try {
      const auto cands = build_distractors(*gw, *graph, embeddings, t.concept_lemma, t.image_id, pool, global, cfg);
      Json arr = Json::array();
      for (const auto& c : cands) arr.push_back(to_json(c));
      store.items().append("distractors", {{"image_id", t.image_id},
                                           {"target", t.concept_lemma},
                                           {"style", t.style},
                                           {"graph", graph->describe()},
                                           {"tau_high", cfg.tau_high},
                                           {"candidates", arr}});
      done.insert(t.image_id);
      ++built;
    } catch (const DistractorError& e) {
      spdlog::warn("no distractors for '{}' ({}): {}", t.concept_lemma, t.image_id.substr(0, 12), e.what());
      ++failed;
    }
  }
  print({{"built", built}, {"resumed", skipped}, {"failed", failed}, {"graph", graph->describe()}});
  return 0;
}

// ---- assemble -------------------------------------------------------------

struct AssembleArgs {
  std::string store;
  std::uint64_t seed = 0;
  bool only_metonymic = false;
};

int cmd_assemble(const Globals& g, const AssembleArgs& a) {
  CorpusStore store(a.store, make_clock(g));
  const auto images = images_from_manifest(store.manifest_path());
  const auto history = read_annotations(store.annotations_path());
  const auto flagged = excluded_images(history);
  std::map<std::string, std::vector<const AnnotationRecord*>> labels;
  const auto current = current_labels(history);
  for (const auto& r : current) labels[r.image_id].push_back(&r);

  std::set<std::string> assembled;
  for (const auto& j : store.read_items("item")) assembled.insert(j["image_id"].get<std::string>());

  std::size_t built = 0, excluded = 0, unlabeled = 0, resumed = 0;
  for (const auto& d : latest_by(store.read_items("distractors"), "image_id")) {
    const std::string image_id = d["image_id"];
    if (flagged.count(image_id)) {
      ++excluded;
      continue;
    }
    if (assembled.count(image_id)) {
      ++resumed;
      continue;
    }
    const auto& mine = labels[image_id];
    if (a.only_metonymic) {
      std::vector<MetonymyLabel> ls;
      for (const auto* r : mine) ls.push_back(r->label);
      if (ls.empty() || consensus(ls) != MetonymyLabel::Metonymic) {
        ++unlabeled;
        continue;
      }
    }
    std::vector<DistractorCandidate> cands;
    for (const auto& c : d["candidates"]) cands.push_back(distractor_from_json(c));
    const auto info = images.find(image_id);
    const std::string style = info != images.end() ? info->second.style : d.value("style", "");
    MCQItem item = assemble_item(image_id, d["target"], style, cands, mix_seed(a.seed, fnv1a64(image_id)));
    for (const auto* r : mine) {
      if (r->association_type) {
        item.association_type = r->association_type;
        break;
      }
    }
    store.items().append("item", to_json(item));
    ++built;
  }
  print({{"items", built}, {"excluded_flagged", excluded}, {"skipped_not_metonymic", unlabeled}, {"resumed", resumed}});
  return 0;
}

// ---- evaluate / score -----------------------------------------------------

struct EvaluateArgs {
  std::string model, items, store;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  const fs::path root = a.store.empty() ? fs::path(a.items).parent_path() : fs::path(a.store);
  auto gw = make_gateway(g);
  const auto templates = make_templates(g);
  CorpusStore store(root, make_clock(g));
  const auto flagged = flagged_images(root);
  std::vector<MCQItem> items;
  std::size_t dropped = 0;
  for (auto& item : load_items(a.items)) {
    if (flagged.count(item.image_id)) {
      ++dropped;
      continue;
    }
    items.push_back(std::move(item));
  }
  EvalConfig cfg;
  cfg.backend = a.model;
  cfg.workers = g.workers;
  const auto run = evaluate(*gw, store, templates, items, cfg);
  print({{"model", run.model},
         {"queried", run.queried},
         {"resumed", run.resumed},
         {"excluded_flagged", dropped},
         {"score", to_json(score(run.results, items))}});
  return 0;
}

struct ScoreArgs {
  std::string results, items, report = "md";
};

int cmd_score(const ScoreArgs& a) {
  const fs::path dir(a.results);
  const fs::path items_path = a.items.empty() ? dir.parent_path() / "items.jsonl" : fs::path(a.items);
  const auto items = load_items(items_path);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ScoreReport> reports;
  for (const auto& f : files) {
    std::vector<ItemResult> results;
    for (const auto& j : read_records(f, "result")) results.push_back(result_from_json(j));
    if (!results.empty()) reports.push_back(score(results, items));
  }
  if (a.report == "json") {
    print(reports_to_json(reports));
  } else if (a.report == "md") {
    std::cout << to_markdown(reports);
  } else {
    throw std::invalid_argument("--report must be md or json");
  }
  return 0;
}

// ---- analyses -------------------------------------------------------------

struct PredictArgs {
  std::string store, model, embed_backend;
  std::size_t limit = 0, bins = 20;
};

int cmd_predict(const Globals& g, const PredictArgs& a) {
  auto gw = make_gateway(g);
  const auto templates = make_templates(g);
  CorpusStore store(a.store, make_clock(g));
  const std::string model = gw->model_id(Capability::Multimodal, a.model);
  RecordLog log(store.root() / "predictions" / store.results_path(model).filename(), make_clock(g));
  const auto flagged = flagged_images(store.root());
  std::vector<double> scores;
  for (const auto& j : store.read_manifest("image")) {
    if (a.limit && scores.size() >= a.limit) break;
    const auto img = image_from_json(j);
    if (img.pipeline != PipelineVariant::Semiotic || flagged.count(img.image_id)) continue;
    const auto p = predict_concept(*gw, templates, img.image_id, store.read_image(img.image_id), img.concept_lemma,
                                   a.model, a.embed_backend);
    log.append("prediction",
               {{"image_id", p.image_id}, {"model", model}, {"gold", p.gold}, {"word", p.word}, {"cosine", p.cosine}});
    scores.push_back(p.cosine);
  }
  const auto h = histogram(scores, a.bins);
  double mean = 0;
  for (double s : scores) mean += s;
  print({{"model", model},
         {"predictions", scores.size()},
         {"mean_cosine", scores.empty() ? Json(nullptr) : Json(mean / static_cast<double>(scores.size()))},
         {"histogram", {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}},
         {"reference", "published free-form predictions mostly score 0.75 to 0.9 (not reproduced)"}});
  return 0;
}

int cmd_rep_agreement(const Globals& g, const std::vector<std::string>& manifests, const std::string& embed_backend) {
  std::map<std::string, std::vector<RepresentamenSet>> by_model;
  for (const auto& m : manifests) {
    for (const auto& j : latest_by(read_records(m, "representamens"), "concept")) {
      auto set = representamens_from_json(j);
      by_model[set.model].push_back(std::move(set));
    }
  }
  if (by_model.size() < 2) throw std::invalid_argument("need representamens from at least two models");
  auto gw = make_gateway(g);
  print(to_json(representamen_agreement(*gw, by_model, embed_backend)));
  return 0;
}

int cmd_crossover(const std::string& catalog, const std::string& store_dir) {
  std::map<std::string, double> concreteness;
  for (const auto& c : read_catalog(catalog)) concreteness.emplace(c.lemma(), c.concreteness());
  const auto images = images_from_manifest(fs::path(store_dir) / "manifest.jsonl");
  std::map<std::string, std::vector<MetonymyLabel>> labels;
  for (const auto& r : current_annotations(store_dir)) labels[r.image_id].push_back(r.label);
  std::vector<std::pair<double, MetonymyLabel>> samples;
  for (const auto& [id, ls] : labels) {
    const auto img = images.find(id);
    if (img == images.end()) continue;
    const auto c = concreteness.find(img->second.concept_lemma);
    if (c == concreteness.end()) continue;
    samples.emplace_back(c->second, consensus(ls));
  }
  try {
    print(to_json(concreteness_crossover(samples)));
  } catch (const EstimationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}

int cmd_retention(const std::string& store_dir, double threshold) {
  FilterConfig cfg;
  cfg.retention_threshold = threshold;
  cfg.validate();
  const auto pairs =
      supersense_consensus(current_annotations(store_dir), images_from_manifest(fs::path(store_dir) / "manifest.jsonl"));
  print(to_json(category_retention(pairs, cfg)));
  return 0;
}

int cmd_verify(const std::string& store_dir) {
  const auto report = verify(store_dir);
  print(to_json(report));
  return report.ok() ? 0 : 1;
}

// ---- annotate -------------------------------------------------------------

struct ServeArgs {
  std::string store, host = "127.0.0.1", tokens, ui;
  int port = 8080, labels_per_image = 2;
  std::size_t sample = 0;
  std::uint64_t sample_seed = 0;
};

AnnotationServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Globals& g, const ServeArgs& a) {
  AnnotationStore store(a.store, make_clock(g), a.labels_per_image);
  if (a.sample) {
    const auto ids = stratified_sample(store.images(), a.sample, a.sample_seed);
    spdlog::info("task pool: {} of {} images, stratified by supersense (seed {})", ids.size(), store.images().size(),
                 a.sample_seed);
    store.restrict_tasks({ids.begin(), ids.end()});
  }
  ServerConfig cfg;
  cfg.host = a.host;
  cfg.port = a.port;
  if (!a.tokens.empty()) cfg.tokens = load_tokens(a.tokens);
  if (!a.ui.empty()) cfg.ui_dir = a.ui;
  cfg.guidelines = make_templates(g).get("annotation_guidelines");
  AnnotationServer server(store, cfg);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  spdlog::info("{} images, {} annotators with tokens", store.images().size(), cfg.tokens.size());
  server.run();
  g_server = nullptr;
  return 0;
}

int cmd_export(const std::string& store_dir, const std::string& out) {
  const auto current = current_annotations(store_dir);
  export_labels(out, current);
  print({{"exported", current.size()}, {"out", out}});
  return 0;
}

int cmd_import(const Globals& g, const std::string& store_dir, const std::string& in) {
  AnnotationStore store(store_dir, make_clock(g));
  std::size_t n = 0;
  for (auto& r : import_labels(in)) {
    store.submit(std::move(r));
    ++n;
  }
  print({{"imported", n}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metobench: visual metonymy dataset factory and benchmark harness"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "backend configuration (JSON)");
  app.add_flag("--mock", g.mock, "use the in-tree mock backends");
  app.add_flag("--deterministic-clock", g.deterministic_clock, "logical timestamps, for byte-identical manifests");
  app.add_option("--workers", g.workers, "concurrent concepts / items")->check(CLI::PositiveNumber);
  app.add_option("--templates", g.templates_dir, "directory of prompt template overrides");
  app.add_option("--run-log", g.run_log, "append gateway request metadata here");
  app.add_option("--log-level", g.log_level)->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  int rc = 0;

  FilterArgs fa;
  auto* filter = app.add_subcommand("filter", "join the lexicon and apply the concreteness and category filters");
  filter->add_option("--ratings", fa.ratings)->required()->check(CLI::ExistingFile);
  filter->add_option("--supersenses", fa.supersenses)->required()->check(CLI::ExistingFile);
  filter->add_option("--cutoff", fa.cutoff, "concreteness must be strictly below this");
  filter->add_option("--categories", fa.categories, "comma list of supersenses, 'default' or 'auto'");
  filter->add_option("--threshold", fa.threshold, "retention threshold used by --categories auto");
  filter->add_option("--store", fa.store, "annotated store used by --categories auto");
  filter->add_option("--out", fa.out)->required();
  filter->callback([&] { rc = cmd_filter(fa); });

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "run the three-stage generation pipeline");
  generate->add_option("--catalog", ga.catalog)->required()->check(CLI::ExistingFile);
  generate->add_option("--out-dir", ga.out_dir)->required();
  generate->add_option("--styles", ga.styles);
  generate->add_option("--seed", ga.seed);
  generate->add_option("--variant", ga.variant, "semiotic or baseline");
  generate->add_option("--text-backend", ga.text_backend);
  generate->add_option("--image-backend", ga.image_backend);
  generate->add_option("--steps", ga.steps);
  generate->add_option("--guidance", ga.guidance);
  generate->add_option("--width", ga.width);
  generate->add_option("--height", ga.height);
  generate->add_flag("--retry-failed", ga.retry_failed, "retry pairs whose earlier attempt failed");
  generate->callback([&] { rc = cmd_generate(g, ga); });

  DistractArgs da;
  auto* distract = app.add_subcommand("distract", "mine three distractors per generated image");
  distract->add_option("--items-from", da.catalog, "concept catalog")->required()->check(CLI::ExistingFile);
  distract->add_option("--images", da.store, "corpus store directory")->required()->check(CLI::ExistingDirectory);
  distract->add_option("--graph", da.graph, "api, api:<url> or file:<edges.tsv>");
  distract->add_option("--graph-cache", da.graph_cache);
  distract->add_option("--mix", da.mix, "e.g. 1v2s");
  distract->add_option("--tau-high", da.tau_high);
  distract->add_option("--visual-k", da.visual_k);
  distract->add_option("--intermediate-cap", da.intermediate_cap);
  distract->add_option("--pool", da.pool, "same-style or all");
  distract->add_option("--text-embed-backend", da.text_embed_backend);
  distract->add_option("--image-embed-backend", da.image_embed_backend);
  distract->add_option("--limit", da.limit);
  distract->callback([&] { rc = cmd_distract(g, da); });

  AssembleArgs aa;
  auto* assemble = app.add_subcommand("assemble", "shuffle distractor sets into MCQ items");
  assemble->add_option("--store", aa.store)->required()->check(CLI::ExistingDirectory);
  assemble->add_option("--seed", aa.seed);
  assemble->add_flag("--only-metonymic", aa.only_metonymic, "keep images whose annotation consensus is metonymic");
  assemble->callback([&] { rc = cmd_assemble(g, aa); });

  EvaluateArgs ea;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "query a multimodal backend on every item");
  evaluate_cmd->add_option("--model", ea.model, "multimodal backend name")->required();
  evaluate_cmd->add_option("--items", ea.items)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--store", ea.store, "defaults to the items file's directory");
  evaluate_cmd->callback([&] { rc = cmd_evaluate(g, ea); });

  ScoreArgs sa;
  auto* score_cmd = app.add_subcommand("score", "accuracy report over every results file");
  score_cmd->add_option("--results", sa.results)->required()->check(CLI::ExistingDirectory);
  score_cmd->add_option("--items", sa.items);
  score_cmd->add_option("--report", sa.report)->check(CLI::IsMember({"md", "json"}));
  score_cmd->callback([&] { rc = cmd_score(sa); });

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "free-form concept prediction scored by embedding cosine");
  predict->add_option("--store", pa.store)->required()->check(CLI::ExistingDirectory);
  predict->add_option("--model", pa.model, "multimodal backend name");
  predict->add_option("--embed-backend", pa.embed_backend);
  predict->add_option("--limit", pa.limit);
  predict->add_option("--bins", pa.bins);
  predict->callback([&] { rc = cmd_predict(g, pa); });

  std::string sim_store, sim_backend;
  std::size_t sim_bins = 20;
  auto* similarity = app.add_subcommand("similarity", "image-concept and naturalistic-stylistic similarity reports");
  similarity->add_option("--store", sim_store)->required()->check(CLI::ExistingDirectory);
  similarity->add_option("--bins", sim_bins);
  similarity->add_option("--embed-backend", sim_backend);
  similarity->callback([&] {
    auto gw = make_gateway(g);
    CorpusStore store(sim_store, make_clock(g));
    print(to_json(similarity_reports(*gw, store, sim_bins, sim_backend)));
  });

  std::vector<std::string> ra_manifests;
  std::string ra_backend;
  auto* rep = app.add_subcommand("rep-agreement", "greedy-matching similarity of representamens across models");
  rep->add_option("--manifest", ra_manifests, "one or more manifests")->required()->check(CLI::ExistingFile);
  rep->add_option("--embed-backend", ra_backend);
  rep->callback([&] { rc = cmd_rep_agreement(g, ra_manifests, ra_backend); });

  std::string co_catalog, co_store;
  auto* crossover = app.add_subcommand("crossover", "concreteness densities of annotated images by label");
  crossover->add_option("--catalog", co_catalog)->required()->check(CLI::ExistingFile);
  crossover->add_option("--store", co_store)->required()->check(CLI::ExistingDirectory);
  crossover->callback([&] { rc = cmd_crossover(co_catalog, co_store); });

  std::string rt_store;
  double rt_threshold = 0.60;
  auto* retention = app.add_subcommand("retention", "per-supersense metonymic rates from annotations");
  retention->add_option("--store", rt_store)->required()->check(CLI::ExistingDirectory);
  retention->add_option("--threshold", rt_threshold);
  retention->callback([&] { rc = cmd_retention(rt_store, rt_threshold); });

  std::string vf_store;
  auto* verify_cmd = app.add_subcommand("verify", "hash, reference and leakage integrity of a store");
  verify_cmd->add_option("--store", vf_store)->required()->check(CLI::ExistingDirectory);
  verify_cmd->callback([&] { rc = cmd_verify(vf_store); });

  auto* annotate = app.add_subcommand("annotate", "annotation service and label exchange");
  annotate->require_subcommand(1);
  ServeArgs sv;
  auto* serve = annotate->add_subcommand("serve", "HTTP API for annotators");
  serve->add_option("--store", sv.store)->required()->check(CLI::ExistingDirectory);
  serve->add_option("--port", sv.port);
  serve->add_option("--host", sv.host);
  serve->add_option("--tokens", sv.tokens, "JSON file mapping bearer token to annotator id")->check(CLI::ExistingFile);
  serve->add_option("--ui", sv.ui, "static UI directory mounted at /")->check(CLI::ExistingDirectory);
  serve->add_option("--labels-per-image", sv.labels_per_image)->check(CLI::PositiveNumber);
  serve->add_option("--sample", sv.sample, "serve only a stratified sample of this many images");
  serve->add_option("--sample-seed", sv.sample_seed);
  serve->callback([&] { rc = cmd_serve(g, sv); });

  std::string ex_store, ex_out;
  auto* exp = annotate->add_subcommand("export", "current labels as JSON lines");
  exp->add_option("--store", ex_store)->required()->check(CLI::ExistingDirectory);
  exp->add_option("--out", ex_out)->required();
  exp->callback([&] { rc = cmd_export(ex_store, ex_out); });

  std::string im_store, im_in;
  auto* imp = annotate->add_subcommand("import", "submit exported labels into a store");
  imp->add_option("--store", im_store)->required()->check(CLI::ExistingDirectory);
  imp->add_option("--in", im_in)->required()->check(CLI::ExistingFile);
  imp->callback([&] { rc = cmd_import(g, im_store, im_in); });

  app.parse_complete_callback([&] {
    auto logger = spdlog::stderr_color_mt("metobench");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return rc;
}
