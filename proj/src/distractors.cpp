#include "metobench/distractors.hpp"

#include "metobench/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <regex>

namespace metobench {

Embedding ImageEmbeddingCache::get(const std::string& image_id) {
  {
    std::lock_guard lock(mu_);
    if (const auto it = cache_.find(image_id); it != cache_.end()) return it->second;
  }
  const Bytes png = store_.read_image(image_id);
  Embedding v = gw_.embed_image(png, backend_);
  std::lock_guard lock(mu_);
  return cache_.emplace(image_id, std::move(v)).first->second;
}

std::size_t ImageEmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

std::vector<VisualNeighbor> visual_neighbors(ImageEmbeddingCache& cache, const std::string& target_image_id,
                                             const std::vector<PoolImage>& pool, std::size_t k) {
  if (pool.empty() || k == 0) return {};
  const Embedding target = cache.get(target_image_id);
  std::map<std::string, VisualNeighbor> best;
  for (const auto& img : pool) {
    if (img.image_id == target_image_id) continue;
    const double c = dot(target, cache.get(img.image_id));
    auto [it, inserted] = best.try_emplace(img.concept_lemma, VisualNeighbor{img.concept_lemma, c, img.image_id});
    if (!inserted && (c > it->second.cosine || (c == it->second.cosine && img.image_id < it->second.image_id))) {
      it->second.cosine = c;
      it->second.image_id = img.image_id;
    }
  }
  std::vector<VisualNeighbor> out;
  for (auto& [_, v] : best) out.push_back(std::move(v));
  std::sort(out.begin(), out.end(), [](const VisualNeighbor& a, const VisualNeighbor& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.concept_lemma < b.concept_lemma;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::set<std::string> related_terms(KnowledgeGraph& graph, const std::string& lemma) {
  auto out = graph.neighbors(lemma, kRelatedTo);
  if (out.empty() && !graph.contains(lemma)) {
    spdlog::warn("'{}' is not a node of {}", lemma, graph.describe());
  }
  return out;
}

std::set<std::string> synonym_set(KnowledgeGraph& graph, const std::string& lemma) {
  auto out = graph.neighbors(lemma, kSynonym);
  out.insert(normalize_lemma(lemma));
  return out;
}

BandFilterResult similarity_band_filter(Gateway& gw, const std::set<std::string>& candidates,
                                        const std::string& target, double tau_high,
                                        std::string_view embed_backend) {
  if (!(tau_high > 0 && tau_high <= 1)) throw std::invalid_argument("tau_high must lie in (0, 1]");
  BandFilterResult out;
  if (candidates.empty()) return out;
  std::vector<std::string> texts{target};
  texts.insert(texts.end(), candidates.begin(), candidates.end());
  const auto vecs = gw.embed_text(texts, embed_backend);
  for (std::size_t i = 1; i < texts.size(); ++i) {
    const double c = dot(vecs[0], vecs[i]);
    if (c > tau_high || c >= kDuplicateCosine) {
      out.removed[texts[i]] = c;
    } else {
      out.kept[texts[i]] = c;
    }
  }
  return out;
}

std::map<std::string, std::string> two_step_paths(KnowledgeGraph& graph, const std::string& lemma,
                                                  std::size_t intermediate_cap) {
  const std::string self = normalize_lemma(lemma);
  const auto direct = graph.neighbors(self, kRelatedTo);
  std::map<std::string, std::string> out;
  std::size_t expanded = 0;
  for (const auto& m : direct) {
    if (expanded == intermediate_cap) {
      spdlog::info("two-step expansion of '{}' capped at {} of {} intermediates", self, intermediate_cap,
                   direct.size());
      break;
    }
    ++expanded;
    for (const auto& c : graph.neighbors(m, kRelatedTo)) {
      if (c == self || direct.count(c)) continue;
      out.try_emplace(c, m);  // direct is sorted, so the first intermediate is the smallest
    }
  }
  return out;
}

std::set<std::string> two_step_candidates(KnowledgeGraph& graph, const std::string& lemma,
                                          std::size_t intermediate_cap) {
  std::set<std::string> out;
  for (const auto& [c, _] : two_step_paths(graph, lemma, intermediate_cap)) out.insert(c);
  return out;
}

std::string_view to_string(DistractorSource s) {
  switch (s) {
    case DistractorSource::Visual: return "visual";
    case DistractorSource::Semantic: return "semantic";
    case DistractorSource::Global: return "global";
  }
  return "?";
}

Json to_json(const DistractorCandidate& c) {
  Json j = {{"lemma", c.lemma},
            {"source", to_string(c.source)},
            {"text_cosine", c.text_cosine},
            {"backfill", c.backfill}};
  if (c.visual_cosine) j["visual_cosine"] = *c.visual_cosine;
  if (c.visual_image) j["visual_image"] = *c.visual_image;
  if (!c.path.empty()) j["path"] = c.path;
  return j;
}

DistractorCandidate distractor_from_json(const Json& j) {
  DistractorCandidate c;
  c.lemma = j.at("lemma");
  const std::string source = j.at("source");
  if (source == "visual") c.source = DistractorSource::Visual;
  else if (source == "semantic") c.source = DistractorSource::Semantic;
  else if (source == "global") c.source = DistractorSource::Global;
  else throw SchemaError("distractor: unknown source '" + source + "'");
  c.text_cosine = j.value("text_cosine", 0.0);
  c.backfill = j.value("backfill", false);
  if (j.contains("visual_cosine")) c.visual_cosine = j["visual_cosine"].get<double>();
  if (j.contains("visual_image")) c.visual_image = j["visual_image"].get<std::string>();
  if (j.contains("path")) c.path = j["path"].get<std::vector<std::string>>();
  return c;
}

DistractorMix parse_mix(std::string_view s) {
  static const std::regex re(R"(^\s*(\d+)\s*v\s*(\d+)\s*s\s*$)", std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(s.begin(), s.end(), m, re)) {
    throw std::invalid_argument("mix must look like 1v2s, got '" + std::string(s) + "'");
  }
  DistractorMix mix{std::stoi(m[1].str()), std::stoi(m[2].str())};
  if (mix.total() != 3) throw std::invalid_argument("mix must add up to 3 distractors");
  return mix;
}

std::vector<DistractorCandidate> build_distractors(Gateway& gw, KnowledgeGraph& graph, ImageEmbeddingCache& images,
                                                   const std::string& target_raw, const std::string& target_image_id,
                                                   const std::vector<PoolImage>& pool,
                                                   const std::vector<std::string>& global_lemmas,
                                                   const DistractorConfig& cfg) {
  const std::string target = normalize_lemma(target_raw);
  const auto synonyms = synonym_set(graph, target);
  auto excluded = [&](const std::string& l) { return l == target || synonyms.count(l) > 0; };

  std::vector<PoolImage> others;
  for (const auto& p : pool) {
    if (normalize_lemma(p.concept_lemma) != target) others.push_back({p.image_id, normalize_lemma(p.concept_lemma)});
  }
  const auto visual = visual_neighbors(images, target_image_id, others, cfg.visual_k);
  const auto direct = related_terms(graph, target);
  const auto two_step = two_step_paths(graph, target, cfg.intermediate_cap);

  std::set<std::string> candidates;
  for (const auto& v : visual) if (!excluded(v.concept_lemma)) candidates.insert(v.concept_lemma);
  for (const auto& d : direct) if (!excluded(d)) candidates.insert(d);
  for (const auto& [c, _] : two_step) if (!excluded(c)) candidates.insert(c);
  const auto band = similarity_band_filter(gw, candidates, target, cfg.tau_high, cfg.text_embed_backend);

  std::vector<DistractorCandidate> visual_pool, semantic_pool;
  for (const auto& v : visual) {
    const auto it = band.kept.find(v.concept_lemma);
    if (it == band.kept.end()) continue;
    DistractorCandidate c;
    c.lemma = v.concept_lemma;
    c.source = DistractorSource::Visual;
    c.visual_cosine = v.cosine;
    c.visual_image = v.image_id;
    c.text_cosine = it->second;
    visual_pool.push_back(std::move(c));
  }
  auto semantic_ranked = [&](auto&& lemmas_with_paths) {
    std::vector<DistractorCandidate> out;
    for (auto& [lemma, path] : lemmas_with_paths) {
      const auto it = band.kept.find(lemma);
      if (it == band.kept.end()) continue;
      DistractorCandidate c;
      c.lemma = lemma;
      c.source = DistractorSource::Semantic;
      c.text_cosine = it->second;
      c.path = path;
      out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.text_cosine != b.text_cosine) return a.text_cosine > b.text_cosine;
      return a.lemma < b.lemma;
    });
    return out;
  };
  std::vector<std::pair<std::string, std::vector<std::string>>> two_step_list, direct_list;
  for (const auto& [c, m] : two_step) two_step_list.push_back({c, {target, m, c}});
  for (const auto& d : direct) direct_list.push_back({d, {target, d}});
  semantic_pool = semantic_ranked(two_step_list);
  for (auto& c : semantic_ranked(direct_list)) semantic_pool.push_back(std::move(c));

  std::vector<DistractorCandidate> chosen;
  std::set<std::string> taken;
  auto take = [&](std::vector<DistractorCandidate>& from, int n, bool backfill) {
    int got = 0;
    for (auto& c : from) {
      if (got == n) break;
      if (taken.count(c.lemma)) continue;
      taken.insert(c.lemma);
      DistractorCandidate pick = c;
      pick.backfill = backfill;
      chosen.push_back(std::move(pick));
      ++got;
    }
    return got;
  };
  const int got_visual = take(visual_pool, cfg.mix.visual, false);
  const int got_semantic = take(semantic_pool, cfg.mix.semantic, false);
  if (got_visual < cfg.mix.visual) take(semantic_pool, cfg.mix.visual - got_visual, true);
  if (got_semantic < cfg.mix.semantic) take(visual_pool, cfg.mix.semantic - got_semantic, true);

  if (static_cast<int>(chosen.size()) < cfg.mix.total()) {
    std::set<std::string> rest;
    for (const auto& g : global_lemmas) {
      const std::string l = normalize_lemma(g);
      if (!l.empty() && !excluded(l) && !taken.count(l)) rest.insert(l);
    }
    const auto global_band = similarity_band_filter(gw, rest, target, cfg.tau_high, cfg.text_embed_backend);
    std::vector<DistractorCandidate> global;
    for (const auto& [lemma, cos] : global_band.kept) {
      DistractorCandidate c;
      c.lemma = lemma;
      c.source = DistractorSource::Global;
      c.text_cosine = cos;
      global.push_back(std::move(c));
    }
    std::stable_sort(global.begin(), global.end(), [](const auto& a, const auto& b) {
      if (a.text_cosine != b.text_cosine) return a.text_cosine > b.text_cosine;
      return a.lemma < b.lemma;
    });
    take(global, cfg.mix.total() - static_cast<int>(chosen.size()), true);
  }
  if (static_cast<int>(chosen.size()) < cfg.mix.total()) {
    throw DistractorError("only " + std::to_string(chosen.size()) + " distractors survive for '" + target + "'");
  }
  return chosen;
}

bool verify_path(KnowledgeGraph& graph, const std::vector<std::string>& path) {
  if (path.size() < 2 || path.size() > 3) return false;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!graph.neighbors(path[i], kRelatedTo).count(normalize_lemma(path[i + 1]))) return false;
  }
  if (path.size() == 3) {
    if (normalize_lemma(path.front()) == normalize_lemma(path.back())) return false;
    if (graph.neighbors(path.front(), kRelatedTo).count(normalize_lemma(path.back()))) return false;
  }
  return true;
}

}  // namespace metobench
