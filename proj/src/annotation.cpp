#include "metobench/annotation.hpp"

#include "metobench/text.hpp"

#include <algorithm>
#include <random>

namespace metobench {

namespace fs = std::filesystem;

Json to_json(const AnnotationRecord& r) {
  Json j = {{"image_id", r.image_id},
            {"annotator_id", r.annotator_id},
            {"label", to_string(r.label)},
            {"flags", r.flags},
            {"association_type", r.association_type ? Json(to_string(*r.association_type)) : Json(nullptr)},
            {"seq", r.seq}};
  if (!r.ts.empty()) j["ts"] = r.ts;
  return j;
}

AnnotationRecord annotation_from_json(const Json& j) {
  if (!j.is_object()) throw AnnotationError(400, "label must be a JSON object");
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string() || trim(j[key].get<std::string>()).empty()) {
      throw AnnotationError(400, std::string("field '") + key + "' must be a nonempty string");
    }
    return trim(j[key].get<std::string>());
  };
  AnnotationRecord r;
  r.image_id = str("image_id");
  r.annotator_id = str("annotator_id");
  const auto label = parse_label(str("label"));
  if (!label) throw AnnotationError(400, "label must be 'metonymic' or 'non_metonymic'");
  r.label = *label;
  if (j.contains("flags") && !j["flags"].is_null()) {
    if (!j["flags"].is_array()) throw AnnotationError(400, "flags must be an array");
    for (const auto& f : j["flags"]) {
      if (!f.is_string() || !known_flags().count(to_lower(f.get<std::string>()))) {
        throw AnnotationError(400, "unknown flag " + f.dump() + " (use graphic, bias, other)");
      }
      r.flags.insert(to_lower(f.get<std::string>()));
    }
  }
  if (j.contains("association_type") && !j["association_type"].is_null()) {
    const auto a = j["association_type"].is_string() ? parse_association(j["association_type"].get<std::string>())
                                                     : std::nullopt;
    if (!a) throw AnnotationError(400, "association_type must be cultural, contextual or symbolic");
    r.association_type = a;
  }
  if (j.contains("seq") && j["seq"].is_number_integer()) r.seq = j["seq"].get<std::int64_t>();
  if (j.contains("ts") && j["ts"].is_string()) r.ts = j["ts"].get<std::string>();
  return r;
}

std::map<std::string, ImageInfo> images_from_manifest(const fs::path& manifest) {
  std::map<std::string, ImageInfo> out;
  for (const auto& r : read_records(manifest, "image")) {
    ImageInfo info{r["image_id"], r["concept"], r["style"], r["pipeline"], std::nullopt};
    if (r.contains("supersense")) info.supersense = parse_supersense(r["supersense"].get<std::string>());
    out.emplace(info.image_id, std::move(info));
  }
  return out;
}

std::vector<AnnotationRecord> current_labels(const std::vector<AnnotationRecord>& history) {
  std::map<std::pair<std::string, std::string>, AnnotationRecord> latest;
  for (const auto& r : history) latest[{r.image_id, r.annotator_id}] = r;
  std::vector<AnnotationRecord> out;
  for (auto& [_, r] : latest) out.push_back(std::move(r));
  return out;
}

std::set<std::string> excluded_images(const std::vector<AnnotationRecord>& history) {
  std::set<std::string> out;
  for (const auto& r : history) {
    if (r.flags.count("graphic") || r.flags.count("bias")) out.insert(r.image_id);
  }
  return out;
}

std::vector<AnnotationRecord> read_annotations(const fs::path& path) {
  std::vector<AnnotationRecord> out;
  for (const auto& j : read_records(path, "annotation")) out.push_back(annotation_from_json(j));
  return out;
}

namespace {

std::map<std::string, std::vector<MetonymyLabel>> labels_by_image(const std::vector<AnnotationRecord>& current) {
  std::map<std::string, std::vector<MetonymyLabel>> out;
  for (const auto& r : current) out[r.image_id].push_back(r.label);
  return out;
}

}  // namespace

std::size_t doubly_labeled(const std::vector<AnnotationRecord>& current) {
  std::size_t n = 0;
  for (const auto& [_, labels] : labels_by_image(current)) n += labels.size() == 2;
  return n;
}

std::optional<double> raw_agreement(const std::vector<AnnotationRecord>& current) {
  std::size_t pairs = 0, agree = 0;
  for (const auto& [_, labels] : labels_by_image(current)) {
    if (labels.size() != 2) continue;
    ++pairs;
    agree += labels[0] == labels[1];
  }
  if (pairs == 0) return std::nullopt;
  return static_cast<double>(agree) / static_cast<double>(pairs);
}

MetonymyLabel consensus(const std::vector<MetonymyLabel>& labels) {
  const auto yes = std::count(labels.begin(), labels.end(), MetonymyLabel::Metonymic);
  return 2 * static_cast<std::size_t>(yes) > labels.size() ? MetonymyLabel::Metonymic : MetonymyLabel::NonMetonymic;
}

std::optional<RateGrouping> parse_grouping(std::string_view s) {
  const std::string v = replace_all(to_lower(trim(s)), "-", "_");
  if (v == "overall" || v.empty()) return RateGrouping::Overall;
  if (v == "by_pipeline" || v == "pipeline") return RateGrouping::ByPipeline;
  if (v == "by_supersense" || v == "supersense") return RateGrouping::BySupersense;
  return std::nullopt;
}

std::optional<double> GroupRate::rate() const {
  if (n_images == 0) return std::nullopt;
  return static_cast<double>(n_metonymic) / static_cast<double>(n_images);
}

std::map<std::string, GroupRate> metonymic_rate(const std::vector<AnnotationRecord>& current,
                                                const std::map<std::string, ImageInfo>& images,
                                                RateGrouping grouping) {
  std::map<std::string, GroupRate> out;
  for (const auto& [image_id, labels] : labels_by_image(current)) {
    std::string key = "overall";
    const auto it = images.find(image_id);
    if (grouping == RateGrouping::ByPipeline) {
      key = it == images.end() ? "unknown" : it->second.pipeline;
    } else if (grouping == RateGrouping::BySupersense) {
      key = it == images.end() || !it->second.supersense ? "unknown" : std::string(to_string(*it->second.supersense));
    }
    auto& g = out[key];
    ++g.n_images;
    g.n_metonymic += consensus(labels) == MetonymyLabel::Metonymic;
  }
  return out;
}

std::vector<std::pair<Supersense, MetonymyLabel>> supersense_consensus(
    const std::vector<AnnotationRecord>& current, const std::map<std::string, ImageInfo>& images) {
  std::vector<std::pair<Supersense, MetonymyLabel>> out;
  for (const auto& [image_id, labels] : labels_by_image(current)) {
    const auto it = images.find(image_id);
    if (it == images.end() || !it->second.supersense) continue;
    out.emplace_back(*it->second.supersense, consensus(labels));
  }
  return out;
}

std::vector<std::string> stratified_sample(const std::map<std::string, ImageInfo>& images, std::size_t n,
                                           std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& [id, info] : images) {
    strata[info.supersense ? std::string(to_string(*info.supersense)) : std::string("~none")].push_back(id);
  }
  const std::size_t total = images.size();
  if (n >= total) {
    std::vector<std::string> all;
    for (const auto& [id, _] : images) all.push_back(id);
    return all;
  }
  std::map<std::string, std::size_t> quota;
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t allocated = 0;
  for (const auto& [key, ids] : strata) {
    const double exact = static_cast<double>(n) * static_cast<double>(ids.size()) / static_cast<double>(total);
    quota[key] = static_cast<std::size_t>(exact);
    allocated += quota[key];
    remainders.emplace_back(exact - static_cast<double>(quota[key]), key);
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t i = 0; allocated < n && i < remainders.size(); ++i, ++allocated) ++quota[remainders[i].second];

  std::vector<std::string> out;
  for (auto& [key, ids] : strata) {
    std::mt19937_64 rng(mix_seed(seed, fnv1a64(key)));
    std::shuffle(ids.begin(), ids.end(), rng);
    out.insert(out.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(quota[key], ids.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void export_labels(const fs::path& path, const std::vector<AnnotationRecord>& current) {
  std::vector<AnnotationRecord> sorted = current;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.image_id, a.annotator_id) < std::tie(b.image_id, b.annotator_id);
  });
  std::vector<Json> rows;
  for (const auto& r : sorted) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

std::vector<AnnotationRecord> import_labels(const fs::path& path) {
  std::vector<AnnotationRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(annotation_from_json(j));
  return out;
}

AnnotationStore::AnnotationStore(fs::path root, Clock clock, int labels_per_image)
    : root_(std::move(root)), labels_per_image_(labels_per_image) {
  if (labels_per_image_ < 1) throw std::invalid_argument("labels_per_image must be at least 1");
  images_ = images_from_manifest(root_ / "manifest.jsonl");
  log_ = std::make_unique<RecordLog>(root_ / "annotations.jsonl", std::move(clock));
  for (auto& r : read_annotations(root_ / "annotations.jsonl")) {
    history_.push_back(r);
    const bool fresh = !current_.count({r.image_id, r.annotator_id});
    current_[{r.image_id, r.annotator_id}] = r;
    if (fresh) ++label_counts_[r.image_id];
    if (r.flags.count("graphic") || r.flags.count("bias")) excluded_.insert(r.image_id);
  }
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& annotator_id,
                                                         const TaskFilter& filter) const {
  std::lock_guard lock(mu_);
  const ImageInfo* best = nullptr;
  std::size_t best_count = 0, remaining = 0;
  for (const auto& [id, info] : images_) {
    if (excluded_.count(id) || current_.count({id, annotator_id})) continue;
    if (task_pool_ && !task_pool_->count(id)) continue;
    if (filter.style && info.style != *filter.style) continue;
    if (filter.supersense && info.supersense != filter.supersense) continue;
    const auto it = label_counts_.find(id);
    const std::size_t count = it == label_counts_.end() ? 0 : it->second;
    if (count >= static_cast<std::size_t>(labels_per_image_)) continue;
    ++remaining;
    // images map is ordered by id, so the first minimum is the smallest id
    if (!best || count < best_count) {
      best = &info;
      best_count = count;
    }
  }
  if (!best) return std::nullopt;
  return AnnotationTask{best->image_id, best->concept_lemma, "/images/" + best->image_id, remaining};
}

AnnotationRecord AnnotationStore::submit(AnnotationRecord record) {
  if (record.image_id.empty() || record.annotator_id.empty()) throw AnnotationError(400, "image_id and annotator_id are required");
  if (!images_.count(record.image_id)) throw AnnotationError(404, "unknown image '" + record.image_id + "'");
  for (const auto& f : record.flags) {
    if (!known_flags().count(f)) throw AnnotationError(400, "unknown flag '" + f + "'");
  }
  std::lock_guard lock(mu_);
  record.seq = static_cast<std::int64_t>(history_.size()) + 1;
  Json payload = to_json(record);
  payload.erase("ts");
  const Json written = log_->append("annotation", std::move(payload));
  record.ts = written["ts"];
  history_.push_back(record);
  const bool fresh = !current_.count({record.image_id, record.annotator_id});
  current_[{record.image_id, record.annotator_id}] = record;
  if (fresh) ++label_counts_[record.image_id];
  if (record.flags.count("graphic") || record.flags.count("bias")) excluded_.insert(record.image_id);
  return record;
}

void AnnotationStore::restrict_tasks(std::set<std::string> image_ids) {
  std::lock_guard lock(mu_);
  task_pool_ = std::move(image_ids);
}

std::vector<AnnotationRecord> AnnotationStore::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

std::vector<AnnotationRecord> AnnotationStore::current() const {
  std::lock_guard lock(mu_);
  std::vector<AnnotationRecord> out;
  for (const auto& [_, r] : current_) out.push_back(r);
  return out;
}

std::set<std::string> AnnotationStore::excluded() const {
  std::lock_guard lock(mu_);
  return excluded_;
}

namespace {

Json snapshot_of(const std::vector<AnnotationRecord>& history) {
  Json hist = Json::array(), cur = Json::array();
  for (const auto& r : history) hist.push_back(to_json(r));
  for (const auto& r : current_labels(history)) cur.push_back(to_json(r));
  return {{"history", hist}, {"current", cur}, {"excluded", excluded_images(history)}};
}

}  // namespace

Json AnnotationStore::snapshot() const { return snapshot_of(history()); }

Json AnnotationStore::replay_snapshot(const fs::path& root) {
  return snapshot_of(read_annotations(root / "annotations.jsonl"));
}

}  // namespace metobench
