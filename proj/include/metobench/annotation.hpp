#pragma once

#include "metobench/benchmark.hpp"
#include "metobench/catalog.hpp"
#include "metobench/jsonl.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace metobench {

// Carries the HTTP status the service maps it to (400, 403, 404).
struct AnnotationError : std::runtime_error {
  AnnotationError(int status, const std::string& what) : std::runtime_error(what), status(status) {}
  int status;
};

inline const std::set<std::string>& known_flags() {
  static const std::set<std::string> flags{"graphic", "bias", "other"};
  return flags;
}

struct AnnotationRecord {
  std::string image_id;
  std::string annotator_id;
  MetonymyLabel label = MetonymyLabel::NonMetonymic;
  std::set<std::string> flags;
  std::optional<AssociationType> association_type;
  std::int64_t seq = 0;  // position in the event log, 1-based
  std::string ts;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

Json to_json(const AnnotationRecord& r);
// Throws AnnotationError(400) on a malformed record.
AnnotationRecord annotation_from_json(const Json& j);

struct ImageInfo {
  std::string image_id;
  std::string concept_lemma;
  std::string style;
  std::string pipeline;
  std::optional<Supersense> supersense;
};

// Every image record of a manifest, keyed by image id.
std::map<std::string, ImageInfo> images_from_manifest(const std::filesystem::path& manifest);

struct AnnotationTask {
  std::string image_id;
  std::string concept_lemma;
  std::string image_url;
  std::size_t remaining = 0;  // images still open for this annotator, this one included
};

struct TaskFilter {
  std::optional<std::string> style;
  std::optional<Supersense> supersense;
};

// Latest record per (image, annotator), sorted by (image id, annotator id).
std::vector<AnnotationRecord> current_labels(const std::vector<AnnotationRecord>& history);

// Images that ever received a graphic or bias flag. Exclusion is sticky: a
// later resubmission without the flag does not lift it.
std::set<std::string> excluded_images(const std::vector<AnnotationRecord>& history);

// Reads annotations.jsonl without taking the writer lock.
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);

// Fraction of doubly labeled images (exactly two annotators) whose labels
// agree; nullopt when there are none.
std::optional<double> raw_agreement(const std::vector<AnnotationRecord>& current);
std::size_t doubly_labeled(const std::vector<AnnotationRecord>& current);

// Metonymic iff strictly more than half the labels are metonymic; with two
// annotators both must say metonymic, and a split counts as non-metonymic.
MetonymyLabel consensus(const std::vector<MetonymyLabel>& labels);

enum class RateGrouping { Overall, ByPipeline, BySupersense };
std::optional<RateGrouping> parse_grouping(std::string_view s);

struct GroupRate {
  std::size_t n_images = 0;
  std::size_t n_metonymic = 0;
  std::optional<double> rate() const;
};

std::map<std::string, GroupRate> metonymic_rate(const std::vector<AnnotationRecord>& current,
                                                const std::map<std::string, ImageInfo>& images,
                                                RateGrouping grouping);

// One consensus label per annotated image that has a supersense, ready for
// category_retention.
std::vector<std::pair<Supersense, MetonymyLabel>> supersense_consensus(
    const std::vector<AnnotationRecord>& current, const std::map<std::string, ImageInfo>& images);

// Picks n images for annotation, stratified by supersense with proportional
// allocation (largest remainder, ties by supersense name). Images without a
// supersense form their own stratum. Sorted by id.
std::vector<std::string> stratified_sample(const std::map<std::string, ImageInfo>& images, std::size_t n,
                                           std::uint64_t seed);

void export_labels(const std::filesystem::path& path, const std::vector<AnnotationRecord>& current);
std::vector<AnnotationRecord> import_labels(const std::filesystem::path& path);

// Event-sourced label store over <root>/annotations.jsonl. Every submission
// is appended before it changes the in-memory state, so replaying the file
// rebuilds the same state. The store is the single writer of that file.
class AnnotationStore {
 public:
  AnnotationStore(std::filesystem::path root, Clock clock = system_clock(), int labels_per_image = 2);

  // An image this annotator has not labeled, not excluded, and still short of
  // labels_per_image; fewest labels first, then image id.
  std::optional<AnnotationTask> next_task(const std::string& annotator_id, const TaskFilter& filter = {}) const;
  // Validates against the known images, stamps seq and ts, persists.
  AnnotationRecord submit(AnnotationRecord record);

  std::vector<AnnotationRecord> history() const;
  std::vector<AnnotationRecord> current() const;
  std::set<std::string> excluded() const;
  const std::map<std::string, ImageInfo>& images() const { return images_; }
  // Limits next_task to these images; submissions for others are still accepted.
  void restrict_tasks(std::set<std::string> image_ids);
  const std::filesystem::path& root() const { return root_; }
  int labels_per_image() const { return labels_per_image_; }

  // Current labels, exclusions and history as one JSON document; equal for
  // a live store and a store rebuilt from the same files.
  Json snapshot() const;
  static Json replay_snapshot(const std::filesystem::path& root);

 private:
  std::filesystem::path root_;
  int labels_per_image_;
  std::map<std::string, ImageInfo> images_;
  std::unique_ptr<RecordLog> log_;
  mutable std::mutex mu_;
  std::vector<AnnotationRecord> history_;
  std::map<std::pair<std::string, std::string>, AnnotationRecord> current_;  // (image, annotator)
  std::map<std::string, std::size_t> label_counts_;
  std::set<std::string> excluded_;
  std::optional<std::set<std::string>> task_pool_;
};

}  // namespace metobench
