#pragma once

#include "metobench/hashing.hpp"
#include "metobench/jsonl.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace metobench {

inline constexpr int kSchemaVersion = 1;

struct StoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// On-disk corpus:
//
//   <root>/catalog.jsonl          concept catalog
//   <root>/manifest.jsonl         pipeline records (run, representamens, description, image, attempt)
//   <root>/images/<h2>/<h>.png    content-addressed by SHA-256 of the PNG bytes
//   <root>/annotations.jsonl      annotation events
//   <root>/items.jsonl            distractor sets and MCQ items
//   <root>/results/<model>.jsonl  evaluation responses per model
//
// Record logs are opened lazily and kept open, so this object is the single
// writer for each of them for its lifetime.
class CorpusStore {
 public:
  explicit CorpusStore(std::filesystem::path root, Clock clock = system_clock());

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path catalog_path() const { return root_ / "catalog.jsonl"; }
  std::filesystem::path manifest_path() const { return root_ / "manifest.jsonl"; }
  std::filesystem::path annotations_path() const { return root_ / "annotations.jsonl"; }
  std::filesystem::path items_path() const { return root_ / "items.jsonl"; }
  std::filesystem::path results_dir() const { return root_ / "results"; }
  std::filesystem::path results_path(std::string_view model) const;
  std::filesystem::path images_dir() const { return root_ / "images"; }

  // "images/ab/abcd....png"
  static std::string relative_image_path(std::string_view image_id);
  std::filesystem::path image_path(std::string_view image_id) const;

  struct PutResult {
    std::string image_id;
    std::string path;  // relative to root
    bool existed = false;
  };

  // Checks the bytes decode as PNG, then writes them under their hash via a
  // temporary file and rename. Safe to call concurrently. Existing files with
  // the same name are compared byte for byte; a mismatch is a hash collision
  // (or on-disk corruption) and throws StoreError.
  PutResult put_image(std::span<const std::uint8_t> png);
  Bytes read_image(std::string_view image_id) const;
  bool has_image(std::string_view image_id) const;

  RecordLog& manifest();
  RecordLog& annotations();
  RecordLog& items();
  RecordLog& results(std::string_view model);

  std::vector<Json> read_manifest(std::optional<std::string_view> type = std::nullopt) const;
  std::vector<Json> read_items(std::optional<std::string_view> type = std::nullopt) const;
  std::vector<Json> read_results(std::string_view model) const;

  const Clock& clock() const { return clock_; }

 private:
  RecordLog& open_log(const std::filesystem::path& path);

  std::filesystem::path root_;
  Clock clock_;
  std::mutex mu_;
  std::map<std::filesystem::path, std::unique_ptr<RecordLog>> logs_;
};

struct Finding {
  std::string kind;     // hash_mismatch, missing_file, unreadable, dangling_reference, leakage, stray_file
  std::string subject;  // image id, record id or path
  std::string detail;
};

struct VerifyReport {
  std::vector<Finding> findings;
  std::size_t images_checked = 0;
  std::size_t records_checked = 0;
  bool ok() const { return findings.empty(); }
};

Json to_json(const VerifyReport& report);

// Hash integrity of every stored image, referential integrity of every
// manifest, item, result and annotation record, and the leakage invariant
// over every persisted description. Reads only; never takes writer locks.
VerifyReport verify(const std::filesystem::path& root);

}  // namespace metobench
