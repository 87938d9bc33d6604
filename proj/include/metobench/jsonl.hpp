#pragma once

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metobench {

using Json = nlohmann::json;

// Produces the timestamp stamped on every record.
using Clock = std::function<std::string()>;

// ISO-8601 UTC wall clock with millisecond precision.
Clock system_clock();

// Monotone synthetic clock starting at the epoch and advancing one second
// per call. Used for runs that must produce byte-identical manifests.
Clock logical_clock();

struct SchemaError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LockError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FieldType { String, Number, Integer, Boolean, Array, Object };

struct FieldSpec {
  std::string name;
  FieldType type;
  bool required = true;
  bool nullable = false;
};

using RecordSchema = std::vector<FieldSpec>;

// Schema for a built-in record type, or nullptr if the type is unknown.
const RecordSchema* schema_for(std::string_view type);

// Every record must carry "type" and "ts"; known types are checked field by
// field. Throws SchemaError naming the offending field.
void validate_record(const Json& record);

// Append-only line-delimited JSON file.
//
// A writer holds an exclusive flock on "<path>.lock" for its lifetime. On
// open, a trailing line without its terminating newline (the signature of a
// crash mid-append) is moved to "<path>.quarantine" and truncated away.
// Readers never take the lock and ignore an unterminated final line.
class RecordLog {
 public:
  RecordLog(std::filesystem::path path, Clock clock);
  ~RecordLog();
  RecordLog(const RecordLog&) = delete;
  RecordLog& operator=(const RecordLog&) = delete;

  // Stamps "type" and "ts", validates, writes and fsyncs. Returns the record
  // as written.
  Json append(std::string_view type, Json payload);

  // Bytes moved to quarantine when this writer opened the file.
  std::size_t quarantined_bytes() const { return quarantined_; }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  Clock clock_;
  int fd_ = -1;
  int lock_fd_ = -1;
  std::size_t quarantined_ = 0;
  std::mutex mu_;
};

// Reads complete records, optionally keeping only one record type. A missing
// file reads as empty.
std::vector<Json> read_records(const std::filesystem::path& path,
                               std::optional<std::string_view> type = std::nullopt);

// Plain (untyped) line-delimited JSON helpers, used for the concept catalog
// and label exports.
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

}  // namespace metobench
