#include "metobench/jsonl.hpp"

#include "metobench/text.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace metobench {

namespace fs = std::filesystem;

namespace {

std::string format_utc(std::int64_t epoch_ms) {
  const std::time_t secs = static_cast<std::time_t>(epoch_ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(epoch_ms % 1000));
  return out;
}

const std::map<std::string, RecordSchema, std::less<>>& schemas() {
  using T = FieldType;
  static const std::map<std::string, RecordSchema, std::less<>> kSchemas = {
      {"run", {{"run_id", T::String}, {"seed", T::Integer}}},
      {"representamens",
       {{"concept", T::String},
        {"items", T::Array},
        {"model", T::String},
        {"template", T::String},
        {"raw", T::String},
        {"attempts", T::Integer}}},
      {"description",
       {{"description_id", T::String},
        {"concept", T::String},
        {"style", T::String},
        {"text", T::String},
        {"word_count", T::Integer},
        {"attempts", T::Integer},
        {"leakage_passed", T::Boolean},
        {"model", T::String}}},
      {"image",
       {{"image_id", T::String},
        {"concept", T::String},
        {"style", T::String},
        {"pipeline", T::String},
        {"path", T::String},
        {"renderer", T::String},
        {"seed", T::Integer},
        {"params", T::Object},
        {"description_id", T::String},
        {"supersense", T::String, false},
        {"flags", T::Array}}},
      {"attempt",
       {{"concept", T::String},
        {"style", T::String},
        {"pipeline", T::String},
        {"outcome", T::String},
        {"stage", T::String, false},
        {"error", T::String, false},
        {"image_id", T::String, false}}},
      {"distractors",
       {{"image_id", T::String}, {"target", T::String}, {"candidates", T::Array}}},
      {"item",
       {{"item_id", T::String},
        {"image_id", T::String},
        {"target", T::String},
        {"options", T::Array},
        {"answer_index", T::Integer},
        {"style", T::String},
        {"association_type", T::String, false, true},
        {"provenance", T::Array}}},
      {"result",
       {{"item_id", T::String},
        {"model", T::String},
        {"status", T::String},
        {"raw_response", T::String, false},
        {"parsed_choice", T::Integer, false, true},
        {"correct", T::Boolean, false},
        {"error", T::String, false}}},
      {"annotation",
       {{"image_id", T::String},
        {"annotator_id", T::String},
        {"label", T::String},
        {"flags", T::Array},
        {"association_type", T::String, false, true},
        {"seq", T::Integer}}},
      {"prediction",
       {{"image_id", T::String},
        {"model", T::String},
        {"gold", T::String},
        {"word", T::String},
        {"cosine", T::Number}}},
  };
  return kSchemas;
}

bool type_matches(const Json& v, FieldType t) {
  switch (t) {
    case FieldType::String: return v.is_string();
    case FieldType::Number: return v.is_number();
    case FieldType::Integer: return v.is_number_integer();
    case FieldType::Boolean: return v.is_boolean();
    case FieldType::Array: return v.is_array();
    case FieldType::Object: return v.is_object();
  }
  return false;
}

const char* type_name(FieldType t) {
  switch (t) {
    case FieldType::String: return "string";
    case FieldType::Number: return "number";
    case FieldType::Integer: return "integer";
    case FieldType::Boolean: return "boolean";
    case FieldType::Array: return "array";
    case FieldType::Object: return "object";
  }
  return "?";
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("write failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Clock system_clock() {
  return [] {
    const auto now = std::chrono::system_clock::now();
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    return format_utc(ms);
  };
}

Clock logical_clock() {
  auto counter = std::make_shared<std::atomic<std::int64_t>>(0);
  return [counter] { return format_utc(1000 * counter->fetch_add(1)); };
}

const RecordSchema* schema_for(std::string_view type) {
  const auto& all = schemas();
  const auto it = all.find(type);
  return it == all.end() ? nullptr : &it->second;
}

void validate_record(const Json& record) {
  if (!record.is_object()) throw SchemaError("record: not a JSON object");
  if (!record.contains("type") || !record["type"].is_string()) {
    throw SchemaError("record: missing string field 'type'");
  }
  if (!record.contains("ts") || !record["ts"].is_string()) {
    throw SchemaError("record: missing string field 'ts'");
  }
  const std::string type = record["type"];
  const RecordSchema* schema = schema_for(type);
  if (schema == nullptr) throw SchemaError("record: unknown type '" + type + "'");
  for (const auto& field : *schema) {
    const auto it = record.find(field.name);
    if (it == record.end()) {
      if (field.required) throw SchemaError(type + "." + field.name + ": required field missing");
      continue;
    }
    if (it->is_null() && field.nullable) continue;
    if (!type_matches(*it, field.type)) {
      throw SchemaError(type + "." + field.name + ": expected " + type_name(field.type));
    }
  }
}

RecordLog::RecordLog(fs::path path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  const auto lock_path = fs::path(path_.string() + ".lock");
  lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw std::runtime_error("cannot open lock file " + lock_path.string());
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    throw LockError("another writer holds " + lock_path.string());
  }

  if (fs::exists(path_)) {
    const std::string content = slurp(path_);
    const auto last_nl = content.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep < content.size()) {
      std::ofstream q(path_.string() + ".quarantine", std::ios::binary | std::ios::app);
      q << content.substr(keep) << '\n';
      quarantined_ = content.size() - keep;
      fs::resize_file(path_, keep);
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    ::close(lock_fd_);
    throw std::runtime_error("cannot open " + path_.string());
  }
}

RecordLog::~RecordLog() {
  if (fd_ >= 0) ::close(fd_);
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

Json RecordLog::append(std::string_view type, Json payload) {
  if (!payload.is_object()) throw SchemaError("record payload must be an object");
  std::lock_guard lock(mu_);
  payload["type"] = std::string(type);
  payload["ts"] = clock_();
  validate_record(payload);
  write_all(fd_, payload.dump() + "\n");
  ::fsync(fd_);
  return payload;
}

std::vector<Json> read_records(const fs::path& path, std::optional<std::string_view> type) {
  std::vector<Json> out;
  if (!fs::exists(path)) return out;
  const std::string content = slurp(path);
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    const auto nl = content.find('\n', start);
    if (nl == std::string::npos) break;  // unterminated tail: a write in progress
    ++line_no;
    const std::string_view line(content.data() + start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (type && (!rec.contains("type") || rec["type"] != *type)) continue;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    for (const auto& row : rows) out << row.dump() << '\n';
  }
  fs::rename(tmp, path);
}

std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<Json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace metobench
