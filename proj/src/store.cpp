#include "metobench/store.hpp"

#include "metobench/leakage.hpp"
#include "metobench/png.hpp"

#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace metobench {

namespace fs = std::filesystem;

namespace {

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool is_hex_id(std::string_view id) {
  if (id.size() != 64) return false;
  for (const char c : id) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

std::string safe_model_name(std::string_view model) {
  std::string out;
  for (const char c : model) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") throw StoreError("invalid model name for results file");
  return out;
}

}  // namespace

CorpusStore::CorpusStore(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  fs::create_directories(root_);
  fs::create_directories(images_dir());
}

fs::path CorpusStore::results_path(std::string_view model) const {
  return results_dir() / (safe_model_name(model) + ".jsonl");
}

std::string CorpusStore::relative_image_path(std::string_view image_id) {
  if (!is_hex_id(image_id)) throw StoreError("not an image id: '" + std::string(image_id) + "'");
  return "images/" + std::string(image_id.substr(0, 2)) + "/" + std::string(image_id) + ".png";
}

fs::path CorpusStore::image_path(std::string_view image_id) const {
  return root_ / relative_image_path(image_id);
}

CorpusStore::PutResult CorpusStore::put_image(std::span<const std::uint8_t> png) {
  decode_png(png);
  PutResult out;
  out.image_id = sha256_hex(png);
  out.path = relative_image_path(out.image_id);
  const fs::path final_path = root_ / out.path;
  if (fs::exists(final_path)) {
    const Bytes existing = read_file(final_path);
    if (!std::equal(existing.begin(), existing.end(), png.begin(), png.end())) {
      throw StoreError("content hash collision or corrupted file at " + final_path.string());
    }
    out.existed = true;
    return out;
  }
  fs::create_directories(final_path.parent_path());
  static std::atomic<unsigned> counter{0};
  const fs::path tmp = final_path.parent_path() /
                       ("." + out.image_id + ".tmp." + std::to_string(::getpid()) + "." +
                        std::to_string(counter.fetch_add(1)));
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    f.flush();
    if (!f) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw StoreError("failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, final_path);
  return out;
}

Bytes CorpusStore::read_image(std::string_view image_id) const { return read_file(image_path(image_id)); }

bool CorpusStore::has_image(std::string_view image_id) const {
  return is_hex_id(image_id) && fs::exists(image_path(image_id));
}

RecordLog& CorpusStore::open_log(const fs::path& path) {
  std::lock_guard lock(mu_);
  auto it = logs_.find(path);
  if (it == logs_.end()) {
    fs::create_directories(path.parent_path());
    it = logs_.emplace(path, std::make_unique<RecordLog>(path, clock_)).first;
  }
  return *it->second;
}

RecordLog& CorpusStore::manifest() { return open_log(manifest_path()); }
RecordLog& CorpusStore::annotations() { return open_log(annotations_path()); }
RecordLog& CorpusStore::items() { return open_log(items_path()); }
RecordLog& CorpusStore::results(std::string_view model) { return open_log(results_path(model)); }

std::vector<Json> CorpusStore::read_manifest(std::optional<std::string_view> type) const {
  return read_records(manifest_path(), type);
}

std::vector<Json> CorpusStore::read_items(std::optional<std::string_view> type) const {
  return read_records(items_path(), type);
}

std::vector<Json> CorpusStore::read_results(std::string_view model) const {
  return read_records(results_path(model));
}

Json to_json(const VerifyReport& report) {
  Json findings = Json::array();
  for (const auto& f : report.findings) {
    findings.push_back({{"kind", f.kind}, {"subject", f.subject}, {"detail", f.detail}});
  }
  return {{"ok", report.ok()},
          {"images_checked", report.images_checked},
          {"records_checked", report.records_checked},
          {"findings", findings}};
}

VerifyReport verify(const fs::path& root) {
  VerifyReport report;
  auto add = [&](std::string kind, std::string subject, std::string detail) {
    report.findings.push_back({std::move(kind), std::move(subject), std::move(detail)});
  };

  // Every file in images/ must be named after the hash of its bytes.
  std::set<std::string> files;
  const fs::path images = root / "images";
  if (fs::exists(images)) {
    std::vector<fs::path> paths;
    for (const auto& entry : fs::recursive_directory_iterator(images)) {
      if (entry.is_regular_file()) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      const std::string rel = fs::relative(p, root).generic_string();
      const std::string stem = p.stem().string();
      if (p.extension() != ".png" || !is_hex_id(stem) || p.parent_path().filename() != stem.substr(0, 2)) {
        add("stray_file", rel, "not a content-addressed image path");
        continue;
      }
      ++report.images_checked;
      files.insert(stem);
      const Bytes bytes = read_file(p);
      const std::string actual = sha256_hex(bytes);
      if (actual != stem) {
        add("hash_mismatch", stem, "file hashes to " + actual);
        continue;
      }
      try {
        decode_png(bytes);
      } catch (const ImageDecodeError& e) {
        add("unreadable", stem, e.what());
      }
    }
  }

  const auto manifest = read_records(root / "manifest.jsonl");
  std::set<std::string> image_ids, description_ids;
  for (const auto& r : manifest) {
    if (r["type"] == "description") description_ids.insert(r["description_id"].get<std::string>());
  }
  for (const auto& r : manifest) {
    ++report.records_checked;
    const std::string type = r["type"];
    if (type == "image") {
      const std::string id = r["image_id"];
      image_ids.insert(id);
      if (!files.count(id)) add("missing_file", id, "image record has no stored file");
      if (r.contains("path") && is_hex_id(id) && r["path"] != CorpusStore::relative_image_path(id)) {
        add("dangling_reference", id, "recorded path " + r["path"].get<std::string>() + " does not match id");
      }
      if (!r["description_id"].is_null() && !description_ids.count(r["description_id"].get<std::string>())) {
        add("dangling_reference", id, "description " + r["description_id"].get<std::string>() + " not found");
      }
    } else if (type == "description") {
      if (r["leakage_passed"].get<bool>()) {
        const auto leak = leakage_check(r["text"].get<std::string>(), r["concept"].get<std::string>());
        if (leak) add("leakage", r["description_id"], "description names the concept as '" + leak.matched + "'");
      }
    }
  }
  // attempts may precede the image record they name, so check them last
  for (const auto& r : manifest) {
    if (r["type"] == "attempt" && r.contains("image_id") && r["image_id"].is_string() &&
        !image_ids.count(r["image_id"].get<std::string>())) {
      add("dangling_reference", r["image_id"], "attempt references an unknown image");
    }
  }

  std::set<std::string> item_ids;
  for (const auto& r : read_records(root / "items.jsonl")) {
    ++report.records_checked;
    const std::string type = r["type"];
    if (type == "item") item_ids.insert(r["item_id"].get<std::string>());
    if ((type == "item" || type == "distractors") && !image_ids.count(r["image_id"].get<std::string>())) {
      const std::string subject = type == "item" ? r["item_id"].get<std::string>() : r["image_id"].get<std::string>();
      add("dangling_reference", subject, type + " references unknown image " + r["image_id"].get<std::string>());
    }
  }

  const fs::path results = root / "results";
  if (fs::exists(results)) {
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(results)) {
      if (entry.path().extension() == ".jsonl") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      for (const auto& r : read_records(p, "result")) {
        ++report.records_checked;
        if (!item_ids.count(r["item_id"].get<std::string>())) {
          add("dangling_reference", r["item_id"], "result in " + p.filename().string() + " references an unknown item");
        }
      }
    }
  }

  for (const auto& r : read_records(root / "annotations.jsonl", "annotation")) {
    ++report.records_checked;
    if (!image_ids.count(r["image_id"].get<std::string>())) {
      add("dangling_reference", r["image_id"], "annotation references an unknown image");
    }
  }
  return report;
}

}  // namespace metobench
