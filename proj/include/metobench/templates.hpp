#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace metobench {

// Prompt and guideline texts. The built-in copies are compiled from the files
// in templates/; a directory of same-named .txt files overrides any of them.
class TemplateSet {
 public:
  // The compiled-in defaults.
  TemplateSet();
  // Defaults, then every "<name>.txt" found in `dir` replaces its entry.
  static TemplateSet with_overrides(const std::filesystem::path& dir);

  // Throws std::out_of_range for an unknown template name.
  const std::string& get(std::string_view name) const;
  // Stable identifier recorded in manifests: "<name>@<first 12 hex of sha256>".
  std::string id(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::string, std::less<>> texts_;
};

// Substitutes every "{key}" in `tpl`.
std::string fill(std::string tpl, const std::map<std::string, std::string>& values);

}  // namespace metobench
