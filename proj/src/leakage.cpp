#include "metobench/leakage.hpp"

#include "metobench/text.hpp"

#include <map>
#include <mutex>
#include <regex>

namespace metobench {

namespace {

std::string escape_regex(std::string_view s) {
  static constexpr std::string_view special = R"(\^$.|?*+()[]{}/)";
  std::string out;
  for (const char c : s) {
    if (special.find(c) != std::string_view::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

// std::regex has no lookbehind, so the left boundary is consumed as group 1
// and the lemma is group 2.
std::regex build_pattern(const std::string& lemma) {
  std::vector<std::string> parts;
  std::string cur;
  for (const char c : lemma) {
    if (c == ' ' || c == '-' || c == '\t') {
      if (!cur.empty()) parts.push_back(escape_regex(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(escape_regex(cur));
  const std::string body = join(parts, "(?:\\s+|\\s*-\\s*)");
  const std::string pattern =
      "(^|[^A-Za-z0-9_])(" + body + "(?:es|s|'s|s'|\xE2\x80\x99s)?)(?![A-Za-z0-9_])";
  return std::regex(pattern, std::regex::ECMAScript | std::regex::icase);
}

const std::regex& pattern_for(const std::string& lemma) {
  static std::mutex mu;
  static std::map<std::string, std::regex> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(lemma);
  if (it == cache.end()) it = cache.emplace(lemma, build_pattern(lemma)).first;
  return it->second;
}

}  // namespace

LeakageResult leakage_check(std::string_view text, std::string_view concept_lemma) {
  const std::string lemma = normalize_lemma(concept_lemma);
  if (lemma.empty()) return {};
  const std::regex& re = pattern_for(lemma);
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(text.begin(), text.end(), m, re)) return {true, m[2].str()};
  return {};
}

}  // namespace metobench
