#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace metobench {

struct LeakageResult {
  bool leaked = false;
  std::string matched;  // surface form found in the text when leaked

  explicit operator bool() const { return leaked; }
};

// Whole-word, case-insensitive search for the concept in `text`. Multi-word
// and hyphenated lemmas match with any run of whitespace or a hyphen between
// their parts. The last part may carry a regular plural or possessive ending
// (s, es, 's, s', ’s). Derivations and paraphrases are not detected.
LeakageResult leakage_check(std::string_view text, std::string_view concept_lemma);

}  // namespace metobench
