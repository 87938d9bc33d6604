#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace metobench {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Trim, lowercase, and collapse runs of internal whitespace to one space.
std::string normalize_lemma(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim);

// Replaces every occurrence of `from` in `s`.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Uppercases the first ASCII letter; used for the {word}/{goal} placeholders
// so they match the capitalised few-shot examples.
std::string capitalize(std::string_view s);

std::size_t word_count(std::string_view s);

// Stable 64-bit FNV-1a; used wherever a seed must be derived from a string.
std::uint64_t fnv1a64(std::string_view s);

// SplitMix64 finaliser over (a, b). Order-sensitive.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace metobench
