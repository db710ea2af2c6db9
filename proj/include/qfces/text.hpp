#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qfces::text {

// A word is a maximal run of non-whitespace bytes. Punctuation is kept.
std::size_t count_words(std::string_view s);
std::vector<std::string> split_words(std::string_view s);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
// Lowercase and collapse internal whitespace runs to one space.
std::string normalize_key(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

// FNV-1a, 64 bit. Stable across platforms; used for fingerprints and config hashes.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t v);

// Round to `digits` decimals, ties to even on the binary value.
double round_half_even(double v, int digits);
std::string format_fixed(double v, int digits);

// Render rows as a plain-text table with left-aligned, space-padded columns.
std::string aligned_table(const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& rows);

}  // namespace qfces::text
