#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace promptsmith {

std::string trim(std::string_view s);

// Label normalization shared by ingestion and scoring: trim, strip trailing
// ASCII and full-width punctuation, ASCII case-fold.
std::string normalize_label(std::string_view s);

std::uint64_t fnv1a64(std::string_view s);
std::string hex64(std::uint64_t v);

// Replaces every {name} whose name is a key of `values`, in one pass.
// Braces that do not form a known placeholder are copied through, so JSON
// snippets inside templates survive.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

// Number of occurrences of the literal "{name}" in tmpl.
std::size_t count_placeholder(std::string_view tmpl, std::string_view name);

// Cuts s to at most max_bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

// Removes one surrounding ``` fence (with optional language tag) and one pair
// of matching surrounding quotes, then trims.
std::string strip_fences_and_quotes(std::string_view s);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Fixed-point formatting, e.g. format_fixed(0.5, 4) == "0.5000".
std::string format_fixed(double v, int digits);

}  // namespace promptsmith
