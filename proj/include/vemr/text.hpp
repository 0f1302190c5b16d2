#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace vemr::text {

/// ASCII case fold. Bytes outside ASCII pass through untouched (Roman-script
/// transcripts only).
std::string casefold(std::string_view s);

std::string_view trim(std::string_view s);

/// casefold(trim(s)); the equality key used for EMR text comparison.
std::string canonical(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// A word token and its byte span in the source string.
struct Token {
    std::string text; // case-folded
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Word tokens: maximal runs of ASCII alphanumerics or non-ASCII bytes.
std::vector<Token> word_tokens(std::string_view s);

/// Removes apostrophes and replaces other ASCII punctuation with spaces.
std::string strip_punctuation(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

} // namespace vemr::text
