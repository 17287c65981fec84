#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 helpers and the handful of Unicode properties the scorers need.
// Classification follows the tables in src/unicode_tables.inc.
namespace mtlens::unicode {

bool is_valid_utf8(std::string_view text);

/// Decodes UTF-8; invalid bytes decode to U+FFFD.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);
void append_utf8(std::string& out, char32_t cp);

bool is_punctuation(char32_t cp);  // \p{P}
bool is_symbol(char32_t cp);       // \p{S}
bool is_number(char32_t cp);       // \p{N}
bool is_mark(char32_t cp);         // \p{M}
bool is_space(char32_t cp);        // str.isspace()

/// Full lowercase mapping (may expand, e.g. U+0130).
std::u32string lower(std::u32string_view text);
std::string lower(std::string_view text);

/// Whitespace split with runs collapsed and edges ignored.
std::vector<std::string> split_whitespace(std::string_view text);
std::vector<std::u32string> split_whitespace(std::u32string_view text);

/// Lowercased whitespace tokens with punctuation stripped from both ends;
/// punctuation-only tokens are dropped.
std::vector<std::string> lower_words(std::string_view text);

/// Strips trailing whitespace.
std::string_view rstrip(std::string_view text);

/// Splits into user-perceived characters: a base code point followed by
/// combining marks, ZWJ sequences, emoji modifiers and variation selectors.
/// Regional-indicator pairs form one cluster.
std::vector<std::u32string> graphemes(std::u32string_view text);

std::size_t grapheme_count(std::string_view text);

}  // namespace mtlens::unicode
