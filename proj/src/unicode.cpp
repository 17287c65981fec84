#include "mtlens/unicode.hpp"

#include <algorithm>
#include <array>
#include <cstdint>

namespace mtlens::unicode {
namespace {

struct CodeRange {
  char32_t lo;
  char32_t hi;
};

struct LowerMapping {
  char32_t cp;
  std::uint8_t length;
  char32_t seq[3];
};

#include "unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const std::array<CodeRange, N>& table, char32_t cp) {
  auto it = std::upper_bound(table.begin(), table.end(), cp,
                             [](char32_t v, const CodeRange& r) { return v < r.lo; });
  if (it == table.begin()) return false;
  --it;
  return cp >= it->lo && cp <= it->hi;
}

const LowerMapping* find_lower(char32_t cp) {
  auto it = std::lower_bound(kLowercase.begin(), kLowercase.end(), cp,
                             [](const LowerMapping& m, char32_t v) { return m.cp < v; });
  if (it == kLowercase.end() || it->cp != cp) return nullptr;
  return &*it;
}

constexpr char32_t kReplacement = 0xFFFD;
constexpr char32_t kZwj = 0x200D;

bool is_cased_letter(char32_t cp) {
  if (find_lower(cp) != nullptr) return true;
  // Lowercase letters have no lowercase mapping; treat every non-space,
  // non-punctuation, non-symbol, non-number, non-mark code point above
  // ASCII control range as cased for the final-sigma context test.
  return !is_space(cp) && !is_punctuation(cp) && !is_symbol(cp) && !is_number(cp) &&
         !is_mark(cp) && cp > 0x40;
}

bool is_regional_indicator(char32_t cp) { return cp >= 0x1F1E6 && cp <= 0x1F1FF; }
bool is_emoji_modifier(char32_t cp) { return cp >= 0x1F3FB && cp <= 0x1F3FF; }
bool is_variation_selector(char32_t cp) {
  return (cp >= 0xFE00 && cp <= 0xFE0F) || (cp >= 0xE0100 && cp <= 0xE01EF);
}

}  // namespace

bool is_punctuation(char32_t cp) { return in_ranges(kPunctuation, cp); }
bool is_symbol(char32_t cp) { return in_ranges(kSymbol, cp); }
bool is_number(char32_t cp) { return in_ranges(kNumber, cp); }
bool is_mark(char32_t cp) { return in_ranges(kMark, cp); }
bool is_space(char32_t cp) { return in_ranges(kWhitespace, cp); }

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
      return false;
    }
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

std::u32string decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = kReplacement;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (len > 1) {
      bool ok = i + len <= n;
      for (std::size_t k = 1; ok && k < len; ++k) {
        const auto cc = static_cast<unsigned char>(text[i + k]);
        if ((cc & 0xC0) != 0x80) {
          ok = false;
        } else {
          cp = (cp << 6) | (cc & 0x3F);
        }
      }
      if (!ok) {
        out.push_back(kReplacement);
        ++i;
        continue;
      }
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) append_utf8(out, cp);
  return out;
}

std::u32string lower(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char32_t cp = text[i];
    if (cp == 0x03A3) {
      // Final sigma: preceded by a cased letter and not followed by one.
      const bool before = i > 0 && is_cased_letter(text[i - 1]);
      const bool after = i + 1 < text.size() && is_cased_letter(text[i + 1]);
      out.push_back(before && !after ? char32_t{0x03C2} : char32_t{0x03C3});
      continue;
    }
    if (const auto* m = find_lower(cp)) {
      out.append(m->seq, m->seq + m->length);
    } else {
      out.push_back(cp);
    }
  }
  return out;
}

std::string lower(std::string_view text) {
  bool ascii = true;
  for (char c : text) {
    if (static_cast<unsigned char>(c) >= 0x80) {
      ascii = false;
      break;
    }
  }
  if (ascii) {
    std::string out(text);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
  }
  return encode(lower(decode(text)));
}

std::vector<std::u32string> split_whitespace(std::u32string_view text) {
  std::vector<std::u32string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& w : split_whitespace(std::u32string_view(decode(text)))) out.push_back(encode(w));
  return out;
}

std::vector<std::string> lower_words(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& w : split_whitespace(std::u32string_view(lower(decode(text))))) {
    std::size_t b = 0;
    std::size_t e = w.size();
    while (b < e && is_punctuation(w[b])) ++b;
    while (e > b && is_punctuation(w[e - 1])) --e;
    if (b < e) out.push_back(encode(std::u32string_view(w).substr(b, e - b)));
  }
  return out;
}

std::string_view rstrip(std::string_view text) {
  std::size_t keep = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : (c & 0xF8) == 0xF0 ? 4 : 1;
    if (i + len > text.size()) len = 1;
    const auto cps = decode(text.substr(i, len));
    if (cps.size() != 1) len = 1;
    if (cps.size() != 1 || !is_space(cps[0])) keep = i + len;
    i += len;
  }
  return text.substr(0, keep);
}

std::vector<std::u32string> graphemes(std::u32string_view text) {
  std::vector<std::u32string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::u32string cluster(1, text[i]);
    const bool regional = is_regional_indicator(text[i]);
    ++i;
    if (cluster[0] == U'\r' && i < text.size() && text[i] == U'\n') {
      cluster.push_back(text[i++]);
      out.push_back(std::move(cluster));
      continue;
    }
    if (regional && i < text.size() && is_regional_indicator(text[i])) {
      cluster.push_back(text[i++]);
    }
    while (i < text.size()) {
      const char32_t cp = text[i];
      if (is_mark(cp) || is_emoji_modifier(cp) || is_variation_selector(cp)) {
        cluster.push_back(cp);
        ++i;
      } else if (cp == kZwj) {
        cluster.push_back(cp);
        ++i;
        if (i < text.size()) cluster.push_back(text[i++]);
      } else {
        break;
      }
    }
    out.push_back(std::move(cluster));
  }
  return out;
}

std::size_t grapheme_count(std::string_view text) { return graphemes(decode(text)).size(); }

}  // namespace mtlens::unicode
