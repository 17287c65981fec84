#include <string>

#include "mtlens/overlap_metrics.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::metrics {
namespace {

using unicode::is_number;
using unicode::is_punctuation;
using unicode::is_symbol;

// Applies a two-character regex rule `(A)(B)` the way a leftmost,
// non-overlapping substitution does: a match consumes both characters.
template <typename First, typename Second, typename Emit>
std::u32string sub_pairs(const std::u32string& in, First first, Second second, Emit emit) {
  std::u32string out;
  out.reserve(in.size() + in.size() / 2);
  std::size_t i = 0;
  while (i < in.size()) {
    if (i + 1 < in.size() && first(in[i]) && second(in[i + 1])) {
      emit(out, in[i], in[i + 1]);
      i += 2;
    } else {
      out.push_back(in[i]);
      ++i;
    }
  }
  return out;
}

template <typename Pred>
std::u32string pad_each(const std::u32string& in, Pred pred) {
  std::u32string out;
  out.reserve(in.size() + in.size() / 2);
  for (char32_t c : in) {
    if (pred(c)) {
      out.push_back(U' ');
      out.push_back(c);
      out.push_back(U' ');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string join_tokens(const std::u32string& s) {
  std::string out;
  for (const auto& w : unicode::split_whitespace(std::u32string_view(s))) {
    if (!out.empty()) out.push_back(' ');
    out += unicode::encode(w);
  }
  return out;
}

void replace_all(std::u32string& s, std::u32string_view from, std::u32string_view to) {
  if (from.empty()) return;
  std::u32string out;
  std::size_t pos = 0;
  for (;;) {
    const auto hit = s.find(from, pos);
    if (hit == std::u32string::npos) break;
    out.append(s, pos, hit - pos);
    out.append(to);
    pos = hit + from.size();
  }
  out.append(s, pos, std::u32string::npos);
  s = std::move(out);
}

bool is_ascii_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

// [\{-\~\[-\` -\&\(-\+\:-\@\/]
bool is_13a_split_char(char32_t c) {
  return (c >= 0x7B && c <= 0x7E) || (c >= 0x5B && c <= 0x60) || (c >= 0x20 && c <= 0x26) ||
         (c >= 0x28 && c <= 0x2B) || (c >= 0x3A && c <= 0x40) || c == U'/';
}

bool is_period_or_comma(char32_t c) { return c == U'.' || c == U','; }

std::u32string intl_pass(const std::u32string& line) {
  auto s = sub_pairs(
      line, [](char32_t c) { return !is_number(c); }, [](char32_t c) { return is_punctuation(c); },
      [](std::u32string& out, char32_t a, char32_t b) {
        out.push_back(a);
        out.push_back(U' ');
        out.push_back(b);
        out.push_back(U' ');
      });
  s = sub_pairs(
      s, [](char32_t c) { return is_punctuation(c); }, [](char32_t c) { return !is_number(c); },
      [](std::u32string& out, char32_t a, char32_t b) {
        out.push_back(U' ');
        out.push_back(a);
        out.push_back(U' ');
        out.push_back(b);
      });
  return pad_each(s, [](char32_t c) { return is_symbol(c); });
}

// The shared western rules of mteval-v13a and tercom, after the caller has
// padded the line with spaces.
std::u32string western_rules(std::u32string s, bool tercom_possessives) {
  s = pad_each(s, is_13a_split_char);
  if (tercom_possessives) {
    replace_all(s, U"'s ", U" 's ");
    if (s.size() >= 2 && s.compare(s.size() - 2, 2, U"'s") == 0) {
      s.replace(s.size() - 2, 2, U" 's");
    }
  }
  s = sub_pairs(
      s, [](char32_t c) { return !is_ascii_digit(c); }, is_period_or_comma,
      [](std::u32string& out, char32_t a, char32_t b) {
        out.push_back(a);
        out.push_back(U' ');
        out.push_back(b);
        out.push_back(U' ');
      });
  s = sub_pairs(
      s, is_period_or_comma, [](char32_t c) { return !is_ascii_digit(c); },
      [](std::u32string& out, char32_t a, char32_t b) {
        out.push_back(U' ');
        out.push_back(a);
        out.push_back(U' ');
        out.push_back(b);
      });
  s = sub_pairs(
      s, is_ascii_digit, [](char32_t c) { return c == U'-'; },
      [](std::u32string& out, char32_t a, char32_t b) {
        out.push_back(a);
        out.push_back(U' ');
        out.push_back(b);
        out.push_back(U' ');
      });
  return s;
}

void unescape_entities(std::u32string& s) {
  replace_all(s, U"&quot;", U"\"");
  replace_all(s, U"&amp;", U"&");
  replace_all(s, U"&lt;", U"<");
  replace_all(s, U"&gt;", U">");
}

std::u32string mteval13a_pass(std::u32string line) {
  replace_all(line, U"<skipped>", U"");
  replace_all(line, U"-\n", U"");
  replace_all(line, U"\n", U" ");
  if (line.find(U'&') != std::u32string::npos) unescape_entities(line);
  return western_rules(U" " + line + U" ", false);
}

}  // namespace

std::optional<TokenizerScheme> parse_tokenizer(std::string_view name) {
  if (name == "intl" || name == "international" || name == "default-international") {
    return TokenizerScheme::International;
  }
  if (name == "13a") return TokenizerScheme::Mteval13a;
  if (name == "whitespace" || name == "none") return TokenizerScheme::Whitespace;
  return std::nullopt;
}

std::string_view to_string(TokenizerScheme scheme) {
  switch (scheme) {
    case TokenizerScheme::International: return "intl";
    case TokenizerScheme::Mteval13a: return "13a";
    case TokenizerScheme::Whitespace: return "whitespace";
  }
  return "intl";
}

std::string tokenize_line(std::string_view text, TokenizerScheme scheme) {
  const auto cps = unicode::decode(text);
  switch (scheme) {
    case TokenizerScheme::International: return join_tokens(intl_pass(cps));
    case TokenizerScheme::Mteval13a: return join_tokens(mteval13a_pass(cps));
    case TokenizerScheme::Whitespace: return join_tokens(cps);
  }
  return {};
}

std::vector<std::string> tokenize(std::string_view text, TokenizerScheme scheme) {
  return unicode::split_whitespace(tokenize_line(text, scheme));
}

std::string tercom_tokenize(std::string_view text, const TercomOptions& opts) {
  if (text.empty()) return {};
  std::u32string s = unicode::decode(text);
  if (!opts.case_sensitive) s = unicode::lower(s);
  if (opts.normalized) {
    replace_all(s, U"\n-", U"");
    replace_all(s, U"\n", U" ");
    unescape_entities(s);
    s = western_rules(U" " + s + U" ", true);
  }
  if (opts.no_punct) {
    std::u32string kept;
    for (char32_t c : s) {
      if (std::u32string_view(U".,?:;!\"()").find(c) == std::u32string_view::npos) kept.push_back(c);
    }
    s = std::move(kept);
  }
  return join_tokens(s);
}

}  // namespace mtlens::metrics
