#include <string>
#include <unordered_map>

#include "mtlens/errors.hpp"
#include "mtlens/overlap_metrics.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::metrics {
namespace {

using Counter = std::unordered_map<std::u32string, std::int64_t>;

std::vector<Counter> char_ngrams(const std::u32string& line, int max_order, bool include_whitespace) {
  std::u32string s;
  if (include_whitespace) {
    s = line;
  } else {
    for (const auto& w : unicode::split_whitespace(std::u32string_view(line))) s += w;
  }
  std::vector<Counter> out(static_cast<std::size_t>(max_order));
  for (int n = 1; n <= max_order; ++n) {
    auto& c = out[static_cast<std::size_t>(n - 1)];
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[s.substr(i, static_cast<std::size_t>(n))];
  }
  return out;
}

bool is_ascii_punct(char32_t c) {
  return c < 0x80 && std::u32string_view(U"!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~").find(c) !=
                         std::u32string_view::npos;
}

// Detaches one leading or trailing ASCII punctuation mark from each word.
std::vector<std::u32string> words_without_punct(const std::u32string& sent) {
  std::vector<std::u32string> out;
  for (auto& w : unicode::split_whitespace(std::u32string_view(sent))) {
    if (w.size() == 1) {
      out.push_back(w);
    } else if (is_ascii_punct(w.back())) {
      out.push_back(w.substr(0, w.size() - 1));
      out.push_back(w.substr(w.size() - 1));
    } else if (is_ascii_punct(w.front())) {
      out.push_back(w.substr(0, 1));
      out.push_back(w.substr(1));
    } else {
      out.push_back(w);
    }
  }
  return out;
}

Counter word_ngrams(const std::vector<std::u32string>& words, int n) {
  Counter c;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::u32string key;
    for (std::size_t k = i; k < i + static_cast<std::size_t>(n); ++k) {
      if (k > i) key.push_back(U' ');
      key += words[k];
    }
    ++c[key];
  }
  return c;
}

void match_stats(const Counter& hyp, const Counter& ref, Stats& out) {
  std::int64_t match = 0;
  std::int64_t hyp_count = 0;
  for (const auto& [gram, count] : hyp) {
    hyp_count += count;
    if (auto it = ref.find(gram); it != ref.end()) match += std::min(count, it->second);
  }
  std::int64_t ref_count = 0;
  for (const auto& [gram, count] : ref) ref_count += count;
  out.push_back(ref.empty() ? 0 : hyp_count);
  out.push_back(ref_count);
  out.push_back(match);
}

}  // namespace

Chrf::Chrf(ChrfOptions opts) : opts_(opts) {
  if (opts_.char_order < 0 || opts_.word_order < 0 || opts_.char_order + opts_.word_order == 0) {
    throw Error(ErrorCode::ValidationError, "chrf needs a positive character or word order");
  }
  if (opts_.beta < 0) throw Error(ErrorCode::ValidationError, "chrf beta must be >= 0");
}

double Chrf::f_score(std::span<const std::int64_t> stats) const {
  constexpr double eps = 1e-16;
  const int order = opts_.char_order + opts_.word_order;
  const double factor = static_cast<double>(opts_.beta) * opts_.beta;
  double score = 0.0;
  int effective_order = 0;
  double avg_prec = 0.0;
  double avg_rec = 0.0;
  for (int i = 0; i < order; ++i) {
    const auto n_hyp = stats[3 * i];
    const auto n_ref = stats[3 * i + 1];
    const auto n_match = stats[3 * i + 2];
    const double prec = n_hyp > 0 ? static_cast<double>(n_match) / static_cast<double>(n_hyp) : eps;
    const double rec = n_ref > 0 ? static_cast<double>(n_match) / static_cast<double>(n_ref) : eps;
    const double denom = factor * prec + rec;
    score += denom > 0 ? ((1 + factor) * prec * rec / denom) : eps;
    if (n_hyp > 0 && n_ref > 0) {
      avg_prec += prec;
      avg_rec += rec;
      ++effective_order;
    }
  }
  if (opts_.eps_smoothing) return 100 * score / order;
  if (effective_order == 0) {
    avg_prec = avg_rec = 0.0;
  } else {
    avg_prec /= effective_order;
    avg_rec /= effective_order;
  }
  if (avg_prec + avg_rec != 0.0) {
    double s = (1 + factor) * avg_prec * avg_rec;
    s /= (factor * avg_prec) + avg_rec;
    return 100 * s;
  }
  return 0.0;
}

Stats Chrf::segment_stats(std::string_view hyp, std::span<const std::string> refs) const {
  if (refs.empty()) throw Error(ErrorCode::EmptyInput, "chrf: segment has no references");
  auto prep = [&](std::string_view s) {
    auto cps = unicode::decode(s);
    return opts_.lowercase ? unicode::lower(cps) : cps;
  };
  const auto h = prep(hyp);
  auto hyp_ngrams = char_ngrams(h, opts_.char_order, opts_.whitespace);
  if (opts_.word_order > 0) {
    const auto words = words_without_punct(h);
    for (int n = 1; n <= opts_.word_order; ++n) hyp_ngrams.push_back(word_ngrams(words, n));
  }

  Stats best;
  double best_f = -1.0;
  for (const auto& ref : refs) {
    const auto r = prep(ref);
    auto ref_ngrams = char_ngrams(r, opts_.char_order, opts_.whitespace);
    if (opts_.word_order > 0) {
      const auto words = words_without_punct(r);
      for (int n = 1; n <= opts_.word_order; ++n) ref_ngrams.push_back(word_ngrams(words, n));
    }
    Stats stats;
    stats.reserve(3 * hyp_ngrams.size());
    for (std::size_t k = 0; k < hyp_ngrams.size(); ++k) match_stats(hyp_ngrams[k], ref_ngrams[k], stats);
    const double f = f_score(stats);
    if (f > best_f) {
      best_f = f;
      best = std::move(stats);
    }
  }
  return best;
}

double Chrf::segment_score(std::span<const std::int64_t> stats) const { return f_score(stats); }

double Chrf::corpus_score(std::span<const Stats> stats, std::span<const std::uint32_t> weights) const {
  Stats pooled(3 * static_cast<std::size_t>(opts_.char_order + opts_.word_order), 0);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const std::int64_t w = weights.empty() ? 1 : weights[i];
    if (w == 0) continue;
    for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += w * stats[i][k];
  }
  return f_score(pooled);
}

nlohmann::json Chrf::details(std::span<const std::int64_t> pooled) const {
  nlohmann::json orders = nlohmann::json::array();
  const int order = opts_.char_order + opts_.word_order;
  for (int i = 0; i < order; ++i) {
    orders.push_back({{"kind", i < opts_.char_order ? "char" : "word"},
                      {"n", i < opts_.char_order ? i + 1 : i - opts_.char_order + 1},
                      {"hyp", pooled[3 * i]},
                      {"ref", pooled[3 * i + 1]},
                      {"match", pooled[3 * i + 2]}});
  }
  return {{"orders", orders}, {"beta", opts_.beta}};
}

nlohmann::json Chrf::options_json() const {
  return {{"char_order", opts_.char_order},   {"word_order", opts_.word_order},
          {"beta", opts_.beta},               {"lowercase", opts_.lowercase},
          {"whitespace", opts_.whitespace},   {"eps_smoothing", opts_.eps_smoothing}};
}

}  // namespace mtlens::metrics
