#include <cmath>
#include <cstdlib>
#include <map>

#include "mtlens/errors.hpp"
#include "mtlens/overlap_metrics.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::metrics {
namespace {

// log with log(0) floored, as the reference scorer does.
double floored_log(double x) { return x == 0.0 ? -9999999999.0 : std::log(x); }

double default_smooth_value(BleuSmoothing s) {
  switch (s) {
    case BleuSmoothing::Floor: return 0.1;
    case BleuSmoothing::AddK: return 1.0;
    default: return 0.0;
  }
}

using NgramCounts = std::map<std::vector<std::string_view>, std::int64_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int max_order) {
  NgramCounts counts;
  for (int n = 1; n <= max_order; ++n) {
    if (tokens.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::vector<std::string_view> gram(tokens.begin() + i, tokens.begin() + i + n);
      ++counts[std::move(gram)];
    }
  }
  return counts;
}

std::string_view smoothing_name(BleuSmoothing s) {
  switch (s) {
    case BleuSmoothing::None: return "none";
    case BleuSmoothing::Floor: return "floor";
    case BleuSmoothing::AddK: return "add-k";
    case BleuSmoothing::Exp: return "exp";
  }
  return "none";
}

}  // namespace

Bleu::Bleu(BleuOptions opts) : opts_(opts) {
  if (opts_.max_ngram_order < 1) throw Error(ErrorCode::ValidationError, "bleu max_ngram_order must be >= 1");
}

double Bleu::compute(std::span<const double> correct_in, std::span<const double> total_in, double sys_len,
                     double ref_len, BleuSmoothing smooth, std::optional<double> smooth_value,
                     bool effective_order, int max_order, std::vector<double>* precisions_out,
                     double* bp_out) {
  const double sv = smooth_value.value_or(default_smooth_value(smooth));
  std::vector<double> correct(correct_in.begin(), correct_in.end());
  std::vector<double> total(total_in.begin(), total_in.end());

  double bp = 1.0;
  if (sys_len < ref_len) bp = sys_len > 0 ? std::exp(1.0 - ref_len / sys_len) : 0.0;
  if (bp_out) *bp_out = bp;

  std::vector<double> precisions(static_cast<std::size_t>(max_order), 0.0);
  bool any_correct = false;
  for (double c : correct) any_correct = any_correct || c != 0.0;
  if (!any_correct) {
    if (precisions_out) *precisions_out = precisions;
    return 0.0;
  }

  double smooth_mteval = 1.0;
  int eff_order = max_order;
  for (int n = 1; n <= max_order; ++n) {
    const auto k = static_cast<std::size_t>(n - 1);
    if (smooth == BleuSmoothing::AddK && n > 1) {
      correct[k] += sv;
      total[k] += sv;
    }
    if (total[k] == 0.0) break;
    if (effective_order) eff_order = n;
    if (correct[k] == 0.0) {
      if (smooth == BleuSmoothing::Exp) {
        smooth_mteval *= 2.0;
        precisions[k] = 100.0 / (smooth_mteval * total[k]);
      } else if (smooth == BleuSmoothing::Floor) {
        precisions[k] = 100.0 * sv / total[k];
      }
    } else {
      precisions[k] = 100.0 * correct[k] / total[k];
    }
  }
  if (precisions_out) *precisions_out = precisions;

  double log_sum = 0.0;
  for (int n = 0; n < eff_order; ++n) log_sum += floored_log(precisions[static_cast<std::size_t>(n)]);
  return bp * std::exp(log_sum / eff_order);
}

Stats Bleu::segment_stats(std::string_view hyp, std::span<const std::string> refs) const {
  if (refs.empty()) throw Error(ErrorCode::EmptyInput, "bleu: segment has no references");
  const int order = opts_.max_ngram_order;
  auto prep = [&](std::string_view s) {
    const std::string cased = opts_.lowercase ? unicode::lower(s) : std::string(s);
    return tokenize(unicode::rstrip(cased), opts_.tokenize);
  };

  std::vector<std::vector<std::string>> ref_tokens;
  ref_tokens.reserve(refs.size());
  for (const auto& r : refs) ref_tokens.push_back(prep(r));

  // Max count of each n-gram over references.
  NgramCounts ref_counts;
  std::vector<std::int64_t> ref_lens;
  for (const auto& toks : ref_tokens) {
    ref_lens.push_back(static_cast<std::int64_t>(toks.size()));
    for (auto& [gram, count] : count_ngrams(toks, order)) {
      auto& slot = ref_counts[gram];
      slot = std::max(slot, count);
    }
  }

  const auto hyp_tokens = prep(hyp);
  const auto hyp_len = static_cast<std::int64_t>(hyp_tokens.size());

  // Closest reference length, shorter wins ties.
  std::int64_t closest_len = -1;
  std::int64_t closest_diff = -1;
  for (auto len : ref_lens) {
    const auto diff = std::llabs(hyp_len - len);
    if (closest_diff == -1 || diff < closest_diff) {
      closest_diff = diff;
      closest_len = len;
    } else if (diff == closest_diff && len < closest_len) {
      closest_len = len;
    }
  }

  Stats stats(2 + 2 * static_cast<std::size_t>(order), 0);
  stats[0] = hyp_len;
  stats[1] = closest_len;
  for (const auto& [gram, count] : count_ngrams(hyp_tokens, order)) {
    const auto n = gram.size() - 1;
    stats[2 + order + n] += count;
    if (auto it = ref_counts.find(gram); it != ref_counts.end()) {
      stats[2 + n] += std::min(count, it->second);
    }
  }
  return stats;
}

double Bleu::segment_score(std::span<const std::int64_t> stats) const {
  const auto order = static_cast<std::size_t>(opts_.max_ngram_order);
  std::vector<double> correct(order), total(order);
  for (std::size_t n = 0; n < order; ++n) {
    correct[n] = static_cast<double>(stats[2 + n]);
    total[n] = static_cast<double>(stats[2 + order + n]);
  }
  return compute(correct, total, static_cast<double>(stats[0]), static_cast<double>(stats[1]), opts_.smooth,
                 opts_.smooth_value, opts_.effective_order, opts_.max_ngram_order);
}

double Bleu::corpus_score(std::span<const Stats> stats, std::span<const std::uint32_t> weights) const {
  const auto order = static_cast<std::size_t>(opts_.max_ngram_order);
  Stats pooled(2 + 2 * order, 0);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const std::int64_t w = weights.empty() ? 1 : weights[i];
    if (w == 0) continue;
    for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += w * stats[i][k];
  }
  std::vector<double> correct(order), total(order);
  for (std::size_t n = 0; n < order; ++n) {
    correct[n] = static_cast<double>(pooled[2 + n]);
    total[n] = static_cast<double>(pooled[2 + order + n]);
  }
  return compute(correct, total, static_cast<double>(pooled[0]), static_cast<double>(pooled[1]),
                 opts_.corpus_smooth, opts_.smooth_value, false, opts_.max_ngram_order);
}

nlohmann::json Bleu::details(std::span<const std::int64_t> pooled) const {
  const auto order = static_cast<std::size_t>(opts_.max_ngram_order);
  std::vector<double> correct(order), total(order), precisions;
  for (std::size_t n = 0; n < order; ++n) {
    correct[n] = static_cast<double>(pooled[2 + n]);
    total[n] = static_cast<double>(pooled[2 + order + n]);
  }
  double bp = 1.0;
  compute(correct, total, static_cast<double>(pooled[0]), static_cast<double>(pooled[1]), opts_.corpus_smooth,
          opts_.smooth_value, false, opts_.max_ngram_order, &precisions, &bp);
  return {{"precisions", precisions},
          {"bp", bp},
          {"hyp_len", pooled[0]},
          {"ref_len", pooled[1]},
          {"counts", std::vector<std::int64_t>(pooled.begin() + 2, pooled.begin() + 2 + order)},
          {"totals", std::vector<std::int64_t>(pooled.begin() + 2 + order, pooled.end())}};
}

nlohmann::json Bleu::options_json() const {
  nlohmann::json j{{"tokenize", to_string(opts_.tokenize)},
                   {"smooth", smoothing_name(opts_.smooth)},
                   {"corpus_smooth", smoothing_name(opts_.corpus_smooth)},
                   {"max_ngram_order", opts_.max_ngram_order},
                   {"lowercase", opts_.lowercase},
                   {"effective_order", opts_.effective_order}};
  if (opts_.smooth_value) j["smooth_value"] = *opts_.smooth_value;
  return j;
}

}  // namespace mtlens::metrics
