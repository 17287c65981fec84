#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mtlens::metrics {

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

enum class TokenizerScheme {
  International,  // mteval-v14 international: split \p{P} and \p{S}
  Mteval13a,      // mteval-v13a (WMT)
  Whitespace,
};

std::optional<TokenizerScheme> parse_tokenizer(std::string_view name);
std::string_view to_string(TokenizerScheme scheme);

std::vector<std::string> tokenize(std::string_view text, TokenizerScheme scheme);
/// Tokens joined by single spaces.
std::string tokenize_line(std::string_view text, TokenizerScheme scheme);

struct TercomOptions {
  bool normalized = false;
  bool no_punct = false;
  bool case_sensitive = true;
};
std::string tercom_tokenize(std::string_view text, const TercomOptions& opts);

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

/// Integer sufficient statistics for one segment. Layout is metric specific:
///   BLEU: [hyp_len, ref_len, correct_1..N, total_1..N]
///   chrF: [hyp, ref, match] per order (char orders then word orders)
///   TER:  [edits, sum of reference lengths, number of references]
using Stats = std::vector<std::int64_t>;

struct MetricScore {
  std::string metric;
  double value = 0.0;
  Stats stats;
  std::vector<std::string> warnings;
};

struct SegmentScores {
  std::vector<MetricScore> per_segment;
  MetricScore corpus;
};

/// A metric whose corpus score is a function of summed per-segment statistics.
class PooledMetric {
 public:
  virtual ~PooledMetric() = default;

  virtual std::string_view name() const = 0;
  virtual Stats segment_stats(std::string_view hyp, std::span<const std::string> refs) const = 0;
  virtual double segment_score(std::span<const std::int64_t> stats) const = 0;
  /// Corpus score from per-segment statistics; `weights[i]` repeats segment i
  /// (bootstrap resamples). Empty weights means every segment once.
  virtual double corpus_score(std::span<const Stats> stats,
                              std::span<const std::uint32_t> weights = {}) const = 0;
  /// Human-readable breakdown (precisions, brevity penalty, edit counts).
  virtual nlohmann::json details(std::span<const std::int64_t> pooled) const = 0;
  virtual nlohmann::json options_json() const = 0;

  /// Segment stats (in parallel), segment scores and the pooled corpus score.
  SegmentScores score(std::span<const std::string> hyps,
                      std::span<const std::vector<std::string>> refs) const;
};

enum class BleuSmoothing { None, Floor, AddK, Exp };

struct BleuOptions {
  TokenizerScheme tokenize = TokenizerScheme::International;
  BleuSmoothing smooth = BleuSmoothing::Exp;
  std::optional<double> smooth_value;
  BleuSmoothing corpus_smooth = BleuSmoothing::None;
  int max_ngram_order = 4;
  bool lowercase = false;
  /// Segment-level BLEU drops trailing n-gram orders the hypothesis cannot have.
  bool effective_order = true;
};

struct ChrfOptions {
  int char_order = 6;
  int word_order = 0;
  int beta = 2;
  bool lowercase = false;
  bool whitespace = false;
  bool eps_smoothing = false;
};

using TerOptions = TercomOptions;

class Bleu final : public PooledMetric {
 public:
  explicit Bleu(BleuOptions opts = {});
  std::string_view name() const override { return "bleu"; }
  Stats segment_stats(std::string_view hyp, std::span<const std::string> refs) const override;
  double segment_score(std::span<const std::int64_t> stats) const override;
  double corpus_score(std::span<const Stats> stats, std::span<const std::uint32_t> weights = {}) const override;
  nlohmann::json details(std::span<const std::int64_t> pooled) const override;
  nlohmann::json options_json() const override;

  /// BP * exp(mean log p_n), precisions in percent.
  static double compute(std::span<const double> correct, std::span<const double> total, double sys_len,
                        double ref_len, BleuSmoothing smooth, std::optional<double> smooth_value,
                        bool effective_order, int max_order, std::vector<double>* precisions = nullptr,
                        double* bp_out = nullptr);

  const BleuOptions& options() const { return opts_; }

 private:
  BleuOptions opts_;
};

class Chrf final : public PooledMetric {
 public:
  explicit Chrf(ChrfOptions opts = {});
  std::string_view name() const override { return "chrf"; }
  Stats segment_stats(std::string_view hyp, std::span<const std::string> refs) const override;
  double segment_score(std::span<const std::int64_t> stats) const override;
  double corpus_score(std::span<const Stats> stats, std::span<const std::uint32_t> weights = {}) const override;
  nlohmann::json details(std::span<const std::int64_t> pooled) const override;
  nlohmann::json options_json() const override;

  double f_score(std::span<const std::int64_t> stats) const;

 private:
  ChrfOptions opts_;
};

class Ter final : public PooledMetric {
 public:
  explicit Ter(TerOptions opts = {});
  std::string_view name() const override { return "ter"; }
  Stats segment_stats(std::string_view hyp, std::span<const std::string> refs) const override;
  double segment_score(std::span<const std::int64_t> stats) const override;
  double corpus_score(std::span<const Stats> stats, std::span<const std::uint32_t> weights = {}) const override;
  nlohmann::json details(std::span<const std::int64_t> pooled) const override;
  nlohmann::json options_json() const override;

 private:
  TerOptions opts_;
};

struct TerResult {
  std::int64_t edits = 0;  // shifts + edit distance after shifting
  std::int64_t shifts = 0;
  std::int64_t ref_len = 0;
};

/// Tercom-compatible edit count of `hyp` against one reference: greedy
/// best-shift search followed by beam-restricted word edit distance.
TerResult translation_edit_rate(std::span<const std::string> hyp, std::span<const std::string> ref);

/// Builds a metric from its registry name and an options object (keys as in
/// the run config). Throws ValidationError on unknown names or options.
std::unique_ptr<PooledMetric> make_pooled_metric(std::string_view name, const nlohmann::json& options = {});
bool is_pooled_metric(std::string_view name);

SegmentScores bleu(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                   const BleuOptions& opts = {});
SegmentScores chrf(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                   const ChrfOptions& opts = {});
SegmentScores ter(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                  const TerOptions& opts = {});

}  // namespace mtlens::metrics
