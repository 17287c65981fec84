#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <tuple>

#include "mtlens/errors.hpp"
#include "mtlens/overlap_metrics.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::metrics {
namespace {

// Tercom limits.
constexpr int kMaxShiftSize = 10;
constexpr int kMaxShiftDist = 50;
constexpr int kBeamWidth = 25;
constexpr int kMaxShiftCandidates = 1000;
constexpr std::int64_t kInfinity = 10'000'000'000'000'000LL;

enum class Op : char { Ins = 'i', Del = 'd', Nop = ' ', Sub = 's', Undef = 'x' };

struct Cell {
  std::int64_t cost = kInfinity;
  Op op = Op::Undef;
};

using Words = std::vector<std::string>;

// Word edit distance restricted to a band around the length-scaled diagonal.
// The trace rewrites the hypothesis into the reference.
class BeamEditDistance {
 public:
  explicit BeamEditDistance(std::span<const std::string> ref) : ref_(ref) {}

  std::pair<std::int64_t, std::vector<Op>> operator()(const Words& hyp) const {
    const std::size_t n_h = hyp.size();
    const std::size_t n_r = ref_.size();
    std::vector<std::vector<Cell>> dist(n_h + 1, std::vector<Cell>(n_r + 1));
    for (std::size_t j = 0; j <= n_r; ++j) dist[0][j] = {static_cast<std::int64_t>(j), Op::Ins};

    const double length_ratio = n_h > 0 ? static_cast<double>(n_r) / static_cast<double>(n_h) : 1.0;
    const std::int64_t beam =
        kBeamWidth < length_ratio / 2 ? static_cast<std::int64_t>(std::ceil(length_ratio / 2 + kBeamWidth))
                                      : kBeamWidth;

    for (std::size_t i = 1; i <= n_h; ++i) {
      const auto diag = static_cast<std::int64_t>(std::floor(static_cast<double>(i) * length_ratio));
      const std::int64_t min_j = std::max<std::int64_t>(0, diag - beam);
      std::int64_t max_j = std::min<std::int64_t>(static_cast<std::int64_t>(n_r) + 1, diag + beam);
      if (i == n_h) max_j = static_cast<std::int64_t>(n_r) + 1;

      for (std::int64_t jj = min_j; jj < max_j; ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        if (j == 0) {
          dist[i][0] = {dist[i - 1][0].cost + 1, Op::Del};
          continue;
        }
        const bool same = hyp[i - 1] == ref_[j - 1];
        // Preference: nop/sub, then deletion, then insertion (the trace is
        // flipped later, which swaps the last two).
        const std::array<Cell, 3> ops{{
            {dist[i - 1][j - 1].cost + (same ? 0 : 1), same ? Op::Nop : Op::Sub},
            {dist[i - 1][j].cost + 1, Op::Del},
            {dist[i][j - 1].cost + 1, Op::Ins},
        }};
        for (const auto& cand : ops) {
          if (dist[i][j].cost > cand.cost) dist[i][j] = cand;
        }
      }
    }

    std::vector<Op> trace;
    std::size_t i = n_h;
    std::size_t j = n_r;
    while (i > 0 || j > 0) {
      const Op op = dist[i][j].op;
      trace.push_back(op);
      if (op == Op::Sub || op == Op::Nop) {
        --i;
        --j;
      } else if (op == Op::Ins) {
        --j;
      } else if (op == Op::Del) {
        --i;
      } else {
        throw std::logic_error("ter: undefined edit operation in trace");
      }
    }
    std::reverse(trace.begin(), trace.end());
    return {dist[n_h][n_r].cost, std::move(trace)};
  }

 private:
  std::span<const std::string> ref_;
};

struct Alignment {
  std::map<std::int64_t, std::int64_t> ref_to_hyp;
  std::vector<int> ref_err;
  std::vector<int> hyp_err;
};

// `trace` rewrites the reference into the hypothesis.
Alignment trace_to_alignment(const std::vector<Op>& trace) {
  Alignment a;
  std::int64_t pos_hyp = -1;
  std::int64_t pos_ref = -1;
  for (Op op : trace) {
    switch (op) {
      case Op::Nop:
      case Op::Sub:
        ++pos_hyp;
        ++pos_ref;
        a.ref_to_hyp[pos_ref] = pos_hyp;
        a.hyp_err.push_back(op == Op::Sub ? 1 : 0);
        a.ref_err.push_back(op == Op::Sub ? 1 : 0);
        break;
      case Op::Ins:
        ++pos_hyp;
        a.hyp_err.push_back(1);
        break;
      case Op::Del:
        ++pos_ref;
        a.ref_to_hyp[pos_ref] = pos_hyp;
        a.ref_err.push_back(1);
        break;
      default:
        throw std::logic_error("ter: unknown operation");
    }
  }
  return a;
}

Words perform_shift(const Words& w, std::size_t start, std::size_t length, std::size_t target) {
  Words out;
  out.reserve(w.size());
  auto add = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from; k < std::min(to, w.size()); ++k) out.push_back(w[k]);
  };
  if (target < start) {
    add(0, target);
    add(start, start + length);
    add(target, start);
    add(start + length, w.size());
  } else if (target > start + length) {
    add(0, start);
    add(start + length, target);
    add(start, start + length);
    add(target, w.size());
  } else {
    add(0, start);
    add(start + length, length + target);
    add(start, start + length);
    add(length + target, w.size());
  }
  return out;
}

struct ShiftResult {
  std::int64_t gain = 0;
  Words words;
  int checked = 0;
};

// Finds the single shift that reduces the edit distance most.
ShiftResult best_shift(const Words& hyp, std::span<const std::string> ref, const BeamEditDistance& ed,
                       int checked) {
  const auto [pre_score, inv_trace] = ed(hyp);
  std::vector<Op> trace = inv_trace;
  for (auto& op : trace) {
    if (op == Op::Ins) {
      op = Op::Del;
    } else if (op == Op::Del) {
      op = Op::Ins;
    }
  }
  const Alignment align = trace_to_alignment(trace);

  // (gain, length, -start_h, -target, words); lexicographically largest wins.
  std::optional<std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t, Words>> best;

  const auto n_h = static_cast<std::int64_t>(hyp.size());
  const auto n_r = static_cast<std::int64_t>(ref.size());
  bool stop = false;
  for (std::int64_t start_h = 0; start_h < n_h && !stop; ++start_h) {
    for (std::int64_t start_r = 0; start_r < n_r && !stop; ++start_r) {
      if (std::llabs(start_r - start_h) > kMaxShiftDist) continue;
      std::int64_t length = 0;
      while (hyp[start_h + length] == ref[start_r + length] && length < kMaxShiftSize) {
        ++length;

        // Evaluate candidate (start_h, start_r, length).
        bool hyp_wrong = false;
        for (std::int64_t k = start_h; k < start_h + length; ++k) hyp_wrong = hyp_wrong || align.hyp_err[k];
        bool ref_wrong = false;
        for (std::int64_t k = start_r; k < start_r + length; ++k) ref_wrong = ref_wrong || align.ref_err[k];
        const std::int64_t aligned = align.ref_to_hyp.at(start_r);
        if (hyp_wrong && ref_wrong && !(start_h <= aligned && aligned < start_h + length)) {
          std::int64_t prev_idx = -1;
          for (std::int64_t offset = -1; offset < length; ++offset) {
            std::int64_t idx = 0;
            if (start_r + offset == -1) {
              idx = 0;
            } else if (auto it = align.ref_to_hyp.find(start_r + offset); it != align.ref_to_hyp.end()) {
              idx = it->second + 1;
            } else {
              break;
            }
            if (idx == prev_idx) continue;
            prev_idx = idx;

            Words shifted = perform_shift(hyp, static_cast<std::size_t>(start_h), static_cast<std::size_t>(length),
                                          static_cast<std::size_t>(idx));
            const std::int64_t gain = pre_score - ed(shifted).first;
            auto cand = std::make_tuple(gain, length, -start_h, -idx, std::move(shifted));
            ++checked;
            if (!best || cand > *best) best = std::move(cand);
          }
          // Only pairs that pass the filters reach the candidate cap check.
          if (checked >= kMaxShiftCandidates) {
            stop = true;
            break;
          }
        }

        if (n_h == start_h + length || n_r == start_r + length) break;
      }
    }
  }

  if (!best) return {0, hyp, checked};
  return {std::get<0>(*best), std::move(std::get<4>(*best)), checked};
}

}  // namespace

TerResult translation_edit_rate(std::span<const std::string> hyp, std::span<const std::string> ref) {
  TerResult result;
  result.ref_len = static_cast<std::int64_t>(ref.size());
  if (ref.empty()) {
    result.edits = static_cast<std::int64_t>(hyp.size());
    return result;
  }
  const BeamEditDistance ed(ref);
  Words words(hyp.begin(), hyp.end());
  int checked = 0;
  for (;;) {
    auto shift = best_shift(words, ref, ed, checked);
    checked = shift.checked;
    if (checked >= kMaxShiftCandidates) break;
    if (shift.gain <= 0) break;
    ++result.shifts;
    words = std::move(shift.words);
  }
  result.edits = result.shifts + ed(words).first;
  return result;
}

Ter::Ter(TerOptions opts) : opts_(opts) {}

Stats Ter::segment_stats(std::string_view hyp, std::span<const std::string> refs) const {
  if (refs.empty()) throw Error(ErrorCode::EmptyInput, "ter: segment has no references");
  const auto hyp_words = unicode::split_whitespace(tercom_tokenize(unicode::rstrip(hyp), opts_));
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  std::int64_t ref_len_sum = 0;
  for (const auto& r : refs) {
    const auto ref_words = unicode::split_whitespace(tercom_tokenize(unicode::rstrip(r), opts_));
    const auto res = translation_edit_rate(hyp_words, ref_words);
    ref_len_sum += res.ref_len;
    best = std::min(best, res.edits);
  }
  return {best, ref_len_sum, static_cast<std::int64_t>(refs.size())};
}

namespace {
double ter_value(double edits, double ref_len) {
  double score = 0.0;
  if (ref_len > 0) {
    score = edits / ref_len;
  } else if (edits > 0) {
    score = 1.0;
  }
  return 100 * score;
}
}  // namespace

double Ter::segment_score(std::span<const std::int64_t> stats) const {
  const double avg = static_cast<double>(stats[1]) / static_cast<double>(stats[2]);
  return ter_value(static_cast<double>(stats[0]), avg);
}

double Ter::corpus_score(std::span<const Stats> stats, std::span<const std::uint32_t> weights) const {
  // Average reference lengths are pooled per reference count so that the
  // corpus value is exact and independent of segment order.
  std::int64_t edits = 0;
  std::map<std::int64_t, std::int64_t> len_by_refs;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const std::int64_t w = weights.empty() ? 1 : weights[i];
    if (w == 0) continue;
    edits += w * stats[i][0];
    len_by_refs[stats[i][2]] += w * stats[i][1];
  }
  double ref_len = 0.0;
  for (const auto& [k, total] : len_by_refs) ref_len += static_cast<double>(total) / static_cast<double>(k);
  return ter_value(static_cast<double>(edits), ref_len);
}

nlohmann::json Ter::details(std::span<const std::int64_t> pooled) const {
  return {{"edits", pooled[0]}, {"ref_len_sum", pooled[1]}, {"num_refs", pooled[2]}};
}

nlohmann::json Ter::options_json() const {
  return {{"normalized", opts_.normalized}, {"no_punct", opts_.no_punct}, {"case_sensitive", opts_.case_sensitive}};
}

}  // namespace mtlens::metrics
