#include "mtlens/significance.hpp"

#include <algorithm>
#include <numeric>

#include "mtlens/errors.hpp"
#include "mtlens/metric_registry.hpp"
#include "mtlens/parallel.hpp"
#include "mtlens/rng.hpp"

namespace mtlens::significance {
namespace {

struct Prepared {
  std::vector<metrics::Stats> stats;
  std::vector<double> values;
  std::unique_ptr<metrics::PooledMetric> scorer;

  double score(std::span<const std::uint32_t> w) const {
    if (scorer) return scorer->corpus_score(stats, w);
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += (w.empty() ? 1.0 : w[i]) * values[i];
    return s / static_cast<double>(values.size());
  }
};

Prepared prepare(const MetricSamples& s, const std::vector<std::size_t>& order, bool pooled, const std::string& metric) {
  Prepared p;
  if (pooled) {
    if (s.stats.size() != s.ids.size()) {
      throw Error(ErrorCode::ValidationError, s.model_id + ": " + metric + " needs per-segment statistics");
    }
    p.scorer = metrics::make_pooled_metric(metric, s.options);
    for (auto i : order) p.stats.push_back(s.stats[i]);
  } else {
    if (s.values.size() != s.ids.size()) {
      throw Error(ErrorCode::ValidationError, s.model_id + ": " + metric + " needs per-segment scores");
    }
    for (auto i : order) p.values.push_back(s.values[i]);
  }
  return p;
}

std::vector<std::size_t> sorted_order(const std::vector<std::string>& ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return ids[x] < ids[y]; });
  return order;
}

}  // namespace

MetricSamples samples_from_run(const EvalRun& run, const std::string& metric) {
  const auto name = canonical_metric_name(metric);
  const auto entry = run.metrics.find(name);
  if (entry == run.metrics.end() || entry->second.corpus_only || !run.has_segment_metric(name)) {
    throw Error(ErrorCode::MetricMissing, "run " + run.model_id + " has no per-segment " + name + " scores");
  }
  MetricSamples s;
  s.model_id = run.model_id;
  s.options = entry->second.options;
  const bool pooled = metrics::is_pooled_metric(name) && entry->second.aggregation == "pooled";
  for (const auto& seg : run.segments) {
    s.ids.push_back(seg.id);
    if (pooled) {
      const auto it = seg.stats.find(name);
      if (it == seg.stats.end()) {
        throw Error(ErrorCode::MetricMissing, "segment " + seg.id + " has no " + name + " statistics");
      }
      s.stats.push_back(it->second);
    } else {
      s.values.push_back(seg.scores.at(name));
    }
  }
  return s;
}

std::vector<std::uint32_t> resample_weights(std::uint64_t seed, std::uint64_t r, std::size_t n) {
  std::vector<std::uint32_t> w(n, 0);
  SplitMix64 rng(stream_key(seed, r));
  for (std::size_t k = 0; k < n; ++k) ++w[rng.bounded(n)];
  return w;
}

SignificanceReport paired_bootstrap(const MetricSamples& a, const MetricSamples& b, const std::string& metric,
                                    const BootstrapOptions& opts) {
  const auto name = canonical_metric_name(metric);
  const auto* info = find_metric(name);
  if (!info) throw Error(ErrorCode::ValidationError, "unknown metric '" + metric + "'");
  if (opts.n_resamples == 0) throw Error(ErrorCode::ValidationError, "n_resamples must be positive");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw Error(ErrorCode::ValidationError, "alpha must be in (0, 1)");

  const auto oa = sorted_order(a.ids);
  const auto ob = sorted_order(b.ids);
  std::vector<std::string> ids_a, ids_b;
  for (auto i : oa) ids_a.push_back(a.ids[i]);
  for (auto i : ob) ids_b.push_back(b.ids[i]);
  if (std::adjacent_find(ids_a.begin(), ids_a.end()) != ids_a.end() ||
      std::adjacent_find(ids_b.begin(), ids_b.end()) != ids_b.end()) {
    throw Error(ErrorCode::AlignmentError, "duplicate segment ids");
  }
  if (ids_a != ids_b) {
    std::vector<std::string> only_a, only_b;
    std::set_difference(ids_a.begin(), ids_a.end(), ids_b.begin(), ids_b.end(), std::back_inserter(only_a));
    std::set_difference(ids_b.begin(), ids_b.end(), ids_a.begin(), ids_a.end(), std::back_inserter(only_b));
    throw Error(ErrorCode::AlignmentError, "segment ids differ: " + std::to_string(only_a.size()) + " only in " +
                                               a.model_id + ", " + std::to_string(only_b.size()) + " only in " +
                                               b.model_id);
  }
  const std::size_t n = ids_a.size();
  if (n < 2) throw Error(ErrorCode::DegenerateInput, "need at least 2 segments, got " + std::to_string(n));

  const bool pooled = info->aggregation == Aggregation::Pooled && metrics::is_pooled_metric(name);
  const auto pa = prepare(a, oa, pooled, name);
  const auto pb = prepare(b, ob, pooled, name);
  const double sign = info->orientation == Orientation::LowerBetter ? -1.0 : 1.0;

  std::vector<double> delta(opts.n_resamples);
  parallel_for(opts.n_resamples, [&](std::size_t r) {
    const auto w = resample_weights(opts.seed, r, n);
    delta[r] = sign * pa.score(w) - sign * pb.score(w);
  });

  SignificanceReport rep;
  rep.metric = name;
  rep.model_a = a.model_id;
  rep.model_b = b.model_id;
  rep.n_resamples = opts.n_resamples;
  rep.seed = opts.seed;
  rep.alpha = opts.alpha;
  rep.n_segments = n;
  rep.score_a = pa.score({});
  rep.score_b = pb.score({});
  double sum = 0.0;
  std::size_t wins_a = 0, wins_b = 0;
  for (double d : delta) {
    sum += d;
    wins_a += d > 0.0;
    wins_b += d < 0.0;
  }
  const double total = static_cast<double>(opts.n_resamples);
  rep.delta_mean = sum / total;
  rep.win_fraction_a = static_cast<double>(wins_a) / total;
  rep.win_fraction_b = static_cast<double>(wins_b) / total;
  rep.p_value = std::max(1.0 - std::max(rep.win_fraction_a, rep.win_fraction_b), 1.0 / total);
  rep.significant = rep.p_value < opts.alpha;
  return rep;
}

SignificanceReport compare_runs(const EvalRun& a, const EvalRun& b, const std::string& metric,
                                const BootstrapOptions& opts) {
  if (a.task != b.task) {
    throw Error(ErrorCode::AlignmentError, "runs are on different tasks (" + a.task + ", " + b.task + ")");
  }
  const auto sa = samples_from_run(a, metric);
  const auto sb = samples_from_run(b, metric);
  return paired_bootstrap(sa, sb, metric, opts);
}

nlohmann::json to_json(const SignificanceReport& r) {
  return {{"metric", r.metric},
          {"model_a", r.model_a},
          {"model_b", r.model_b},
          {"n_resamples", r.n_resamples},
          {"seed", r.seed},
          {"alpha", r.alpha},
          {"n_segments", r.n_segments},
          {"score_a", r.score_a},
          {"score_b", r.score_b},
          {"delta_mean", r.delta_mean},
          {"win_fraction_a", r.win_fraction_a},
          {"win_fraction_b", r.win_fraction_b},
          {"p_value", r.p_value},
          {"significant", r.significant}};
}

}  // namespace mtlens::significance
