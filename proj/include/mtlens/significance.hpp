#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/overlap_metrics.hpp"
#include "mtlens/results.hpp"

namespace mtlens::significance {

/// Per-segment inputs of one system for one metric. Pooled metrics carry
/// sufficient statistics; every other metric carries segment scores.
struct MetricSamples {
  std::string model_id;
  std::vector<std::string> ids;
  std::vector<metrics::Stats> stats;
  std::vector<double> values;
  nlohmann::json options = nlohmann::json::object();
};

/// Pulls the metric column out of a run. Throws MetricMissing.
MetricSamples samples_from_run(const EvalRun& run, const std::string& metric);

struct BootstrapOptions {
  std::size_t n_resamples = 1000;
  std::uint64_t seed = 42;
  double alpha = 0.05;
};

struct SignificanceReport {
  std::string metric;
  std::string model_a;
  std::string model_b;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::size_t n_segments = 0;
  /// Full-sample system scores in the metric's own orientation.
  double score_a = 0.0;
  double score_b = 0.0;
  /// Mean of (a - b) with lower-is-better metrics negated first.
  double delta_mean = 0.0;
  double win_fraction_a = 0.0;
  double win_fraction_b = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

/// Paired bootstrap over segments sorted by id. Resample r draws n indices
/// with replacement from SplitMix64(stream_key(seed, r)); both systems see the
/// same multiset. Throws AlignmentError, DegenerateInput, ValidationError.
SignificanceReport paired_bootstrap(const MetricSamples& a, const MetricSamples& b, const std::string& metric,
                                    const BootstrapOptions& opts = {});

SignificanceReport compare_runs(const EvalRun& a, const EvalRun& b, const std::string& metric,
                                const BootstrapOptions& opts = {});

/// Index multiplicities of resample r (exposed for tests).
std::vector<std::uint32_t> resample_weights(std::uint64_t seed, std::uint64_t r, std::size_t n);

nlohmann::json to_json(const SignificanceReport& r);

}  // namespace mtlens::significance
