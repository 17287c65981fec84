#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/perturb.hpp"
#include "mtlens/results.hpp"
#include "mtlens/toxicity.hpp"

namespace mtlens::runner {

struct PluginConfig {
  std::string metric;
  std::string command;
  double timeout_s = 3600;
  std::map<std::string, std::string> env;
};

struct ToxicityConfig {
  std::filesystem::path lexicon;
  toxicity::MatchMode match_mode = toxicity::MatchMode::Token;
  /// TSV `id<TAB>score` with source-side classifier scores; optional.
  std::optional<std::filesystem::path> source_scores;
  double source_threshold = 0.5;
  toxicity::Thresholds thresholds;
  std::string qe_metric = "comet_kiwi";
};

struct PerturbationConfig {
  perturb::NoiseKind kind = perturb::NoiseKind::Swap;
  double lambda = 0.0;
  std::filesystem::path hypotheses;
};

/// Mirrors the YAML config file. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
  std::string task;
  std::string model_id;
  std::filesystem::path data_root;
  std::filesystem::path hypotheses;
  std::vector<std::string> metrics;
  std::map<std::string, nlohmann::json> metric_options;
  std::vector<std::filesystem::path> external_scores;
  std::vector<PluginConfig> plugins;
  std::optional<ToxicityConfig> toxicity;
  std::vector<PerturbationConfig> perturbations;
  bool mmhb_axis_crosses = false;
  /// Recorded for provenance only.
  std::string prompt_template;
  std::uint64_t seed = 42;
  std::filesystem::path output;
  /// Directory relative paths were resolved against; paths in the stored
  /// snapshot are written relative to it.
  std::filesystem::path base_dir;
};

/// Throws ValidationError on unknown keys or bad values.
RunConfig parse_config(std::string_view yaml, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Checks referenced files and metric names before any computation.
/// Throws MissingHypotheses, MissingDataset, ValidationError.
void validate_config(const RunConfig& cfg);

/// Canonical snapshot stored in the run file.
nlohmann::json config_json(const RunConfig& cfg);
/// sha256 over the canonical JSON of {task, model_id, config}.
std::string config_hash(const RunConfig& cfg);

struct RunOptions {
  /// Fixed timestamp (tests, reproducible builds); empty means now.
  std::string created_at;
  bool write = true;
};

struct RunOutcome {
  EvalRun run;
  std::filesystem::path path;  // empty when not written
};

/// Loads, scores, attaches task reports and writes the run atomically.
RunOutcome run_task(const RunConfig& cfg, const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Length breakdown
// ---------------------------------------------------------------------------

struct LengthBucket {
  int lo = 0;
  std::optional<int> hi;  // inclusive; absent for the open last bucket
  std::size_t n = 0;
  std::optional<double> mean;

  std::string label() const;
};

struct LengthPoint {
  std::string segment_id;
  int words = 0;
  double score = 0.0;
};

struct LengthBreakdown {
  std::string metric;
  std::vector<LengthPoint> points;
  std::vector<LengthBucket> buckets;
};

/// Bucket lower edges; the default is 1, 10, 20, 30, 40, 50 (last open).
std::vector<int> default_bucket_edges();

/// Points (source word count, segment score) and bucket means. Zero-word
/// sources fall in the first bucket. Throws MetricMissing.
LengthBreakdown length_breakdown(const EvalRun& run, const std::string& metric,
                                 const std::vector<int>& edges = default_bucket_edges());

nlohmann::json to_json(const LengthBreakdown& b);

}  // namespace mtlens::runner
