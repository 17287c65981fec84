#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/overlap_metrics.hpp"

// The canonical run file: one JSON document per (system, task) evaluation.

namespace mtlens {

inline constexpr int kSchemaVersion = 1;

enum class Severity { Minor, Major, Critical };

std::string_view to_string(Severity s);
/// Throws SchemaError on unknown labels.
Severity parse_severity(std::string_view s);

/// Character (code point) range [start, end) into the hypothesis.
struct ErrorSpan {
  std::int64_t start = 0;
  std::int64_t end = 0;
  Severity severity = Severity::Minor;

  bool operator==(const ErrorSpan&) const = default;
};

struct SegmentRecord {
  std::string id;
  std::string source;
  std::vector<std::string> references;
  std::string hypothesis;
  std::map<std::string, double> scores;
  /// Sufficient statistics of pooled metrics.
  std::map<std::string, metrics::Stats> stats;
  std::map<std::string, std::vector<ErrorSpan>> error_spans;
  std::map<std::string, std::string> metadata;
  /// Fields this version does not know about, kept for round-trips.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const SegmentRecord&) const = default;
};

/// Provenance of one metric column.
struct MetricEntry {
  std::string source = "native";  // native | file | plugin
  nlohmann::json options = nlohmann::json::object();
  std::string aggregation = "pooled";
  std::string orientation = "higher";
  /// External file carried only a system score, no segment column.
  bool corpus_only = false;
  std::optional<double> declared_corpus;
  /// Header of the external score file, verbatim.
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::string> warnings;

  bool operator==(const MetricEntry&) const = default;
};

struct EvalRun {
  int schema_version = kSchemaVersion;
  std::string config_hash;
  std::string created_at;
  std::string task;
  std::string model_id;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, MetricEntry> metrics;
  std::map<std::string, double> aggregates;
  std::map<std::string, nlohmann::json> details;
  std::vector<SegmentRecord> segments;
  nlohmann::json task_reports = nlohmann::json::object();
  std::vector<std::string> warnings;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const EvalRun&) const = default;

  bool has_metric(std::string_view m) const { return metrics.count(std::string(m)) != 0; }
  /// Metric present with a value on every segment.
  bool has_segment_metric(std::string_view m) const;
  const SegmentRecord* find_segment(std::string_view id) const;
};

nlohmann::json to_json(const ErrorSpan& s);
ErrorSpan span_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SegmentRecord& s);
SegmentRecord segment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalRun& run);
/// Throws SchemaError on missing or mistyped fields.
EvalRun run_from_json(const nlohmann::json& j);

/// Run summary without segments (GET /runs/{id}).
nlohmann::json run_summary(const EvalRun& run, std::string_view run_id);

/// Aggregation of per-segment values: "mean" (default) or "median".
double aggregate_values(const std::vector<double>& values, std::string_view aggregation);

/// Aggregate recomputed from the stored segment columns.
std::optional<double> recompute_aggregate(const EvalRun& run, const std::string& metric);
/// Stored aggregates that disagree with recomputation.
std::vector<std::string> consistency_warnings(const EvalRun& run);

/// Writes to a hidden temporary file in the target directory, fsyncs and
/// renames over `path`. On any failure the target is untouched.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Test hook called between write stages ("partial", "written", "synced").
/// Used to inject crashes.
void set_write_fault_hook(std::function<void(std::string_view stage)> hook);

void save_run(const EvalRun& run, const std::filesystem::path& path);
/// Loads and checks self-consistency. Drift is reported through `warnings`.
EvalRun load_run(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

/// `{hash12}-{created_at compact}.json`; an existing name gets `-1`, `-2`...
std::filesystem::path unique_run_path(const std::filesystem::path& dir, const EvalRun& run);

/// Hex SHA-256 of the canonical serialization.
std::string sha256_hex(std::string_view data);

/// UTC now as `YYYY-MM-DDTHH:MM:SSZ`.
std::string utc_timestamp();

}  // namespace mtlens
