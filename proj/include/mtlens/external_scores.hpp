#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/results.hpp"

// Adapters for scores computed outside the harness (neural metrics,
// classifiers). Wire format is JSON Lines: one header object
//   {"metric", "model_id", "task", "aggregation", "corpus"?}
// followed by one record per segment {"id", "value", "spans"?}.

namespace mtlens::external {

struct ScoreRecord {
  std::string id;
  double value = 0.0;
  std::optional<std::vector<ErrorSpan>> spans;

  bool operator==(const ScoreRecord&) const = default;
};

struct ScoreFile {
  std::string metric;
  std::string model_id;
  std::string task;
  std::string aggregation = "mean";
  std::optional<double> corpus;
  /// Header keys beyond the ones above, preserved verbatim.
  nlohmann::json header_extra = nlohmann::json::object();
  std::vector<ScoreRecord> records;

  bool operator==(const ScoreFile&) const = default;
};

/// Throws SchemaError on malformed input. Header keys missing from the text
/// are taken from `header_defaults` when given.
ScoreFile parse_score_file(std::string_view text, const nlohmann::json& header_defaults = nlohmann::json::object());
ScoreFile read_score_file(const std::filesystem::path& path);
std::string serialize_score_file(const ScoreFile& file);

/// Sorts, merges overlaps (keeping the higher severity) and validates
/// against the hypothesis length in code points. Throws SpanOutOfRange.
std::vector<ErrorSpan> normalize_spans(std::vector<ErrorSpan> spans, std::string_view hypothesis);

struct IngestOptions {
  bool force = false;
  std::string source = "file";
};

/// Attaches the file's metric column to `run`. The id set must equal the
/// run's. Throws IdMismatch, SchemaError, DuplicateMetric, SpanOutOfRange.
void ingest_scores(EvalRun& run, const ScoreFile& file, const IngestOptions& opts = {});

/// Inverse of ingest_scores: rebuilds the score file for `metric`.
ScoreFile export_scores(const EvalRun& run, const std::string& metric);

/// Request sent to a plugin on standard input: header {task, metric}, then
/// one line per segment {id, src, ref?, hyp}.
struct PluginSegment {
  std::string id;
  std::string source;
  std::vector<std::string> references;
  std::string hypothesis;
};
std::string build_request(const std::string& task, const std::string& metric,
                          const std::vector<PluginSegment>& segments);

struct PluginSpec {
  /// Run through /bin/sh -c, environment inherited.
  std::string command;
  std::chrono::milliseconds timeout{std::chrono::seconds(3600)};
  std::map<std::string, std::string> env;
};

struct ProcessResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

/// Runs `spec.command` feeding `input` to stdin. Throws PluginTimeout (the
/// child is killed) or IoError.
ProcessResult run_process(const PluginSpec& spec, std::string_view input);

/// Runs the plugin and parses its output. Throws PluginCrash on nonzero
/// exit (message carries stderr), PluginTimeout, SchemaError. Header fields
/// the plugin leaves out default to the request's task, model and metric.
ScoreFile run_plugin(const PluginSpec& spec, const std::string& task, const std::string& model_id,
                     const std::string& metric, const std::vector<PluginSegment>& segments);

std::vector<PluginSegment> plugin_segments(const EvalRun& run);

}  // namespace mtlens::external
