#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/corpus.hpp"

namespace mtlens::toxicity {

enum class MatchMode { Token, Substring };

std::optional<MatchMode> parse_match_mode(std::string_view s);

struct Lexicon {
  std::string language;
  /// Lowercased, deduplicated, in file order.
  std::vector<std::string> entries;
  MatchMode mode = MatchMode::Token;
};

/// Builds a lexicon; entries are lowercased. Throws ValidationError on empty
/// lexicons or blank entries.
Lexicon make_lexicon(std::vector<std::string> entries, MatchMode mode = MatchMode::Token, std::string language = "");
/// One term per line, `#` starts a comment line.
Lexicon load_lexicon(const std::filesystem::path& path, MatchMode mode = MatchMode::Token, std::string language = "");

struct TermMatch {
  std::string term;
  int count = 0;

  bool operator==(const TermMatch&) const = default;
};

/// Token mode: lowercase, split on whitespace, strip punctuation at token
/// edges; a multi-word term must occupy consecutive tokens with no
/// punctuation between them. Substring mode: lowercase substring search.
std::vector<TermMatch> etox_match(std::string_view hyp, const Lexicon& lexicon);

/// source_toxic[i] = scores[i] >= threshold. Throws MissingScores when any
/// id lacks a score.
std::vector<bool> filter_sources(const std::vector<std::string>& ids, const std::map<std::string, double>& scores,
                                 double threshold);

struct Thresholds {
  double mutox = 0.5;
  double detoxify = 0.5;
};

struct ToxicityInput {
  std::string id;
  std::string axis;  // empty means "unspecified"
  std::string hypothesis;
  /// Classifier scores of the hypothesis (mutox, detoxify).
  std::map<std::string, double> classifier_scores;
  std::optional<double> qe_score;
};

struct ToxicityRecord {
  std::string segment_id;
  std::string axis;
  bool source_toxic = false;
  std::vector<TermMatch> matched_terms;
  std::map<std::string, double> classifier_scores;
  std::optional<double> qe_score;
  /// Which detectors fired: "etox", "mutox", "detoxify".
  std::vector<std::string> detectors;
};

bool added_toxicity(const ToxicityRecord& r, const Thresholds& t);

struct AxisStats {
  int n_segments = 0;  // evaluated (non source-toxic)
  int n_source_toxic = 0;
  int n_added_toxic = 0;
  double rate = 0.0;
};

struct DetectorSummary {
  int n_flagged = 0;
  double rate = 0.0;
  std::optional<double> mean_qe;
};

struct ToxicityReport {
  std::map<std::string, AxisStats> per_axis;
  int n_segments = 0;
  int n_source_toxic = 0;
  int n_added_toxic = 0;
  double overall_rate = 0.0;
  /// Mean QE over flagged segments; absent when nothing is flagged.
  std::optional<double> mean_qe;
  /// Per detector and "union".
  std::map<std::string, DetectorSummary> by_detector;
  std::vector<ToxicityRecord> flagged;
  Thresholds thresholds;
  std::string qe_metric;
};

/// `source_toxic` is aligned with `inputs` (empty means none excluded).
ToxicityReport added_toxicity_report(const std::vector<ToxicityInput>& inputs, const std::vector<bool>& source_toxic,
                                     const Lexicon& lexicon, const Thresholds& thresholds = {},
                                     const std::string& qe_metric = "comet_kiwi");

nlohmann::json to_json(const ToxicityReport& r);

}  // namespace mtlens::toxicity
