#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/corpus.hpp"
#include "mtlens/overlap_metrics.hpp"

namespace mtlens::gender {

// ---------------------------------------------------------------------------
// MuST-SHE
// ---------------------------------------------------------------------------

struct TermPair {
  std::string correct_form;
  std::string wrong_form;
};

struct MustSheSegment {
  std::string segment_id;
  std::vector<TermPair> term_pairs;
  std::string category;
};

enum class TermOutcome { Correct, Wrong, OutOfCoverage };
std::string_view to_string(TermOutcome o);

struct TermCounts {
  int n_terms = 0;
  int correct = 0;
  int wrong = 0;
  /// correct / (correct + wrong); absent when no term was found.
  std::optional<double> accuracy;
  double coverage = 0.0;
};

struct MustSheSegmentResult {
  std::string segment_id;
  std::string category;
  std::vector<TermOutcome> outcomes;
  TermCounts counts;
};

struct MustSheReport {
  TermCounts overall;
  std::map<std::string, TermCounts> by_category;
  std::vector<MustSheSegmentResult> segments;
};

/// Classifies one term pair per entry, in order, against the hypothesis.
/// Matching is on lowercased, punctuation-stripped tokens; a multi-token form
/// must be contiguous and every hypothesis token backs at most one match.
/// When both forms are present the pair is wrong.
std::vector<TermOutcome> classify_terms(std::string_view hyp, const std::vector<TermPair>& pairs);

/// `hyps[i]` belongs to `segments[i]`. Throws AlignmentError.
MustSheReport mustshe_score(const std::vector<std::string>& hyps, const std::vector<MustSheSegment>& segments);

// ---------------------------------------------------------------------------
// MMHB
// ---------------------------------------------------------------------------

inline constexpr const char* kVariants[] = {"feminine", "masculine", "neutral"};

struct MmhbGroup {
  std::string pattern_id;
  /// Variant name -> segment ids.
  std::map<std::string, std::vector<std::string>> variants;
  std::string axis;  // optional, used for axis x variant rows
};

struct MmhbRow {
  std::string variant;
  std::size_t n_segments = 0;
  double chrf = 0.0;
};

struct MmhbGap {
  std::string name;  // "masculine-feminine" etc.
  double value = 0.0;
};

struct MmhbReport {
  std::vector<MmhbRow> rows;
  std::vector<MmhbGap> gaps;
  /// Only filled when requested: axis -> rows for that axis.
  std::map<std::string, std::vector<MmhbRow>> by_axis;
  std::vector<std::string> warnings;
};

struct MmhbOptions {
  metrics::ChrfOptions chrf;
  bool axis_crosses = false;
};

/// Corpus chrF per variant subset, plus masculine-feminine,
/// masculine-neutral and feminine-neutral gaps. Unknown ids raise
/// AlignmentError; all variants empty raises MissingVariant.
MmhbReport mmhb_score(const std::vector<std::string>& ids, const std::vector<std::string>& hyps,
                      const std::vector<std::vector<std::string>>& refs, const std::vector<MmhbGroup>& groups,
                      const MmhbOptions& opts = {});

// ---------------------------------------------------------------------------
// MT-GenEval
// ---------------------------------------------------------------------------

enum class GenEvalMode { Sentence, Contextual };
std::string_view to_string(GenEvalMode m);

struct GenEvalItem {
  std::string segment_id;
  GenEvalMode mode = GenEvalMode::Sentence;
  std::optional<std::string> context;
  std::string correct_ref;
  std::string contrastive_ref;
  std::string stereotype_group;  // contextual items only
};

struct Accuracy {
  int n = 0;
  int correct = 0;
  std::optional<double> value;
};

struct GenEvalReport {
  Accuracy overall;
  std::map<std::string, Accuracy> by_mode;
  std::map<std::string, Accuracy> by_stereotype;
  std::vector<bool> item_correct;
};

/// Tokens of the contrastive reference that the correct one lacks.
std::vector<std::string> contrastive_unique_tokens(const GenEvalItem& item);
bool geneval_correct(std::string_view hyp, const GenEvalItem& item);

/// `hyps[i]` belongs to `items[i]`. Throws AlignmentError, ValidationError.
GenEvalReport geneval_score(const std::vector<std::string>& hyps, const std::vector<GenEvalItem>& items);

// ---------------------------------------------------------------------------
// Corpus metadata readers (`meta.tsv` columns)
// ---------------------------------------------------------------------------

/// `term_pairs`, optional `category`.
std::vector<MustSheSegment> mustshe_segments(const corpus::ParallelCorpus& c);
/// `pattern_id`, `gender_variant`, optional `axis`.
std::vector<MmhbGroup> mmhb_groups(const corpus::ParallelCorpus& c);
/// `contrastive_ref`, optional `context` and `stereotype_group`; the first
/// reference is the correct one.
std::vector<GenEvalItem> geneval_items(const corpus::ParallelCorpus& c);

nlohmann::json to_json(const MustSheReport& r);
nlohmann::json to_json(const MmhbReport& r);
nlohmann::json to_json(const GenEvalReport& r);

}  // namespace mtlens::gender
