#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/corpus.hpp"

namespace mtlens::perturb {

enum class NoiseKind { Swap, CharDupe, CharDrop };

std::string_view to_string(NoiseKind k);
std::optional<NoiseKind> parse_noise_kind(std::string_view s);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Swap;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

/// Throws ValidationError unless 0 <= lambda <= 1.
void validate(const NoiseSpec& spec);

/// Shortest decimal form used in file names ("0.3", "1").
std::string format_lambda(double lambda);

/// Edits one word at grapheme index `pos`. Throws WordTooShort when the word
/// has fewer than two graphemes and PositionOutOfRange for a bad `pos`.
std::string perturb_word(std::string_view word, NoiseKind kind, std::size_t pos);

/// round-half-up(lambda * n_eligible).
std::size_t noise_count(double lambda, std::size_t n_eligible);

struct AuditEntry {
  std::size_t word_index = 0;
  std::string original;
  std::string perturbed;
  std::size_t char_pos = 0;

  bool operator==(const AuditEntry&) const = default;
};

struct PerturbedSentence {
  std::string text;
  std::vector<AuditEntry> audit;  // sorted by word_index
};

/// Whitespace-delimited words with at least two graphemes are eligible; k of
/// them are drawn without replacement from the stream keyed by
/// (spec.seed, segment_index) and each gets one edit at a uniform valid
/// position. Whitespace is preserved byte for byte.
PerturbedSentence perturb_sentence(std::string_view sentence, const NoiseSpec& spec, std::uint64_t segment_index);

/// Re-applies audit entries to the clean sentence. Throws ValidationError if
/// an entry does not fit the sentence.
std::string apply_audit(std::string_view sentence, NoiseKind kind, const std::vector<AuditEntry>& audit);

struct PerturbedCorpus {
  corpus::TaskId task;
  NoiseSpec spec;
  std::vector<std::string> segment_ids;
  std::vector<std::string> sources;
  std::vector<std::vector<AuditEntry>> audit;
};

/// Perturbs every source; segment i uses stream index i.
PerturbedCorpus perturb_corpus(const corpus::ParallelCorpus& c, const NoiseSpec& spec);

struct ExportPaths {
  std::filesystem::path source;
  std::filesystem::path audit;
};

/// Writes `source.{kind}.{lambda}.txt` and `audit.{kind}.{lambda}.tsv` into `dir`.
ExportPaths export_perturbed(const PerturbedCorpus& p, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Robustness sweep
// ---------------------------------------------------------------------------

struct SweepInput {
  NoiseKind kind = NoiseKind::Swap;
  double lambda = 0.0;  // 0 marks the clean baseline
  std::filesystem::path hypotheses;
};

struct SweepRow {
  std::string kind;  // "clean" for the baseline
  double lambda = 0.0;
  std::map<std::string, double> scores;
};

struct SweepResult {
  std::optional<SweepRow> baseline;
  /// Grouped by kind (swap, chardupe, chardrop), lambda ascending.
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
};

/// Scores each hypothesis file against the corpus references with the given
/// pooled metrics. Missing files are skipped with a warning.
SweepResult robustness_sweep(const corpus::ParallelCorpus& c, const std::vector<SweepInput>& inputs,
                             const std::vector<std::string>& metrics,
                             const std::map<std::string, nlohmann::json>& metric_options = {});

/// Rows plus plot-ready series: series[metric][kind] = [[lambda, value], ...]
/// starting at the baseline when present.
nlohmann::json to_json(const SweepResult& r);

}  // namespace mtlens::perturb
