#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mtlens::corpus {

/// Which evaluator family a dataset feeds.
enum class TaskKind { General, Toxicity, MustShe, Mmhb, GenEval, Perturbation };

std::string_view to_string(TaskKind kind);

/// Registered dataset: identifier plus naming and ingestion rules.
struct DatasetInfo {
  std::string_view name;
  TaskKind kind;
  /// HolisticBias names put the axis before the dataset: `{src}_{tgt}_{axis}_hb`.
  bool qualifier_first = false;
  bool reference_free = false;
};

const std::vector<DatasetInfo>& dataset_registry();
const DatasetInfo* find_dataset(std::string_view name);

/// `{src}_{tgt}_{dataset}[_{split}]`. Language codes keep their original
/// spelling (`eng_Latn`) and compare case-insensitively.
struct TaskId {
  std::string src_lang;
  std::string tgt_lang;
  std::string dataset;
  std::optional<std::string> split;
  bool unregistered = false;

  std::string canonical() const;
  TaskKind kind() const;
  bool reference_free_allowed() const;

  friend bool operator==(const TaskId& a, const TaskId& b);
};

/// Throws Error{MalformedTaskName}.
TaskId parse_task_name(std::string_view name);

struct Segment {
  std::string id;
  std::string source;
  std::vector<std::string> references;
  std::map<std::string, std::string> metadata;

  bool operator==(const Segment&) const = default;
};

struct ParallelCorpus {
  TaskId task;
  std::vector<Segment> segments;
  bool reference_free = false;

  std::size_t size() const { return segments.size(); }
  bool operator==(const ParallelCorpus&) const = default;
};

struct Hypothesis {
  std::string id;
  std::string text;

  bool operator==(const Hypothesis&) const = default;
};

struct HypothesisSet {
  TaskId task;
  std::string model_id;
  std::vector<Hypothesis> hypotheses;

  std::vector<std::string> texts() const;
  bool operator==(const HypothesisSet&) const = default;
};

/// Reads a UTF-8 text file into lines. A final LF terminates the last line
/// rather than opening an empty one. Throws EncodingError / MissingDataset.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Resolves the dataset directory for `task` under `root`. Candidates, in
/// order: `<root>/<canonical task name>`, `<root>/<dataset>/<src>_<tgt>[_<split>]`,
/// `<root>/<dataset>`, `<root>` itself. The first containing `source.txt` wins.
std::filesystem::path resolve_dataset_dir(const TaskId& task, const std::filesystem::path& root);

/// Loads `source.txt`, `ref.0.txt`...`ref.k.txt` and optional `meta.tsv`.
ParallelCorpus load_corpus(const TaskId& task, const std::filesystem::path& root);

/// Pairs line i of `hyp_file` with segment i of `corpus`.
HypothesisSet align_hypotheses(const ParallelCorpus& corpus, const std::filesystem::path& hyp_file,
                               const std::string& model_id);
HypothesisSet align_hypotheses(const ParallelCorpus& corpus, std::vector<std::string> lines,
                               const std::string& model_id);

/// Splits the `term_pairs` style cell `a|b;c|d`.
std::vector<std::pair<std::string, std::string>> parse_term_pairs(std::string_view cell);

}  // namespace mtlens::corpus
