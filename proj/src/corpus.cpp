#include "mtlens/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mtlens/errors.hpp"
#include "mtlens/unicode.hpp"

namespace fs = std::filesystem;

namespace mtlens::corpus {
namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) { return ascii_lower(a) == ascii_lower(b); }

std::vector<std::string> split_fields(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string join(const std::vector<std::string>& parts, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out += '_';
    out += parts[i];
  }
  return out;
}

bool all_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c); });
}

// Consumes a language code starting at fields[pos]: a bare code, or a
// FLORES-style `xxx_Scrp` pair.
std::string take_language(const std::vector<std::string>& fields, std::size_t& pos,
                          std::size_t needed_after) {
  std::string code = fields[pos++];
  if (code.size() == 3 && pos < fields.size() && fields[pos].size() == 4 && all_alpha(fields[pos]) &&
      find_dataset(ascii_lower(fields[pos])) == nullptr && fields.size() - (pos + 1) >= needed_after) {
    code += '_';
    code += fields[pos++];
  }
  return code;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::General: return "general";
    case TaskKind::Toxicity: return "toxicity";
    case TaskKind::MustShe: return "must_she";
    case TaskKind::Mmhb: return "mmhb";
    case TaskKind::GenEval: return "geneval";
    case TaskKind::Perturbation: return "perturbations";
  }
  return "general";
}

const std::vector<DatasetInfo>& dataset_registry() {
  static const std::vector<DatasetInfo> registry{
      {"flores", TaskKind::General},
      {"ntrex", TaskKind::General},
      {"tatoeba", TaskKind::General},
      {"nteu", TaskKind::General},
      {"hb", TaskKind::Toxicity, true, true},
      {"must_she", TaskKind::MustShe},
      {"mmhb", TaskKind::Mmhb},
      {"geneval", TaskKind::GenEval},
      {"perturbations", TaskKind::Perturbation},
  };
  return registry;
}

const DatasetInfo* find_dataset(std::string_view name) {
  for (const auto& d : dataset_registry()) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

std::string TaskId::canonical() const {
  std::string out = ascii_lower(src_lang) + "_" + ascii_lower(tgt_lang) + "_";
  const auto* info = find_dataset(dataset);
  if (info != nullptr && info->qualifier_first) {
    if (split) out += *split + "_";
    out += dataset;
  } else {
    out += dataset;
    if (split) out += "_" + *split;
  }
  return out;
}

TaskKind TaskId::kind() const {
  const auto* info = find_dataset(dataset);
  return info ? info->kind : TaskKind::General;
}

bool TaskId::reference_free_allowed() const {
  const auto* info = find_dataset(dataset);
  return info != nullptr && info->reference_free;
}

bool operator==(const TaskId& a, const TaskId& b) {
  return iequals(a.src_lang, b.src_lang) && iequals(a.tgt_lang, b.tgt_lang) && a.dataset == b.dataset &&
         a.split == b.split;
}

TaskId parse_task_name(std::string_view name) {
  const std::string trimmed = trim(name);
  if (trimmed.empty()) throw Error(ErrorCode::MalformedTaskName, "empty task name");
  std::vector<std::string> fields;
  for (auto& f : split_fields(trimmed, '_')) {
    if (!f.empty()) fields.push_back(std::move(f));
  }
  if (fields.size() < 3) {
    throw Error(ErrorCode::MalformedTaskName,
                "'" + trimmed + "' needs {src}_{tgt}_{dataset}");
  }

  TaskId task;
  std::size_t pos = 0;
  task.src_lang = take_language(fields, pos, 2);
  task.tgt_lang = take_language(fields, pos, 1);
  if (pos >= fields.size()) {
    throw Error(ErrorCode::MalformedTaskName, "'" + trimmed + "' has no dataset field");
  }
  if (iequals(task.src_lang, task.tgt_lang)) {
    throw Error(ErrorCode::MalformedTaskName, "source and target language are both '" + task.src_lang + "'");
  }

  std::vector<std::string> rest;
  for (std::size_t i = pos; i < fields.size(); ++i) rest.push_back(ascii_lower(fields[i]));

  if (rest.back() == "hb") {
    task.dataset = "hb";
    if (rest.size() > 1) task.split = join(rest, 0, rest.size() - 1);
    return task;
  }
  // Longest registered dataset prefix, so `must_she` wins over `must`.
  std::size_t best = 0;
  for (std::size_t len = 1; len <= rest.size(); ++len) {
    const auto candidate = join(rest, 0, len);
    const auto* info = find_dataset(candidate);
    if (info != nullptr && !info->qualifier_first) best = len;
  }
  if (best > 0) {
    task.dataset = join(rest, 0, best);
    if (best < rest.size()) task.split = join(rest, best, rest.size());
    return task;
  }
  task.dataset = rest.front();
  if (rest.size() > 1) task.split = join(rest, 1, rest.size());
  task.unregistered = true;
  return task;
}

std::vector<std::string> HypothesisSet::texts() const {
  std::vector<std::string> out;
  out.reserve(hypotheses.size());
  for (const auto& h : hypotheses) out.push_back(h.text);
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingDataset, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();
  if (!unicode::is_valid_utf8(data)) {
    throw Error(ErrorCode::EncodingError, path.string() + " is not valid UTF-8");
  }
  std::vector<std::string> lines = split_fields(data, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

fs::path resolve_dataset_dir(const TaskId& task, const fs::path& root) {
  std::vector<fs::path> candidates;
  candidates.push_back(root / task.canonical());
  std::string pair = ascii_lower(task.src_lang) + "_" + ascii_lower(task.tgt_lang);
  if (task.split) candidates.push_back(root / task.dataset / (pair + "_" + *task.split));
  candidates.push_back(root / task.dataset / pair);
  candidates.push_back(root / task.dataset);
  candidates.push_back(root);
  for (const auto& c : candidates) {
    std::error_code ec;
    if (fs::is_regular_file(c / "source.txt", ec)) return c;
  }
  throw Error(ErrorCode::MissingDataset,
              "no source.txt for task " + task.canonical() + " under " + root.string());
}

ParallelCorpus load_corpus(const TaskId& task, const fs::path& root) {
  const fs::path dir = resolve_dataset_dir(task, root);
  const auto sources = read_lines(dir / "source.txt");

  std::vector<std::vector<std::string>> refs;
  for (int k = 0;; ++k) {
    const fs::path ref = dir / ("ref." + std::to_string(k) + ".txt");
    std::error_code ec;
    if (!fs::is_regular_file(ref, ec)) break;
    auto lines = read_lines(ref);
    if (lines.size() != sources.size()) {
      throw Error(ErrorCode::AlignmentError, ref.filename().string() + " has " + std::to_string(lines.size()) +
                                                 " lines, source.txt has " + std::to_string(sources.size()));
    }
    refs.push_back(std::move(lines));
  }
  if (refs.empty() && !task.reference_free_allowed()) {
    throw Error(ErrorCode::MissingDataset, "no ref.0.txt in " + dir.string());
  }

  ParallelCorpus corpus;
  corpus.task = task;
  corpus.reference_free = refs.empty();
  corpus.segments.resize(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto& seg = corpus.segments[i];
    seg.id = std::to_string(i + 1);
    seg.source = sources[i];
    for (const auto& r : refs) seg.references.push_back(r[i]);
  }

  const fs::path meta = dir / "meta.tsv";
  std::error_code ec;
  if (fs::is_regular_file(meta, ec)) {
    const auto lines = read_lines(meta);
    if (!lines.empty()) {
      const auto header = split_fields(lines.front(), '\t');
      const auto line_col = std::find(header.begin(), header.end(), "line");
      for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto cells = split_fields(lines[r], '\t');
        std::size_t index = r - 1;
        if (line_col != header.end()) {
          const auto col = static_cast<std::size_t>(line_col - header.begin());
          try {
            index = std::stoul(col < cells.size() ? cells[col] : std::string{}) - 1;
          } catch (const std::exception&) {
            throw Error(ErrorCode::SchemaError, "meta.tsv row " + std::to_string(r + 1) + ": bad line number");
          }
        }
        if (index >= corpus.segments.size()) {
          throw Error(ErrorCode::AlignmentError,
                      "meta.tsv row " + std::to_string(r + 1) + " points past the last segment");
        }
        auto& md = corpus.segments[index].metadata;
        for (std::size_t c = 0; c < header.size(); ++c) {
          if (header[c] == "line") continue;
          md[header[c]] = c < cells.size() ? cells[c] : std::string{};
        }
        if (auto it = md.find("id"); it != md.end() && !it->second.empty()) {
          corpus.segments[index].id = it->second;
        }
      }
    }
  }

  std::set<std::string> seen;
  for (const auto& seg : corpus.segments) {
    if (!seen.insert(seg.id).second) throw Error(ErrorCode::AlignmentError, "duplicate segment id " + seg.id);
  }
  return corpus;
}

HypothesisSet align_hypotheses(const ParallelCorpus& corpus, std::vector<std::string> lines,
                               const std::string& model_id) {
  // One stray blank line at the end of the file is tolerated.
  if (lines.size() == corpus.size() + 1 && lines.back().empty()) lines.pop_back();
  if (lines.size() != corpus.size()) {
    throw Error(ErrorCode::AlignmentError, "hypotheses have " + std::to_string(lines.size()) +
                                               " lines, corpus has " + std::to_string(corpus.size()) + " segments");
  }
  for (const auto& l : lines) {
    if (!unicode::is_valid_utf8(l)) throw Error(ErrorCode::EncodingError, "hypothesis is not valid UTF-8");
  }
  HypothesisSet set;
  set.task = corpus.task;
  set.model_id = model_id;
  set.hypotheses.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    set.hypotheses.push_back({corpus.segments[i].id, std::move(lines[i])});
  }
  return set;
}

HypothesisSet align_hypotheses(const ParallelCorpus& corpus, const fs::path& hyp_file,
                               const std::string& model_id) {
  std::error_code ec;
  if (!fs::is_regular_file(hyp_file, ec)) {
    throw Error(ErrorCode::MissingHypotheses, "hypothesis file not found: " + hyp_file.string());
  }
  return align_hypotheses(corpus, read_lines(hyp_file), model_id);
}

std::vector<std::pair<std::string, std::string>> parse_term_pairs(std::string_view cell) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : split_fields(cell, ';')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    const auto bar = t.find('|');
    if (bar == std::string::npos) {
      throw Error(ErrorCode::SchemaError, "term pair '" + t + "' is not correct|wrong");
    }
    out.emplace_back(trim(t.substr(0, bar)), trim(t.substr(bar + 1)));
  }
  return out;
}

}  // namespace mtlens::corpus
