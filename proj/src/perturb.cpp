#include "mtlens/perturb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "mtlens/errors.hpp"
#include "mtlens/overlap_metrics.hpp"
#include "mtlens/parallel.hpp"
#include "mtlens/results.hpp"
#include "mtlens/rng.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::perturb {
namespace {

struct Piece {
  std::string text;
  bool word = false;
};

// Alternating runs of whitespace and words; concatenation gives the input.
std::vector<Piece> split_pieces(std::string_view s) {
  std::vector<Piece> out;
  const auto cps = unicode::decode(s);
  for (char32_t cp : cps) {
    const bool word = !unicode::is_space(cp);
    if (out.empty() || out.back().word != word) out.push_back({"", word});
    unicode::append_utf8(out.back().text, cp);
  }
  return out;
}

std::size_t valid_positions(NoiseKind kind, std::size_t n) { return kind == NoiseKind::Swap ? n - 1 : n; }

}  // namespace

std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Swap: return "swap";
    case NoiseKind::CharDupe: return "chardupe";
    case NoiseKind::CharDrop: return "chardrop";
  }
  return "";
}

std::optional<NoiseKind> parse_noise_kind(std::string_view s) {
  if (s == "swap") return NoiseKind::Swap;
  if (s == "chardupe") return NoiseKind::CharDupe;
  if (s == "chardrop") return NoiseKind::CharDrop;
  return std::nullopt;
}

void validate(const NoiseSpec& spec) {
  if (!(spec.lambda >= 0.0 && spec.lambda <= 1.0)) {
    throw Error(ErrorCode::ValidationError, "lambda must be in [0, 1], got " + std::to_string(spec.lambda));
  }
}

std::string format_lambda(double lambda) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, lambda);
  return std::string(buf, res.ptr);
}

std::string perturb_word(std::string_view word, NoiseKind kind, std::size_t pos) {
  auto g = unicode::graphemes(unicode::decode(word));
  if (g.size() < 2) throw Error(ErrorCode::WordTooShort, "'" + std::string(word) + "' has fewer than 2 characters");
  if (pos >= valid_positions(kind, g.size())) {
    throw Error(ErrorCode::PositionOutOfRange,
                "position " + std::to_string(pos) + " is out of range for '" + std::string(word) + "'");
  }
  switch (kind) {
    case NoiseKind::Swap: std::swap(g[pos], g[pos + 1]); break;
    case NoiseKind::CharDupe: g.insert(g.begin() + static_cast<std::ptrdiff_t>(pos), g[pos]); break;
    case NoiseKind::CharDrop: g.erase(g.begin() + static_cast<std::ptrdiff_t>(pos)); break;
  }
  std::u32string out;
  for (const auto& c : g) out += c;
  return unicode::encode(out);
}

std::size_t noise_count(double lambda, std::size_t n_eligible) {
  // The epsilon keeps exact halves such as 0.35 * 10 from rounding down.
  const double k = std::floor(lambda * static_cast<double>(n_eligible) + 0.5 + 1e-9);
  return std::min(n_eligible, static_cast<std::size_t>(std::max(0.0, k)));
}

PerturbedSentence perturb_sentence(std::string_view sentence, const NoiseSpec& spec, std::uint64_t segment_index) {
  validate(spec);
  auto pieces = split_pieces(sentence);
  std::vector<std::size_t> word_piece;  // word index -> piece index
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].word) word_piece.push_back(i);
  }
  std::vector<std::size_t> eligible;
  std::vector<std::size_t> length(word_piece.size());
  for (std::size_t w = 0; w < word_piece.size(); ++w) {
    length[w] = unicode::graphemes(unicode::decode(pieces[word_piece[w]].text)).size();
    if (length[w] >= 2) eligible.push_back(w);
  }
  const std::size_t k = noise_count(spec.lambda, eligible.size());
  PerturbedSentence out;
  if (k == 0) {
    out.text = std::string(sentence);
    return out;
  }
  SplitMix64 rng(stream_key(spec.seed, segment_index));
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.bounded(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(k);
  std::sort(eligible.begin(), eligible.end());
  for (auto w : eligible) {
    auto& text = pieces[word_piece[w]].text;
    const auto pos = static_cast<std::size_t>(rng.bounded(valid_positions(spec.kind, length[w])));
    AuditEntry e{w, text, perturb_word(text, spec.kind, pos), pos};
    text = e.perturbed;
    out.audit.push_back(std::move(e));
  }
  for (const auto& p : pieces) out.text += p.text;
  return out;
}

std::string apply_audit(std::string_view sentence, NoiseKind kind, const std::vector<AuditEntry>& audit) {
  auto pieces = split_pieces(sentence);
  std::vector<std::size_t> word_piece;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].word) word_piece.push_back(i);
  }
  for (const auto& e : audit) {
    if (e.word_index >= word_piece.size() || pieces[word_piece[e.word_index]].text != e.original) {
      throw Error(ErrorCode::ValidationError, "audit entry for word " + std::to_string(e.word_index) +
                                                  " does not match the sentence");
    }
    pieces[word_piece[e.word_index]].text = perturb_word(e.original, kind, e.char_pos);
  }
  std::string out;
  for (const auto& p : pieces) out += p.text;
  return out;
}

PerturbedCorpus perturb_corpus(const corpus::ParallelCorpus& c, const NoiseSpec& spec) {
  validate(spec);
  PerturbedCorpus p;
  p.task = c.task;
  p.spec = spec;
  p.sources.resize(c.size());
  p.audit.resize(c.size());
  for (const auto& s : c.segments) p.segment_ids.push_back(s.id);
  parallel_for(c.size(), [&](std::size_t i) {
    auto r = perturb_sentence(c.segments[i].source, spec, i);
    p.sources[i] = std::move(r.text);
    p.audit[i] = std::move(r.audit);
  });
  return p;
}

ExportPaths export_perturbed(const PerturbedCorpus& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string tag = std::string(to_string(p.spec.kind)) + "." + format_lambda(p.spec.lambda);
  ExportPaths out{dir / ("source." + tag + ".txt"), dir / ("audit." + tag + ".tsv")};
  std::string src;
  for (const auto& s : p.sources) src += s + "\n";
  std::string audit = "segment_id\tword_index\tchar_pos\toriginal\tperturbed\n";
  for (std::size_t i = 0; i < p.audit.size(); ++i) {
    for (const auto& e : p.audit[i]) {
      audit += p.segment_ids[i] + "\t" + std::to_string(e.word_index) + "\t" + std::to_string(e.char_pos) + "\t" +
               e.original + "\t" + e.perturbed + "\n";
    }
  }
  write_file_atomic(out.source, src);
  write_file_atomic(out.audit, audit);
  return out;
}

SweepResult robustness_sweep(const corpus::ParallelCorpus& c, const std::vector<SweepInput>& inputs,
                             const std::vector<std::string>& metrics,
                             const std::map<std::string, nlohmann::json>& metric_options) {
  if (c.reference_free) throw Error(ErrorCode::ValidationError, "robustness sweep needs references");
  if (metrics.empty()) throw Error(ErrorCode::ValidationError, "no metrics requested");
  std::vector<std::unique_ptr<metrics::PooledMetric>> scorers;
  for (const auto& m : metrics) {
    const auto it = metric_options.find(m);
    scorers.push_back(metrics::make_pooled_metric(m, it == metric_options.end() ? nlohmann::json::object() : it->second));
  }
  std::vector<std::vector<std::string>> refs;
  for (const auto& s : c.segments) refs.push_back(s.references);

  SweepResult res;
  for (const auto& in : inputs) {
    validate({in.kind, in.lambda, 0});
    const bool clean = in.lambda == 0.0;
    if (clean && res.baseline) {
      res.warnings.push_back("extra lambda 0 file ignored: " + in.hypotheses.string());
      continue;
    }
    corpus::HypothesisSet hyps;
    try {
      hyps = corpus::align_hypotheses(c, in.hypotheses, "sweep");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingHypotheses) throw;
      res.warnings.push_back(std::string(to_string(in.kind)) + " lambda " + format_lambda(in.lambda) +
                             ": hypotheses missing, row skipped (" + in.hypotheses.string() + ")");
      continue;
    }
    const auto texts = hyps.texts();
    SweepRow row{clean ? "clean" : std::string(to_string(in.kind)), in.lambda, {}};
    for (std::size_t m = 0; m < metrics.size(); ++m) row.scores[metrics[m]] = scorers[m]->score(texts, refs).corpus.value;
    if (clean) {
      res.baseline = std::move(row);
    } else {
      res.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(res.rows.begin(), res.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const auto ka = *parse_noise_kind(a.kind);
    const auto kb = *parse_noise_kind(b.kind);
    return ka != kb ? ka < kb : a.lambda < b.lambda;
  });
  return res;
}

nlohmann::json to_json(const SweepResult& r) {
  using nlohmann::json;
  auto row_json = [](const SweepRow& row) { return json{{"kind", row.kind}, {"lambda", row.lambda}, {"scores", row.scores}}; };
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back(row_json(row));
  json series = json::object();
  std::vector<std::string> metric_names;
  if (r.baseline) {
    for (const auto& [m, _] : r.baseline->scores) metric_names.push_back(m);
  }
  for (const auto& row : r.rows) {
    for (const auto& [m, _] : row.scores) {
      if (std::find(metric_names.begin(), metric_names.end(), m) == metric_names.end()) metric_names.push_back(m);
    }
  }
  for (const auto& m : metric_names) {
    json by_kind = json::object();
    for (const auto& row : r.rows) {
      auto& pts = by_kind[row.kind];
      if (pts.is_null()) {
        pts = json::array();
        if (r.baseline && r.baseline->scores.count(m)) pts.push_back({0.0, r.baseline->scores.at(m)});
      }
      if (row.scores.count(m)) pts.push_back({row.lambda, row.scores.at(m)});
    }
    if (by_kind.empty() && r.baseline && r.baseline->scores.count(m)) {
      by_kind["clean"] = json::array({json::array({0.0, r.baseline->scores.at(m)})});
    }
    series[m] = by_kind;
  }
  return {{"baseline", r.baseline ? row_json(*r.baseline) : json(nullptr)},
          {"rows", rows},
          {"series", series},
          {"warnings", r.warnings}};
}

}  // namespace mtlens::perturb
