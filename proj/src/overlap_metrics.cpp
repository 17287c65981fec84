#include "mtlens/overlap_metrics.hpp"

#include "mtlens/errors.hpp"
#include "mtlens/parallel.hpp"

namespace mtlens::metrics {

SegmentScores PooledMetric::score(std::span<const std::string> hyps,
                                  std::span<const std::vector<std::string>> refs) const {
  if (hyps.empty()) throw Error(ErrorCode::EmptyInput, std::string(name()) + ": no hypotheses");
  if (hyps.size() != refs.size()) {
    throw Error(ErrorCode::AlignmentError, std::string(name()) + ": " + std::to_string(hyps.size()) +
                                               " hypotheses vs " + std::to_string(refs.size()) + " references");
  }
  SegmentScores out;
  out.per_segment.resize(hyps.size());
  parallel_for(hyps.size(), [&](std::size_t i) {
    auto& s = out.per_segment[i];
    s.metric = std::string(name());
    s.stats = segment_stats(hyps[i], refs[i]);
    s.value = segment_score(s.stats);
  });

  std::vector<Stats> all;
  all.reserve(hyps.size());
  for (const auto& s : out.per_segment) all.push_back(s.stats);
  out.corpus.metric = std::string(name());
  out.corpus.value = corpus_score(all);
  out.corpus.stats = all.front();
  for (std::size_t i = 1; i < all.size(); ++i) {
    for (std::size_t k = 0; k < all[i].size(); ++k) out.corpus.stats[k] += all[i][k];
  }
  bool all_empty = true;
  for (const auto& h : hyps) all_empty = all_empty && h.find_first_not_of(" \t\r\n") == std::string::npos;
  if (all_empty) out.corpus.warnings.emplace_back("all hypotheses are empty");
  return out;
}

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, std::vector<std::string>& seen) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ValidationError, std::string("metric option '") + key + "': " + e.what());
    }
    seen.emplace_back(key);
  }
}

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& seen, std::string_view metric) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      throw Error(ErrorCode::ValidationError, "unknown option '" + key + "' for metric " + std::string(metric));
    }
  }
}

BleuSmoothing parse_smoothing(const std::string& s) {
  if (s == "none") return BleuSmoothing::None;
  if (s == "floor") return BleuSmoothing::Floor;
  if (s == "add-k") return BleuSmoothing::AddK;
  if (s == "exp") return BleuSmoothing::Exp;
  throw Error(ErrorCode::ValidationError, "unknown bleu smoothing '" + s + "'");
}

}  // namespace

bool is_pooled_metric(std::string_view name) { return name == "bleu" || name == "chrf" || name == "ter"; }

std::unique_ptr<PooledMetric> make_pooled_metric(std::string_view name, const nlohmann::json& options) {
  const nlohmann::json opts = options.is_null() ? nlohmann::json::object() : options;
  if (!opts.is_object()) throw Error(ErrorCode::ValidationError, "metric options must be a mapping");
  std::vector<std::string> seen;
  if (name == "bleu") {
    BleuOptions o;
    std::string tok = std::string(to_string(o.tokenize));
    std::string smooth = "exp";
    std::string corpus_smooth = "none";
    double smooth_value = -1;
    read_opt(opts, "tokenize", tok, seen);
    read_opt(opts, "smooth", smooth, seen);
    read_opt(opts, "corpus_smooth", corpus_smooth, seen);
    read_opt(opts, "smooth_value", smooth_value, seen);
    read_opt(opts, "max_ngram_order", o.max_ngram_order, seen);
    read_opt(opts, "lowercase", o.lowercase, seen);
    read_opt(opts, "effective_order", o.effective_order, seen);
    reject_unknown(opts, seen, name);
    const auto scheme = parse_tokenizer(tok);
    if (!scheme) throw Error(ErrorCode::ValidationError, "unknown tokenizer '" + tok + "'");
    o.tokenize = *scheme;
    o.smooth = parse_smoothing(smooth);
    o.corpus_smooth = parse_smoothing(corpus_smooth);
    if (smooth_value >= 0) o.smooth_value = smooth_value;
    return std::make_unique<Bleu>(o);
  }
  if (name == "chrf") {
    ChrfOptions o;
    read_opt(opts, "char_order", o.char_order, seen);
    read_opt(opts, "word_order", o.word_order, seen);
    read_opt(opts, "beta", o.beta, seen);
    read_opt(opts, "lowercase", o.lowercase, seen);
    read_opt(opts, "whitespace", o.whitespace, seen);
    read_opt(opts, "eps_smoothing", o.eps_smoothing, seen);
    reject_unknown(opts, seen, name);
    return std::make_unique<Chrf>(o);
  }
  if (name == "ter") {
    TerOptions o;
    read_opt(opts, "normalized", o.normalized, seen);
    read_opt(opts, "no_punct", o.no_punct, seen);
    read_opt(opts, "case_sensitive", o.case_sensitive, seen);
    bool lowercase = false;
    read_opt(opts, "lowercase", lowercase, seen);
    reject_unknown(opts, seen, name);
    if (lowercase) o.case_sensitive = false;
    return std::make_unique<Ter>(o);
  }
  throw Error(ErrorCode::ValidationError, "'" + std::string(name) + "' is not an overlap metric");
}

SegmentScores bleu(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                   const BleuOptions& opts) {
  return Bleu(opts).score(hyps, refs);
}

SegmentScores chrf(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                   const ChrfOptions& opts) {
  return Chrf(opts).score(hyps, refs);
}

SegmentScores ter(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                  const TerOptions& opts) {
  return Ter(opts).score(hyps, refs);
}

}  // namespace mtlens::metrics
