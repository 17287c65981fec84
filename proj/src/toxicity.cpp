#include "mtlens/toxicity.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mtlens/errors.hpp"
#include "mtlens/parallel.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::toxicity {
namespace {

struct Token {
  std::u32string text;
  int group = 0;  // tokens in different groups are never adjacent
};

// Lowercase, whitespace split, punctuation stripped at token edges.
// Stripped punctuation and punctuation-only tokens start a new group.
std::vector<Token> match_tokens(std::string_view text) {
  const auto lowered = unicode::lower(unicode::decode(text));
  std::vector<Token> out;
  int group = 0;
  for (const auto& raw : unicode::split_whitespace(std::u32string_view(lowered))) {
    std::size_t b = 0;
    std::size_t e = raw.size();
    while (b < e && unicode::is_punctuation(raw[b])) ++b;
    while (e > b && unicode::is_punctuation(raw[e - 1])) --e;
    if (b == e) {
      ++group;
      continue;
    }
    if (b > 0) ++group;
    out.push_back({raw.substr(b, e - b), group});
    if (e < raw.size()) ++group;
  }
  return out;
}

std::size_t count_substring(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::optional<MatchMode> parse_match_mode(std::string_view s) {
  if (s == "token") return MatchMode::Token;
  if (s == "substring") return MatchMode::Substring;
  return std::nullopt;
}

Lexicon make_lexicon(std::vector<std::string> entries, MatchMode mode, std::string language) {
  Lexicon lex;
  lex.mode = mode;
  lex.language = std::move(language);
  std::set<std::string> seen;
  for (auto& e : entries) {
    if (unicode::split_whitespace(e).empty()) throw Error(ErrorCode::ValidationError, "lexicon entry is blank");
    // Normalize inner whitespace so "a  b" and "a b" are one entry.
    std::string norm;
    for (const auto& w : unicode::split_whitespace(unicode::lower(std::string_view(e)))) {
      if (!norm.empty()) norm += ' ';
      norm += w;
    }
    if (mode == MatchMode::Token && match_tokens(norm).empty()) {
      throw Error(ErrorCode::ValidationError, "lexicon entry '" + e + "' has no word characters");
    }
    if (seen.insert(norm).second) lex.entries.push_back(norm);
  }
  if (lex.entries.empty()) throw Error(ErrorCode::ValidationError, "lexicon is empty");
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path, MatchMode mode, std::string language) {
  std::vector<std::string> entries;
  for (auto& line : corpus::read_lines(path)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    entries.push_back(std::string(unicode::rstrip(std::string_view(line).substr(first))));
  }
  return make_lexicon(std::move(entries), mode, std::move(language));
}

std::vector<TermMatch> etox_match(std::string_view hyp, const Lexicon& lexicon) {
  std::vector<TermMatch> out;
  if (lexicon.mode == MatchMode::Substring) {
    const auto lowered = unicode::lower(hyp);
    for (const auto& term : lexicon.entries) {
      if (const auto n = count_substring(lowered, term); n > 0) out.push_back({term, static_cast<int>(n)});
    }
    return out;
  }
  const auto toks = match_tokens(hyp);
  for (const auto& term : lexicon.entries) {
    const auto pattern = match_tokens(term);
    int count = 0;
    for (std::size_t i = 0; i + pattern.size() <= toks.size(); ++i) {
      bool ok = true;
      for (std::size_t k = 0; k < pattern.size() && ok; ++k) {
        ok = toks[i + k].text == pattern[k].text && toks[i + k].group == toks[i].group;
      }
      if (ok) ++count;
    }
    if (count > 0) out.push_back({term, count});
  }
  return out;
}

std::vector<bool> filter_sources(const std::vector<std::string>& ids, const std::map<std::string, double>& scores,
                                 double threshold) {
  std::vector<bool> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = scores.find(id);
    if (it == scores.end()) throw Error(ErrorCode::MissingScores, "no source toxicity score for segment " + id);
    out.push_back(it->second >= threshold);
  }
  return out;
}

namespace {
bool classifier_fires(const std::string& name, double score, const Thresholds& t) {
  if (name == "mutox") return score >= t.mutox;
  if (name == "detoxify") return score >= t.detoxify;
  return false;
}
}  // namespace

bool added_toxicity(const ToxicityRecord& r, const Thresholds& t) {
  if (r.source_toxic) return false;
  if (!r.matched_terms.empty()) return true;
  for (const auto& [name, score] : r.classifier_scores) {
    if (classifier_fires(name, score, t)) return true;
  }
  return false;
}

ToxicityReport added_toxicity_report(const std::vector<ToxicityInput>& inputs, const std::vector<bool>& source_toxic,
                                     const Lexicon& lexicon, const Thresholds& thresholds,
                                     const std::string& qe_metric) {
  if (!source_toxic.empty() && source_toxic.size() != inputs.size()) {
    throw Error(ErrorCode::AlignmentError, "source toxicity flags do not match the number of segments");
  }
  std::vector<ToxicityRecord> records(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const auto& in = inputs[i];
    auto& r = records[i];
    r.segment_id = in.id;
    r.axis = in.axis.empty() ? "unspecified" : in.axis;
    r.source_toxic = !source_toxic.empty() && source_toxic[i];
    r.classifier_scores = in.classifier_scores;
    r.qe_score = in.qe_score;
    if (r.source_toxic) return;
    r.matched_terms = etox_match(in.hypothesis, lexicon);
    if (!r.matched_terms.empty()) r.detectors.push_back("etox");
    for (const auto& [name, score] : r.classifier_scores) {
      if (classifier_fires(name, score, thresholds)) r.detectors.push_back(name);
    }
  });

  ToxicityReport rep;
  rep.thresholds = thresholds;
  rep.qe_metric = qe_metric;
  std::map<std::string, std::vector<double>> qe_by_detector;
  std::map<std::string, int> flagged_by_detector;
  for (const char* d : {"etox", "mutox", "detoxify", "union"}) flagged_by_detector[d] = 0;
  for (const auto& r : records) {
    auto& ax = rep.per_axis[r.axis];
    if (r.source_toxic) {
      ++ax.n_source_toxic;
      ++rep.n_source_toxic;
      continue;
    }
    ++ax.n_segments;
    ++rep.n_segments;
    if (!added_toxicity(r, thresholds)) continue;
    ++ax.n_added_toxic;
    ++rep.n_added_toxic;
    rep.flagged.push_back(r);
    for (const auto& d : r.detectors) {
      ++flagged_by_detector[d];
      if (r.qe_score) qe_by_detector[d].push_back(*r.qe_score);
    }
    ++flagged_by_detector["union"];
    if (r.qe_score) qe_by_detector["union"].push_back(*r.qe_score);
  }
  for (auto& [_, ax] : rep.per_axis) {
    ax.rate = ax.n_segments ? static_cast<double>(ax.n_added_toxic) / ax.n_segments : 0.0;
  }
  rep.overall_rate = rep.n_segments ? static_cast<double>(rep.n_added_toxic) / rep.n_segments : 0.0;
  for (const auto& [d, n] : flagged_by_detector) {
    DetectorSummary s;
    s.n_flagged = n;
    s.rate = rep.n_segments ? static_cast<double>(n) / rep.n_segments : 0.0;
    s.mean_qe = mean_of(qe_by_detector[d]);
    rep.by_detector[d] = s;
  }
  rep.mean_qe = rep.by_detector["union"].mean_qe;
  return rep;
}

nlohmann::json to_json(const ToxicityReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json axes = json::object();
  for (const auto& [name, a] : r.per_axis) {
    axes[name] = {{"n_segments", a.n_segments},
                  {"n_source_toxic", a.n_source_toxic},
                  {"n_added_toxic", a.n_added_toxic},
                  {"rate", a.rate}};
  }
  json detectors = json::object();
  for (const auto& [name, d] : r.by_detector) {
    detectors[name] = {{"n_flagged", d.n_flagged}, {"rate", d.rate}, {"mean_qe", opt(d.mean_qe)}};
  }
  json flagged = json::array();
  for (const auto& f : r.flagged) {
    json terms = json::array();
    for (const auto& t : f.matched_terms) terms.push_back({{"term", t.term}, {"count", t.count}});
    flagged.push_back({{"segment_id", f.segment_id},
                       {"axis", f.axis},
                       {"source_toxic", f.source_toxic},
                       {"matched_terms", terms},
                       {"classifier_scores", f.classifier_scores},
                       {"qe_score", opt(f.qe_score)},
                       {"detectors", f.detectors}});
  }
  return {{"per_axis", axes},
          {"n_segments", r.n_segments},
          {"n_source_toxic", r.n_source_toxic},
          {"n_added_toxic", r.n_added_toxic},
          {"overall_rate", r.overall_rate},
          {"mean_qe", opt(r.mean_qe)},
          {"qe_metric", r.qe_metric},
          {"by_detector", detectors},
          {"thresholds", {{"mutox", r.thresholds.mutox}, {"detoxify", r.thresholds.detoxify}}},
          {"flagged", flagged}};
}

}  // namespace mtlens::toxicity
