#include "mtlens/gender_bias.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "mtlens/errors.hpp"
#include "mtlens/parallel.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::gender {
namespace {

using Tokens = std::vector<std::string>;

std::optional<double> ratio(int num, int den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / den;
}

void finish(TermCounts& c) {
  c.accuracy = ratio(c.correct, c.correct + c.wrong);
  c.coverage = c.n_terms ? static_cast<double>(c.correct + c.wrong) / c.n_terms : 0.0;
}

void add(TermCounts& into, const TermCounts& c) {
  into.n_terms += c.n_terms;
  into.correct += c.correct;
  into.wrong += c.wrong;
}

// First unconsumed contiguous occurrence of `form` in `toks`.
std::optional<std::size_t> find_free(const Tokens& toks, const std::vector<bool>& used, const Tokens& form) {
  if (form.empty() || form.size() > toks.size()) return std::nullopt;
  for (std::size_t i = 0; i + form.size() <= toks.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < form.size() && ok; ++k) ok = !used[i + k] && toks[i + k] == form[k];
    if (ok) return i;
  }
  return std::nullopt;
}

void consume(std::vector<bool>& used, std::size_t at, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) used[at + k] = true;
}

void check_aligned(std::size_t hyps, std::size_t items, const char* what) {
  if (hyps != items) {
    throw Error(ErrorCode::AlignmentError, std::to_string(hyps) + " hypotheses for " + std::to_string(items) + " " + what);
  }
}

void finish(Accuracy& a) { a.value = ratio(a.correct, a.n); }

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json counts_json(const TermCounts& c) {
  return {{"n_terms", c.n_terms}, {"correct", c.correct}, {"wrong", c.wrong},
          {"accuracy", opt(c.accuracy)}, {"coverage", c.coverage}};
}

nlohmann::json acc_json(const Accuracy& a) { return {{"n", a.n}, {"correct", a.correct}, {"accuracy", opt(a.value)}}; }

const std::string& meta(const corpus::Segment& s, const std::string& key) {
  static const std::string empty;
  const auto it = s.metadata.find(key);
  return it == s.metadata.end() ? empty : it->second;
}

}  // namespace

std::string_view to_string(TermOutcome o) {
  switch (o) {
    case TermOutcome::Correct: return "correct";
    case TermOutcome::Wrong: return "wrong";
    case TermOutcome::OutOfCoverage: return "out_of_coverage";
  }
  return "";
}

std::string_view to_string(GenEvalMode m) { return m == GenEvalMode::Sentence ? "sentence" : "contextual"; }

std::vector<TermOutcome> classify_terms(std::string_view hyp, const std::vector<TermPair>& pairs) {
  const auto toks = unicode::lower_words(hyp);
  std::vector<bool> used(toks.size(), false);
  std::vector<TermOutcome> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto good = unicode::lower_words(p.correct_form);
    const auto bad = unicode::lower_words(p.wrong_form);
    const auto g = find_free(toks, used, good);
    const auto b = find_free(toks, used, bad);
    if (b) {
      consume(used, *b, bad.size());
      out.push_back(TermOutcome::Wrong);
    } else if (g) {
      consume(used, *g, good.size());
      out.push_back(TermOutcome::Correct);
    } else {
      out.push_back(TermOutcome::OutOfCoverage);
    }
  }
  return out;
}

MustSheReport mustshe_score(const std::vector<std::string>& hyps, const std::vector<MustSheSegment>& segments) {
  check_aligned(hyps.size(), segments.size(), "MuST-SHE segments");
  for (const auto& s : segments) {
    if (s.term_pairs.empty()) throw Error(ErrorCode::ValidationError, "segment " + s.segment_id + " has no term pairs");
    for (const auto& p : s.term_pairs) {
      if (unicode::lower_words(p.correct_form).empty() || unicode::lower_words(p.wrong_form).empty() ||
          p.correct_form == p.wrong_form) {
        throw Error(ErrorCode::ValidationError,
                    "segment " + s.segment_id + ": bad term pair '" + p.correct_form + "|" + p.wrong_form + "'");
      }
    }
  }
  MustSheReport rep;
  rep.segments.resize(segments.size());
  parallel_for(segments.size(), [&](std::size_t i) {
    auto& r = rep.segments[i];
    r.segment_id = segments[i].segment_id;
    r.category = segments[i].category;
    r.outcomes = classify_terms(hyps[i], segments[i].term_pairs);
    r.counts.n_terms = static_cast<int>(r.outcomes.size());
    for (auto o : r.outcomes) {
      r.counts.correct += o == TermOutcome::Correct;
      r.counts.wrong += o == TermOutcome::Wrong;
    }
    finish(r.counts);
  });
  for (const auto& r : rep.segments) {
    add(rep.overall, r.counts);
    add(rep.by_category[r.category.empty() ? "all" : r.category], r.counts);
  }
  finish(rep.overall);
  for (auto& [_, c] : rep.by_category) finish(c);
  return rep;
}

MmhbReport mmhb_score(const std::vector<std::string>& ids, const std::vector<std::string>& hyps,
                      const std::vector<std::vector<std::string>>& refs, const std::vector<MmhbGroup>& groups,
                      const MmhbOptions& opts) {
  if (ids.size() != hyps.size() || ids.size() != refs.size()) {
    throw Error(ErrorCode::AlignmentError, "ids, hypotheses and references differ in length");
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);

  std::map<std::string, std::vector<std::size_t>> subset;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> axis_subset;
  std::set<std::string> seen;
  for (const auto& g : groups) {
    for (const auto& [variant, members] : g.variants) {
      if (std::find(std::begin(kVariants), std::end(kVariants), variant) == std::end(kVariants)) {
        throw Error(ErrorCode::ValidationError, "pattern " + g.pattern_id + ": unknown variant '" + variant + "'");
      }
      for (const auto& id : members) {
        const auto it = index.find(id);
        if (it == index.end()) throw Error(ErrorCode::AlignmentError, "MMHB segment " + id + " is not in the run");
        if (!seen.insert(id).second) {
          throw Error(ErrorCode::ValidationError, "MMHB segment " + id + " appears in more than one variant");
        }
        subset[variant].push_back(it->second);
        if (opts.axis_crosses) axis_subset[{g.axis.empty() ? "unspecified" : g.axis, variant}].push_back(it->second);
      }
    }
  }

  const metrics::Chrf chrf(opts.chrf);
  std::vector<metrics::Stats> stats(ids.size());
  std::vector<std::size_t> needed(seen.size());
  std::transform(seen.begin(), seen.end(), needed.begin(), [&](const std::string& id) { return index.at(id); });
  parallel_for(needed.size(), [&](std::size_t k) {
    const auto i = needed[k];
    stats[i] = chrf.segment_stats(hyps[i], refs[i]);
  });
  auto score_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<metrics::Stats> sub;
    sub.reserve(idx.size());
    for (auto i : idx) sub.push_back(stats[i]);
    return chrf.corpus_score(sub);
  };

  MmhbReport rep;
  std::map<std::string, double> value;
  for (const char* v : kVariants) {
    const auto it = subset.find(v);
    if (it == subset.end() || it->second.empty()) {
      rep.warnings.push_back(std::string("no ") + v + " segments; row skipped");
      continue;
    }
    value[v] = score_of(it->second);
    rep.rows.push_back({v, it->second.size(), value[v]});
  }
  if (rep.rows.empty()) throw Error(ErrorCode::MissingVariant, "every MMHB variant subset is empty");
  for (const auto& [a, b] : {std::pair{"masculine", "feminine"}, {"masculine", "neutral"}, {"feminine", "neutral"}}) {
    if (value.count(a) && value.count(b)) rep.gaps.push_back({std::string(a) + "-" + b, value[a] - value[b]});
  }
  for (const auto& [key, idx] : axis_subset) {
    rep.by_axis[key.first].push_back({key.second, idx.size(), score_of(idx)});
  }
  return rep;
}

std::vector<std::string> contrastive_unique_tokens(const GenEvalItem& item) {
  const auto correct = unicode::lower_words(item.correct_ref);
  const std::set<std::string> keep(correct.begin(), correct.end());
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& t : unicode::lower_words(item.contrastive_ref)) {
    if (!keep.count(t) && seen.insert(t).second) out.push_back(t);
  }
  return out;
}

bool geneval_correct(std::string_view hyp, const GenEvalItem& item) {
  const auto toks = unicode::lower_words(hyp);
  const std::set<std::string> present(toks.begin(), toks.end());
  for (const auto& t : contrastive_unique_tokens(item)) {
    if (present.count(t)) return false;
  }
  return true;
}

GenEvalReport geneval_score(const std::vector<std::string>& hyps, const std::vector<GenEvalItem>& items) {
  check_aligned(hyps.size(), items.size(), "GenEval items");
  for (const auto& it : items) {
    if (it.correct_ref == it.contrastive_ref) {
      throw Error(ErrorCode::ValidationError, "item " + it.segment_id + ": references are identical");
    }
    if (it.mode == GenEvalMode::Contextual && !it.context) {
      throw Error(ErrorCode::ValidationError, "contextual item " + it.segment_id + " has no context");
    }
  }
  GenEvalReport rep;
  std::vector<char> ok(items.size());
  parallel_for(items.size(), [&](std::size_t i) { ok[i] = geneval_correct(hyps[i], items[i]); });
  rep.item_correct.assign(ok.begin(), ok.end());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int c = ok[i] ? 1 : 0;
    for (Accuracy* a : {&rep.overall, &rep.by_mode[std::string(to_string(items[i].mode))]}) {
      ++a->n;
      a->correct += c;
    }
    if (items[i].mode == GenEvalMode::Contextual) {
      auto& a = rep.by_stereotype[items[i].stereotype_group.empty() ? "unspecified" : items[i].stereotype_group];
      ++a.n;
      a.correct += c;
    }
  }
  finish(rep.overall);
  for (auto& [_, a] : rep.by_mode) finish(a);
  for (auto& [_, a] : rep.by_stereotype) finish(a);
  return rep;
}

std::vector<MustSheSegment> mustshe_segments(const corpus::ParallelCorpus& c) {
  std::vector<MustSheSegment> out;
  for (const auto& s : c.segments) {
    MustSheSegment m;
    m.segment_id = s.id;
    m.category = meta(s, "category");
    for (auto& [good, bad] : corpus::parse_term_pairs(meta(s, "term_pairs"))) m.term_pairs.push_back({good, bad});
    if (m.term_pairs.empty()) throw Error(ErrorCode::SchemaError, "segment " + s.id + " has no term_pairs");
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MmhbGroup> mmhb_groups(const corpus::ParallelCorpus& c) {
  std::map<std::string, MmhbGroup> by_pattern;
  std::vector<std::string> order;
  for (const auto& s : c.segments) {
    const auto& variant = meta(s, "gender_variant");
    if (variant.empty()) throw Error(ErrorCode::SchemaError, "segment " + s.id + " has no gender_variant");
    const std::string pattern = meta(s, "pattern_id").empty() ? s.id : meta(s, "pattern_id");
    auto [it, inserted] = by_pattern.try_emplace(pattern);
    if (inserted) {
      order.push_back(pattern);
      it->second.pattern_id = pattern;
      it->second.axis = meta(s, "axis");
    }
    it->second.variants[variant].push_back(s.id);
  }
  std::vector<MmhbGroup> out;
  for (const auto& p : order) out.push_back(std::move(by_pattern[p]));
  return out;
}

std::vector<GenEvalItem> geneval_items(const corpus::ParallelCorpus& c) {
  std::vector<GenEvalItem> out;
  for (const auto& s : c.segments) {
    GenEvalItem it;
    it.segment_id = s.id;
    if (s.references.empty()) throw Error(ErrorCode::SchemaError, "GenEval segment " + s.id + " has no reference");
    it.correct_ref = s.references.front();
    it.contrastive_ref = meta(s, "contrastive_ref");
    if (it.contrastive_ref.empty()) throw Error(ErrorCode::SchemaError, "segment " + s.id + " has no contrastive_ref");
    if (!meta(s, "context").empty()) {
      it.mode = GenEvalMode::Contextual;
      it.context = meta(s, "context");
      it.stereotype_group = meta(s, "stereotype_group");
    }
    out.push_back(std::move(it));
  }
  return out;
}

nlohmann::json to_json(const MustSheReport& r) {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [k, c] : r.by_category) cats[k] = counts_json(c);
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : r.segments) {
    nlohmann::json outcomes = nlohmann::json::array();
    for (auto o : s.outcomes) outcomes.push_back(to_string(o));
    auto j = counts_json(s.counts);
    j["segment_id"] = s.segment_id;
    j["category"] = s.category;
    j["outcomes"] = outcomes;
    segs.push_back(j);
  }
  return {{"overall", counts_json(r.overall)}, {"by_category", cats}, {"segments", segs}};
}

nlohmann::json to_json(const MmhbReport& r) {
  auto rows_json = [](const std::vector<MmhbRow>& rows) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& row : rows) a.push_back({{"variant", row.variant}, {"n_segments", row.n_segments}, {"chrf", row.chrf}});
    return a;
  };
  nlohmann::json gaps = nlohmann::json::object();
  for (const auto& g : r.gaps) gaps[g.name] = g.value;
  nlohmann::json j = {{"rows", rows_json(r.rows)}, {"gaps", gaps}, {"warnings", r.warnings}};
  if (!r.by_axis.empty()) {
    nlohmann::json axes = nlohmann::json::object();
    for (const auto& [axis, rows] : r.by_axis) axes[axis] = rows_json(rows);
    j["by_axis"] = axes;
  }
  return j;
}

nlohmann::json to_json(const GenEvalReport& r) {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& [k, a] : r.by_mode) modes[k] = acc_json(a);
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [k, a] : r.by_stereotype) groups[k] = acc_json(a);
  return {{"overall", acc_json(r.overall)}, {"by_mode", modes}, {"by_stereotype", groups},
          {"item_correct", r.item_correct}};
}

}  // namespace mtlens::gender
