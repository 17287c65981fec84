#include "mtlens/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mtlens/corpus.hpp"
#include "mtlens/errors.hpp"
#include "mtlens/external_scores.hpp"
#include "mtlens/gender_bias.hpp"
#include "mtlens/metric_registry.hpp"
#include "mtlens/overlap_metrics.hpp"
#include "mtlens/unicode.hpp"

namespace mtlens::runner {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::ValidationError, msg); }

json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& x : n) a.push_back(yaml_to_json(x));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
    case YAML::NodeType::Scalar: break;
  }
  const auto& s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "~" || s == "null") return nullptr;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

void check_keys(const YAML::Node& n, const std::set<std::string>& allowed, const std::string& where) {
  if (!n.IsMap()) bad(where + " must be a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) bad("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    bad("config key '" + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

std::string path_string(const fs::path& p, const fs::path& base) {
  if (!base.empty()) {
    const auto rel = p.lexically_normal().lexically_relative(base.lexically_normal());
    if (!rel.empty()) return rel.generic_string();
  }
  return p.generic_string();
}

bool is_file(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec);
}

std::map<std::string, double> read_source_scores(const fs::path& p) {
  std::map<std::string, double> out;
  const auto lines = corpus::read_lines(p);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::SchemaError, p.string() + ":" + std::to_string(i + 1) + ": expected id<TAB>score");
    }
    const auto id = lines[i].substr(0, tab);
    const auto val = lines[i].substr(tab + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(val, &used);
      if (used != val.size() || !std::isfinite(v)) throw std::invalid_argument("score");
      out[id] = v;
    } catch (const std::exception&) {
      if (i == 0) continue;  // header row
      throw Error(ErrorCode::SchemaError, p.string() + ":" + std::to_string(i + 1) + ": bad score '" + val + "'");
    }
  }
  return out;
}

std::string axis_of(const SegmentRecord& s, const corpus::TaskId& task) {
  if (auto it = s.metadata.find("axis"); it != s.metadata.end() && !it->second.empty()) return it->second;
  const auto* info = corpus::find_dataset(task.dataset);
  if (info && info->qualifier_first && task.split) return *task.split;
  return "";
}

json toxicity_report(const EvalRun& run, const corpus::TaskId& task, const ToxicityConfig& cfg, const fs::path& base) {
  const auto lex = toxicity::load_lexicon(cfg.lexicon, cfg.match_mode, task.tgt_lang);
  std::vector<bool> source_toxic;
  if (cfg.source_scores) {
    std::vector<std::string> ids;
    for (const auto& s : run.segments) ids.push_back(s.id);
    source_toxic = toxicity::filter_sources(ids, read_source_scores(*cfg.source_scores), cfg.source_threshold);
  }
  std::vector<toxicity::ToxicityInput> inputs;
  for (const auto& s : run.segments) {
    toxicity::ToxicityInput in;
    in.id = s.id;
    in.axis = axis_of(s, task);
    in.hypothesis = s.hypothesis;
    for (const char* c : {"mutox", "detoxify"}) {
      if (auto it = s.scores.find(c); it != s.scores.end()) in.classifier_scores[c] = it->second;
    }
    if (auto it = s.scores.find(cfg.qe_metric); it != s.scores.end()) in.qe_score = it->second;
    inputs.push_back(std::move(in));
  }
  auto j = toxicity::to_json(toxicity::added_toxicity_report(inputs, source_toxic, lex, cfg.thresholds, cfg.qe_metric));
  j["lexicon"] = {{"path", path_string(cfg.lexicon, base)}, {"entries", lex.entries.size()},
                  {"match_mode", cfg.match_mode == toxicity::MatchMode::Token ? "token" : "substring"}};
  j["source_threshold"] = cfg.source_threshold;
  j["source_filtered"] = cfg.source_scores.has_value();
  return j;
}

json gender_report(const EvalRun& run, const corpus::ParallelCorpus& c, bool axis_crosses) {
  std::vector<std::string> hyps, ids;
  std::vector<std::vector<std::string>> refs;
  for (const auto& s : run.segments) {
    hyps.push_back(s.hypothesis);
    ids.push_back(s.id);
    refs.push_back(s.references);
  }
  switch (c.task.kind()) {
    case corpus::TaskKind::MustShe:
      return {{"kind", "mustshe"}, {"mustshe", gender::to_json(gender::mustshe_score(hyps, gender::mustshe_segments(c)))}};
    case corpus::TaskKind::Mmhb: {
      gender::MmhbOptions opts;
      opts.axis_crosses = axis_crosses;
      return {{"kind", "mmhb"}, {"mmhb", gender::to_json(gender::mmhb_score(ids, hyps, refs, gender::mmhb_groups(c), opts))}};
    }
    case corpus::TaskKind::GenEval:
      return {{"kind", "geneval"}, {"geneval", gender::to_json(gender::geneval_score(hyps, gender::geneval_items(c)))}};
    default: return nullptr;
  }
}

}  // namespace

RunConfig parse_config(std::string_view text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    bad(std::string("config is not valid YAML: ") + e.what());
  }
  check_keys(root,
             {"task", "model_id", "data_root", "hypotheses", "metrics", "metric_options", "external_scores", "plugins",
              "toxicity", "perturbations", "mmhb_axis_crosses", "prompt_template", "seed", "output"},
             "config");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  for (const char* req : {"task", "model_id", "hypotheses"}) {
    if (!root[req]) bad(std::string("config is missing '") + req + "'");
  }
  cfg.task = scalar<std::string>(root["task"], "task");
  cfg.model_id = scalar<std::string>(root["model_id"], "model_id");
  cfg.data_root = resolve(base_dir, root["data_root"] ? scalar<std::string>(root["data_root"], "data_root") : ".");
  cfg.hypotheses = resolve(base_dir, scalar<std::string>(root["hypotheses"], "hypotheses"));
  cfg.output = resolve(base_dir, root["output"] ? scalar<std::string>(root["output"], "output") : "runs");
  if (root["metrics"]) {
    if (!root["metrics"].IsSequence()) bad("'metrics' must be a list");
    for (const auto& m : root["metrics"]) cfg.metrics.push_back(canonical_metric_name(scalar<std::string>(m, "metrics")));
  }
  if (root["metric_options"]) {
    const auto& mo = root["metric_options"];
    if (!mo.IsMap()) bad("'metric_options' must be a mapping");
    for (const auto& kv : mo) {
      cfg.metric_options[canonical_metric_name(kv.first.as<std::string>())] = yaml_to_json(kv.second);
    }
  }
  if (root["external_scores"]) {
    if (!root["external_scores"].IsSequence()) bad("'external_scores' must be a list");
    for (const auto& f : root["external_scores"]) {
      cfg.external_scores.push_back(resolve(base_dir, scalar<std::string>(f, "external_scores")));
    }
  }
  if (root["plugins"]) {
    if (!root["plugins"].IsSequence()) bad("'plugins' must be a list");
    for (const auto& p : root["plugins"]) {
      check_keys(p, {"metric", "command", "timeout_s", "env"}, "plugins entry");
      PluginConfig pc;
      if (!p["metric"] || !p["command"]) bad("plugins entries need 'metric' and 'command'");
      pc.metric = canonical_metric_name(scalar<std::string>(p["metric"], "plugins.metric"));
      pc.command = scalar<std::string>(p["command"], "plugins.command");
      if (p["timeout_s"]) pc.timeout_s = scalar<double>(p["timeout_s"], "plugins.timeout_s");
      if (p["env"]) {
        if (!p["env"].IsMap()) bad("'plugins.env' must be a mapping");
        for (const auto& kv : p["env"]) pc.env[kv.first.as<std::string>()] = scalar<std::string>(kv.second, "plugins.env");
      }
      cfg.plugins.push_back(std::move(pc));
    }
  }
  if (const auto t = root["toxicity"]) {
    check_keys(t, {"lexicon", "match_mode", "source_scores", "source_threshold", "thresholds", "qe_metric"}, "toxicity");
    ToxicityConfig tc;
    if (!t["lexicon"]) bad("toxicity needs 'lexicon'");
    tc.lexicon = resolve(base_dir, scalar<std::string>(t["lexicon"], "toxicity.lexicon"));
    if (t["match_mode"]) {
      const auto m = toxicity::parse_match_mode(scalar<std::string>(t["match_mode"], "toxicity.match_mode"));
      if (!m) bad("toxicity.match_mode must be token or substring");
      tc.match_mode = *m;
    }
    if (t["source_scores"]) tc.source_scores = resolve(base_dir, scalar<std::string>(t["source_scores"], "toxicity.source_scores"));
    if (t["source_threshold"]) tc.source_threshold = scalar<double>(t["source_threshold"], "toxicity.source_threshold");
    if (const auto th = t["thresholds"]) {
      check_keys(th, {"mutox", "detoxify"}, "toxicity.thresholds");
      if (th["mutox"]) tc.thresholds.mutox = scalar<double>(th["mutox"], "toxicity.thresholds.mutox");
      if (th["detoxify"]) tc.thresholds.detoxify = scalar<double>(th["detoxify"], "toxicity.thresholds.detoxify");
    }
    if (t["qe_metric"]) tc.qe_metric = canonical_metric_name(scalar<std::string>(t["qe_metric"], "toxicity.qe_metric"));
    cfg.toxicity = std::move(tc);
  }
  if (root["perturbations"]) {
    if (!root["perturbations"].IsSequence()) bad("'perturbations' must be a list");
    for (const auto& p : root["perturbations"]) {
      check_keys(p, {"kind", "lambda", "hypotheses"}, "perturbations entry");
      if (!p["kind"] || !p["lambda"] || !p["hypotheses"]) bad("perturbations entries need kind, lambda, hypotheses");
      PerturbationConfig pc;
      const auto kind = perturb::parse_noise_kind(scalar<std::string>(p["kind"], "perturbations.kind"));
      if (!kind) bad("perturbations.kind must be swap, chardupe or chardrop");
      pc.kind = *kind;
      pc.lambda = scalar<double>(p["lambda"], "perturbations.lambda");
      pc.hypotheses = resolve(base_dir, scalar<std::string>(p["hypotheses"], "perturbations.hypotheses"));
      cfg.perturbations.push_back(std::move(pc));
    }
  }
  if (root["mmhb_axis_crosses"]) cfg.mmhb_axis_crosses = scalar<bool>(root["mmhb_axis_crosses"], "mmhb_axis_crosses");
  if (root["prompt_template"]) cfg.prompt_template = scalar<std::string>(root["prompt_template"], "prompt_template");
  if (root["seed"]) cfg.seed = scalar<std::uint64_t>(root["seed"], "seed");
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::absolute(path).parent_path().lexically_normal());
}

void validate_config(const RunConfig& cfg) {
  const auto task = corpus::parse_task_name(cfg.task);
  if (cfg.model_id.empty()) bad("model_id is empty");
  if (cfg.output.empty()) bad("output is empty");
  corpus::resolve_dataset_dir(task, cfg.data_root);
  if (!is_file(cfg.hypotheses)) {
    throw Error(ErrorCode::MissingHypotheses, "hypothesis file not found: " + cfg.hypotheses.string());
  }
  std::set<std::string> seen;
  for (const auto& m : cfg.metrics) {
    if (!find_metric(m)) bad("unknown metric '" + m + "'");
    if (!metrics::is_pooled_metric(m)) {
      bad("metric '" + m + "' is not computed natively; provide it through external_scores or plugins");
    }
    if (!seen.insert(m).second) bad("metric '" + m + "' listed twice");
  }
  for (const auto& [m, opts] : cfg.metric_options) {
    if (!seen.count(m)) bad("metric_options given for unlisted metric '" + m + "'");
    metrics::make_pooled_metric(m, opts);
  }
  for (const auto& f : cfg.external_scores) {
    if (!is_file(f)) bad("external score file not found: " + f.string());
  }
  for (const auto& p : cfg.plugins) {
    if (!find_metric(p.metric)) bad("plugin metric '" + p.metric + "' is not registered");
    if (p.command.empty()) bad("plugin command is empty");
    if (!(p.timeout_s > 0)) bad("plugin timeout must be positive");
  }
  if (cfg.toxicity) {
    const auto& t = *cfg.toxicity;
    if (!is_file(t.lexicon)) bad("toxicity lexicon not found: " + t.lexicon.string());
    if (t.source_scores && !is_file(*t.source_scores)) bad("source scores not found: " + t.source_scores->string());
    for (double v : {t.source_threshold, t.thresholds.mutox, t.thresholds.detoxify}) {
      if (!(v >= 0.0 && v <= 1.0)) bad("toxicity thresholds must be in [0, 1]");
    }
  }
  for (const auto& p : cfg.perturbations) perturb::validate({p.kind, p.lambda, cfg.seed});
}

json config_json(const RunConfig& cfg) {
  const auto& b = cfg.base_dir;
  json j{{"task", cfg.task},
         {"model_id", cfg.model_id},
         {"data_root", path_string(cfg.data_root, b)},
         {"hypotheses", path_string(cfg.hypotheses, b)},
         {"metrics", cfg.metrics},
         {"metric_options", json::object()},
         {"external_scores", json::array()},
         {"plugins", json::array()},
         {"toxicity", nullptr},
         {"perturbations", json::array()},
         {"mmhb_axis_crosses", cfg.mmhb_axis_crosses},
         {"prompt_template", cfg.prompt_template},
         {"seed", cfg.seed}};
  for (const auto& [m, o] : cfg.metric_options) j["metric_options"][m] = o;
  for (const auto& f : cfg.external_scores) j["external_scores"].push_back(path_string(f, b));
  for (const auto& p : cfg.plugins) {
    j["plugins"].push_back({{"metric", p.metric}, {"command", p.command}, {"timeout_s", p.timeout_s}, {"env", p.env}});
  }
  if (cfg.toxicity) {
    const auto& t = *cfg.toxicity;
    j["toxicity"] = {{"lexicon", path_string(t.lexicon, b)},
                     {"match_mode", t.match_mode == toxicity::MatchMode::Token ? "token" : "substring"},
                     {"source_scores", t.source_scores ? json(path_string(*t.source_scores, b)) : json(nullptr)},
                     {"source_threshold", t.source_threshold},
                     {"thresholds", {{"mutox", t.thresholds.mutox}, {"detoxify", t.thresholds.detoxify}}},
                     {"qe_metric", t.qe_metric}};
  }
  for (const auto& p : cfg.perturbations) {
    j["perturbations"].push_back(
        {{"kind", perturb::to_string(p.kind)}, {"lambda", p.lambda}, {"hypotheses", path_string(p.hypotheses, b)}});
  }
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  const json key{{"task", cfg.task}, {"model_id", cfg.model_id}, {"config", config_json(cfg)}};
  return sha256_hex(key.dump());
}

RunOutcome run_task(const RunConfig& cfg, const RunOptions& opts) {
  validate_config(cfg);
  const auto task = corpus::parse_task_name(cfg.task);
  const auto corpus = corpus::load_corpus(task, cfg.data_root);
  const auto hyps = corpus::align_hypotheses(corpus, cfg.hypotheses, cfg.model_id);

  EvalRun run;
  run.task = task.canonical();
  run.model_id = cfg.model_id;
  run.config = config_json(cfg);
  run.config_hash = config_hash(cfg);
  run.created_at = opts.created_at.empty() ? utc_timestamp() : opts.created_at;
  std::vector<std::string> texts;
  std::vector<std::vector<std::string>> refs;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& seg = corpus.segments[i];
    SegmentRecord r;
    r.id = seg.id;
    r.source = seg.source;
    r.references = seg.references;
    r.hypothesis = hyps.hypotheses[i].text;
    r.metadata = seg.metadata;
    texts.push_back(r.hypothesis);
    refs.push_back(r.references);
    run.segments.push_back(std::move(r));
  }

  if (!cfg.metrics.empty() && corpus.reference_free) {
    bad("task " + run.task + " has no references; reference-based metrics cannot be computed");
  }
  for (const auto& m : cfg.metrics) {
    const auto it = cfg.metric_options.find(m);
    const auto scorer = metrics::make_pooled_metric(m, it == cfg.metric_options.end() ? json::object() : it->second);
    const auto scored = scorer->score(texts, refs);
    for (std::size_t i = 0; i < run.segments.size(); ++i) {
      run.segments[i].scores[m] = scored.per_segment[i].value;
      run.segments[i].stats[m] = scored.per_segment[i].stats;
    }
    MetricEntry e;
    e.source = "native";
    e.options = scorer->options_json();
    e.aggregation = "pooled";
    e.orientation = std::string(to_string(find_metric(m)->orientation));
    e.warnings = scored.corpus.warnings;
    run.metrics[m] = std::move(e);
    run.aggregates[m] = scored.corpus.value;
    run.details[m] = scorer->details(scored.corpus.stats);
  }

  for (const auto& f : cfg.external_scores) external::ingest_scores(run, external::read_score_file(f));
  for (const auto& p : cfg.plugins) {
    external::PluginSpec spec;
    spec.command = p.command;
    spec.timeout = std::chrono::milliseconds(static_cast<long long>(p.timeout_s * 1000.0));
    spec.env = p.env;
    const auto file = external::run_plugin(spec, run.task, run.model_id, p.metric, external::plugin_segments(run));
    external::IngestOptions io;
    io.source = "plugin";
    external::ingest_scores(run, file, io);
  }

  if (cfg.toxicity) {
    run.task_reports["toxicity"] = toxicity_report(run, task, *cfg.toxicity, cfg.base_dir);
  } else if (task.kind() == corpus::TaskKind::Toxicity) {
    run.warnings.push_back("toxicity task without a toxicity section; report skipped");
  }
  if (auto g = gender_report(run, corpus, cfg.mmhb_axis_crosses); !g.is_null()) run.task_reports["gender"] = g;
  if (!cfg.perturbations.empty()) {
    if (corpus.reference_free || cfg.metrics.empty()) {
      run.warnings.push_back("perturbation sweep needs references and at least one native metric; skipped");
    } else {
      std::vector<perturb::SweepInput> inputs{{perturb::NoiseKind::Swap, 0.0, cfg.hypotheses}};
      for (const auto& p : cfg.perturbations) inputs.push_back({p.kind, p.lambda, p.hypotheses});
      const auto sweep = perturb::robustness_sweep(corpus, inputs, cfg.metrics, cfg.metric_options);
      auto j = perturb::to_json(sweep);
      j["metrics"] = cfg.metrics;
      run.task_reports["perturbation"] = j;
      for (const auto& w : sweep.warnings) run.warnings.push_back("perturbation: " + w);
    }
  }
  for (auto& w : consistency_warnings(run)) run.warnings.push_back(std::move(w));

  RunOutcome out{std::move(run), {}};
  if (opts.write) {
    fs::create_directories(cfg.output);
    out.path = unique_run_path(cfg.output, out.run);
    save_run(out.run, out.path);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string LengthBucket::label() const {
  return hi ? std::to_string(lo) + "-" + std::to_string(*hi) : std::to_string(lo) + "+";
}

std::vector<int> default_bucket_edges() { return {1, 10, 20, 30, 40, 50}; }

LengthBreakdown length_breakdown(const EvalRun& run, const std::string& metric, const std::vector<int>& edges) {
  const auto name = canonical_metric_name(metric);
  LengthBreakdown out;
  out.metric = name;
  if (run.segments.empty()) return out;
  if (!run.has_segment_metric(name)) {
    throw Error(ErrorCode::MetricMissing, "run has no per-segment " + name + " scores");
  }
  if (edges.empty() || !std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    bad("bucket edges must be strictly increasing");
  }
  for (std::size_t b = 0; b < edges.size(); ++b) {
    LengthBucket bucket;
    bucket.lo = edges[b];
    if (b + 1 < edges.size()) bucket.hi = edges[b + 1] - 1;
    out.buckets.push_back(bucket);
  }
  std::vector<double> sums(edges.size(), 0.0);
  for (const auto& s : run.segments) {
    const int words = static_cast<int>(unicode::split_whitespace(s.source).size());
    const double score = s.scores.at(name);
    out.points.push_back({s.id, words, score});
    std::size_t b = 0;
    while (b + 1 < edges.size() && words >= edges[b + 1]) ++b;
    ++out.buckets[b].n;
    sums[b] += score;
  }
  for (std::size_t b = 0; b < edges.size(); ++b) {
    if (out.buckets[b].n) out.buckets[b].mean = sums[b] / static_cast<double>(out.buckets[b].n);
  }
  return out;
}

json to_json(const LengthBreakdown& b) {
  json points = json::array();
  for (const auto& p : b.points) points.push_back({{"segment_id", p.segment_id}, {"words", p.words}, {"score", p.score}});
  json buckets = json::array();
  for (const auto& k : b.buckets) {
    buckets.push_back({{"label", k.label()},
                       {"lo", k.lo},
                       {"hi", k.hi ? json(*k.hi) : json(nullptr)},
                       {"n", k.n},
                       {"mean", k.mean ? json(*k.mean) : json(nullptr)}});
  }
  return {{"metric", b.metric}, {"points", points}, {"buckets", buckets}};
}

}  // namespace mtlens::runner
