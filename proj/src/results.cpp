#include "mtlens/results.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "mtlens/errors.hpp"
#include "mtlens/metric_registry.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mtlens {
namespace {

template <typename T>
T get_field(const json& j, const char* key, const char* where) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::SchemaError, std::string(where) + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string(where) + ": field '" + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get_field<T>(j, key, where);
}

json collect_extra(const json& j, const std::set<std::string>& known) {
  json extra = json::object();
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) extra[k] = v;
  }
  return extra;
}

std::mutex g_hook_mu;
std::function<void(std::string_view)> g_write_hook;

void fire_hook(std::string_view stage) {
  std::function<void(std::string_view)> hook;
  {
    std::lock_guard lock(g_hook_mu);
    hook = g_write_hook;
  }
  if (hook) hook(stage);
}

void write_all(int fd, const char* data, std::size_t n, const fs::path& p) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "write " + p.string() + ": " + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

}  // namespace

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Minor: return "minor";
    case Severity::Major: return "major";
    case Severity::Critical: return "critical";
  }
  return "minor";
}

Severity parse_severity(std::string_view s) {
  std::string l(s);
  for (auto& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "minor") return Severity::Minor;
  if (l == "major") return Severity::Major;
  if (l == "critical") return Severity::Critical;
  throw Error(ErrorCode::SchemaError, "unknown severity '" + std::string(s) + "'");
}

bool EvalRun::has_segment_metric(std::string_view m) const {
  const auto it = metrics.find(std::string(m));
  if (it == metrics.end() || it->second.corpus_only) return false;
  for (const auto& s : segments) {
    if (!s.scores.count(std::string(m))) return false;
  }
  return true;
}

const SegmentRecord* EvalRun::find_segment(std::string_view id) const {
  for (const auto& s : segments) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

json to_json(const ErrorSpan& s) {
  return {{"start", s.start}, {"end", s.end}, {"severity", to_string(s.severity)}};
}

ErrorSpan span_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "span must be an object");
  ErrorSpan s;
  s.start = get_field<std::int64_t>(j, "start", "span");
  s.end = get_field<std::int64_t>(j, "end", "span");
  s.severity = parse_severity(get_field<std::string>(j, "severity", "span"));
  return s;
}

json to_json(const SegmentRecord& s) {
  json j = s.extra.is_object() ? s.extra : json::object();
  j["id"] = s.id;
  j["source"] = s.source;
  j["references"] = s.references;
  j["hypothesis"] = s.hypothesis;
  j["scores"] = s.scores;
  j["stats"] = s.stats;
  json spans = json::object();
  for (const auto& [m, list] : s.error_spans) {
    spans[m] = json::array();
    for (const auto& sp : list) spans[m].push_back(to_json(sp));
  }
  j["error_spans"] = spans;
  j["metadata"] = s.metadata;
  return j;
}

SegmentRecord segment_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "segment must be an object");
  SegmentRecord s;
  s.id = get_field<std::string>(j, "id", "segment");
  s.source = get_field<std::string>(j, "source", "segment");
  s.references = get_or<std::vector<std::string>>(j, "references", {}, "segment");
  s.hypothesis = get_field<std::string>(j, "hypothesis", "segment");
  s.scores = get_or<std::map<std::string, double>>(j, "scores", {}, "segment");
  s.stats = get_or<std::map<std::string, metrics::Stats>>(j, "stats", {}, "segment");
  if (j.contains("error_spans")) {
    const auto& spans = j.at("error_spans");
    if (!spans.is_object()) throw Error(ErrorCode::SchemaError, "segment " + s.id + ": error_spans must be an object");
    for (const auto& [m, list] : spans.items()) {
      if (!list.is_array()) throw Error(ErrorCode::SchemaError, "segment " + s.id + ": spans must be a list");
      auto& out = s.error_spans[m];
      for (const auto& sp : list) out.push_back(span_from_json(sp));
    }
  }
  s.metadata = get_or<std::map<std::string, std::string>>(j, "metadata", {}, "segment");
  s.extra = collect_extra(
      j, {"id", "source", "references", "hypothesis", "scores", "stats", "error_spans", "metadata"});
  return s;
}

namespace {

json to_json(const MetricEntry& m) {
  json j{{"source", m.source},
         {"options", m.options},
         {"aggregation", m.aggregation},
         {"orientation", m.orientation},
         {"corpus_only", m.corpus_only},
         {"warnings", m.warnings}};
  if (m.declared_corpus) j["declared_corpus"] = *m.declared_corpus;
  if (!m.header.empty()) j["header"] = m.header;
  return j;
}

MetricEntry metric_entry_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "metric entry must be an object");
  MetricEntry m;
  m.source = get_or<std::string>(j, "source", "native", "metric");
  m.options = get_or<json>(j, "options", json::object(), "metric");
  m.aggregation = get_or<std::string>(j, "aggregation", "pooled", "metric");
  m.orientation = get_or<std::string>(j, "orientation", "higher", "metric");
  m.corpus_only = get_or<bool>(j, "corpus_only", false, "metric");
  if (j.contains("declared_corpus") && !j.at("declared_corpus").is_null()) {
    m.declared_corpus = get_field<double>(j, "declared_corpus", "metric");
  }
  m.header = get_or<json>(j, "header", json::object(), "metric");
  m.warnings = get_or<std::vector<std::string>>(j, "warnings", {}, "metric");
  return m;
}

}  // namespace

json to_json(const EvalRun& run) {
  json j = run.extra.is_object() ? run.extra : json::object();
  j["schema_version"] = run.schema_version;
  j["config_hash"] = run.config_hash;
  j["created_at"] = run.created_at;
  j["task"] = run.task;
  j["model_id"] = run.model_id;
  j["config"] = run.config;
  json metrics = json::object();
  for (const auto& [name, m] : run.metrics) metrics[name] = to_json(m);
  j["metrics"] = metrics;
  j["aggregates"] = run.aggregates;
  j["details"] = run.details;
  json segs = json::array();
  for (const auto& s : run.segments) segs.push_back(to_json(s));
  j["segments"] = std::move(segs);
  j["task_reports"] = run.task_reports;
  j["warnings"] = run.warnings;
  return j;
}

EvalRun run_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "run file must be a JSON object");
  EvalRun run;
  run.schema_version = get_field<int>(j, "schema_version", "run");
  if (run.schema_version > kSchemaVersion) {
    throw Error(ErrorCode::SchemaError, "run schema_version " + std::to_string(run.schema_version) +
                                            " is newer than supported " + std::to_string(kSchemaVersion));
  }
  run.config_hash = get_or<std::string>(j, "config_hash", "", "run");
  run.created_at = get_or<std::string>(j, "created_at", "", "run");
  run.task = get_field<std::string>(j, "task", "run");
  run.model_id = get_field<std::string>(j, "model_id", "run");
  run.config = get_or<json>(j, "config", json::object(), "run");
  if (j.contains("metrics")) {
    const auto& ms = j.at("metrics");
    if (!ms.is_object()) throw Error(ErrorCode::SchemaError, "run: metrics must be an object");
    for (const auto& [name, m] : ms.items()) run.metrics[name] = metric_entry_from_json(m);
  }
  run.aggregates = get_or<std::map<std::string, double>>(j, "aggregates", {}, "run");
  run.details = get_or<std::map<std::string, json>>(j, "details", {}, "run");
  if (j.contains("segments")) {
    const auto& segs = j.at("segments");
    if (!segs.is_array()) throw Error(ErrorCode::SchemaError, "run: segments must be a list");
    run.segments.reserve(segs.size());
    for (const auto& s : segs) run.segments.push_back(segment_from_json(s));
  }
  run.task_reports = get_or<json>(j, "task_reports", json::object(), "run");
  run.warnings = get_or<std::vector<std::string>>(j, "warnings", {}, "run");
  run.extra = collect_extra(j, {"schema_version", "config_hash", "created_at", "task", "model_id", "config", "metrics",
                                "aggregates", "details", "segments", "task_reports", "warnings"});

  // Every aggregate needs its segment column unless flagged corpus-only.
  for (const auto& [name, value] : run.aggregates) {
    const auto it = run.metrics.find(name);
    if (it == run.metrics.end()) throw Error(ErrorCode::SchemaError, "aggregate '" + name + "' has no metric entry");
    if (it->second.corpus_only) continue;
    for (const auto& s : run.segments) {
      if (!s.scores.count(name)) {
        throw Error(ErrorCode::SchemaError, "segment " + s.id + " lacks a score for aggregated metric " + name);
      }
    }
  }
  return run;
}

json run_summary(const EvalRun& run, std::string_view run_id) {
  json metrics = json::object();
  for (const auto& [name, m] : run.metrics) metrics[name] = to_json(m);
  json j{{"id", run_id},
         {"schema_version", run.schema_version},
         {"config_hash", run.config_hash},
         {"created_at", run.created_at},
         {"task", run.task},
         {"model_id", run.model_id},
         {"n_segments", run.segments.size()},
         {"metrics", metrics},
         {"aggregates", run.aggregates},
         {"details", run.details},
         {"config", run.config},
         {"task_reports", json::array()},
         {"warnings", run.warnings}};
  for (const auto& [k, _] : run.task_reports.items()) j["task_reports"].push_back(k);
  return j;
}

double aggregate_values(const std::vector<double>& values, std::string_view aggregation) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "no values to aggregate");
  if (aggregation == "median") {
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : (v[mid - 1] + v[mid]) / 2.0;
  }
  if (aggregation != "mean") throw Error(ErrorCode::SchemaError, "unknown aggregation '" + std::string(aggregation) + "'");
  double sum = 0.0;
  for (double x : values) sum += x;
  return sum / static_cast<double>(values.size());
}

std::optional<double> recompute_aggregate(const EvalRun& run, const std::string& metric) {
  const auto it = run.metrics.find(metric);
  if (it == run.metrics.end() || it->second.corpus_only || run.segments.empty()) return std::nullopt;
  if (it->second.aggregation == "pooled") {
    const auto m = metrics::make_pooled_metric(metric, it->second.options);
    std::vector<metrics::Stats> stats;
    stats.reserve(run.segments.size());
    for (const auto& s : run.segments) {
      const auto st = s.stats.find(metric);
      if (st == s.stats.end()) return std::nullopt;
      stats.push_back(st->second);
    }
    return m->corpus_score(stats);
  }
  std::vector<double> values;
  values.reserve(run.segments.size());
  for (const auto& s : run.segments) {
    const auto v = s.scores.find(metric);
    if (v == s.scores.end()) return std::nullopt;
    values.push_back(v->second);
  }
  return aggregate_values(values, it->second.aggregation);
}

std::vector<std::string> consistency_warnings(const EvalRun& run) {
  std::vector<std::string> out;
  for (const auto& [name, stored] : run.aggregates) {
    std::optional<double> again;
    try {
      again = recompute_aggregate(run, name);
    } catch (const Error& e) {
      out.push_back(name + ": cannot recompute aggregate (" + e.what() + ")");
      continue;
    }
    if (!again) {
      const auto it = run.metrics.find(name);
      if (it == run.metrics.end() || !it->second.corpus_only) {
        out.push_back(name + ": aggregate has no recomputable segment column");
      }
      continue;
    }
    if (std::abs(*again - stored) > 1e-9 * std::max(1.0, std::abs(stored))) {
      std::ostringstream msg;
      msg.precision(17);
      msg << name << ": stored aggregate " << stored << " differs from recomputed " << *again;
      out.push_back(msg.str());
    }
  }
  return out;
}

void set_write_fault_hook(std::function<void(std::string_view)> hook) {
  std::lock_guard lock(g_hook_mu);
  g_write_hook = std::move(hook);
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp-" + std::to_string(::getpid()) + "-" +
                              std::to_string(counter.fetch_add(1)));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::IoError, "create " + tmp.string() + ": " + std::strerror(errno));
  try {
    const std::size_t half = content.size() / 2;
    write_all(fd, content.data(), half, tmp);
    fire_hook("partial");
    write_all(fd, content.data() + half, content.size() - half, tmp);
    fire_hook("written");
    if (::fsync(fd) != 0) throw Error(ErrorCode::IoError, "fsync " + tmp.string() + ": " + std::strerror(errno));
    fire_hook("synced");
    if (::close(fd) != 0) {
      throw Error(ErrorCode::IoError, "close " + tmp.string() + ": " + std::strerror(errno));
    }
  } catch (...) {
    ::close(fd);
    fs::remove(tmp, ec);
    throw;
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    const int err = errno;
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "rename to " + path.string() + ": " + std::strerror(err));
  }
  if (const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC); dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

void save_run(const EvalRun& run, const fs::path& path) { write_file_atomic(path, to_json(run).dump(1) + "\n"); }

EvalRun load_run(const fs::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open run file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  EvalRun run = run_from_json(j);
  if (warnings) *warnings = consistency_warnings(run);
  return run;
}

fs::path unique_run_path(const fs::path& dir, const EvalRun& run) {
  std::string stamp;
  for (char c : run.created_at) {
    if (std::isalnum(static_cast<unsigned char>(c))) stamp.push_back(c);
  }
  const std::string base = run.config_hash.substr(0, 12) + (stamp.empty() ? "" : "-" + stamp);
  fs::path candidate = dir / (base + ".json");
  for (int k = 1; fs::exists(candidate); ++k) candidate = dir / (base + "-" + std::to_string(k) + ".json");
  return candidate;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace mtlens
