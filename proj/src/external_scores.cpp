#include "mtlens/external_scores.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "mtlens/corpus.hpp"
#include "mtlens/errors.hpp"
#include "mtlens/metric_registry.hpp"
#include "mtlens/unicode.hpp"

extern char** environ;

namespace fs = std::filesystem;
using nlohmann::json;

namespace mtlens::external {
namespace {

const std::set<std::string> kHeaderKeys = {"metric", "model_id", "task", "aggregation", "corpus"};

std::string id_string(const json& v, std::size_t line) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw Error(ErrorCode::SchemaError, "line " + std::to_string(line) + ": id must be a string or integer");
}

std::string header_string(const json& h, const char* key) {
  const auto it = h.find(key);
  if (it == h.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw Error(ErrorCode::SchemaError, std::string("score file header needs a non-empty string '") + key + "'");
  }
  return it->get<std::string>();
}

std::string summarize_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < 5; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > 5) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

bool same_task(const std::string& a, const std::string& b) {
  try {
    return corpus::parse_task_name(a) == corpus::parse_task_name(b);
  } catch (const Error&) {
    return a == b;
  }
}

}  // namespace

ScoreFile parse_score_file(std::string_view text, const json& header_defaults) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) lines.emplace_back(line_no, line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (lines.empty()) throw Error(ErrorCode::SchemaError, "score file is empty");

  auto parse_line = [](std::size_t n, std::string_view l) {
    try {
      auto j = json::parse(l);
      if (!j.is_object()) throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": expected an object");
      return j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": " + e.what());
    }
  };

  json header = parse_line(lines[0].first, lines[0].second);
  for (const auto& [k, v] : header_defaults.items()) {
    if (!header.contains(k)) header[k] = v;
  }
  ScoreFile f;
  f.metric = header_string(header, "metric");
  if (!find_metric(f.metric)) throw Error(ErrorCode::SchemaError, "unknown metric '" + f.metric + "'");
  f.model_id = header_string(header, "model_id");
  f.task = header_string(header, "task");
  if (header.contains("aggregation")) {
    if (!header["aggregation"].is_string()) throw Error(ErrorCode::SchemaError, "aggregation must be a string");
    f.aggregation = header["aggregation"].get<std::string>();
  }
  if (f.aggregation != "mean" && f.aggregation != "median") {
    throw Error(ErrorCode::SchemaError, "unknown aggregation '" + f.aggregation + "'");
  }
  if (header.contains("corpus") && !header["corpus"].is_null()) {
    if (!header["corpus"].is_number()) throw Error(ErrorCode::SchemaError, "corpus must be a number");
    f.corpus = header["corpus"].get<double>();
  }
  for (const auto& [k, v] : header.items()) {
    if (!kHeaderKeys.count(k)) f.header_extra[k] = v;
  }

  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto [n, l] = lines[i];
    const json r = parse_line(n, l);
    for (const auto& [k, _] : r.items()) {
      if (k != "id" && k != "value" && k != "spans") {
        throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": unknown field '" + k + "'");
      }
    }
    if (!r.contains("id") || !r.contains("value")) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": records need 'id' and 'value'");
    }
    ScoreRecord rec;
    rec.id = id_string(r["id"], n);
    if (!r["value"].is_number()) throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": value must be a number");
    rec.value = r["value"].get<double>();
    if (!std::isfinite(rec.value)) throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": value not finite");
    if (r.contains("spans") && !r["spans"].is_null()) {
      if (!r["spans"].is_array()) throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": spans must be a list");
      std::vector<ErrorSpan> spans;
      for (const auto& s : r["spans"]) spans.push_back(span_from_json(s));
      rec.spans = std::move(spans);
    }
    if (!seen.insert(rec.id).second) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(n) + ": duplicate id '" + rec.id + "'");
    }
    f.records.push_back(std::move(rec));
  }

  if (f.records.empty() && !f.corpus) {
    throw Error(ErrorCode::SchemaError, "score file has neither segment records nor a corpus value");
  }
  if (f.corpus && !f.records.empty()) {
    std::vector<double> values;
    for (const auto& r : f.records) values.push_back(r.value);
    const double agg = aggregate_values(values, f.aggregation);
    if (std::abs(agg - *f.corpus) > 1e-6) {
      std::ostringstream msg;
      msg << "declared corpus " << *f.corpus << " does not match the " << f.aggregation << " of segment values ("
          << agg << ")";
      throw Error(ErrorCode::SchemaError, msg.str());
    }
  }
  return f;
}

ScoreFile read_score_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open score file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_score_file(ss.str());
}

std::string serialize_score_file(const ScoreFile& f) {
  json header = f.header_extra.is_object() ? f.header_extra : json::object();
  header["metric"] = f.metric;
  header["model_id"] = f.model_id;
  header["task"] = f.task;
  header["aggregation"] = f.aggregation;
  if (f.corpus) header["corpus"] = *f.corpus;
  std::string out = header.dump() + "\n";
  for (const auto& r : f.records) {
    json j{{"id", r.id}, {"value", r.value}};
    if (r.spans) {
      j["spans"] = json::array();
      for (const auto& s : *r.spans) j["spans"].push_back(to_json(s));
    }
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<ErrorSpan> normalize_spans(std::vector<ErrorSpan> spans, std::string_view hypothesis) {
  const auto len = static_cast<std::int64_t>(unicode::decode(hypothesis).size());
  for (const auto& s : spans) {
    if (s.start < 0 || s.end <= s.start || s.end > len) {
      throw Error(ErrorCode::SpanOutOfRange, "span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                                 ") invalid for hypothesis of length " + std::to_string(len));
    }
  }
  std::sort(spans.begin(), spans.end(), [](const ErrorSpan& a, const ErrorSpan& b) {
    return std::tie(a.start, a.end) < std::tie(b.start, b.end);
  });
  std::vector<ErrorSpan> out;
  for (const auto& s : spans) {
    if (!out.empty() && s.start < out.back().end) {
      auto& last = out.back();
      last.end = std::max(last.end, s.end);
      last.severity = std::max(last.severity, s.severity);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

void ingest_scores(EvalRun& run, const ScoreFile& file, const IngestOptions& opts) {
  const std::string metric = canonical_metric_name(file.metric);
  const MetricInfo* info = find_metric(metric);
  if (!info) throw Error(ErrorCode::SchemaError, "unknown metric '" + file.metric + "'");
  if (!same_task(file.task, run.task)) {
    throw Error(ErrorCode::SchemaError, "score file task '" + file.task + "' does not match run task '" + run.task + "'");
  }
  if (file.model_id != run.model_id) {
    throw Error(ErrorCode::SchemaError,
                "score file model '" + file.model_id + "' does not match run model '" + run.model_id + "'");
  }
  if (run.has_metric(metric) && !opts.force) {
    throw Error(ErrorCode::DuplicateMetric, "run already has metric '" + metric + "' (use --force to replace)");
  }

  // Validate everything before touching the run.
  std::map<std::string, const ScoreRecord*> by_id;
  for (const auto& r : file.records) by_id[r.id] = &r;
  std::vector<std::vector<ErrorSpan>> spans(run.segments.size());
  if (!file.records.empty()) {
    std::vector<std::string> missing;
    std::set<std::string> run_ids;
    for (const auto& s : run.segments) {
      run_ids.insert(s.id);
      if (!by_id.count(s.id)) missing.push_back(s.id);
    }
    std::vector<std::string> unknown;
    for (const auto& r : file.records) {
      if (!run_ids.count(r.id)) unknown.push_back(r.id);
    }
    if (!missing.empty() || !unknown.empty()) {
      std::string msg = "score ids do not match run segment ids";
      if (!missing.empty()) msg += "; missing: " + summarize_ids(missing);
      if (!unknown.empty()) msg += "; not in run: " + summarize_ids(unknown);
      throw Error(ErrorCode::IdMismatch, msg);
    }
    for (std::size_t i = 0; i < run.segments.size(); ++i) {
      const auto* rec = by_id.at(run.segments[i].id);
      if (rec->spans) spans[i] = normalize_spans(*rec->spans, run.segments[i].hypothesis);
    }
  }

  // Replace any previous column.
  for (auto& s : run.segments) {
    s.scores.erase(metric);
    s.stats.erase(metric);
    s.error_spans.erase(metric);
  }
  run.aggregates.erase(metric);
  run.details.erase(metric);

  MetricEntry entry;
  entry.source = opts.source;
  entry.aggregation = file.aggregation;
  entry.orientation = std::string(to_string(info->orientation));
  entry.declared_corpus = file.corpus;
  json header = file.header_extra.is_object() ? file.header_extra : json::object();
  header["metric"] = file.metric;
  header["model_id"] = file.model_id;
  header["task"] = file.task;
  header["aggregation"] = file.aggregation;
  if (file.corpus) header["corpus"] = *file.corpus;
  entry.header = header;

  if (file.records.empty()) {
    entry.corpus_only = true;
    entry.warnings.push_back("corpus-only score: no segment column");
    run.aggregates[metric] = *file.corpus;
  } else {
    std::vector<double> values;
    values.reserve(run.segments.size());
    for (std::size_t i = 0; i < run.segments.size(); ++i) {
      auto& seg = run.segments[i];
      const auto* rec = by_id.at(seg.id);
      seg.scores[metric] = rec->value;
      values.push_back(rec->value);
      if (rec->spans) seg.error_spans[metric] = std::move(spans[i]);
    }
    run.aggregates[metric] = aggregate_values(values, file.aggregation);
  }
  run.metrics[metric] = std::move(entry);
}

ScoreFile export_scores(const EvalRun& run, const std::string& metric) {
  const auto it = run.metrics.find(metric);
  if (it == run.metrics.end()) throw Error(ErrorCode::MetricMissing, "run has no metric '" + metric + "'");
  const auto& entry = it->second;
  ScoreFile f;
  const json& h = entry.header;
  f.metric = h.value("metric", metric);
  f.model_id = h.value("model_id", run.model_id);
  f.task = h.value("task", run.task);
  f.aggregation = entry.aggregation == "pooled" ? "mean" : entry.aggregation;
  f.corpus = entry.declared_corpus;
  if (entry.source == "native") f.corpus = run.aggregates.at(metric);
  for (const auto& [k, v] : h.items()) {
    if (!kHeaderKeys.count(k)) f.header_extra[k] = v;
  }
  if (entry.corpus_only) return f;
  for (const auto& s : run.segments) {
    ScoreRecord r;
    r.id = s.id;
    r.value = s.scores.at(metric);
    if (const auto sp = s.error_spans.find(metric); sp != s.error_spans.end()) r.spans = sp->second;
    f.records.push_back(std::move(r));
  }
  return f;
}

std::vector<PluginSegment> plugin_segments(const EvalRun& run) {
  std::vector<PluginSegment> out;
  out.reserve(run.segments.size());
  for (const auto& s : run.segments) out.push_back({s.id, s.source, s.references, s.hypothesis});
  return out;
}

std::string build_request(const std::string& task, const std::string& metric,
                          const std::vector<PluginSegment>& segments) {
  std::string out = json{{"task", task}, {"metric", metric}}.dump() + "\n";
  for (const auto& s : segments) {
    json j{{"id", s.id}, {"src", s.source}, {"hyp", s.hypothesis}};
    if (!s.references.empty()) j["ref"] = s.references.front();
    if (s.references.size() > 1) j["refs"] = s.references;
    out += j.dump() + "\n";
  }
  return out;
}

ProcessResult run_process(const PluginSpec& spec, std::string_view input) {
  static std::once_flag sigpipe_once;
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

  // Environment assembled before fork so the child only calls exec.
  std::vector<std::string> env_strings;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    const auto key = kv.substr(0, kv.find('='));
    if (!spec.env.count(std::string(key))) env_strings.emplace_back(kv);
  }
  for (const auto& [k, v] : spec.env) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string shell = "/bin/sh";
  std::string dash_c = "-c";
  std::string cmd = spec.command;
  char* argv[] = {shell.data(), dash_c.data(), cmd.data(), nullptr};

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::IoError, std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::IoError, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::signal(SIGPIPE, SIG_DFL);
    ::execve(shell.c_str(), argv, envp.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  int in_fd = in_pipe[1];
  ::fcntl(in_fd, F_SETFL, O_NONBLOCK);
  if (input.empty()) {
    ::close(in_fd);
    in_fd = -1;
  }

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + spec.timeout;
  std::size_t written = 0;
  int out_fd = out_pipe[0];
  int err_fd = err_pipe[0];
  bool timed_out = false;
  char buf[65536];
  while (out_fd >= 0 || err_fd >= 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd fds[3];
    int nfds = 0;
    if (out_fd >= 0) fds[nfds++] = {out_fd, POLLIN, 0};
    if (err_fd >= 0) fds[nfds++] = {err_fd, POLLIN, 0};
    if (in_fd >= 0) fds[nfds++] = {in_fd, POLLOUT, 0};
    const int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < nfds; ++i) {
      if (!fds[i].revents) continue;
      if (fds[i].fd == in_fd) {
        const ssize_t w = ::write(in_fd, input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN && errno != EINTR) written = input.size();  // reader went away
        if (written >= input.size()) {
          ::close(in_fd);
          in_fd = -1;
        }
        continue;
      }
      const ssize_t r = ::read(fds[i].fd, buf, sizeof buf);
      if (r > 0) {
        (fds[i].fd == out_fd ? result.out : result.err).append(buf, static_cast<std::size_t>(r));
      } else if (r == 0 || (errno != EAGAIN && errno != EINTR)) {
        ::close(fds[i].fd);
        (fds[i].fd == out_fd ? out_fd : err_fd) = -1;
      }
    }
  }
  if (in_fd >= 0) ::close(in_fd);
  if (out_fd >= 0) ::close(out_fd);
  if (err_fd >= 0) ::close(err_fd);

  int status = 0;
  // The child may close its pipes and keep running.
  while (!timed_out) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid || (r < 0 && errno != EINTR)) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      timed_out = true;
      break;
    }
    ::usleep(5000);
  }
  if (timed_out) {
    ::kill(-pid, SIGKILL);
    ::waitpid(pid, &status, 0);
    throw Error(ErrorCode::PluginTimeout, "plugin exceeded " + std::to_string(spec.timeout.count()) +
                                              " ms: " + spec.command);
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

ScoreFile run_plugin(const PluginSpec& spec, const std::string& task, const std::string& model_id,
                     const std::string& metric, const std::vector<PluginSegment>& segments) {
  const auto res = run_process(spec, build_request(task, metric, segments));
  if (res.exit_code != 0) {
    throw Error(ErrorCode::PluginCrash,
                "plugin exited with status " + std::to_string(res.exit_code) + ": " + res.err);
  }
  ScoreFile f = parse_score_file(res.out, json{{"metric", metric}, {"task", task}, {"model_id", model_id}});
  if (canonical_metric_name(f.metric) != canonical_metric_name(metric)) {
    throw Error(ErrorCode::SchemaError, "plugin answered metric '" + f.metric + "' for request '" + metric + "'");
  }
  return f;
}

}  // namespace mtlens::external
