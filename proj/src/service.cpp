#include "mtlens/service.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "mtlens/corpus.hpp"
#include "mtlens/errors.hpp"
#include "mtlens/metric_registry.hpp"
#include "mtlens/runner.hpp"
#include "mtlens/significance.hpp"

namespace mtlens::service {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxResamples = 100000;

// Failures that are not library errors.
struct HttpError {
  int status;
  std::string code;
  std::string message;
  std::string allow;
};

[[noreturn]] void not_found(const std::string& what) { throw HttpError{404, "NotFound", what, {}}; }
[[noreturn]] void unprocessable(const std::string& what) { throw HttpError{422, "ValidationError", what, {}}; }

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::MetricMissing:
    case ErrorCode::AlignmentError:
    case ErrorCode::DegenerateInput: return 409;
    case ErrorCode::ValidationError:
    case ErrorCode::MalformedTaskName: return 422;
    default: return 500;
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '/') {
      ++i;
      continue;
    }
    const auto j = path.find('/', i);
    parts.push_back(path.substr(i, j == std::string::npos ? std::string::npos : j - i));
    if (j == std::string::npos) break;
    i = j;
  }
  return parts;
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.front() != '.' && id.find('/') == std::string::npos && id.find('\\') == std::string::npos;
}

std::optional<std::string> query(const Request& r, const std::string& key) {
  const auto it = r.query.find(key);
  if (it == r.query.end()) return std::nullopt;
  return it->second;
}

std::size_t query_size(const Request& r, const std::string& key, std::size_t fallback) {
  const auto v = query(r, key);
  if (!v) return fallback;
  std::size_t out = 0;
  const auto* end = v->data() + v->size();
  const auto [p, ec] = std::from_chars(v->data(), end, out);
  if (v->empty() || ec != std::errc() || p != end) unprocessable(key + " must be a non-negative integer");
  return out;
}

void require_method(const Request& r, const std::string& allowed) {
  if (r.method != allowed) {
    throw HttpError{405, "MethodNotAllowed", r.method + " not allowed on " + r.path, allowed + ", OPTIONS"};
  }
}

json summary(const LoadedRun& l, const std::string& id) {
  auto j = run_summary(l.run, id);
  j["consistency_warnings"] = l.consistency_warnings;
  return j;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i <= s.size()) {
    const auto j = std::min(s.find(',', i), s.size());
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

}  // namespace

json error_body(std::string_view code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

namespace {

// Error::what() starts with the code; the body carries it separately.
json library_error_body(const Error& e) {
  const auto code = to_string(e.code());
  std::string msg = e.what();
  if (msg.rfind(std::string(code) + ": ", 0) == 0) msg.erase(0, code.size() + 2);
  return service::error_body(code, msg);
}

}  // namespace

// ---------------------------------------------------------------------------

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) {}

std::vector<std::string> RunStore::ids() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (fs::directory_iterator it(dir_, ec), end; !ec && it != end; it.increment(ec)) {
    const auto& p = it->path();
    const auto name = p.filename().string();
    if (name.empty() || name.front() == '.' || p.extension() != ".json") continue;
    if (!it->is_regular_file(ec)) continue;
    out.push_back(p.stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<const LoadedRun> RunStore::get(const std::string& id) const {
  if (!valid_id(id)) return nullptr;
  const auto path = dir_ / (id + ".json");
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) return nullptr;
  const auto mtime = fs::last_write_time(path, ec);
  if (ec) return nullptr;
  {
    std::lock_guard lock(mu_);
    const auto it = cache_.find(id);
    if (it != cache_.end() && it->second.mtime == mtime && it->second.size == size) return it->second.run;
  }
  auto loaded = std::make_shared<LoadedRun>();
  loaded->run = load_run(path, &loaded->consistency_warnings);
  std::lock_guard lock(mu_);
  cache_[id] = Entry{mtime, size, loaded};
  return loaded;
}

// ---------------------------------------------------------------------------

Service::Service(fs::path runs_dir, ServiceOptions opts) : store_(std::move(runs_dir)), opts_(std::move(opts)) {}

Response Service::handle(const Request& req) const {
  Response res;
  try {
    res = dispatch(req);
  } catch (const HttpError& e) {
    res.status = e.status;
    res.body = error_body(e.code, e.message);
    if (!e.allow.empty()) res.headers["Allow"] = e.allow;
  } catch (const Error& e) {
    res.status = status_for(e.code());
    res.body = library_error_body(e);
  } catch (const std::exception& e) {
    res.status = 500;
    res.body = error_body("Internal", e.what());
  }
  res.headers["Access-Control-Allow-Origin"] = opts_.cors_origin;
  return res;
}

Response Service::dispatch(const Request& req) const {
  if (req.method == "OPTIONS") {
    Response r;
    r.status = 204;
    r.body = nullptr;
    r.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS";
    r.headers["Access-Control-Allow-Headers"] = "Content-Type";
    r.headers["Access-Control-Max-Age"] = "600";
    return r;
  }
  const auto parts = split_path(req.path);
  Response res;

  auto load = [&](const std::string& id) {
    auto l = store_.get(id);
    if (!l) not_found("no run '" + id + "'");
    return l;
  };

  if (parts.size() == 1 && parts[0] == "runs") {
    require_method(req, "GET");
    json runs = json::array();
    json invalid = json::array();
    for (const auto& id : store_.ids()) {
      try {
        if (auto l = store_.get(id)) runs.push_back(summary(*l, id));
      } catch (const Error& e) {
        invalid.push_back({{"id", id}, {"error", library_error_body(e)["error"]}});
      }
    }
    res.body = {{"runs", runs}, {"invalid", invalid}};
    return res;
  }

  if (parts.size() >= 2 && parts[0] == "runs") {
    const auto& id = parts[1];
    if (parts.size() == 2) {
      require_method(req, "GET");
      res.body = summary(*load(id), id);
      return res;
    }
    const auto& what = parts[2];
    if (what == "segments" && parts.size() == 3) {
      require_method(req, "GET");
      const auto l = load(id);
      const auto& segs = l->run.segments;
      const auto offset = query_size(req, "offset", 0);
      const auto limit = query_size(req, "limit", opts_.default_limit);
      if (limit == 0 || limit > opts_.max_limit) {
        unprocessable("limit must be between 1 and " + std::to_string(opts_.max_limit));
      }
      const auto order = query(req, "order").value_or("asc");
      if (order != "asc" && order != "desc") unprocessable("order must be asc or desc");
      std::vector<std::size_t> idx(segs.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      const auto sort = query(req, "sort");
      if (sort) {
        const auto metric = canonical_metric_name(*sort);
        if (!l->run.has_segment_metric(metric)) {
          throw Error(ErrorCode::MetricMissing, "run " + id + " has no per-segment " + metric + " scores");
        }
        const bool desc = order == "desc";
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
          const double x = segs[a].scores.at(metric);
          const double y = segs[b].scores.at(metric);
          return desc ? x > y : x < y;
        });
      } else if (order == "desc") {
        std::reverse(idx.begin(), idx.end());
      }
      json page = json::array();
      for (std::size_t k = offset; k < idx.size() && k < offset + limit; ++k) page.push_back(to_json(segs[idx[k]]));
      res.body = {{"run_id", id},
                  {"total", segs.size()},
                  {"offset", offset},
                  {"limit", limit},
                  {"sort", sort ? json(canonical_metric_name(*sort)) : json(nullptr)},
                  {"order", order},
                  {"segments", page}};
      return res;
    }
    if (what == "segments" && parts.size() >= 4) {
      require_method(req, "GET");
      const auto l = load(id);
      // Segment ids may contain slashes.
      std::string seg = parts[3];
      for (std::size_t k = 4; k < parts.size(); ++k) seg += "/" + parts[k];
      const auto* s = l->run.find_segment(seg);
      if (!s) not_found("run " + id + " has no segment '" + seg + "'");
      res.body = to_json(*s);
      res.body["run_id"] = id;
      return res;
    }
    if (what == "length" && parts.size() == 3) {
      require_method(req, "GET");
      const auto metric = query(req, "metric");
      if (!metric || metric->empty()) unprocessable("metric query parameter is required");
      const auto l = load(id);
      res.body = runner::to_json(runner::length_breakdown(l->run, *metric));
      res.body["run_id"] = id;
      return res;
    }
    if ((what == "toxicity" || what == "gender" || what == "perturbation") && parts.size() == 3) {
      require_method(req, "GET");
      const auto l = load(id);
      if (!l->run.task_reports.contains(what)) not_found("run " + id + " has no " + what + " report");
      res.body = l->run.task_reports.at(what);
      res.body["run_id"] = id;
      return res;
    }
  }

  if (parts.size() == 1 && parts[0] == "perturbations") {
    require_method(req, "GET");
    const auto task_q = query(req, "task");
    if (!task_q || task_q->empty()) unprocessable("task query parameter is required");
    const auto task = corpus::parse_task_name(*task_q).canonical();
    const auto models_q = query(req, "models");
    const auto wanted = models_q ? split_list(*models_q) : std::vector<std::string>{};
    const std::set<std::string> wanted_set(wanted.begin(), wanted.end());
    // Latest run per model wins (created_at, then id).
    std::map<std::string, std::pair<std::string, std::shared_ptr<const LoadedRun>>> best;
    for (const auto& id : store_.ids()) {
      std::shared_ptr<const LoadedRun> l;
      try {
        l = store_.get(id);
      } catch (const Error&) {
        continue;
      }
      if (!l || l->run.task != task || !l->run.task_reports.contains("perturbation")) continue;
      if (!wanted_set.empty() && !wanted_set.count(l->run.model_id)) continue;
      auto& slot = best[l->run.model_id];
      if (!slot.second || std::tie(l->run.created_at, id) > std::tie(slot.second->run.created_at, slot.first)) {
        slot = {id, l};
      }
    }
    json models = json::array();
    for (const auto& [model, entry] : best) {
      json m = entry.second->run.task_reports.at("perturbation");
      m["model_id"] = model;
      m["run_id"] = entry.first;
      models.push_back(m);
    }
    json missing = json::array();
    for (const auto& m : wanted) {
      if (!best.count(m)) missing.push_back(m);
    }
    res.body = {{"task", task}, {"models", models}, {"missing", missing}};
    return res;
  }

  if (parts.size() == 1 && parts[0] == "significance") {
    require_method(req, "POST");
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      unprocessable(std::string("request body is not valid JSON: ") + e.what());
    }
    if (!body.is_object()) unprocessable("request body must be an object");
    for (const char* k : {"run_a", "run_b", "metric"}) {
      if (!body.contains(k) || !body[k].is_string()) unprocessable(std::string(k) + " must be a string");
    }
    for (const auto& [k, _] : body.items()) {
      static const std::set<std::string> known = {"run_a", "run_b", "metric", "n", "seed", "alpha"};
      if (!known.count(k)) unprocessable("unknown field '" + k + "'");
    }
    significance::BootstrapOptions opts;
    if (body.contains("n")) {
      if (!body["n"].is_number_unsigned() || body["n"].get<std::uint64_t>() == 0 ||
          body["n"].get<std::uint64_t>() > kMaxResamples) {
        unprocessable("n must be an integer in [1, " + std::to_string(kMaxResamples) + "]");
      }
      opts.n_resamples = body["n"].get<std::size_t>();
    }
    if (body.contains("seed")) {
      if (!body["seed"].is_number_unsigned()) unprocessable("seed must be a non-negative integer");
      opts.seed = body["seed"].get<std::uint64_t>();
    }
    if (body.contains("alpha")) {
      if (!body["alpha"].is_number()) unprocessable("alpha must be a number");
      opts.alpha = body["alpha"].get<double>();
    }
    const auto ida = body["run_a"].get<std::string>();
    const auto idb = body["run_b"].get<std::string>();
    const auto a = load(ida);
    const auto b = load(idb);
    res.body = significance::to_json(significance::compare_runs(a->run, b->run, body["metric"], opts));
    res.body["run_a"] = ida;
    res.body["run_b"] = idb;
    return res;
  }

  not_found("no route for " + req.path);
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  const std::string host = colon == std::string::npos ? "127.0.0.1" : bind.substr(0, colon);
  const std::string port_s = colon == std::string::npos ? bind : bind.substr(colon + 1);
  int port = -1;
  const auto [p, ec] = std::from_chars(port_s.data(), port_s.data() + port_s.size(), port);
  if (port_s.empty() || ec != std::errc() || p != port_s.data() + port_s.size() || port < 0 || port > 65535 ||
      host.empty()) {
    throw Error(ErrorCode::ValidationError, "bind address must be host:port, got '" + bind + "'");
  }
  return {host, port};
}

}  // namespace mtlens::service
