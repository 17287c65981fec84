#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "mtlens/corpus.hpp"
#include "mtlens/errors.hpp"
#include "mtlens/external_scores.hpp"
#include "mtlens/perturb.hpp"
#include "mtlens/results.hpp"
#include "mtlens/runner.hpp"
#include "mtlens/service.hpp"
#include "mtlens/significance.hpp"

namespace fs = std::filesystem;
using namespace mtlens;

namespace {

service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

// A run is named by path or by id inside the runs directory.
fs::path resolve_run(const std::string& run, const fs::path& runs_dir) {
  if (fs::is_regular_file(run)) return run;
  const auto by_id = runs_dir / (run + ".json");
  if (fs::is_regular_file(by_id)) return by_id;
  throw Error(ErrorCode::IoError, "no run file '" + run + "' (looked in " + runs_dir.string() + ")");
}

int cmd_run(const std::string& config, const std::string& created_at) {
  const auto cfg = runner::load_config(config);
  const auto out = runner::run_task(cfg, {created_at, true});
  for (const auto& w : out.run.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << out.path.string() << "\n";
  return 0;
}

int cmd_ingest(const std::string& run_arg, const std::string& runs_dir, const std::string& file, bool force) {
  const auto path = resolve_run(run_arg, runs_dir);
  auto run = load_run(path);
  external::IngestOptions opts;
  opts.force = force;
  external::ingest_scores(run, external::read_score_file(file), opts);
  save_run(run, path);
  std::cout << path.string() << "\n";
  return 0;
}

int cmd_perturb(const std::string& task_name, const std::string& kind, double lambda, std::uint64_t seed,
                const std::string& data_root, const std::string& out) {
  const auto task = corpus::parse_task_name(task_name);
  const auto k = perturb::parse_noise_kind(kind);
  if (!k) throw Error(ErrorCode::ValidationError, "unknown noise kind '" + kind + "'");
  const perturb::NoiseSpec spec{*k, lambda, seed};
  perturb::validate(spec);
  const auto c = corpus::load_corpus(task, data_root);
  const auto paths = perturb::export_perturbed(perturb::perturb_corpus(c, spec), out);
  std::cout << paths.source.string() << "\n" << paths.audit.string() << "\n";
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& runs_dir, const std::string& metric,
                const significance::BootstrapOptions& opts) {
  const auto ra = load_run(resolve_run(a, runs_dir));
  const auto rb = load_run(resolve_run(b, runs_dir));
  std::cout << significance::to_json(significance::compare_runs(ra, rb, metric, opts)).dump(2) << "\n";
  return 0;
}

int cmd_serve(const std::string& runs_dir, const std::string& bind, const std::string& origin) {
  if (!fs::is_directory(runs_dir)) throw Error(ErrorCode::IoError, "runs directory not found: " + runs_dir);
  const auto [host, port] = service::parse_bind(bind);
  service::ServiceOptions opts;
  opts.cors_origin = origin;
  service::HttpServer server(std::make_shared<service::Service>(runs_dir, opts));
  const int bound = server.bind(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Machine translation evaluation toolkit"};
  app.require_subcommand(1);

  std::string config, created_at;
  auto* run = app.add_subcommand("run", "Evaluate a system output described by a config file");
  run->add_option("--config", config, "YAML run config")->required();
  run->add_option("--created-at", created_at, "Fixed timestamp for reproducible output");

  std::string ingest_run, ingest_file, runs_dir = "runs";
  bool force = false;
  auto* ingest = app.add_subcommand("ingest-scores", "Attach an external score file to a run");
  ingest->add_option("--run", ingest_run, "Run id or path")->required();
  ingest->add_option("--file", ingest_file, "Score file (JSON lines)")->required();
  ingest->add_option("--runs", runs_dir, "Runs directory for ids");
  ingest->add_flag("--force", force, "Replace an existing metric column");

  std::string task, kind, data_root = ".", out = "perturbed";
  double lambda = 0.0;
  std::uint64_t seed = 42;
  auto* pert = app.add_subcommand("perturb", "Write a perturbed source file and its audit log");
  pert->add_option("--task", task, "Task name")->required();
  pert->add_option("--kind", kind, "swap | chardupe | chardrop")->required();
  pert->add_option("--lambda", lambda, "Fraction of eligible words to alter")->required();
  pert->add_option("--seed", seed, "Random seed");
  pert->add_option("--data-root", data_root, "Dataset root");
  pert->add_option("--out", out, "Output directory");

  std::string run_a, run_b, metric;
  significance::BootstrapOptions bopts;
  auto* cmp = app.add_subcommand("compare", "Paired bootstrap test between two runs");
  cmp->add_option("--run-a", run_a, "Run id or path")->required();
  cmp->add_option("--run-b", run_b, "Run id or path")->required();
  cmp->add_option("--metric", metric, "Metric name")->required();
  cmp->add_option("--n", bopts.n_resamples, "Resamples");
  cmp->add_option("--seed", bopts.seed, "Random seed");
  cmp->add_option("--alpha", bopts.alpha, "Significance level");
  cmp->add_option("--runs", runs_dir, "Runs directory for ids");

  std::string bind = "127.0.0.1:8080", origin = "*";
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API over a runs directory");
  serve->add_option("--runs", runs_dir, "Runs directory");
  serve->add_option("--bind", bind, "host:port");
  serve->add_option("--cors-origin", origin, "Allowed origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(config, created_at);
    if (*ingest) return cmd_ingest(ingest_run, runs_dir, ingest_file, force);
    if (*pert) return cmd_perturb(task, kind, lambda, seed, data_root, out);
    if (*cmp) return cmd_compare(run_a, run_b, runs_dir, metric, bopts);
    if (*serve) return cmd_serve(runs_dir, bind, origin);
  } catch (const std::exception& e) {
    std::cerr << "mtlens: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
