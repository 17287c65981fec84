#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>

#include "mtlens/errors.hpp"
#include "mtlens/results.hpp"
#include "test_util.hpp"

using namespace mtlens;
namespace fs = std::filesystem;
namespace mt = mtlens::testing;
using nlohmann::json;

namespace {

double random_double(mt::SentenceGen& gen) {
  // Mix awkward magnitudes with plain ones.
  switch (gen.pick(4)) {
    case 0: return std::ldexp(static_cast<double>(gen.engine()() >> 11), -53);
    case 1: return -1e-300 * static_cast<double>(gen.pick(1000));
    case 2: return 1.0 / 3.0 * static_cast<double>(gen.pick(100));
    default: return static_cast<double>(gen.pick(101));
  }
}

json random_extra(mt::SentenceGen& gen) {
  json j = json::object();
  if (gen.pick(2)) return j;
  j["x_note"] = gen.sentence(0, 4);
  j["x_nested"] = {{"list", {1, 2.5, "three", nullptr}}, {"flag", gen.pick(2) == 1}};
  return j;
}

EvalRun random_run(mt::SentenceGen& gen) {
  EvalRun run;
  run.config_hash = std::to_string(gen.engine()());
  run.created_at = "2026-01-0" + std::to_string(1 + gen.pick(9)) + "T00:00:00Z";
  run.task = "en_de_flores_devtest";
  run.model_id = gen.sentence(1, 2, false);
  run.config = {{"seed", gen.pick(100)}, {"metrics", {"bleu"}}};
  const std::vector<std::string> cols = {"comet", "bleu", "metricx"};
  const std::size_t n = gen.pick(6);
  for (std::size_t i = 0; i < n; ++i) {
    SegmentRecord s;
    s.id = "seg-" + std::to_string(i);
    s.source = gen.sentence(0, 8);
    s.hypothesis = gen.sentence(0, 8);
    for (std::size_t r = gen.pick(3); r > 0; --r) s.references.push_back(gen.sentence(1, 8));
    for (const auto& c : cols) s.scores[c] = random_double(gen);
    s.stats["bleu"] = {static_cast<std::int64_t>(gen.pick(50)), 7, 3, 2, 1, 0, 5, 4, 3, 2};
    if (gen.pick(2)) {
      s.error_spans["xcomet"] = {{0, 3, Severity::Minor}, {4, 9, Severity::Critical}};
      s.error_spans["gemba"] = {};
    }
    if (gen.pick(2)) s.metadata["category"] = gen.word();
    s.extra = random_extra(gen);
    run.segments.push_back(std::move(s));
  }
  for (const auto& c : cols) {
    MetricEntry e;
    e.source = c == "bleu" ? "native" : "file";
    e.aggregation = c == "bleu" ? "pooled" : (gen.pick(2) ? "mean" : "median");
    e.orientation = c == "metricx" ? "lower" : "higher";
    if (gen.pick(2)) e.header = {{"metric", c}, {"version", "1.0"}};
    if (gen.pick(3) == 0) e.warnings = {"declared corpus differs"};
    run.metrics[c] = e;
    if (n) run.aggregates[c] = random_double(gen);
  }
  MetricEntry only;
  only.source = "file";
  only.aggregation = "mean";
  only.corpus_only = true;
  only.declared_corpus = random_double(gen);
  run.metrics["bleurt"] = only;
  run.aggregates["bleurt"] = *only.declared_corpus;
  run.details["bleu"] = {{"bp", random_double(gen)}, {"signature", "nrefs:1"}};
  if (gen.pick(2)) run.task_reports["toxicity"] = {{"overall_rate", 0.25}};
  if (gen.pick(2)) run.warnings = {"something odd"};
  run.extra = random_extra(gen);
  return run;
}

// Run whose stored aggregates match recomputation.
EvalRun consistent_run() {
  EvalRun run;
  run.task = "en_de_flores_devtest";
  run.model_id = "m";
  const auto bleu = metrics::make_pooled_metric("bleu");
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"the cat sat on the mat", "the cat sat on the mat"},
      {"a dog ran", "the dog ran away"},
      {"hello there world", "hello world"}};
  std::vector<metrics::Stats> all;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    SegmentRecord s;
    s.id = std::to_string(i + 1);
    s.hypothesis = pairs[i].first;
    s.references = {pairs[i].second};
    s.stats["bleu"] = bleu->segment_stats(s.hypothesis, s.references);
    s.scores["bleu"] = bleu->segment_score(s.stats["bleu"]);
    s.scores["comet"] = 0.5 + 0.1 * static_cast<double>(i);
    all.push_back(s.stats["bleu"]);
    run.segments.push_back(s);
  }
  run.metrics["bleu"] = MetricEntry{};
  MetricEntry comet;
  comet.source = "file";
  comet.aggregation = "median";
  run.metrics["comet"] = comet;
  run.aggregates["bleu"] = bleu->corpus_score(all);
  run.aggregates["comet"] = 0.6;
  return run;
}

}  // namespace

TEST(Results, RoundTripProperty) {
  mt::SentenceGen gen(5);
  for (int i = 0; i < 200; ++i) {
    const auto run = random_run(gen);
    const auto j = to_json(run);
    const auto back = run_from_json(json::parse(j.dump()));
    ASSERT_EQ(back, run) << j.dump();
    EXPECT_EQ(to_json(back).dump(), j.dump());
  }
}

TEST(Results, UnknownFieldsSurviveRoundTrip) {
  auto j = to_json(consistent_run());
  j["added_by_newer_tool"] = {{"k", 1}};
  j["segments"][1]["x_flag"] = true;
  const auto run = run_from_json(j);
  EXPECT_EQ(run.extra["added_by_newer_tool"]["k"], 1);
  EXPECT_EQ(to_json(run), j);
}

TEST(Results, SchemaErrors) {
  const auto good = to_json(consistent_run());
  auto expect_schema = [](const json& j) {
    try {
      run_from_json(j);
      ADD_FAILURE() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SchemaError) << e.what();
    }
  };
  auto j = good;
  j.erase("model_id");
  expect_schema(j);
  j = good;
  j["schema_version"] = kSchemaVersion + 1;
  expect_schema(j);
  j = good;
  j["segments"][0]["scores"].erase("comet");
  expect_schema(j);
  j = good;
  j["aggregates"]["chrf"] = 1.0;
  expect_schema(j);
  j = good;
  j["segments"][0]["error_spans"] = {{"x", {{{"start", 0}, {"end", 1}, {"severity", "fatal"}}}}};
  expect_schema(j);
}

TEST(Results, AggregatesMatchRecomputation) {
  const auto run = consistent_run();
  EXPECT_TRUE(consistency_warnings(run).empty());
  EXPECT_DOUBLE_EQ(*recompute_aggregate(run, "comet"), 0.6);

  auto tampered = run;
  tampered.aggregates["bleu"] += 0.5;
  const auto w = consistency_warnings(tampered);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NE(w[0].find("bleu"), std::string::npos);

  mt::TempDir dir;
  save_run(tampered, dir / "r.json");
  std::vector<std::string> warnings;
  const auto loaded = load_run(dir / "r.json", &warnings);
  EXPECT_EQ(loaded, tampered);
  EXPECT_EQ(warnings, w);
}

TEST(Results, AggregateValues) {
  EXPECT_DOUBLE_EQ(aggregate_values({1, 2, 3, 10}, "mean"), 4.0);
  EXPECT_DOUBLE_EQ(aggregate_values({1, 2, 3, 10}, "median"), 2.5);
  EXPECT_DOUBLE_EQ(aggregate_values({5, 1, 3}, "median"), 3.0);
  EXPECT_THROW(aggregate_values({}, "mean"), Error);
  EXPECT_THROW(aggregate_values({1}, "mode"), Error);
}

TEST(Results, UniqueRunPath) {
  mt::TempDir dir;
  EvalRun run;
  run.config_hash = "0123456789abcdef0123";
  run.created_at = "2026-03-04T05:06:07Z";
  const auto p = unique_run_path(dir.path(), run);
  EXPECT_EQ(p.filename(), "0123456789ab-20260304T050607Z.json");
  mt::write_file(p, "{}");
  EXPECT_EQ(unique_run_path(dir.path(), run).filename(), "0123456789ab-20260304T050607Z-1.json");
}

TEST(Results, Sha256) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

// A child process dies inside the writer at each stage. The target must keep
// either its previous content or not exist, and nothing partial is visible.
TEST(Results, CrashDuringWriteLeavesNoPartialFile) {
  const auto run = consistent_run();
  const std::string content = to_json(run).dump(1) + "\n";
  for (const char* stage : {"partial", "written", "synced"}) {
    for (bool pre_existing : {false, true}) {
      mt::TempDir dir;
      const auto target = dir / "run.json";
      if (pre_existing) mt::write_file(target, "old");
      const pid_t pid = ::fork();
      ASSERT_GE(pid, 0);
      if (pid == 0) {
        const std::string want = stage;
        set_write_fault_hook([want](std::string_view s) {
          if (s == want) ::_exit(17);
        });
        try {
          save_run(run, target);
        } catch (...) {
        }
        ::_exit(0);
      }
      int status = 0;
      ::waitpid(pid, &status, 0);
      ASSERT_TRUE(WIFEXITED(status));
      EXPECT_EQ(WEXITSTATUS(status), 17) << stage;
      if (pre_existing) {
        EXPECT_EQ(mt::slurp(target), "old") << stage;
      } else {
        EXPECT_FALSE(fs::exists(target)) << stage;
      }
      // Only hidden temporaries may remain; no visible json.
      for (const auto& e : fs::directory_iterator(dir.path())) {
        const auto name = e.path().filename().string();
        if (name == "run.json") continue;
        EXPECT_EQ(name.front(), '.') << name;
      }
    }
  }
}

TEST(Results, ThrowingHookKeepsTargetAndRemovesTemp) {
  mt::TempDir dir;
  const auto target = dir / "run.json";
  mt::write_file(target, "old");
  set_write_fault_hook([](std::string_view s) {
    if (s == "written") throw Error(ErrorCode::IoError, "disk full");
  });
  EXPECT_THROW(save_run(consistent_run(), target), Error);
  set_write_fault_hook(nullptr);
  EXPECT_EQ(mt::slurp(target), "old");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++n;
  EXPECT_EQ(n, 1u);
  save_run(consistent_run(), target);
  EXPECT_EQ(load_run(target), consistent_run());
}
