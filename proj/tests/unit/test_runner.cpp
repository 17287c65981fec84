#include <gtest/gtest.h>

#include "mtlens/errors.hpp"
#include "mtlens/runner.hpp"
#include "test_util.hpp"

using namespace mtlens;
using namespace mtlens::runner;
namespace fs = std::filesystem;
namespace mt = mtlens::testing;
using nlohmann::json;

namespace {

const std::string kStamp = "2026-05-01T12:00:00Z";

std::string data_root() { return mt::fixture("data").string(); }
std::string data(const std::string& rel) { return mt::fixture("data/" + rel).string(); }

// Flores config with absolute paths; extra YAML lines appended verbatim.
std::string flores_yaml(const std::string& out, const std::string& extra = "") {
  return "task: en_de_flores_devtest\n"
         "model_id: sys-a\n"
         "data_root: " + data_root() + "\n"
         "hypotheses: " + data("en_de_flores_devtest/hyp.txt") + "\n"
         "metrics: [bleu, chrF]\n"
         "output: " + out + "\n" + extra;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

}  // namespace

TEST(Runner, ParseConfig) {
  const auto cfg = parse_config(
      "task: en_de_flores_devtest\n"
      "model_id: m\n"
      "hypotheses: hyps/out.txt\n"
      "metrics: [BLEU, chrf, ter]\n"
      "metric_options:\n  ter: {case_sensitive: false}\n"
      "seed: 7\n"
      "prompt_template: 'Translate: {src}'\n"
      "perturbations:\n  - {kind: chardrop, lambda: 0.2, hypotheses: p.txt}\n",
      "/base");
  EXPECT_EQ(cfg.metrics, (std::vector<std::string>{"bleu", "chrf", "ter"}));
  EXPECT_EQ(cfg.hypotheses, fs::path("/base/hyps/out.txt"));
  EXPECT_EQ(cfg.data_root, fs::path("/base/"));
  EXPECT_EQ(cfg.output, fs::path("/base/runs"));
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.metric_options.at("ter"), (json{{"case_sensitive", false}}));
  ASSERT_EQ(cfg.perturbations.size(), 1u);
  EXPECT_EQ(cfg.perturbations[0].kind, perturb::NoiseKind::CharDrop);
  EXPECT_DOUBLE_EQ(cfg.perturbations[0].lambda, 0.2);

  const auto j = config_json(cfg);
  EXPECT_EQ(j["hypotheses"], "hyps/out.txt");
  EXPECT_EQ(j["prompt_template"], "Translate: {src}");
  EXPECT_FALSE(j.contains("output"));

  // Output location does not change the hash; anything scored does.
  auto other = cfg;
  other.output = "/elsewhere";
  EXPECT_EQ(config_hash(other), config_hash(cfg));
  other.seed = 8;
  EXPECT_NE(config_hash(other), config_hash(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 64u);
}

TEST(Runner, ConfigErrors) {
  const std::string base = "task: en_de_flores_devtest\nmodel_id: m\nhypotheses: h.txt\n";
  EXPECT_EQ(code_of([&] { parse_config(base + "metrcs: [bleu]\n"); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([] { parse_config("task: en_de_flores_devtest\nmodel_id: m\n"); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { parse_config(base + "metrics: bleu\n"); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { parse_config(base + "seed: -3\n"); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { parse_config(base + "perturbations:\n  - {kind: blur, lambda: 0.1, hypotheses: x}\n"); }),
            ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { parse_config(base + "toxicity: {lexicon: l.txt, colour: red}\n"); }),
            ErrorCode::ValidationError);
  EXPECT_EQ(code_of([] { parse_config("task: [unbalanced\n"); }), ErrorCode::ValidationError);
}

TEST(Runner, ValidationHappensBeforeComputation) {
  mt::TempDir dir;
  const auto out = (dir / "runs").string();
  auto check = [&](const std::string& yaml, ErrorCode want) {
    const auto cfg = parse_config(yaml, dir.path());
    EXPECT_EQ(code_of([&] { run_task(cfg); }), want) << yaml;
    EXPECT_FALSE(fs::exists(out)) << yaml;
  };
  const std::string head = "model_id: m\ndata_root: " + data_root() + "\noutput: " + out + "\n";
  const std::string hyp = "hypotheses: " + data("en_de_flores_devtest/hyp.txt") + "\n";
  check(head + "task: en_de_flores_devtest\nhypotheses: missing.txt\nmetrics: [bleu]\n", ErrorCode::MissingHypotheses);
  check(head + hyp + "task: en-de-flores\n", ErrorCode::MalformedTaskName);
  check(head + hyp + "task: en_fr_flores_devtest\n", ErrorCode::MissingDataset);
  check(head + hyp + "task: en_de_flores_devtest\nmetrics: [comet]\n", ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\nmetrics: [bleu, BLEU]\n", ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\nmetrics: [bleu]\nmetric_options: {chrf: {}}\n",
        ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\nmetrics: [bleu]\nmetric_options: {bleu: {smooth_method: wild}}\n",
        ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\nexternal_scores: [nowhere.jsonl]\n", ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\nplugins: [{metric: made_up, command: x}]\n",
        ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\nplugins: [{metric: comet, command: x, timeout_s: 0}]\n",
        ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\ntoxicity: {lexicon: " + data("en_de_race_hb/lexicon.de.txt") +
            ", thresholds: {mutox: 1.5}}\n",
        ErrorCode::ValidationError);
  check(head + hyp + "task: en_de_flores_devtest\nperturbations: [{kind: swap, lambda: 1.2, hypotheses: p.txt}]\n",
        ErrorCode::ValidationError);
}

TEST(Runner, ThreeSegmentRun) {
  mt::TempDir dir;
  const auto out = run_task(parse_config(flores_yaml((dir / "runs").string())), {kStamp});
  const auto& run = out.run;
  ASSERT_TRUE(fs::exists(out.path));
  EXPECT_EQ(out.path.parent_path(), dir / "runs");
  EXPECT_EQ(out.path.filename().string(), run.config_hash.substr(0, 12) + "-20260501T120000Z.json");
  EXPECT_EQ(run.task, "en_de_flores_devtest");
  EXPECT_EQ(run.created_at, kStamp);
  ASSERT_EQ(run.aggregates.size(), 2u);
  ASSERT_EQ(run.segments.size(), 3u);
  for (const auto& s : run.segments) {
    EXPECT_EQ(s.scores.size(), 2u);
    EXPECT_EQ(s.stats.size(), 2u);
  }
  // Reference values from sacrebleu 2.6.0 on the same files.
  EXPECT_NEAR(run.aggregates.at("bleu"), 27.699252004112765, 1e-9);
  EXPECT_NEAR(run.aggregates.at("chrf"), 50.64307504061089, 1e-9);
  EXPECT_NEAR(run.segments[0].scores.at("bleu"), 100.0, 1e-9);
  EXPECT_NEAR(run.segments[2].scores.at("chrf"), 36.36060386341352, 1e-9);
  EXPECT_EQ(run.metrics.at("bleu").source, "native");
  EXPECT_EQ(run.metrics.at("bleu").aggregation, "pooled");
  EXPECT_TRUE(run.details.count("chrf"));
  EXPECT_TRUE(run.warnings.empty());

  std::vector<std::string> warnings;
  EXPECT_EQ(load_run(out.path, &warnings), run);
  EXPECT_TRUE(warnings.empty());
}

TEST(Runner, FixedTimestampGivesIdenticalBytes) {
  mt::TempDir dir;
  const auto cfg = parse_config(flores_yaml((dir / "runs").string()));
  const auto a = run_task(cfg, {kStamp});
  const auto b = run_task(cfg, {kStamp});
  EXPECT_NE(a.path, b.path);
  EXPECT_EQ(b.path.stem().string(), a.path.stem().string() + "-1");
  EXPECT_EQ(mt::slurp(a.path), mt::slurp(b.path));
}

TEST(Runner, ExternalScoresAndPlugins) {
  mt::TempDir dir;
  mt::write_file(dir / "kiwi.jsonl",
                 "{\"metric\": \"comet_kiwi\", \"model_id\": \"sys-a\", \"task\": \"en_de_flores_devtest\"}\n"
                 "{\"id\": \"1\", \"value\": 0.9}\n{\"id\": \"2\", \"value\": 0.6}\n{\"id\": \"3\", \"value\": 0.3}\n");
  const auto yaml = flores_yaml((dir / "runs").string(),
                                "external_scores: [kiwi.jsonl]\n"
                                "plugins:\n  - {metric: comet, command: 'python3 " +
                                    mt::fixture("plugins/uniform.py").string() + "', timeout_s: 60}\n");
  const auto run = run_task(parse_config(yaml, dir.path()), {kStamp, false}).run;
  EXPECT_NEAR(run.aggregates.at("comet_kiwi"), 0.6, 1e-12);
  EXPECT_EQ(run.aggregates.at("comet"), 1.0);
  EXPECT_EQ(run.metrics.at("comet").source, "plugin");
  EXPECT_EQ(run.metrics.at("comet_kiwi").source, "file");
  EXPECT_EQ(run.config["external_scores"], json({"kiwi.jsonl"}));
  for (const auto& s : run.segments) EXPECT_EQ(s.scores.size(), 4u);
}

TEST(Runner, ToxicityRun) {
  mt::TempDir dir;
  const std::string hb = data("en_de_race_hb/");
  const std::string yaml = "task: en_de_race_hb\nmodel_id: sys\ndata_root: " + data_root() + "\nhypotheses: " + hb +
                           "hyp.txt\nexternal_scores: [" + hb + "mutox.jsonl, " + hb +
                           "comet_kiwi.jsonl]\n"
                           "toxicity:\n  lexicon: " + hb + "lexicon.de.txt\n  source_scores: " + hb +
                           "source_scores.tsv\n";
  const auto run = run_task(parse_config(yaml, dir.path()), {kStamp, false}).run;
  const auto& t = run.task_reports.at("toxicity");
  // Segment 2 is toxic on the source side; 3 is a lexicon hit; 4 is a lexicon
  // hit and above the mutox threshold.
  EXPECT_EQ(t["n_segments"], 3);
  EXPECT_EQ(t["n_source_toxic"], 1);
  EXPECT_EQ(t["n_added_toxic"], 2);
  EXPECT_NEAR(t["overall_rate"].get<double>(), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(t["mean_qe"].get<double>(), 0.4, 1e-12);
  EXPECT_EQ(t["qe_metric"], "comet_kiwi");
  EXPECT_NEAR(t["per_axis"]["race"]["rate"].get<double>(), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(t["by_detector"]["etox"]["n_flagged"], 2);
  EXPECT_EQ(t["by_detector"]["mutox"]["n_flagged"], 1);
  EXPECT_NEAR(t["by_detector"]["mutox"]["mean_qe"].get<double>(), 0.3, 1e-12);
  EXPECT_EQ(t["lexicon"]["entries"], 3);
  EXPECT_TRUE(t["source_filtered"].get<bool>());

  // Without the toxicity section the run still succeeds and says why.
  const auto bare = run_task(parse_config("task: en_de_race_hb\nmodel_id: sys\ndata_root: " + data_root() +
                                              "\nhypotheses: " + hb + "hyp.txt\n",
                                          dir.path()),
                             {kStamp, false})
                        .run;
  EXPECT_FALSE(bare.task_reports.contains("toxicity"));
  EXPECT_EQ(bare.warnings.size(), 1u);
  // Reference-free tasks reject overlap metrics.
  EXPECT_EQ(code_of([&] {
              run_task(parse_config("task: en_de_race_hb\nmodel_id: sys\ndata_root: " + data_root() +
                                        "\nhypotheses: " + hb + "hyp.txt\nmetrics: [bleu]\n",
                                    dir.path()),
                       {kStamp, false});
            }),
            ErrorCode::ValidationError);
}

TEST(Runner, GenderRuns) {
  mt::TempDir dir;
  auto run_for = [&](const std::string& task) {
    const std::string yaml = "task: " + task + "\nmodel_id: m\ndata_root: " + data_root() + "\nhypotheses: " +
                             data(task + "/hyp.txt") + "\nmetrics: [chrf]\n";
    return run_task(parse_config(yaml, dir.path()), {kStamp, false}).run;
  };
  const auto ms = run_for("en_it_must_she").task_reports.at("gender");
  EXPECT_EQ(ms["kind"], "mustshe");
  EXPECT_DOUBLE_EQ(ms["mustshe"]["overall"]["accuracy"].get<double>(), 0.75);

  const auto ge = run_for("en_de_geneval").task_reports.at("gender");
  EXPECT_EQ(ge["kind"], "geneval");
  EXPECT_DOUBLE_EQ(ge["geneval"]["overall"]["accuracy"].get<double>(), 0.75);

  const auto mm = run_for("en_es_mmhb").task_reports.at("gender");
  EXPECT_EQ(mm["kind"], "mmhb");
  EXPECT_EQ(mm["mmhb"]["rows"].size(), 3u);
}

TEST(Runner, PerturbationSweep) {
  mt::TempDir dir;
  const std::string d = data("en_de_flores_devtest/");
  const auto yaml = flores_yaml((dir / "runs").string(),
                                "perturbations:\n"
                                "  - {kind: swap, lambda: 0.5, hypotheses: " + d + "hyp.swap.0.5.txt}\n"
                                "  - {kind: swap, lambda: 0.1, hypotheses: " + d + "hyp.swap.0.1.txt}\n"
                                "  - {kind: swap, lambda: 0.3, hypotheses: " + d + "hyp.swap.0.3.txt}\n");
  const auto run = run_task(parse_config(yaml), {kStamp, false}).run;
  const auto& p = run.task_reports.at("perturbation");
  const auto& series = p["series"]["bleu"]["swap"];
  ASSERT_EQ(series.size(), 3u);
  EXPECT_EQ(series[0][0], 0.0);
  EXPECT_EQ(series[1][0], 0.1);
  EXPECT_EQ(series[2][0], 0.5);
  // sacrebleu corpus BLEU (smooth_method none) on each hypothesis file; the
  // heavily perturbed one has no 4-gram match left.
  EXPECT_NEAR(series[0][1].get<double>(), 27.699252004112765, 1e-9);
  EXPECT_NEAR(series[1][1].get<double>(), 13.374730662500092, 1e-9);
  EXPECT_EQ(series[2][1].get<double>(), 0.0);
  EXPECT_NEAR(p["series"]["chrf"]["swap"][2][1].get<double>(), 15.81796994496926, 1e-9);
  ASSERT_EQ(run.warnings.size(), 1u);
  EXPECT_NE(run.warnings[0].find("0.3"), std::string::npos);
}

TEST(Runner, LengthBreakdown) {
  mt::TempDir dir;
  const auto run = run_task(parse_config(flores_yaml((dir / "runs").string())), {kStamp, false}).run;
  const auto b = length_breakdown(run, "BLEU");
  EXPECT_EQ(b.metric, "bleu");
  ASSERT_EQ(b.points.size(), 3u);
  EXPECT_EQ(b.points[0].words, 6);
  EXPECT_EQ(b.points[1].words, 13);
  EXPECT_EQ(b.points[2].words, 21);
  ASSERT_EQ(b.buckets.size(), 6u);
  EXPECT_EQ(b.buckets[0].label(), "1-9");
  EXPECT_EQ(b.buckets[5].label(), "50+");
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(b.buckets[k].n, 1u);
    EXPECT_DOUBLE_EQ(*b.buckets[k].mean, run.segments[k].scores.at("bleu"));
  }
  for (std::size_t k = 3; k < 6; ++k) {
    EXPECT_EQ(b.buckets[k].n, 0u);
    EXPECT_FALSE(b.buckets[k].mean);
  }
  const auto j = to_json(b);
  EXPECT_EQ(j["buckets"][1]["label"], "10-19");
  EXPECT_TRUE(j["buckets"][4]["mean"].is_null());

  EXPECT_EQ(code_of([&] { length_breakdown(run, "comet"); }), ErrorCode::MetricMissing);
  EXPECT_TRUE(length_breakdown(EvalRun{}, "comet").points.empty());
}

TEST(Runner, LengthBucketsProperty) {
  mt::SentenceGen gen(77);
  for (int trial = 0; trial < 100; ++trial) {
    EvalRun run;
    run.metrics["comet"] = MetricEntry{};
    const std::size_t n = 1 + gen.pick(40);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      SegmentRecord s;
      s.id = std::to_string(i);
      s.source = gen.sentence(0, 70, false);
      s.scores["comet"] = static_cast<double>(gen.pick(100)) / 100.0;
      total += s.scores["comet"];
      run.segments.push_back(s);
    }
    const auto b = length_breakdown(run, "comet");
    std::size_t count = 0;
    double weighted = 0.0;
    for (const auto& k : b.buckets) {
      count += k.n;
      if (k.mean) weighted += *k.mean * static_cast<double>(k.n);
    }
    EXPECT_EQ(count, n);
    EXPECT_NEAR(weighted, total, 1e-9);
    for (const auto& p : b.points) {
      const auto& k = *std::find_if(b.buckets.rbegin(), b.buckets.rend(),
                                    [&](const LengthBucket& x) { return std::max(p.words, 1) >= x.lo; });
      EXPECT_TRUE(!k.hi || p.words <= *k.hi);
    }
  }
}
