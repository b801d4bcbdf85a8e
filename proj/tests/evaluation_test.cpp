#include "ramsd/evaluation.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "ramsd/llm_mock.hpp"

using namespace ramsd;

namespace {

std::string prompts_dir() {
  if (const char* env = std::getenv("RAMSD_PROMPTS_DIR")) return env;
  return RAMSD_DEFAULT_PROMPTS_DIR;
}

struct Rig {
  std::shared_ptr<HashingEmbedder> embedder;
  std::shared_ptr<MockBackend> backend;
  std::shared_ptr<PromptLibrary> prompts;
  std::shared_ptr<const DualIndex> index;
  PipelineConfig config;

  Pipeline::Deps deps(std::shared_ptr<RationaleCache> cache = nullptr) const {
    Pipeline::Deps d;
    d.embedder = embedder;
    d.backend = backend;
    d.prompts = prompts;
    d.rationale_cache = std::move(cache);
    return d;
  }

  Pipeline make(std::shared_ptr<RationaleCache> cache = nullptr) const {
    return Pipeline(index, deps(std::move(cache)), config);
  }
};

Rig make_rig(std::uint64_t seed = 7) {
  Rig rig;
  rig.embedder = std::make_shared<HashingEmbedder>(32, 7);
  rig.backend = std::make_shared<MockBackend>(seed);
  auto lib = PromptLibrary::load(prompts_dir());
  if (!lib.ok()) throw std::runtime_error(lib.error().to_string());
  rig.prompts = std::make_shared<PromptLibrary>(std::move(lib).take());

  std::vector<CorpusRow> rows;
  const char* sarcastic[] = {"Oh great, another outage", "What a thrilling spreadsheet",
                             "Best commute of my life",  "Sure, rain on moving day"};
  const char* literal[] = {"The meeting starts at nine", "This soup tastes good",
                           "The library closes early",   "Our team shipped the release"};
  for (int i = 0; i < 4; ++i) {
    rows.push_back({"kb-s" + std::to_string(i), sarcastic[i], 1, std::nullopt});
    rows.push_back({"kb-n" + std::to_string(i), literal[i], 0, std::nullopt});
  }
  auto exemplars = ingest_corpus(rows, *rig.embedder);
  auto index = build_index(std::move(exemplars).take());
  rig.index = std::make_shared<const DualIndex>(std::move(index).take());
  return rig;
}

// Samples whose scripted judgments echo their gold labels.
std::vector<Sample> echo_dataset(int n, int fail_from = -1, int fail_count = 0) {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s;
    char id[16];
    std::snprintf(id, sizeof id, "s%03d", i);
    s.id = id;
    int gold = i % 2;
    s.text = "plain sample " + std::to_string(i) + " MOCK_LABEL=" + std::to_string(gold) +
             " MOCK_CONF=0.9";
    if (fail_from >= 0 && i >= fail_from && i < fail_from + fail_count)
      s.text += " MOCK_FAIL=integrator";
    s.gold_label = gold;
    out.push_back(std::move(s));
  }
  return out;
}

Verdict bare_verdict(std::string id, int label, double probability) {
  Verdict v;
  v.id = std::move(id);
  v.label = label;
  v.probability = probability;
  return v;
}

}  // namespace

TEST(ComputeMetrics, MatchesHandWorkedValues) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 3; ++i) pairs.emplace_back(1, 1);  // tp
  for (int i = 0; i < 2; ++i) pairs.emplace_back(0, 1);  // fp
  pairs.emplace_back(1, 0);                              // fn
  for (int i = 0; i < 4; ++i) pairs.emplace_back(0, 0);  // tn

  auto r = compute_metrics(pairs);
  ASSERT_TRUE(r.ok());
  const MetricsReport& m = r.value();
  EXPECT_EQ(m.confusion.tp, 3);
  EXPECT_EQ(m.confusion.fp, 2);
  EXPECT_EQ(m.confusion.fn, 1);
  EXPECT_EQ(m.confusion.tn, 4);
  EXPECT_DOUBLE_EQ(m.accuracy, 7.0 / 10.0);
  EXPECT_DOUBLE_EQ(m.f1_sarcastic, 2.0 * 3 / (2.0 * 3 + 2 + 1));
  EXPECT_DOUBLE_EQ(m.f1_non_sarcastic, 2.0 * 4 / (2.0 * 4 + 1 + 2));
  EXPECT_DOUBLE_EQ(m.macro_f1, (m.f1_sarcastic + m.f1_non_sarcastic) / 2.0);
  EXPECT_DOUBLE_EQ(m.fp_share, 2.0 / 3.0);
  EXPECT_EQ(m.evaluated, 10);
}

TEST(ComputeMetrics, DegenerateClassesCollapseToZeroNotNan) {
  // Everything negative and correct: the sarcastic F1 is 0/0, scored as 0.
  std::vector<std::pair<int, int>> all_neg(5, {0, 0});
  auto r = compute_metrics(all_neg);
  ASSERT_TRUE(r.ok());
  EXPECT_DOUBLE_EQ(r.value().f1_sarcastic, 0.0);
  EXPECT_DOUBLE_EQ(r.value().f1_non_sarcastic, 1.0);
  EXPECT_DOUBLE_EQ(r.value().macro_f1, 0.5);
  EXPECT_DOUBLE_EQ(r.value().accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.value().fp_share, 0.0);

  // Everything positive and wrong: both F1 values are 0, never NaN.
  std::vector<std::pair<int, int>> all_missed(5, {1, 0});
  auto w = compute_metrics(all_missed);
  ASSERT_TRUE(w.ok());
  EXPECT_DOUBLE_EQ(w.value().f1_sarcastic, 0.0);
  EXPECT_DOUBLE_EQ(w.value().f1_non_sarcastic, 0.0);
  EXPECT_DOUBLE_EQ(w.value().macro_f1, 0.0);
  EXPECT_DOUBLE_EQ(w.value().accuracy, 0.0);
  EXPECT_DOUBLE_EQ(w.value().fp_share, 0.0);  // no false positives among the errors
  EXPECT_FALSE(std::isnan(w.value().macro_f1));
}

TEST(ComputeMetrics, RejectsEmptyAndBadLabels) {
  EXPECT_EQ(compute_metrics({}).error().code, Errc::invalid_input);
  EXPECT_EQ(compute_metrics({{2, 1}}).error().code, Errc::invalid_input);
  EXPECT_EQ(compute_metrics({{1, -1}}).error().code, Errc::invalid_input);
}

TEST(Evaluate, RequiresGoldLabelsUpFront) {
  auto rig = make_rig();
  auto pipeline = rig.make();
  std::vector<Sample> dataset = echo_dataset(3);
  dataset[1].gold_label.reset();
  auto r = evaluate(pipeline, dataset);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().code, Errc::invalid_input);
  EXPECT_NE(r.error().message.find("s001"), std::string::npos);

  EXPECT_EQ(evaluate(pipeline, {}).error().code, Errc::invalid_input);
}

TEST(Evaluate, AggregatesMetricsTimingsAndPlans) {
  auto rig = make_rig();
  auto pipeline = rig.make();
  auto dataset = echo_dataset(10);
  auto r = evaluate(pipeline, dataset);
  ASSERT_TRUE(r.ok()) << r.error().to_string();
  const MetricsReport& m = r.value().report;

  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);  // scripted judgments echo gold
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.evaluated, 10);
  EXPECT_EQ(m.failed, 0);
  ASSERT_EQ(r.value().verdicts.size(), 10u);
  ASSERT_EQ(r.value().gold_labels.size(), 10u);
  for (size_t i = 0; i < 10; ++i) EXPECT_EQ(r.value().verdicts[i].id, dataset[i].id);

  long plan_total = 0;
  for (const auto& [plan, count] : m.invocation.plan_counts) plan_total += count;
  EXPECT_EQ(plan_total, 10);

  // Recompute every aggregate from the verdicts themselves.
  StageTimings sums;
  double agent_calls = 0;
  for (const auto& v : r.value().verdicts) {
    sums.retrieval_ms += v.timings.retrieval_ms;
    sums.planning_ms += v.timings.planning_ms;
    sums.agents_ms += v.timings.agents_ms;
    sums.synthesis_ms += v.timings.synthesis_ms;
    sums.total_ms += v.timings.total_ms;
    agent_calls += static_cast<double>(v.trace.outputs.size());
  }
  EXPECT_NEAR(m.mean_timings.retrieval_ms, sums.retrieval_ms / 10.0, 1e-9);
  EXPECT_NEAR(m.mean_timings.planning_ms, sums.planning_ms / 10.0, 1e-9);
  EXPECT_NEAR(m.mean_timings.agents_ms, sums.agents_ms / 10.0, 1e-9);
  EXPECT_NEAR(m.mean_timings.synthesis_ms, sums.synthesis_ms / 10.0, 1e-9);
  EXPECT_NEAR(m.mean_timings.total_ms, sums.total_ms / 10.0, 1e-9);
  EXPECT_NEAR(m.invocation.mean_agent_calls, agent_calls / 10.0, 1e-9);
}

TEST(Evaluate, RecordsFailuresAndHoldsTheLine) {
  // One failure in ten sits exactly on the 10% limit and passes.
  auto rig = make_rig();
  auto pipeline = rig.make();
  auto one_bad = echo_dataset(10, 4, 1);
  auto r = evaluate(pipeline, one_bad);
  ASSERT_TRUE(r.ok()) << r.error().to_string();
  EXPECT_EQ(r.value().report.evaluated, 9);
  EXPECT_EQ(r.value().report.failed, 1);
  ASSERT_EQ(r.value().failures.size(), 1u);
  EXPECT_EQ(r.value().failures[0].id, "s004");
  EXPECT_NE(r.value().failures[0].error.find("integrator"), std::string::npos);
  ASSERT_EQ(r.value().verdicts.size(), 9u);
  for (const auto& v : r.value().verdicts) EXPECT_NE(v.id, "s004");

  // Two failures in ten exceed it and abort.
  auto rig2 = make_rig();
  auto pipeline2 = rig2.make();
  auto two_bad = echo_dataset(10, 4, 2);
  auto aborted = evaluate(pipeline2, two_bad);
  ASSERT_FALSE(aborted.ok());
  EXPECT_EQ(aborted.error().code, Errc::stage_failure);
  EXPECT_NE(aborted.error().message.find("2/10"), std::string::npos);

  // With the limit lifted but nothing succeeding there is nothing to score.
  auto rig3 = make_rig();
  auto pipeline3 = rig3.make();
  auto all_bad = echo_dataset(3, 0, 3);
  EvaluateOptions lax;
  lax.max_failure_fraction = 1.0;
  auto empty = evaluate(pipeline3, all_bad, lax);
  ASSERT_FALSE(empty.ok());
  EXPECT_NE(empty.error().message.find("no verdicts"), std::string::npos);
}

TEST(Evaluate, ConcurrencyLeavesResultsUntouched) {
  auto dataset = echo_dataset(8);

  auto rig_serial = make_rig();
  auto serial_pipeline = rig_serial.make();
  auto serial = evaluate(serial_pipeline, dataset);
  ASSERT_TRUE(serial.ok());

  auto rig_parallel = make_rig();
  auto parallel_pipeline = rig_parallel.make();
  EvaluateOptions fanout;
  fanout.sample_concurrency = 4;
  auto parallel = evaluate(parallel_pipeline, dataset, fanout);
  ASSERT_TRUE(parallel.ok());

  EXPECT_EQ(metrics_to_json(serial.value().report, {}, "t").dump(),
            metrics_to_json(parallel.value().report, {}, "t").dump());
  ASSERT_EQ(serial.value().verdicts.size(), parallel.value().verdicts.size());
  for (size_t i = 0; i < serial.value().verdicts.size(); ++i)
    EXPECT_EQ(verdict_to_json(serial.value().verdicts[i]).dump(),
              verdict_to_json(parallel.value().verdicts[i]).dump());
}

TEST(Evaluate, DeterministicAcrossFreshRuns) {
  auto dataset = echo_dataset(6);
  auto rig_a = make_rig();
  auto pipeline_a = rig_a.make();
  auto a = evaluate(pipeline_a, dataset);
  auto rig_b = make_rig();
  auto pipeline_b = rig_b.make();
  auto b = evaluate(pipeline_b, dataset);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(metrics_to_json(a.value().report, {}, "t").dump(),
            metrics_to_json(b.value().report, {}, "t").dump());
  for (size_t i = 0; i < a.value().verdicts.size(); ++i)
    EXPECT_EQ(verdict_to_json(a.value().verdicts[i]).dump(),
              verdict_to_json(b.value().verdicts[i]).dump());
}

TEST(SweepK, OneRowPerKAndFailuresDoNotStopIt) {
  auto rig = make_rig();
  auto dataset = echo_dataset(4);
  auto make_pipeline = [&](int k) -> Result<Pipeline> {
    PipelineConfig pc = rig.config;
    pc.k = k;
    if (auto st = pc.validate(); !st.ok()) return st.error();
    return Pipeline(rig.index, rig.deps(), pc);
  };
  auto rows = sweep_k(make_pipeline, dataset, {0, 2, 3});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].k, 0);
  EXPECT_FALSE(rows[0].ok);
  EXPECT_NE(rows[0].error.find("k must be >= 1"), std::string::npos);
  EXPECT_TRUE(rows[1].ok);
  EXPECT_TRUE(rows[2].ok);
  EXPECT_DOUBLE_EQ(rows[1].report.accuracy, 1.0);
}

TEST(SweepK, CsvFormatIsPinned) {
  SweepRow good1;
  good1.k = 1;
  good1.ok = true;
  good1.report.accuracy = 1.0;
  good1.report.macro_f1 = 1.0;
  SweepRow failed;
  failed.k = 2;
  failed.error = "boom";
  SweepRow good3;
  good3.k = 3;
  good3.ok = true;
  good3.report.accuracy = 0.5;
  good3.report.macro_f1 = 1.0 / 3.0;

  EXPECT_EQ(sweep_csv({good1, failed, good3}),
            "k,accuracy,macro_f1\n"
            "1,1.000000,1.000000\n"
            "3,0.500000,0.333333\n");
  EXPECT_EQ(sweep_csv({}), "k,accuracy,macro_f1\n");
}

TEST(SweepK, SharedCacheMakesSweepCostTheLargestK) {
  // Retrieval at k is a prefix of retrieval at k+1, so with a shared rationale
  // cache the whole 1..3 sweep generates exactly as many rationales as one
  // fresh k=3 run.
  auto dataset = echo_dataset(4);

  auto rig = make_rig();
  auto cache = std::make_shared<RationaleCache>();
  auto make_pipeline = [&](int k) -> Result<Pipeline> {
    PipelineConfig pc = rig.config;
    pc.k = k;
    if (auto st = pc.validate(); !st.ok()) return st.error();
    return Pipeline(rig.index, rig.deps(cache), pc);
  };
  auto rows = sweep_k(make_pipeline, dataset, {1, 2, 3});
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) ASSERT_TRUE(row.ok) << row.error;
  auto sweep_rationales = rig.backend->count_for("rationale");

  auto fresh = make_rig();
  fresh.config.k = 3;
  auto fresh_pipeline = fresh.make();
  auto baseline = evaluate(fresh_pipeline, dataset);
  ASSERT_TRUE(baseline.ok());
  EXPECT_EQ(sweep_rationales, fresh.backend->count_for("rationale"));
}

TEST(ErrorDistribution, SharesAndConfidenceOrdering) {
  std::vector<Verdict> verdicts;
  std::vector<int> gold;
  // Three false positives (gold 0, said 1), probabilities 0.9, 0.7, 0.9.
  verdicts.push_back(bare_verdict("e1", 1, 0.9));
  gold.push_back(0);
  verdicts.push_back(bare_verdict("e2", 1, 0.7));
  gold.push_back(0);
  verdicts.push_back(bare_verdict("e3", 1, 0.9));
  gold.push_back(0);
  // Three false negatives (gold 1, said 0), probabilities 0.1, 0.4, 0.1.
  verdicts.push_back(bare_verdict("m1", 0, 0.1));
  gold.push_back(1);
  verdicts.push_back(bare_verdict("m2", 0, 0.4));
  gold.push_back(1);
  verdicts.push_back(bare_verdict("m3", 0, 0.1));
  gold.push_back(1);
  // Two correct calls that must not appear anywhere.
  verdicts.push_back(bare_verdict("c1", 1, 0.8));
  gold.push_back(1);
  verdicts.push_back(bare_verdict("c2", 0, 0.2));
  gold.push_back(0);

  auto d = error_distribution(verdicts, gold);
  ASSERT_TRUE(d.ok());
  EXPECT_FALSE(d.value().no_errors);
  EXPECT_DOUBLE_EQ(d.value().fp_share, 0.5);
  EXPECT_DOUBLE_EQ(d.value().fn_share, 0.5);

  ASSERT_EQ(d.value().top_false_positives.size(), 3u);
  EXPECT_EQ(d.value().top_false_positives[0].id, "e1");  // p 0.9, tie by id
  EXPECT_EQ(d.value().top_false_positives[1].id, "e3");
  EXPECT_EQ(d.value().top_false_positives[2].id, "e2");

  ASSERT_EQ(d.value().top_false_negatives.size(), 3u);
  EXPECT_EQ(d.value().top_false_negatives[0].id, "m1");  // p 0.1, tie by id
  EXPECT_EQ(d.value().top_false_negatives[1].id, "m3");
  EXPECT_EQ(d.value().top_false_negatives[2].id, "m2");
}

TEST(ErrorDistribution, CapsListsAndHandlesEdges) {
  std::vector<Verdict> verdicts;
  std::vector<int> gold;
  for (int i = 0; i < 15; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "f%02d", i);
    verdicts.push_back(bare_verdict(id, 1, 0.5 + 0.03 * i));
    gold.push_back(0);
  }
  auto d = error_distribution(verdicts, gold);
  ASSERT_TRUE(d.ok());
  EXPECT_EQ(d.value().top_false_positives.size(), 10u);
  EXPECT_EQ(d.value().top_false_positives[0].id, "f14");  // highest p first
  EXPECT_DOUBLE_EQ(d.value().fp_share, 1.0);
  EXPECT_DOUBLE_EQ(d.value().fn_share, 0.0);

  auto clean = error_distribution({bare_verdict("a", 1, 0.9)}, {1});
  ASSERT_TRUE(clean.ok());
  EXPECT_TRUE(clean.value().no_errors);
  EXPECT_TRUE(clean.value().top_false_positives.empty());

  EXPECT_EQ(error_distribution({bare_verdict("a", 1, 0.9)}, {1, 0}).error().code,
            Errc::invalid_input);
  EXPECT_EQ(error_distribution({bare_verdict("a", 1, 0.9)}, {7}).error().code,
            Errc::invalid_input);
}

TEST(TimingTable, MatchesIndependentRatioOracle) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> ms(1.0, 5000.0);
  std::vector<StageTimings> timings;
  for (int i = 0; i < 40; ++i) {
    StageTimings t;
    t.retrieval_ms = ms(rng);
    t.planning_ms = ms(rng);
    t.agents_ms = ms(rng);
    t.synthesis_ms = ms(rng);
    t.total_ms = t.stage_sum();
    timings.push_back(t);
  }
  auto table = timing_table(timings);
  ASSERT_TRUE(table.ok());
  ASSERT_EQ(table.value().size(), 4u);

  // Oracle: independent accumulation in a different shape.
  double sums[4] = {0, 0, 0, 0};
  for (const auto& t : timings) {
    sums[0] += t.retrieval_ms;
    sums[1] += t.planning_ms;
    sums[2] += t.agents_ms;
    sums[3] += t.synthesis_ms;
  }
  double grand = sums[0] + sums[1] + sums[2] + sums[3];
  const char* names[4] = {"retrieval", "planning", "agents", "synthesis"};
  double pct_sum = 0.0;
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(table.value()[i].stage, names[i]);
    EXPECT_NEAR(table.value()[i].mean_ms, sums[i] / 40.0, 1e-9);
    EXPECT_NEAR(table.value()[i].percent, sums[i] / grand * 100.0, 1e-9);
    pct_sum += table.value()[i].percent;
  }
  EXPECT_NEAR(pct_sum, 100.0, 1e-9);
}

TEST(TimingTable, SingleRowIsItsOwnMean) {
  StageTimings t;
  t.retrieval_ms = 3420.0;
  t.planning_ms = 2410.0;
  t.agents_ms = 11350.0;
  t.synthesis_ms = 2170.0;
  t.total_ms = t.stage_sum();
  auto table = timing_table({t});
  ASSERT_TRUE(table.ok());
  EXPECT_DOUBLE_EQ(table.value()[0].mean_ms, 3420.0);
  EXPECT_NEAR(table.value()[0].percent, 3420.0 / 19350.0 * 100.0, 1e-9);
  EXPECT_NEAR(table.value()[2].percent, 11350.0 / 19350.0 * 100.0, 1e-9);

  EXPECT_EQ(timing_table({}).error().code, Errc::invalid_input);
}

TEST(MetricsToJson, CarriesEveryReportField) {
  MetricsReport report;
  report.accuracy = 0.75;
  report.macro_f1 = 0.7;
  report.f1_sarcastic = 0.6;
  report.f1_non_sarcastic = 0.8;
  report.confusion = {3, 1, 2, 4};
  report.fp_share = 1.0 / 3.0;
  report.mean_timings.retrieval_ms = 100.0;
  report.mean_timings.total_ms = 400.0;
  report.invocation.mean_agent_calls = 3.2;
  report.invocation.plan_counts = {{"expectation_violation", 7}, {"simple_irony", 3}};
  report.evaluated = 10;
  report.failed = 1;

  auto doc = metrics_to_json(report, {{"k", 3}, {"backend", "mock"}}, "2026-01-01T00:00:00Z");
  EXPECT_EQ(doc["generated_at"], "2026-01-01T00:00:00Z");
  EXPECT_DOUBLE_EQ(doc["accuracy"].get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(doc["macro_f1"].get<double>(), 0.7);
  EXPECT_DOUBLE_EQ(doc["per_class_f1"]["sarcastic"].get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(doc["per_class_f1"]["non_sarcastic"].get<double>(), 0.8);
  EXPECT_EQ(doc["confusion"]["tp"], 3);
  EXPECT_EQ(doc["confusion"]["tn"], 4);
  EXPECT_DOUBLE_EQ(doc["fp_share"].get<double>(), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(doc["mean_timings"]["retrieval_ms"].get<double>(), 100.0);
  EXPECT_EQ(doc["invocation"]["plan_counts"]["expectation_violation"], 7);
  EXPECT_EQ(doc["evaluated"], 10);
  EXPECT_EQ(doc["failed"], 1);
  EXPECT_EQ(doc["config"]["k"], 3);
  EXPECT_EQ(doc["config"]["backend"], "mock");
}
