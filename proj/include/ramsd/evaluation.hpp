// Batch evaluation: accuracy/macro-F1 with the 0/0 → 0 convention, confusion
// and error-distribution reporting, mean stage timings, plan distribution,
// and the k-sensitivity sweep.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ramsd/core.hpp"
#include "ramsd/domain.hpp"
#include "ramsd/pipeline.hpp"

namespace ramsd {

struct ConfusionCounts {
  long tp = 0;  // gold 1, predicted 1 (positive class = sarcastic)
  long fp = 0;  // gold 0, predicted 1
  long fn = 0;  // gold 1, predicted 0
  long tn = 0;  // gold 0, predicted 0

  long total() const { return tp + fp + fn + tn; }
};

struct InvocationStats {
  double mean_agent_calls = 0.0;
  std::map<std::string, long> plan_counts;  // plan name -> verdict count
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double f1_sarcastic = 0.0;
  double f1_non_sarcastic = 0.0;
  ConfusionCounts confusion;
  double fp_share = 0.0;  // fp / (fp + fn), 0 when error-free
  StageTimings mean_timings;
  InvocationStats invocation;
  long evaluated = 0;
  long failed = 0;
};

namespace detail {

// F1 = 2PR/(P+R); any 0/0 collapses to 0 rather than NaN.
inline double f1_from_counts(long tp, long fp, long fn) {
  double denom = 2.0 * tp + fp + fn;
  if (denom <= 0.0) return 0.0;
  return 2.0 * tp / denom;
}

}  // namespace detail

// Metric fields only (no timings/invocation aggregation) from (gold, pred)
// label pairs.
inline Result<MetricsReport> compute_metrics(const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) return make_error(Errc::invalid_input, "no (gold, pred) pairs to score");
  MetricsReport report;
  for (auto [gold, pred] : pairs) {
    if (!is_valid_label(gold) || !is_valid_label(pred))
      return make_error(Errc::invalid_input, "labels must be 0 or 1");
    if (gold == 1 && pred == 1) report.confusion.tp++;
    else if (gold == 0 && pred == 1) report.confusion.fp++;
    else if (gold == 1 && pred == 0) report.confusion.fn++;
    else report.confusion.tn++;
  }
  const ConfusionCounts& c = report.confusion;
  report.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  report.f1_sarcastic = detail::f1_from_counts(c.tp, c.fp, c.fn);
  // Non-sarcastic as the positive class: tn are its true positives, fn are
  // its false positives (gold 1 predicted 0), fp its misses.
  report.f1_non_sarcastic = detail::f1_from_counts(c.tn, c.fn, c.fp);
  report.macro_f1 = (report.f1_sarcastic + report.f1_non_sarcastic) / 2.0;
  report.fp_share = (c.fp + c.fn) > 0
                        ? static_cast<double>(c.fp) / static_cast<double>(c.fp + c.fn)
                        : 0.0;
  report.evaluated = c.total();
  return report;
}

struct SampleFailure {
  std::string id;
  std::string error;
};

struct EvaluateResult {
  MetricsReport report;
  std::vector<Verdict> verdicts;       // dataset order, failures skipped
  std::vector<int> gold_labels;        // aligned with verdicts
  std::vector<SampleFailure> failures;
};

struct EvaluateOptions {
  // Sample-level fan-out. The default of 1 keeps cache-miss costs attributed
  // to the same sample on every run, which the determinism contract needs.
  int sample_concurrency = 1;
  double max_failure_fraction = 0.10;
};

// Classifies every sample and aggregates metrics, mean timings, plan
// distribution, and invocation counts. Per-sample failures are recorded and
// excluded; more than max_failure_fraction failing aborts.
inline Result<EvaluateResult> evaluate(Pipeline& pipeline, const std::vector<Sample>& dataset,
                                       EvaluateOptions options = {}) {
  if (dataset.empty()) return make_error(Errc::invalid_input, "dataset is empty");
  for (const auto& s : dataset)
    if (!s.gold_label)
      return make_error(Errc::invalid_input, "sample " + s.id + " has no gold label");
  if (options.sample_concurrency < 1)
    return make_error(Errc::invalid_input, "sample_concurrency must be >= 1");

  std::vector<std::optional<Result<Verdict>>> slots(dataset.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= dataset.size()) return;
      slots[i] = pipeline.classify(dataset[i]);
    }
  };
  size_t thread_count =
      std::min<size_t>(static_cast<size_t>(options.sample_concurrency), dataset.size());
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  EvaluateResult result;
  std::vector<std::pair<int, int>> pairs;
  double agent_calls = 0.0;
  StageTimings sums;
  for (size_t i = 0; i < dataset.size(); ++i) {
    Result<Verdict>& r = *slots[i];
    if (!r.ok()) {
      result.failures.push_back({dataset[i].id, r.error().to_string()});
      continue;
    }
    Verdict v = std::move(r).take();
    pairs.emplace_back(*dataset[i].gold_label, v.label);
    agent_calls += static_cast<double>(v.trace.outputs.size());
    sums.retrieval_ms += v.timings.retrieval_ms;
    sums.planning_ms += v.timings.planning_ms;
    sums.agents_ms += v.timings.agents_ms;
    sums.synthesis_ms += v.timings.synthesis_ms;
    sums.total_ms += v.timings.total_ms;
    result.report.invocation.plan_counts[plan_name(v.trace.plan_decision.plan)]++;
    result.gold_labels.push_back(*dataset[i].gold_label);
    result.verdicts.push_back(std::move(v));
  }

  double failure_fraction =
      static_cast<double>(result.failures.size()) / static_cast<double>(dataset.size());
  if (failure_fraction > options.max_failure_fraction)
    return make_error(Errc::stage_failure,
                      "evaluation aborted: " + std::to_string(result.failures.size()) + "/" +
                          std::to_string(dataset.size()) + " samples failed");
  if (pairs.empty())
    return make_error(Errc::stage_failure, "evaluation produced no verdicts");

  auto metrics = compute_metrics(pairs);
  if (!metrics.ok()) return metrics.error();
  auto invocation = result.report.invocation;  // keep plan counts gathered above
  result.report = std::move(metrics).take();
  result.report.invocation = std::move(invocation);

  double n = static_cast<double>(result.verdicts.size());
  result.report.mean_timings.retrieval_ms = sums.retrieval_ms / n;
  result.report.mean_timings.planning_ms = sums.planning_ms / n;
  result.report.mean_timings.agents_ms = sums.agents_ms / n;
  result.report.mean_timings.synthesis_ms = sums.synthesis_ms / n;
  result.report.mean_timings.total_ms = sums.total_ms / n;
  result.report.invocation.mean_agent_calls = agent_calls / n;
  result.report.failed = static_cast<long>(result.failures.size());
  return result;
}

// ---------------------------------------------------------------------------
// k-sensitivity sweep

struct SweepRow {
  int k = 0;
  bool ok = false;
  std::string error;
  MetricsReport report;
};

// One evaluate per k, everything else fixed; a failing k is recorded and the
// sweep continues. make_pipeline receives each k and builds the pipeline.
template <class MakePipeline>
std::vector<SweepRow> sweep_k(MakePipeline&& make_pipeline, const std::vector<Sample>& dataset,
                              const std::vector<int>& k_values, EvaluateOptions options = {}) {
  std::vector<SweepRow> rows;
  for (int k : k_values) {
    SweepRow row;
    row.k = k;
    Result<Pipeline> pipeline = make_pipeline(k);
    if (!pipeline.ok()) {
      row.error = pipeline.error().to_string();
      rows.push_back(std::move(row));
      continue;
    }
    auto result = evaluate(pipeline.value(), dataset, options);
    if (!result.ok()) {
      row.error = result.error().to_string();
    } else {
      row.ok = true;
      row.report = std::move(result).take().report;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// CSV with the pinned header "k,accuracy,macro_f1"; failed rows are omitted.
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "k,accuracy,macro_f1\n";
  for (const auto& row : rows) {
    if (!row.ok) continue;
    char line[96];
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f\n", row.k, row.report.accuracy,
                  row.report.macro_f1);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error distribution (FP/FN shares among errors, most-confident mistakes)

struct ErrorCase {
  std::string id;
  int gold = 0;
  double probability = 0.0;
};

struct ErrorDistribution {
  double fp_share = 0.0;  // among errors only; fp_share + fn_share = 1 when errors exist
  double fn_share = 0.0;
  std::vector<ErrorCase> top_false_positives;  // most confident first, <= 10
  std::vector<ErrorCase> top_false_negatives;
  bool no_errors = false;
};

inline Result<ErrorDistribution> error_distribution(const std::vector<Verdict>& verdicts,
                                                    const std::vector<int>& gold_labels) {
  if (verdicts.size() != gold_labels.size())
    return make_error(Errc::invalid_input, "verdicts and gold labels differ in length");
  ErrorDistribution dist;
  std::vector<ErrorCase> fps, fns;
  for (size_t i = 0; i < verdicts.size(); ++i) {
    if (!is_valid_label(gold_labels[i]))
      return make_error(Errc::invalid_input, "gold labels must be 0 or 1");
    const Verdict& v = verdicts[i];
    if (v.label == gold_labels[i]) continue;
    if (v.label == 1) fps.push_back({v.id, gold_labels[i], v.probability});
    else fns.push_back({v.id, gold_labels[i], v.probability});
  }
  size_t errors = fps.size() + fns.size();
  if (errors == 0) {
    dist.no_errors = true;
    return dist;
  }
  dist.fp_share = static_cast<double>(fps.size()) / static_cast<double>(errors);
  dist.fn_share = static_cast<double>(fns.size()) / static_cast<double>(errors);
  // Confidence in the wrong call: p for a false positive, 1-p for a false negative.
  std::sort(fps.begin(), fps.end(), [](const ErrorCase& a, const ErrorCase& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.id < b.id;
  });
  std::sort(fns.begin(), fns.end(), [](const ErrorCase& a, const ErrorCase& b) {
    if (a.probability != b.probability) return a.probability < b.probability;
    return a.id < b.id;
  });
  if (fps.size() > 10) fps.resize(10);
  if (fns.size() > 10) fns.resize(10);
  dist.top_false_positives = std::move(fps);
  dist.top_false_negatives = std::move(fns);
  return dist;
}

// ---------------------------------------------------------------------------
// Stage-timing aggregation for the timings report

struct TimingRow {
  std::string stage;
  double mean_ms = 0.0;
  double percent = 0.0;  // of the summed stage means
};

inline Result<std::vector<TimingRow>> timing_table(const std::vector<StageTimings>& timings) {
  if (timings.empty()) return make_error(Errc::invalid_input, "no timings to aggregate");
  double n = static_cast<double>(timings.size());
  double retrieval = 0, planning = 0, agents = 0, synthesis = 0;
  for (const auto& t : timings) {
    retrieval += t.retrieval_ms;
    planning += t.planning_ms;
    agents += t.agents_ms;
    synthesis += t.synthesis_ms;
  }
  retrieval /= n;
  planning /= n;
  agents /= n;
  synthesis /= n;
  double total = retrieval + planning + agents + synthesis;
  auto pct = [&](double v) { return total > 0 ? v / total * 100.0 : 0.0; };
  return std::vector<TimingRow>{
      {"retrieval", retrieval, pct(retrieval)},
      {"planning", planning, pct(planning)},
      {"agents", agents, pct(agents)},
      {"synthesis", synthesis, pct(synthesis)},
  };
}

// ---------------------------------------------------------------------------
// Report serialization. generated_at is the only timestamp and the caller
// supplies it, so snapshot tests can mask that single line of the
// pretty-printed JSON.

inline nlohmann::json metrics_to_json(const MetricsReport& report,
                                      const nlohmann::json& config_echo,
                                      const std::string& generated_at) {
  nlohmann::json plans = nlohmann::json::object();
  for (const auto& [plan, count] : report.invocation.plan_counts) plans[plan] = count;
  return nlohmann::json{
      {"generated_at", generated_at},
      {"accuracy", report.accuracy},
      {"macro_f1", report.macro_f1},
      {"per_class_f1",
       {{"sarcastic", report.f1_sarcastic}, {"non_sarcastic", report.f1_non_sarcastic}}},
      {"confusion",
       {{"tp", report.confusion.tp},
        {"fp", report.confusion.fp},
        {"fn", report.confusion.fn},
        {"tn", report.confusion.tn}}},
      {"fp_share", report.fp_share},
      {"mean_timings",
       {{"retrieval_ms", report.mean_timings.retrieval_ms},
        {"planning_ms", report.mean_timings.planning_ms},
        {"agents_ms", report.mean_timings.agents_ms},
        {"synthesis_ms", report.mean_timings.synthesis_ms},
        {"total_ms", report.mean_timings.total_ms}}},
      {"invocation",
       {{"mean_agent_calls", report.invocation.mean_agent_calls}, {"plan_counts", plans}}},
      {"evaluated", report.evaluated},
      {"failed", report.failed},
      {"config", config_echo},
  };
}

}  // namespace ramsd
