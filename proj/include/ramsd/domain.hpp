// Pipeline value types and the plan/agent taxonomy. No I/O, no LLM calls.
#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ramsd/core.hpp"

namespace ramsd {

// ---------------------------------------------------------------------------
// Labels. The domain is strictly binary: 0 = non-sarcastic, 1 = sarcastic.

inline bool is_valid_label(int label) { return label == 0 || label == 1; }

/// One classification input.
struct Sample {
  std::string id;
  std::string text;                     // query text
  std::optional<std::string> context;   // conversational background, when present
  std::optional<int> gold_label;

  Status validate() const {
    if (trim(text).empty()) return make_error(Errc::invalid_input, "sample text is empty");
    if (gold_label && !is_valid_label(*gold_label))
      return make_error(Errc::invalid_input, "gold label must be 0 or 1");
    return {};
  }
};

/// Knowledge-base entry with its unit-normalized embedding.
struct Exemplar {
  std::string id;
  std::string text;
  int label = 0;
  std::vector<float> embedding;
};

/// Exemplar enriched with an LLM rationale and its cosine score to the query.
struct AugmentedExemplar {
  Exemplar exemplar;
  std::string rationale;
  double similarity = 0.0;
};

///// Balanced retrieved set: top-k per label partition, each sorted by
/// similarity descending.
struct RetrievedContext {
  std::vector<AugmentedExemplar> sarcastic;
  std::vector<AugmentedExemplar> non_sarcastic;
  int k = 0;

  size_t total() const { return sarcastic.size() + non_sarcastic.size(); }
  /// Exactly one side empty means the index could not serve that label.
  bool degraded() const { return sarcastic.empty() != non_sarcastic.empty(); }
};

enum class Direction { Sarcastic, NonSarcastic, Mixed };

enum class ConfidenceLevel { High, Medium, Low };

enum class PlanKind { ExpectationViolation, KnowledgeDependent, SimpleIrony };

inline const char* plan_name(PlanKind p) {
  switch (p) {
    case PlanKind::ExpectationViolation: return "expectation_violation";
    case PlanKind::KnowledgeDependent: return "knowledge_dependent";
    case PlanKind::SimpleIrony: return "simple_irony";
  }
  return "?";
}

inline std::optional<PlanKind> plan_from_string(std::string_view s) {
  if (s == "expectation_violation") return PlanKind::ExpectationViolation;
  if (s == "knowledge_dependent") return PlanKind::KnowledgeDependent;
  if (s == "simple_irony") return PlanKind::SimpleIrony;
  return std::nullopt;
}

/// Stage-1 similarity analyzer output. Structured fields are parsed
/// best-effort; anything unparseable stays absent rather than guessed.
struct SimilarityAnalysis {
  std::string raw_text;
  std::optional<Direction> primary_direction;
  std::optional<ConfidenceLevel> confidence_level;
  std::optional<PlanKind> candidate_type;
};

// Enumerator order is the canonical trace order: dependency-consuming agents
// (Expectation, Alignment, Incongruity) come after their producers.
enum class AgentKind { Semantic, Knowledge, Expectation, Alignment, Incongruity, Rhetoric };

inline constexpr AgentKind kAllAgents[] = {
    AgentKind::Semantic,   AgentKind::Knowledge,   AgentKind::Expectation,
    AgentKind::Alignment,  AgentKind::Incongruity, AgentKind::Rhetoric,
};

inline const char* agent_name(AgentKind a) {
  switch (a) {
    case AgentKind::Semantic: return "semantic";
    case AgentKind::Knowledge: return "knowledge";
    case AgentKind::Expectation: return "expectation";
    case AgentKind::Alignment: return "alignment";
    case AgentKind::Incongruity: return "incongruity";
    case AgentKind::Rhetoric: return "rhetoric";
  }
  return "?";
}

inline std::optional<AgentKind> agent_from_string(std::string_view s) {
  for (AgentKind a : kAllAgents)
    if (s == agent_name(a)) return a;
  return std::nullopt;
}

/// Agent ensemble mandated by a plan. `ambiguous` affects SimpleIrony only,
/// adding the optional semantic/incongruity support agents.
inline std::set<AgentKind> ensemble_for(PlanKind plan, bool ambiguous) {
  switch (plan) {
    case PlanKind::ExpectationViolation:
      return {AgentKind::Semantic, AgentKind::Expectation, AgentKind::Incongruity,
              AgentKind::Rhetoric};
    case PlanKind::KnowledgeDependent:
      return {AgentKind::Semantic, AgentKind::Knowledge, AgentKind::Alignment,
              AgentKind::Rhetoric};
    case PlanKind::SimpleIrony:
      if (ambiguous)
        return {AgentKind::Rhetoric, AgentKind::Semantic, AgentKind::Incongruity};
      return {AgentKind::Rhetoric};
  }
  return {};
}

/// Probability >= 0.5 maps to sarcastic; the boundary itself is sarcastic.
inline int apply_threshold(double probability) {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw std::invalid_argument("probability outside [0, 1]");
  return probability >= 0.5 ? 1 : 0;
}

/// Meta-planner decision after rule validation.
struct PlanDecision {
  PlanKind plan = PlanKind::ExpectationViolation;      // P*, post-validation
  double confidence = 0.0;
  std::string contextual_analysis;                     // O_plan
  std::string reasoning;
  PlanKind llm_selected_plan = PlanKind::ExpectationViolation;
  std::vector<std::string> entities;
  bool overridden = false;                             // plan != llm_selected_plan
  bool ambiguous = false;                              // SI support-agent trigger
};

struct AgentOutput {
  AgentKind agent = AgentKind::Rhetoric;
  std::string content;
  double elapsed_ms = 0.0;
};

/// Ordered agent outputs plus the Stage-1/2 artifacts they were conditioned on.
struct ReasoningTrace {
  std::vector<AgentOutput> outputs;   // canonical agent order
  SimilarityAnalysis similarity_analysis;
  PlanDecision plan_decision;
};

/// Validating constructor: the agent set must equal the plan's ensemble, with
/// no duplicates, in canonical order.
inline Result<ReasoningTrace> make_trace(std::vector<AgentOutput> outputs,
                                         SimilarityAnalysis similarity,
                                         PlanDecision decision) {
  std::set<AgentKind> seen;
  for (const auto& out : outputs) {
    if (!seen.insert(out.agent).second)
      return make_error(Errc::invalid_input,
                        std::string("duplicate agent in trace: ") + agent_name(out.agent));
    if (out.content.empty())
      return make_error(Errc::invalid_input, "agent output content is empty");
  }
  const std::set<AgentKind> expected = ensemble_for(decision.plan, decision.ambiguous);
  if (seen != expected) {
    std::string msg = "trace agent set does not match plan ensemble for ";
    msg += plan_name(decision.plan);
    return make_error(Errc::invalid_input, msg);
  }
  std::sort(outputs.begin(), outputs.end(),
            [](const AgentOutput& a, const AgentOutput& b) { return a.agent < b.agent; });
  return ReasoningTrace{std::move(outputs), std::move(similarity), std::move(decision)};
}

struct StageTimings {
  double retrieval_ms = 0.0;
  double planning_ms = 0.0;
  double agents_ms = 0.0;
  double synthesis_ms = 0.0;
  double total_ms = 0.0;

  double stage_sum() const { return retrieval_ms + planning_ms + agents_ms + synthesis_ms; }

  /// total within 1% of the stage sum (wall-clock bookkeeping slack).
  bool consistent() const {
    double sum = stage_sum();
    double denom = std::max(std::abs(total_ms), std::abs(sum));
    if (denom < 1e-9) return true;
    return std::abs(total_ms - sum) <= 0.01 * denom;
  }
};

/// Final pipeline output for one sample.
struct Verdict {
  std::string id;
  int label = 0;                 // y_pred; always equals apply_threshold(probability)
  double probability = 0.0;      // p(y = sarcasm)
  std::string explanation;
  ReasoningTrace trace;
  RetrievedContext retrieved;
  StageTimings timings;
  std::vector<std::string> flags;
};

/// Validating constructor for the threshold and non-empty-explanation contracts.
inline Result<Verdict> make_verdict(std::string id, double probability,
                                    std::string explanation, ReasoningTrace trace,
                                    RetrievedContext retrieved, StageTimings timings,
                                    std::vector<std::string> flags = {}) {
  if (!(probability >= 0.0 && probability <= 1.0))
    return make_error(Errc::invalid_input, "verdict probability outside [0, 1]");
  if (explanation.empty())
    return make_error(Errc::invalid_input, "verdict explanation is empty");
  Verdict v;
  v.id = std::move(id);
  v.probability = probability;
  v.label = apply_threshold(probability);
  v.explanation = std::move(explanation);
  v.trace = std::move(trace);
  v.retrieved = std::move(retrieved);
  v.timings = timings;
  v.flags = std::move(flags);
  return v;
}

}  // namespace ramsd
