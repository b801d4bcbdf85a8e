// Four-stage orchestration for one sample: retrieval + rationales + similarity
// analysis, meta-planning with rule validation, plan-conditioned agent fan-out
// over a dependency DAG, and the final integrator judgment.
//
// Timing convention: each stage's duration is the sum of the latencies its LLM
// calls report, and total is the sum of the four stages. A rationale served
// from cache replays the latency recorded when it was generated, so timings do
// not depend on cache warmth. With the mock backend latencies are derived from
// call content; identical inputs therefore produce byte-identical serialized
// verdicts. Local compute (embedding, ranking) is not billed to any stage.
#pragma once

#include <atomic>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ramsd/core.hpp"
#include "ramsd/domain.hpp"
#include "ramsd/embedding.hpp"
#include "ramsd/llm.hpp"
#include "ramsd/prompts.hpp"
#include "ramsd/retrieval.hpp"

namespace ramsd {

struct PipelineConfig {
  int k = 3;
  int max_in_flight_agents = 4;
  int si_word_limit = 15;          // planner guidance for simple_irony (prompt-side)
  int override_word_limit = 50;    // R1: longer text cannot stay simple_irony
  int entity_trigger = 3;          // R2: this many entities forces knowledge_dependent
  double ambiguity_confidence_floor = 0.6;
  std::uint64_t seed = 0;          // mock-backend determinism knob

  Status validate() const {
    if (k < 1) return make_error(Errc::config_error, "k must be >= 1");
    if (max_in_flight_agents < 1)
      return make_error(Errc::config_error, "max_in_flight_agents must be >= 1");
    if (si_word_limit < 1 || override_word_limit < 1 || entity_trigger < 1)
      return make_error(Errc::config_error, "word/entity limits must be >= 1");
    if (ambiguity_confidence_floor < 0.0 || ambiguity_confidence_floor > 1.0)
      return make_error(Errc::config_error, "ambiguity_confidence_floor must be in [0,1]");
    return {};
  }
};

// Append-only JSONL cache for exemplar rationales, keyed on
// (backend/model, exemplar id, text, label) so a changed exemplar re-generates.
// Each entry keeps the latency of the call that produced it; hits replay that
// latency into the stage budget, so timings — and therefore serialized
// verdicts — do not depend on cache warmth.
class RationaleCache {
 public:
  struct Entry {
    std::string value;
    double latency_ms = 0.0;
  };

  RationaleCache() = default;  // in-memory only

  static Result<RationaleCache> open(const std::string& path) {
    RationaleCache cache;
    cache.path_ = path;
    std::ifstream in(path);
    if (in) {
      std::string line;
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.contains("key") || !doc.contains("value")) {
          log_warn("rationale cache: skipping malformed line");
          continue;
        }
        Entry entry;
        entry.value = doc["value"].get<std::string>();
        if (doc.contains("latency_ms") && doc["latency_ms"].is_number())
          entry.latency_ms = doc["latency_ms"].get<double>();
        cache.entries_[doc["key"].get<std::string>()] = std::move(entry);
      }
    }
    cache.out_.open(path, std::ios::app);
    if (!cache.out_) return make_error(Errc::io_error, "cannot open rationale cache " + path);
    return cache;
  }

  static std::string key_for(const std::string& model_tag, const Exemplar& ex) {
    return content_key("rationale\x1f" + model_tag + "\x1f" + ex.id + "\x1f" + ex.text +
                       "\x1f" + std::to_string(ex.label));
  }

  std::optional<Entry> get(const std::string& key) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      misses_.fetch_add(1, std::memory_order_relaxed);
      return std::nullopt;
    }
    hits_.fetch_add(1, std::memory_order_relaxed);
    return it->second;
  }

  void put(const std::string& key, const std::string& value, double latency_ms) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (!entries_.emplace(key, Entry{value, latency_ms}).second) return;
    if (out_.is_open()) {
      nlohmann::json line = {{"key", key}, {"value", value}, {"latency_ms", latency_ms}};
      out_ << line.dump() << "\n";
      out_.flush();
    }
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }
  std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
  std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }

 private:
  RationaleCache(const RationaleCache&) = delete;
  RationaleCache& operator=(const RationaleCache&) = delete;

 public:
  RationaleCache(RationaleCache&& other) noexcept {
    entries_ = std::move(other.entries_);
    path_ = std::move(other.path_);
    out_ = std::move(other.out_);
    hits_.store(other.hits_.load());
    misses_.store(other.misses_.load());
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
  std::string path_;
  std::ofstream out_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

// Artifacts accumulate as stages run; later stages only append.
struct StageArtifacts {
  RetrievedContext retrieved;
  SimilarityAnalysis similarity;
  PlanDecision plan;
  ReasoningTrace trace;
  StageTimings timings;
  std::vector<std::string> flags;
};

namespace detail {

inline bool contains_ci(const std::string& haystack, const std::string& needle) {
  return to_lower(haystack).find(needle) != std::string::npos;
}

inline std::string line_after(const std::string& text, const std::string& marker) {
  auto pos = text.find(marker);
  if (pos == std::string::npos) return "";
  pos += marker.size();
  auto eol = text.find('\n', pos);
  return text.substr(pos, (eol == std::string::npos ? text.size() : eol) - pos);
}

}  // namespace detail

// Best-effort extraction of the analyzer's structured fields; anything the
// text does not state cleanly stays absent.
inline SimilarityAnalysis parse_similarity(const std::string& raw_text) {
  SimilarityAnalysis s;
  s.raw_text = raw_text;

  auto direction = to_lower(detail::line_after(raw_text, "Primary similarity direction:"));
  if (!direction.empty()) {
    if (direction.find("non-sarcastic") != std::string::npos ||
        direction.find("non_sarcastic") != std::string::npos)
      s.primary_direction = Direction::NonSarcastic;
    else if (direction.find("mixed") != std::string::npos)
      s.primary_direction = Direction::Mixed;
    else if (direction.find("sarcastic") != std::string::npos)
      s.primary_direction = Direction::Sarcastic;
  }

  auto conf = to_lower(detail::line_after(raw_text, "Confidence level:"));
  if (conf.find("high") != std::string::npos) s.confidence_level = ConfidenceLevel::High;
  else if (conf.find("medium") != std::string::npos) s.confidence_level = ConfidenceLevel::Medium;
  else if (conf.find("low") != std::string::npos) s.confidence_level = ConfidenceLevel::Low;

  auto candidate = detail::line_after(raw_text, "Candidate sarcasm type");
  for (PlanKind p : {PlanKind::ExpectationViolation, PlanKind::KnowledgeDependent,
                     PlanKind::SimpleIrony})
    if (candidate.find(plan_name(p)) != std::string::npos) {
      s.candidate_type = p;
      break;
    }
  return s;
}

class Pipeline {
 public:
  struct Deps {
    std::shared_ptr<EmbeddingProvider> embedder;
    std::shared_ptr<ChatBackend> backend;
    std::shared_ptr<PromptLibrary> prompts;
    std::shared_ptr<RationaleCache> rationale_cache;  // null -> fresh in-memory cache
    double temperature = 0.1;  // stamped onto every chat request
    int max_tokens = 512;
  };

  Pipeline(std::shared_ptr<const DualIndex> index, Deps deps, PipelineConfig config)
      : index_(std::move(index)), deps_(std::move(deps)), config_(config) {
    if (!deps_.rationale_cache) deps_.rationale_cache = std::make_shared<RationaleCache>();
  }
  Pipeline(DualIndex index, Deps deps, PipelineConfig config)
      : Pipeline(std::make_shared<const DualIndex>(std::move(index)), std::move(deps), config) {}

  const DualIndex& index() const { return *index_; }
  const PipelineConfig& config() const { return config_; }

  // Stage 1: retrieve 2k exemplars, generate (or recall) one rationale per
  // exemplar, then run the similarity analyzer over the full set.
  Result<StageArtifacts> stage1_contextualize(const Sample& sample) {
    StageArtifacts art;

    auto qvec = deps_.embedder->embed(sample.text);
    if (!qvec.ok())
      return make_error(qvec.error().code, "stage1: " + qvec.error().message);
    renormalize(qvec.value());

    auto retrieved = retrieve(*index_, qvec.value(), config_.k);
    if (!retrieved.ok())
      return make_error(retrieved.error().code, "stage1: " + retrieved.error().message);
    art.retrieved = std::move(retrieved).take();
    if (art.retrieved.degraded()) art.flags.push_back("degraded_retrieval");

    if (auto st = fill_rationales(art); !st.ok()) return st.error();

    std::map<std::string, std::string> bindings = {
        {"text", sample.text},
        {"non_sarcastic_examples_block", render_examples_block(art.retrieved.non_sarcastic)},
        {"sarcastic_examples_block", render_examples_block(art.retrieved.sarcastic)},
    };
    if (sample.context)
      bindings["context_if_available"] = "**Context:** \"" + *sample.context + "\"";
    auto prompt = render(deps_.prompts->get(TemplateName::SimilarityAnalyzer), bindings);
    if (!prompt.ok()) return prompt.error();

    LlmRequest req = new_request(LlmRole::SimilarityAnalyzer);
    req.prompt = std::move(prompt).take();
    auto resp = deps_.backend->complete(req);
    if (!resp.ok())
      return make_error(Errc::stage_failure, "stage1: similarity analyzer: " +
                                                 resp.error().message);
    art.timings.retrieval_ms += resp.value().latency_ms;
    art.similarity = parse_similarity(resp.value().text);
    return art;
  }

  // Stage 2: meta-planner call, then rule validation. R1 first (long text
  // cannot stay simple_irony), then R2 (enough entities forces
  // knowledge_dependent); R2 wins when both fire.
  Status stage2_plan(const Sample& sample, StageArtifacts& art) {
    std::map<std::string, std::string> bindings = {
        {"text", sample.text},
        {"similarity_analysis_output", art.similarity.raw_text},
        {"brief_summary_of_non_sarc_examples", summarize(art.retrieved.non_sarcastic)},
        {"brief_summary_of_sarc_examples", summarize(art.retrieved.sarcastic)},
    };
    auto prompt = render(deps_.prompts->get(TemplateName::MetaPlanner), bindings);
    if (!prompt.ok()) return prompt.error();

    LlmRequest req = new_request(LlmRole::Planner);
    req.prompt = std::move(prompt).take();
    auto resp = deps_.backend->complete(req);
    if (!resp.ok())
      return make_error(Errc::stage_failure, "stage2: planner: " + resp.error().message);
    art.timings.planning_ms += resp.value().latency_ms;

    PlanDecision decision;
    auto parsed = parse_planner(resp.value().text);
    if (!parsed.ok()) {
      // Fall back to the most general ensemble rather than failing the sample.
      decision.plan = PlanKind::ExpectationViolation;
      decision.llm_selected_plan = PlanKind::ExpectationViolation;
      decision.confidence = 0.0;
      decision.reasoning = "(planner output unparseable: " + parsed.error().message + ")";
      art.flags.push_back("planner_fallback");
    } else {
      const PlannerParse& p = parsed.value();
      decision.llm_selected_plan = p.selected_plan;
      decision.plan = p.selected_plan;
      decision.confidence = p.confidence;
      decision.contextual_analysis = p.contextual_analysis;
      decision.reasoning = p.reasoning;
      decision.entities = p.entities;
      if (word_count(sample.text) > config_.override_word_limit &&
          decision.plan == PlanKind::SimpleIrony)
        decision.plan = PlanKind::ExpectationViolation;
      if (decision.entities.size() >= static_cast<size_t>(config_.entity_trigger))
        decision.plan = PlanKind::KnowledgeDependent;
      decision.overridden = decision.plan != decision.llm_selected_plan;
    }
    decision.ambiguous = decision.plan == PlanKind::SimpleIrony &&
                         decision.confidence < config_.ambiguity_confidence_floor;
    art.plan = std::move(decision);
    return {};
  }

  // Stage 3: run the plan's ensemble over the dependency DAG
  // (Semantic → Expectation → Incongruity; {Semantic, Knowledge} → Alignment;
  // Rhetoric and Knowledge independent). Independent agents run concurrently,
  // bounded by max_in_flight_agents.
  Status stage3_execute(const Sample& sample, StageArtifacts& art) {
    const auto ensemble = ensemble_for(art.plan.plan, art.plan.ambiguous);

    std::map<AgentKind, std::shared_future<AgentOutput>> futures;
    std::map<AgentKind, std::promise<AgentOutput>> promises;
    for (AgentKind agent : ensemble) futures[agent] = promises[agent].get_future().share();

    std::counting_semaphore<256> slots(config_.max_in_flight_agents);
    std::vector<std::thread> workers;
    workers.reserve(ensemble.size());
    for (AgentKind agent : ensemble) {
      workers.emplace_back([&, agent]() {
        std::map<std::string, std::string> upstream;
        for (AgentKind dep : dependencies_of(agent)) {
          std::string binding = std::string(agent_name(dep)) + "_agent_output";
          auto it = futures.find(dep);
          upstream[binding] = it != futures.end() ? it->second.get().content : "(not run)";
        }
        slots.acquire();
        AgentOutput out = run_agent(sample, art, agent, upstream);
        slots.release();
        promises[agent].set_value(std::move(out));
      });
    }
    for (auto& w : workers) w.join();

    std::vector<AgentOutput> outputs;
    size_t failed = 0;
    for (AgentKind agent : ensemble) {
      AgentOutput out = futures[agent].get();
      if (starts_with(out.content, "(agent failed:")) ++failed;
      art.timings.agents_ms += out.elapsed_ms;
      outputs.push_back(std::move(out));
    }
    if (failed == ensemble.size())
      return make_error(Errc::stage_failure, "stage3: all agents failed");

    auto trace = make_trace(std::move(outputs), art.similarity, art.plan);
    if (!trace.ok()) return trace.error();
    art.trace = std::move(trace).take();
    return {};
  }

  // Stage 4: one integrator call; (label, conf) map to probability as
  // p = conf when label is 1, 1 - conf when label is 0, and the threshold on
  // p always decides the final label.
  Result<Verdict> stage4_judge(const Sample& sample, StageArtifacts art) {
    if (art.trace.outputs.empty())
      return make_error(Errc::invalid_input, "stage4: empty reasoning trace");

    nlohmann::json agent_outputs = nlohmann::json::array();
    for (const auto& out : art.trace.outputs)
      agent_outputs.push_back({{"agent", agent_name(out.agent)}, {"content", out.content}});

    std::map<std::string, std::string> bindings = {
        {"text", sample.text},
        {"similarity_analysis_from_stage1", art.similarity.raw_text},
        {"plan_type", plan_name(art.plan.plan)},
        {"O_plan_summary", art.plan.contextual_analysis},
        {"all_agent_outputs_json", agent_outputs.dump()},
    };
    auto prompt = render(deps_.prompts->get(TemplateName::Integrator), bindings);
    if (!prompt.ok()) return prompt.error();

    LlmRequest req = new_request(LlmRole::Integrator);
    req.prompt = std::move(prompt).take();
    auto resp = deps_.backend->complete(req);
    if (!resp.ok())
      return make_error(Errc::stage_failure, "stage4: integrator: " + resp.error().message);
    art.timings.synthesis_ms += resp.value().latency_ms;
    art.timings.total_ms = art.timings.stage_sum();

    double probability = 0.5;
    std::string explanation;
    int judge_label = -1;
    auto judgment = parse_judgment(resp.value().text);
    if (!judgment.ok()) {
      art.flags.push_back("judgment_parse_failed");
      explanation = "(judgment unavailable: " + judgment.error().message + ")";
    } else {
      const JudgmentParse& j = judgment.value();
      judge_label = j.label;
      probability = j.label == 1 ? j.confidence : 1.0 - j.confidence;
      if (j.degraded) {
        art.flags.push_back("judgment_degraded");
        explanation = "(label line only; no structured reasoning)";
      } else {
        explanation = j.reasoning.empty() ? "(no reasoning provided)" : j.reasoning;
      }
    }

    auto verdict = make_verdict(sample.id, probability, std::move(explanation),
                                std::move(art.trace), std::move(art.retrieved), art.timings,
                                std::move(art.flags));
    if (!verdict.ok()) return verdict.error();
    if (judge_label != -1 && verdict.value().label != judge_label)
      verdict.value().flags.push_back("threshold_overrode_judge");
    return verdict;
  }

  // All four stages for one sample.
  Result<Verdict> classify(const Sample& sample) {
    if (auto st = sample.validate(); !st.ok()) return st.error();
    if (auto st = config_.validate(); !st.ok()) return st.error();

    auto art = stage1_contextualize(sample);
    if (!art.ok()) return art.error();
    if (auto st = stage2_plan(sample, art.value()); !st.ok()) return st.error();
    if (auto st = stage3_execute(sample, art.value()); !st.ok()) return st.error();
    return stage4_judge(sample, std::move(art).take());
  }

 private:
  LlmRequest new_request(LlmRole role) const {
    LlmRequest req;
    req.role = role;
    req.temperature = deps_.temperature;
    req.max_tokens = deps_.max_tokens;
    return req;
  }

  // Rationales for every retrieved exemplar, cache first; a failed generation
  // downgrades that exemplar to "(unavailable)" instead of aborting.
  Status fill_rationales(StageArtifacts& art) {
    const std::string model_tag = deps_.backend->name();
    std::vector<AugmentedExemplar*> all;
    for (auto& a : art.retrieved.non_sarcastic) all.push_back(&a);
    for (auto& a : art.retrieved.sarcastic) all.push_back(&a);

    std::vector<size_t> pending;
    std::vector<LlmRequest> requests;
    for (size_t i = 0; i < all.size(); ++i) {
      auto key = RationaleCache::key_for(model_tag, all[i]->exemplar);
      if (auto hit = deps_.rationale_cache->get(key)) {
        all[i]->rationale = hit->value;
        art.timings.retrieval_ms += hit->latency_ms;  // replayed, keeps timings cache-neutral
        continue;
      }
      auto prompt = render(deps_.prompts->get(TemplateName::Rationale),
                           {{"text", all[i]->exemplar.text},
                            {"label", all[i]->exemplar.label == 1 ? "sarcastic"
                                                                  : "non-sarcastic"}});
      if (!prompt.ok()) return prompt.error();
      LlmRequest req = new_request(LlmRole::RationaleGen);
      req.prompt = std::move(prompt).take();
      requests.push_back(std::move(req));
      pending.push_back(i);
    }

    auto responses = complete_many(*deps_.backend, requests, config_.max_in_flight_agents);
    for (size_t r = 0; r < responses.size(); ++r) {
      AugmentedExemplar* target = all[pending[r]];
      if (!responses[r].ok()) {
        log_warn("rationale for exemplar " + target->exemplar.id + " failed: " +
                 responses[r].error().message);
        target->rationale = "(unavailable)";
        continue;
      }
      art.timings.retrieval_ms += responses[r].value().latency_ms;
      target->rationale = responses[r].value().text;
      deps_.rationale_cache->put(RationaleCache::key_for(model_tag, target->exemplar),
                                 target->rationale, responses[r].value().latency_ms);
    }
    return {};
  }

  // "<text>" (sim 0.92); ... — exemplar digests for the planner summary lines,
  // text capped at 400 bytes.
  static std::string summarize(const std::vector<AugmentedExemplar>& items) {
    if (items.empty()) return "(none)";
    std::ostringstream os;
    for (size_t i = 0; i < items.size(); ++i) {
      if (i) os << "; ";
      char sim[16];
      std::snprintf(sim, sizeof sim, "%.2f", items[i].similarity);
      os << "\"" << truncate_utf8(items[i].exemplar.text, 400) << "\" (sim " << sim << ")";
    }
    return os.str();
  }

  static const std::vector<AgentKind>& dependencies_of(AgentKind agent) {
    static const std::vector<AgentKind> kNone;
    static const std::vector<AgentKind> kSemantic = {AgentKind::Semantic};
    static const std::vector<AgentKind> kSemanticKnowledge = {AgentKind::Semantic,
                                                              AgentKind::Knowledge};
    static const std::vector<AgentKind> kExpectation = {AgentKind::Expectation};
    switch (agent) {
      case AgentKind::Expectation: return kSemantic;
      case AgentKind::Alignment: return kSemanticKnowledge;
      case AgentKind::Incongruity: return kExpectation;
      default: return kNone;
    }
  }

  AgentOutput run_agent(const Sample& sample, const StageArtifacts& art, AgentKind agent,
                        const std::map<std::string, std::string>& upstream) {
    std::map<std::string, std::string> bindings = upstream;
    bindings["text"] = sample.text;
    switch (agent) {
      case AgentKind::Semantic:
      case AgentKind::Rhetoric:
        if (sample.context) bindings["context"] = *sample.context;
        break;
      case AgentKind::Knowledge:
      case AgentKind::Expectation:
        // The appendix wires a "Context Agent" that has no prompt of its own;
        // the Stage-1 similarity analysis is the closest produced artifact.
        bindings["context_agent_output"] = art.similarity.raw_text;
        if (agent == AgentKind::Expectation)
          bindings["meta_planner_context"] = art.plan.contextual_analysis;
        break;
      case AgentKind::Alignment:
        bindings["similarity_analysis_summary"] = art.similarity.raw_text;
        break;
      case AgentKind::Incongruity:
        break;
    }

    AgentOutput out;
    out.agent = agent;
    auto prompt = render(deps_.prompts->get(template_for_agent(agent)), bindings);
    if (!prompt.ok()) {
      out.content = "(agent failed: " + prompt.error().message + ")";
      return out;
    }
    LlmRequest req = new_request(LlmRole::Agent);
    req.agent = agent;
    req.prompt = std::move(prompt).take();
    auto resp = deps_.backend->complete(req);
    if (!resp.ok()) {
      out.content = "(agent failed: " + resp.error().message + ")";
      return out;
    }
    out.content = resp.value().text;
    out.elapsed_ms = resp.value().latency_ms;
    return out;
  }

  std::shared_ptr<const DualIndex> index_;
  Deps deps_;
  PipelineConfig config_;
};

// ---------------------------------------------------------------------------
// Verdict serialization (one JSON object; JSONL in batch mode). Retrieved
// exemplars list non-sarcastic first, matching prompt order.

inline nlohmann::json verdict_to_json(const Verdict& v) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& out : v.trace.outputs)
    agents.push_back({{"agent", agent_name(out.agent)},
                      {"content", out.content},
                      {"elapsed_ms", out.elapsed_ms}});
  nlohmann::json retrieved = nlohmann::json::array();
  for (const auto* side : {&v.retrieved.non_sarcastic, &v.retrieved.sarcastic})
    for (const auto& a : *side)
      retrieved.push_back({{"id", a.exemplar.id},
                           {"label", a.exemplar.label},
                           {"similarity", a.similarity}});
  return nlohmann::json{
      {"id", v.id},
      {"label", v.label},
      {"probability", v.probability},
      {"explanation", v.explanation},
      {"plan", plan_name(v.trace.plan_decision.plan)},
      {"overridden", v.trace.plan_decision.overridden},
      {"agents", std::move(agents)},
      {"retrieved", std::move(retrieved)},
      {"timings",
       {{"retrieval_ms", v.timings.retrieval_ms},
        {"planning_ms", v.timings.planning_ms},
        {"agents_ms", v.timings.agents_ms},
        {"synthesis_ms", v.timings.synthesis_ms},
        {"total_ms", v.timings.total_ms}}},
      {"flags", v.flags},
  };
}

}  // namespace ramsd
