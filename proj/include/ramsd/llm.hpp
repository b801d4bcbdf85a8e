// Chat-completion backend contract shared by the remote client and the
// deterministic mock, plus bounded-concurrency fan-out.
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ramsd/core.hpp"
#include "ramsd/domain.hpp"

namespace ramsd {

enum class LlmRole { RationaleGen, SimilarityAnalyzer, Planner, Agent, Integrator };

inline const char* role_name(LlmRole r) {
  switch (r) {
    case LlmRole::RationaleGen: return "rationale";
    case LlmRole::SimilarityAnalyzer: return "similarity";
    case LlmRole::Planner: return "planner";
    case LlmRole::Agent: return "agent";
    case LlmRole::Integrator: return "integrator";
  }
  return "?";
}

struct LlmRequest {
  LlmRole role = LlmRole::Agent;
  std::optional<AgentKind> agent;   // set when role == Agent
  std::string prompt;
  double temperature = 0.1;
  int max_tokens = 512;
  std::string model_id;

  std::string role_tag() const {
    std::string tag = role_name(role);
    if (agent) tag += std::string(":") + agent_name(*agent);
    return tag;
  }
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct LlmResponse {
  std::string text;
  double latency_ms = 0.0;
  std::optional<TokenUsage> token_usage;   // only when the provider reports it
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  virtual std::string name() const = 0;
  virtual Result<LlmResponse> complete(const LlmRequest& request) = 0;

  /// Total completed calls (successes and failures), for invocation accounting.
  std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }

 protected:
  void record_call() { calls_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

/// Runs the requests with at most max_in_flight outstanding. Responses come
/// back in request order; one failure never cancels its siblings.
inline std::vector<Result<LlmResponse>> complete_many(ChatBackend& backend,
                                                      const std::vector<LlmRequest>& requests,
                                                      int max_in_flight) {
  if (max_in_flight < 1) max_in_flight = 1;
  const size_t n = requests.size();
  std::vector<std::optional<Result<LlmResponse>>> slots(n);
  if (n == 0) return {};

  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      slots[i] = backend.complete(requests[i]);
    }
  };

  size_t n_threads = std::min<size_t>(static_cast<size_t>(max_in_flight), n);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<Result<LlmResponse>> out;
  out.reserve(n);
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

}  // namespace ramsd
