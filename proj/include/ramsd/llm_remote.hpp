// OpenAI-compatible chat adapter (POST {base}/chat/completions). Each call
// retries transient failures per RetryPolicy; 4xx other than 429 is fatal.
// Plain-HTTP endpoints only unless built with CPPHTTPLIB_OPENSSL_SUPPORT.
#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "ramsd/core.hpp"
#include "ramsd/http_support.hpp"
#include "ramsd/llm.hpp"

namespace ramsd {

class OpenAiChatBackend : public ChatBackend {
 public:
  struct Options {
    std::string base_url = "http://localhost:8000/v1";
    std::string api_key;  // empty -> OPENAI_API_KEY
    std::string model = "gpt-4o";
    RetryPolicy retry;
    double timeout_s = 60.0;
  };

  explicit OpenAiChatBackend(Options opts) : opts_(std::move(opts)) {
    if (opts_.api_key.empty()) opts_.api_key = api_key_from_env("OPENAI_API_KEY");
  }

  std::string name() const override { return "openai-chat"; }

  Result<LlmResponse> complete(const LlmRequest& request) override {
    record_call();
    auto ep = parse_base_url(opts_.base_url);
    if (!ep.ok()) return ep.error();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (starts_with(opts_.base_url, "https://"))
      return make_error(Errc::config_error,
                        "https endpoint requires a TLS-enabled build: " + opts_.base_url);
#endif

    nlohmann::json payload = {
        {"model", request.model_id.empty() ? opts_.model : request.model_id},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    const std::string body = payload.dump();
    const std::string path = ep.value().base_path + "/chat/completions";

    return with_retries<LlmResponse>(opts_.retry, [&]() -> HttpAttempt<LlmResponse> {
      httplib::Client client(ep.value().host_url);
      client.set_connection_timeout(std::chrono::milliseconds(
          static_cast<long long>(opts_.timeout_s * 1000)));
      client.set_read_timeout(std::chrono::milliseconds(
          static_cast<long long>(opts_.timeout_s * 1000)));
      httplib::Headers headers;
      if (!opts_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + opts_.api_key);

      auto start = std::chrono::steady_clock::now();
      auto res = client.Post(path, headers, body, "application/json");
      double elapsed_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count();

      if (!res)
        return HttpFailure{Errc::provider_unreachable,
                           "request failed: " + httplib::to_string(res.error()), true, -1.0};
      if (res->status != 200) {
        double retry_after_s = -1.0;
        if (res->has_header("Retry-After"))
          retry_after_s = std::strtod(res->get_header_value("Retry-After").c_str(), nullptr);
        return classify_status(res->status, res->body, retry_after_s);
      }

      auto doc = nlohmann::json::parse(res->body, nullptr, false);
      if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
          !doc["choices"][0].contains("message"))
        return HttpFailure{Errc::malformed_payload,
                           "unexpected chat completion payload: " + truncate_utf8(res->body, 200),
                           false, -1.0};
      LlmResponse out;
      out.text = doc["choices"][0]["message"].value("content", "");
      out.latency_ms = elapsed_ms;
      if (doc.contains("usage")) {
        TokenUsage usage;
        usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
        usage.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
        out.token_usage = usage;
      }
      return out;
    });
  }

 private:
  Options opts_;
};

}  // namespace ramsd
