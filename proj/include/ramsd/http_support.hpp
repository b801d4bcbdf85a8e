// Shared plumbing for the OpenAI-compatible HTTP adapters: base-URL parsing,
// response classification, and a bounded retry loop with exponential backoff.
#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <variant>

#include "ramsd/core.hpp"

namespace ramsd {

// "https://api.example.com/v1" -> {"https://api.example.com", "/v1"}
struct Endpoint {
  std::string host_url;   // scheme://host[:port], what httplib::Client wants
  std::string base_path;  // path prefix, "" or "/v1"-style, no trailing slash
};

inline Result<Endpoint> parse_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos)
    return make_error(Errc::config_error, "base URL missing scheme: " + base_url);
  auto scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    return make_error(Errc::config_error, "unsupported URL scheme: " + scheme);
  auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  if (path_start == std::string::npos) {
    ep.host_url = base_url;
  } else {
    ep.host_url = base_url.substr(0, path_start);
    ep.base_path = base_url.substr(path_start);
  }
  while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  if (ep.host_url.size() == scheme_end + 3)
    return make_error(Errc::config_error, "base URL missing host: " + base_url);
  return ep;
}

struct RetryPolicy {
  int max_attempts = 3;
  double initial_backoff_ms = 500.0;
  double backoff_multiplier = 2.0;
};

// One attempt's failure, annotated with whether another attempt may help.
struct HttpFailure {
  Errc code = Errc::provider_unreachable;
  std::string message;
  bool retryable = false;
  double retry_after_ms = -1.0;  // from a Retry-After header, -1 when absent
};

template <class T>
using HttpAttempt = std::variant<T, HttpFailure>;

// Retryable: transport errors, 429, 5xx. Fatal: everything else non-2xx.
inline HttpFailure classify_status(int status, const std::string& body, double retry_after_s) {
  HttpFailure f;
  f.message = "HTTP " + std::to_string(status) +
              (body.empty() ? "" : ": " + truncate_utf8(body, 200));
  if (status == 429) {
    f.code = Errc::rate_limited;
    f.retryable = true;
    if (retry_after_s >= 0.0) f.retry_after_ms = retry_after_s * 1000.0;
  } else if (status >= 500) {
    f.code = Errc::provider_unreachable;
    f.retryable = true;
  } else {
    f.code = Errc::malformed_payload;
    f.retryable = false;
  }
  return f;
}

// Runs fn up to policy.max_attempts times. fn() -> HttpAttempt<T>; retryable
// failures sleep (Retry-After when given, exponential backoff otherwise) and
// try again; fatal failures and exhaustion surface as errors.
template <class T, class Fn>
Result<T> with_retries(const RetryPolicy& policy, Fn&& fn) {
  double backoff_ms = policy.initial_backoff_ms;
  HttpFailure last;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    HttpAttempt<T> outcome = fn();
    if (auto* value = std::get_if<T>(&outcome)) return std::move(*value);
    last = std::get<HttpFailure>(outcome);
    if (!last.retryable) return make_error(last.code, last.message);
    if (attempt == policy.max_attempts) break;
    double wait_ms = last.retry_after_ms >= 0.0 ? last.retry_after_ms : backoff_ms;
    log_debug("retrying after " + std::to_string(wait_ms) + " ms: " + last.message);
    std::this_thread::sleep_for(std::chrono::microseconds(static_cast<long long>(wait_ms * 1000)));
    backoff_ms *= policy.backoff_multiplier;
  }
  return make_error(last.code, last.message + " (after " +
                                    std::to_string(policy.max_attempts) + " attempts)");
}

inline std::string api_key_from_env(const char* var) {
  const char* v = std::getenv(var);
  return v ? v : "";
}

}  // namespace ramsd
