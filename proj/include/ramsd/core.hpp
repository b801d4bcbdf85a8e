// Shared support types: error/result handling, hashing, logging, small utilities.
#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ramsd {

enum class Errc {
  invalid_input,
  io_error,
  config_error,
  provider_unreachable,
  rate_limited,
  dimension_mismatch,
  malformed_payload,
  missing_binding,
  parse_error,
  unknown_plan,
  missing_label_line,
  label_mismatch,
  stage_failure,
  not_found,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_input: return "invalid_input";
    case Errc::io_error: return "io_error";
    case Errc::config_error: return "config_error";
    case Errc::provider_unreachable: return "provider_unreachable";
    case Errc::rate_limited: return "rate_limited";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::malformed_payload: return "malformed_payload";
    case Errc::missing_binding: return "missing_binding";
    case Errc::parse_error: return "parse_error";
    case Errc::unknown_plan: return "unknown_plan";
    case Errc::missing_label_line: return "missing_label_line";
    case Errc::label_mismatch: return "label_mismatch";
    case Errc::stage_failure: return "stage_failure";
    case Errc::not_found: return "not_found";
  }
  return "unknown";
}

struct Error {
  Errc code = Errc::invalid_input;
  std::string message;

  std::string to_string() const {
    return std::string(errc_name(code)) + ": " + message;
  }
};

inline Error make_error(Errc code, std::string message) {
  return Error{code, std::move(message)};
}

/// Value-or-error carrier used by every fallible operation in the library.
template <typename T>
class Result {
 public:
  Result(T value) : state_(std::move(value)) {}          // NOLINT(google-explicit-constructor)
  Result(Error error) : state_(std::move(error)) {}      // NOLINT(google-explicit-constructor)

  bool ok() const { return std::holds_alternative<T>(state_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& { return std::get<T>(state_); }
  T& value() & { return std::get<T>(state_); }
  T&& take() && { return std::get<T>(std::move(state_)); }

  const Error& error() const { return std::get<Error>(state_); }

  const T* operator->() const { return &std::get<T>(state_); }
  const T& operator*() const { return std::get<T>(state_); }

 private:
  std::variant<T, Error> state_;
};

template <>
class Result<void> {
 public:
  Result() = default;
  Result(Error error) : error_(std::move(error)) {}      // NOLINT(google-explicit-constructor)

  bool ok() const { return !error_.has_value(); }
  explicit operator bool() const { return ok(); }
  const Error& error() const { return *error_; }

 private:
  std::optional<Error> error_;
};

using Status = Result<void>;

// ---------------------------------------------------------------------------
// Logging. Level comes from RAMSD_LOG (debug|info|warn|error), default warn.

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

namespace detail {

inline LogLevel log_threshold() {
  static LogLevel level = [] {
    const char* env = std::getenv("RAMSD_LOG");
    if (!env) return LogLevel::warn;
    std::string_view v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "error") return LogLevel::error;
    return LogLevel::warn;
  }();
  return level;
}

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

inline void log_line(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) < static_cast<int>(detail::log_threshold())) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  std::fprintf(stderr, "[ramsd:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void log_debug(const std::string& msg) { log_line(LogLevel::debug, msg); }
inline void log_info(const std::string& msg) { log_line(LogLevel::info, msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::warn, msg); }
inline void log_error(const std::string& msg) { log_line(LogLevel::error, msg); }

// ---------------------------------------------------------------------------
// Hashing. FNV-1a, used for cache keys, the mock backend, and the local
// embedder. Fixed constants keep results identical across platforms.

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = kFnvOffset) {
  std::uint64_t h = seed;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= kFnvPrime;
  }
  return h;
}

/// splitmix64 finalizer; decorrelates sequential FNV states.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 128-bit content key rendered as 32 hex chars.
inline std::string content_key(std::string_view data) {
  std::uint64_t a = fnv1a64(data);
  std::uint64_t b = fnv1a64(data, 0x84222325cbf29ce4ULL);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx",
                static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(mix64(b)));
  return std::string(buf, 32);
}

// ---------------------------------------------------------------------------
// Small string helpers.

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

/// Whitespace-delimited token count on the raw text.
inline int word_count(std::string_view text) {
  int count = 0;
  bool in_word = false;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

inline std::string truncate_utf8(std::string_view s, size_t max_bytes) {
  if (s.size() <= max_bytes) return std::string(s);
  size_t end = max_bytes;
  // Do not cut a multi-byte sequence in half.
  while (end > 0 && (static_cast<unsigned char>(s[end]) & 0xC0) == 0x80) --end;
  return std::string(s.substr(0, end)) + "...";
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

}  // namespace ramsd
