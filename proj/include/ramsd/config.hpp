// Application configuration: defaults, a flat TOML-like config file, RAMSD_*
// environment overrides, and validation. Precedence (lowest to highest):
// built-in default < config file < environment < CLI flag; the CLI applies its
// flags after calling apply_env. Secrets never live here — api_key_env names
// the environment variable that holds the key.
#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "ramsd/core.hpp"
#include "ramsd/pipeline.hpp"

namespace ramsd {

enum class BackendKind { remote, mock };

inline const char* backend_name(BackendKind b) {
  return b == BackendKind::remote ? "remote" : "mock";
}

inline Result<BackendKind> parse_backend(const std::string& s) {
  if (s == "remote") return BackendKind::remote;
  if (s == "mock") return BackendKind::mock;
  return make_error(Errc::config_error, "backend must be \"remote\" or \"mock\", got \"" + s + "\"");
}

struct AppConfig {
  BackendKind backend = BackendKind::mock;
  std::string base_url;                        // required for remote
  std::string api_key_env = "OPENAI_API_KEY";  // env var NAME holding the key
  std::string chat_model = "gpt-4o";
  std::string embed_model = "text-embedding-3-large";
  int embed_dimension = 3072;
  double temperature = 0.1;
  int max_tokens = 512;
  PipelineConfig pipeline;
  std::string cache_dir = ".ramsd-cache";  // embeddings.bin + rationales.jsonl
  std::uint64_t seed = 0;
};

namespace detail {

inline Result<long long> parse_integer(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    return make_error(Errc::config_error, key + ": expected an integer, got \"" + value + "\"");
  return v;
}

inline Result<double> parse_real(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    return make_error(Errc::config_error, key + ": expected a number, got \"" + value + "\"");
  return v;
}

// One setter shared by the file parser and the environment reader so both
// spellings of a key behave identically. `section` is "" for top level.
inline Status set_config_key(AppConfig& config, const std::string& section,
                             const std::string& key, const std::string& value,
                             const std::string& where) {
  auto fail = [&](const std::string& msg) {
    return make_error(Errc::config_error, where + ": " + msg);
  };
  if (section.empty()) {
    if (key == "backend") {
      auto b = parse_backend(value);
      if (!b.ok()) return fail(b.error().message);
      config.backend = b.value();
    } else if (key == "base_url") {
      config.base_url = value;
    } else if (key == "api_key_env") {
      config.api_key_env = value;
    } else if (key == "api_key") {
      return fail("secrets are read from environment variables; set the variable named by "
                  "api_key_env instead of putting keys in config");
    } else if (key == "chat_model") {
      config.chat_model = value;
    } else if (key == "embed_model") {
      config.embed_model = value;
    } else if (key == "embed_dimension") {
      auto v = parse_integer(key, value);
      if (!v.ok()) return fail(v.error().message);
      config.embed_dimension = static_cast<int>(v.value());
    } else if (key == "temperature") {
      auto v = parse_real(key, value);
      if (!v.ok()) return fail(v.error().message);
      config.temperature = v.value();
    } else if (key == "max_tokens") {
      auto v = parse_integer(key, value);
      if (!v.ok()) return fail(v.error().message);
      config.max_tokens = static_cast<int>(v.value());
    } else if (key == "cache_dir") {
      config.cache_dir = value;
    } else if (key == "seed") {
      auto v = parse_integer(key, value);
      if (!v.ok()) return fail(v.error().message);
      config.seed = static_cast<std::uint64_t>(v.value());
    } else {
      return fail("unknown key \"" + key + "\"");
    }
    return {};
  }
  if (section == "pipeline") {
    auto integer = [&](int& slot) -> Status {
      auto v = parse_integer(key, value);
      if (!v.ok()) return fail(v.error().message);
      slot = static_cast<int>(v.value());
      return {};
    };
    if (key == "k") return integer(config.pipeline.k);
    if (key == "max_in_flight_agents") return integer(config.pipeline.max_in_flight_agents);
    if (key == "si_word_limit") return integer(config.pipeline.si_word_limit);
    if (key == "override_word_limit") return integer(config.pipeline.override_word_limit);
    if (key == "entity_trigger") return integer(config.pipeline.entity_trigger);
    if (key == "ambiguity_confidence_floor") {
      auto v = parse_real(key, value);
      if (!v.ok()) return fail(v.error().message);
      config.pipeline.ambiguity_confidence_floor = v.value();
      return {};
    }
    return fail("unknown key \"" + key + "\" in [pipeline]");
  }
  return fail("unknown section [" + section + "]");
}

// Strips an unquoted value's trailing comment, or unwraps a "quoted" value
// (which may contain # and surrounding spaces verbatim).
inline Result<std::string> config_value(const std::string& raw, const std::string& where) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '"') {
    auto close = v.find('"', 1);
    if (close == std::string::npos)
      return make_error(Errc::config_error, where + ": unterminated quoted value");
    std::string rest = trim(v.substr(close + 1));
    if (!rest.empty() && rest.front() != '#')
      return make_error(Errc::config_error, where + ": trailing characters after quoted value");
    return v.substr(1, close - 1);
  }
  auto hash = v.find('#');
  if (hash != std::string::npos) v = trim(v.substr(0, hash));
  return v;
}

}  // namespace detail

// Applies `key = value` lines (with optional [pipeline] section, # comments,
// blank lines) on top of whatever `config` already holds.
inline Status apply_config_file(AppConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) return make_error(Errc::config_error, "cannot open config file " + path);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string where = path + ":" + std::to_string(line_no);
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        return make_error(Errc::config_error, where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      return make_error(Errc::config_error, where + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) return make_error(Errc::config_error, where + ": empty key");
    auto value = detail::config_value(t.substr(eq + 1), where);
    if (!value.ok()) return value.error();
    if (auto st = detail::set_config_key(config, section, key, value.value(), where); !st.ok())
      return st;
  }
  return {};
}

// RAMSD_* overrides, applied between the config file and CLI flags. RAMSD_K
// addresses pipeline.k; the rest map to top-level fields of the same name.
inline Status apply_env(AppConfig& config) {
  static const std::pair<const char*, const char*> kTopLevel[] = {
      {"RAMSD_BACKEND", "backend"},
      {"RAMSD_BASE_URL", "base_url"},
      {"RAMSD_API_KEY_ENV", "api_key_env"},
      {"RAMSD_CHAT_MODEL", "chat_model"},
      {"RAMSD_EMBED_MODEL", "embed_model"},
      {"RAMSD_EMBED_DIMENSION", "embed_dimension"},
      {"RAMSD_TEMPERATURE", "temperature"},
      {"RAMSD_MAX_TOKENS", "max_tokens"},
      {"RAMSD_CACHE_DIR", "cache_dir"},
      {"RAMSD_SEED", "seed"},
  };
  for (auto [env_name, key] : kTopLevel) {
    const char* v = std::getenv(env_name);
    if (!v) continue;
    if (auto st = detail::set_config_key(config, "", key, v, std::string("env ") + env_name);
        !st.ok())
      return st;
  }
  if (const char* v = std::getenv("RAMSD_K")) {
    if (auto st = detail::set_config_key(config, "pipeline", "k", v, "env RAMSD_K"); !st.ok())
      return st;
  }
  return {};
}

// Structural checks plus the runtime invariant: a remote backend needs a base
// URL and a resolvable (set, non-empty) api_key_env.
inline Status validate_config(const AppConfig& config) {
  if (config.embed_dimension < 1)
    return make_error(Errc::config_error, "embed_dimension must be >= 1");
  if (config.max_tokens < 1) return make_error(Errc::config_error, "max_tokens must be >= 1");
  if (config.temperature < 0.0)
    return make_error(Errc::config_error, "temperature must be >= 0");
  if (auto st = config.pipeline.validate(); !st.ok()) return st;
  if (config.backend == BackendKind::remote) {
    if (config.base_url.empty())
      return make_error(Errc::config_error, "remote backend requires base_url");
    if (config.api_key_env.empty())
      return make_error(Errc::config_error, "remote backend requires api_key_env");
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key)
      return make_error(Errc::config_error, "remote backend requires the environment variable " +
                                                config.api_key_env + " to be set and non-empty");
  }
  return {};
}

// Echo for reports. The API key itself is never part of AppConfig, so this is
// safe to serialize anywhere.
inline nlohmann::json config_to_json(const AppConfig& config) {
  return nlohmann::json{
      {"backend", backend_name(config.backend)},
      {"base_url", config.base_url},
      {"api_key_env", config.api_key_env},
      {"chat_model", config.chat_model},
      {"embed_model", config.embed_model},
      {"embed_dimension", config.embed_dimension},
      {"temperature", config.temperature},
      {"max_tokens", config.max_tokens},
      {"cache_dir", config.cache_dir},
      {"seed", config.seed},
      {"pipeline",
       {{"k", config.pipeline.k},
        {"max_in_flight_agents", config.pipeline.max_in_flight_agents},
        {"si_word_limit", config.pipeline.si_word_limit},
        {"override_word_limit", config.pipeline.override_word_limit},
        {"entity_trigger", config.pipeline.entity_trigger},
        {"ambiguity_confidence_floor", config.pipeline.ambiguity_confidence_floor}}},
  };
}

}  // namespace ramsd
