// OpenAI-compatible embedding adapter (POST {base}/embeddings). Batch requests
// send all inputs in one call and reassemble by the response's index field.
// A vector of the wrong width is a fatal dimension error, never retried.
#pragma once

#include <chrono>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ramsd/core.hpp"
#include "ramsd/embedding.hpp"
#include "ramsd/http_support.hpp"

namespace ramsd {

class OpenAiEmbedder : public EmbeddingProvider {
 public:
  struct Options {
    std::string base_url = "http://localhost:8000/v1";
    std::string api_key;  // empty -> OPENAI_API_KEY
    std::string model = "text-embedding-3-large";
    int dimension = 3072;
    RetryPolicy retry;
    double timeout_s = 60.0;
  };

  explicit OpenAiEmbedder(Options opts) : opts_(std::move(opts)) {
    if (opts_.api_key.empty()) opts_.api_key = api_key_from_env("OPENAI_API_KEY");
  }

  std::string name() const override { return "openai-embed"; }
  std::string model_id() const override { return opts_.model; }
  int dimension() const override { return opts_.dimension; }

  Result<std::vector<float>> embed(const std::string& text) override {
    auto r = embed_batch({text});
    if (!r.ok()) return r.error();
    return std::move(r.value()[0]);
  }

  Result<std::vector<std::vector<float>>> embed_batch(
      const std::vector<std::string>& texts) override {
    if (texts.empty()) return std::vector<std::vector<float>>{};
    auto ep = parse_base_url(opts_.base_url);
    if (!ep.ok()) return ep.error();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (starts_with(opts_.base_url, "https://"))
      return make_error(Errc::config_error,
                        "https endpoint requires a TLS-enabled build: " + opts_.base_url);
#endif

    nlohmann::json payload = {{"model", opts_.model}, {"input", texts}};
    const std::string body = payload.dump();
    const std::string path = ep.value().base_path + "/embeddings";

    return with_retries<std::vector<std::vector<float>>>(
        opts_.retry, [&]() -> HttpAttempt<std::vector<std::vector<float>>> {
          httplib::Client client(ep.value().host_url);
          client.set_connection_timeout(std::chrono::milliseconds(
              static_cast<long long>(opts_.timeout_s * 1000)));
          client.set_read_timeout(std::chrono::milliseconds(
              static_cast<long long>(opts_.timeout_s * 1000)));
          httplib::Headers headers;
          if (!opts_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + opts_.api_key);

          auto res = client.Post(path, headers, body, "application/json");
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
          if (doc.is_discarded() || !doc.contains("data") || !doc["data"].is_array() ||
              doc["data"].size() != texts.size())
            return HttpFailure{Errc::malformed_payload,
                               "unexpected embedding payload: " + truncate_utf8(res->body, 200),
                               false, -1.0};

          std::vector<std::vector<float>> out(texts.size());
          for (const auto& item : doc["data"]) {
            if (!item.contains("index") || !item.contains("embedding"))
              return HttpFailure{Errc::malformed_payload, "embedding item missing fields", false,
                                 -1.0};
            size_t idx = item["index"].get<size_t>();
            if (idx >= out.size())
              return HttpFailure{Errc::malformed_payload, "embedding index out of range", false,
                                 -1.0};
            auto vec = item["embedding"].get<std::vector<float>>();
            if (static_cast<int>(vec.size()) != opts_.dimension)
              return HttpFailure{Errc::dimension_mismatch,
                                 "provider returned " + std::to_string(vec.size()) +
                                     " dims, expected " + std::to_string(opts_.dimension),
                                 false, -1.0};
            out[idx] = std::move(vec);
          }
          for (size_t i = 0; i < out.size(); ++i)
            if (out[i].empty())
              return HttpFailure{Errc::malformed_payload,
                                 "embedding missing for index " + std::to_string(i), false, -1.0};
          return out;
        });
  }

 private:
  Options opts_;
};

}  // namespace ramsd
