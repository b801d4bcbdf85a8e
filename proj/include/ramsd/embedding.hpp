// Unit-normalized text embeddings: pluggable providers plus a persistent,
// bit-exact cache so corpus embedding is paid once.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ramsd/core.hpp"

namespace ramsd {

inline void normalize_l2(std::vector<double>& acc) {
  double norm_sq = 0.0;
  for (double v : acc) norm_sq += v * v;
  if (norm_sq < 1e-24) {
    // Degenerate accumulation; pin to a fixed axis so the result stays a unit vector.
    acc.assign(acc.size(), 0.0);
    acc[0] = 1.0;
    return;
  }
  double inv = 1.0 / std::sqrt(norm_sq);
  for (double& v : acc) v *= inv;
}

/// Cosine of two unit vectors: dot product clamped against rounding.
inline Result<double> cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size())
    return make_error(Errc::invalid_input, "cosine: vector length mismatch");
  if (a.empty()) return make_error(Errc::invalid_input, "cosine: empty vectors");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  if (dot > 1.0) dot = 1.0;
  if (dot < -1.0) dot = -1.0;
  return dot;
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  virtual std::string model_id() const = 0;
  virtual int dimension() const = 0;

  /// L2-normalized vector of length dimension(). Deterministic per (provider, text).
  virtual Result<std::vector<float>> embed(const std::string& text) = 0;

  /// Elementwise embed, order preserved; stops at the first provider error,
  /// reporting the failing index.
  virtual Result<std::vector<std::vector<float>>> embed_batch(
      const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
      auto r = embed(texts[i]);
      if (!r.ok())
        return make_error(r.error().code,
                          "embed_batch failed at index " + std::to_string(i) + " (" +
                              std::to_string(out.size()) + " embedded): " + r.error().message);
      out.push_back(std::move(r).take());
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Deterministic local embedder: hashes byte n-grams (n = 1..3) of the text
// into a fixed-width vector, then L2-normalizes. Offline stand-in for the
// remote model; seeded so fixtures are reproducible.

class HashingEmbedder : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(int dimension = 64, std::uint64_t seed = 0)
      : dimension_(dimension), seed_(seed) {}

  std::string name() const override { return "hashing"; }
  std::string model_id() const override {
    return "feature-hash-" + std::to_string(dimension_) + "-s" + std::to_string(seed_);
  }
  int dimension() const override { return dimension_; }

  Result<std::vector<float>> embed(const std::string& text) override {
    if (trim(text).empty())
      return make_error(Errc::invalid_input, "embed: text is empty");
    std::vector<double> acc(static_cast<size_t>(dimension_), 0.0);
    for (int n = 1; n <= 3; ++n) {
      if (text.size() < static_cast<size_t>(n)) break;
      std::uint64_t gram_seed = mix64(seed_ + static_cast<std::uint64_t>(n));
      for (size_t i = 0; i + n <= text.size(); ++i) {
        std::uint64_t h = fnv1a64(std::string_view(text).substr(i, n), gram_seed);
        size_t bucket = h % static_cast<std::uint64_t>(dimension_);
        double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
        acc[bucket] += sign;
      }
    }
    normalize_l2(acc);
    std::vector<float> out(acc.begin(), acc.end());
    return out;
  }

 private:
  int dimension_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Persistent cache. Append-only binary file; each record is
//   [32-char hex key][u32 LE dimension][dimension x f32 LE]
// so stored vectors reload bitwise-equal on every platform.

class EmbeddingCache {
 public:
  EmbeddingCache() = default;

  Status open(const std::filesystem::path& path) {
    std::lock_guard<std::mutex> lock(mutex_);
    path_ = path;
    entries_.clear();
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) return {};  // no file yet: empty cache
    while (true) {
      char key[32];
      if (!in.read(key, 32)) break;
      unsigned char dim_bytes[4];
      if (!in.read(reinterpret_cast<char*>(dim_bytes), 4)) {
        log_warn("embedding cache: truncated record header, ignoring tail");
        break;
      }
      std::uint32_t dim = static_cast<std::uint32_t>(dim_bytes[0]) |
                          (static_cast<std::uint32_t>(dim_bytes[1]) << 8) |
                          (static_cast<std::uint32_t>(dim_bytes[2]) << 16) |
                          (static_cast<std::uint32_t>(dim_bytes[3]) << 24);
      if (dim == 0 || dim > 1u << 20) {
        log_warn("embedding cache: implausible dimension, ignoring tail");
        break;
      }
      std::vector<char> raw(static_cast<size_t>(dim) * 4);
      if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
        log_warn("embedding cache: truncated vector, ignoring tail");
        break;
      }
      std::vector<float> vec(dim);
      for (std::uint32_t i = 0; i < dim; ++i) {
        std::uint32_t bits = 0;
        for (int b = 3; b >= 0; --b)
          bits = (bits << 8) | static_cast<unsigned char>(raw[i * 4 + b]);
        vec[i] = std::bit_cast<float>(bits);
      }
      entries_[std::string(key, 32)] = std::move(vec);
    }
    return {};
  }

  std::optional<std::vector<float>> get(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  Status put(const std::string& key, const std::vector<float>& vec) {
    if (key.size() != 32) return make_error(Errc::invalid_input, "cache key must be 32 hex chars");
    std::lock_guard<std::mutex> lock(mutex_);
    entries_[key] = vec;
    if (path_.empty()) return {};  // in-memory mode
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out.is_open())
      return make_error(Errc::io_error, "cannot append to cache file " + path_.string());
    out.write(key.data(), 32);
    std::uint32_t dim = static_cast<std::uint32_t>(vec.size());
    unsigned char dim_bytes[4] = {
        static_cast<unsigned char>(dim & 0xFF),
        static_cast<unsigned char>((dim >> 8) & 0xFF),
        static_cast<unsigned char>((dim >> 16) & 0xFF),
        static_cast<unsigned char>((dim >> 24) & 0xFF),
    };
    out.write(reinterpret_cast<const char*>(dim_bytes), 4);
    for (float f : vec) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
      unsigned char b[4] = {
          static_cast<unsigned char>(bits & 0xFF),
          static_cast<unsigned char>((bits >> 8) & 0xFF),
          static_cast<unsigned char>((bits >> 16) & 0xFF),
          static_cast<unsigned char>((bits >> 24) & 0xFF),
      };
      out.write(reinterpret_cast<const char*>(b), 4);
    }
    out.flush();
    if (!out.good()) return make_error(Errc::io_error, "cache write failed");
    return {};
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::filesystem::path path_;
  std::unordered_map<std::string, std::vector<float>> entries_;
};

// ---------------------------------------------------------------------------
// Cache-backed provider wrapper. Keyed on (provider name, model id, text).

class CachingProvider : public EmbeddingProvider {
 public:
  CachingProvider(std::shared_ptr<EmbeddingProvider> inner, std::shared_ptr<EmbeddingCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  std::string name() const override { return inner_->name(); }
  std::string model_id() const override { return inner_->model_id(); }
  int dimension() const override { return inner_->dimension(); }

  std::string key_for(const std::string& text) const {
    return content_key(inner_->name() + "\x1f" + inner_->model_id() + "\x1f" + text);
  }

  Result<std::vector<float>> embed(const std::string& text) override {
    if (trim(text).empty())
      return make_error(Errc::invalid_input, "embed: text is empty");
    const std::string key = key_for(text);
    if (auto hit = cache_->get(key)) {
      hits_.fetch_add(1, std::memory_order_relaxed);
      return *hit;
    }
    auto r = inner_->embed(text);
    if (!r.ok()) return r.error();
    if (static_cast<int>(r.value().size()) != inner_->dimension())
      return make_error(Errc::dimension_mismatch,
                        "provider returned " + std::to_string(r.value().size()) +
                            " dims, expected " + std::to_string(inner_->dimension()));
    misses_.fetch_add(1, std::memory_order_relaxed);
    if (auto st = cache_->put(key, r.value()); !st.ok())
      log_warn("embedding cache store failed: " + st.error().message);
    return r;
  }

  std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
  /// Inner-provider invocations, i.e. cache misses.
  std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace ramsd
