// Label-partitioned exact top-k cosine retrieval over the exemplar knowledge
// base, plus corpus/index artifact I/O. Linear scan on purpose: corpora top
// out around a few thousand rows and exactness keeps the ranking testable
// against a brute-force oracle.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ramsd/core.hpp"
#include "ramsd/domain.hpp"
#include "ramsd/embedding.hpp"

namespace ramsd {

// Re-establishes unit norm in double precision; idempotent for vectors that
// are already normalized.
inline void renormalize(std::vector<float>& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  if (sq <= 0.0) return;
  double inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(x * inv);
}

struct DualIndex {
  std::vector<Exemplar> sarcastic;      // label 1, input order preserved
  std::vector<Exemplar> non_sarcastic;  // label 0, input order preserved
  int dimension = 0;

  size_t total() const { return sarcastic.size() + non_sarcastic.size(); }
};

// Partitions exemplars by label. Embeddings must agree on dimension and be
// unit vectors (tolerance 1e-3) — retrieval treats dot product as cosine.
inline Result<DualIndex> build_index(std::vector<Exemplar> exemplars) {
  DualIndex index;
  for (auto& ex : exemplars) {
    if (!is_valid_label(ex.label))
      return make_error(Errc::invalid_input,
                        "exemplar " + ex.id + " has non-binary label " + std::to_string(ex.label));
    if (ex.embedding.empty())
      return make_error(Errc::invalid_input, "exemplar " + ex.id + " has no embedding");
    if (index.dimension == 0) index.dimension = static_cast<int>(ex.embedding.size());
    if (static_cast<int>(ex.embedding.size()) != index.dimension)
      return make_error(Errc::invalid_input,
                        "exemplar " + ex.id + " has " + std::to_string(ex.embedding.size()) +
                            " dims, expected " + std::to_string(index.dimension));
    double sq = 0.0;
    for (float x : ex.embedding) sq += static_cast<double>(x) * x;
    if (std::abs(sq - 1.0) > 2e-3)
      return make_error(Errc::invalid_input,
                        "exemplar " + ex.id + " embedding is not unit-normalized");
    (ex.label == 1 ? index.sarcastic : index.non_sarcastic).push_back(std::move(ex));
  }
  return index;
}

namespace detail {

// Scored reference into one partition; ordering is similarity descending with
// lower exemplar id breaking ties, which keeps rankings deterministic.
struct Scored {
  double similarity;
  size_t idx;
};

inline std::vector<AugmentedExemplar> top_k(const std::vector<Exemplar>& partition,
                                            const std::vector<float>& query, int k) {
  std::vector<Scored> scored;
  scored.reserve(partition.size());
  for (size_t i = 0; i < partition.size(); ++i) {
    auto sim = cosine(query, partition[i].embedding);
    scored.push_back({sim.ok() ? sim.value() : -2.0, i});
  }
  auto better = [&](const Scored& a, const Scored& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return partition[a.idx].id < partition[b.idx].id;
  };
  size_t take = std::min<size_t>(static_cast<size_t>(k), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);

  std::vector<AugmentedExemplar> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i)
    out.push_back({partition[scored[i].idx], "", scored[i].similarity});
  return out;
}

}  // namespace detail

// Top-k per partition, sorted descending. One empty side degrades (the other
// side still returns and RetrievedContext::degraded() reports it); an empty
// index is an error.
inline Result<RetrievedContext> retrieve(const DualIndex& index, const std::vector<float>& query,
                                         int k) {
  if (k < 1) return make_error(Errc::invalid_input, "k must be >= 1, got " + std::to_string(k));
  if (index.total() == 0) return make_error(Errc::not_found, "index is empty");
  if (static_cast<int>(query.size()) != index.dimension)
    return make_error(Errc::invalid_input,
                      "query has " + std::to_string(query.size()) + " dims, index has " +
                          std::to_string(index.dimension));
  RetrievedContext ctx;
  ctx.k = k;
  ctx.sarcastic = detail::top_k(index.sarcastic, query, k);
  ctx.non_sarcastic = detail::top_k(index.non_sarcastic, query, k);
  if (ctx.degraded())
    log_warn("degraded retrieval: one label partition is empty");
  return ctx;
}

// ---------------------------------------------------------------------------
// Corpus I/O: JSONL, one {"id"?, "text", "label": 0|1, "context"?} per line.

struct CorpusRow {
  std::string id;  // derived "row-NNNNNN" when the file does not provide one
  std::string text;
  int label = 0;
  std::optional<std::string> context;
};

inline Result<std::vector<CorpusRow>> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) return make_error(Errc::io_error, "cannot open corpus " + path);
  std::vector<CorpusRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
      return make_error(Errc::parse_error,
                        path + ":" + std::to_string(line_no) + ": not a JSON object");
    if (!doc.contains("text") || !doc["text"].is_string() || doc["text"].get<std::string>().empty())
      return make_error(Errc::invalid_input,
                        path + ":" + std::to_string(line_no) + ": missing or empty \"text\"");
    if (!doc.contains("label") || !doc["label"].is_number_integer() ||
        !is_valid_label(doc["label"].get<int>()))
      return make_error(Errc::invalid_input,
                        path + ":" + std::to_string(line_no) + ": \"label\" must be 0 or 1");
    CorpusRow row;
    row.text = doc["text"].get<std::string>();
    row.label = doc["label"].get<int>();
    if (doc.contains("id") && doc["id"].is_string()) row.id = doc["id"].get<std::string>();
    else {
      char buf[16];
      std::snprintf(buf, sizeof buf, "row-%06d", static_cast<int>(rows.size()));
      row.id = buf;
    }
    if (doc.contains("context") && doc["context"].is_string())
      row.context = doc["context"].get<std::string>();
    rows.push_back(std::move(row));
  }
  return rows;
}

// Embeds every row (cache-aware when the provider wraps one) and renormalizes,
// so downstream dot products are true cosines.
inline Result<std::vector<Exemplar>> ingest_corpus(const std::vector<CorpusRow>& rows,
                                                   EmbeddingProvider& provider) {
  std::vector<std::string> texts;
  texts.reserve(rows.size());
  for (const auto& row : rows) {
    if (trim(row.text).empty())
      return make_error(Errc::invalid_input, "row " + row.id + " has empty text");
    texts.push_back(row.text);
  }
  if (texts.empty()) return std::vector<Exemplar>{};
  auto vectors = provider.embed_batch(texts);
  if (!vectors.ok()) return vectors.error();
  std::vector<Exemplar> out;
  out.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    Exemplar ex;
    ex.id = rows[i].id;
    ex.text = rows[i].text;
    ex.label = rows[i].label;
    ex.embedding = std::move(vectors.value()[i]);
    renormalize(ex.embedding);
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index artifact: self-contained JSONL. First line is a header identifying the
// embedding provider; each following line is one exemplar with its vector.

struct IndexArtifact {
  std::string provider;
  std::string model_id;
  int dimension = 0;
  std::vector<Exemplar> exemplars;
};

inline Status save_index(const std::string& path, const IndexArtifact& artifact) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return make_error(Errc::io_error, "cannot write index " + path);
  nlohmann::json header = {{"format", "ramsd-index"},
                           {"version", 1},
                           {"provider", artifact.provider},
                           {"model", artifact.model_id},
                           {"dimension", artifact.dimension},
                           {"count", artifact.exemplars.size()}};
  out << header.dump() << "\n";
  for (const auto& ex : artifact.exemplars) {
    nlohmann::json record = {
        {"id", ex.id}, {"text", ex.text}, {"label", ex.label}, {"embedding", ex.embedding}};
    out << record.dump() << "\n";
  }
  out.flush();
  if (!out) return make_error(Errc::io_error, "short write to index " + path);
  return {};
}

inline Result<IndexArtifact> load_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) return make_error(Errc::io_error, "cannot open index " + path);
  std::string line;
  if (!std::getline(in, line))
    return make_error(Errc::parse_error, path + ": empty index file");
  auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "ramsd-index")
    return make_error(Errc::parse_error, path + ": not a ramsd-index file");
  IndexArtifact artifact;
  artifact.provider = header.value("provider", "");
  artifact.model_id = header.value("model", "");
  artifact.dimension = header.value("dimension", 0);
  size_t expected = header.value("count", size_t{0});
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
      return make_error(Errc::parse_error,
                        path + ":" + std::to_string(line_no) + ": bad index record");
    Exemplar ex;
    ex.id = doc.value("id", "");
    ex.text = doc.value("text", "");
    ex.label = doc.value("label", -1);
    if (!doc.contains("embedding") || !doc["embedding"].is_array())
      return make_error(Errc::parse_error,
                        path + ":" + std::to_string(line_no) + ": record has no embedding");
    ex.embedding = doc["embedding"].get<std::vector<float>>();
    if (!is_valid_label(ex.label) ||
        static_cast<int>(ex.embedding.size()) != artifact.dimension)
      return make_error(Errc::parse_error,
                        path + ":" + std::to_string(line_no) + ": record disagrees with header");
    artifact.exemplars.push_back(std::move(ex));
  }
  if (artifact.exemplars.size() != expected)
    return make_error(Errc::parse_error,
                      path + ": header count " + std::to_string(expected) + " but " +
                          std::to_string(artifact.exemplars.size()) + " records");
  return artifact;
}

}  // namespace ramsd
