#include "ramsd/retrieval.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

using namespace ramsd;

namespace {

struct OracleHit {
  std::string id;
  double sim;
};

// Brute-force per-partition top-k: full sort on clamped double-precision dot
// products, ties toward the lower exemplar id. Written independently of the
// production partial_sort path.
std::vector<OracleHit> oracle_top_k(const std::vector<Exemplar>& partition,
                                    const std::vector<float>& query, int k) {
  std::vector<OracleHit> rows;
  for (const auto& ex : partition) {
    double dot = 0;
    for (size_t i = 0; i < query.size(); ++i)
      dot += static_cast<double>(ex.embedding[i]) * query[i];
    dot = std::clamp(dot, -1.0, 1.0);
    rows.push_back({ex.id, dot});
  }
  std::sort(rows.begin(), rows.end(), [](const OracleHit& a, const OracleHit& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.id < b.id;
  });
  if (rows.size() > static_cast<size_t>(k)) rows.resize(static_cast<size_t>(k));
  return rows;
}

std::vector<Exemplar> random_corpus(std::mt19937& rng, int count, int dim) {
  HashingEmbedder embedder(dim, 17);
  std::vector<Exemplar> out;
  std::uniform_int_distribution<int> label(0, 1);
  std::uniform_int_distribution<int> wordc(1, 8);
  std::uniform_int_distribution<int> letter(0, 25);
  for (int i = 0; i < count; ++i) {
    Exemplar ex;
    char buf[16];
    std::snprintf(buf, sizeof buf, "ex-%04d", i);
    ex.id = buf;
    int n = wordc(rng);
    for (int w = 0; w < n; ++w) {
      if (w) ex.text += ' ';
      ex.text += std::string(1 + letter(rng) % 4, static_cast<char>('a' + letter(rng)));
    }
    ex.label = label(rng);
    ex.embedding = embedder.embed(ex.text).take();
    renormalize(ex.embedding);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<float> random_query(std::mt19937& rng, int dim) {
  HashingEmbedder embedder(dim, 29);
  auto v = embedder.embed("query " + std::to_string(rng())).take();
  renormalize(v);
  return v;
}

Exemplar make_exemplar(std::string id, std::string text, int label, std::vector<float> v) {
  Exemplar ex;
  ex.id = std::move(id);
  ex.text = std::move(text);
  ex.label = label;
  ex.embedding = std::move(v);
  return ex;
}

std::filesystem::path temp_path(const char* stem) {
  return std::filesystem::temp_directory_path() /
         (std::string(stem) + "-" + std::to_string(::getpid()));
}

}  // namespace

TEST(Renormalize, UnitNormAndZeroSafe) {
  std::vector<float> v{3.0f, 4.0f};
  renormalize(v);
  EXPECT_NEAR(v[0], 0.6f, 1e-6);
  EXPECT_NEAR(v[1], 0.8f, 1e-6);
  std::vector<float> z{0.0f, 0.0f};
  renormalize(z);  // must not divide by zero
  EXPECT_EQ(z, (std::vector<float>{0.0f, 0.0f}));
}

TEST(BuildIndex, PartitionsByLabel) {
  std::mt19937 rng(1);
  auto corpus = random_corpus(rng, 40, 16);
  size_t sarc = 0;
  for (const auto& ex : corpus) sarc += ex.label == 1;
  auto index = build_index(corpus);
  ASSERT_TRUE(index.ok());
  EXPECT_EQ(index.value().sarcastic.size(), sarc);
  EXPECT_EQ(index.value().non_sarcastic.size(), corpus.size() - sarc);
  EXPECT_EQ(index.value().total(), corpus.size());
  EXPECT_EQ(index.value().dimension, 16);
}

TEST(BuildIndex, RejectsBadLabelDimensionAndNorm) {
  HashingEmbedder embedder(8, 0);
  auto vec = embedder.embed("fine").take();
  renormalize(vec);
  auto good = make_exemplar("a", "fine", 0, vec);

  auto bad_label = make_exemplar("b", "fine", 2, vec);
  EXPECT_EQ(build_index({good, bad_label}).error().code, Errc::invalid_input);

  auto short_vec = vec;
  short_vec.resize(4);
  auto bad_dim = make_exemplar("c", "fine", 0, short_vec);
  EXPECT_EQ(build_index({good, bad_dim}).error().code, Errc::invalid_input);

  auto long_vec = vec;
  for (auto& x : long_vec) x *= 2.0f;
  auto bad_norm = make_exemplar("d", "fine", 0, long_vec);
  auto r = build_index({good, bad_norm});
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.error().message.find("unit-normalized"), std::string::npos);
}

TEST(Retrieve, MatchesBruteForceOracleOnRandomCorpora) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    auto corpus = random_corpus(rng, 20 + static_cast<int>(rng() % 180), 32);
    auto index = build_index(corpus);
    ASSERT_TRUE(index.ok());
    auto query = random_query(rng, 32);
    for (int k : {1, 3, 5, 10}) {
      auto got = retrieve(index.value(), query, k);
      ASSERT_TRUE(got.ok());
      auto want_s = oracle_top_k(index.value().sarcastic, query, k);
      auto want_n = oracle_top_k(index.value().non_sarcastic, query, k);
      ASSERT_EQ(got.value().sarcastic.size(), want_s.size());
      ASSERT_EQ(got.value().non_sarcastic.size(), want_n.size());
      for (size_t i = 0; i < want_s.size(); ++i) {
        EXPECT_EQ(got.value().sarcastic[i].exemplar.id, want_s[i].id);
        EXPECT_NEAR(got.value().sarcastic[i].similarity, want_s[i].sim, 1e-12);
      }
      for (size_t i = 0; i < want_n.size(); ++i)
        EXPECT_EQ(got.value().non_sarcastic[i].exemplar.id, want_n[i].id);
    }
  }
}

TEST(Retrieve, TieBreaksOnLowerId) {
  // Two sarcastic exemplars share one embedding; the lower id must win at k=1
  // regardless of insertion order.
  std::vector<float> v{1.0f, 0.0f};
  auto a = make_exemplar("aa", "same", 1, v);
  auto b = make_exemplar("ab", "same", 1, v);
  auto filler = make_exemplar("zz", "other", 0, {0.0f, 1.0f});
  auto index = build_index({b, a, filler});
  ASSERT_TRUE(index.ok());
  auto got = retrieve(index.value(), v, 1);
  ASSERT_TRUE(got.ok());
  ASSERT_EQ(got.value().sarcastic.size(), 1u);
  EXPECT_EQ(got.value().sarcastic[0].exemplar.id, "aa");
}

TEST(Retrieve, BalancePropertyAcrossRandomQueries) {
  std::mt19937 rng(7);
  auto corpus = random_corpus(rng, 120, 16);
  auto index = build_index(corpus);
  ASSERT_TRUE(index.ok());
  const int k = 3;
  ASSERT_GE(index.value().sarcastic.size(), static_cast<size_t>(k));
  ASSERT_GE(index.value().non_sarcastic.size(), static_cast<size_t>(k));
  for (int i = 0; i < 200; ++i) {
    auto got = retrieve(index.value(), random_query(rng, 16), k);
    ASSERT_TRUE(got.ok());
    EXPECT_EQ(got.value().sarcastic.size(), static_cast<size_t>(k));
    EXPECT_EQ(got.value().non_sarcastic.size(), static_cast<size_t>(k));
    EXPECT_FALSE(got.value().degraded());
    for (const auto& s : got.value().sarcastic) EXPECT_EQ(s.exemplar.label, 1);
    for (const auto& s : got.value().non_sarcastic) EXPECT_EQ(s.exemplar.label, 0);
  }
}

TEST(Retrieve, LargerKExtendsSmallerK) {
  // Deterministic ordering means retrieve(k) is a prefix of retrieve(k+2).
  std::mt19937 rng(9);
  auto corpus = random_corpus(rng, 60, 16);
  auto index = build_index(corpus);
  ASSERT_TRUE(index.ok());
  auto query = random_query(rng, 16);
  auto small = retrieve(index.value(), query, 2);
  auto large = retrieve(index.value(), query, 4);
  ASSERT_TRUE(small.ok() && large.ok());
  ASSERT_LE(small.value().sarcastic.size(), large.value().sarcastic.size());
  for (size_t i = 0; i < small.value().sarcastic.size(); ++i)
    EXPECT_EQ(small.value().sarcastic[i].exemplar.id,
              large.value().sarcastic[i].exemplar.id);
}

TEST(Retrieve, ShortPartitionReturnsWhatItHas) {
  // One exemplar per side, k=3: both sides return one row and the context is
  // not degraded (that flag means a side came back empty).
  auto s = make_exemplar("s", "sarcastic one", 1, {1.0f, 0.0f});
  auto n = make_exemplar("n", "plain one", 0, {0.0f, 1.0f});
  auto index = build_index({s, n});
  ASSERT_TRUE(index.ok());
  auto got = retrieve(index.value(), {1.0f, 0.0f}, 3);
  ASSERT_TRUE(got.ok());
  EXPECT_EQ(got.value().sarcastic.size(), 1u);
  EXPECT_EQ(got.value().non_sarcastic.size(), 1u);
  EXPECT_FALSE(got.value().degraded());
}

TEST(Retrieve, DegradedWhenOneSideEmpty) {
  auto s1 = make_exemplar("s1", "only sarcastic", 1, {1.0f, 0.0f});
  auto s2 = make_exemplar("s2", "more sarcastic", 1, {0.0f, 1.0f});
  auto index = build_index({s1, s2});
  ASSERT_TRUE(index.ok());
  auto got = retrieve(index.value(), {1.0f, 0.0f}, 2);
  ASSERT_TRUE(got.ok());
  EXPECT_EQ(got.value().sarcastic.size(), 2u);
  EXPECT_TRUE(got.value().non_sarcastic.empty());
  EXPECT_TRUE(got.value().degraded());
}

TEST(Retrieve, ErrorsOnBadInputs) {
  auto s = make_exemplar("s", "x", 1, {1.0f, 0.0f});
  auto index = build_index({s});
  ASSERT_TRUE(index.ok());
  EXPECT_EQ(retrieve(index.value(), {1.0f, 0.0f}, 0).error().code, Errc::invalid_input);
  EXPECT_EQ(retrieve(index.value(), {1.0f, 0.0f, 0.0f}, 1).error().code, Errc::invalid_input);
  DualIndex empty;
  empty.dimension = 2;
  EXPECT_EQ(retrieve(empty, {1.0f, 0.0f}, 1).error().code, Errc::not_found);
}

TEST(LoadCorpus, ParsesRowsAndDerivesIds) {
  auto path = temp_path("ramsd-corpus.jsonl");
  {
    std::ofstream out(path);
    out << R"({"text": "first", "label": 1})" << "\n";
    out << "\n";  // blank lines are fine
    out << R"({"id": "named", "text": "second", "label": 0, "context": "a thread"})" << "\n";
    out << R"({"text": "third", "label": 1})" << "\n";
  }
  auto rows = load_corpus(path.string());
  ASSERT_TRUE(rows.ok());
  ASSERT_EQ(rows.value().size(), 3u);
  EXPECT_EQ(rows.value()[0].id, "row-000000");
  EXPECT_EQ(rows.value()[1].id, "named");
  EXPECT_EQ(rows.value()[2].id, "row-000002");
  EXPECT_EQ(rows.value()[0].label, 1);
  EXPECT_FALSE(rows.value()[0].context.has_value());
  ASSERT_TRUE(rows.value()[1].context.has_value());
  EXPECT_EQ(*rows.value()[1].context, "a thread");
  std::filesystem::remove(path);
}

TEST(LoadCorpus, ReportsLineNumbersForBadRows) {
  auto path = temp_path("ramsd-badcorpus.jsonl");
  {
    std::ofstream out(path);
    out << R"({"text": "ok", "label": 0})" << "\n";
    out << R"({"text": "bad", "label": 2})" << "\n";
  }
  auto rows = load_corpus(path.string());
  ASSERT_FALSE(rows.ok());
  EXPECT_NE(rows.error().message.find(":2:"), std::string::npos);
  EXPECT_NE(rows.error().message.find("label"), std::string::npos);

  {
    std::ofstream out(path);
    out << R"({"label": 0})" << "\n";
  }
  auto missing = load_corpus(path.string());
  ASSERT_FALSE(missing.ok());
  EXPECT_NE(missing.error().message.find(":1:"), std::string::npos);
  EXPECT_NE(missing.error().message.find("text"), std::string::npos);

  {
    std::ofstream out(path);
    out << "not json at all\n";
  }
  auto garbage = load_corpus(path.string());
  ASSERT_FALSE(garbage.ok());
  EXPECT_EQ(garbage.error().code, Errc::parse_error);

  EXPECT_EQ(load_corpus("/nonexistent/corpus.jsonl").error().code, Errc::io_error);
  std::filesystem::remove(path);
}

TEST(IngestCorpus, EmbedsAndRenormalizes) {
  std::vector<CorpusRow> rows = {{"a", "first text", 1, std::nullopt},
                                 {"b", "second text", 0, std::nullopt}};
  HashingEmbedder embedder(16, 3);
  auto exemplars = ingest_corpus(rows, embedder);
  ASSERT_TRUE(exemplars.ok());
  ASSERT_EQ(exemplars.value().size(), 2u);
  for (const auto& ex : exemplars.value()) {
    double norm = 0;
    for (float v : ex.embedding) norm += static_cast<double>(v) * v;
    EXPECT_NEAR(norm, 1.0, 1e-6);
  }
  EXPECT_EQ(exemplars.value()[0].id, "a");
  EXPECT_EQ(exemplars.value()[0].label, 1);
}

TEST(IndexArtifact, RoundTripsBitwise) {
  std::mt19937 rng(3);
  auto corpus = random_corpus(rng, 10, 8);
  IndexArtifact artifact;
  artifact.provider = "hashing";
  artifact.model_id = "feature-hash-8-s17";
  artifact.dimension = 8;
  artifact.exemplars = corpus;

  auto path = temp_path("ramsd-index.jsonl");
  ASSERT_TRUE(save_index(path.string(), artifact).ok());
  auto loaded = load_index(path.string());
  ASSERT_TRUE(loaded.ok());
  EXPECT_EQ(loaded.value().provider, "hashing");
  EXPECT_EQ(loaded.value().model_id, artifact.model_id);
  EXPECT_EQ(loaded.value().dimension, 8);
  ASSERT_EQ(loaded.value().exemplars.size(), corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(loaded.value().exemplars[i].id, corpus[i].id);
    EXPECT_EQ(loaded.value().exemplars[i].label, corpus[i].label);
    EXPECT_EQ(loaded.value().exemplars[i].embedding, corpus[i].embedding);
  }
  std::filesystem::remove(path);
}

TEST(IndexArtifact, RejectsCorruptFiles) {
  auto path = temp_path("ramsd-corrupt.jsonl");
  {
    std::ofstream out(path);
    out << R"({"format": "something-else", "version": 1})" << "\n";
  }
  EXPECT_FALSE(load_index(path.string()).ok());

  {
    std::ofstream out(path);
    out << R"({"format": "ramsd-index", "version": 1, "provider": "h", "model": "m", "dimension": 2, "count": 2})"
        << "\n";
    out << R"({"id": "a", "text": "t", "label": 1, "embedding": [1.0, 0.0]})" << "\n";
  }
  auto short_file = load_index(path.string());
  ASSERT_FALSE(short_file.ok());  // header promised two records
  EXPECT_NE(short_file.error().message.find("count"), std::string::npos);

  {
    std::ofstream out(path);
    out << R"({"format": "ramsd-index", "version": 1, "provider": "h", "model": "m", "dimension": 2, "count": 1})"
        << "\n";
    out << R"({"id": "a", "text": "t", "label": 5, "embedding": [1.0, 0.0]})" << "\n";
  }
  EXPECT_FALSE(load_index(path.string()).ok());  // label outside {0, 1}

  {
    std::ofstream out(path);
    out << R"({"format": "ramsd-index", "version": 1, "provider": "h", "model": "m", "dimension": 3, "count": 1})"
        << "\n";
    out << R"({"id": "a", "text": "t", "label": 1, "embedding": [1.0, 0.0]})" << "\n";
  }
  EXPECT_FALSE(load_index(path.string()).ok());  // dimension disagrees

  EXPECT_EQ(load_index("/nonexistent/index.jsonl").error().code, Errc::io_error);
  std::filesystem::remove(path);
}
