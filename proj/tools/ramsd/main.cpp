// ramsd command-line tool: corpus ingestion, single-text classification,
// batch evaluation, retrieval-k sweeps, and stage-timing reports.
//
// Exit codes: 0 success; 1 usage; 2 configuration; 3 corpus/index/report-path
// problems; 4 backend or pipeline execution failures.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ramsd/config.hpp"
#include "ramsd/embedding_remote.hpp"
#include "ramsd/evaluation.hpp"
#include "ramsd/llm_mock.hpp"
#include "ramsd/llm_remote.hpp"

namespace {

using namespace ramsd;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitPipeline = 4;

int fail(int code, const Error& err) {
  log_error(err.to_string());
  return code;
}

// The single timestamp that ever appears in a report; reports isolate it to
// the generated_at field so snapshots can mask one line.
std::string iso_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Template assets resolve via RAMSD_PROMPTS_DIR, then the build-time default,
// then ./prompts.
std::string prompts_directory() {
  if (const char* env = std::getenv("RAMSD_PROMPTS_DIR"); env && *env) return env;
#ifdef RAMSD_DEFAULT_PROMPTS_DIR
  return RAMSD_DEFAULT_PROMPTS_DIR;
#else
  return "prompts";
#endif
}

// Everything a command needs that is derived from AppConfig: providers,
// backend, templates, caches.
struct Runtime {
  AppConfig config;
  std::shared_ptr<EmbeddingProvider> embedder;
  std::shared_ptr<CachingProvider> caching;  // set iff cache_dir is enabled
  std::shared_ptr<ChatBackend> backend;
  std::shared_ptr<PromptLibrary> prompts;
  std::shared_ptr<RationaleCache> rationale_cache;

  Pipeline::Deps deps() const {
    Pipeline::Deps d;
    d.embedder = embedder;
    d.backend = backend;
    d.prompts = prompts;
    d.rationale_cache = rationale_cache;
    d.temperature = config.temperature;
    d.max_tokens = config.max_tokens;
    return d;
  }
};

Result<Runtime> make_runtime(const AppConfig& config) {
  Runtime rt;
  rt.config = config;

  auto prompts = PromptLibrary::load(prompts_directory());
  if (!prompts.ok()) return prompts.error();
  rt.prompts = std::make_shared<PromptLibrary>(std::move(prompts).take());

  std::shared_ptr<EmbeddingProvider> base;
  if (config.backend == BackendKind::mock) {
    base = std::make_shared<HashingEmbedder>(config.embed_dimension, config.seed);
  } else {
    OpenAiEmbedder::Options opts;
    opts.base_url = config.base_url;
    opts.api_key = api_key_from_env(config.api_key_env.c_str());
    opts.model = config.embed_model;
    opts.dimension = config.embed_dimension;
    base = std::make_shared<OpenAiEmbedder>(std::move(opts));
  }

  if (!config.cache_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config.cache_dir, ec);
    if (ec)
      return make_error(Errc::io_error,
                        "cannot create cache_dir " + config.cache_dir + ": " + ec.message());
    auto cache = std::make_shared<EmbeddingCache>();
    if (auto st = cache->open(fs::path(config.cache_dir) / "embeddings.bin"); !st.ok())
      return st.error();
    rt.caching = std::make_shared<CachingProvider>(std::move(base), std::move(cache));
    rt.embedder = rt.caching;
    auto rationales =
        RationaleCache::open((fs::path(config.cache_dir) / "rationales.jsonl").string());
    if (!rationales.ok()) return rationales.error();
    rt.rationale_cache = std::make_shared<RationaleCache>(std::move(rationales).take());
  } else {
    rt.embedder = std::move(base);
    rt.rationale_cache = std::make_shared<RationaleCache>();
  }

  if (config.backend == BackendKind::mock) {
    MockBackend::Options opts;
    opts.seed = config.seed;
    rt.backend = std::make_shared<MockBackend>(opts);
  } else {
    OpenAiChatBackend::Options opts;
    opts.base_url = config.base_url;
    opts.api_key = api_key_from_env(config.api_key_env.c_str());
    opts.model = config.chat_model;
    rt.backend = std::make_shared<OpenAiChatBackend>(std::move(opts));
  }
  return rt;
}

// Loads the index artifact and checks it matches the configured embedder, so
// a stale index fails loudly instead of retrieving nonsense.
Result<std::shared_ptr<const DualIndex>> load_pipeline_index(const Runtime& rt,
                                                             const std::string& index_path) {
  if (!fs::exists(index_path))
    return make_error(Errc::not_found,
                      "index " + index_path + " does not exist; run `ramsd ingest` first");
  auto artifact = load_index(index_path);
  if (!artifact.ok()) return artifact.error();
  if (artifact.value().model_id != rt.embedder->model_id() ||
      artifact.value().dimension != rt.embedder->dimension())
    return make_error(
        Errc::config_error,
        "index " + index_path + " was built with " + artifact.value().model_id + " (dim " +
            std::to_string(artifact.value().dimension) + ") but the current config selects " +
            rt.embedder->model_id() + " (dim " + std::to_string(rt.embedder->dimension()) +
            "); re-run ingest or adjust backend/seed/embed settings");
  auto index = build_index(std::move(std::move(artifact).take().exemplars));
  if (!index.ok()) return index.error();
  return std::make_shared<const DualIndex>(std::move(index).take());
}

// Dataset rows share the corpus schema; the label becomes the gold label.
Result<std::vector<Sample>> load_dataset(const std::string& path) {
  auto rows = load_corpus(path);
  if (!rows.ok()) return rows.error();
  std::vector<Sample> samples;
  samples.reserve(rows.value().size());
  for (auto& row : rows.value()) {
    Sample s;
    s.id = row.id;
    s.text = std::move(row.text);
    s.context = std::move(row.context);
    s.gold_label = row.label;
    samples.push_back(std::move(s));
  }
  return samples;
}

// Without --trace the verdict prints as the decision surface only: no agent
// outputs, no retrieval provenance.
nlohmann::json verdict_brief(const Verdict& v) {
  return nlohmann::json{
      {"id", v.id},
      {"label", v.label},
      {"probability", v.probability},
      {"explanation", v.explanation},
      {"plan", plan_name(v.trace.plan_decision.plan)},
      {"overridden", v.trace.plan_decision.overridden},
      {"timings",
       {{"retrieval_ms", v.timings.retrieval_ms},
        {"planning_ms", v.timings.planning_ms},
        {"agents_ms", v.timings.agents_ms},
        {"synthesis_ms", v.timings.synthesis_ms},
        {"total_ms", v.timings.total_ms}}},
      {"flags", v.flags},
  };
}

int cmd_ingest(const AppConfig& config, const std::string& corpus_path,
               const std::string& index_path) {
  auto rows = load_corpus(corpus_path);
  if (!rows.ok()) return fail(kExitArtifact, rows.error());
  auto rt = make_runtime(config);
  if (!rt.ok()) return fail(kExitConfig, rt.error());

  std::uint64_t misses_before = rt.value().caching ? rt.value().caching->misses() : 0;
  auto exemplars = ingest_corpus(rows.value(), *rt.value().embedder);
  if (!exemplars.ok()) return fail(kExitPipeline, exemplars.error());
  std::uint64_t new_embeddings = rt.value().caching
                                     ? rt.value().caching->misses() - misses_before
                                     : rows.value().size();

  IndexArtifact artifact;
  artifact.provider = rt.value().embedder->name();
  artifact.model_id = rt.value().embedder->model_id();
  artifact.dimension = rt.value().embedder->dimension();
  artifact.exemplars = std::move(exemplars).take();

  auto index = build_index(artifact.exemplars);  // validates before anything is written
  if (!index.ok()) return fail(kExitArtifact, index.error());
  if (auto st = save_index(index_path, artifact); !st.ok())
    return fail(kExitArtifact, st.error());

  std::printf("indexed %zu exemplars -> %s (sarcastic %zu, non-sarcastic %zu); %llu new embeddings\n",
              artifact.exemplars.size(), index_path.c_str(), index.value().sarcastic.size(),
              index.value().non_sarcastic.size(),
              static_cast<unsigned long long>(new_embeddings));
  return 0;
}

int cmd_classify(const AppConfig& config, const std::string& text,
                 std::optional<std::string> context, const std::string& index_path, bool trace) {
  auto rt = make_runtime(config);
  if (!rt.ok()) return fail(kExitConfig, rt.error());
  auto index = load_pipeline_index(rt.value(), index_path);
  if (!index.ok()) return fail(kExitArtifact, index.error());

  Pipeline pipeline(index.value(), rt.value().deps(), config.pipeline);
  Sample sample;
  sample.id = "query";
  sample.text = text;
  sample.context = std::move(context);
  auto verdict = pipeline.classify(sample);
  if (!verdict.ok()) return fail(kExitPipeline, verdict.error());

  nlohmann::json out = trace ? verdict_to_json(verdict.value()) : verdict_brief(verdict.value());
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_evaluate(const AppConfig& config, const std::string& dataset_path,
                 const std::string& index_path, const std::string& out_dir, bool force,
                 int concurrency) {
  if (fs::exists(out_dir) && !force) {
    log_error("output directory " + out_dir + " already exists; pass --force to overwrite");
    return kExitArtifact;
  }
  auto samples = load_dataset(dataset_path);
  if (!samples.ok()) return fail(kExitArtifact, samples.error());
  auto rt = make_runtime(config);
  if (!rt.ok()) return fail(kExitConfig, rt.error());
  auto index = load_pipeline_index(rt.value(), index_path);
  if (!index.ok()) return fail(kExitArtifact, index.error());

  Pipeline pipeline(index.value(), rt.value().deps(), config.pipeline);
  EvaluateOptions options;
  options.sample_concurrency = concurrency;
  auto started = std::chrono::steady_clock::now();
  auto result = evaluate(pipeline, samples.value(), options);
  double wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!result.ok()) return fail(kExitPipeline, result.error());
  const MetricsReport& report = result.value().report;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    log_error("cannot create " + out_dir + ": " + ec.message());
    return kExitArtifact;
  }
  {
    std::ofstream out(fs::path(out_dir) / "metrics.json");
    out << metrics_to_json(report, config_to_json(config), iso_utc_now()).dump(2) << "\n";
    if (!out) return fail(kExitArtifact, Error{Errc::io_error, "short write to metrics.json"});
  }
  {
    std::ofstream out(fs::path(out_dir) / "verdicts.jsonl");
    for (const auto& v : result.value().verdicts) out << verdict_to_json(v).dump() << "\n";
    if (!out) return fail(kExitArtifact, Error{Errc::io_error, "short write to verdicts.jsonl"});
  }
  if (!result.value().failures.empty()) {
    std::ofstream out(fs::path(out_dir) / "failures.jsonl");
    for (const auto& f : result.value().failures)
      out << nlohmann::json{{"id", f.id}, {"error", f.error}}.dump() << "\n";
    log_warn(std::to_string(result.value().failures.size()) + " samples failed; see " +
             (fs::path(out_dir) / "failures.jsonl").string());
  }

  std::printf("accuracy: %.4f\n", report.accuracy);
  std::printf("macro_f1: %.4f\n", report.macro_f1);
  if (wall_s > 0)
    log_info("evaluated " + std::to_string(report.evaluated) + " samples in " +
             std::to_string(wall_s) + " s (" +
             std::to_string(static_cast<double>(report.evaluated) / wall_s * 60.0) +
             " samples/min)");
  return 0;
}

int cmd_sweep_k(const AppConfig& config, const std::string& dataset_path,
                const std::string& index_path, int k_min, int k_max, const std::string& csv_path,
                int concurrency) {
  if (k_min < 1 || k_max < k_min) {
    log_error("sweep requires 1 <= k-min <= k-max");
    return kExitConfig;
  }
  auto samples = load_dataset(dataset_path);
  if (!samples.ok()) return fail(kExitArtifact, samples.error());
  auto rt = make_runtime(config);
  if (!rt.ok()) return fail(kExitConfig, rt.error());
  auto index = load_pipeline_index(rt.value(), index_path);
  if (!index.ok()) return fail(kExitArtifact, index.error());

  // All ks share one runtime: embeddings and rationales generated for small k
  // are reused by larger k, so the sweep costs what the largest k costs.
  Pipeline::Deps deps = rt.value().deps();
  std::vector<int> ks;
  for (int k = k_min; k <= k_max; ++k) ks.push_back(k);
  EvaluateOptions options;
  options.sample_concurrency = concurrency;
  auto rows = sweep_k(
      [&](int k) -> Result<Pipeline> {
        PipelineConfig pc = config.pipeline;
        pc.k = k;
        if (auto st = pc.validate(); !st.ok()) return st.error();
        return Pipeline(index.value(), deps, pc);
      },
      samples.value(), ks, options);

  bool any_ok = false;
  for (const auto& row : rows) {
    if (row.ok) any_ok = true;
    else log_warn("k=" + std::to_string(row.k) + " failed: " + row.error);
  }
  std::string csv = sweep_csv(rows);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    out << csv;
    if (!out) return fail(kExitArtifact, Error{Errc::io_error, "short write to " + csv_path});
  }
  std::printf("%s", csv.c_str());
  return any_ok ? 0 : kExitPipeline;
}

int cmd_timings(const std::string& verdicts_path) {
  std::ifstream in(verdicts_path);
  if (!in) {
    log_error("cannot open " + verdicts_path);
    return kExitArtifact;
  }
  std::vector<StageTimings> all;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("timings")) {
      log_error(verdicts_path + " line " + std::to_string(line_no) + ": not a verdict record");
      return kExitArtifact;
    }
    const auto& t = doc["timings"];
    for (const char* key : {"retrieval_ms", "planning_ms", "agents_ms", "synthesis_ms"}) {
      if (!t.contains(key) || !t[key].is_number()) {
        log_error(verdicts_path + " line " + std::to_string(line_no) + ": timings missing " +
                  key);
        return kExitArtifact;
      }
    }
    StageTimings st;
    st.retrieval_ms = t["retrieval_ms"].get<double>();
    st.planning_ms = t["planning_ms"].get<double>();
    st.agents_ms = t["agents_ms"].get<double>();
    st.synthesis_ms = t["synthesis_ms"].get<double>();
    st.total_ms = t.contains("total_ms") && t["total_ms"].is_number()
                      ? t["total_ms"].get<double>()
                      : st.stage_sum();
    all.push_back(st);
  }
  if (all.empty()) {
    log_error(verdicts_path + ": no verdicts");
    return kExitArtifact;
  }
  auto table = timing_table(all);
  if (!table.ok()) return fail(kExitArtifact, table.error());

  std::printf("%-10s %12s %9s\n", "stage", "mean_ms", "percent");
  double mean_sum = 0.0, pct_sum = 0.0;
  for (const auto& row : table.value()) {
    std::printf("%-10s %12.2f %9.3f\n", row.stage.c_str(), row.mean_ms, row.percent);
    mean_sum += row.mean_ms;
    pct_sum += row.percent;
  }
  std::printf("%-10s %12.2f %9.3f\n", "total", mean_sum, pct_sum);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrieval-augmented multi-agent sarcasm detection"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, backend_flag;
  long long seed_flag = 0;
  int k_flag = 0;
  bool trace = false, force = false;
  auto* opt_config =
      app.add_option("--config", config_path, "config file (key = value, [pipeline] section)");
  auto* opt_backend = app.add_option("--backend", backend_flag, "chat/embedding backend")
                          ->check(CLI::IsMember({"remote", "mock"}));
  auto* opt_seed =
      app.add_option("--seed", seed_flag, "determinism seed (mock backend, hashing embedder)");
  auto* opt_k = app.add_option("--k", k_flag, "exemplars retrieved per label subset");
  app.add_flag("--trace", trace, "classify: include agent outputs and retrieval provenance");
  app.add_flag("--force", force, "evaluate: overwrite an existing output directory");

  std::string corpus_path, index_path = "index.jsonl", text, context_arg, dataset_path;
  std::string out_dir = "eval-out", csv_path, verdicts_path;
  int k_min = 1, k_max = 10, concurrency = 1;

  auto* ingest = app.add_subcommand("ingest", "embed a JSONL corpus and write the index artifact");
  ingest->add_option("corpus", corpus_path, "corpus JSONL ({\"text\",\"label\"[,\"id\"][,\"context\"]})")
      ->required();
  ingest->add_option("--index", index_path, "index artifact path");

  auto* classify = app.add_subcommand("classify", "classify one text, print the verdict as JSON");
  classify->add_option("text", text, "text to classify")->required();
  auto* opt_context = classify->add_option("--context", context_arg, "conversational context");
  classify->add_option("--index", index_path, "index artifact path");

  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "classify a labeled dataset, write metrics and verdicts");
  evaluate_cmd->add_option("dataset", dataset_path, "dataset JSONL with gold labels")->required();
  evaluate_cmd->add_option("--index", index_path, "index artifact path");
  evaluate_cmd->add_option("--out", out_dir, "report directory (metrics.json, verdicts.jsonl)");
  evaluate_cmd->add_option("--concurrency", concurrency, "samples classified in parallel");

  auto* sweep = app.add_subcommand("sweep-k", "evaluate across a k range, print CSV");
  sweep->add_option("dataset", dataset_path, "dataset JSONL with gold labels")->required();
  sweep->add_option("--index", index_path, "index artifact path");
  sweep->add_option("--k-min", k_min, "first k");
  sweep->add_option("--k-max", k_max, "last k");
  sweep->add_option("--out", csv_path, "also write the CSV to this path");
  sweep->add_option("--concurrency", concurrency, "samples classified in parallel");

  auto* timings =
      app.add_subcommand("timings", "aggregate stage timings from a verdict JSONL file");
  timings->add_option("verdicts", verdicts_path, "verdict JSONL (evaluate output)")->required();

  CLI11_PARSE(app, argc, argv);

  AppConfig config;
  if (opt_config->count()) {
    if (auto st = apply_config_file(config, config_path); !st.ok())
      return fail(kExitConfig, st.error());
  }
  if (auto st = apply_env(config); !st.ok()) return fail(kExitConfig, st.error());
  if (opt_backend->count()) config.backend = parse_backend(backend_flag).value();
  if (opt_seed->count()) config.seed = static_cast<std::uint64_t>(seed_flag);
  if (opt_k->count()) config.pipeline.k = k_flag;
  config.pipeline.seed = config.seed;
  if (auto st = validate_config(config); !st.ok()) return fail(kExitConfig, st.error());

  if (*ingest) return cmd_ingest(config, corpus_path, index_path);
  if (*classify)
    return cmd_classify(config, text,
                        opt_context->count() ? std::optional<std::string>(context_arg)
                                             : std::nullopt,
                        index_path, trace);
  if (*evaluate_cmd)
    return cmd_evaluate(config, dataset_path, index_path, out_dir, force, concurrency);
  if (*sweep) return cmd_sweep_k(config, dataset_path, index_path, k_min, k_max, csv_path,
                                 concurrency);
  if (*timings) return cmd_timings(verdicts_path);
  return 1;
}
