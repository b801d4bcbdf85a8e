// Minimal end-to-end library walkthrough: build a tiny in-memory knowledge
// base, run the four-stage pipeline against the deterministic mock backend,
// and print each verdict. No network, no files beyond the prompt templates.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "ramsd/llm_mock.hpp"
#include "ramsd/pipeline.hpp"

using namespace ramsd;

namespace {

std::string prompts_directory() {
  if (const char* env = std::getenv("RAMSD_PROMPTS_DIR"); env && *env) return env;
#ifdef RAMSD_DEFAULT_PROMPTS_DIR
  return RAMSD_DEFAULT_PROMPTS_DIR;
#else
  return "prompts";
#endif
}

}  // namespace

int main() {
  // A six-exemplar knowledge base, three per label, embedded locally.
  HashingEmbedder embedder(64, 7);
  struct Row {
    const char* text;
    int label;
  };
  const Row rows[] = {
      {"oh great, another monday morning", 1},
      {"wonderful, the printer is jammed again", 1},
      {"i just love waiting on hold for an hour", 1},
      {"the meeting ran a little long today", 0},
      {"the report is due on friday", 0},
      {"lunch at the new place was fine", 0},
  };
  std::vector<Exemplar> exemplars;
  for (size_t i = 0; i < std::size(rows); ++i) {
    Exemplar ex;
    ex.id = "kb-" + std::to_string(i);
    ex.text = rows[i].text;
    ex.label = rows[i].label;
    ex.embedding = embedder.embed(ex.text).take();
    renormalize(ex.embedding);
    exemplars.push_back(std::move(ex));
  }
  auto index = build_index(std::move(exemplars));
  if (!index.ok()) {
    std::fprintf(stderr, "index: %s\n", index.error().to_string().c_str());
    return 1;
  }

  auto prompts = PromptLibrary::load(prompts_directory());
  if (!prompts.ok()) {
    std::fprintf(stderr, "prompts: %s\n", prompts.error().to_string().c_str());
    return 1;
  }

  Pipeline::Deps deps;
  deps.embedder = std::make_shared<HashingEmbedder>(64, 7);
  deps.backend = std::make_shared<MockBackend>(std::uint64_t{7});
  deps.prompts = std::make_shared<PromptLibrary>(std::move(prompts).take());

  PipelineConfig config;
  config.k = 2;
  config.seed = 7;
  Pipeline pipeline(std::move(index).take(), std::move(deps), config);

  const char* queries[] = {
      "sure, because nothing says fun like a four hour layover",
      "the bus arrived right on schedule this morning",
  };
  for (size_t i = 0; i < std::size(queries); ++i) {
    Sample sample;
    sample.id = "demo-" + std::to_string(i);
    sample.text = queries[i];
    auto verdict = pipeline.classify(sample);
    if (!verdict.ok()) {
      std::fprintf(stderr, "classify: %s\n", verdict.error().to_string().c_str());
      return 1;
    }
    std::printf("%s\n", verdict_to_json(verdict.value()).dump(2).c_str());
  }
  return 0;
}
