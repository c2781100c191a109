#include <benchmark/benchmark.h>

#include <random>

#include "aop/backends.hpp"
#include "aop/retrieval.hpp"
#include "aop/types.hpp"

namespace {

const char* kWords[] = {"river", "stone", "cloud", "ember", "glass", "thorn",
                        "quill", "frost", "maple", "crane", "prism", "ridge"};

aop::HierarchicalMemory build_corpus(int segments, aop::EmbeddingBackend& embedder) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kWords) - 1);
  aop::HierarchicalMemory memory;
  memory.video_id = "bench";
  memory.duration = segments * 10.0;
  memory.embedding_dim = embedder.dimension();
  for (int s = 0; s < segments; ++s) {
    aop::MidSegment seg;
    seg.index = s + 1;
    seg.start = s * 10.0;
    seg.end = seg.start + 10.0;
    seg.transcript = "speech";
    memory.mid_segments.push_back(std::move(seg));

    aop::FineClip clip;
    clip.index = s + 1;
    clip.start = s * 10.0;
    clip.end = clip.start + 10.0;
    clip.text = "speech";
    memory.fine_clips.push_back(std::move(clip));

    aop::SegmentAnnotation ann;
    ann.segment_index = s + 1;
    ann.description = std::string(kWords[pick(rng)]) + " " + kWords[pick(rng)];
    ann.keywords = {kWords[pick(rng)], kWords[pick(rng)], kWords[pick(rng)]};
    ann.visual_keypoints = {std::string("shows ") + kWords[pick(rng)]};
    ann.audio_keypoints = {std::string("plays ") + kWords[pick(rng)]};
    std::vector<std::string> texts = {ann.description, ann.visual_keypoints[0],
                                      ann.audio_keypoints[0]};
    auto vectors = embedder.embed_batch(texts);
    ann.embedding_desc = std::move(vectors[0]);
    ann.embedding_keypoints = {std::move(vectors[1]), std::move(vectors[2])};
    memory.annotations.push_back(std::move(ann));
  }
  return memory;
}

void BM_KeywordSearch(benchmark::State& state) {
  aop::SeededHashEmbedder embedder(64, 1);
  const auto memory = build_corpus(static_cast<int>(state.range(0)), embedder);
  const aop::ToolEngine engine(memory, embedder);
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.keyword_search("river stone frost", 4));
  }
}

void BM_DescSearch(benchmark::State& state) {
  aop::SeededHashEmbedder embedder(64, 1);
  const auto memory = build_corpus(static_cast<int>(state.range(0)), embedder);
  const aop::ToolEngine engine(memory, embedder);
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.desc_search("river stone frost", 4));
  }
}

void BM_KeypointSearch(benchmark::State& state) {
  aop::SeededHashEmbedder embedder(64, 1);
  const auto memory = build_corpus(static_cast<int>(state.range(0)), embedder);
  const aop::ToolEngine engine(memory, embedder);
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.keypoint_search("river stone frost", 0.5, 4));
  }
}

}  // namespace

BENCHMARK(BM_KeywordSearch)->Arg(50)->Arg(200);
BENCHMARK(BM_DescSearch)->Arg(50)->Arg(200);
BENCHMARK(BM_KeypointSearch)->Arg(50)->Arg(200);

BENCHMARK_MAIN();
