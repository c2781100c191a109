#include <benchmark/benchmark.h>

#include <random>

#include "aop/segmentation.hpp"

namespace {

std::vector<aop::Utterance> synthetic_utterances(std::size_t count) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> gap(0.0, 4.0);
  std::uniform_real_distribution<double> length(0.5, 20.0);
  std::vector<aop::Utterance> out;
  out.reserve(count);
  double cursor = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    aop::Utterance u;
    u.start = cursor;
    u.end = cursor + length(rng);
    u.text = "utterance";
    cursor = u.end + gap(rng);
    out.push_back(std::move(u));
  }
  return out;
}

void BM_SegmentUtterances(benchmark::State& state) {
  const auto utterances = synthetic_utterances(static_cast<std::size_t>(state.range(0)));
  const aop::SegmentationConfig config;
  for (auto _ : state) {
    benchmark::DoNotOptimize(aop::segment_utterances(utterances, config));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_DeriveFineClips(benchmark::State& state) {
  const auto utterances = synthetic_utterances(static_cast<std::size_t>(state.range(0)));
  const aop::SegmentationConfig config;
  auto segments = aop::segment_utterances(utterances, config);
  aop::gap_tile(segments, utterances.back().end + 10.0);
  for (auto _ : state) {
    auto copy = segments;
    benchmark::DoNotOptimize(aop::derive_fine_clips(utterances, copy, config));
  }
}

}  // namespace

BENCHMARK(BM_SegmentUtterances)->Arg(100)->Arg(1000)->Arg(10000);
BENCHMARK(BM_DeriveFineClips)->Arg(100)->Arg(1000);
