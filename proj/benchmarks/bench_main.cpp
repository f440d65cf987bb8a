// Micro benchmarks for the hot paths: one training step, greedy decoding,
// WER scoring and example generation.

#include <benchmark/benchmark.h>

#include <limits>
#include <string>
#include <vector>

#include "mmsr/assemble.hpp"
#include "mmsr/dataset.hpp"
#include "mmsr/evalkit.hpp"
#include "mmsr/model.hpp"
#include "mmsr/optimizer.hpp"

namespace {

using namespace mmsr;

std::vector<AssembledSequence> batch_for(const std::string& letters, OcrVariant ocr, int n) {
  const Vocabulary vocab;
  const ChannelConfig ch;
  const ModalitySet inputs = ModalitySet::parse(letters);
  std::vector<AssembledSequence> out;
  for (int i = 0; i < n; ++i) {
    const auto stored = make_example(vocab, ch, "b" + std::to_string(i), 1000 + static_cast<std::uint64_t>(i), 0.0);
    const auto ex = materialize_example(vocab, ch, stored, SnrRequest::stored(), inputs, ocr);
    out.push_back(assemble(vocab, ex, Task::kAsr, 768));
  }
  return out;
}

Transformer<float> toy_model() {
  ModelConfig mc;
  mc.vocab_size = Vocabulary().size();
  Transformer<float> m(mc);
  m.init_random(1);
  return m;
}

void train_step(benchmark::State& state, const std::string& letters, OcrVariant ocr) {
  auto model = toy_model();
  const auto batch = batch_for(letters, ocr, 4);
  std::vector<float> grad(model.parameters().size());
  AdamW opt({}, grad.size());
  long tokens = 0;
  for (const auto& s : batch) tokens += static_cast<long>(s.ids.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.loss_and_grad(batch, grad));
    clip_grad_norm(grad, 1.0);
    opt.step(model.parameters(), grad);
  }
  state.counters["tokens/batch"] = static_cast<double>(tokens);
}

void BM_TrainStepAudio(benchmark::State& s) { train_step(s, "A", {}); }
void BM_TrainStepLipAudio(benchmark::State& s) { train_step(s, "LA", {}); }
void BM_TrainStepOracle10(benchmark::State& s) { train_step(s, "OA", {OcrVariant::Kind::kOracle10, 0}); }

void BM_GreedyDecode(benchmark::State& state) {
  const auto model = toy_model();
  const auto seq = batch_for("A", {}, 1).front();
  const auto prefix = seq.prefix();
  for (auto _ : state) benchmark::DoNotOptimize(greedy_decode(model, prefix, 48));
}

void BM_Wer(benchmark::State& state) {
  std::vector<std::string> ref, hyp;
  for (int i = 0; i < state.range(0); ++i) {
    ref.push_back("w" + std::to_string(i % 17));
    hyp.push_back("w" + std::to_string((i * 7) % 17));
  }
  for (auto _ : state) benchmark::DoNotOptimize(wer(ref, hyp));
}

void BM_MakeExample(benchmark::State& state) {
  const Vocabulary vocab;
  const ChannelConfig ch;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(make_example(vocab, ch, "x", ++seed, -5.0));
}

}  // namespace

BENCHMARK(BM_TrainStepAudio)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepLipAudio)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepOracle10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Wer)->Arg(16)->Arg(64)->Arg(256);
BENCHMARK(BM_MakeExample)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
