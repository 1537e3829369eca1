#include <benchmark/benchmark.h>

#include "velm/bptt.hpp"
#include "velm/logging.hpp"
#include "velm/ngram.hpp"
#include "velm/rnnlm.hpp"
#include "velm/synthetic.hpp"
#include "velm/wer.hpp"

namespace {

using namespace velm;

Vocabulary numbered_vocab(std::size_t size) {
  std::vector<std::string> words{"<s>", "</s>", "<unk>"};
  while (words.size() < size) words.push_back("w" + std::to_string(words.size()));
  return Vocabulary(words, size);
}

void BM_ForwardStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const RnnLmModel m = make_random_model(numbered_vocab(1000), {hidden, hidden, 2}, 1);
  RnnState s = zero_state(m);
  WordId w = 3;
  for (auto _ : state) {
    auto out = forward_step(m, w, s);
    s = std::move(out.state);
    benchmark::DoNotOptimize(out.logits.data());
    w = 3 + (w + 7) % 997;
  }
}
BENCHMARK(BM_ForwardStep)->Arg(64)->Arg(256);

void BM_Softmax(benchmark::State& state) {
  Rng rng(2);
  Vector logits(state.range(0));
  for (long i = 0; i < logits.size(); ++i) logits(i) = rng.uniform(-10, 10);
  for (auto _ : state) benchmark::DoNotOptimize(softmax(logits).data());
}
BENCHMARK(BM_Softmax)->Arg(1000)->Arg(10000);

void BM_NgramProb(benchmark::State& state) {
  const TemplateGrammar g;
  Rng rng(3);
  const Corpus c = g.sample_corpus(50000, rng);
  const Vocabulary v = build_vocabulary(c, 600, 600);
  set_log_sink({});
  const NgramModel m = train_kn(c, v, 3);
  std::vector<std::vector<WordId>> sentences;
  for (std::size_t i = 0; i < 200; ++i) sentences.push_back(v.encode(c[i], EncodeMode::kFullVocabulary));
  for (auto _ : state) {
    double total = 0.0;
    for (const auto& s : sentences) {
      std::vector<WordId> history{kBosId};
      for (WordId w : s) {
        total += m.log_prob(w, history);
        history.push_back(w);
      }
    }
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(BM_NgramProb);

void BM_WerAlign(benchmark::State& state) {
  const TemplateGrammar g;
  Rng rng(4);
  const Corpus a = g.sample_sentences(100, rng), b = g.sample_sentences(100, rng);
  for (auto _ : state) {
    std::size_t errors = 0;
    for (std::size_t i = 0; i < a.size(); ++i) errors += align_counts(a[i], b[i]).errors();
    benchmark::DoNotOptimize(errors);
  }
}
BENCHMARK(BM_WerAlign);

void BM_WindowLossAndGradient(benchmark::State& state) {
  const RnnLmModel m = make_random_model(numbered_vocab(300), {32, 64, 2}, 5);
  Rng rng(6);
  std::vector<std::vector<WordId>> sentences(16);
  for (auto& s : sentences) {
    for (int t = 0; t < 12; ++t) s.push_back(static_cast<WordId>(3 + rng.below(297)));
  }
  const auto windows = make_batch_windows(sentences, 10);
  const BatchState initial = zero_batch_state(m.params, 16);
  RnnParameters grads = m.params.zeros_like();
  for (auto _ : state) {
    benchmark::DoNotOptimize(window_loss(m.params, windows[0], initial, nullptr, &grads).loss);
  }
}
BENCHMARK(BM_WindowLossAndGradient);

}  // namespace

BENCHMARK_MAIN();
