#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "velm/corpus.hpp"
#include "velm/rnnlm.hpp"

namespace velm {

struct TrainConfig {
  std::size_t unroll = 10;       // truncation length in time steps
  double dropout = 0.5;          // rate on non-recurrent connections
  double learning_rate = 1.0;    // per-token-mean SGD step
  double clip = 5.0;             // global gradient-norm bound
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t batch = 16;        // sentences processed side by side
  double min_improvement = 0.003;  // relative validation gain that starts lr halving
};

// One truncation window of a time-major minibatch. weights[t][b] is 1 for
// real targets and 0 for padding after a sentence ends.
struct TrainingWindow {
  std::size_t batch = 0;
  std::vector<std::vector<WordId>> inputs;
  std::vector<std::vector<WordId>> targets;
  std::vector<std::vector<double>> weights;

  std::size_t steps() const { return inputs.size(); }
};

// Per-layer hidden and cell matrices, d_h x batch.
struct BatchState {
  std::vector<Matrix> hidden;
  std::vector<Matrix> cell;
};

BatchState zero_batch_state(const RnnParameters& params, std::size_t batch);

// Dropout masks per time step: layer_inputs[t][l] is d_in x batch,
// output[t] is d_h x batch.
struct WindowMasks {
  std::vector<std::vector<Matrix>> layer_inputs;
  std::vector<Matrix> output;
};

WindowMasks sample_window_masks(const RnnParameters& params, std::size_t steps, std::size_t batch, double rate,
                                Rng& rng);

struct WindowResult {
  double loss = 0.0;    // sum of weighted negative log-likelihoods
  double weight = 0.0;  // sum of target weights
  BatchState final_state;
};

// Forward pass over the window from `initial` (treated as a constant).
// When `grads` is given, d loss / d params is added into it.
WindowResult window_loss(const RnnParameters& params, const TrainingWindow& window, const BatchState& initial,
                         const WindowMasks* masks = nullptr, RnnParameters* grads = nullptr);

// Lays sentences side by side (input <s> w1..wn, target w1..wn </s>),
// pads to the longest and cuts the result into windows of `unroll` steps.
std::vector<TrainingWindow> make_batch_windows(std::span<const std::vector<WordId>> sentences, std::size_t unroll);

// Rescales grads so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_gradients(RnnParameters& grads, double max_norm);

struct TrainResult {
  std::vector<double> train_perplexity;
  std::vector<double> validation_perplexity;
  std::vector<double> learning_rates;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(std::size_t epoch, double train_ppl, double valid_ppl, double lr)>;

// Truncated BPTT with plain SGD. State is carried across window boundaries
// inside a sentence batch and reset between batches. After each epoch the
// validation perplexity decides the schedule: once the relative gain drops
// below min_improvement the rate halves every epoch; a rise restores the
// best parameters and, if halving has already begun, stops training.
// Tail words are trained as <unk>. Throws velm::Error on a non-finite loss.
TrainResult train_bptt(RnnLmModel& model, const Corpus& train, const Corpus& valid, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

}  // namespace velm
