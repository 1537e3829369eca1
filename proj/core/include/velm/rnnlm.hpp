#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "velm/random.hpp"
#include "velm/vocab.hpp"

namespace velm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Gate rows are stacked as [input; forget; cell candidate; output], each
// hidden_dim tall.
struct LstmLayer {
  Matrix input_weights;      // 4*d_h x d_in
  Matrix recurrent_weights;  // 4*d_h x d_h
  Vector bias;               // 4*d_h
};

// All trainable tensors. Gradients use the same type.
struct RnnParameters {
  Matrix input_embeddings;   // S: d_s x |explicit words|, one column per word
  std::vector<LstmLayer> layers;
  Matrix output_embeddings;  // U: d_h x |explicit words|
  Vector output_bias;        // b_y: |explicit words|

  static RnnParameters zeros(std::size_t explicit_words, std::size_t input_dim, std::size_t hidden_dim,
                             std::size_t num_layers);
  RnnParameters zeros_like() const;

  // Flat views over every tensor in a fixed order: S, then per layer
  // (W, R, b), then U, b_y.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  double squared_norm() const;
  bool all_finite() const;
};

struct ModelShape {
  std::size_t input_dim = 32;   // d_s
  std::size_t hidden_dim = 64;  // d_h
  std::size_t num_layers = 2;
};

// Shortlist LSTM language model: input projection S, stacked LSTM middle
// layers, output projection U with bias. The vocabulary's shortlist is the
// explicitly modeled set and always matches the column count of S and U.
struct RnnLmModel {
  Vocabulary vocab;
  RnnParameters params;

  std::size_t input_dim() const { return static_cast<std::size_t>(params.input_embeddings.rows()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(params.output_embeddings.rows()); }
  std::size_t num_layers() const { return params.layers.size(); }
  std::size_t explicit_size() const { return static_cast<std::size_t>(params.output_bias.size()); }

  // Throws velm::Error if tensor shapes disagree with each other or the vocabulary.
  void check_consistent() const;
};

// All-zero parameters.
RnnLmModel make_zero_model(Vocabulary vocab, const ModelShape& shape);

// Weights uniform in [-scale, scale], forget-gate bias 1, other biases 0.
RnnLmModel make_random_model(Vocabulary vocab, const ModelShape& shape, std::uint64_t seed,
                             double scale = 0.05);

struct RnnState {
  std::vector<Vector> hidden;  // per layer, d_h
  std::vector<Vector> cell;    // per layer, d_h
};

RnnState zero_state(const RnnLmModel& model);

// Multiplicative masks on the non-recurrent connections: the input of each
// layer and the top hidden vector feeding the output projection.
struct DropoutMask {
  std::vector<Vector> layer_inputs;
  Vector output;
};

// Inverted dropout: kept units are scaled by 1/(1-rate).
DropoutMask sample_dropout_mask(const RnnLmModel& model, double rate, Rng& rng);

struct StepOutput {
  Vector logits;
  RnnState state;
};

StepOutput forward_step(const RnnLmModel& model, WordId word, const RnnState& state,
                        const DropoutMask* mask = nullptr);

// Max-subtracted softmax.
Vector softmax(const Vector& logits);
Vector log_softmax(const Vector& logits);

// Feeds <s> then each word; entry t is log P(w_{t+1} | history) and the
// last entry predicts </s>. Ids must already be explicit-word ids (tail
// words mapped to <unk>). Throws on an empty sentence.
std::vector<double> score_sentence(const RnnLmModel& model, std::span<const WordId> sentence);

// Scores many sentences, optionally on several threads. Each sentence is
// scored independently, so results equal score_sentence exactly.
std::vector<std::vector<double>> score_sentences(const RnnLmModel& model,
                                                 std::span<const std::vector<WordId>> sentences,
                                                 std::size_t threads = 1);

// exp(-mean log-prob). Throws on an empty input.
double perplexity(std::span<const double> log_probs);

struct PerplexityStats {
  double log_prob_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t skipped = 0;  // tokens excluded (e.g. outside the full vocabulary)

  void add(double log_prob) {
    log_prob_sum += log_prob;
    ++tokens;
  }
  void merge(const PerplexityStats& o) {
    log_prob_sum += o.log_prob_sum;
    tokens += o.tokens;
    skipped += o.skipped;
  }
  double perplexity() const;
};

// Shortlist-only perplexity of a corpus (tail words scored as <unk>).
PerplexityStats corpus_perplexity(const RnnLmModel& model, const Corpus& corpus);

}  // namespace velm
