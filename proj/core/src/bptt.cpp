#include "velm/bptt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "velm/error.hpp"

namespace velm {
namespace {

Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

struct LayerStep {
  Matrix input;  // after dropout
  Matrix h_prev, c_prev;
  Matrix i, f, g, o;
  Matrix c, tanh_c, h;
};

}  // namespace

BatchState zero_batch_state(const RnnParameters& params, std::size_t batch) {
  const auto dh = params.output_embeddings.rows();
  const auto b = static_cast<Eigen::Index>(batch);
  BatchState s;
  s.hidden.assign(params.layers.size(), Matrix::Zero(dh, b));
  s.cell.assign(params.layers.size(), Matrix::Zero(dh, b));
  return s;
}

WindowMasks sample_window_masks(const RnnParameters& params, std::size_t steps, std::size_t batch, double rate,
                                Rng& rng) {
  const double keep = 1.0 - rate;
  const auto b = static_cast<Eigen::Index>(batch);
  auto draw = [&](Eigen::Index rows) {
    Matrix m(rows, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }
    return m;
  };
  WindowMasks masks;
  masks.layer_inputs.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    for (const auto& layer : params.layers) masks.layer_inputs[t].push_back(draw(layer.input_weights.cols()));
    masks.output.push_back(draw(params.output_embeddings.rows()));
  }
  return masks;
}

WindowResult window_loss(const RnnParameters& params, const TrainingWindow& window, const BatchState& initial,
                         const WindowMasks* masks, RnnParameters* grads) {
  const std::size_t steps = window.steps();
  const std::size_t layers = params.layers.size();
  const auto batch = static_cast<Eigen::Index>(window.batch);
  const auto dh = params.output_embeddings.rows();
  const auto n_words = params.output_embeddings.cols();

  std::vector<std::vector<LayerStep>> cache(steps, std::vector<LayerStep>(layers));
  std::vector<Matrix> top(steps);    // masked top hidden, input to U
  std::vector<Matrix> probs(steps);  // softmax outputs

  WindowResult result;
  BatchState state = initial;
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix x(params.input_embeddings.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const WordId w = window.inputs[t][static_cast<std::size_t>(b)];
      if (w < 0 || w >= n_words) throw Error("training input id outside the explicit words");
      x.col(b) = params.input_embeddings.col(w);
    }
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& layer = params.layers[l];
      LayerStep& s = cache[t][l];
      s.input = masks ? x.cwiseProduct(masks->layer_inputs[t][l]) : x;
      s.h_prev = state.hidden[l];
      s.c_prev = state.cell[l];
      Matrix z = layer.input_weights * s.input + layer.recurrent_weights * s.h_prev;
      z.colwise() += layer.bias;
      s.i = sigmoid(z.middleRows(0, dh));
      s.f = sigmoid(z.middleRows(dh, dh));
      s.g = z.middleRows(2 * dh, dh).array().tanh().matrix();
      s.o = sigmoid(z.middleRows(3 * dh, dh));
      s.c = s.f.cwiseProduct(s.c_prev) + s.i.cwiseProduct(s.g);
      s.tanh_c = s.c.array().tanh().matrix();
      s.h = s.o.cwiseProduct(s.tanh_c);
      state.hidden[l] = s.h;
      state.cell[l] = s.c;
      x = s.h;
    }
    top[t] = masks ? x.cwiseProduct(masks->output[t]) : x;
    Matrix y = params.output_embeddings.transpose() * top[t];
    y.colwise() += params.output_bias;
    probs[t].resize(n_words, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double w = window.weights[t][static_cast<std::size_t>(b)];
      const double m = y.col(b).maxCoeff();
      const double lse = m + std::log((y.col(b).array() - m).exp().sum());
      if (w != 0.0) {
        const WordId target = window.targets[t][static_cast<std::size_t>(b)];
        if (target < 0 || target >= n_words) throw Error("training target id outside the explicit words");
        result.loss -= w * (y(target, b) - lse);
        result.weight += w;
      }
      probs[t].col(b) = (y.col(b).array() - lse).exp().matrix();
    }
  }
  result.final_state = std::move(state);
  if (!grads) return result;

  // Output projection and the gradient arriving at the top layer.
  std::vector<Matrix> d_above(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix dy = probs[t];
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double w = window.weights[t][static_cast<std::size_t>(b)];
      if (w == 0.0) {
        dy.col(b).setZero();
        continue;
      }
      dy(window.targets[t][static_cast<std::size_t>(b)], b) -= 1.0;
      dy.col(b) *= w;
    }
    grads->output_embeddings.noalias() += top[t] * dy.transpose();
    grads->output_bias += dy.rowwise().sum();
    d_above[t] = params.output_embeddings * dy;
    if (masks) d_above[t] = d_above[t].cwiseProduct(masks->output[t]);
  }

  for (std::size_t l = layers; l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& g = grads->layers[l];
    Matrix dh_next = Matrix::Zero(dh, batch);
    Matrix dc_next = Matrix::Zero(dh, batch);
    Matrix dz(4 * dh, batch);
    for (std::size_t t = steps; t-- > 0;) {
      const LayerStep& s = cache[t][l];
      const Matrix dh_total = d_above[t] + dh_next;
      const Matrix dc = dh_total.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix()) + dc_next;
      dz.middleRows(0, dh) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
      dz.middleRows(dh, dh) = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
      dz.middleRows(2 * dh, dh) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
      dz.middleRows(3 * dh, dh) =
          dh_total.cwiseProduct(s.tanh_c).cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
      g.input_weights.noalias() += dz * s.input.transpose();
      g.recurrent_weights.noalias() += dz * s.h_prev.transpose();
      g.bias += dz.rowwise().sum();
      Matrix dx = layer.input_weights.transpose() * dz;
      if (masks) dx = dx.cwiseProduct(masks->layer_inputs[t][l]);
      if (l > 0) {
        d_above[t] = std::move(dx);
      } else {
        for (Eigen::Index b = 0; b < batch; ++b) {
          grads->input_embeddings.col(window.inputs[t][static_cast<std::size_t>(b)]) += dx.col(b);
        }
      }
      dh_next = layer.recurrent_weights.transpose() * dz;
      dc_next = dc.cwiseProduct(s.f);
    }
  }
  return result;
}

std::vector<TrainingWindow> make_batch_windows(std::span<const std::vector<WordId>> sentences, std::size_t unroll) {
  if (unroll == 0) throw Error("unroll length must be positive");
  std::size_t longest = 0;
  for (const auto& s : sentences) longest = std::max(longest, s.size() + 1);
  std::vector<TrainingWindow> windows;
  for (std::size_t start = 0; start < longest; start += unroll) {
    TrainingWindow w;
    w.batch = sentences.size();
    for (std::size_t t = start; t < std::min(longest, start + unroll); ++t) {
      std::vector<WordId> in(w.batch, kEosId), out(w.batch, kEosId);
      std::vector<double> wt(w.batch, 0.0);
      for (std::size_t b = 0; b < w.batch; ++b) {
        const auto& s = sentences[b];
        if (t > s.size()) continue;
        in[b] = t == 0 ? kBosId : s[t - 1];
        out[b] = t < s.size() ? s[t] : kEosId;
        wt[b] = 1.0;
      }
      w.inputs.push_back(std::move(in));
      w.targets.push_back(std::move(out));
      w.weights.push_back(std::move(wt));
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

double clip_gradients(RnnParameters& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto t : grads.tensors()) {
      for (double& v : t) v *= scale;
    }
  }
  return norm;
}

TrainResult train_bptt(RnnLmModel& model, const Corpus& train, const Corpus& valid, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  model.check_consistent();
  if (train.empty()) throw Error("training corpus is empty");
  if (config.batch == 0) throw Error("batch size must be positive");
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw Error("dropout rate must be in [0, 1)");

  std::vector<std::vector<WordId>> sentences;
  sentences.reserve(train.size());
  for (const auto& s : train) sentences.push_back(model.vocab.encode(s, EncodeMode::kShortlistOnly));

  Rng rng(config.seed);
  TrainResult result;
  double lr = config.learning_rate;
  double best_valid = std::numeric_limits<double>::infinity();
  RnnParameters best = model.params;
  bool halving = false;
  std::vector<std::size_t> order(sentences.size());
  RnnParameters grads = model.params.zeros_like();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    double epoch_weight = 0.0;
    std::vector<std::vector<WordId>> batch;
    for (std::size_t first = 0; first < order.size(); first += config.batch) {
      batch.clear();
      for (std::size_t k = first; k < std::min(order.size(), first + config.batch); ++k) {
        batch.push_back(sentences[order[k]]);
      }
      BatchState state = zero_batch_state(model.params, batch.size());
      for (const auto& window : make_batch_windows(batch, config.unroll)) {
        std::optional<WindowMasks> masks;
        if (config.dropout > 0.0) {
          masks = sample_window_masks(model.params, window.steps(), window.batch, config.dropout, rng);
        }
        for (auto t : grads.tensors()) std::fill(t.begin(), t.end(), 0.0);
        WindowResult r = window_loss(model.params, window, state, masks ? &*masks : nullptr, &grads);
        if (!std::isfinite(r.loss)) {
          throw Error("non-finite training loss in epoch " + std::to_string(epoch + 1) +
                      " (learning rate " + std::to_string(lr) + ")");
        }
        state = std::move(r.final_state);
        if (r.weight == 0.0) continue;
        epoch_loss += r.loss;
        epoch_weight += r.weight;
        for (auto t : grads.tensors()) {
          for (double& v : t) v /= r.weight;
        }
        clip_gradients(grads, config.clip);
        auto params = model.params.tensors();
        auto deltas = grads.tensors();
        for (std::size_t i = 0; i < params.size(); ++i) {
          for (std::size_t j = 0; j < params[i].size(); ++j) params[i][j] -= lr * deltas[i][j];
        }
      }
    }

    const double train_ppl = std::exp(epoch_loss / epoch_weight);
    double valid_ppl = std::numeric_limits<double>::quiet_NaN();
    result.train_perplexity.push_back(train_ppl);
    result.learning_rates.push_back(lr);
    result.epochs_run = epoch + 1;
    if (!valid.empty()) {
      valid_ppl = corpus_perplexity(model, valid).perplexity();
      result.validation_perplexity.push_back(valid_ppl);
    }
    if (on_epoch) on_epoch(epoch + 1, train_ppl, valid_ppl, lr);
    if (valid.empty()) continue;

    if (valid_ppl >= best_valid) {
      model.params = best;
      if (halving) {
        result.stopped_early = epoch + 1 < config.epochs;
        break;
      }
      halving = true;
    } else {
      if (best_valid - valid_ppl < config.min_improvement * best_valid) halving = true;
      best_valid = valid_ppl;
      best = model.params;
    }
    if (halving) lr *= 0.5;
  }
  return result;
}

}  // namespace velm
