#include "velm/rnnlm.hpp"

#include <cmath>
#include <thread>

#include "velm/error.hpp"

namespace velm {
namespace {

Vector sigmoid(const Vector& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

void fill_uniform(std::span<double> values, Rng& rng, double scale) {
  for (double& v : values) v = rng.uniform(-scale, scale);
}

}  // namespace

RnnParameters RnnParameters::zeros(std::size_t explicit_words, std::size_t input_dim, std::size_t hidden_dim,
                                   std::size_t num_layers) {
  const auto n = static_cast<Eigen::Index>(explicit_words);
  const auto ds = static_cast<Eigen::Index>(input_dim);
  const auto dh = static_cast<Eigen::Index>(hidden_dim);
  RnnParameters p;
  p.input_embeddings = Matrix::Zero(ds, n);
  for (std::size_t l = 0; l < num_layers; ++l) {
    LstmLayer layer;
    layer.input_weights = Matrix::Zero(4 * dh, l == 0 ? ds : dh);
    layer.recurrent_weights = Matrix::Zero(4 * dh, dh);
    layer.bias = Vector::Zero(4 * dh);
    p.layers.push_back(std::move(layer));
  }
  p.output_embeddings = Matrix::Zero(dh, n);
  p.output_bias = Vector::Zero(n);
  return p;
}

RnnParameters RnnParameters::zeros_like() const {
  RnnParameters p;
  p.input_embeddings = Matrix::Zero(input_embeddings.rows(), input_embeddings.cols());
  for (const auto& l : layers) {
    p.layers.push_back({Matrix::Zero(l.input_weights.rows(), l.input_weights.cols()),
                        Matrix::Zero(l.recurrent_weights.rows(), l.recurrent_weights.cols()),
                        Vector::Zero(l.bias.size())});
  }
  p.output_embeddings = Matrix::Zero(output_embeddings.rows(), output_embeddings.cols());
  p.output_bias = Vector::Zero(output_bias.size());
  return p;
}

std::vector<std::span<double>> RnnParameters::tensors() {
  auto view = [](auto& t) { return std::span<double>(t.data(), static_cast<std::size_t>(t.size())); };
  std::vector<std::span<double>> out{view(input_embeddings)};
  for (auto& l : layers) {
    out.push_back(view(l.input_weights));
    out.push_back(view(l.recurrent_weights));
    out.push_back(view(l.bias));
  }
  out.push_back(view(output_embeddings));
  out.push_back(view(output_bias));
  return out;
}

std::vector<std::span<const double>> RnnParameters::tensors() const {
  std::vector<std::span<const double>> out;
  for (auto t : const_cast<RnnParameters*>(this)->tensors()) out.emplace_back(t.data(), t.size());
  return out;
}

double RnnParameters::squared_norm() const {
  double s = 0.0;
  for (auto t : tensors()) {
    for (double v : t) s += v * v;
  }
  return s;
}

bool RnnParameters::all_finite() const {
  for (auto t : tensors()) {
    for (double v : t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void RnnLmModel::check_consistent() const {
  const auto n = static_cast<Eigen::Index>(vocab.shortlist_size());
  const auto& p = params;
  if (p.input_embeddings.cols() != n || p.output_embeddings.cols() != n || p.output_bias.size() != n) {
    throw Error("embedding column counts do not match the shortlist size " + std::to_string(n));
  }
  if (p.layers.empty()) throw Error("model needs at least one LSTM layer");
  const auto dh = p.output_embeddings.rows();
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const auto d_in = l == 0 ? p.input_embeddings.rows() : dh;
    if (layer.input_weights.rows() != 4 * dh || layer.input_weights.cols() != d_in ||
        layer.recurrent_weights.rows() != 4 * dh || layer.recurrent_weights.cols() != dh ||
        layer.bias.size() != 4 * dh) {
      throw Error("LSTM layer " + std::to_string(l) + " has inconsistent dimensions");
    }
  }
}

RnnLmModel make_zero_model(Vocabulary vocab, const ModelShape& shape) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.num_layers == 0) {
    throw Error("model dimensions must be positive");
  }
  auto params = RnnParameters::zeros(vocab.shortlist_size(), shape.input_dim, shape.hidden_dim, shape.num_layers);
  return RnnLmModel{std::move(vocab), std::move(params)};
}

RnnLmModel make_random_model(Vocabulary vocab, const ModelShape& shape, std::uint64_t seed, double scale) {
  RnnLmModel m = make_zero_model(std::move(vocab), shape);
  Rng rng(seed);
  for (auto t : m.params.tensors()) fill_uniform(t, rng, scale);
  const auto dh = static_cast<Eigen::Index>(shape.hidden_dim);
  for (auto& layer : m.params.layers) {
    layer.bias.setZero();
    layer.bias.segment(dh, dh).setOnes();
  }
  m.params.output_bias.setZero();
  return m;
}

RnnState zero_state(const RnnLmModel& model) {
  RnnState s;
  const auto dh = static_cast<Eigen::Index>(model.hidden_dim());
  s.hidden.assign(model.num_layers(), Vector::Zero(dh));
  s.cell.assign(model.num_layers(), Vector::Zero(dh));
  return s;
}

DropoutMask sample_dropout_mask(const RnnLmModel& model, double rate, Rng& rng) {
  const double keep = 1.0 - rate;
  auto draw = [&](Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    return v;
  };
  DropoutMask mask;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    mask.layer_inputs.push_back(draw(static_cast<Eigen::Index>(l == 0 ? model.input_dim() : model.hidden_dim())));
  }
  mask.output = draw(static_cast<Eigen::Index>(model.hidden_dim()));
  return mask;
}

StepOutput forward_step(const RnnLmModel& model, WordId word, const RnnState& state, const DropoutMask* mask) {
  const auto& p = model.params;
  if (word < 0 || word >= p.input_embeddings.cols()) {
    throw Error("word id " + std::to_string(word) + " outside the " + std::to_string(p.input_embeddings.cols()) +
                " explicit words");
  }
  const auto dh = static_cast<Eigen::Index>(model.hidden_dim());
  if (state.hidden.size() != p.layers.size() || state.cell.size() != p.layers.size()) {
    throw Error("state layer count does not match the model");
  }

  StepOutput out;
  out.state.hidden.resize(p.layers.size());
  out.state.cell.resize(p.layers.size());
  Vector x = p.input_embeddings.col(word);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const Vector& h_prev = state.hidden[l];
    const Vector& c_prev = state.cell[l];
    if (h_prev.size() != dh || c_prev.size() != dh) throw Error("state vector size does not match the model");
    if (mask) x = x.cwiseProduct(mask->layer_inputs[l]);
    const Vector z = layer.input_weights * x + layer.recurrent_weights * h_prev + layer.bias;
    const Vector i = sigmoid(z.segment(0, dh));
    const Vector f = sigmoid(z.segment(dh, dh));
    const Vector g = z.segment(2 * dh, dh).array().tanh().matrix();
    const Vector o = sigmoid(z.segment(3 * dh, dh));
    Vector c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    Vector h = o.cwiseProduct(c.array().tanh().matrix());
    x = h;
    out.state.hidden[l] = std::move(h);
    out.state.cell[l] = std::move(c);
  }
  if (mask) x = x.cwiseProduct(mask->output);
  out.logits = p.output_embeddings.transpose() * x + p.output_bias;
  return out;
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

Vector log_softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

std::vector<double> score_sentence(const RnnLmModel& model, std::span<const WordId> sentence) {
  if (sentence.empty()) throw Error("cannot score an empty sentence");
  std::vector<double> out;
  out.reserve(sentence.size() + 1);
  RnnState state = zero_state(model);
  WordId input = kBosId;
  for (std::size_t t = 0; t <= sentence.size(); ++t) {
    StepOutput step = forward_step(model, input, state);
    const WordId target = t < sentence.size() ? sentence[t] : kEosId;
    if (target < 0 || target >= step.logits.size()) throw Error("target id outside the explicit words");
    out.push_back(log_softmax(step.logits)[target]);
    state = std::move(step.state);
    input = target;
  }
  return out;
}

std::vector<std::vector<double>> score_sentences(const RnnLmModel& model,
                                                 std::span<const std::vector<WordId>> sentences,
                                                 std::size_t threads) {
  std::vector<std::vector<double>> out(sentences.size());
  threads = std::max<std::size_t>(1, std::min(threads, sentences.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < sentences.size(); ++i) out[i] = score_sentence(model, sentences[i]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < sentences.size(); i += threads) out[i] = score_sentence(model, sentences[i]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double perplexity(std::span<const double> log_probs) {
  if (log_probs.empty()) throw Error("perplexity of an empty set is undefined");
  double sum = 0.0;
  for (double lp : log_probs) sum += lp;
  return std::exp(-sum / static_cast<double>(log_probs.size()));
}

double PerplexityStats::perplexity() const {
  if (tokens == 0) throw Error("perplexity of an empty set is undefined");
  return std::exp(-log_prob_sum / static_cast<double>(tokens));
}

PerplexityStats corpus_perplexity(const RnnLmModel& model, const Corpus& corpus) {
  PerplexityStats stats;
  for (const auto& sentence : corpus) {
    const auto ids = model.vocab.encode(sentence, EncodeMode::kShortlistOnly);
    for (double lp : score_sentence(model, ids)) stats.add(lp);
  }
  return stats;
}

}  // namespace velm
