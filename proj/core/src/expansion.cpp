#include "velm/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_set>

#include "velm/error.hpp"

namespace velm {

std::vector<std::string> extract_oos_words(const NBestList& nbest, const Vocabulary& vocab, std::size_t n) {
  if (n == 0) throw Error("n-best depth for OOS extraction must be at least 1");
  std::set<std::string> found;
  for (const auto& [_, hyps] : nbest) {
    for (std::size_t r = 0; r < std::min(n, hyps.size()); ++r) {
      for (const auto& w : hyps[r].words) {
        if (!vocab.in_shortlist(w)) found.insert(w);
      }
    }
  }
  return {found.begin(), found.end()};
}

std::vector<std::string> extract_oos_words(const References& refs, const Vocabulary& vocab) {
  std::set<std::string> found;
  for (const auto& [_, words] : refs) {
    for (const auto& w : words) {
      if (!vocab.in_shortlist(w)) found.insert(w);
    }
  }
  return {found.begin(), found.end()};
}

Vector synthesize_vector(std::span<const Vector> vectors, std::span<const double> weights) {
  if (vectors.empty()) throw Error("cannot synthesize a vector from no candidates");
  if (vectors.size() != weights.size()) throw Error("candidate and weight counts differ");
  double total = 0.0;
  for (double m : weights) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw Error("candidate weights must be finite and non-negative");
    total += m;
  }
  if (total <= 0.0) throw Error("candidate weights are all zero");
  Vector out = Vector::Zero(vectors.front().size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != out.size()) throw Error("candidate vectors have different dimensions");
    out += (weights[i] / total) * vectors[i];
  }
  return out;
}

std::string_view to_string(SkipReason reason) {
  switch (reason) {
    case SkipReason::kNotInEmbeddings: return "absent from embedding vocabulary";
    case SkipReason::kAlreadyInShortlist: return "already in shortlist";
    case SkipReason::kNoCandidates: return "no candidates";
  }
  return "unknown";
}

CandidateSelection select_candidates(const WordEmbeddings& embeddings, const Vocabulary& shortlist,
                                     std::span<const std::string> new_words, const CandidateOptions& options) {
  CandidateSelection out;
  for (const auto& word : new_words) {
    if (shortlist.in_shortlist(word)) {
      out.skipped.push_back({word, SkipReason::kAlreadyInShortlist});
      continue;
    }
    if (!embeddings.contains(word)) {
      out.skipped.push_back({word, SkipReason::kNotInEmbeddings});
      continue;
    }
    const auto neighbors = nearest_in_shortlist(embeddings, word, shortlist, options.k);
    if (neighbors.empty()) {
      out.skipped.push_back({word, SkipReason::kNoCandidates});
      continue;
    }
    PlanEntry entry{word, {}};
    double weight_sum = 0.0;
    for (const auto& nb : neighbors) {
      const double w = options.weighted ? std::max(nb.similarity, 0.0) : 1.0;
      weight_sum += w;
      entry.candidates.push_back({nb.id, w, nb.similarity});
    }
    if (weight_sum <= 0.0) {
      for (auto& c : entry.candidates) c.weight = 1.0;
    }
    out.plan.entries.push_back(std::move(entry));
  }
  return out;
}

ExpansionResult expand_model(const RnnLmModel& model, const CandidatePlan& plan) {
  model.check_consistent();
  const auto n_old = static_cast<Eigen::Index>(model.explicit_size());
  const auto n_new = static_cast<Eigen::Index>(plan.entries.size());

  std::vector<std::string> new_words;
  std::unordered_set<std::string> seen;
  for (const auto& e : plan.entries) {
    if (!seen.insert(e.word).second) throw Error("duplicate new word '" + e.word + "' in expansion plan");
    if (model.vocab.in_shortlist(e.word)) throw Error("word '" + e.word + "' is already modeled explicitly");
    if (e.candidates.empty()) throw Error("word '" + e.word + "' has no candidates");
    for (const auto& c : e.candidates) {
      if (c.id < 0 || c.id >= n_old) {
        throw Error("candidate id " + std::to_string(c.id) + " for '" + e.word + "' outside the explicit words");
      }
    }
    new_words.push_back(e.word);
  }

  ExpansionResult result{RnnLmModel{model.vocab.with_promoted(new_words), {}}, {}};
  const auto& src = model.params;
  auto& dst = result.model.params;
  dst.layers = src.layers;
  dst.input_embeddings.resize(src.input_embeddings.rows(), n_old + n_new);
  dst.output_embeddings.resize(src.output_embeddings.rows(), n_old + n_new);
  dst.output_bias.resize(n_old + n_new);
  dst.input_embeddings.leftCols(n_old) = src.input_embeddings;
  dst.output_embeddings.leftCols(n_old) = src.output_embeddings;
  dst.output_bias.head(n_old) = src.output_bias;

  auto& report = result.report;
  for (Eigen::Index j = 0; j < n_new; ++j) {
    const auto& entry = plan.entries[static_cast<std::size_t>(j)];
    std::vector<Vector> s_cols, u_cols, biases;
    std::vector<double> weights;
    for (const auto& c : entry.candidates) {
      s_cols.emplace_back(src.input_embeddings.col(c.id));
      u_cols.emplace_back(src.output_embeddings.col(c.id));
      biases.emplace_back(Vector::Constant(1, src.output_bias[c.id]));
      weights.push_back(c.weight);
    }
    dst.input_embeddings.col(n_old + j) = synthesize_vector(s_cols, weights);
    dst.output_embeddings.col(n_old + j) = synthesize_vector(u_cols, weights);
    dst.output_bias[n_old + j] = synthesize_vector(biases, weights)[0];

    ExpandedWord ew{entry.word, static_cast<WordId>(n_old + j), entry.candidates, {}};
    for (const auto& c : entry.candidates) ew.candidate_words.push_back(model.vocab.decode(c.id));
    report.expanded.push_back(std::move(ew));
  }
  report.explicit_before = static_cast<std::size_t>(n_old);
  report.explicit_after = static_cast<std::size_t>(n_old + n_new);
  report.input_dim = model.input_dim();
  report.hidden_dim = model.hidden_dim();
  report.num_layers = model.num_layers();
  result.model.check_consistent();
  return result;
}

ExpansionResult expand_vocabulary(const RnnLmModel& model, const WordEmbeddings& embeddings,
                                  std::span<const std::string> new_words, const CandidateOptions& options) {
  std::unordered_set<std::string> unique;
  for (const auto& w : new_words) {
    if (!unique.insert(w).second) throw Error("duplicate new word '" + w + "'");
  }
  auto selection = select_candidates(embeddings, model.vocab, new_words, options);
  auto result = expand_model(model, selection.plan);
  result.report.skipped = std::move(selection.skipped);
  return result;
}

std::string report_to_json(const ExpansionReport& report) {
  nlohmann::ordered_json j;
  j["requested"] = report.requested();
  j["expanded_count"] = report.expanded.size();
  j["skipped_count"] = report.skipped.size();
  j["explicit_words_before"] = report.explicit_before;
  j["explicit_words_after"] = report.explicit_after;
  j["input_dim"] = report.input_dim;
  j["hidden_dim"] = report.hidden_dim;
  j["layers"] = report.num_layers;
  auto& expanded = j["expanded"] = nlohmann::ordered_json::array();
  for (const auto& e : report.expanded) {
    nlohmann::ordered_json item;
    item["word"] = e.word;
    item["id"] = e.id;
    auto& cands = item["candidates"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < e.candidates.size(); ++i) {
      nlohmann::ordered_json c;
      c["word"] = e.candidate_words[i];
      c["weight"] = e.candidates[i].weight;
      if (!std::isnan(e.candidates[i].similarity)) c["similarity"] = e.candidates[i].similarity;
      cands.push_back(std::move(c));
    }
    expanded.push_back(std::move(item));
  }
  auto& skipped = j["skipped"] = nlohmann::ordered_json::array();
  for (const auto& s : report.skipped) skipped.push_back({{"word", s.word}, {"reason", to_string(s.reason)}});
  return j.dump(2);
}

UnkPolicy parse_unk_policy(std::string_view name) {
  if (name == "shortlist") return UnkPolicy::kShortlistOnly;
  if (name == "uniform") return UnkPolicy::kUniform;
  if (name == "ngram") return UnkPolicy::kNgram;
  throw Error("unknown <unk> policy '" + std::string(name) + "' (expected shortlist, uniform or ngram)");
}

std::string_view to_string(UnkPolicy policy) {
  switch (policy) {
    case UnkPolicy::kShortlistOnly: return "shortlist";
    case UnkPolicy::kUniform: return "uniform";
    case UnkPolicy::kNgram: return "ngram";
  }
  return "unknown";
}

double SentenceScore::in_vocab_total() const {
  double s = 0.0;
  for (double lp : log_probs) s += lp;
  return s;
}

FullVocabScorer::FullVocabScorer(const RnnLmModel& model, UnkPolicy policy, const NgramModel* ngram,
                                 const Vocabulary* full_vocab)
    : model_(model), policy_(policy), ngram_(ngram) {
  if (policy_ == UnkPolicy::kNgram && !ngram_) throw Error("the ngram <unk> policy needs an n-gram model");
  const Vocabulary& v = full_vocab ? *full_vocab : model.vocab;
  for (const auto& w : model.vocab.words()) {
    if (model.vocab.in_shortlist(w)) full_.emplace(w, true);
  }
  for (const auto& w : v.words()) {
    if (full_.emplace(w, false).second) oos_words_.push_back(w);
  }
  if (ngram_) {
    for (const auto& w : oos_words_) {
      oos_ngram_ids_.push_back(ngram_->vocabulary().encode(w, EncodeMode::kFullVocabulary));
    }
  }
}

bool FullVocabScorer::in_full_vocabulary(std::string_view word) const { return full_.count(std::string(word)) > 0; }

double FullVocabScorer::oos_ngram_mass(std::span<const std::string> context) const {
  const auto ctx = ngram_->encode_context(context);
  double mass = 0.0;
  for (WordId id : oos_ngram_ids_) mass += ngram_->prob(id, ctx);
  return mass;
}

double FullVocabScorer::prob(const Vector& probs, std::string_view word, std::span<const std::string> context) const {
  auto it = full_.find(std::string(word));
  if (it == full_.end()) throw UnknownWordError(std::string(word), "full vocabulary");
  if (it->second) return probs[*model_.vocab.find(word)];
  const double unk = probs[kUnkId];
  switch (policy_) {
    case UnkPolicy::kShortlistOnly:
      return unk;
    case UnkPolicy::kUniform:
      return unk / static_cast<double>(oos_words_.size() + 1);
    case UnkPolicy::kNgram: {
      const auto ctx = ngram_->encode_context(context);
      const double p = ngram_->prob(ngram_->vocabulary().encode(word, EncodeMode::kFullVocabulary), ctx);
      return unk * p / oos_ngram_mass(context);
    }
  }
  return unk;
}

double FullVocabScorer::residual_prob(const Vector& probs, std::span<const std::string> context) const {
  const double unk = probs[kUnkId];
  switch (policy_) {
    case UnkPolicy::kShortlistOnly:
      return unk;
    case UnkPolicy::kUniform:
      return unk / static_cast<double>(oos_words_.size() + 1);
    case UnkPolicy::kNgram: {
      const auto ctx = ngram_->encode_context(context);
      return unk * ngram_->prob(kUnkId, ctx);
    }
  }
  return unk;
}

SentenceScore FullVocabScorer::score(const Sentence& words) const {
  SentenceScore out;
  out.log_probs.reserve(words.size() + 1);
  std::vector<std::string> history{std::string(kBos)};
  history.reserve(words.size() + 2);
  RnnState state = zero_state(model_);
  WordId input = kBosId;
  for (std::size_t t = 0; t <= words.size(); ++t) {
    StepOutput step = forward_step(model_, input, state);
    const Vector probs = softmax(step.logits);
    const std::string target = t < words.size() ? words[t] : std::string(kEos);
    if (in_full_vocabulary(target)) {
      out.log_probs.push_back(std::log(prob(probs, target, history)));
    } else {
      ++out.skipped;
      out.skipped_log_prob += std::log(residual_prob(probs, history));
    }
    state = std::move(step.state);
    input = model_.vocab.encode(target, EncodeMode::kShortlistOnly);
    history.push_back(target);
  }
  return out;
}

}  // namespace velm
