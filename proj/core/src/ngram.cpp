#include "velm/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "velm/error.hpp"
#include "velm/logging.hpp"

namespace velm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using CountTable = std::unordered_map<std::vector<WordId>, std::size_t, NgramHash>;

struct ContextStats {
  std::size_t total = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t n3plus = 0;
};

// Keys in ascending id order so every pass over the tables is reproducible.
std::vector<std::vector<WordId>> sorted_keys(const CountTable& table) {
  std::vector<std::vector<WordId>> keys;
  keys.reserve(table.size());
  for (const auto& [k, _] : table) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace

NgramModel::NgramModel(Vocabulary vocab, int order) : vocab_(std::move(vocab)), order_(order) {
  if (order_ < 1) throw Error("n-gram order must be at least 1");
  tables_.resize(static_cast<std::size_t>(order_));
}

const NgramEntry* NgramModel::find(std::span<const WordId> ngram) const {
  if (ngram.empty() || ngram.size() > tables_.size()) return nullptr;
  const auto& t = tables_[ngram.size() - 1];
  auto it = t.find(std::vector<WordId>(ngram.begin(), ngram.end()));
  return it == t.end() ? nullptr : &it->second;
}

void NgramModel::set(std::vector<WordId> ngram, NgramEntry entry) {
  if (ngram.empty() || ngram.size() > tables_.size()) throw Error("n-gram length outside model order");
  tables_[ngram.size() - 1][std::move(ngram)] = entry;
}

double NgramModel::log_prob(WordId word, std::span<const WordId> context) const {
  const std::size_t len = std::min(context.size(), static_cast<std::size_t>(order_ - 1));
  const auto ctx = context.last(len);
  std::vector<WordId> key;
  key.reserve(len + 1);
  double backoff = 0.0;
  for (std::size_t n = len;; --n) {
    key.assign(ctx.end() - static_cast<std::ptrdiff_t>(n), ctx.end());
    key.push_back(word);
    if (const auto* e = find(key)) return backoff + e->log_prob;
    if (n == 0) return kNegInf;
    key.pop_back();
    if (const auto* e = find(key)) backoff += e->log_backoff;
  }
}

double NgramModel::prob(WordId word, std::span<const WordId> context) const {
  return std::exp(log_prob(word, context));
}

std::vector<WordId> NgramModel::encode_context(std::span<const std::string> context) const {
  std::vector<WordId> ids;
  ids.reserve(context.size());
  for (const auto& w : context) ids.push_back(vocab_.encode(w, EncodeMode::kFullVocabulary));
  return ids;
}

double NgramModel::prob(std::string_view word, std::span<const std::string> context) const {
  const auto ids = encode_context(context);
  return prob(vocab_.encode(word, EncodeMode::kFullVocabulary), ids);
}

KnDiscounts estimate_discounts(std::size_t n1, std::size_t n2, std::size_t n3, std::size_t n4) {
  KnDiscounts fallback{0.5, 0.5, 0.5, true};
  if (n1 == 0 || n2 == 0 || n3 == 0) return fallback;
  const double y = static_cast<double>(n1) / (static_cast<double>(n1) + 2.0 * static_cast<double>(n2));
  KnDiscounts d;
  d.d1 = 1.0 - 2.0 * y * static_cast<double>(n2) / static_cast<double>(n1);
  d.d2 = 2.0 - 3.0 * y * static_cast<double>(n3) / static_cast<double>(n2);
  d.d3 = 3.0 - 4.0 * y * static_cast<double>(n4) / static_cast<double>(n3);
  if (!(d.d1 > 0.0 && d.d1 <= 1.0 && d.d2 > 0.0 && d.d2 <= 2.0 && d.d3 > 0.0 && d.d3 <= 3.0)) {
    return fallback;
  }
  return d;
}

NgramModel train_kn(const Corpus& corpus, const Vocabulary& vocab, int order) {
  if (order < 1) throw Error("n-gram order must be at least 1");
  if (corpus.empty()) throw Error("cannot train an n-gram model on an empty corpus");
  const auto n_orders = static_cast<std::size_t>(order);

  // Raw counts of every k-gram, k <= order, in padded sentences.
  std::vector<CountTable> raw(n_orders);
  std::vector<WordId> seq;
  for (const auto& sentence : corpus) {
    seq.assign(1, kBosId);
    for (const auto& t : sentence) seq.push_back(vocab.encode(t, EncodeMode::kFullVocabulary));
    seq.push_back(kEosId);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      for (std::size_t n = 1; n <= n_orders && i + n <= seq.size(); ++n) {
        ++raw[n - 1][std::vector<WordId>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                         seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
      }
    }
  }

  // Adjusted counts: raw at the top order and for <s>-initial n-grams,
  // number of distinct left extensions otherwise.
  std::vector<CountTable> adjusted(n_orders);
  adjusted[n_orders - 1] = raw[n_orders - 1];
  for (std::size_t n = n_orders - 1; n >= 1; --n) {
    CountTable& adj = adjusted[n - 1];
    for (const auto& [key, count] : raw[n - 1]) {
      if (key.front() == kBosId) adj[key] = count;
    }
    for (const auto& [key, _] : raw[n]) {
      std::vector<WordId> suffix(key.begin() + 1, key.end());
      if (suffix.front() != kBosId) ++adj[suffix];
    }
  }
  adjusted[0].erase(std::vector<WordId>{kBosId});

  NgramModel model(vocab, order);
  std::vector<KnDiscounts> discounts(n_orders);

  for (std::size_t n = 1; n <= n_orders; ++n) {
    const CountTable& adj = adjusted[n - 1];
    std::size_t coc[5] = {0, 0, 0, 0, 0};
    for (const auto& [_, c] : adj) {
      if (c <= 4) ++coc[c];
    }
    KnDiscounts d = estimate_discounts(coc[1], coc[2], coc[3], coc[4]);
    if (d.fallback) {
      log_warning("order " + std::to_string(n) + ": degenerate counts-of-counts (n1=" + std::to_string(coc[1]) +
                  ", n2=" + std::to_string(coc[2]) + ", n3=" + std::to_string(coc[3]) + ", n4=" +
                  std::to_string(coc[4]) + "); using a single discount of 0.5");
    }
    discounts[n - 1] = d;

    std::map<std::vector<WordId>, ContextStats> contexts;
    for (const auto& [key, c] : adj) {
      auto& s = contexts[std::vector<WordId>(key.begin(), key.end() - 1)];
      s.total += c;
      if (c == 1) ++s.n1;
      else if (c == 2) ++s.n2;
      else ++s.n3plus;
    }
    auto gamma = [&](const ContextStats& s) {
      return (d.d1 * static_cast<double>(s.n1) + d.d2 * static_cast<double>(s.n2) +
              d.d3 * static_cast<double>(s.n3plus)) /
             static_cast<double>(s.total);
    };

    if (n == 1) {
      const ContextStats& s = contexts[{}];
      const double uniform = gamma(s) / static_cast<double>(vocab.size() - 1);
      model.set({kBosId}, {kNegInf, 0.0});
      for (std::size_t w = 1; w < vocab.size(); ++w) {
        std::vector<WordId> key{static_cast<WordId>(w)};
        auto it = adj.find(key);
        const std::size_t c = it == adj.end() ? 0 : it->second;
        const double alpha = std::max(static_cast<double>(c) - d(c), 0.0) / static_cast<double>(s.total);
        model.set(std::move(key), {std::log(alpha + uniform), 0.0});
      }
      continue;
    }

    std::vector<std::pair<std::vector<WordId>, double>> probs;
    probs.reserve(adj.size());
    for (const auto& key : sorted_keys(adj)) {
      const std::size_t c = adj.at(key);
      const std::vector<WordId> ctx(key.begin(), key.end() - 1);
      const ContextStats& s = contexts.at(ctx);
      const double alpha = std::max(static_cast<double>(c) - d(c), 0.0) / static_cast<double>(s.total);
      const double lower = model.prob(key.back(), std::span<const WordId>(ctx).subspan(1));
      probs.emplace_back(key, std::log(alpha + gamma(s) * lower));
    }
    for (auto& [key, lp] : probs) model.set(std::move(key), {lp, 0.0});
    for (const auto& [ctx, s] : contexts) {
      const NgramEntry* e = model.find(ctx);
      if (!e) throw Error("internal: context without lower-order entry");
      model.set(ctx, {e->log_prob, std::log(gamma(s))});
    }
  }
  model.set_discounts(std::move(discounts));
  return model;
}

}  // namespace velm
