#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "velm/corpus.hpp"
#include "velm/vocab.hpp"

namespace velm {

// Natural-log probability and backoff weight of one stored n-gram.
struct NgramEntry {
  double log_prob = 0.0;
  double log_backoff = 0.0;
};

// Count-dependent discounts D1, D2, D3+ for one order.
struct KnDiscounts {
  double d1 = 0.5;
  double d2 = 0.5;
  double d3 = 0.5;
  bool fallback = false;

  double operator()(std::size_t count) const {
    return count == 0 ? 0.0 : count == 1 ? d1 : count == 2 ? d2 : d3;
  }
};

struct NgramHash {
  std::size_t operator()(const std::vector<WordId>& key) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (WordId w : key) {
      h ^= static_cast<std::uint32_t>(w);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Backoff n-gram model over a fixed vocabulary. Lookup follows the ARPA
// recursion: the longest stored n-gram wins, otherwise the backoff weights
// of the skipped contexts multiply into the lower-order estimate. Every
// vocabulary word except <s> carries a unigram entry, so all predictable
// words receive positive probability.
class NgramModel {
 public:
  using Table = std::unordered_map<std::vector<WordId>, NgramEntry, NgramHash>;

  NgramModel(Vocabulary vocab, int order);

  int order() const { return order_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  // context is oldest-first; only the last order()-1 words are consulted.
  double log_prob(WordId word, std::span<const WordId> context) const;
  double prob(WordId word, std::span<const WordId> context) const;

  // String convenience; words outside the vocabulary map to <unk>.
  double prob(std::string_view word, std::span<const std::string> context) const;
  std::vector<WordId> encode_context(std::span<const std::string> context) const;

  // Entries of length n (1-based order).
  const Table& table(int n) const { return tables_.at(static_cast<std::size_t>(n - 1)); }
  const NgramEntry* find(std::span<const WordId> ngram) const;
  void set(std::vector<WordId> ngram, NgramEntry entry);

  // Discounts used at each order during training (empty for imported models).
  const std::vector<KnDiscounts>& discounts() const { return discounts_; }
  void set_discounts(std::vector<KnDiscounts> d) { discounts_ = std::move(d); }

 private:
  Vocabulary vocab_;
  int order_;
  std::vector<Table> tables_;
  std::vector<KnDiscounts> discounts_;
};

// Interpolated modified Kneser-Ney. Sentences are padded with <s> ... </s>;
// tail words are modeled as themselves and words absent from vocab as
// <unk>. Lower orders use continuation counts except for n-grams starting
// with <s>, which keep raw counts. The unigram level interpolates with the
// uniform distribution over V \ {<s>}.
NgramModel train_kn(const Corpus& corpus, const Vocabulary& vocab, int order);

// Chen-Goodman discount estimate from counts-of-counts n1..n4. Falls back
// to a single 0.5 discount (and flags it) when the estimate is undefined or
// leaves the range 0 < Dk <= k.
KnDiscounts estimate_discounts(std::size_t n1, std::size_t n2, std::size_t n3, std::size_t n4);

// ARPA text format (log10). Import builds its vocabulary from the
// reserved tokens followed by the unigram section in file order; the whole
// vocabulary counts as shortlist.
void export_arpa(const NgramModel& model, std::ostream& out);
void export_arpa(const NgramModel& model, const std::filesystem::path& path);
NgramModel import_arpa(std::istream& in, const std::string& source = "<stream>");
NgramModel import_arpa(const std::filesystem::path& path);

}  // namespace velm
