#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "velm/corpus.hpp"
#include "velm/vocab.hpp"

namespace velm {

struct SkipGramConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  double subsample = 1e-3;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

// Word vectors keyed by word string, stored row-major (one row per word).
class WordEmbeddings {
 public:
  WordEmbeddings() = default;
  WordEmbeddings(std::vector<std::string> words, std::size_t dim, std::vector<double> values);

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const std::string> words() const { return words_; }

  std::optional<std::size_t> find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word).has_value(); }
  std::span<const double> vector(std::size_t row) const { return {values_.data() + row * dim_, dim_}; }
  // Throws UnknownWordError.
  std::span<const double> vector(std::string_view word) const;

  double norm(std::size_t row) const { return norms_[row]; }

  // Cosine similarity; 0 when either vector is zero. Throws UnknownWordError.
  double cosine(std::string_view a, std::string_view b) const;

  SkipGramConfig config;  // training metadata (defaults for loaded files)

 private:
  std::vector<std::string> words_;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> index_;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Skip-gram with negative sampling over every unique corpus token
// (min-count 1). Noise distribution is unigram^0.75, frequent words are
// subsampled with the usual word2vec keep probability, the effective
// window is drawn uniformly from 1..window and the learning rate decays
// linearly. Single-threaded and deterministic for a given seed.
WordEmbeddings train_skipgram(const Corpus& corpus, const SkipGramConfig& config);

struct Neighbor {
  WordId id;
  std::string word;
  double similarity;
};

// Ranks shortlist content words (reserved tokens, the target, and words
// without a vector excluded) by cosine similarity to `target`, descending,
// ties by ascending id, and returns the first k. Throws UnknownWordError
// if the target has no vector.
std::vector<Neighbor> nearest_in_shortlist(const WordEmbeddings& embeddings, std::string_view target,
                                           const Vocabulary& shortlist, std::size_t k);

// word2vec text format: "<count> <dim>" header, then "<word> v1 ... vdim".
void save_w2v_text(const WordEmbeddings& embeddings, std::ostream& out);
void save_w2v_text(const WordEmbeddings& embeddings, const std::filesystem::path& path);
WordEmbeddings load_w2v_text(std::istream& in, const std::string& source = "<stream>");
WordEmbeddings load_w2v_text(const std::filesystem::path& path);

}  // namespace velm
