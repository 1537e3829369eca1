#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "velm/corpus.hpp"
#include "velm/nbest.hpp"
#include "velm/random.hpp"
#include "velm/rescore.hpp"

namespace velm {

struct GrammarConfig {
  std::size_t vocabulary_size = 500;  // function words + class members
  double zipf_exponent = 1.0;         // within-class frequency skew
  std::uint64_t seed = 7;
};

// Probabilistic template grammar: sentences are drawn from a fixed set of
// templates whose slots are word classes; class members are pseudo-words
// with Zipfian frequencies. Members of one class are interchangeable, so
// their distributional (and ideal LM) behavior coincides.
class TemplateGrammar {
 public:
  explicit TemplateGrammar(const GrammarConfig& config = {});

  Sentence sample(Rng& rng) const;
  // Sentences until at least `tokens` tokens were produced.
  Corpus sample_corpus(std::size_t tokens, Rng& rng) const;
  Corpus sample_sentences(std::size_t count, Rng& rng) const;

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::string>& content_words() const { return content_; }
  // Class name of a word ("function" for template literals); empty if unknown.
  std::string_view class_of(std::string_view word) const;

 private:
  struct WordClass {
    std::string name;
    std::vector<std::string> members;
    std::vector<double> cdf;
  };

  std::vector<WordClass> classes_;
  std::vector<std::vector<std::string>> templates_;  // "@k" = class k, otherwise literal
  std::vector<std::string> words_;
  std::vector<std::string> content_;
  std::unordered_map<std::string, std::string> class_of_;
};

struct NBestSynthesisConfig {
  std::size_t hypotheses = 50;
  std::size_t confusions_per_word = 3;
  double acoustic_scale = 10.0;     // size of per-word acoustic margins
  double confusion_margin = 1.0;    // mean margin of the true word over a confusion, in acoustic_scale units
  double margin_spread = 1.0;       // std. dev. of that margin
  double deletion_margin = 2.5;
  double insertion_margin = 2.5;
  double first_pass_lm_scale = 10.0;
  std::size_t search_beam = 400;    // acoustic k-best size before first-pass LM reordering
  std::uint64_t seed = 11;
};

struct SyntheticFixture {
  NBestList nbest;
  References refs;
};

// Simulates a first-pass recognizer on reference sentences. Each word may
// be confused with a few fixed sound-alike words, deleted, or followed by
// an inserted function word; per-word acoustic margins are random. The
// acoustically best `search_beam` distinct word strings are reranked with
// `first_pass_lm` (stored as the decoder lm_score) and the top
// `hypotheses` kept. Utterance ids are <prefix>-NNNN.
SyntheticFixture synthesize_nbest(const Corpus& references, const TemplateGrammar& grammar,
                                  const SentenceLm& first_pass_lm, const NBestSynthesisConfig& config,
                                  const std::string& prefix);

struct ToyExperimentConfig {
  GrammarConfig grammar;
  std::size_t train_tokens = 200000;
  std::size_t valid_sentences = 600;
  std::size_t dev_sentences = 100;
  std::size_t test_sentences = 150;
  int first_pass_order = 2;
  NBestSynthesisConfig nbest;
  std::uint64_t seed = 2024;
};

struct ToyExperimentData {
  Corpus train;
  Corpus valid;
  SyntheticFixture dev;
  SyntheticFixture test;
};

// Samples the corpora and builds dev/test n-best fixtures, using a KN
// model of the training corpus as the first-pass LM.
ToyExperimentData make_toy_experiment(const ToyExperimentConfig& config);

// Writes train.txt, valid.txt, {dev,test}.nbest and {dev,test}.ref.
void write_toy_experiment(const ToyExperimentData& data, const std::filesystem::path& dir);

}  // namespace velm
