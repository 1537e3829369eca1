#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "velm/nbest.hpp"
#include "velm/ngram.hpp"
#include "velm/rnnlm.hpp"
#include "velm/skipgram.hpp"

namespace velm {

// Unique tokens of the first n hypotheses of every utterance that are not
// in the shortlist, sorted by byte order.
std::vector<std::string> extract_oos_words(const NBestList& nbest, const Vocabulary& vocab, std::size_t n = 1);

// Same, from reference transcripts.
std::vector<std::string> extract_oos_words(const References& refs, const Vocabulary& vocab);

// Weighted mean sum_i (m_i / sum_j m_j) v_i. Equal weights give the plain
// mean; a single candidate is reproduced exactly. Throws on an empty
// input, mismatched lengths or dimensions, negative weights, or a zero
// weight sum.
Vector synthesize_vector(std::span<const Vector> vectors, std::span<const double> weights);

struct Candidate {
  WordId id = 0;  // explicit-word id in the model being expanded
  double weight = 1.0;
  double similarity = std::numeric_limits<double>::quiet_NaN();
};

struct PlanEntry {
  std::string word;
  std::vector<Candidate> candidates;
};

// New words in the order their columns will be appended.
struct CandidatePlan {
  std::vector<PlanEntry> entries;
};

enum class SkipReason { kNotInEmbeddings, kAlreadyInShortlist, kNoCandidates };
std::string_view to_string(SkipReason reason);

struct SkippedWord {
  std::string word;
  SkipReason reason;
};

struct ExpandedWord {
  std::string word;
  WordId id;
  std::vector<Candidate> candidates;
  std::vector<std::string> candidate_words;
};

struct ExpansionReport {
  std::vector<ExpandedWord> expanded;
  std::vector<SkippedWord> skipped;
  std::size_t explicit_before = 0;
  std::size_t explicit_after = 0;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_layers = 0;

  std::size_t requested() const { return expanded.size() + skipped.size(); }
};

struct CandidateOptions {
  std::size_t k = 8;
  // Weigh candidates by max(cosine, 0) instead of equally. If every
  // similarity is non-positive the candidates fall back to equal weights.
  bool weighted = false;
};

struct CandidateSelection {
  CandidatePlan plan;
  std::vector<SkippedWord> skipped;
};

// Picks the top-k most similar shortlist words for each requested word.
// Words without a vector, already in the shortlist, or left without any
// candidate are skipped rather than failing the whole selection.
CandidateSelection select_candidates(const WordEmbeddings& embeddings, const Vocabulary& shortlist,
                                     std::span<const std::string> new_words, const CandidateOptions& options);

struct ExpansionResult {
  RnnLmModel model;
  ExpansionReport report;
};

// Appends one synthesized column to S and U (and one bias entry) per plan
// entry, using the same candidates and weights for both matrices. LSTM
// parameters and existing columns are copied unchanged; the input model
// is not modified. Throws on duplicate words, words already explicit,
// empty candidate lists, or candidate ids out of range.
ExpansionResult expand_model(const RnnLmModel& model, const CandidatePlan& plan);

// select_candidates followed by expand_model; the report also lists the
// selection's skipped words.
ExpansionResult expand_vocabulary(const RnnLmModel& model, const WordEmbeddings& embeddings,
                                  std::span<const std::string> new_words, const CandidateOptions& options);

std::string report_to_json(const ExpansionReport& report);

// How probability is assigned to words outside the explicit set.
enum class UnkPolicy {
  kShortlistOnly,  // P(<unk>|h) itself
  kUniform,        // P(<unk>|h) / (|V \ V_explicit| + 1)
  kNgram,          // P(<unk>|h) * P_N(w|ctx) / sum_{w' not explicit} P_N(w'|ctx)
};

UnkPolicy parse_unk_policy(std::string_view name);
std::string_view to_string(UnkPolicy policy);

struct SentenceScore {
  std::vector<double> log_probs;  // one per predicted in-vocabulary token, </s> last
  std::size_t skipped = 0;        // tokens outside V, not in log_probs
  double skipped_log_prob = 0.0;  // their residual-share log-probability

  double in_vocab_total() const;
  // in_vocab_total() + skipped_log_prob; used to rank hypotheses.
  double total() const { return in_vocab_total() + skipped_log_prob; }
};

// Full-vocabulary probabilities from a (possibly expanded) shortlist model.
// V is `full_vocab` (or the model's own vocabulary) plus every explicit
// word. The scorer keeps references; the model, n-gram and vocabulary must
// outlive it. All member functions are const and safe to call
// concurrently.
class FullVocabScorer {
 public:
  FullVocabScorer(const RnnLmModel& model, UnkPolicy policy, const NgramModel* ngram = nullptr,
                  const Vocabulary* full_vocab = nullptr);

  UnkPolicy policy() const { return policy_; }
  std::size_t oos_count() const { return oos_words_.size(); }
  const std::vector<std::string>& oos_words() const { return oos_words_; }
  bool in_full_vocabulary(std::string_view word) const;

  // P~(word | h) where `probs` is the softmax output for history h and
  // `context` the preceding words, oldest first, beginning with <s>.
  // Throws UnknownWordError for words outside V.
  double prob(const Vector& probs, std::string_view word, std::span<const std::string> context) const;

  // Share of P(<unk>|h) given to a token outside V when ranking
  // hypotheses: the uniform policy's residual slot, P_N(<unk>|ctx) for the
  // n-gram policy, all of it for shortlist-only.
  double residual_prob(const Vector& probs, std::span<const std::string> context) const;

  // Scores <s> words </s>; an empty sentence predicts only </s>.
  SentenceScore score(const Sentence& words) const;

 private:
  double oos_ngram_mass(std::span<const std::string> context) const;

  const RnnLmModel& model_;
  UnkPolicy policy_;
  const NgramModel* ngram_;
  std::vector<std::string> oos_words_;
  std::vector<WordId> oos_ngram_ids_;
  std::unordered_map<std::string, bool> full_;  // word -> explicit?
};

}  // namespace velm
