#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "velm/nbest.hpp"
#include "velm/wer.hpp"

namespace velm {

struct RescoreConfig {
  double lm_scale = 10.0;
  double word_insertion_penalty = 0.0;
  std::size_t threads = 1;  // utterances are independent
};

// Total natural-log probability of a word sequence (</s> included).
// Must be safe to call concurrently when threads > 1.
using SentenceLm = std::function<double(const Sentence&)>;

// LM log-probabilities with the same shape as an n-best list.
using LmScores = std::map<std::string, std::vector<double>>;

struct LmScoreResult {
  LmScores scores;
  // Utterances whose LM evaluation threw: utt -> message. They keep their
  // decoder LM scores.
  std::map<std::string, std::string> failures;
};

LmScoreResult compute_lm_scores(const NBestList& list, const SentenceLm& lm, std::size_t threads = 1);

double combined_score(const Hypothesis& h, double lm_log_prob, double lm_scale, double word_insertion_penalty);

// Orders every utterance by acoustic + lm_scale * lm + penalty * |words|,
// descending, with ties kept in their input order. lm_score fields are
// replaced by the supplied scores.
NBestList rerank(const NBestList& list, const LmScores& scores, double lm_scale, double word_insertion_penalty);

struct RescoreResult {
  NBestList list;
  std::map<std::string, std::string> failures;
};

// compute_lm_scores + rerank. An utterance whose LM evaluation fails is
// reranked with its original decoder LM scores and reported in failures.
RescoreResult rescore(const NBestList& list, const SentenceLm& lm, const RescoreConfig& config);

struct TuneGrid {
  std::vector<double> lm_scales{2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  std::vector<double> penalties{-1.0, -0.5, 0.0, 0.5, 1.0};
};

struct TunePoint {
  double lm_scale = 0.0;
  double penalty = 0.0;
  EditCounts counts;
};

struct TuneResult {
  TunePoint best;  // lowest WER; ties go to the earliest grid point
  std::vector<TunePoint> grid;
};

// Exhaustive grid search over (scale, penalty), scales outermost.
TuneResult tune(const NBestList& list, const LmScores& scores, const References& refs, const TuneGrid& grid);

}  // namespace velm
