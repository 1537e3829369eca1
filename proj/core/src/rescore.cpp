#include "velm/rescore.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <thread>

#include "velm/error.hpp"

namespace velm {

LmScoreResult compute_lm_scores(const NBestList& list, const SentenceLm& lm, std::size_t threads) {
  std::vector<const std::pair<const std::string, std::vector<Hypothesis>>*> utts;
  for (const auto& entry : list) utts.push_back(&entry);
  std::vector<std::vector<double>> scores(utts.size());
  std::vector<std::string> errors(utts.size());

  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t u = first; u < utts.size(); u += stride) {
      try {
        std::vector<double> s;
        for (const auto& h : utts[u]->second) s.push_back(lm(h.words));
        scores[u] = std::move(s);
      } catch (const std::exception& e) {
        errors[u] = e.what();
        if (errors[u].empty()) errors[u] = "language model failure";
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, utts.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
  }

  LmScoreResult out;
  for (std::size_t u = 0; u < utts.size(); ++u) {
    const auto& [utt, hyps] = *utts[u];
    if (!errors[u].empty()) {
      out.failures.emplace(utt, errors[u]);
      std::vector<double> original;
      for (const auto& h : hyps) original.push_back(h.lm_score);
      out.scores.emplace(utt, std::move(original));
    } else {
      out.scores.emplace(utt, std::move(scores[u]));
    }
  }
  return out;
}

double combined_score(const Hypothesis& h, double lm_log_prob, double lm_scale, double word_insertion_penalty) {
  return h.acoustic_score + lm_scale * lm_log_prob + word_insertion_penalty * static_cast<double>(h.words.size());
}

NBestList rerank(const NBestList& list, const LmScores& scores, double lm_scale, double word_insertion_penalty) {
  NBestList out;
  for (const auto& [utt, hyps] : list) {
    auto it = scores.find(utt);
    if (it == scores.end() || it->second.size() != hyps.size()) {
      throw Error("LM scores missing or misshapen for utterance " + utt);
    }
    std::vector<double> combined(hyps.size());
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      combined[i] = combined_score(hyps[i], it->second[i], lm_scale, word_insertion_penalty);
    }
    std::vector<std::size_t> order(hyps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return combined[a] > combined[b]; });
    auto& dst = out[utt];
    for (std::size_t i : order) {
      Hypothesis h = hyps[i];
      h.lm_score = it->second[i];
      dst.push_back(std::move(h));
    }
  }
  return out;
}

RescoreResult rescore(const NBestList& list, const SentenceLm& lm, const RescoreConfig& config) {
  LmScoreResult scored = compute_lm_scores(list, lm, config.threads);
  return {rerank(list, scored.scores, config.lm_scale, config.word_insertion_penalty), std::move(scored.failures)};
}

TuneResult tune(const NBestList& list, const LmScores& scores, const References& refs, const TuneGrid& grid) {
  if (grid.lm_scales.empty() || grid.penalties.empty()) throw Error("tuning grid is empty");
  TuneResult result;
  bool have_best = false;
  for (double scale : grid.lm_scales) {
    for (double penalty : grid.penalties) {
      const EditCounts counts = compute_wer(refs, one_best(rerank(list, scores, scale, penalty))).total;
      TunePoint p{scale, penalty, counts};
      if (!have_best || counts.errors() < result.best.counts.errors()) {
        result.best = p;
        have_best = true;
      }
      result.grid.push_back(p);
    }
  }
  return result;
}

}  // namespace velm
