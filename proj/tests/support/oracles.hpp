#pragma once

#include <map>
#include <string>
#include <vector>

#include "velm/rnnlm.hpp"

namespace velm::testing {

// Interpolated modified Kneser-Ney for order <= 2, coded straight from the
// formulas over strings. prob(w, "") is the unigram level, prob(w, u) the
// bigram level for context word u.
class BruteForceKn {
 public:
  BruteForceKn(const std::vector<std::vector<std::string>>& sentences, const std::vector<std::string>& vocabulary,
               int order);

  double prob(const std::string& word, const std::string& context = "") const;

  struct Discounts {
    double d1, d2, d3;
    bool fallback;
  };
  Discounts unigram_discounts() const { return uni_d_; }
  Discounts bigram_discounts() const { return bi_d_; }

 private:
  static Discounts discounts(const std::map<std::string, long>& counts);
  static double discount(const Discounts& d, long c);

  int order_;
  std::vector<std::string> predictable_;  // V without <s>
  std::map<std::string, long> uni_;       // continuation counts (raw when order 1)
  std::map<std::pair<std::string, std::string>, long> bi_;
  Discounts uni_d_{};
  Discounts bi_d_{};
};

// One LSTM step evaluated scalar by scalar in long double.
struct ScalarStep {
  std::vector<std::vector<long double>> hidden;
  std::vector<std::vector<long double>> cell;
  std::vector<long double> logits;
};

ScalarStep scalar_lstm_step(const RnnLmModel& model, WordId word, const std::vector<std::vector<long double>>& hidden,
                            const std::vector<std::vector<long double>>& cell);

// Minimal edit distance by memoized recursion on suffixes.
std::size_t brute_force_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace velm::testing
