#include "velm/wer.hpp"

#include <limits>
#include <vector>

#include "velm/error.hpp"

namespace velm {

double EditCounts::wer_percent() const {
  if (reference_words == 0) return errors() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return 100.0 * static_cast<double>(errors()) / static_cast<double>(reference_words);
}

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_words += o.reference_words;
  return *this;
}

EditCounts align_counts(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  const std::size_t n = reference.size();
  const std::size_t m = hypothesis.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }

  EditCounts c;
  c.reference_words = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = reference[i - 1] == hypothesis[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

WerResult compute_wer(const References& refs, const References& hyps) {
  WerResult r;
  for (const auto& [utt, hyp] : hyps) {
    auto it = refs.find(utt);
    if (it == refs.end()) throw Error("no reference for utterance " + utt);
    const EditCounts c = align_counts(it->second, hyp);
    r.per_utterance.emplace(utt, c);
    r.total += c;
  }
  return r;
}

}  // namespace velm
