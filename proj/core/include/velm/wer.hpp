#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "velm/nbest.hpp"

namespace velm {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_words = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  // 100 * errors / reference words. An empty reference gives 0 when there
  // are no errors and +inf otherwise.
  double wer_percent() const;

  EditCounts& operator+=(const EditCounts& o);
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

// Minimal unit-cost Levenshtein alignment. Among equally short alignments
// the backtrace prefers substitution, then insertion, then deletion.
EditCounts align_counts(std::span<const std::string> reference, std::span<const std::string> hypothesis);

struct WerResult {
  EditCounts total;
  std::map<std::string, EditCounts> per_utterance;
};

// Every hypothesis utterance needs a reference (velm::Error otherwise).
// References without a hypothesis are ignored.
WerResult compute_wer(const References& refs, const References& hyps);

}  // namespace velm
