#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "velm/corpus.hpp"

namespace velm {

struct Hypothesis {
  Sentence words;             // may be empty (silence)
  double acoustic_score = 0;  // natural log
  double lm_score = 0;        // natural log; replaced by rescoring
  std::size_t rank = 0;       // position in the decoder's original list
};

// Utterance id -> hypotheses in list order (for decoder output: best first).
using NBestList = std::map<std::string, std::vector<Hypothesis>>;

// Utterance id -> reference transcript.
using References = std::map<std::string, Sentence>;

// One hypothesis per line: utt-id TAB rank TAB acoustic TAB lm TAB words.
// The words field may be empty but must be present. List order is the
// file order within each utterance; (utt, rank) pairs must be unique.
NBestList read_nbest(std::istream& in, const std::string& source = "<stream>");
NBestList read_nbest(const std::filesystem::path& path);
void write_nbest(const NBestList& list, std::ostream& out);
void write_nbest(const NBestList& list, const std::filesystem::path& path);

// One reference per line: utt-id TAB words.
References read_references(std::istream& in, const std::string& source = "<stream>");
References read_references(const std::filesystem::path& path);
void write_references(const References& refs, std::ostream& out);
void write_references(const References& refs, const std::filesystem::path& path);

// First hypothesis of every utterance.
References one_best(const NBestList& list);

}  // namespace velm
