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

namespace velm {

using WordId = std::int32_t;

inline constexpr WordId kBosId = 0;
inline constexpr WordId kEosId = 1;
inline constexpr WordId kUnkId = 2;
inline constexpr std::size_t kReservedCount = 3;

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";

inline bool is_reserved(WordId id) { return id >= 0 && id < static_cast<WordId>(kReservedCount); }

enum class EncodeMode {
  // Words outside the shortlist collapse to <unk>.
  kShortlistOnly,
  // Tail words keep their own id; only words absent from V become <unk>.
  kFullVocabulary,
};

// Ordered word <-> id map. Ids [0, shortlist_size) form the explicitly
// modeled shortlist; the rest is the tail of the full vocabulary.
// Ids 0/1/2 are always <s>, </s>, <unk>.
class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();

  // Validates reserved positions, uniqueness and shortlist bounds.
  Vocabulary(std::vector<std::string> words, std::size_t shortlist_size);

  std::size_t size() const { return words_.size(); }
  std::size_t shortlist_size() const { return shortlist_size_; }
  std::size_t tail_size() const { return words_.size() - shortlist_size_; }
  std::span<const std::string> words() const { return words_; }

  std::optional<WordId> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  bool in_shortlist(WordId id) const { return id >= 0 && static_cast<std::size_t>(id) < shortlist_size_; }
  bool in_shortlist(std::string_view token) const;

  WordId encode(std::string_view token, EncodeMode mode) const;
  std::vector<WordId> encode(const Sentence& sentence, EncodeMode mode) const;

  // Throws velm::Error for ids outside [0, size()).
  const std::string& decode(WordId id) const;

  // A vocabulary whose shortlist is extended by `promoted` (in the given
  // order) directly after the current shortlist. Promoted words taken from
  // the tail keep their relative order elsewhere; unseen words join V.
  // Throws if a promoted word is already in the shortlist or repeated.
  Vocabulary with_promoted(std::span<const std::string> promoted) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.shortlist_size_ == b.shortlist_size_ && a.words_ == b.words_;
  }

 private:
  std::vector<std::string> words_;
  std::size_t shortlist_size_ = kReservedCount;
  std::unordered_map<std::string, WordId> index_;
};

// Ranks corpus words by descending frequency (ties: ascending byte order).
// The top shortlist_size - 3 become the shortlist after the reserved tokens;
// the next full_size - shortlist_size form the tail. Fewer unique words than
// requested simply yields a smaller vocabulary.
Vocabulary build_vocabulary(const Corpus& corpus, std::size_t shortlist_size, std::size_t full_size);

// File format: "#shortlist=<n>" then one token per line (line index = id).
void write_vocabulary(const Vocabulary& vocab, std::ostream& out);
void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary read_vocabulary(std::istream& in, const std::string& source = "<stream>");
Vocabulary read_vocabulary(const std::filesystem::path& path);

}  // namespace velm
