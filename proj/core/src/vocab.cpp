#include "velm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_set>

#include "velm/error.hpp"

namespace velm {
namespace {

std::vector<std::string> reserved_words() {
  return {std::string(kBos), std::string(kEos), std::string(kUnk)};
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(reserved_words(), kReservedCount) {}

Vocabulary::Vocabulary(std::vector<std::string> words, std::size_t shortlist_size)
    : words_(std::move(words)), shortlist_size_(shortlist_size) {
  if (words_.size() < kReservedCount || words_[kBosId] != kBos || words_[kEosId] != kEos ||
      words_[kUnkId] != kUnk) {
    throw Error("vocabulary must start with <s>, </s>, <unk>");
  }
  if (shortlist_size_ < kReservedCount || shortlist_size_ > words_.size()) {
    throw Error("shortlist size " + std::to_string(shortlist_size_) + " outside [3, " +
                std::to_string(words_.size()) + "]");
  }
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const auto& w = words_[i];
    if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos) {
      throw Error("invalid vocabulary token at id " + std::to_string(i));
    }
    if (!index_.emplace(w, static_cast<WordId>(i)).second) {
      throw Error("duplicate vocabulary token '" + w + "'");
    }
  }
}

std::optional<WordId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::in_shortlist(std::string_view token) const {
  auto id = find(token);
  return id && in_shortlist(*id);
}

WordId Vocabulary::encode(std::string_view token, EncodeMode mode) const {
  auto id = find(token);
  if (!id) return kUnkId;
  if (mode == EncodeMode::kShortlistOnly && !in_shortlist(*id)) return kUnkId;
  return *id;
}

std::vector<WordId> Vocabulary::encode(const Sentence& sentence, EncodeMode mode) const {
  std::vector<WordId> ids;
  ids.reserve(sentence.size());
  for (const auto& t : sentence) ids.push_back(encode(t, mode));
  return ids;
}

const std::string& Vocabulary::decode(WordId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw Error("word id " + std::to_string(id) + " out of range [0, " + std::to_string(words_.size()) +
                ")");
  }
  return words_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::with_promoted(std::span<const std::string> promoted) const {
  std::unordered_set<std::string> moving;
  for (const auto& w : promoted) {
    if (in_shortlist(w)) throw Error("word '" + w + "' is already in the shortlist");
    if (!moving.insert(w).second) throw Error("word '" + w + "' promoted twice");
  }
  std::vector<std::string> words(words_.begin(), words_.begin() + static_cast<std::ptrdiff_t>(shortlist_size_));
  words.insert(words.end(), promoted.begin(), promoted.end());
  for (std::size_t i = shortlist_size_; i < words_.size(); ++i) {
    if (!moving.count(words_[i])) words.push_back(words_[i]);
  }
  return Vocabulary(std::move(words), shortlist_size_ + promoted.size());
}

Vocabulary build_vocabulary(const Corpus& corpus, std::size_t shortlist_size, std::size_t full_size) {
  if (shortlist_size < kReservedCount) throw Error("shortlist size must be at least 3");
  if (shortlist_size > full_size) throw Error("shortlist size exceeds full vocabulary size");
  if (corpus.empty()) throw Error("cannot build a vocabulary from an empty corpus");

  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& token : sentence) {
      if (token == kBos || token == kEos || token == kUnk) continue;
      ++counts[token];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is already sorted by word, so a stable sort on count alone
  // leaves ties in ascending lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  const std::size_t content_shortlist = std::min(shortlist_size - kReservedCount, ranked.size());
  const std::size_t tail = std::min(full_size - shortlist_size, ranked.size() - content_shortlist);

  auto words = reserved_words();
  for (std::size_t i = 0; i < content_shortlist + tail; ++i) words.push_back(ranked[i].first);
  return Vocabulary(std::move(words), kReservedCount + content_shortlist);
}

void write_vocabulary(const Vocabulary& vocab, std::ostream& out) {
  out << "#shortlist=" << vocab.shortlist_size() << '\n';
  for (const auto& w : vocab.words()) out << w << '\n';
}

void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary " + path.string());
  write_vocabulary(vocab, out);
}

Vocabulary read_vocabulary(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 0, "missing #shortlist header");
  constexpr std::string_view kHeader = "#shortlist=";
  if (line.rfind(kHeader, 0) != 0) throw ParseError(source, 1, "expected '#shortlist=<n>' header");
  std::size_t shortlist = 0;
  try {
    std::size_t pos = 0;
    shortlist = std::stoul(line.substr(kHeader.size()), &pos);
    if (pos != line.size() - kHeader.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ParseError(source, 1, "bad shortlist size '" + line.substr(kHeader.size()) + "'");
  }
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw ParseError(source, lineno, "empty token line");
    if (!seen.insert(line).second) throw ParseError(source, lineno, "duplicate token '" + line + "'");
    words.push_back(line);
  }
  try {
    return Vocabulary(std::move(words), shortlist);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  return read_vocabulary(in, path.string());
}

}  // namespace velm
