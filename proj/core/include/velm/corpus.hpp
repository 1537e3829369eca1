#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace velm {

using Sentence = std::vector<std::string>;

// Whitespace-tokenized sentences, one per line on disk. Blank lines are
// dropped on load so no sentence is ever empty.
using Corpus = std::vector<Sentence>;

Sentence split_tokens(const std::string& line);
std::string join_tokens(const Sentence& sentence);

Corpus read_corpus(std::istream& in);
Corpus read_corpus(const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::size_t token_count(const Corpus& corpus);

}  // namespace velm
