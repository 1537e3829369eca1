#include "velm/corpus.hpp"

#include <fstream>
#include <sstream>

#include "velm/error.hpp"

namespace velm {

Sentence split_tokens(const std::string& line) {
  Sentence tokens;
  std::istringstream in(line);
  std::string token;
  while (in >> token) tokens.push_back(std::move(token));
  return tokens;
}

std::string join_tokens(const Sentence& sentence) {
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i) out += ' ';
    out += sentence[i];
  }
  return out;
}

Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    Sentence s = split_tokens(line);
    if (!s.empty()) corpus.push_back(std::move(s));
  }
  return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  return read_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus) out << join_tokens(s) << '\n';
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus " + path.string());
  write_corpus(corpus, out);
}

std::size_t token_count(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& s : corpus) n += s.size();
  return n;
}

}  // namespace velm
