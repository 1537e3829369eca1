#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "velm/error.hpp"
#include "velm/ngram.hpp"

namespace velm {
namespace {

constexpr double kLn10 = 2.302585092994045684;
constexpr double kArpaZero = -99.0;

std::string format_log10(double natural_log) {
  if (std::isinf(natural_log) && natural_log < 0) return "-99";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", natural_log / kLn10);
  return buf;
}

double parse_log10(const std::string& field, const std::string& source, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (pos != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
    if (v <= kArpaZero) return -std::numeric_limits<double>::infinity();
    return v * kLn10;
  } catch (const std::exception&) {
    throw ParseError(source, line, "bad number '" + field + "'");
  }
}

}  // namespace

void export_arpa(const NgramModel& model, std::ostream& out) {
  const auto& vocab = model.vocabulary();
  out << "\n\\data\\\n";
  for (int n = 1; n <= model.order(); ++n) out << "ngram " << n << '=' << model.table(n).size() << '\n';
  for (int n = 1; n <= model.order(); ++n) {
    out << "\n\\" << n << "-grams:\n";
    const auto& table = model.table(n);
    std::vector<const std::vector<WordId>*> keys;
    keys.reserve(table.size());
    for (const auto& [k, _] : table) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });
    for (const auto* key : keys) {
      const NgramEntry& e = table.at(*key);
      out << format_log10(e.log_prob);
      for (std::size_t i = 0; i < key->size(); ++i) out << (i ? ' ' : '\t') << vocab.decode((*key)[i]);
      if (n < model.order() && e.log_backoff != 0.0) out << '\t' << format_log10(e.log_backoff);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

void export_arpa(const NgramModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write ARPA file " + path.string());
  export_arpa(model, out);
}

NgramModel import_arpa(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError(source, 0, "empty ARPA file");
  if (line != "\\data\\") throw ParseError(source, lineno, "expected \\data\\");
  std::vector<std::size_t> counts;
  bool have = next_line();
  while (have && line.rfind("ngram ", 0) == 0) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "malformed ngram count line");
    std::size_t n = 0;
    std::size_t c = 0;
    try {
      n = std::stoul(line.substr(6, eq - 6));
      c = std::stoul(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "malformed ngram count line");
    }
    if (n != counts.size() + 1) throw ParseError(source, lineno, "ngram orders must be listed in sequence");
    counts.push_back(c);
    have = next_line();
  }
  if (counts.empty()) throw ParseError(source, have ? lineno : 0, "no ngram counts in \\data\\ section");

  struct RawEntry {
    std::vector<std::string> words;
    double log_prob;
    double log_backoff;
  };
  std::vector<std::vector<RawEntry>> sections(counts.size());
  for (std::size_t n = 1; n <= counts.size(); ++n) {
    const std::string header = "\\" + std::to_string(n) + "-grams:";
    if (!have) throw ParseError(source, 0, "missing \\end\\");
    if (line != header) throw ParseError(source, lineno, "expected " + header);
    for (std::size_t i = 0; i < counts[n - 1]; ++i) {
      if (!next_line()) throw ParseError(source, 0, "missing \\end\\ (" + header + " section truncated)");
      std::istringstream fields(line);
      std::vector<std::string> f;
      std::string tok;
      while (fields >> tok) f.push_back(tok);
      if (f.size() != n + 1 && !(n < counts.size() && f.size() == n + 2)) {
        throw ParseError(source, lineno, "expected " + std::to_string(n + 1) + " or " + std::to_string(n + 2) +
                                             " fields, got " + std::to_string(f.size()));
      }
      RawEntry e;
      e.log_prob = parse_log10(f[0], source, lineno);
      e.words.assign(f.begin() + 1, f.begin() + 1 + static_cast<std::ptrdiff_t>(n));
      e.log_backoff = f.size() == n + 2 ? parse_log10(f[n + 1], source, lineno) : 0.0;
      sections[n - 1].push_back(std::move(e));
    }
    have = next_line();
  }
  if (!have) throw ParseError(source, 0, "missing \\end\\");
  if (line != "\\end\\") throw ParseError(source, lineno, "expected \\end\\");

  std::vector<std::string> words{std::string(kBos), std::string(kEos), std::string(kUnk)};
  for (const auto& e : sections[0]) {
    if (e.words[0] != kBos && e.words[0] != kEos && e.words[0] != kUnk) words.push_back(e.words[0]);
  }
  const std::size_t n_words = words.size();
  Vocabulary vocab;
  try {
    vocab = Vocabulary(std::move(words), n_words);
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }

  NgramModel model(vocab, static_cast<int>(counts.size()));
  for (const auto& section : sections) {
    for (const auto& e : section) {
      std::vector<WordId> key;
      for (const auto& w : e.words) {
        auto id = vocab.find(w);
        if (!id) throw ParseError(source, 0, "n-gram word '" + w + "' missing from unigram section");
        key.push_back(*id);
      }
      model.set(std::move(key), {e.log_prob, e.log_backoff});
    }
  }
  return model;
}

NgramModel import_arpa(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open ARPA file " + path.string());
  return import_arpa(in, path.string());
}

}  // namespace velm
