#include "velm/nbest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "velm/error.hpp"

namespace velm {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

double parse_score(const std::string& field, const std::string& source, std::size_t line, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (pos != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(source, line, std::string("bad ") + what + " '" + field + "'");
  }
}

std::string format_score(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

NBestList read_nbest(std::istream& in, const std::string& source) {
  NBestList list;
  std::set<std::pair<std::string, std::size_t>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) {
      throw ParseError(source, lineno, "expected 5 tab-separated fields (utt, rank, acoustic, lm, words), got " +
                                           std::to_string(f.size()));
    }
    if (f[0].empty() || f[0].find(' ') != std::string::npos) throw ParseError(source, lineno, "bad utterance id");
    Hypothesis h;
    try {
      std::size_t pos = 0;
      const long long r = std::stoll(f[1], &pos);
      if (pos != f[1].size() || r < 0) throw std::invalid_argument(f[1]);
      h.rank = static_cast<std::size_t>(r);
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "bad rank '" + f[1] + "'");
    }
    h.acoustic_score = parse_score(f[2], source, lineno, "acoustic score");
    h.lm_score = parse_score(f[3], source, lineno, "lm score");
    h.words = split_tokens(f[4]);
    if (!seen.emplace(f[0], h.rank).second) {
      throw ParseError(source, lineno, "duplicate hypothesis rank " + f[1] + " for utterance " + f[0]);
    }
    list[f[0]].push_back(std::move(h));
  }
  return list;
}

NBestList read_nbest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open n-best list " + path.string());
  return read_nbest(in, path.string());
}

void write_nbest(const NBestList& list, std::ostream& out) {
  for (const auto& [utt, hyps] : list) {
    for (const auto& h : hyps) {
      out << utt << '\t' << h.rank << '\t' << format_score(h.acoustic_score) << '\t' << format_score(h.lm_score)
          << '\t' << join_tokens(h.words) << '\n';
    }
  }
}

void write_nbest(const NBestList& list, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write n-best list " + path.string());
  write_nbest(list, out);
}

References read_references(std::istream& in, const std::string& source) {
  References refs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError(source, lineno, "expected 'utt-id<TAB>words'");
    const std::string utt = line.substr(0, tab);
    if (!refs.emplace(utt, split_tokens(line.substr(tab + 1))).second) {
      throw ParseError(source, lineno, "duplicate reference for utterance " + utt);
    }
  }
  return refs;
}

References read_references(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open references " + path.string());
  return read_references(in, path.string());
}

void write_references(const References& refs, std::ostream& out) {
  for (const auto& [utt, words] : refs) out << utt << '\t' << join_tokens(words) << '\n';
}

void write_references(const References& refs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write references " + path.string());
  write_references(refs, out);
}

References one_best(const NBestList& list) {
  References out;
  for (const auto& [utt, hyps] : list) {
    if (!hyps.empty()) out.emplace(utt, hyps.front().words);
  }
  return out;
}

}  // namespace velm
