#include "velm/skipgram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "velm/error.hpp"
#include "velm/random.hpp"

namespace velm {

WordEmbeddings::WordEmbeddings(std::vector<std::string> words, std::size_t dim, std::vector<double> values)
    : words_(std::move(words)), dim_(dim), values_(std::move(values)) {
  if (values_.size() != words_.size() * dim_) throw Error("embedding matrix size does not match count x dim");
  norms_.resize(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) throw Error("duplicate embedding word '" + words_[i] + "'");
    double s = 0.0;
    for (double v : vector(i)) {
      if (!std::isfinite(v)) throw Error("non-finite embedding value for '" + words_[i] + "'");
      s += v * v;
    }
    norms_[i] = std::sqrt(s);
  }
}

std::optional<std::size_t> WordEmbeddings::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const double> WordEmbeddings::vector(std::string_view word) const {
  auto row = find(word);
  if (!row) throw UnknownWordError(std::string(word), "embeddings");
  return vector(*row);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cosine of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double WordEmbeddings::cosine(std::string_view a, std::string_view b) const {
  return cosine_similarity(vector(a), vector(b));
}

WordEmbeddings train_skipgram(const Corpus& corpus, const SkipGramConfig& config) {
  if (corpus.empty()) throw Error("cannot train embeddings on an empty corpus");
  if (config.dim == 0 || config.window == 0) throw Error("embedding dim and window must be positive");

  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus) {
    for (const auto& t : s) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> freq;
  for (auto& [w, c] : ranked) {
    index.emplace(w, words.size());
    words.push_back(w);
    freq.push_back(static_cast<double>(c));
  }
  const std::size_t n = words.size();
  const std::size_t dim = config.dim;
  double total_tokens = 0.0;
  for (double f : freq) total_tokens += f;

  std::vector<double> noise_cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::pow(freq[i], 0.75);
    noise_cdf[i] = acc;
  }
  for (double& v : noise_cdf) v /= acc;

  Rng rng(config.seed);
  std::vector<double> in(n * dim), out(n * dim, 0.0);
  for (double& v : in) v = (rng.uniform() - 0.5) / static_cast<double>(dim);

  std::vector<std::vector<std::size_t>> encoded;
  encoded.reserve(corpus.size());
  for (const auto& s : corpus) {
    std::vector<std::size_t> ids;
    ids.reserve(s.size());
    for (const auto& t : s) ids.push_back(index.at(t));
    encoded.push_back(std::move(ids));
  }

  const double threshold = config.subsample * total_tokens;
  const double planned = static_cast<double>(config.epochs) * total_tokens + 1.0;
  double processed = 0.0;
  std::vector<double> grad_in(dim);
  std::vector<std::size_t> kept;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& sentence : encoded) {
      kept.clear();
      for (std::size_t w : sentence) {
        if (config.subsample > 0.0) {
          const double keep = (std::sqrt(freq[w] / threshold) + 1.0) * threshold / freq[w];
          if (keep < rng.uniform()) continue;
        }
        kept.push_back(w);
      }
      processed += static_cast<double>(sentence.size());
      const double lr = config.learning_rate * std::max(1.0 - processed / planned, 1e-4);

      for (std::size_t pos = 0; pos < kept.size(); ++pos) {
        const std::size_t center = kept[pos];
        const std::size_t reach = config.window - rng.below(config.window);
        const std::size_t lo = pos >= reach ? pos - reach : 0;
        const std::size_t hi = std::min(kept.size() - 1, pos + reach);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          double* context = &in[kept[c] * dim];
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          for (std::size_t d = 0; d <= config.negatives; ++d) {
            std::size_t target = center;
            double label = 1.0;
            if (d > 0) {
              const double u = rng.uniform();
              target = static_cast<std::size_t>(std::lower_bound(noise_cdf.begin(), noise_cdf.end(), u) -
                                                noise_cdf.begin());
              target = std::min(target, n - 1);
              if (target == center) continue;
              label = 0.0;
            }
            double* o = &out[target * dim];
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += context[k] * o[k];
            const double g = (label - 1.0 / (1.0 + std::exp(-dot))) * lr;
            for (std::size_t k = 0; k < dim; ++k) grad_in[k] += g * o[k];
            for (std::size_t k = 0; k < dim; ++k) o[k] += g * context[k];
          }
          for (std::size_t k = 0; k < dim; ++k) context[k] += grad_in[k];
        }
      }
    }
  }

  WordEmbeddings e(std::move(words), dim, std::move(in));
  e.config = config;
  return e;
}

std::vector<Neighbor> nearest_in_shortlist(const WordEmbeddings& embeddings, std::string_view target,
                                           const Vocabulary& shortlist, std::size_t k) {
  const auto target_vec = embeddings.vector(target);
  std::vector<Neighbor> ranked;
  for (std::size_t id = kReservedCount; id < shortlist.shortlist_size(); ++id) {
    const auto& word = shortlist.decode(static_cast<WordId>(id));
    if (word == target) continue;
    auto row = embeddings.find(word);
    if (!row) continue;
    ranked.push_back({static_cast<WordId>(id), word, cosine_similarity(target_vec, embeddings.vector(*row))});
  }
  const auto keep = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
                    });
  ranked.resize(keep);
  return ranked;
}

void save_w2v_text(const WordEmbeddings& embeddings, std::ostream& out) {
  out << embeddings.size() << ' ' << embeddings.dim() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    out << embeddings.words()[i];
    for (double v : embeddings.vector(i)) {
      std::snprintf(buf, sizeof buf, " %.9g", v);
      out << buf;
    }
    out << '\n';
  }
}

void save_w2v_text(const WordEmbeddings& embeddings, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embeddings " + path.string());
  save_w2v_text(embeddings, out);
}

WordEmbeddings load_w2v_text(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 0, "missing '<count> <dim>' header");
  std::istringstream header(line);
  std::size_t count = 0, dim = 0;
  std::string extra;
  if (!(header >> count >> dim) || (header >> extra) || dim == 0) {
    throw ParseError(source, 1, "expected '<count> <dim>' header");
  }
  std::vector<std::string> words;
  std::vector<double> values;
  words.reserve(count);
  values.reserve(count * dim);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (words.size() == count) throw ParseError(source, lineno, "more vectors than the header's count " + std::to_string(count));
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::size_t got = 0;
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t pos = 0;
        values.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "bad number '" + tok + "'");
      }
      ++got;
    }
    if (got != dim) {
      throw ParseError(source, lineno, "expected " + std::to_string(dim) + " values, got " + std::to_string(got));
    }
    words.push_back(std::move(word));
  }
  if (words.size() != count) {
    throw ParseError(source, 0, "header declares " + std::to_string(count) + " vectors, body has " +
                                    std::to_string(words.size()));
  }
  try {
    return WordEmbeddings(std::move(words), dim, std::move(values));
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }
}

WordEmbeddings load_w2v_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embeddings " + path.string());
  return load_w2v_text(in, path.string());
}

}  // namespace velm
