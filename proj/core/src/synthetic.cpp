#include "velm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <queue>
#include <set>

#include "velm/error.hpp"
#include "velm/ngram.hpp"
#include "velm/vocab.hpp"

namespace velm {
namespace {

struct ClassSpec {
  const char* name;
  double share;
};

constexpr ClassSpec kClasses[] = {
    {"person", 0.11}, {"city", 0.10},   {"animal", 0.10}, {"food", 0.09},  {"tool", 0.09},
    {"place", 0.07},  {"color", 0.05},  {"size", 0.04},   {"motion", 0.07}, {"eat", 0.05},
    {"say", 0.05},    {"build", 0.06},  {"time", 0.05},   {"adverb", 0.07},
};

// Slots name a class with a leading '@'.
constexpr const char* kTemplates[] = {
    "@person @motion to @city",
    "@person @motion to the @place in @city",
    "the @size @animal @eat the @food",
    "the @color @animal @eat @food at @time",
    "@person @say that the @animal is @color",
    "@person @say that @person @motion to @city",
    "in @city @person @build a @size @tool",
    "@person @build the @tool with a @color @tool",
    "at @time the @animal @motion @adverb",
    "@person @eat @food and @food in the @place",
    "the @tool of @person is @size and @color",
    "@person and @person @motion @adverb to the @place",
    "@person @adverb @build a @tool for the @animal",
    "this @time @person @eat the @size @food",
    "the @place in @city was @size",
};

constexpr const char* kInsertable[] = {"the", "a", "and", "to", "of"};

std::string pseudo_word(Rng& rng) {
  static constexpr char kConsonants[] = "bdfgklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  const std::size_t syllables = 2 + rng.below(2);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += kConsonants[rng.below(sizeof kConsonants - 1)];
    w += kVowels[rng.below(sizeof kVowels - 1)];
  }
  if (rng.bernoulli(0.3)) w += kConsonants[rng.below(sizeof kConsonants - 1)];
  return w;
}

}  // namespace

TemplateGrammar::TemplateGrammar(const GrammarConfig& config) {
  Rng rng(config.seed);
  std::map<std::string, std::size_t> class_index;
  for (std::size_t k = 0; k < std::size(kClasses); ++k) class_index[kClasses[k].name] = k;

  std::set<std::string> function_words;
  for (const char* t : kTemplates) {
    for (const auto& tok : split_tokens(t)) {
      if (tok[0] == '@') {
        if (!class_index.count(tok.substr(1))) throw Error("template references unknown class " + tok);
      } else {
        function_words.insert(tok);
      }
    }
  }
  if (config.vocabulary_size < function_words.size() + 2 * std::size(kClasses)) {
    throw Error("grammar vocabulary too small for its templates");
  }
  const std::size_t content = config.vocabulary_size - function_words.size();

  std::vector<std::size_t> sizes(std::size(kClasses));
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    sizes[k] = std::max<std::size_t>(2, static_cast<std::size_t>(kClasses[k].share * static_cast<double>(content)));
    assigned += sizes[k];
  }
  for (std::size_t k = 0; assigned < content; k = (k + 1) % sizes.size(), ++assigned) ++sizes[k];
  if (assigned > content) throw Error("grammar vocabulary too small for its classes");

  std::set<std::string> used(function_words.begin(), function_words.end());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    WordClass wc;
    wc.name = kClasses[k].name;
    while (wc.members.size() < sizes[k]) {
      std::string w = pseudo_word(rng);
      if (used.insert(w).second) wc.members.push_back(std::move(w));
    }
    double acc = 0.0;
    for (std::size_t r = 0; r < wc.members.size(); ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent);
      wc.cdf.push_back(acc);
    }
    for (double& c : wc.cdf) c /= acc;
    for (const auto& m : wc.members) {
      class_of_[m] = wc.name;
      content_.push_back(m);
    }
    classes_.push_back(std::move(wc));
  }
  for (const auto& f : function_words) class_of_[f] = "function";

  for (const char* t : kTemplates) {
    std::vector<std::string> slots;
    for (const auto& tok : split_tokens(t)) {
      slots.push_back(tok[0] == '@' ? "@" + std::to_string(class_index.at(tok.substr(1))) : tok);
    }
    templates_.push_back(std::move(slots));
  }
  words_.assign(function_words.begin(), function_words.end());
  words_.insert(words_.end(), content_.begin(), content_.end());
}

std::string_view TemplateGrammar::class_of(std::string_view word) const {
  auto it = class_of_.find(std::string(word));
  return it == class_of_.end() ? std::string_view{} : std::string_view(it->second);
}

Sentence TemplateGrammar::sample(Rng& rng) const {
  const auto& tmpl = templates_[rng.below(templates_.size())];
  Sentence s;
  for (const auto& slot : tmpl) {
    if (slot[0] != '@') {
      s.push_back(slot);
      continue;
    }
    const auto& wc = classes_[std::stoul(slot.substr(1))];
    const double u = rng.uniform();
    const auto r = static_cast<std::size_t>(std::upper_bound(wc.cdf.begin(), wc.cdf.end(), u) - wc.cdf.begin());
    s.push_back(wc.members[std::min(r, wc.members.size() - 1)]);
  }
  return s;
}

Corpus TemplateGrammar::sample_corpus(std::size_t tokens, Rng& rng) const {
  Corpus c;
  std::size_t n = 0;
  while (n < tokens) {
    c.push_back(sample(rng));
    n += c.back().size();
  }
  return c;
}

Corpus TemplateGrammar::sample_sentences(std::size_t count, Rng& rng) const {
  Corpus c;
  for (std::size_t i = 0; i < count; ++i) c.push_back(sample(rng));
  return c;
}

SyntheticFixture synthesize_nbest(const Corpus& references, const TemplateGrammar& grammar,
                                  const SentenceLm& first_pass_lm, const NBestSynthesisConfig& config,
                                  const std::string& prefix) {
  Rng rng(config.seed);
  const auto& pool = grammar.content_words();
  std::unordered_map<std::string, std::vector<std::string>> confusions;
  for (const auto& w : grammar.words()) {
    std::vector<std::string> c;
    while (c.size() < config.confusions_per_word) {
      const auto& cand = pool[rng.below(pool.size())];
      if (cand != w && std::find(c.begin(), c.end(), cand) == c.end()) c.push_back(cand);
    }
    confusions.emplace(w, std::move(c));
  }

  struct Option {
    std::vector<std::string> emit;
    double score;
  };

  SyntheticFixture out;
  for (std::size_t u = 0; u < references.size(); ++u) {
    char id[32];
    std::snprintf(id, sizeof id, "%s-%04zu", prefix.c_str(), u + 1);
    const Sentence& ref = references[u];
    out.refs.emplace(id, ref);

    std::vector<std::vector<Option>> positions;
    for (const auto& w : ref) {
      const double base = -config.acoustic_scale * rng.uniform(0.5, 1.5);
      auto margin = [&](double mean) {
        return config.acoustic_scale * (mean + config.margin_spread * rng.normal());
      };
      std::vector<Option> opts{{{w}, base}};
      auto it = confusions.find(w);
      if (it != confusions.end()) {
        for (const auto& c : it->second) opts.push_back({{c}, base - margin(config.confusion_margin)});
      }
      opts.push_back({{}, base - margin(config.deletion_margin)});
      opts.push_back({{w, kInsertable[rng.below(std::size(kInsertable))]}, base - margin(config.insertion_margin)});
      std::stable_sort(opts.begin(), opts.end(), [](const Option& a, const Option& b) { return a.score > b.score; });
      positions.push_back(std::move(opts));
    }

    // Exact k-best over independent per-position choices.
    using State = std::vector<std::uint8_t>;
    auto total = [&](const State& s) {
      double t = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) t += positions[i][s[i]].score;
      return t;
    };
    auto cmp = [](const std::pair<double, State>& a, const std::pair<double, State>& b) {
      return a.first != b.first ? a.first < b.first : a.second > b.second;
    };
    std::priority_queue<std::pair<double, State>, std::vector<std::pair<double, State>>, decltype(cmp)> heap(cmp);
    std::set<State> visited;
    State start(positions.size(), 0);
    heap.emplace(total(start), start);
    visited.insert(start);

    std::map<Sentence, double> distinct;
    std::vector<std::pair<Sentence, double>> found;
    while (!heap.empty() && found.size() < config.search_beam) {
      auto [score, state] = heap.top();
      heap.pop();
      Sentence words;
      for (std::size_t i = 0; i < state.size(); ++i) {
        const auto& e = positions[i][state[i]].emit;
        words.insert(words.end(), e.begin(), e.end());
      }
      if (distinct.emplace(words, score).second) found.emplace_back(std::move(words), score);
      for (std::size_t i = 0; i < state.size(); ++i) {
        if (state[i] + 1u >= positions[i].size()) continue;
        State next = state;
        ++next[i];
        if (visited.insert(next).second) heap.emplace(total(next), std::move(next));
      }
    }

    std::vector<Hypothesis> hyps;
    for (auto& [words, am] : found) {
      Hypothesis h;
      h.acoustic_score = am;
      h.lm_score = first_pass_lm(words);
      h.words = std::move(words);
      hyps.push_back(std::move(h));
    }
    std::stable_sort(hyps.begin(), hyps.end(), [&](const Hypothesis& a, const Hypothesis& b) {
      return a.acoustic_score + config.first_pass_lm_scale * a.lm_score >
             b.acoustic_score + config.first_pass_lm_scale * b.lm_score;
    });
    if (hyps.size() > config.hypotheses) hyps.resize(config.hypotheses);
    for (std::size_t r = 0; r < hyps.size(); ++r) hyps[r].rank = r + 1;
    out.nbest.emplace(id, std::move(hyps));
  }
  return out;
}

ToyExperimentData make_toy_experiment(const ToyExperimentConfig& config) {
  TemplateGrammar grammar(config.grammar);
  Rng rng(config.seed);
  ToyExperimentData data;
  data.train = grammar.sample_corpus(config.train_tokens, rng);
  data.valid = grammar.sample_sentences(config.valid_sentences, rng);
  const Corpus dev_refs = grammar.sample_sentences(config.dev_sentences, rng);
  const Corpus test_refs = grammar.sample_sentences(config.test_sentences, rng);

  const std::size_t all = grammar.words().size() + kReservedCount;
  const Vocabulary vocab = build_vocabulary(data.train, all, all);
  const NgramModel first_pass = train_kn(data.train, vocab, config.first_pass_order);
  SentenceLm lm = [&](const Sentence& words) {
    std::vector<WordId> history{kBosId};
    double total = 0.0;
    for (std::size_t t = 0; t <= words.size(); ++t) {
      const WordId w = t < words.size() ? vocab.encode(words[t], EncodeMode::kFullVocabulary) : kEosId;
      total += first_pass.log_prob(w, history);
      history.push_back(w);
    }
    return total;
  };

  NBestSynthesisConfig dev_cfg = config.nbest;
  NBestSynthesisConfig test_cfg = config.nbest;
  test_cfg.seed = config.nbest.seed + 1;
  data.dev = synthesize_nbest(dev_refs, grammar, lm, dev_cfg, "dev");
  data.test = synthesize_nbest(test_refs, grammar, lm, test_cfg, "test");
  return data;
}

void write_toy_experiment(const ToyExperimentData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_corpus(data.train, dir / "train.txt");
  write_corpus(data.valid, dir / "valid.txt");
  write_nbest(data.dev.nbest, dir / "dev.nbest");
  write_references(data.dev.refs, dir / "dev.ref");
  write_nbest(data.test.nbest, dir / "test.nbest");
  write_references(data.test.refs, dir / "test.ref");
}

}  // namespace velm
