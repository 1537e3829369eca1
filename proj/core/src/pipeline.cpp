#include "velm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "velm/checkpoint.hpp"
#include "velm/error.hpp"
#include "velm/logging.hpp"
#include "velm/rescore.hpp"

namespace velm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& source, std::size_t line) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(d)) throw ParseError(source, line, "expected a number, got '" + v + "'");
  return d;
}

std::size_t parse_count(const std::string& v, const std::string& source, std::size_t line) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError(source, line, "expected a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

bool parse_bool(const std::string& v, const std::string& source, std::size_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError(source, line, "expected true or false, got '" + v + "'");
}

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

double ngram_sentence_log_prob(const NgramModel& lm, const Sentence& words) {
  const Vocabulary& v = lm.vocabulary();
  std::vector<WordId> history{kBosId};
  double total = 0.0;
  for (std::size_t t = 0; t <= words.size(); ++t) {
    const WordId w = t < words.size() ? v.encode(words[t], EncodeMode::kFullVocabulary) : kEosId;
    total += lm.log_prob(w, history);
    history.push_back(w);
  }
  return total;
}

PerplexityStats scorer_perplexity(const FullVocabScorer& scorer, const Corpus& text) {
  PerplexityStats stats;
  for (const auto& s : text) {
    const SentenceScore sc = scorer.score(s);
    for (double lp : sc.log_probs) stats.add(lp);
    stats.skipped += sc.skipped;
  }
  return stats;
}

// Same token set as the neural systems: words outside V are skipped.
PerplexityStats ngram_perplexity(const NgramModel& lm, const FullVocabScorer& gate, const Corpus& text) {
  PerplexityStats stats;
  const Vocabulary& v = lm.vocabulary();
  for (const auto& s : text) {
    std::vector<WordId> history{kBosId};
    for (std::size_t t = 0; t <= s.size(); ++t) {
      const bool last = t == s.size();
      const WordId w = last ? kEosId : v.encode(s[t], EncodeMode::kFullVocabulary);
      if (last || gate.in_full_vocabulary(s[t])) {
        stats.add(lm.log_prob(w, history));
      } else {
        ++stats.skipped;
      }
      history.push_back(w);
    }
  }
  return stats;
}

struct Operating {
  double lm_scale;
  double penalty;
};

EditCounts evaluate(const NBestList& list, const LmScores& scores, const References& refs, Operating op) {
  return compute_wer(refs, one_best(rerank(list, scores, op.lm_scale, op.penalty))).total;
}

std::size_t count_failures(const LmScoreResult& r) { return r.failures.size(); }

// Expansion from a hypothesis list; the model keeps the caller's lifetime.
ExpansionResult expand_from(const RnnLmModel& model, const WordEmbeddings& emb, const NBestList& list,
                            std::size_t n, const CandidateOptions& options) {
  const auto words = extract_oos_words(list, model.vocab, n);
  return expand_vocabulary(model, emb, words, options);
}

}  // namespace

PipelineConfig parse_pipeline_config(std::istream& in, const std::filesystem::path& base_dir,
                                     const std::string& source) {
  PipelineConfig c;
  auto& s = c.settings;
  bool have_tune = false;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ParseError(source, lineno, "empty value for '" + key + "'");
    auto path = [&] { return std::filesystem::path(value).is_absolute() ? std::filesystem::path(value) : base_dir / value; };

    if (key == "model") c.model = path();
    else if (key == "embeddings") c.embeddings = path();
    else if (key == "test_nbest") c.test_nbest = path();
    else if (key == "test_refs") c.test_refs = path();
    else if (key == "arpa") c.arpa = path();
    else if (key == "full_vocab") c.full_vocab = path();
    else if (key == "ppl_text") c.ppl_text = path();
    else if (key == "dev_nbest") c.dev_nbest = path();
    else if (key == "dev_refs") c.dev_refs = path();
    else if (key == "report") c.report = path();
    else if (key == "extract_n") s.extract_n = parse_count(value, source, lineno);
    else if (key == "k") s.candidates.k = parse_count(value, source, lineno);
    else if (key == "weighted") s.candidates.weighted = parse_bool(value, source, lineno);
    else if (key == "unk_policy") {
      try {
        s.unk_policy = parse_unk_policy(value);
      } catch (const Error& e) {
        throw ParseError(source, lineno, e.what());
      }
    } else if (key == "lm_scale") s.lm_scale = parse_double(value, source, lineno);
    else if (key == "word_penalty") s.word_penalty = parse_double(value, source, lineno);
    else if (key == "tune") {
      s.tune = parse_bool(value, source, lineno);
      have_tune = true;
    } else if (key == "tune_scales" || key == "tune_penalties") {
      std::vector<double> values;
      std::istringstream vs(value);
      for (std::string tok; vs >> tok;) values.push_back(parse_double(tok, source, lineno));
      (key == "tune_scales" ? s.grid.lm_scales : s.grid.penalties) = std::move(values);
    } else if (key == "sweep_n") {
      s.sweep_n.clear();
      std::istringstream vs(value);
      for (std::string tok; vs >> tok;) s.sweep_n.push_back(parse_count(tok, source, lineno));
    } else if (key == "threads") s.threads = std::max<std::size_t>(1, parse_count(value, source, lineno));
    else throw ParseError(source, lineno, "unknown key '" + key + "'");
  }
  for (auto [name, p] : {std::pair{"model", &c.model}, {"embeddings", &c.embeddings}, {"test_nbest", &c.test_nbest},
                         {"test_refs", &c.test_refs}}) {
    if (p->empty()) throw ParseError(source, 0, std::string("missing required key '") + name + "'");
  }
  if (c.dev_nbest.empty() != c.dev_refs.empty()) {
    throw ParseError(source, 0, "dev_nbest and dev_refs must be given together");
  }
  if (!have_tune) s.tune = !c.dev_nbest.empty();
  if (s.tune && c.dev_nbest.empty()) throw ParseError(source, 0, "tune = true needs dev_nbest and dev_refs");
  if (s.extract_n == 0) throw ParseError(source, 0, "extract_n must be at least 1");
  return c;
}

PipelineConfig read_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pipeline config " + path.string());
  return parse_pipeline_config(in, path.parent_path(), path.string());
}

PipelineData load_pipeline_data(const PipelineConfig& c) {
  auto model = stage("load model", [&] { return load_checkpoint(c.model); });
  auto emb = stage("load embeddings", [&] { return load_w2v_text(c.embeddings); });
  auto nbest = stage("load test n-best", [&] { return read_nbest(c.test_nbest); });
  auto refs = stage("load test references", [&] { return read_references(c.test_refs); });
  PipelineData d{std::move(model), std::move(emb), std::move(nbest), std::move(refs), {}, {}, {}, {}, {}};
  if (!c.ppl_text.empty()) {
    d.ppl_text = stage("load perplexity text", [&] { return read_corpus(c.ppl_text); });
  } else {
    for (const auto& [utt, words] : d.test_refs) {
      if (!words.empty()) d.ppl_text.push_back(words);
    }
  }
  if (!c.arpa.empty()) d.ngram = stage("load arpa", [&] { return import_arpa(c.arpa); });
  if (!c.full_vocab.empty()) d.full_vocab = stage("load vocabulary", [&] { return read_vocabulary(c.full_vocab); });
  if (!c.dev_nbest.empty()) {
    d.dev_nbest = stage("load dev n-best", [&] { return read_nbest(c.dev_nbest); });
    d.dev_refs = stage("load dev references", [&] { return read_references(c.dev_refs); });
  }
  return d;
}

const SystemRow* PipelineReport::system(std::string_view name) const {
  for (const auto& s : systems) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

PipelineReport run_pipeline(const PipelineData& data, const PipelineSettings& settings) {
  const bool tuning = settings.tune;
  if (tuning && (!data.dev_nbest || !data.dev_refs)) throw Error("tune: dev n-best list and references required");
  const Vocabulary* full = data.full_vocab ? &*data.full_vocab : nullptr;
  const NgramModel* ngram = data.ngram ? &*data.ngram : nullptr;
  if (settings.unk_policy == UnkPolicy::kNgram && !ngram) throw Error("score: the ngram policy needs an ARPA model");
  const Operating fixed{settings.lm_scale, settings.word_penalty};

  PipelineReport report;
  report.first_pass = stage("wer", [&] { return compute_wer(data.test_refs, one_best(data.test_nbest)).total; });

  // Scores the test (and dev) lists with one LM and evaluates at the
  // tuned or fixed operating point.
  auto evaluate_system = [&](SystemRow& row, const SentenceLm& test_lm, const SentenceLm* dev_lm) {
    const auto test_scores = stage("rescore", [&] { return compute_lm_scores(data.test_nbest, test_lm, settings.threads); });
    row.rescore_failures = count_failures(test_scores);
    for (const auto& [utt, msg] : test_scores.failures) log_warning("rescore " + row.name + " " + utt + ": " + msg);
    Operating op = fixed;
    if (tuning && dev_lm) {
      const auto dev_scores = stage("rescore", [&] { return compute_lm_scores(*data.dev_nbest, *dev_lm, settings.threads); });
      const auto tuned = stage("tune", [&] { return tune(*data.dev_nbest, dev_scores.scores, *data.dev_refs, settings.grid); });
      op = {tuned.best.lm_scale, tuned.best.penalty};
    }
    row.lm_scale = op.lm_scale;
    row.word_penalty = op.penalty;
    row.counts = stage("wer", [&] { return evaluate(data.test_nbest, test_scores.scores, data.test_refs, op); });
    return op;
  };

  const FullVocabScorer base(data.model, settings.unk_policy, ngram, full);

  if (ngram) {
    SystemRow row;
    row.name = "KN";
    row.explicit_size = ngram->vocabulary().size();
    const auto stats = stage("perplexity", [&] { return ngram_perplexity(*ngram, base, data.ppl_text); });
    row.perplexity = stats.perplexity();
    row.ppl_tokens = stats.tokens;
    row.ppl_skipped = stats.skipped;
    SentenceLm lm = [ngram](const Sentence& s) { return ngram_sentence_log_prob(*ngram, s); };
    evaluate_system(row, lm, &lm);
    report.systems.push_back(std::move(row));
  }

  auto neural_row = [&](const std::string& name, const RnnLmModel& model, const FullVocabScorer& scorer,
                        const SentenceLm* dev_lm) {
    SystemRow row;
    row.name = name;
    row.explicit_size = model.explicit_size();
    const auto stats = stage("perplexity", [&] { return scorer_perplexity(scorer, data.ppl_text); });
    row.perplexity = stats.perplexity();
    row.ppl_tokens = stats.tokens;
    row.ppl_skipped = stats.skipped;
    SentenceLm lm = [&scorer](const Sentence& s) { return scorer.score(s).total(); };
    const Operating op = evaluate_system(row, lm, dev_lm);
    return std::pair{std::move(row), op};
  };

  {
    SentenceLm dev_lm = [&base](const Sentence& s) { return base.score(s).total(); };
    report.systems.push_back(neural_row("LSTM", data.model, base, &dev_lm).first);
  }

  const auto expanded = stage("expand", [&] {
    report.new_words = extract_oos_words(data.test_nbest, data.model.vocab, settings.extract_n);
    return expand_vocabulary(data.model, data.embeddings, report.new_words, settings.candidates);
  });
  report.expansion = expanded.report;
  const FullVocabScorer ve_scorer(expanded.model, settings.unk_policy, ngram, full);

  // On dev the model is expanded from dev's own hypotheses, as it would be
  // for any unseen test set.
  std::optional<ExpansionResult> dev_expanded;
  std::optional<FullVocabScorer> dev_scorer;
  if (tuning) {
    dev_expanded = stage("expand dev", [&] {
      return expand_from(data.model, data.embeddings, *data.dev_nbest, settings.extract_n, settings.candidates);
    });
    dev_scorer.emplace(dev_expanded->model, settings.unk_policy, ngram, full);
  }
  SentenceLm ve_dev_lm = [&dev_scorer](const Sentence& s) { return dev_scorer->score(s).total(); };
  auto [ve_row, ve_op] = neural_row("VE-LSTM", expanded.model, ve_scorer, tuning ? &ve_dev_lm : nullptr);
  report.systems.push_back(std::move(ve_row));

  for (std::size_t n : settings.sweep_n) {
    if (n == 0) throw Error("sweep: n must be at least 1");
    SweepRow row;
    row.n = n;
    const auto words = extract_oos_words(data.test_nbest, data.model.vocab, n);
    row.new_words = words.size();
    row.all_in_embeddings =
        std::all_of(words.begin(), words.end(), [&](const std::string& w) { return data.embeddings.contains(w); });
    const auto ex = stage("sweep expand", [&] {
      return expand_vocabulary(data.model, data.embeddings, words, settings.candidates);
    });
    row.expanded = ex.report.expanded.size();
    const FullVocabScorer scorer(ex.model, settings.unk_policy, ngram, full);
    row.perplexity = stage("sweep perplexity", [&] { return scorer_perplexity(scorer, data.ppl_text); }).perplexity();
    SentenceLm lm = [&scorer](const Sentence& s) { return scorer.score(s).total(); };
    const auto scores = stage("sweep rescore", [&] { return compute_lm_scores(data.test_nbest, lm, settings.threads); });
    row.counts = evaluate(data.test_nbest, scores.scores, data.test_refs, ve_op);
    report.sweep.push_back(row);
  }
  return report;
}

std::string pipeline_report_to_json(const PipelineReport& report) {
  using json = nlohmann::ordered_json;
  auto counts_json = [](const EditCounts& c) {
    json j;
    j["wer"] = c.wer_percent();
    j["substitutions"] = c.substitutions;
    j["insertions"] = c.insertions;
    j["deletions"] = c.deletions;
    j["reference_words"] = c.reference_words;
    return j;
  };
  json j;
  j["first_pass"] = counts_json(report.first_pass);
  auto& systems = j["systems"] = json::array();
  for (const auto& s : report.systems) {
    json r;
    r["name"] = s.name;
    r["explicit_words"] = s.explicit_size;
    r["perplexity"] = s.perplexity;
    r["perplexity_tokens"] = s.ppl_tokens;
    r["perplexity_skipped"] = s.ppl_skipped;
    r["lm_scale"] = s.lm_scale;
    r["word_penalty"] = s.word_penalty;
    r["rescore_failures"] = s.rescore_failures;
    r.update(counts_json(s.counts));
    systems.push_back(std::move(r));
  }
  j["new_word_count"] = report.new_words.size();
  j["new_words"] = report.new_words;
  j["expansion"] = json::parse(report_to_json(report.expansion));
  auto& sweep = j["extraction_sweep"] = json::array();
  for (const auto& s : report.sweep) {
    json r;
    r["n"] = s.n;
    r["new_word_count"] = s.new_words;
    r["all_in_embeddings"] = s.all_in_embeddings;
    r["expanded"] = s.expanded;
    r["perplexity"] = s.perplexity;
    r.update(counts_json(s.counts));
    sweep.push_back(std::move(r));
  }
  return j.dump(2);
}

std::string pipeline_report_to_text(const PipelineReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %10s %12s %8s %8s %8s\n", "system", "|V_expl|", "perplexity", "scale",
                "penalty", "WER%");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %10s %12s %8s %8s %8.2f\n", "1-best", "-", "-", "-", "-",
                report.first_pass.wer_percent());
  out += buf;
  for (const auto& s : report.systems) {
    std::snprintf(buf, sizeof buf, "%-10s %10zu %12.3f %8.2f %8.2f %8.2f\n", s.name.c_str(), s.explicit_size,
                  s.perplexity, s.lm_scale, s.word_penalty, s.wer());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "\n|V_new| = %zu (expanded %zu, skipped %zu)\n", report.new_words.size(),
                report.expansion.expanded.size(), report.expansion.skipped.size());
  out += buf;
  if (!report.sweep.empty()) {
    std::snprintf(buf, sizeof buf, "\n%-6s %8s %10s %12s %8s\n", "n", "|V_new|", "in-emb", "perplexity", "WER%");
    out += buf;
    for (const auto& s : report.sweep) {
      std::snprintf(buf, sizeof buf, "%-6zu %8zu %10s %12.3f %8.2f\n", s.n, s.new_words,
                    s.all_in_embeddings ? "yes" : "no", s.perplexity, s.wer());
      out += buf;
    }
  }
  return out;
}

}  // namespace velm
