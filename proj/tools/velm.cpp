// velm: command-line front end for the language-modeling toolkit.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "velm/bptt.hpp"
#include "velm/checkpoint.hpp"
#include "velm/corpus.hpp"
#include "velm/error.hpp"
#include "velm/expansion.hpp"
#include "velm/logging.hpp"
#include "velm/nbest.hpp"
#include "velm/ngram.hpp"
#include "velm/pipeline.hpp"
#include "velm/rescore.hpp"
#include "velm/rnnlm.hpp"
#include "velm/skipgram.hpp"
#include "velm/synthetic.hpp"
#include "velm/vocab.hpp"
#include "velm/wer.hpp"

namespace {

using namespace velm;

std::vector<std::string> read_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

// LM selection shared by ppl, rescore and tune: an RNN checkpoint scored
// over the full vocabulary, or an ARPA model on its own.
struct LmOptions {
  std::string model;
  std::string arpa;
  std::string full_vocab;
  std::string unk_mode = "uniform";

  void add_to(CLI::App* app) {
    app->add_option("--model", model, "RNN LM checkpoint");
    app->add_option("--arpa", arpa, "ARPA n-gram model (used alone when --model is absent)");
    app->add_option("--full-vocab", full_vocab, "vocabulary file defining V");
    app->add_option("--unk-mode", unk_mode, "shortlist, uniform or ngram")
        ->check(CLI::IsMember({"shortlist", "uniform", "ngram"}));
  }
};

class LoadedLm {
 public:
  explicit LoadedLm(const LmOptions& o) {
    if (o.model.empty() && o.arpa.empty()) throw Error("either --model or --arpa is required");
    if (!o.arpa.empty()) ngram_ = import_arpa(o.arpa);
    if (!o.full_vocab.empty()) full_ = read_vocabulary(o.full_vocab);
    if (!o.model.empty()) {
      model_ = std::make_unique<RnnLmModel>(load_checkpoint(o.model));
      scorer_ = std::make_unique<FullVocabScorer>(*model_, parse_unk_policy(o.unk_mode), ngram_ ? &*ngram_ : nullptr,
                                                  full_ ? &*full_ : nullptr);
    }
  }

  SentenceLm sentence_lm() const {
    if (scorer_) return [s = scorer_.get()](const Sentence& w) { return s->score(w).total(); };
    return [n = &*ngram_](const Sentence& words) {
      std::vector<WordId> history{kBosId};
      double total = 0.0;
      for (std::size_t t = 0; t <= words.size(); ++t) {
        const WordId id =
            t < words.size() ? n->vocabulary().encode(words[t], EncodeMode::kFullVocabulary) : kEosId;
        total += n->log_prob(id, history);
        history.push_back(id);
      }
      return total;
    };
  }

  PerplexityStats perplexity(const Corpus& text) const {
    PerplexityStats stats;
    if (scorer_) {
      for (const auto& s : text) {
        const auto sc = scorer_->score(s);
        for (double lp : sc.log_probs) stats.add(lp);
        stats.skipped += sc.skipped;
      }
      return stats;
    }
    const Vocabulary& v = ngram_->vocabulary();
    for (const auto& s : text) {
      std::vector<WordId> history{kBosId};
      for (std::size_t t = 0; t <= s.size(); ++t) {
        const WordId id = t < s.size() ? v.encode(s[t], EncodeMode::kFullVocabulary) : kEosId;
        if (full_ && t < s.size() && !full_->contains(s[t])) {
          ++stats.skipped;
        } else {
          stats.add(ngram_->log_prob(id, history));
        }
        history.push_back(id);
      }
    }
    return stats;
  }

 private:
  std::optional<NgramModel> ngram_;
  std::optional<Vocabulary> full_;
  std::unique_ptr<RnnLmModel> model_;
  std::unique_ptr<FullVocabScorer> scorer_;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::istringstream in(text);
  for (double v; in >> v;) values.push_back(v);
  if (!in.eof() || values.empty()) throw Error("bad number list '" + text + "'");
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shortlist LSTM language models with post-hoc vocabulary expansion"};
  app.require_subcommand(1);

  // build-vocab
  std::string bv_corpus, bv_out;
  std::size_t bv_shortlist = 10000, bv_size = 0;
  auto* build_vocab = app.add_subcommand("build-vocab", "Frequency-ranked vocabulary with a shortlist boundary");
  build_vocab->add_option("--corpus", bv_corpus)->required();
  build_vocab->add_option("--shortlist", bv_shortlist, "shortlist size including <s>, </s>, <unk>");
  build_vocab->add_option("--size", bv_size, "full vocabulary size (default: every corpus word)");
  build_vocab->add_option("--out", bv_out)->required();

  // build-ngram
  std::string bn_corpus, bn_vocab, bn_out;
  int bn_order = 3;
  auto* build_ngram = app.add_subcommand("build-ngram", "Interpolated modified Kneser-Ney model in ARPA format");
  build_ngram->add_option("--order", bn_order)->check(CLI::Range(1, 10));
  build_ngram->add_option("--corpus", bn_corpus)->required();
  build_ngram->add_option("--vocab", bn_vocab)->required();
  build_ngram->add_option("--out", bn_out)->required();

  // train-lm
  std::string tl_corpus, tl_vocab, tl_valid, tl_out;
  ModelShape tl_shape;
  TrainConfig tl_cfg;
  auto* train_lm = app.add_subcommand("train-lm", "Train a shortlist LSTM LM with truncated BPTT");
  train_lm->add_option("--corpus", tl_corpus)->required();
  train_lm->add_option("--vocab", tl_vocab)->required();
  train_lm->add_option("--valid", tl_valid, "validation text (default: last 5% of the corpus)");
  train_lm->add_option("--layers", tl_shape.num_layers);
  train_lm->add_option("--ds", tl_shape.input_dim);
  train_lm->add_option("--dh", tl_shape.hidden_dim);
  train_lm->add_option("--unroll", tl_cfg.unroll);
  train_lm->add_option("--dropout", tl_cfg.dropout)->check(CLI::Range(0.0, 0.99));
  train_lm->add_option("--seed", tl_cfg.seed);
  train_lm->add_option("--epochs", tl_cfg.epochs);
  train_lm->add_option("--lr", tl_cfg.learning_rate);
  train_lm->add_option("--batch", tl_cfg.batch);
  train_lm->add_option("--clip", tl_cfg.clip);
  train_lm->add_option("--out", tl_out)->required();

  // ppl
  LmOptions ppl_lm;
  std::string ppl_text;
  auto* ppl = app.add_subcommand("ppl", "Perplexity of a text");
  ppl_lm.add_to(ppl);
  ppl->add_option("--text", ppl_text)->required();

  // train-skipgram
  std::string sg_corpus, sg_out;
  SkipGramConfig sg_cfg;
  auto* train_sg = app.add_subcommand("train-skipgram", "Skip-gram embeddings with negative sampling");
  train_sg->add_option("--corpus", sg_corpus)->required();
  train_sg->add_option("--dim", sg_cfg.dim);
  train_sg->add_option("--window", sg_cfg.window);
  train_sg->add_option("--negatives", sg_cfg.negatives);
  train_sg->add_option("--subsample", sg_cfg.subsample);
  train_sg->add_option("--epochs", sg_cfg.epochs);
  train_sg->add_option("--lr", sg_cfg.learning_rate);
  train_sg->add_option("--seed", sg_cfg.seed);
  train_sg->add_option("--out", sg_out)->required();

  // neighbors
  std::string nb_vec, nb_vocab, nb_word;
  std::size_t nb_k = 8;
  auto* neighbors = app.add_subcommand("neighbors", "Most similar shortlist words");
  neighbors->add_option("--vec", nb_vec)->required();
  neighbors->add_option("--vocab", nb_vocab)->required();
  neighbors->add_option("--word", nb_word)->required();
  neighbors->add_option("--k", nb_k);

  // extract-oos
  std::string eo_nbest, eo_vocab, eo_out;
  std::size_t eo_n = 1;
  auto* extract = app.add_subcommand("extract-oos", "Out-of-shortlist words from the top hypotheses");
  extract->add_option("--nbest", eo_nbest)->required();
  extract->add_option("--vocab", eo_vocab)->required();
  extract->add_option("--n", eo_n)->check(CLI::PositiveNumber);
  extract->add_option("--out", eo_out)->required();

  // expand
  std::string ex_model, ex_vec, ex_oos, ex_report, ex_out;
  CandidateOptions ex_opts;
  auto* expand = app.add_subcommand("expand", "Append synthesized embeddings for new words");
  expand->add_option("--model", ex_model)->required();
  expand->add_option("--vec", ex_vec)->required();
  expand->add_option("--oos", ex_oos, "word list, whitespace separated")->required();
  expand->add_option("--k", ex_opts.k);
  expand->add_flag("--weighted", ex_opts.weighted, "weigh candidates by cosine similarity");
  expand->add_option("--report", ex_report);
  expand->add_option("--out", ex_out)->required();

  // rescore
  LmOptions rs_lm;
  std::string rs_nbest, rs_out;
  RescoreConfig rs_cfg;
  auto* rescore_cmd = app.add_subcommand("rescore", "Rerank an n-best list with a new LM");
  rs_lm.add_to(rescore_cmd);
  rescore_cmd->add_option("--nbest", rs_nbest)->required();
  rescore_cmd->add_option("--lm-scale", rs_cfg.lm_scale);
  rescore_cmd->add_option("--penalty", rs_cfg.word_insertion_penalty);
  rescore_cmd->add_option("--threads", rs_cfg.threads);
  rescore_cmd->add_option("--out", rs_out)->required();

  // wer
  std::string wer_ref, wer_hyp, wer_nbest;
  auto* wer = app.add_subcommand("wer", "Word error rate against references");
  wer->add_option("--ref", wer_ref)->required();
  auto* hyp_opt = wer->add_option("--hyp", wer_hyp, "hypotheses in reference format");
  wer->add_option("--nbest", wer_nbest, "n-best list; its first hypotheses are scored")->excludes(hyp_opt);

  // tune
  LmOptions tu_lm;
  std::string tu_nbest, tu_ref, tu_scales, tu_penalties;
  std::size_t tu_threads = 1;
  auto* tune_cmd = app.add_subcommand("tune", "Grid-search LM scale and word penalty");
  tu_lm.add_to(tune_cmd);
  tune_cmd->add_option("--nbest", tu_nbest)->required();
  tune_cmd->add_option("--ref", tu_ref)->required();
  tune_cmd->add_option("--scales", tu_scales, "space-separated LM scales");
  tune_cmd->add_option("--penalties", tu_penalties, "space-separated word penalties");
  tune_cmd->add_option("--threads", tu_threads);

  // pipeline
  std::string pl_config, pl_report;
  auto* pipeline = app.add_subcommand("pipeline", "Extract, expand, rescore and compare systems");
  pipeline->add_option("--config", pl_config)->required();
  pipeline->add_option("--report", pl_report, "JSON report path (overrides the config)");

  // make-toy
  std::string mt_out;
  ToyExperimentConfig mt_cfg;
  auto* make_toy = app.add_subcommand("make-toy", "Write a synthetic grammar corpus and n-best fixture");
  make_toy->add_option("--out", mt_out, "output directory")->required();
  make_toy->add_option("--tokens", mt_cfg.train_tokens);
  make_toy->add_option("--grammar-size", mt_cfg.grammar.vocabulary_size);
  make_toy->add_option("--seed", mt_cfg.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build_vocab) {
      const Corpus corpus = read_corpus(bv_corpus);
      const std::size_t size = bv_size ? bv_size : static_cast<std::size_t>(-1);
      const Vocabulary v = build_vocabulary(corpus, bv_shortlist, size);
      write_vocabulary(v, bv_out);
      std::printf("vocabulary: %zu words, shortlist %zu\n", v.size(), v.shortlist_size());
    } else if (*build_ngram) {
      const NgramModel lm = train_kn(read_corpus(bn_corpus), read_vocabulary(bn_vocab), bn_order);
      export_arpa(lm, bn_out);
      for (int n = 1; n <= lm.order(); ++n) std::printf("%d-grams: %zu\n", n, lm.table(n).size());
    } else if (*train_lm) {
      Corpus train = read_corpus(tl_corpus);
      Corpus valid;
      if (!tl_valid.empty()) {
        valid = read_corpus(tl_valid);
      } else {
        const std::size_t held = std::max<std::size_t>(1, train.size() / 20);
        if (train.size() < 2) throw Error("corpus too small to hold out validation text");
        valid.assign(train.end() - static_cast<std::ptrdiff_t>(held), train.end());
        train.resize(train.size() - held);
      }
      RnnLmModel model = make_random_model(read_vocabulary(tl_vocab), tl_shape, tl_cfg.seed);
      const auto result = train_bptt(model, train, valid, tl_cfg, [](std::size_t e, double tr, double va, double lr) {
        std::printf("epoch %zu  lr %.5f  train ppl %.3f  valid ppl %.3f\n", e, lr, tr, va);
        std::fflush(stdout);
      });
      save_checkpoint(model, tl_out);
      const auto& vp = result.validation_perplexity;
      if (!vp.empty()) {
        std::printf("best valid ppl %.3f after %zu epochs\n", *std::min_element(vp.begin(), vp.end()), result.epochs_run);
      }
    } else if (*ppl) {
      const LoadedLm lm(ppl_lm);
      const auto stats = lm.perplexity(read_corpus(ppl_text));
      std::printf("perplexity %.4f  tokens %zu  skipped %zu\n", stats.perplexity(), stats.tokens, stats.skipped);
    } else if (*train_sg) {
      const WordEmbeddings emb = train_skipgram(read_corpus(sg_corpus), sg_cfg);
      save_w2v_text(emb, sg_out);
      std::printf("embeddings: %zu words x %zu\n", emb.size(), emb.dim());
    } else if (*neighbors) {
      const auto emb = load_w2v_text(nb_vec);
      const auto vocab = read_vocabulary(nb_vocab);
      for (const auto& n : nearest_in_shortlist(emb, nb_word, vocab, nb_k)) {
        std::printf("%s\t%.6f\n", n.word.c_str(), n.similarity);
      }
    } else if (*extract) {
      const auto words = extract_oos_words(read_nbest(eo_nbest), read_vocabulary(eo_vocab), eo_n);
      std::string text;
      for (const auto& w : words) text += w + '\n';
      write_text(eo_out, text);
      std::printf("%zu new words\n", words.size());
    } else if (*expand) {
      const auto model = load_checkpoint(ex_model);
      const auto emb = load_w2v_text(ex_vec);
      const auto words = read_word_list(ex_oos);
      const auto result = expand_vocabulary(model, emb, words, ex_opts);
      save_checkpoint(result.model, ex_out);
      if (!ex_report.empty()) write_text(ex_report, report_to_json(result.report));
      std::printf("expanded %zu words, skipped %zu; explicit words %zu -> %zu\n", result.report.expanded.size(),
                  result.report.skipped.size(), result.report.explicit_before, result.report.explicit_after);
    } else if (*rescore_cmd) {
      const LoadedLm lm(rs_lm);
      const auto result = rescore(read_nbest(rs_nbest), lm.sentence_lm(), rs_cfg);
      for (const auto& [utt, msg] : result.failures) log_warning("rescore " + utt + ": " + msg);
      write_nbest(result.list, rs_out);
    } else if (*wer) {
      const References refs = read_references(wer_ref);
      References hyps;
      if (!wer_nbest.empty()) {
        hyps = one_best(read_nbest(wer_nbest));
      } else if (!wer_hyp.empty()) {
        hyps = read_references(wer_hyp);
      } else {
        throw Error("one of --hyp or --nbest is required");
      }
      const auto r = compute_wer(refs, hyps).total;
      std::printf("WER %.2f%%  (S %zu, I %zu, D %zu, N %zu)\n", r.wer_percent(), r.substitutions, r.insertions,
                  r.deletions, r.reference_words);
    } else if (*tune_cmd) {
      const LoadedLm lm(tu_lm);
      const NBestList list = read_nbest(tu_nbest);
      TuneGrid grid;
      if (!tu_scales.empty()) grid.lm_scales = parse_list(tu_scales);
      if (!tu_penalties.empty()) grid.penalties = parse_list(tu_penalties);
      const auto scores = compute_lm_scores(list, lm.sentence_lm(), tu_threads);
      const auto result = tune(list, scores.scores, read_references(tu_ref), grid);
      for (const auto& p : result.grid) {
        std::printf("scale %6.2f  penalty %6.2f  WER %.2f\n", p.lm_scale, p.penalty, p.counts.wer_percent());
      }
      std::printf("best: scale %.2f penalty %.2f WER %.2f\n", result.best.lm_scale, result.best.penalty,
                  result.best.counts.wer_percent());
    } else if (*pipeline) {
      const PipelineConfig config = read_pipeline_config(pl_config);
      const PipelineData data = load_pipeline_data(config);
      const PipelineReport report = run_pipeline(data, config.settings);
      std::fputs(pipeline_report_to_text(report).c_str(), stdout);
      const std::string path = pl_report.empty() ? config.report.string() : pl_report;
      if (!path.empty()) write_text(path, pipeline_report_to_json(report));
    } else if (*make_toy) {
      const auto data = make_toy_experiment(mt_cfg);
      write_toy_experiment(data, mt_out);
      std::printf("train %zu tokens, %zu dev and %zu test utterances\n", token_count(data.train),
                  data.dev.refs.size(), data.test.refs.size());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "velm: %s\n", e.what());
    return 1;
  }
  return 0;
}
