#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "velm/error.hpp"
#include "velm/expansion.hpp"
#include "velm/logging.hpp"

namespace velm {
namespace {

Hypothesis hyp(const char* words, std::size_t rank) {
  Hypothesis h;
  h.words = split_tokens(words);
  h.rank = rank;
  return h;
}

Vocabulary ten_word_vocab(std::size_t shortlist) {
  return Vocabulary({"<s>", "</s>", "<unk>", "a", "b", "c", "d", "e", "f", "g"}, shortlist);
}

RnnState random_state(const RnnLmModel& m, Rng& rng) {
  RnnState s = zero_state(m);
  for (auto* group : {&s.hidden, &s.cell}) {
    for (auto& v : *group) {
      for (long i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1, 1);
    }
  }
  return s;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

TEST(ExtractOos, OneBestSetDifference) {
  const Vocabulary v({"<s>", "</s>", "<unk>", "the", "conference", "astana"}, 5);
  NBestList list;
  list["u1"] = {hyp("the astana conference", 1), hyp("the conference", 2)};
  EXPECT_EQ(extract_oos_words(list, v), (std::vector<std::string>{"astana"}));
}

TEST(ExtractOos, DeduplicatesAndSorts) {
  const Vocabulary v({"<s>", "</s>", "<unk>", "the"}, 4);
  NBestList list;
  list["u1"] = {hyp("the zeta", 1)};
  list["u2"] = {hyp("zeta alpha", 1)};
  list["u3"] = {hyp("the zeta the", 1)};
  EXPECT_EQ(extract_oos_words(list, v), (std::vector<std::string>{"alpha", "zeta"}));
}

TEST(ExtractOos, RankFilter) {
  const Vocabulary v({"<s>", "</s>", "<unk>", "the"}, 4);
  NBestList list;
  list["u1"] = {hyp("the", 1), hyp("the second", 2), hyp("third", 3)};
  EXPECT_TRUE(extract_oos_words(list, v, 1).empty());
  EXPECT_EQ(extract_oos_words(list, v, 2), (std::vector<std::string>{"second"}));
  EXPECT_EQ(extract_oos_words(list, v, 50).size(), 2u);
  References refs{{"r", {"the", "ref"}}};
  EXPECT_EQ(extract_oos_words(refs, v), (std::vector<std::string>{"ref"}));
}

TEST(Synthesize, Examples) {
  std::vector<Vector> one{Vector::Constant(2, 0.0)};
  one[0] << 1, -2;
  const std::vector<double> w1{1.0};
  EXPECT_EQ(synthesize_vector(one, w1), one[0]);

  std::vector<Vector> pair(2, Vector(2));
  pair[0] << 1, 2;
  pair[1] << 3, 4;
  const std::vector<double> equal{1.0, 1.0}, weighted{1.0, 3.0};
  const Vector mean = synthesize_vector(pair, equal);
  EXPECT_DOUBLE_EQ(mean(0), 2.0);
  EXPECT_DOUBLE_EQ(mean(1), 3.0);
  const Vector wmean = synthesize_vector(pair, weighted);
  EXPECT_DOUBLE_EQ(wmean(0), 2.5);
  EXPECT_DOUBLE_EQ(wmean(1), 3.5);
}

TEST(Synthesize, Errors) {
  std::vector<Vector> pair{Vector::Ones(2), Vector::Ones(3)};
  const std::vector<double> w{1.0, 1.0};
  EXPECT_THROW(synthesize_vector(pair, w), Error);
  std::vector<Vector> ok{Vector::Ones(2), Vector::Ones(2)};
  const std::vector<double> zero{0.0, 0.0}, negative{2.0, -1.0}, short_w{1.0};
  EXPECT_THROW(synthesize_vector(ok, zero), Error);
  EXPECT_THROW(synthesize_vector(ok, negative), Error);
  EXPECT_THROW(synthesize_vector(ok, short_w), Error);
  EXPECT_THROW(synthesize_vector({}, {}), Error);
}

TEST(ExpandModel, EmptyPlanIsNoOp) {
  const RnnLmModel m = make_random_model(ten_word_vocab(7), {4, 5, 2}, 1);
  const auto r = expand_model(m, {});
  EXPECT_EQ(r.model.vocab, m.vocab);
  const auto a = m.params.tensors(), b = r.model.params.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)), 0);
  }
  EXPECT_EQ(r.report.explicit_before, r.report.explicit_after);
}

TEST(ExpandModel, SingleCandidateIdentity) {
  const RnnLmModel m = make_random_model(ten_word_vocab(7), {4, 5, 2}, 2, 0.5);
  CandidatePlan plan;
  plan.entries.push_back({"g", {{4, 1.0}}});
  const RnnLmModel e = expand_model(m, plan).model;
  ASSERT_EQ(e.explicit_size(), 8u);
  EXPECT_EQ(e.vocab.decode(7), "g");
  EXPECT_EQ(e.params.input_embeddings.col(7), m.params.input_embeddings.col(4));
  EXPECT_EQ(e.params.output_embeddings.col(7), m.params.output_embeddings.col(4));
  EXPECT_EQ(e.params.output_bias(7), m.params.output_bias(4));
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const RnnState s = random_state(m, rng);
    const Vector y = forward_step(e, static_cast<WordId>(rng.below(8)), s).logits;
    EXPECT_EQ(y(7), y(4));
  }
}

TEST(ExpandModel, InvariantsOverRandomStates) {
  const RnnLmModel m = make_random_model(ten_word_vocab(6), {4, 6, 2}, 4, 0.5);
  CandidatePlan plan;
  plan.entries.push_back({"f", {{3, 1.0}, {4, 1.0}, {5, 1.0}}});
  plan.entries.push_back({"zz", {{3, 0.2}, {5, 0.7}}});
  plan.entries.push_back({"g", {{1, 2.0}}});
  const auto r = expand_model(m, plan);
  const RnnLmModel& e = r.model;
  ASSERT_EQ(e.explicit_size(), 9u);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    EXPECT_TRUE(bitwise_equal(e.params.layers[l].input_weights, m.params.layers[l].input_weights));
    EXPECT_TRUE(bitwise_equal(e.params.layers[l].recurrent_weights, m.params.layers[l].recurrent_weights));
    EXPECT_TRUE(bitwise_equal(e.params.layers[l].bias, m.params.layers[l].bias));
  }
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const RnnState s = random_state(m, rng);
    const WordId w = static_cast<WordId>(rng.below(6));
    const Vector y0 = forward_step(m, w, s).logits;
    const Vector y1 = forward_step(e, w, s).logits;
    for (long i = 0; i < 6; ++i) EXPECT_EQ(std::memcmp(&y0(i), &y1(i), sizeof(double)), 0);
    for (std::size_t k = 0; k < plan.entries.size(); ++k) {
      double num = 0, den = 0;
      for (const auto& c : plan.entries[k].candidates) {
        num += c.weight * y0(c.id);
        den += c.weight;
      }
      EXPECT_NEAR(y1(6 + static_cast<long>(k)), num / den, 1e-12);
    }
    const Vector p0 = softmax(y0), p1 = softmax(y1);
    for (long i = 0; i < 6; ++i) {
      for (long j = 0; j < 6; ++j) EXPECT_NEAR(p1(i) / p1(j), p0(i) / p0(j), 1e-12 * p0(i) / p0(j));
    }
  }
  // The new words also work as inputs.
  EXPECT_NO_THROW(forward_step(e, 8, zero_state(e)));
}

TEST(ExpandModel, RejectsInvalidPlans) {
  const RnnLmModel m = make_random_model(ten_word_vocab(6), {3, 4, 1}, 1);
  CandidatePlan dup;
  dup.entries = {{"f", {{3, 1.0}}}, {"f", {{4, 1.0}}}};
  EXPECT_THROW(expand_model(m, dup), Error);
  CandidatePlan in_shortlist;
  in_shortlist.entries = {{"a", {{3, 1.0}}}};
  EXPECT_THROW(expand_model(m, in_shortlist), Error);
  CandidatePlan out_of_range;
  out_of_range.entries = {{"f", {{6, 1.0}}}};
  EXPECT_THROW(expand_model(m, out_of_range), Error);
  CandidatePlan empty;
  empty.entries = {{"f", {}}};
  EXPECT_THROW(expand_model(m, empty), Error);
  CandidatePlan once;
  once.entries = {{"f", {{3, 1.0}}}};
  const RnnLmModel e = expand_model(m, once).model;
  EXPECT_THROW(expand_model(e, once), Error);
}

WordEmbeddings toy_embeddings() {
  // Shortlist content a..c plus tail words f, g; "far" points away from everything.
  const std::vector<std::string> words{"a", "b", "c", "f", "g", "far"};
  const std::vector<double> values{1, 0, 0.9, 0.1, 0, 1, 0.95, 0.05, 0.1, 0.9, -1, -1};
  return WordEmbeddings(words, 2, values);
}

TEST(SelectCandidates, TopKAndSkips) {
  const Vocabulary v = ten_word_vocab(6);
  const WordEmbeddings e = toy_embeddings();
  const std::vector<std::string> want{"f", "a", "missing", "g"};
  const auto sel = select_candidates(e, v, want, {2, false});
  ASSERT_EQ(sel.plan.entries.size(), 2u);
  EXPECT_EQ(sel.plan.entries[0].word, "f");
  ASSERT_EQ(sel.plan.entries[0].candidates.size(), 2u);
  EXPECT_EQ(v.decode(sel.plan.entries[0].candidates[0].id), "a");
  EXPECT_EQ(v.decode(sel.plan.entries[0].candidates[1].id), "b");
  for (const auto& c : sel.plan.entries[0].candidates) EXPECT_EQ(c.weight, 1.0);
  EXPECT_EQ(v.decode(sel.plan.entries[1].candidates[0].id), "c");
  ASSERT_EQ(sel.skipped.size(), 2u);
  EXPECT_EQ(sel.skipped[0].word, "a");
  EXPECT_EQ(sel.skipped[0].reason, SkipReason::kAlreadyInShortlist);
  EXPECT_EQ(sel.skipped[1].word, "missing");
  EXPECT_EQ(sel.skipped[1].reason, SkipReason::kNotInEmbeddings);
}

TEST(SelectCandidates, WeightedUsesSimilarity) {
  const Vocabulary v = ten_word_vocab(6);
  const WordEmbeddings e = toy_embeddings();
  const std::vector<std::string> want{"f", "far"};
  const auto sel = select_candidates(e, v, want, {3, true});
  ASSERT_EQ(sel.plan.entries.size(), 2u);
  for (const auto& c : sel.plan.entries[0].candidates) {
    EXPECT_NEAR(c.weight, std::max(c.similarity, 0.0), 1e-15);
  }
  // Every similarity of "far" is negative: equal weights instead.
  for (const auto& c : sel.plan.entries[1].candidates) EXPECT_EQ(c.weight, 1.0);
}

TEST(SelectCandidates, NoShortlistWordsMeansNoCandidates) {
  const Vocabulary v({"<s>", "</s>", "<unk>", "f"}, 3);
  const std::vector<std::string> want{"f"};
  const auto sel = select_candidates(toy_embeddings(), v, want, {});
  EXPECT_TRUE(sel.plan.entries.empty());
  ASSERT_EQ(sel.skipped.size(), 1u);
  EXPECT_EQ(sel.skipped[0].reason, SkipReason::kNoCandidates);
}

TEST(ExpandVocabulary, ReportAccountsForEveryWord) {
  const RnnLmModel m = make_random_model(ten_word_vocab(6), {3, 4, 1}, 1);
  const std::vector<std::string> want{"f", "missing", "b", "g"};
  const auto r = expand_vocabulary(m, toy_embeddings(), want, {2, false});
  EXPECT_EQ(r.report.requested(), want.size());
  EXPECT_EQ(r.report.expanded.size(), 2u);
  EXPECT_EQ(r.report.explicit_after, 8u);
  EXPECT_EQ(r.report.expanded[0].candidate_words, (std::vector<std::string>{"a", "b"}));
  const std::string json = report_to_json(r.report);
  EXPECT_NE(json.find("\"absent from embedding vocabulary\""), std::string::npos);
  EXPECT_NE(json.find("\"already in shortlist\""), std::string::npos);
  EXPECT_NE(json.find("\"candidates\""), std::string::npos);
  const std::vector<std::string> twice{"f", "f"};
  EXPECT_THROW(expand_vocabulary(m, toy_embeddings(), twice, {}), Error);
}

TEST(UnkPolicyNames, RoundTrip) {
  for (auto p : {UnkPolicy::kShortlistOnly, UnkPolicy::kUniform, UnkPolicy::kNgram}) {
    EXPECT_EQ(parse_unk_policy(to_string(p)), p);
  }
  EXPECT_THROW(parse_unk_policy("other"), Error);
}

TEST(FullVocab, UniformArithmetic) {
  // Explicit: <s> </s> <unk> a; six more words in V.
  const Vocabulary v = ten_word_vocab(4);
  const RnnLmModel m = make_zero_model(v, {2, 2, 1});
  const FullVocabScorer scorer(m, UnkPolicy::kUniform);
  ASSERT_EQ(scorer.oos_count(), 6u);
  Vector probs(4);
  probs << 0.0, 0.3, 0.35, 0.35;
  const std::vector<std::string> ctx{"<s>"};
  EXPECT_NEAR(scorer.prob(probs, "e", ctx), 0.05, 1e-15);
  EXPECT_NEAR(scorer.prob(probs, "a", ctx), 0.35, 1e-15);
  EXPECT_NEAR(scorer.residual_prob(probs, ctx), 0.05, 1e-15);
  EXPECT_THROW(scorer.prob(probs, "nowhere", ctx), UnknownWordError);
  const FullVocabScorer naive(m, UnkPolicy::kShortlistOnly);
  EXPECT_EQ(naive.prob(probs, "e", ctx), 0.35);
}

TEST(FullVocab, NgramShareArithmetic) {
  const Vocabulary v({"<s>", "</s>", "<unk>", "a", "o1", "o2"}, 4);
  NgramModel ngram(Vocabulary({"<s>", "</s>", "<unk>", "a", "o1", "o2"}, 6), 1);
  ngram.set({0}, {-std::numeric_limits<double>::infinity(), 0.0});
  ngram.set({1}, {std::log(0.5), 0.0});
  ngram.set({2}, {std::log(0.1), 0.0});
  ngram.set({3}, {std::log(0.32), 0.0});
  ngram.set({4}, {std::log(0.02), 0.0});
  ngram.set({5}, {std::log(0.06), 0.0});
  const RnnLmModel m = make_zero_model(v, {2, 2, 1});
  EXPECT_THROW(FullVocabScorer(m, UnkPolicy::kNgram), Error);
  const FullVocabScorer scorer(m, UnkPolicy::kNgram, &ngram);
  Vector probs(4);
  probs << 0.0, 0.3, 0.4, 0.3;
  const std::vector<std::string> ctx{"<s>", "a"};
  EXPECT_NEAR(scorer.prob(probs, "o1", ctx), 0.25 * 0.4, 1e-15);
  EXPECT_NEAR(scorer.prob(probs, "o2", ctx), 0.75 * 0.4, 1e-15);
  EXPECT_NEAR(scorer.residual_prob(probs, ctx), 0.4 * 0.1, 1e-15);
}

struct ToyFixture {
  Corpus corpus{{"a", "b", "c", "d"}, {"a", "e", "f", "g"}, {"b", "b", "c", "a"}, {"g", "f", "e", "d", "c"},
                {"a", "c", "e", "g"}, {"d", "b", "f"}};
  Vocabulary vocab = ten_word_vocab(6);
  NgramModel ngram;
  RnnLmModel model;

  ToyFixture()
      : ngram([&] {
          const auto previous = set_log_sink({});
          NgramModel n = train_kn(corpus, ten_word_vocab(10), 2);
          set_log_sink(previous);
          return n;
        }()),
        model(make_random_model(vocab, {3, 4, 1}, 6, 0.8)) {}
};

// Exhaustive sums over V for the history of a few word prefixes.
void check_accounting(const RnnLmModel& model, const FullVocabScorer& scorer, const Vocabulary& full,
                      UnkPolicy policy) {
  const std::vector<std::vector<std::string>> histories{{"<s>"}, {"<s>", "a"}, {"<s>", "g", "f"}, {"<s>", "e"}};
  for (const auto& history : histories) {
    RnnState st = zero_state(model);
    Vector logits;
    for (const auto& w : history) {
      auto out = forward_step(model, model.vocab.encode(w, EncodeMode::kShortlistOnly), st);
      st = out.state;
      logits = out.logits;
    }
    const Vector probs = softmax(logits);
    double sum = 0.0;
    for (const auto& w : full.words()) {
      if (w != kUnk) sum += scorer.prob(probs, w, history);
    }
    if (policy == UnkPolicy::kUniform) sum += scorer.residual_prob(probs, history);
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(FullVocab, ExhaustiveAccountingBeforeAndAfterExpansion) {
  ToyFixture f;
  for (auto policy : {UnkPolicy::kUniform, UnkPolicy::kNgram}) {
    const FullVocabScorer scorer(f.model, policy, &f.ngram);
    check_accounting(f.model, scorer, f.vocab, policy);
    CandidatePlan plan;
    plan.entries = {{"g", {{3, 1.0}, {4, 1.0}}}, {"e", {{5, 1.0}}}};
    const RnnLmModel e = expand_model(f.model, plan).model;
    const FullVocabScorer expanded(e, policy, &f.ngram, &f.vocab);
    EXPECT_EQ(expanded.oos_count(), 2u);
    check_accounting(e, expanded, f.vocab, policy);
  }
}

TEST(FullVocab, SentenceScoring) {
  ToyFixture f;
  const FullVocabScorer scorer(f.model, UnkPolicy::kUniform);
  const SentenceScore empty = scorer.score({});
  ASSERT_EQ(empty.log_probs.size(), 1u);
  EXPECT_NEAR(empty.log_probs[0], log_softmax(forward_step(f.model, kBosId, zero_state(f.model)).logits)(kEosId),
              1e-12);

  const SentenceScore s = scorer.score({"a", "zzz", "g"});
  EXPECT_EQ(s.log_probs.size(), 3u);
  EXPECT_EQ(s.skipped, 1u);
  EXPECT_LT(s.skipped_log_prob, 0.0);
  EXPECT_DOUBLE_EQ(s.total(), s.in_vocab_total() + s.skipped_log_prob);

  // In-shortlist sentences score like score_sentence.
  const SentenceScore plain = scorer.score({"a", "b", "c"});
  const auto ref = score_sentence(f.model, std::vector<WordId>{3, 4, 5});
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(plain.log_probs[i], ref[i], 1e-12);
}

}  // namespace
}  // namespace velm
