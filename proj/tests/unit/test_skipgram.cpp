#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "velm/error.hpp"
#include "velm/random.hpp"
#include "velm/skipgram.hpp"

namespace velm {
namespace {

WordEmbeddings random_embeddings(std::size_t n, std::size_t dim, std::uint64_t seed,
                                 std::vector<std::string>* words_out = nullptr) {
  Rng rng(seed);
  std::vector<std::string> words;
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i) {
    words.push_back("v" + std::to_string(i));
    for (std::size_t d = 0; d < dim; ++d) values.push_back(rng.uniform(-1, 1));
  }
  if (words_out) *words_out = words;
  return WordEmbeddings(words, dim, values);
}

Vocabulary shortlist_over(const std::vector<std::string>& words, std::size_t content) {
  std::vector<std::string> all{"<s>", "</s>", "<unk>"};
  all.insert(all.end(), words.begin(), words.end());
  return Vocabulary(all, kReservedCount + content);
}

TEST(Cosine, Basics) {
  const std::vector<double> a{1, 0}, b{0, 2}, c{3, 0}, z{0, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, z), 0.0);
  const WordEmbeddings e = random_embeddings(30, 7, 2);
  for (const auto& w : e.words()) EXPECT_NEAR(e.cosine(w, w), 1.0, 1e-9);
}

TEST(SkipGram, SharedContextsMeanSimilarVectors) {
  Rng rng(1);
  Corpus c;
  const char* left[] = {"p1", "p2", "p3"};
  const char* right[] = {"q1", "q2", "q3"};
  const char* other_left[] = {"r1", "r2", "r3"};
  const char* other_right[] = {"s1", "s2", "s3"};
  for (int i = 0; i < 3000; ++i) {
    const char* target = i % 2 ? "x" : "y";
    c.push_back({left[rng.below(3)], target, right[rng.below(3)]});
    c.push_back({other_left[rng.below(3)], "z", other_right[rng.below(3)]});
  }
  SkipGramConfig cfg;
  cfg.dim = 20;
  cfg.window = 2;
  cfg.epochs = 3;
  cfg.subsample = 0.0;
  const WordEmbeddings e = train_skipgram(c, cfg);
  EXPECT_GT(e.cosine("x", "y"), e.cosine("x", "z"));
  EXPECT_GT(e.cosine("x", "y"), 0.8);
}

TEST(SkipGram, CoversEveryTokenAndIsDeterministic) {
  const Corpus c{{"a", "b", "c", "a"}, {"d", "a", "rare"}, {"b", "b", "c"}};
  SkipGramConfig cfg;
  cfg.dim = 8;
  const WordEmbeddings e1 = train_skipgram(c, cfg);
  const WordEmbeddings e2 = train_skipgram(c, cfg);
  EXPECT_EQ(e1.size(), 5u);
  for (const char* w : {"a", "b", "c", "d", "rare"}) EXPECT_TRUE(e1.contains(w));
  std::ostringstream s1, s2;
  save_w2v_text(e1, s1);
  save_w2v_text(e2, s2);
  EXPECT_EQ(s1.str(), s2.str());
  for (const auto& w : e1.words()) {
    const auto a = e1.vector(w), b = e2.vector(w);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    for (double v : a) EXPECT_TRUE(std::isfinite(v));
  }
  cfg.seed = 2;
  EXPECT_FALSE(std::ranges::equal(train_skipgram(c, cfg).vector("a"), e1.vector("a")));
}

TEST(Neighbors, IdenticalVectorRanksFirst) {
  const std::vector<std::string> words{"q", "a", "b", "c"};
  const std::vector<double> values{1, 2, 3, 1, 2, 3, -1, 0, 1, 0, 1, 0};
  const WordEmbeddings e(words, 3, values);
  const auto n = nearest_in_shortlist(e, "q", shortlist_over({"a", "b", "c"}, 3), 8);
  ASSERT_EQ(n.size(), 3u);
  EXPECT_EQ(n[0].word, "a");
  EXPECT_NEAR(n[0].similarity, 1.0, 1e-12);
}

TEST(Neighbors, ShortListWhenKExceedsShortlist) {
  std::vector<std::string> words;
  const WordEmbeddings e = random_embeddings(10, 4, 3, &words);
  const auto n = nearest_in_shortlist(e, "v9", shortlist_over(words, 4), 8);
  EXPECT_EQ(n.size(), 4u);
}

TEST(Neighbors, MatchesBruteForceRanking) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::vector<std::string> words;
    const std::size_t n = seed % 2 ? 20 : 100;
    const WordEmbeddings e = random_embeddings(n, 5, seed, &words);
    const Vocabulary v = shortlist_over(words, n * 3 / 4);
    for (const std::string& target : {words[0], words[n - 1]}) {
      std::vector<std::pair<double, WordId>> oracle;
      const auto t = e.vector(target);
      for (std::size_t id = kReservedCount; id < v.shortlist_size(); ++id) {
        const std::string& w = v.decode(static_cast<WordId>(id));
        if (w == target) continue;
        const auto x = e.vector(w);
        double dot = 0, nt = 0, nx = 0;
        for (std::size_t d = 0; d < 5; ++d) {
          dot += t[d] * x[d];
          nt += t[d] * t[d];
          nx += x[d] * x[d];
        }
        oracle.emplace_back(dot / std::sqrt(nt * nx), static_cast<WordId>(id));
      }
      std::sort(oracle.begin(), oracle.end(), [](auto& a, auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      const auto got = nearest_in_shortlist(e, target, v, 8);
      ASSERT_EQ(got.size(), 8u);
      for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(got[i].id, oracle[i].second);
        EXPECT_NEAR(got[i].similarity, oracle[i].first, 1e-12);
      }
    }
  }
}

TEST(Neighbors, TiesBrokenByAscendingId) {
  const std::vector<std::string> words{"t", "b", "a"};
  const std::vector<double> values{1, 0, 2, 0, 3, 0};
  const WordEmbeddings e(words, 2, values);
  const auto n = nearest_in_shortlist(e, "t", Vocabulary({"<s>", "</s>", "<unk>", "b", "a"}, 5), 2);
  EXPECT_EQ(n[0].word, "b");
  EXPECT_EQ(n[1].word, "a");
}

TEST(Neighbors, NeverReturnsTargetReservedOrTail) {
  std::vector<std::string> words;
  const WordEmbeddings base = random_embeddings(12, 3, 5, &words);
  // Give the reserved tokens vectors too; they must still be excluded.
  std::vector<std::string> all{"<s>", "</s>", "<unk>"};
  std::vector<double> values(9, 1.0);
  for (const auto& w : words) {
    all.push_back(w);
    const auto v = base.vector(w);
    values.insert(values.end(), v.begin(), v.end());
  }
  const WordEmbeddings e(all, 3, values);
  const Vocabulary v = shortlist_over(words, 6);
  std::set<std::string> shortlist(words.begin(), words.begin() + 6);
  for (const auto& target : words) {
    for (const auto& n : nearest_in_shortlist(e, target, v, 20)) {
      EXPECT_NE(n.word, target);
      EXPECT_TRUE(shortlist.count(n.word)) << n.word;
    }
  }
}

TEST(Neighbors, UnknownTargetIsDistinguishable) {
  const WordEmbeddings e = random_embeddings(5, 3, 1);
  try {
    nearest_in_shortlist(e, "missing", Vocabulary(), 3);
    FAIL();
  } catch (const UnknownWordError& err) {
    EXPECT_EQ(err.word(), "missing");
  }
}

TEST(Word2VecText, RoundTrip) {
  const WordEmbeddings e = random_embeddings(20, 6, 8);
  std::stringstream s;
  save_w2v_text(e, s);
  const WordEmbeddings back = load_w2v_text(s);
  ASSERT_EQ(back.size(), e.size());
  ASSERT_EQ(back.dim(), e.dim());
  for (const auto& w : e.words()) {
    const auto a = e.vector(w), b = back.vector(w);
    for (std::size_t d = 0; d < a.size(); ++d) EXPECT_LE(std::abs(a[d] - b[d]), 1e-6);
  }
}

TEST(Word2VecText, HandWrittenFile) {
  std::istringstream in("2 3\nfoo 1 2 2\nbar 0 3 4\n");
  const WordEmbeddings e = load_w2v_text(in);
  // (0 + 6 + 8) / (3 * 5)
  EXPECT_NEAR(e.cosine("foo", "bar"), 14.0 / 15.0, 1e-15);
}

TEST(Word2VecText, BodyMustMatchHeader) {
  std::istringstream short_body("5 2\na 1 2\nb 1 2\nc 1 2\nd 1 2\n");
  EXPECT_THROW(load_w2v_text(short_body), ParseError);
  std::istringstream wrong_dim("2 2\na 1 2\nb 1\n");
  try {
    load_w2v_text(wrong_dim);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream bad_number("1 2\na 1 x\n");
  EXPECT_THROW(load_w2v_text(bad_number), ParseError);
}

}  // namespace
}  // namespace velm
