#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "velm/checkpoint.hpp"
#include "velm/error.hpp"
#include "velm/pipeline.hpp"

namespace velm {
namespace {

namespace fs = std::filesystem;

Hypothesis hyp(const char* words, double am, std::size_t rank) {
  Hypothesis h;
  h.words = split_tokens(words);
  h.acoustic_score = am;
  h.lm_score = -1.0;
  h.rank = rank;
  return h;
}

// Explicit words a b c; x and y only in the tail and the embeddings, close
// to a and b respectively.
PipelineData make_data() {
  Vocabulary vocab({"<s>", "</s>", "<unk>", "a", "b", "c", "x", "y"}, 6);
  RnnLmModel model = make_random_model(vocab, {4, 5, 1}, 3, 0.3);
  WordEmbeddings emb({"a", "b", "c", "x", "y"}, 3,
                     {1, 0, 0, 0, 1, 0, 0, 0, 1, 0.9, 0.1, 0, 0.1, 0.9, 0.1});
  NBestList test;
  test["u1"] = {hyp("a x b", -5, 1), hyp("a b b", -6, 2)};
  test["u2"] = {hyp("c c", -4, 1), hyp("c y", -4.5, 2)};
  References refs{{"u1", split_tokens("a x b")}, {"u2", split_tokens("c y")}};
  Corpus ppl{split_tokens("a x b"), split_tokens("c y"), split_tokens("a q")};
  return {std::move(model), std::move(emb), std::move(test), std::move(refs), std::move(ppl), {}, {}, {}, {}};
}

PipelineSettings small_settings() {
  PipelineSettings s;
  s.candidates.k = 2;
  s.lm_scale = 1.0;
  return s;
}

TEST(Pipeline, NeuralRowsAndExpansion) {
  const PipelineData data = make_data();
  const PipelineReport r = run_pipeline(data, small_settings());
  ASSERT_EQ(r.systems.size(), 2u);
  EXPECT_EQ(r.systems[0].name, "LSTM");
  EXPECT_EQ(r.systems[1].name, "VE-LSTM");
  EXPECT_EQ(r.systems[0].explicit_size, 6u);
  EXPECT_EQ(r.systems[1].explicit_size, 7u);  // only x is in a 1-best
  EXPECT_EQ(r.new_words, (std::vector<std::string>{"x"}));
  ASSERT_EQ(r.expansion.expanded.size(), 1u);
  EXPECT_EQ(r.first_pass.errors(), 1u);
  EXPECT_EQ(r.systems[0].ppl_skipped, 1u);  // q is outside V
  EXPECT_EQ(r.systems[0].ppl_tokens, 9u);
  EXPECT_EQ(r.systems[0].lm_scale, 1.0);
  EXPECT_EQ(r.system("VE-LSTM"), &r.systems[1]);
  EXPECT_EQ(r.system("KN"), nullptr);
}

TEST(Pipeline, KnRowSharesTokenSet) {
  PipelineData data = make_data();
  const Corpus train{split_tokens("a x b"), split_tokens("c y"), split_tokens("a b c"), split_tokens("b a")};
  data.ngram = train_kn(train, data.model.vocab, 2);
  const PipelineReport r = run_pipeline(data, small_settings());
  ASSERT_EQ(r.systems.size(), 3u);
  EXPECT_EQ(r.systems[0].name, "KN");
  EXPECT_EQ(r.systems[0].explicit_size, 8u);
  EXPECT_EQ(r.systems[0].ppl_tokens, r.systems[1].ppl_tokens);
  EXPECT_EQ(r.systems[0].ppl_skipped, r.systems[1].ppl_skipped);
  EXPECT_GT(r.systems[0].perplexity, 1.0);
}

TEST(Pipeline, NoNewWordsLeavesModelUnchanged) {
  PipelineData data = make_data();
  data.test_nbest["u1"][0] = hyp("a c b", -5, 1);
  data.test_nbest["u2"][0] = hyp("c c", -4, 1);
  const PipelineReport r = run_pipeline(data, small_settings());
  EXPECT_TRUE(r.new_words.empty());
  const auto& lstm = r.systems[0];
  const auto& ve = r.systems[1];
  EXPECT_EQ(lstm.explicit_size, ve.explicit_size);
  EXPECT_EQ(lstm.perplexity, ve.perplexity);
  EXPECT_EQ(lstm.counts, ve.counts);
}

TEST(Pipeline, SweepDeepensExtraction) {
  PipelineSettings s = small_settings();
  s.sweep_n = {1, 2};
  const PipelineReport r = run_pipeline(make_data(), s);
  ASSERT_EQ(r.sweep.size(), 2u);
  EXPECT_EQ(r.sweep[0].new_words, 1u);
  EXPECT_EQ(r.sweep[1].new_words, 2u);
  EXPECT_TRUE(r.sweep[1].all_in_embeddings);
  EXPECT_EQ(r.sweep[1].expanded, 2u);
  EXPECT_EQ(r.sweep[0].perplexity, r.systems[1].perplexity);
}

TEST(Pipeline, TuningPicksGridPoint) {
  PipelineData data = make_data();
  data.dev_nbest = data.test_nbest;
  data.dev_refs = data.test_refs;
  PipelineSettings s = small_settings();
  s.tune = true;
  s.grid = {{3.0, 5.0}, {0.25}};
  const PipelineReport r = run_pipeline(data, s);
  for (const auto& row : r.systems) {
    EXPECT_TRUE(row.lm_scale == 3.0 || row.lm_scale == 5.0) << row.name;
    EXPECT_EQ(row.word_penalty, 0.25);
  }
}

TEST(Pipeline, ErrorsNameTheStage) {
  PipelineSettings s = small_settings();
  s.tune = true;
  try {
    run_pipeline(make_data(), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("tune:", 0), 0u) << e.what();
  }
  s.tune = false;
  s.unk_policy = UnkPolicy::kNgram;
  try {
    run_pipeline(make_data(), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("score:", 0), 0u) << e.what();
  }
  s.unk_policy = UnkPolicy::kUniform;
  s.sweep_n = {0};
  EXPECT_THROW(run_pipeline(make_data(), s), Error);
}

TEST(Pipeline, ReportRendering) {
  PipelineSettings s = small_settings();
  s.sweep_n = {1};
  const PipelineReport r = run_pipeline(make_data(), s);
  const std::string json = pipeline_report_to_json(r);
  for (const char* key : {"\"first_pass\"", "\"systems\"", "\"VE-LSTM\"", "\"new_words\"", "\"expansion\"",
                          "\"extraction_sweep\"", "\"perplexity_skipped\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
  const std::string text = pipeline_report_to_text(r);
  EXPECT_NE(text.find("1-best"), std::string::npos);
  EXPECT_NE(text.find("VE-LSTM"), std::string::npos);
  EXPECT_EQ(pipeline_report_to_json(run_pipeline(make_data(), s)), json);
}

PipelineConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_pipeline_config(in, "/base", "cfg");
}

TEST(PipelineConfig, ParsesEveryKey) {
  const PipelineConfig c = parse(
      "# comment\n"
      "model = lm.bin\n"
      "embeddings = /abs/vec.txt  # trailing comment\n"
      "test_nbest = t.nbest\n"
      "test_refs = t.ref\n"
      "arpa = kn.arpa\n"
      "full_vocab = v.txt\n"
      "ppl_text = p.txt\n"
      "dev_nbest = d.nbest\n"
      "dev_refs = d.ref\n"
      "report = out.json\n"
      "extract_n = 3\n"
      "k = 4\n"
      "weighted = true\n"
      "unk_policy = ngram\n"
      "lm_scale = 7.5\n"
      "word_penalty = -0.5\n"
      "tune = false\n"
      "tune_scales = 1 2 3\n"
      "tune_penalties = 0 1\n"
      "sweep_n = 1 5 50\n"
      "threads = 0\n");
  EXPECT_EQ(c.model, fs::path("/base/lm.bin"));
  EXPECT_EQ(c.embeddings, fs::path("/abs/vec.txt"));
  EXPECT_EQ(c.dev_refs, fs::path("/base/d.ref"));
  EXPECT_EQ(c.report, fs::path("/base/out.json"));
  const auto& s = c.settings;
  EXPECT_EQ(s.extract_n, 3u);
  EXPECT_EQ(s.candidates.k, 4u);
  EXPECT_TRUE(s.candidates.weighted);
  EXPECT_EQ(s.unk_policy, UnkPolicy::kNgram);
  EXPECT_EQ(s.lm_scale, 7.5);
  EXPECT_EQ(s.word_penalty, -0.5);
  EXPECT_FALSE(s.tune);
  EXPECT_EQ(s.grid.lm_scales, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(s.grid.penalties, (std::vector<double>{0, 1}));
  EXPECT_EQ(s.sweep_n, (std::vector<std::size_t>{1, 5, 50}));
  EXPECT_EQ(s.threads, 1u);
}

TEST(PipelineConfig, Defaults) {
  const std::string req = "model=m\nembeddings=e\ntest_nbest=n\ntest_refs=r\n";
  const PipelineConfig c = parse(req);
  EXPECT_FALSE(c.settings.tune);
  EXPECT_EQ(c.settings.extract_n, 1u);
  EXPECT_EQ(c.settings.unk_policy, UnkPolicy::kUniform);
  EXPECT_TRUE(c.arpa.empty());
  EXPECT_TRUE(parse(req + "dev_nbest=d\ndev_refs=dr\n").settings.tune);
}

void expect_parse_error(const std::string& text, std::size_t line) {
  try {
    parse(text);
    FAIL() << "no error for:\n" << text;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
  }
}

TEST(PipelineConfig, Errors) {
  const std::string req = "model=m\nembeddings=e\ntest_nbest=n\ntest_refs=r\n";
  expect_parse_error(req + "colour = red\n", 5);
  expect_parse_error(req + "no equals sign\n", 5);
  expect_parse_error(req + "lm_scale =\n", 5);
  expect_parse_error(req + "lm_scale = ten\n", 5);
  expect_parse_error(req + "k = -1\n", 5);
  expect_parse_error(req + "weighted = maybe\n", 5);
  expect_parse_error(req + "unk_policy = magic\n", 5);
  expect_parse_error("model=m\nembeddings=e\ntest_nbest=n\n", 0);
  expect_parse_error(req + "dev_nbest=d\n", 0);
  expect_parse_error(req + "tune = true\n", 0);
  expect_parse_error(req + "extract_n = 0\n", 0);
}

class PipelineFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("velm_pipeline_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(PipelineFiles, ConfigToReport) {
  const PipelineData data = make_data();
  save_checkpoint(data.model, dir_ / "lm.bin");
  save_w2v_text(data.embeddings, dir_ / "vec.txt");
  write_nbest(data.test_nbest, dir_ / "test.nbest");
  write_references(data.test_refs, dir_ / "test.ref");
  {
    std::ofstream cfg(dir_ / "run.cfg");
    cfg << "model = lm.bin\nembeddings = vec.txt\ntest_nbest = test.nbest\ntest_refs = test.ref\n"
           "k = 2\nlm_scale = 1\n";
  }
  const PipelineConfig c = read_pipeline_config(dir_ / "run.cfg");
  const PipelineData loaded = load_pipeline_data(c);
  EXPECT_EQ(loaded.ppl_text.size(), 2u);  // the test references
  EXPECT_EQ(loaded.model.params.output_bias, data.model.params.output_bias);
  EXPECT_EQ(loaded.test_refs, data.test_refs);
  EXPECT_EQ(pipeline_report_to_json(run_pipeline(loaded, c.settings)),
            pipeline_report_to_json(run_pipeline(loaded, small_settings())));

  fs::remove(dir_ / "lm.bin");
  try {
    load_pipeline_data(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("load model:", 0), 0u) << e.what();
  }
  EXPECT_THROW(read_pipeline_config(dir_ / "missing.cfg"), Error);
}

}  // namespace
}  // namespace velm
