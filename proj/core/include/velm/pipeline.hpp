#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "velm/expansion.hpp"
#include "velm/nbest.hpp"
#include "velm/ngram.hpp"
#include "velm/rescore.hpp"
#include "velm/rnnlm.hpp"
#include "velm/skipgram.hpp"
#include "velm/wer.hpp"

namespace velm {

struct PipelineSettings {
  std::size_t extract_n = 1;
  CandidateOptions candidates;
  UnkPolicy unk_policy = UnkPolicy::kUniform;
  double lm_scale = 10.0;
  double word_penalty = 0.0;
  // Grid-search lm_scale and word_penalty on the dev set for each system.
  bool tune = false;
  TuneGrid grid;
  // Extra n values for the 1-best vs N-best extraction comparison.
  std::vector<std::size_t> sweep_n;
  std::size_t threads = 1;
};

// Flat `key = value` file; '#' starts a comment. Relative paths are
// resolved against the directory holding the config file.
struct PipelineConfig {
  std::filesystem::path model;
  std::filesystem::path embeddings;
  std::filesystem::path test_nbest;
  std::filesystem::path test_refs;
  std::filesystem::path arpa;        // optional: adds the KN system
  std::filesystem::path full_vocab;  // optional: V, else the model's vocabulary
  std::filesystem::path ppl_text;    // optional: perplexity text, else the test references
  std::filesystem::path dev_nbest;   // optional with dev_refs: enables tuning
  std::filesystem::path dev_refs;
  std::filesystem::path report;      // optional: JSON report destination
  PipelineSettings settings;
};

PipelineConfig parse_pipeline_config(std::istream& in, const std::filesystem::path& base_dir,
                                     const std::string& source = "<stream>");
PipelineConfig read_pipeline_config(const std::filesystem::path& path);

struct PipelineData {
  RnnLmModel model;
  WordEmbeddings embeddings;
  NBestList test_nbest;
  References test_refs;
  Corpus ppl_text;
  std::optional<NgramModel> ngram;
  std::optional<Vocabulary> full_vocab;
  std::optional<NBestList> dev_nbest;
  std::optional<References> dev_refs;
};

PipelineData load_pipeline_data(const PipelineConfig& config);

struct SystemRow {
  std::string name;
  std::size_t explicit_size = 0;
  double perplexity = 0.0;
  std::size_t ppl_tokens = 0;
  std::size_t ppl_skipped = 0;
  double lm_scale = 0.0;
  double word_penalty = 0.0;
  EditCounts counts;
  std::size_t rescore_failures = 0;

  double wer() const { return counts.wer_percent(); }
};

struct SweepRow {
  std::size_t n = 0;
  std::size_t new_words = 0;
  bool all_in_embeddings = true;
  std::size_t expanded = 0;
  double perplexity = 0.0;
  EditCounts counts;

  double wer() const { return counts.wer_percent(); }
};

struct PipelineReport {
  EditCounts first_pass;  // decoder 1-best
  std::vector<SystemRow> systems;  // KN (if available), LSTM, VE-LSTM
  std::vector<std::string> new_words;
  ExpansionReport expansion;
  std::vector<SweepRow> sweep;

  const SystemRow* system(std::string_view name) const;
};

// Extracts V_new from the test n-best list, expands the model, and
// compares perplexity and rescoring WER of every system. Errors are
// rethrown as velm::Error prefixed with the failing stage.
PipelineReport run_pipeline(const PipelineData& data, const PipelineSettings& settings);

std::string pipeline_report_to_json(const PipelineReport& report);
// Fixed-width comparison table.
std::string pipeline_report_to_text(const PipelineReport& report);

}  // namespace velm
