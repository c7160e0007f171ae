// Copyright 2026 The l2ir Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Synthetic corpora and the experiment drivers built on them.

#ifndef L2IR_EXPERIMENTS_HPP_
#define L2IR_EXPERIMENTS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "l2ir/augmentation.hpp"
#include "l2ir/corpus.hpp"
#include "l2ir/dense_retrieval.hpp"
#include "l2ir/metrics.hpp"
#include "l2ir/model.hpp"
#include "l2ir/training.hpp"

namespace l2ir {

struct SyntheticCorpusSpec {
  std::size_t n_topics = 10;
  std::size_t docs_per_topic = 10;
  std::size_t doc_len = 64;            // words per document
  std::size_t topic_vocab_size = 30;   // words private to each topic
  std::size_t shared_vocab_size = 300; // filler words common to all topics
  double topic_fraction = 0.5;         // chance a word comes from the topic
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticCorpus {
  DocumentStore store;
  std::vector<std::size_t> topics;  // per document, store order
};

// Word i of a document is drawn from its topic's words with probability
// topic_fraction and from the shared filler otherwise; both draws are
// Zipf-distributed. Ids are "doc-<topic>-<n>".
SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

// Surface form of the filler word with rank `i`.
std::string filler_word(std::size_t i);

// One query per document: a random span of `crop_words` words drawn with
// `seed`, relevant only to its source document. Query ids are "q-<doc id>".
void make_crop_queries(const DocumentStore& store, std::size_t crop_words,
                       std::uint64_t seed, std::vector<Query>& queries, Qrels& qrels);

struct PasskeySpec {
  std::size_t n_docs = 20;
  std::size_t doc_len = 64;  // words, key sentence included
  double depth = 0.5;
  std::size_t key_len = 5;   // digits
  std::size_t filler_vocab_size = 300;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PasskeyCorpus {
  DocumentStore store;
  std::vector<Query> queries;
  Qrels qrels;
  std::vector<std::string> keys;
  std::vector<std::size_t> key_offsets;  // word offset of the key sentence
};

inline constexpr std::size_t kKeySentenceWords = 5;  // "the pass key is <digits>"

// Filler words with "the pass key is <digits>" at word offset
// round(depth * (doc_len - 5)). Query i is "pass key <digits_i>".
PasskeyCorpus generate_passkey_corpus(const PasskeySpec& spec);

// Fraction of queries whose top-ranked document is relevant.
double accuracy_at_1(const RetrievalRun& run, const Qrels& qrels);

// Two model configs that may differ only in max_context and rope_theta. A
// vocab_size of 0 means it is taken from the data.
struct ContextPairConfig {
  ModelConfig config_long;
  ModelConfig config_short;
  std::size_t doc_len = 240;  // words per training/eval document

  std::size_t truncate_to() const;
  // UsageError when the configs differ in anything else.
  void validate() const;
};

struct FillSweepConfig {
  std::vector<double> fills = {0.25, 0.5, 0.75, 0.9, 1.0};
  std::size_t n_docs = 20;
  double depth = 0.5;
  std::size_t key_len = 5;
  std::size_t filler_vocab_size = 300;
  std::uint64_t seed = 21;

  // UsageError for a fill outside (0, 1].
  void validate() const;
};

// Everything an experiment holds fixed. The defaults are the desk-scale
// reference setup.
struct ExperimentSetup {
  SyntheticCorpusSpec corpus;
  ModelConfig model;  // vocab_size is taken from the data
  std::uint64_t model_seed = 7;
  // Causal-LM steps applied to every fresh model before contrastive training.
  std::size_t pretrain_steps = 200;
  std::size_t pretrain_batch_size = 8;
  double pretrain_lr = 1e-3;
  std::uint64_t pretrain_seed = 5;
  AugmentationConfig augmentation;
  TrainConfig train;
  EvalConfig eval;
  std::size_t query_words = 16;
  std::uint64_t query_seed = 999;
  std::size_t short_context = 64;
  std::size_t long_context = 256;
  std::size_t long_doc_len = 240;
  FillSweepConfig fill;

  ExperimentSetup();
  // Module defaults everywhere and no LM pretraining.
  static ExperimentSetup library_defaults();
  void validate() const;
  ContextPairConfig context_pair() const;
};

// JSON object with optional sections "corpus", "model", "pretrain",
// "augmentation", "train", "eval", "context" and "fill". Missing keys keep
// the value in `base`; unknown keys raise UsageError. The result is not
// validated.
ExperimentSetup parse_experiment_setup(std::string_view json_text,
                                       const ExperimentSetup& base = ExperimentSetup());
ExperimentSetup load_experiment_setup(const std::filesystem::path& path,
                                      const ExperimentSetup& base = ExperimentSetup());
std::string to_json(const ExperimentSetup& setup);

// {"passkey": {"n_docs", "doc_len", "depth", "key_len", "filler_vocab_size",
// "seed"}}, every key optional. Not validated.
PasskeySpec parse_passkey_spec(std::string_view json_text);

// Corpus, vocabulary, BM25 index and held-out crop queries for one setup.
struct ExperimentData {
  SyntheticCorpus corpus;
  Vocabulary vocab;
  InvertedIndex index;
  std::vector<Query> queries;
  Qrels qrels;
};

// `extra_texts` only contribute to the vocabulary.
ExperimentData prepare_data(const ExperimentSetup& setup,
                            const std::vector<std::string>& extra_texts = {});

// Fresh model from the setup, LM-pretrained on the corpus.
Model<float> make_backbone(const ExperimentSetup& setup, const ModelConfig& cfg,
                           const ExperimentData& data);

struct TwinOutcome {
  std::string label;
  std::vector<StepLog> log;
  EvalReport report;

  double ndcg() const;  // the report's nDCG at the configured cutoff
};

// First 1-based step whose loss is below `threshold`, if any.
std::optional<std::size_t> first_step_below(const std::vector<StepLog>& log, double threshold);

// Trains `model` in place and evaluates it on the held-out queries.
TwinOutcome train_and_evaluate(Model<float>& model, const ExperimentData& data,
                               const AugmentationConfig& aug, const TrainConfig& train,
                               const EvalConfig& eval, std::string label);

struct EndToEndReport {
  double bm25_ndcg = 0.0;
  double random_init_ndcg = 0.0;
  double pretrained_ndcg = 0.0;
  TwinOutcome trained;

  std::string to_json() const;
  void write(const std::filesystem::path& dir, const ExperimentSetup& setup) const;
};

struct AblationReport {
  std::size_t k = 0;
  TwinOutcome with_negatives;
  TwinOutcome without_negatives;

  std::string to_json() const;
  void write(const std::filesystem::path& dir, const ExperimentSetup& setup) const;
};

struct AugmentationReport {
  TwinOutcome crop;
  TwinOutcome dropout;
  bool dropout_degenerate = false;  // p = 0: positives equal anchors

  std::string to_json() const;
  void write(const std::filesystem::path& dir, const ExperimentSetup& setup) const;
};

struct ContextPairReport {
  std::size_t long_context = 0;
  std::size_t short_context = 0;
  std::size_t truncate_to = 0;
  std::uint64_t input_hash = 0;  // shared by both twins
  TwinOutcome long_twin;
  TwinOutcome short_twin;

  double delta() const { return long_twin.ndcg() - short_twin.ndcg(); }
  std::string to_json() const;
  void write(const std::filesystem::path& dir, const ExperimentSetup& setup) const;
};

struct FillPoint {
  double fill = 0.0;
  std::size_t doc_words = 0;
  std::size_t tokens = 0;  // prefix and EOS included
  double accuracy = 0.0;
};

struct FillSweepReport {
  std::size_t max_context = 0;
  std::size_t n_docs = 0;
  std::vector<FillPoint> points;

  double accuracy_at(double fill) const;
  std::string to_csv() const;  // fill,doc_words,tokens,accuracy
  std::string to_json() const;
  void write(const std::filesystem::path& dir, const ExperimentSetup& setup) const;
};

struct ContextStudy {
  ContextPairReport pair;
  FillSweepReport sweep;  // on the trained long twin
};

// Random-init, pretrained and trained nDCG for the base setup.
EndToEndReport run_end_to_end(const ExperimentSetup& setup);

// Twins with K = setup.train.k and K = 0, all else identical.
AblationReport run_ablation_hard_negatives(const ExperimentSetup& setup);

// Twins in crop and dropout mode, all else identical.
AugmentationReport run_augmentation_comparison(const ExperimentSetup& setup);

// Trains both context twins on long documents and evaluates them on the same
// token sequences truncated to the shorter window. The vocabulary also
// covers `extra_texts`.
ContextPairReport run_context_pair(const ExperimentSetup& setup, const ContextPairConfig& cfg,
                                   const std::vector<std::string>& extra_texts = {},
                                   std::optional<Model<float>>* long_model = nullptr,
                                   Vocabulary* vocab = nullptr);

// Passkey corpora whose documents fill the given fraction of the model's
// window, counting the passage prefix and EOS.
std::vector<PasskeyCorpus> make_fill_corpora(const FillSweepConfig& cfg, std::size_t max_context,
                                             std::size_t prefix_tokens);

FillSweepReport run_fill_fraction_sweep(const Model<float>& model, const Vocabulary& vocab,
                                        const FillSweepConfig& cfg, const EvalConfig& eval);

// Context pair followed by the fill sweep on the long twin.
ContextStudy run_context_study(const ExperimentSetup& setup);

// Aligned plain-text table for any report JSON written by these drivers.
std::string render_report(std::string_view report_json);

}  // namespace l2ir

#endif  // L2IR_EXPERIMENTS_HPP_
