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

// Dense retrieval: corpus embedding, exact cosine search, and evaluation.

#ifndef L2IR_DENSE_RETRIEVAL_HPP_
#define L2IR_DENSE_RETRIEVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "l2ir/corpus.hpp"
#include "l2ir/metrics.hpp"
#include "l2ir/model.hpp"
#include "l2ir/sparse_index.hpp"

namespace l2ir {

class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  // Throws NumericalError unless every row has unit norm.
  EmbeddingIndex(std::vector<std::string> doc_ids, std::size_t dim,
                 std::vector<float> vectors, std::uint64_t fingerprint = 0);

  std::size_t size() const { return doc_ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  std::span<const float> row(std::size_t i) const;
  std::span<const float> vectors() const { return vectors_; }
  // Checkpoint fingerprint of the model that produced the vectors.
  std::uint64_t fingerprint() const { return fingerprint_; }

  // Binary: "L2EI" | u32 version | u64 fingerprint | u32 count | u32 dim
  // | per document: u32 id length, id | float32 matrix.
  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

  bool operator==(const EmbeddingIndex&) const = default;

 private:
  std::vector<std::string> doc_ids_;
  std::size_t dim_ = 0;
  std::vector<float> vectors_;
  std::uint64_t fingerprint_ = 0;
};

// Embeds `prefix + text`, truncated to `max_len` tokens, at the EOS position.
template <typename T>
std::vector<float> embed_text(const Model<T>& model, const Vocabulary& vocab,
                              std::string_view text, const TokenSequence& prefix,
                              std::size_t max_len);

// Every document with the passage prefix. Throws UsageError when max_len
// exceeds the model's context window.
template <typename T>
EmbeddingIndex embed_corpus(const Model<T>& model, const DocumentStore& store,
                            const Vocabulary& vocab, std::size_t max_len,
                            std::string_view passage_prefix = "Passage: ",
                            std::uint64_t fingerprint = 0);

// Exact top-k by dot product, ties broken by doc id ascending. The query need
// not be normalised; scores are then scaled but the order is unchanged.
std::vector<ScoredDoc> search(const EmbeddingIndex& index, std::span<const float> query,
                              std::size_t k);

struct Query {
  std::string id;
  std::string text;
};

// JSONL with "id" and "text" fields.
std::vector<Query> read_queries(const std::filesystem::path& path);
void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path);

struct EvalConfig {
  std::size_t passage_len = 512;
  std::size_t query_len = 0;  // 0: same as passage_len
  std::size_t top_k = 100;
  std::size_t ndcg_k = 10;
  std::vector<std::size_t> recall_ks = {10, 100};
  std::string query_prefix = "Query: ";
  std::string passage_prefix = "Passage: ";
  std::string run_tag = "l2ir";
};

struct EvalReport {
  std::string run_tag;
  std::size_t num_queries = 0;
  std::map<std::string, double> metrics;  // name -> mean, e.g. "ndcg@10"
  std::map<std::string, std::map<std::string, double>> per_query;  // qid -> name -> value
  std::vector<std::string> excluded;  // queries with no relevant document
  RetrievalRun run;

  // Pretty-printed JSON of everything except the run.
  std::string to_json() const;
};

// Scores an existing run against qrels.
EvalReport evaluate_run(RetrievalRun run, const Qrels& qrels, const EvalConfig& cfg);

// Embeds the corpus and the prefixed queries, searches, and scores.
template <typename T>
EvalReport evaluate(const Model<T>& model, const DocumentStore& store,
                    const Vocabulary& vocab, const std::vector<Query>& queries,
                    const Qrels& qrels, const EvalConfig& cfg,
                    std::uint64_t fingerprint = 0);

// Same, against a prebuilt index.
template <typename T>
EvalReport evaluate(const Model<T>& model, const EmbeddingIndex& index,
                    const Vocabulary& vocab, const std::vector<Query>& queries,
                    const Qrels& qrels, const EvalConfig& cfg);

// BM25 ranking of unprefixed queries.
RetrievalRun bm25_run(const InvertedIndex& index, const Vocabulary& vocab,
                      const std::vector<Query>& queries, std::size_t top_k);

}  // namespace l2ir

#endif  // L2IR_DENSE_RETRIEVAL_HPP_
