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

// Relevance judgments, ranked runs, and the ranking metrics computed from
// them. Grades above zero count as relevant.

#ifndef L2IR_METRICS_HPP_
#define L2IR_METRICS_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "l2ir/sparse_index.hpp"

namespace l2ir {

// query id -> doc id -> grade
using Qrels = std::map<std::string, std::map<std::string, int>>;
// query id -> ranking, best first
using RetrievalRun = std::map<std::string, std::vector<ScoredDoc>>;

// `query_id<TAB>doc_id<TAB>grade` lines. Negative grades and repeated
// (query, doc) pairs are rejected.
Qrels read_qrels(const std::filesystem::path& path);
void write_qrels(const Qrels& qrels, const std::filesystem::path& path);

// TREC `qid Q0 docid rank score tag` lines.
void write_run(const RetrievalRun& run, const std::filesystem::path& path,
               const std::string& tag);
// Rankings are ordered by the rank column, which must run 1, 2, ... per query.
RetrievalRun read_run(const std::filesystem::path& path);

// Throws DataError on duplicate documents or increasing scores.
void validate_run(const RetrievalRun& run);

struct MetricResult {
  std::map<std::string, double> per_query;
  double mean = 0.0;
  // Run queries without any relevant document; excluded from the mean.
  std::vector<std::string> excluded;
};

// Exponential gain 2^grade - 1 with 1 / log2(rank + 1) discount.
MetricResult ndcg_at_k(const RetrievalRun& run, const Qrels& qrels, std::size_t k = 10);
MetricResult recall_at_k(const RetrievalRun& run, const Qrels& qrels, std::size_t k);
// Reciprocal rank of the first relevant document within the top k (0 = the
// whole ranking); zero when none is found.
MetricResult mrr(const RetrievalRun& run, const Qrels& qrels, std::size_t k = 0);

// Expected nDCG@k of a uniformly random ranking of `num_docs` documents with
// exactly one relevant document.
double random_ndcg_single_relevant(std::size_t num_docs, std::size_t k = 10);

}  // namespace l2ir

#endif  // L2IR_METRICS_HPP_
