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

// Okapi BM25 over an inverted index, plus BM25 hard-negative mining.

#ifndef L2IR_SPARSE_INDEX_HPP_
#define L2IR_SPARSE_INDEX_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "l2ir/corpus.hpp"

namespace l2ir {

struct BM25Params {
  double k1 = 1.2;
  double b = 0.75;

  // Throws UsageError unless k1 > 0 and 0 <= b <= 1.
  void validate() const;
};

struct Posting {
  std::uint32_t doc;  // position in the document store
  std::uint32_t tf;   // >= 1

  bool operator==(const Posting&) const = default;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

// log((N - n_t + 0.5) / (n_t + 0.5) + 1); strictly positive for n_t <= N.
double bm25_idf(std::size_t num_docs, std::size_t doc_freq);

// Sorts by score descending, then doc_id ascending.
void sort_ranking(std::vector<ScoredDoc>& ranking);

class InvertedIndex {
 public:
  // Reserved ids (PAD, UNK, BOS, EOS) never enter the postings. Document
  // length counts every token except the trailing EOS.
  static InvertedIndex build(const DocumentStore& store, const Vocabulary& vocab,
                             BM25Params params = {});
  static InvertedIndex build(std::vector<std::string> doc_ids,
                             std::span<const TokenSequence> docs,
                             BM25Params params = {});

  std::size_t num_docs() const { return doc_ids_.size(); }
  double avgdl() const { return avgdl_; }
  const BM25Params& params() const { return params_; }
  const std::string& doc_id(std::size_t doc) const { return doc_ids_[doc]; }
  std::size_t doc_len(std::size_t doc) const { return doc_len_[doc]; }
  std::size_t doc_freq(TokenId term) const;
  std::span<const Posting> postings(TokenId term) const;
  std::size_t num_terms() const { return postings_.size(); }
  // Every term with at least one posting, ascending.
  std::vector<TokenId> terms() const;

  double idf(TokenId term) const;
  // Sums over the query as a sequence: a repeated term counts per occurrence.
  double score(std::span<const TokenId> query, std::size_t doc) const;
  // Throws DataError for an unknown id.
  double score(std::span<const TokenId> query, std::string_view doc_id) const;

  // Documents with positive score, best first, at most top_k.
  std::vector<ScoredDoc> search(std::span<const TokenId> query,
                                std::size_t top_k) const;

  // Writes params, statistics and postings as JSON.
  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

 private:
  BM25Params params_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::size_t> doc_index_;
  std::vector<std::size_t> doc_len_;
  std::vector<double> length_norm_;  // k1 * (1 - b + b * |d| / avgdl)
  double avgdl_ = 0.0;
  std::unordered_map<TokenId, std::vector<Posting>> postings_;

  void finalize();
};

struct NegativesEntry {
  std::string id;
  std::vector<std::string> negatives;

  bool operator==(const NegativesEntry&) const = default;
};

// Top-k BM25 hits for the document's own text truncated to `query_len`,
// excluding the document itself. Short lists are padded with distinct random
// non-self documents drawn from a generator seeded by (seed, doc).
std::vector<std::string> mine_hard_negatives(const InvertedIndex& index,
                                             std::size_t doc,
                                             std::span<const TokenId> doc_tokens,
                                             std::size_t k, std::size_t query_len,
                                             std::uint64_t seed);

// Mines every document of the store in store order.
std::vector<NegativesEntry> mine_all_negatives(const DocumentStore& store,
                                               const Vocabulary& vocab,
                                               const InvertedIndex& index,
                                               std::size_t k, std::size_t query_len,
                                               std::uint64_t seed);

// {"id": anchor_id, "negatives": [id, ...]} per line.
void write_negatives(const std::vector<NegativesEntry>& entries,
                     const std::filesystem::path& path);
std::vector<NegativesEntry> read_negatives(const std::filesystem::path& path);

}  // namespace l2ir

#endif  // L2IR_SPARSE_INDEX_HPP_
