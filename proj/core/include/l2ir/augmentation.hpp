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

// Contrastive training pairs from unlabeled documents.

#ifndef L2IR_AUGMENTATION_HPP_
#define L2IR_AUGMENTATION_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "l2ir/corpus.hpp"
#include "l2ir/sparse_index.hpp"

namespace l2ir {

using Rng = std::mt19937_64;

enum class AugmentationMode { kCrop, kDropout };

const char* to_string(AugmentationMode mode);
AugmentationMode parse_augmentation_mode(std::string_view text);

struct AugmentationConfig {
  AugmentationMode mode = AugmentationMode::kCrop;
  std::size_t anchor_len = 64;    // content tokens in the anchor crop
  std::size_t passage_len = 512;  // total tokens of positives and negatives
  std::size_t k = 7;              // hard negatives per anchor
  std::string query_prefix = "Query: ";
  std::string passage_prefix = "Passage: ";
  std::uint64_t seed = 0;
  double dropout_p = 0.1;  // dropout mode only
  // false: the crop-mode positive is the head of the document rather than an
  // independent random crop.
  bool crop_positive = true;

  void validate() const;
};

struct TrainingPair {
  std::string source_id;
  TokenSequence anchor;
  TokenSequence positive;
  std::vector<TokenSequence> negatives;

  bool operator==(const TrainingPair&) const = default;
};

// `len` consecutive content tokens starting at a uniformly drawn offset, with
// EOS appended. Documents with at most `len` content tokens come back whole.
TokenSequence random_crop(std::span<const TokenId> doc_tokens, std::size_t len,
                          Rng& rng);

// Builds pairs for one corpus against a mined negatives table. Documents are
// tokenized once at construction.
class PairBuilder {
 public:
  PairBuilder(const DocumentStore& store, const Vocabulary& vocab,
              const std::vector<NegativesEntry>& negatives, AugmentationConfig cfg);

  const AugmentationConfig& config() const { return cfg_; }
  const TokenSequence& query_prefix() const { return query_prefix_; }
  const TokenSequence& passage_prefix() const { return passage_prefix_; }
  std::size_t num_short_docs() const { return num_short_docs_; }

  // Crop mode: anchor = query prefix + crop(anchor_len); positive = passage
  // prefix + an independent crop sized to passage_len.
  // Dropout mode: anchor and positive are the same passage-prefixed, truncated
  // document; the model's dropout supplies the perturbation.
  // Negatives are passage-prefixed mined documents truncated to passage_len.
  TrainingPair make_pair(std::size_t doc, Rng& rng) const;

  // One pair per document, in an order shuffled by `rng`; the last batch may
  // be short.
  std::vector<std::vector<TrainingPair>> build_batches(std::size_t batch_size,
                                                       Rng& rng) const;

 private:
  const DocumentStore& store_;
  AugmentationConfig cfg_;
  TokenSequence query_prefix_;
  TokenSequence passage_prefix_;
  std::vector<TokenSequence> doc_tokens_;
  std::vector<std::vector<std::size_t>> negatives_;  // store indices per doc
  std::size_t num_short_docs_ = 0;
};

// {"anchor": [...], "positive": [...], "negatives": [[...], ...]} per line.
void write_pairs(const std::vector<TrainingPair>& pairs,
                 const std::filesystem::path& path);

}  // namespace l2ir

#endif  // L2IR_AUGMENTATION_HPP_
