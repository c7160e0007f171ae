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

#include "l2ir/augmentation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "l2ir/error.hpp"

namespace l2ir {

const char* to_string(AugmentationMode mode) {
  return mode == AugmentationMode::kCrop ? "crop" : "dropout";
}

AugmentationMode parse_augmentation_mode(std::string_view text) {
  if (text == "crop") return AugmentationMode::kCrop;
  if (text == "dropout") return AugmentationMode::kDropout;
  throw UsageError("unknown augmentation mode '" + std::string(text) +
                   "' (expected crop|dropout)");
}

void AugmentationConfig::validate() const {
  if (anchor_len < 1) throw UsageError("anchor_len must be >= 1");
  if (passage_len < anchor_len) throw UsageError("passage_len must be >= anchor_len");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw UsageError("dropout_p must be in [0, 1)");
  }
}

TokenSequence random_crop(std::span<const TokenId> doc_tokens, std::size_t len,
                          Rng& rng) {
  if (len == 0) throw UsageError("random_crop: len must be >= 1");
  std::span<const TokenId> content = doc_tokens;
  if (!content.empty() && content.back() == Vocabulary::kEos) {
    content = content.first(content.size() - 1);
  }
  TokenSequence out;
  if (content.size() <= len) {
    out.assign(content.begin(), content.end());
  } else {
    std::uniform_int_distribution<std::size_t> offset(0, content.size() - len);
    const std::size_t start = offset(rng);
    auto span = content.subspan(start, len);
    out.assign(span.begin(), span.end());
  }
  out.push_back(Vocabulary::kEos);
  return out;
}

PairBuilder::PairBuilder(const DocumentStore& store, const Vocabulary& vocab,
                         const std::vector<NegativesEntry>& negatives,
                         AugmentationConfig cfg)
    : store_(store), cfg_(std::move(cfg)) {
  cfg_.validate();
  query_prefix_ = encode_words(cfg_.query_prefix, vocab);
  passage_prefix_ = encode_words(cfg_.passage_prefix, vocab);
  if (passage_prefix_.size() + 1 >= cfg_.passage_len) {
    throw UsageError("passage_len leaves no room after the passage prefix");
  }
  doc_tokens_.reserve(store.size());
  for (const auto& doc : store.docs()) {
    doc_tokens_.push_back(tokenize(doc.text, vocab));
    if (doc_tokens_.back().size() - 1 < cfg_.anchor_len) ++num_short_docs_;
  }
  if (num_short_docs_ > 0) {
    spdlog::warn("{} of {} documents are shorter than anchor_len={} and are used whole",
                 num_short_docs_, store.size(), cfg_.anchor_len);
  }

  negatives_.resize(store.size());
  if (cfg_.k == 0) return;
  std::unordered_map<std::string_view, const NegativesEntry*> by_id;
  for (const auto& entry : negatives) by_id.emplace(entry.id, &entry);
  for (std::size_t d = 0; d < store.size(); ++d) {
    auto it = by_id.find(store[d].id);
    if (it == by_id.end()) {
      throw DataError("no mined negatives for document '" + store[d].id + "'");
    }
    const auto& ids = it->second->negatives;
    if (ids.size() < cfg_.k) {
      throw DataError("document '" + store[d].id + "' has " +
                      std::to_string(ids.size()) + " mined negatives, K=" +
                      std::to_string(cfg_.k) + " required");
    }
    for (std::size_t j = 0; j < cfg_.k; ++j) {
      auto idx = store.index_of(ids[j]);
      if (!idx) throw DataError("mined negative '" + ids[j] + "' is not in the store");
      negatives_[d].push_back(*idx);
    }
  }
}

TrainingPair PairBuilder::make_pair(std::size_t doc, Rng& rng) const {
  const TokenSequence& tokens = doc_tokens_.at(doc);
  TrainingPair pair;
  pair.source_id = store_[doc].id;
  if (cfg_.mode == AugmentationMode::kCrop) {
    pair.anchor = with_prefix(query_prefix_, random_crop(tokens, cfg_.anchor_len, rng),
                              cfg_.passage_len);
    if (cfg_.crop_positive) {
      const std::size_t body = cfg_.passage_len - passage_prefix_.size() - 1;
      pair.positive =
          with_prefix(passage_prefix_, random_crop(tokens, body, rng), cfg_.passage_len);
    } else {
      pair.positive = with_prefix(passage_prefix_, tokens, cfg_.passage_len);
    }
  } else {
    pair.positive = with_prefix(passage_prefix_, tokens, cfg_.passage_len);
    pair.anchor = pair.positive;
  }
  pair.negatives.reserve(negatives_[doc].size());
  for (std::size_t neg : negatives_[doc]) {
    pair.negatives.push_back(
        with_prefix(passage_prefix_, doc_tokens_[neg], cfg_.passage_len));
  }
  return pair;
}

std::vector<std::vector<TrainingPair>> PairBuilder::build_batches(
    std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  std::vector<std::size_t> order(store_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<TrainingPair>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<TrainingPair> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(make_pair(order[i], rng));
    batches.push_back(std::move(batch));
  }
  return batches;
}

void write_pairs(const std::vector<TrainingPair>& pairs,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : pairs) {
    nlohmann::json obj = {{"source_id", p.source_id},
                          {"anchor", p.anchor},
                          {"positive", p.positive},
                          {"negatives", p.negatives}};
    out << obj.dump() << '\n';
  }
}

}  // namespace l2ir
