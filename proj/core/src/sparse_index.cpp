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

#include "l2ir/sparse_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

#include "l2ir/error.hpp"

namespace l2ir {

void BM25Params::validate() const {
  if (!(k1 > 0.0)) throw UsageError("bm25 k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) throw UsageError("bm25 b must be in [0, 1]");
}

double bm25_idf(std::size_t num_docs, std::size_t doc_freq) {
  const double n = static_cast<double>(num_docs);
  const double nt = static_cast<double>(doc_freq);
  return std::log((n - nt + 0.5) / (nt + 0.5) + 1.0);
}

void sort_ranking(std::vector<ScoredDoc>& ranking) {
  std::sort(ranking.begin(), ranking.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
}

InvertedIndex InvertedIndex::build(const DocumentStore& store,
                                   const Vocabulary& vocab, BM25Params params) {
  std::vector<std::string> ids;
  std::vector<TokenSequence> docs;
  ids.reserve(store.size());
  docs.reserve(store.size());
  for (const auto& doc : store.docs()) {
    ids.push_back(doc.id);
    docs.push_back(tokenize(doc.text, vocab));
  }
  return build(std::move(ids), docs, params);
}

InvertedIndex InvertedIndex::build(std::vector<std::string> doc_ids,
                                   std::span<const TokenSequence> docs,
                                   BM25Params params) {
  params.validate();
  if (doc_ids.empty()) throw DataError("cannot build an index over an empty corpus");
  if (doc_ids.size() != docs.size()) {
    throw DataError("index build: id and document counts differ");
  }
  InvertedIndex index;
  index.params_ = params;
  index.doc_ids_ = std::move(doc_ids);
  for (std::size_t d = 0; d < index.doc_ids_.size(); ++d) {
    if (!index.doc_index_.emplace(index.doc_ids_[d], d).second) {
      throw ConflictError("duplicate document id '" + index.doc_ids_[d] + "'");
    }
  }
  index.doc_len_.resize(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::span<const TokenId> seq = docs[d];
    if (!seq.empty() && seq.back() == Vocabulary::kEos) seq = seq.first(seq.size() - 1);
    index.doc_len_[d] = seq.size();
    std::map<TokenId, std::uint32_t> tf;
    for (TokenId t : seq) {
      if (!Vocabulary::is_reserved(t)) ++tf[t];
    }
    for (const auto& [term, count] : tf) {
      index.postings_[term].push_back({static_cast<std::uint32_t>(d), count});
    }
  }
  index.finalize();
  return index;
}

void InvertedIndex::finalize() {
  double total = 0.0;
  for (auto len : doc_len_) total += static_cast<double>(len);
  avgdl_ = total / static_cast<double>(doc_len_.size());
  length_norm_.resize(doc_len_.size());
  for (std::size_t d = 0; d < doc_len_.size(); ++d) {
    // An all-empty corpus has avgdl 0; every length ratio is then taken as 1.
    const double ratio =
        avgdl_ > 0.0 ? static_cast<double>(doc_len_[d]) / avgdl_ : 1.0;
    length_norm_[d] = params_.k1 * (1.0 - params_.b + params_.b * ratio);
  }
}

std::size_t InvertedIndex::doc_freq(TokenId term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

std::span<const Posting> InvertedIndex::postings(TokenId term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return {};
  return it->second;
}

std::vector<TokenId> InvertedIndex::terms() const {
  std::vector<TokenId> out;
  out.reserve(postings_.size());
  for (const auto& [term, list] : postings_) out.push_back(term);
  std::sort(out.begin(), out.end());
  return out;
}

double InvertedIndex::idf(TokenId term) const {
  return bm25_idf(num_docs(), doc_freq(term));
}

double InvertedIndex::score(std::span<const TokenId> query, std::size_t doc) const {
  if (doc >= num_docs()) throw DataError("document index out of range");
  double total = 0.0;
  for (TokenId term : query) {
    auto list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), doc,
                               [](const Posting& p, std::size_t d) { return p.doc < d; });
    if (it == list.end() || it->doc != doc) continue;
    const double tf = it->tf;
    total += idf(term) * tf * (params_.k1 + 1.0) / (tf + length_norm_[doc]);
  }
  return total;
}

double InvertedIndex::score(std::span<const TokenId> query,
                            std::string_view doc_id) const {
  auto it = doc_index_.find(std::string(doc_id));
  if (it == doc_index_.end()) {
    throw DataError("unknown document id '" + std::string(doc_id) + "'");
  }
  return score(query, it->second);
}

std::vector<ScoredDoc> InvertedIndex::search(std::span<const TokenId> query,
                                             std::size_t top_k) const {
  if (top_k == 0) throw UsageError("search: top_k must be >= 1");
  std::vector<double> acc(num_docs(), 0.0);
  std::vector<char> touched(num_docs(), 0);
  for (TokenId term : query) {
    auto list = postings(term);
    if (list.empty()) continue;
    const double w = idf(term);
    for (const auto& p : list) {
      const double tf = p.tf;
      acc[p.doc] += w * tf * (params_.k1 + 1.0) / (tf + length_norm_[p.doc]);
      touched[p.doc] = 1;
    }
  }
  std::vector<ScoredDoc> hits;
  for (std::size_t d = 0; d < acc.size(); ++d) {
    if (touched[d] && acc[d] > 0.0) hits.push_back({doc_ids_[d], acc[d]});
  }
  sort_ranking(hits);
  if (hits.size() > top_k) hits.resize(top_k);
  return hits;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  nlohmann::json postings = nlohmann::json::object();
  for (TokenId term : terms()) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : postings_.at(term)) list.push_back({p.doc, p.tf});
    postings[std::to_string(term)] = std::move(list);
  }
  nlohmann::json doc = {{"k1", params_.k1},
                        {"b", params_.b},
                        {"num_docs", num_docs()},
                        {"avgdl", avgdl_},
                        {"doc_ids", doc_ids_},
                        {"doc_len", doc_len_},
                        {"postings", std::move(postings)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump() << '\n';
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    InvertedIndex index;
    index.params_ = {doc.at("k1").get<double>(), doc.at("b").get<double>()};
    index.params_.validate();
    index.doc_ids_ = doc.at("doc_ids").get<std::vector<std::string>>();
    index.doc_len_ = doc.at("doc_len").get<std::vector<std::size_t>>();
    if (index.doc_ids_.empty() || index.doc_ids_.size() != index.doc_len_.size()) {
      throw ParseError(0, "inconsistent index document tables");
    }
    for (std::size_t d = 0; d < index.doc_ids_.size(); ++d) {
      index.doc_index_.emplace(index.doc_ids_[d], d);
    }
    for (const auto& [key, list] : doc.at("postings").items()) {
      auto& dst = index.postings_[static_cast<TokenId>(std::stoul(key))];
      for (const auto& p : list) {
        dst.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
      }
    }
    index.finalize();
    return index;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

std::vector<std::string> mine_hard_negatives(const InvertedIndex& index,
                                             std::size_t doc,
                                             std::span<const TokenId> doc_tokens,
                                             std::size_t k, std::size_t query_len,
                                             std::uint64_t seed) {
  const std::size_t n = index.num_docs();
  if (n <= k) {
    throw DataError("hard-negative mining needs more than K=" + std::to_string(k) +
                    " documents, corpus has " + std::to_string(n));
  }
  if (doc >= n) throw DataError("mining: document index out of range");
  std::vector<std::string> negatives;
  if (k == 0) return negatives;

  const TokenSequence query = truncate(doc_tokens, query_len);
  const std::string& self = index.doc_id(doc);
  for (auto& hit : index.search(query, k + 1)) {
    if (hit.doc_id == self) continue;
    if (negatives.size() == k) break;
    negatives.push_back(std::move(hit.doc_id));
  }
  if (negatives.size() < k) {
    std::vector<std::string> pool;
    for (std::size_t d = 0; d < n; ++d) {
      const auto& id = index.doc_id(d);
      if (d != doc && std::find(negatives.begin(), negatives.end(), id) == negatives.end()) {
        pool.push_back(id);
      }
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(doc)};
    std::mt19937_64 gen(seq);
    std::shuffle(pool.begin(), pool.end(), gen);
    for (std::size_t i = 0; negatives.size() < k; ++i) negatives.push_back(pool[i]);
  }
  return negatives;
}

std::vector<NegativesEntry> mine_all_negatives(const DocumentStore& store,
                                               const Vocabulary& vocab,
                                               const InvertedIndex& index,
                                               std::size_t k, std::size_t query_len,
                                               std::uint64_t seed) {
  if (store.size() != index.num_docs()) {
    throw DataError("mining: store and index sizes differ");
  }
  std::vector<NegativesEntry> entries;
  entries.reserve(store.size());
  for (std::size_t d = 0; d < store.size(); ++d) {
    const TokenSequence tokens = tokenize(store[d].text, vocab);
    entries.push_back(
        {store[d].id, mine_hard_negatives(index, d, tokens, k, query_len, seed)});
  }
  return entries;
}

void write_negatives(const std::vector<NegativesEntry>& entries,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : entries) {
    nlohmann::json obj = {{"id", e.id}, {"negatives", e.negatives}};
    out << obj.dump() << '\n';
  }
}

std::vector<NegativesEntry> read_negatives(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<NegativesEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      entries.push_back({obj.at("id").get<std::string>(),
                         obj.at("negatives").get<std::vector<std::string>>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return entries;
}

}  // namespace l2ir
