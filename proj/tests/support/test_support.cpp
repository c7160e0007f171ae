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

#include "test_support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace l2ir::test {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

DocumentStore random_store(std::mt19937_64& rng, std::size_t n_docs, std::size_t max_len,
                           std::size_t vocab_words) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> word(0, vocab_words - 1);
  DocumentStore store;
  for (std::size_t i = 0; i < n_docs; ++i) {
    std::string text;
    const std::size_t n = len(rng);
    for (std::size_t j = 0; j < n; ++j) {
      if (j) text += ' ';
      text += "w" + std::to_string(word(rng));
    }
    store.add({"d" + std::to_string(i), text});
  }
  return store;
}

TokenSequence random_sequence(std::mt19937_64& rng, std::size_t vocab_size, std::size_t len) {
  std::uniform_int_distribution<TokenId> tok(Vocabulary::kNumReserved,
                                             static_cast<TokenId>(vocab_size - 1));
  TokenSequence seq(len - 1);
  for (auto& t : seq) t = tok(rng);
  seq.push_back(Vocabulary::kEos);
  return seq;
}

BruteForceBm25::BruteForceBm25(const DocumentStore& store, const Vocabulary& vocab,
                               BM25Params params)
    : params_(params) {
  double total = 0.0;
  for (const auto& d : store.docs()) {
    ids_.push_back(d.id);
    TokenSequence t = tokenize(d.text, vocab);
    t.pop_back();
    total += static_cast<double>(t.size());
    docs_.push_back(std::move(t));
  }
  avgdl_ = total / static_cast<double>(docs_.size());
}

double BruteForceBm25::score(const TokenSequence& query, std::size_t doc) const {
  const double n_docs = static_cast<double>(docs_.size());
  double s = 0.0;
  for (TokenId q : query) {
    if (Vocabulary::is_reserved(q)) continue;
    double df = 0.0;
    for (const auto& d : docs_) {
      if (std::find(d.begin(), d.end(), q) != d.end()) df += 1.0;
    }
    const double tf = static_cast<double>(std::count(docs_[doc].begin(), docs_[doc].end(), q));
    if (tf == 0.0) continue;
    const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
    const double dl = static_cast<double>(docs_[doc].size());
    s += idf * tf * (params_.k1 + 1.0) /
         (tf + params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl_));
  }
  return s;
}

std::vector<ScoredDoc> BruteForceBm25::rank(const TokenSequence& query, std::size_t k) const {
  std::vector<ScoredDoc> out;
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    const double s = score(query, d);
    if (s > 0.0) out.push_back({ids_[d], s});
  }
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

namespace {

int grade_of(const std::map<std::string, int>& rel, const std::string& id) {
  auto it = rel.find(id);
  return it == rel.end() ? 0 : it->second;
}

}  // namespace

double naive_ndcg(const std::vector<ScoredDoc>& ranking, const std::map<std::string, int>& rel,
                  std::size_t k) {
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
    dcg += (std::pow(2.0, grade_of(rel, ranking[i].doc_id)) - 1.0) / std::log2(i + 2.0);
  }
  std::vector<int> grades;
  for (const auto& [id, g] : rel) grades.push_back(g);
  std::sort(grades.rbegin(), grades.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < grades.size() && i < k; ++i) {
    idcg += (std::pow(2.0, grades[i]) - 1.0) / std::log2(i + 2.0);
  }
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double naive_recall(const std::vector<ScoredDoc>& ranking, const std::map<std::string, int>& rel,
                    std::size_t k) {
  double relevant = 0.0;
  for (const auto& [id, g] : rel) relevant += g > 0 ? 1.0 : 0.0;
  double hit = 0.0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
    hit += grade_of(rel, ranking[i].doc_id) > 0 ? 1.0 : 0.0;
  }
  return relevant == 0.0 ? 0.0 : hit / relevant;
}

double naive_rr(const std::vector<ScoredDoc>& ranking, const std::map<std::string, int>& rel) {
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (grade_of(rel, ranking[i].doc_id) > 0) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

ModelConfig tiny_config(std::size_t vocab_size) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.d_ff = 32;
  cfg.max_context = 32;
  cfg.init_std = 0.2;
  return cfg;
}

}  // namespace l2ir::test
