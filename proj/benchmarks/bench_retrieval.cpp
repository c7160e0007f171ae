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


#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "l2ir/dense_retrieval.hpp"
#include "l2ir/experiments.hpp"
#include "l2ir/sparse_index.hpp"

namespace {

using namespace l2ir;

struct Bm25Fixture {
  SyntheticCorpus corpus;
  Vocabulary vocab;
  InvertedIndex index;
  std::vector<TokenSequence> queries;

  explicit Bm25Fixture(std::size_t topics) {
    SyntheticCorpusSpec spec;
    spec.n_topics = topics;
    spec.docs_per_topic = 100;
    corpus = generate_synthetic_corpus(spec);
    vocab = build_vocab(corpus.store, 1 << 16, 1);
    index = InvertedIndex::build(corpus.store, vocab);
    std::vector<Query> qs;
    Qrels qrels;
    make_crop_queries(corpus.store, 16, 1, qs, qrels);
    for (std::size_t i = 0; i < qs.size() && i < 256; ++i) queries.push_back(tokenize(qs[i].text, vocab));
  }
};

void BM_Bm25Search(benchmark::State& state) {
  const Bm25Fixture f(static_cast<std::size_t>(state.range(0)));
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.index.search(f.queries[q], 10));
    q = (q + 1) % f.queries.size();
  }
  state.counters["docs"] = static_cast<double>(f.corpus.store.size());
}
BENCHMARK(BM_Bm25Search)->Arg(10)->Arg(100);

void BM_Bm25Build(benchmark::State& state) {
  const Bm25Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(InvertedIndex::build(f.corpus.store, f.vocab));
}
BENCHMARK(BM_Bm25Build)->Arg(10)->Arg(100);

void BM_DenseSearch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64;
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<std::string> ids;
  std::vector<float> v(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("d" + std::to_string(i));
    double norm = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      v[i * dim + c] = nd(rng);
      norm += static_cast<double>(v[i * dim + c]) * v[i * dim + c];
    }
    for (std::size_t c = 0; c < dim; ++c) v[i * dim + c] /= static_cast<float>(std::sqrt(norm));
  }
  const EmbeddingIndex index(std::move(ids), dim, v);
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(search(index, index.row(q), 10));
    q = (q + 1) % n;
  }
}
BENCHMARK(BM_DenseSearch)->Arg(1000)->Arg(10000);

}  // namespace
