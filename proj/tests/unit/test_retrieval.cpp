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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "l2ir/checkpoint.hpp"
#include "l2ir/dense_retrieval.hpp"
#include "l2ir/error.hpp"
#include "l2ir/experiments.hpp"
#include "l2ir/metrics.hpp"
#include "test_support.hpp"

using namespace l2ir;
using l2ir::test::TempDir;

namespace {

EmbeddingIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::string> ids;
  std::vector<float> v;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("d" + std::to_string(i));
    std::vector<double> row(dim);
    double norm = 0.0;
    for (auto& x : row) {
      x = nd(rng);
      norm += x * x;
    }
    for (double x : row) v.push_back(static_cast<float>(x / std::sqrt(norm)));
  }
  return EmbeddingIndex(std::move(ids), dim, std::move(v));
}

std::vector<ScoredDoc> scan(const EmbeddingIndex& index, std::span<const float> q, std::size_t k) {
  std::vector<ScoredDoc> all;
  for (std::size_t i = 0; i < index.size(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < index.dim(); ++c) {
      s += static_cast<double>(index.row(i)[c]) * static_cast<double>(q[c]);
    }
    all.push_back({index.doc_ids()[i], s});
  }
  std::sort(all.begin(), all.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<std::string> ids(const std::vector<ScoredDoc>& r) {
  std::vector<std::string> out;
  for (const auto& s : r) out.push_back(s.doc_id);
  return out;
}

std::vector<ScoredDoc> ranking(std::initializer_list<const char*> docs) {
  std::vector<ScoredDoc> r;
  double s = 10.0;
  for (const char* d : docs) r.push_back({d, s--});
  return r;
}

// Random run over docs d0..d(n-1) and random graded qrels for the same queries.
void random_instance(std::mt19937_64& rng, RetrievalRun& run, Qrels& qrels) {
  for (int q = 0; q < 10; ++q) {
    const std::string qid = "q" + std::to_string(q);
    const std::size_t n = 5 + rng() % 20;
    std::vector<std::string> docs;
    for (std::size_t i = 0; i < n; ++i) docs.push_back("d" + std::to_string(i));
    std::shuffle(docs.begin(), docs.end(), rng);
    double score = 1.0;
    for (const auto& d : docs) run[qid].push_back({d, score -= 0.01});
    const std::size_t rel = 1 + rng() % 5;
    for (std::size_t i = 0; i < rel; ++i) qrels[qid]["d" + std::to_string(rng() % (n + 3))] = rng() % 3;
    qrels[qid]["d0"] = 1 + static_cast<int>(rng() % 3);
  }
}

}  // namespace

TEST_CASE("search reflexivity, clamping and ties") {
  std::mt19937_64 rng(1);
  const EmbeddingIndex index = random_index(rng, 30, 8);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto r = search(index, index.row(i), 3);
    CHECK(r[0].doc_id == index.doc_ids()[i]);
    CHECK(std::abs(r[0].score - 1.0) < 1e-6);
  }
  CHECK(search(index, index.row(0), 100).size() == 30);
  const std::vector<float> v = {0.6f, 0.8f, 0.6f, 0.8f};
  const EmbeddingIndex tied({"b", "a"}, 2, v);
  CHECK(ids(search(tied, std::span<const float>(v).first(2), 2)) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("search equals an exhaustive scan and ignores query scale") {
  std::mt19937_64 rng(2);
  const EmbeddingIndex index = random_index(rng, 200, 16);
  const EmbeddingIndex queries = random_index(rng, 20, 16);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto got = search(index, queries.row(q), 10);
    const auto want = scan(index, queries.row(q), 10);
    CHECK(ids(got) == ids(want));
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i].score - want[i].score) < 1e-6);
    std::vector<float> scaled(queries.row(q).begin(), queries.row(q).end());
    for (auto& x : scaled) x *= 3.5f;
    CHECK(ids(search(index, scaled, 10)) == ids(got));
  }
}

TEST_CASE("embedding index validation and round trip") {
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(EmbeddingIndex({"a"}, 2, {1.0f, 1.0f}), NumericalError);
  CHECK_THROWS(EmbeddingIndex({"a", "b"}, 2, {1.0f, 0.0f}));
  EmbeddingIndex index = random_index(rng, 12, 5);
  index = EmbeddingIndex(index.doc_ids(), 5, {index.vectors().begin(), index.vectors().end()}, 77);
  TempDir tmp;
  index.save(tmp / "e.idx");
  const EmbeddingIndex back = EmbeddingIndex::load(tmp / "e.idx");
  CHECK(back == index);
  CHECK(back.fingerprint() == 77);
  test::write_text(tmp / "bad.idx", "L2EI garbage");
  CHECK_THROWS_AS(EmbeddingIndex::load(tmp / "bad.idx"), DataError);
}

TEST_CASE("embed_corpus shape, determinism and duplicates") {
  DocumentStore store;
  std::mt19937_64 rng(4);
  const DocumentStore base = test::random_store(rng, 9, 60, 20);
  for (const auto& d : base.docs()) store.add(d);
  store.add({"copy", base[0].text});
  const std::vector<std::string> forced = {"Query:", "Passage:"};
  const Vocabulary vocab = build_vocab(store, 1000, 1, forced);
  const Model<float> model(test::tiny_config(vocab.size()), 4);
  const EmbeddingIndex a = embed_corpus(model, store, vocab, 16);
  const EmbeddingIndex b = embed_corpus(model, store, vocab, 16);
  CHECK(a.size() == 10);
  CHECK(a.dim() == 16);
  CHECK(a == b);
  CHECK(std::equal(a.row(0).begin(), a.row(0).end(), a.row(9).begin()));
  CHECK_THROWS_AS(embed_corpus(model, store, vocab, 33), UsageError);
  const auto q = embed_text(model, vocab, base[3].text, encode_words("Passage: ", vocab), 16);
  CHECK(search(a, q, 1)[0].doc_id == "d3");
}

TEST_CASE("ndcg examples") {
  const Qrels one = {{"q", {{"b", 1}}}};
  CHECK(std::abs(ndcg_at_k({{"q", ranking({"a", "b", "c"})}}, one).mean - 1.0 / std::log2(3.0)) < 1e-9);
  CHECK(ndcg_at_k({{"q", ranking({"b", "a"})}}, one).mean == 1.0);
  CHECK(ndcg_at_k({{"q", ranking({"a", "c"})}}, one).mean == 0.0);
  const Qrels two = {{"q", {{"a", 2}, {"b", 1}}}};
  CHECK(ndcg_at_k({{"q", ranking({"a", "b", "x"})}}, two).mean == 1.0);
  CHECK(ndcg_at_k({{"q", ranking({"b", "a"})}}, two).mean < 1.0);
  CHECK(ndcg_at_k({{"q", ranking({"x", "b"})}}, one, 1).mean == 0.0);
}

TEST_CASE("metric edge cases") {
  const Qrels qrels = {{"q1", {{"a", 1}}}, {"q2", {{"a", 0}}}};
  const RetrievalRun run = {{"q1", ranking({"a"})}, {"q2", ranking({"a"})}};
  const MetricResult r = ndcg_at_k(run, qrels);
  CHECK(r.excluded == std::vector<std::string>{"q2"});
  CHECK(r.mean == 1.0);
  CHECK_THROWS_AS(ndcg_at_k({{"q3", ranking({"a"})}}, qrels), DataError);
  CHECK(recall_at_k({{"q", ranking({"a", "b", "c"})}}, {{"q", {{"a", 1}, {"c", 1}}}}, 3).mean == 1.0);
  CHECK(recall_at_k({{"q", ranking({"a", "b", "c"})}}, {{"q", {{"a", 1}, {"c", 1}}}}, 2).mean == 0.5);
  CHECK(mrr({{"q", ranking({"w", "x", "y", "z"})}}, {{"q", {{"z", 1}}}}).mean == 0.25);
  CHECK(mrr({{"q", ranking({"w", "x", "y", "z"})}}, {{"q", {{"z", 1}}}}, 3).mean == 0.0);
}

TEST_CASE("metrics match naive scorers") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    RetrievalRun run;
    Qrels qrels;
    random_instance(rng, run, qrels);
    const std::size_t k = 1 + rng() % 15;
    const auto nd = ndcg_at_k(run, qrels, k);
    const auto rc = recall_at_k(run, qrels, k);
    const auto rr = mrr(run, qrels);
    for (const auto& [qid, r] : run) {
      CHECK(std::abs(nd.per_query.at(qid) - test::naive_ndcg(r, qrels.at(qid), k)) < 1e-9);
      CHECK(std::abs(rc.per_query.at(qid) - test::naive_recall(r, qrels.at(qid), k)) < 1e-9);
      CHECK(std::abs(rr.per_query.at(qid) - test::naive_rr(r, qrels.at(qid))) < 1e-9);
      CHECK(nd.per_query.at(qid) >= 0.0);
      CHECK(nd.per_query.at(qid) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("ndcg ignores reordering below the last relevant document") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    RetrievalRun run;
    Qrels qrels;
    random_instance(rng, run, qrels);
    const auto before = ndcg_at_k(run, qrels, 30).per_query;
    for (auto& [qid, r] : run) {
      std::size_t last = 0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        auto it = qrels[qid].find(r[i].doc_id);
        if (it != qrels[qid].end() && it->second > 0) last = i;
      }
      std::vector<std::string> tail;
      for (std::size_t i = last + 1; i < r.size(); ++i) tail.push_back(r[i].doc_id);
      std::shuffle(tail.begin(), tail.end(), rng);
      for (std::size_t i = last + 1; i < r.size(); ++i) r[i].doc_id = tail[i - last - 1];
    }
    CHECK(ndcg_at_k(run, qrels, 30).per_query == before);
  }
}

TEST_CASE("run and qrels files round trip") {
  std::mt19937_64 rng(7);
  TempDir tmp;
  RetrievalRun run;
  Qrels qrels;
  random_instance(rng, run, qrels);
  write_run(run, tmp / "run.trec", "tag");
  const RetrievalRun back = read_run(tmp / "run.trec");
  CHECK(ndcg_at_k(back, qrels).per_query == ndcg_at_k(run, qrels).per_query);
  CHECK(mrr(back, qrels).mean == mrr(run, qrels).mean);
  write_run(back, tmp / "again.trec", "tag");
  CHECK(test::read_text(tmp / "again.trec") == test::read_text(tmp / "run.trec"));
  write_qrels(qrels, tmp / "qrels.tsv");
  CHECK(read_qrels(tmp / "qrels.tsv") == qrels);
}

TEST_CASE("malformed qrels and runs are rejected") {
  TempDir tmp;
  test::write_text(tmp / "neg.tsv", "q\td\t-1\n");
  CHECK_THROWS_AS(read_qrels(tmp / "neg.tsv"), ParseError);
  test::write_text(tmp / "dup.tsv", "q\td\t1\nq\td\t1\n");
  CHECK_THROWS_AS(read_qrels(tmp / "dup.tsv"), DataError);
  test::write_text(tmp / "short.tsv", "q\td\n");
  CHECK_THROWS_AS(read_qrels(tmp / "short.tsv"), ParseError);
  test::write_text(tmp / "gap.trec", "q Q0 a 1 2.0 t\nq Q0 b 3 1.0 t\n");
  CHECK_THROWS(read_run(tmp / "gap.trec"));
  CHECK_THROWS_AS(validate_run({{"q", {{"a", 1.0}, {"b", 2.0}}}}), DataError);
  CHECK_THROWS_AS(validate_run({{"q", {{"a", 2.0}, {"a", 1.0}}}}), DataError);
}

TEST_CASE("analytic random baseline") {
  CHECK(random_ndcg_single_relevant(1) == 1.0);
  double expected = 0.0;
  for (int r = 1; r <= 10; ++r) expected += 1.0 / std::log2(r + 1.0) / 100.0;
  CHECK(std::abs(random_ndcg_single_relevant(100) - expected) < 1e-12);
  std::mt19937_64 rng(8);
  double sim = 0.0;
  std::vector<std::string> docs;
  for (int i = 0; i < 50; ++i) docs.push_back("d" + std::to_string(i));
  for (int t = 0; t < 20000; ++t) {
    std::shuffle(docs.begin(), docs.end(), rng);
    std::vector<ScoredDoc> r;
    for (const auto& d : docs) r.push_back({d, 0.0});
    sim += test::naive_ndcg(r, {{"d0", 1}}, 10);
  }
  CHECK(std::abs(sim / 20000.0 - random_ndcg_single_relevant(50)) < 0.01);
}

TEST_CASE("random-init model scores near the random baseline") {
  ExperimentSetup setup;
  setup.pretrain_steps = 0;
  const ExperimentData data = prepare_data(setup);
  ModelConfig cfg = setup.model;
  cfg.vocab_size = data.vocab.size();
  const EvalConfig eval = setup.eval;
  const double baseline = random_ndcg_single_relevant(data.corpus.store.size(), eval.ndcg_k);
  const Model<float> model(cfg, 11);
  const EvalReport rep =
      evaluate(model, data.corpus.store, data.vocab, data.queries, data.qrels, eval);
  MESSAGE("random-init ndcg " << rep.metrics.at("ndcg@10") << " baseline " << baseline);
  CHECK(std::abs(rep.metrics.at("ndcg@10") - baseline) < 0.1);
  const RetrievalRun bm25 = bm25_run(data.index, data.vocab, data.queries, eval.top_k);
  CHECK(evaluate_run(bm25, data.qrels, eval).metrics.at("ndcg@10") > rep.metrics.at("ndcg@10"));
}

TEST_CASE("random features without zero-initialised blocks carry lexical overlap") {
  ExperimentSetup setup;
  const ExperimentData data = prepare_data(setup);
  ModelConfig cfg = setup.model;
  cfg.vocab_size = data.vocab.size();
  cfg.zero_init_residual = false;
  const Model<float> model(cfg, 11);
  const EvalReport rep =
      evaluate(model, data.corpus.store, data.vocab, data.queries, data.qrels, setup.eval);
  MESSAGE("random-init ndcg without zero init " << rep.metrics.at("ndcg@10"));
  CHECK(rep.metrics.at("ndcg@10") > random_ndcg_single_relevant(data.corpus.store.size()) + 0.1);
}

TEST_CASE("checkpoints round trip bit-exactly") {
  TempDir tmp;
  Model<float> m(test::tiny_config(), 9);
  LoraConfig lc;
  lc.targets = LoraConfig::parse_targets("wq,wk,wv,wo");
  m.enable_lora(lc, 2);
  std::mt19937_64 rng(9);
  std::normal_distribution<float> nd(0.0f, 0.1f);
  for (auto& p : m.adapter_parameters()) {
    for (auto& v : p.tensor.mutable_data()) v = nd(rng);
  }
  save_checkpoint(m, tmp / "m.ckpt");
  const Model<float> back = load_checkpoint<float>(tmp / "m.ckpt");
  CHECK(back.config() == m.config());
  CHECK(back.has_lora());
  const auto a = m.parameters(), b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin(),
                     b[i].tensor.data().end()));
  }
  save_checkpoint(back, tmp / "again.ckpt");
  CHECK(test::read_text(tmp / "again.ckpt") == test::read_text(tmp / "m.ckpt"));
  CHECK(file_fingerprint(tmp / "again.ckpt") == file_fingerprint(tmp / "m.ckpt"));
  const Model<double> wide = load_checkpoint<double>(tmp / "m.ckpt");
  CHECK(static_cast<float>(wide.parameters()[0].tensor.data()[0]) == a[0].tensor.data()[0]);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir tmp;
  save_checkpoint(Model<float>(test::tiny_config(), 1), tmp / "m.ckpt");
  std::string bytes = test::read_text(tmp / "m.ckpt");
  test::write_text(tmp / "trunc.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint<float>(tmp / "trunc.ckpt"), DataError);
  bytes[0] = 'X';
  test::write_text(tmp / "magic.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint<float>(tmp / "magic.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint<float>(tmp / "missing.ckpt"), DataError);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
