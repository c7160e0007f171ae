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

#include <cmath>
#include <random>

#include "l2ir/checkpoint.hpp"
#include "l2ir/error.hpp"
#include "l2ir/experiments.hpp"
#include "l2ir/gradcheck.hpp"
#include "l2ir/training.hpp"
#include "test_support.hpp"

using namespace l2ir;
using D = Tensor<double>;

namespace {

D random_sims(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return D::from({r, c}, std::move(v));
}

double loss_of(const D& pos, const D* neg, std::size_t k, double tau,
               NegativesScope scope = NegativesScope::kBatch) {
  return info_nce_from_similarities(pos, neg, k, tau, scope).item();
}

// Direct summation without log-sum-exp.
double naive_info_nce(const D& pos, const D* neg, std::size_t k, double tau, NegativesScope scope) {
  const std::size_t n = pos.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(pos.at(i, j) / tau);
    if (neg) {
      for (std::size_t j = 0; j < n; ++j) {
        if (scope == NegativesScope::kOwn && j != i) continue;
        for (std::size_t m = 0; m < k; ++m) denom += std::exp(neg->at(i, j * k + m) / tau);
      }
    }
    total += -std::log(std::exp(pos.at(i, i) / tau) / denom);
  }
  return total / static_cast<double>(n);
}

D shifted(const D& m, double c) {
  std::vector<double> v(m.data().begin(), m.data().end());
  for (auto& x : v) x += c;
  return D::from(m.shape(), std::move(v));
}

D unit_rows(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return l2_normalize_rows(D::from({r, c}, std::move(v)));
}

struct TrainData {
  SyntheticCorpus corpus;
  Vocabulary vocab;
  InvertedIndex index;
};

TrainData train_data() {
  SyntheticCorpusSpec spec;
  spec.n_topics = 4;
  spec.docs_per_topic = 6;
  spec.doc_len = 24;
  spec.topic_vocab_size = 10;
  spec.shared_vocab_size = 40;
  spec.seed = 3;
  TrainData d{generate_synthetic_corpus(spec), {}, {}};
  const std::vector<std::string> forced = {"Query:", "Passage:"};
  d.vocab = build_vocab(d.corpus.store, 1000, 1, forced);
  d.index = InvertedIndex::build(d.corpus.store, d.vocab);
  return d;
}

ModelConfig train_model_config(const TrainData& d) {
  ModelConfig cfg = test::tiny_config(d.vocab.size());
  cfg.max_context = 64;
  return cfg;
}

AugmentationConfig train_aug() {
  AugmentationConfig aug;
  aug.anchor_len = 6;
  aug.passage_len = 32;
  aug.seed = 1;
  return aug;
}

TrainConfig train_cfg(std::size_t k) {
  TrainConfig cfg;
  cfg.k = k;
  cfg.batch_size = 8;
  cfg.lr = 3e-3;
  cfg.epochs = 10;
  cfg.seed = 2;
  return cfg;
}

std::vector<double> losses(const TrainResult& r) {
  std::vector<double> out;
  for (const auto& s : r.log) out.push_back(s.loss);
  return out;
}

}  // namespace

TEST_CASE("info_nce examples") {
  const D one = D::from({1, 1}, {0.3});
  CHECK(loss_of(one, nullptr, 0, 0.05) == 0.0);
  const D flat = D::full({2, 2}, 0.4);
  CHECK(std::abs(loss_of(flat, nullptr, 0, 0.05) - std::log(2.0)) < 1e-9);
  CHECK_THROWS_AS(loss_of(flat, nullptr, 0, 0.0), UsageError);
  CHECK_THROWS_AS(loss_of(flat, nullptr, 0, -1.0), UsageError);
}

TEST_CASE("info_nce matches direct summation") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 5, k = rng() % 3;
    const double tau = 0.05 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    const D pos = random_sims(rng, n, n);
    const D neg = random_sims(rng, n, n * k);
    const D* negp = k ? &neg : nullptr;
    for (auto scope : {NegativesScope::kBatch, NegativesScope::kOwn}) {
      const double got = loss_of(pos, negp, k, tau, scope);
      CHECK(std::abs(got - naive_info_nce(pos, negp, k, tau, scope)) < 1e-10);
      CHECK(got >= 0.0);
    }
  }
}

TEST_CASE("info_nce on embeddings equals info_nce on their cosines") {
  std::mt19937_64 rng(2);
  const std::size_t n = 4, k = 2, d = 8;
  ContrastiveBatch<double> b{unit_rows(rng, n, d), unit_rows(rng, n, d), unit_rows(rng, n * k, d), k};
  CHECK_NOTHROW(b.check_unit_rows());
  const D pos = matmul(b.anchors, transpose(b.positives));
  const D neg = matmul(b.anchors, transpose(b.negatives));
  CHECK(std::abs(info_nce_loss(b, 0.1).item() - naive_info_nce(pos, &neg, k, 0.1, NegativesScope::kBatch)) <
        1e-10);
  ContrastiveBatch<double> bad = b;
  bad.anchors = scale(b.anchors, 2.0);
  CHECK_THROWS_AS(bad.check_unit_rows(), NumericalError);
}

TEST_CASE("info_nce is invariant to a common similarity shift") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 4, k = 1 + rng() % 3;
    const D pos = random_sims(rng, n, n);
    const D neg = random_sims(rng, n, n * k);
    const double c = static_cast<double>(rng() % 200) / 100.0 - 1.0;
    const double base = loss_of(pos, &neg, k, 0.05);
    const D pos_s = shifted(pos, c), neg_s = shifted(neg, c);
    CHECK(std::abs(base - loss_of(pos_s, &neg_s, k, 0.05)) < 1e-8);
  }
}

TEST_CASE("raising the positive similarity lowers the loss") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 4, k = rng() % 3;
    D pos = random_sims(rng, n, n);
    const D neg = random_sims(rng, n, n * k);
    const D* negp = k ? &neg : nullptr;
    if (n == 1 && k == 0) continue;
    const double before = loss_of(pos, negp, k, 0.1);
    pos.mutable_data()[0] += 0.1;
    CHECK(loss_of(pos, negp, k, 0.1) < before);
  }
}

TEST_CASE("info_nce gradients") {
  std::mt19937_64 rng(5);
  const D pos = random_sims(rng, 3, 3), neg = random_sims(rng, 3, 6);
  std::vector<D> in = {D::parameter({3, 3}, {pos.data().begin(), pos.data().end()}),
                       D::parameter({3, 6}, {neg.data().begin(), neg.data().end()})};
  for (auto scope : {NegativesScope::kBatch, NegativesScope::kOwn}) {
    const auto r = check_gradients("info_nce", in, [&](const std::vector<D>& x) {
      return info_nce_from_similarities(x[0], &x[1], 2, 0.5, scope);
    }, 1e-5);
    CHECK(r.passed);
  }
}

TEST_CASE("adamw with zero gradients") {
  const D w = D::parameter({3}, {1.0, -2.0, 0.5});
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW<double> plain({{"w", w}}, cfg);
  plain.step(0.1);
  CHECK(std::vector<double>(w.data().begin(), w.data().end()) == std::vector<double>{1.0, -2.0, 0.5});
  cfg.weight_decay = 0.2;
  AdamW<double> decay({{"w", w}}, cfg);
  decay.step(0.1);
  CHECK(std::abs(w.data()[0] - 0.98) < 1e-15);
  CHECK(std::abs(w.data()[1] + 1.96) < 1e-15);
  CHECK(decay.steps() == 1);
  CHECK(decay.first_moment(0).size() == 3);
}

TEST_CASE("adamw minimises a quadratic") {
  D w = D::parameter({1}, {1.0});
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW<double> opt({{"w", w}}, cfg);
  for (int s = 0; s < 500; ++s) {
    w.zero_grad();
    w.grad_accumulator()[0] = 2.0 * w.data()[0];
    opt.step(0.05);
  }
  CHECK(std::abs(w.data()[0]) < 1e-3);
}

TEST_CASE("adamw aborts on a non-finite gradient without touching weights") {
  const D a = D::parameter({1}, {1.0});
  const D b = D::parameter({1}, {2.0});
  AdamW<double> opt({{"a", a}, {"layers.0.wq", b}}, AdamWConfig());
  a.grad_accumulator()[0] = 1.0;
  b.grad_accumulator()[0] = std::nan("");
  try {
    opt.step(0.1);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("layers.0.wq") != std::string::npos);
  }
  CHECK(a.data()[0] == 1.0);
  CHECK(opt.steps() == 0);
}

TEST_CASE("gradient clipping and warmup") {
  const D a = D::parameter({2}, {0.0, 0.0});
  a.grad_accumulator()[0] = 3.0;
  a.grad_accumulator()[1] = 4.0;
  const std::vector<NamedTensor<double>> ps = {{"a", a}};
  CHECK(clip_grad_norm(ps, 10.0) == 5.0);
  CHECK(a.grad()[0] == 3.0);
  CHECK(clip_grad_norm(ps, 1.0) == 5.0);
  CHECK(std::abs(a.grad()[0] - 0.6) < 1e-12);
  CHECK(std::abs(a.grad()[1] - 0.8) < 1e-12);
  TrainConfig cfg;
  cfg.lr = 1.0;
  CHECK(scheduled_lr(cfg, 1) == 1.0);
  cfg.warmup_steps = 10;
  CHECK(scheduled_lr(cfg, 1) == 0.1);
  CHECK(scheduled_lr(cfg, 10) == 1.0);
  CHECK(scheduled_lr(cfg, 50) == 1.0);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = TrainConfig();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = TrainConfig();
  cfg.grad_clip = -1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  CHECK(parse_negatives_scope(to_string(NegativesScope::kOwn)) == NegativesScope::kOwn);
  CHECK_THROWS(parse_negatives_scope("global"));
}

TEST_CASE("composed pipeline gradients on a two-pair batch") {
  const Model<double> model = grad_check_model(7);
  const GradCheckReport rep = check_pipeline(model, 1e-5, 7);
  CHECK(rep.passed());
  CHECK(!rep.results.empty());
}

TEST_CASE("training reduces the contrastive loss and is deterministic") {
  const TrainData d = train_data();
  const ModelConfig mc = train_model_config(d);
  test::TempDir tmp;
  Model<float> a(mc, 1);
  TrainOutputs out{tmp / "metrics.csv", tmp / "model.ckpt"};
  const TrainResult ra = train(a, d.corpus.store, d.vocab, d.index, train_aug(), train_cfg(3), out);
  Model<float> b(mc, 1);
  const TrainResult rb = train(b, d.corpus.store, d.vocab, d.index, train_aug(), train_cfg(3));
  REQUIRE(ra.steps == 30);
  const auto la = losses(ra), lb = losses(rb);
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(std::abs(la[i] - lb[i]) < 1e-6);
  const double head = (la[0] + la[1] + la[2]) / 3.0;
  const double tail = (la[27] + la[28] + la[29]) / 3.0;
  MESSAGE("loss " << head << " -> " << tail);
  CHECK(tail < head);
  CHECK(ra.trainable_fraction == 1.0);
  const std::string csv = test::read_text(tmp / "metrics.csv");
  CHECK(csv.starts_with("step,loss,lr,seconds\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);
  const Model<float> saved = load_checkpoint<float>(tmp / "model.ckpt");
  const TokenSequence s = tokenize(d.corpus.store[0].text, d.vocab);
  const auto ea = a.embed_eos(truncate(s, 64)), es = saved.embed_eos(truncate(s, 64));
  CHECK(std::vector<float>(ea.data().begin(), ea.data().end()) ==
        std::vector<float>(es.data().begin(), es.data().end()));
}

TEST_CASE("training without hard negatives") {
  const TrainData d = train_data();
  Model<float> m(train_model_config(d), 1);
  const TrainResult r = train(m, d.corpus.store, d.vocab, d.index, train_aug(), train_cfg(0));
  const auto l = losses(r);
  REQUIRE(l.size() == 30);
  CHECK((l[27] + l[28] + l[29]) / 3.0 < (l[0] + l[1] + l[2]) / 3.0);
  CHECK(first_step_below(r.log, 1e9) == std::optional<std::size_t>(1));
  CHECK_FALSE(first_step_below(r.log, 0.0).has_value());
}

TEST_CASE("LoRA training leaves base weights bit-identical") {
  const TrainData d = train_data();
  Model<float> m(train_model_config(d), 1);
  const Model<float> before = m.clone();
  TrainConfig cfg = train_cfg(2);
  cfg.use_lora = true;
  cfg.epochs = 1;
  const TrainResult r = train(m, d.corpus.store, d.vocab, d.index, train_aug(), cfg);
  CHECK(r.trainable_fraction > 0.0);
  CHECK(r.trainable_fraction < 1.0);
  const auto base = m.base_parameters();
  const auto orig = before.base_parameters();
  REQUIRE(base.size() == orig.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::equal(base[i].tensor.data().begin(), base[i].tensor.data().end(),
                     orig[i].tensor.data().begin()));
  }
  bool moved = false;
  for (const auto& p : m.adapter_parameters()) {
    for (float v : p.tensor.data()) moved = moved || (p.name.ends_with("lora_b") && v != 0.0f);
  }
  CHECK(moved);
}

TEST_CASE("training input errors") {
  const TrainData d = train_data();
  Model<float> m(train_model_config(d), 1);
  TrainConfig cfg = train_cfg(30);
  CHECK_THROWS_AS(train(m, d.corpus.store, d.vocab, d.index, train_aug(), cfg), DataError);
}

TEST_CASE("language-model pretraining lowers the loss") {
  const TrainData d = train_data();
  Model<float> m(train_model_config(d), 1);
  std::vector<TokenSequence> docs;
  for (const auto& doc : d.corpus.store.docs()) docs.push_back(tokenize(doc.text, d.vocab));
  const auto l = pretrain_lm(m, std::span<const TokenSequence>(docs), 40, 4, 3e-3, 0);
  REQUIRE(l.size() == 40);
  CHECK(l.back() < l.front());
  CHECK_THROWS_AS(pretrain_lm(m, std::span<const TokenSequence>(), 1, 1, 1e-3, 0), DataError);
}
