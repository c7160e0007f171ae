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
#include <numeric>
#include <random>

#include "l2ir/error.hpp"
#include "l2ir/gradcheck.hpp"
#include "l2ir/model.hpp"
#include "l2ir/training.hpp"
#include "test_support.hpp"

using namespace l2ir;
using D = Tensor<double>;

namespace {

D random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return D::from({r, c}, std::move(v));
}

std::vector<std::size_t> iota_positions(std::size_t n, std::size_t start = 0) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), start);
  return p;
}

std::vector<double> values(const D& t) { return {t.data().begin(), t.data().end()}; }

double dot_rows(const D& a, std::size_t i, const D& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += a.at(i, c) * b.at(j, c);
  return s;
}

}  // namespace

TEST_CASE("causal_mask") {
  CHECK(values(causal_mask<double>(1)) == std::vector<double>{0.0});
  const D m = causal_mask<double>(3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(m.at(i, j) == (j <= i ? 0.0 : kMaskedLogit));
  }
  const D bidir = causal_mask<double>(4, AttentionMode::kBidirectional);
  for (double v : bidir.data()) CHECK(v == 0.0);
}

TEST_CASE("rope: position zero is the identity and pair norms are preserved") {
  std::mt19937_64 rng(1);
  const D x = random_matrix(rng, 5, 8);
  const std::vector<std::size_t> zeros(5, 0);
  CHECK(values(rope_rotate(x, std::span<const std::size_t>(zeros), 10000.0)) == values(x));
  const auto pos = iota_positions(5, 3);
  const D r = rope_rotate(x, std::span<const std::size_t>(pos), 10000.0);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t p = 0; p < 4; ++p) {
      const double before = std::hypot(x.at(i, 2 * p), x.at(i, 2 * p + 1));
      const double after = std::hypot(r.at(i, 2 * p), r.at(i, 2 * p + 1));
      CHECK(std::abs(before - after) < 1e-12);
    }
  }
}

TEST_CASE("rope: dot products depend only on the position offset") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const D q = random_matrix(rng, 1, 8);
    const D k = random_matrix(rng, 1, 8);
    const std::size_t p1 = rng() % 50, p2 = rng() % 50, shift = rng() % 100;
    auto rot = [](const D& x, std::size_t p) {
      const std::vector<std::size_t> pos = {p};
      return rope_rotate(x, std::span<const std::size_t>(pos), 10000.0);
    };
    const double base = dot_rows(rot(q, p1), 0, rot(k, p2), 0);
    const double moved = dot_rows(rot(q, p1 + shift), 0, rot(k, p2 + shift), 0);
    CHECK(std::abs(base - moved) < 1e-10);
  }
}

TEST_CASE("attention examples") {
  std::mt19937_64 rng(3);
  const D q = random_matrix(rng, 1, 4), k = random_matrix(rng, 1, 4), v = random_matrix(rng, 1, 4);
  CHECK(values(attention(q, k, v, causal_mask<double>(1))) == values(v));

  const D x = random_matrix(rng, 3, 4);
  const D vv = random_matrix(rng, 3, 4);
  const D out = attention(x, x, vv, causal_mask<double>(3));
  for (std::size_t c = 0; c < 4; ++c) CHECK(out.at(0, c) == vv.at(0, c));
}

TEST_CASE("attention matches a naive reference") {
  std::mt19937_64 rng(4);
  for (auto mode : {AttentionMode::kCausal, AttentionMode::kBidirectional}) {
    const D q = random_matrix(rng, 4, 8), k = random_matrix(rng, 4, 8), v = random_matrix(rng, 4, 8);
    const D out = attention(q, k, v, causal_mask<double>(4, mode));
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t last = mode == AttentionMode::kCausal ? i : 3;
      std::vector<double> w(last + 1);
      double z = 0.0;
      for (std::size_t j = 0; j <= last; ++j) {
        w[j] = std::exp(dot_rows(q, i, k, j) / std::sqrt(8.0));
        z += w[j];
      }
      for (std::size_t c = 0; c < 8; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j <= last; ++j) s += w[j] / z * v.at(j, c);
        CHECK(std::abs(out.at(i, c) - s) < 1e-10);
      }
    }
  }
}

TEST_CASE("single-head multi_head is attention followed by W^O") {
  ModelConfig cfg = test::tiny_config();
  cfg.n_heads = 1;
  const Model<double> model(cfg, 5);
  const auto& layer = model.layers()[0];
  std::mt19937_64 rng(5);
  const D x = random_matrix(rng, 6, cfg.d_model);
  const D mask = causal_mask<double>(6);
  const auto pos = iota_positions(6);
  const std::span<const std::size_t> ps(pos);
  const D q = rope_rotate(matmul(x, layer.wq), ps, cfg.rope_theta);
  const D k = rope_rotate(matmul(x, layer.wk), ps, cfg.rope_theta);
  const D want = matmul(attention(q, k, matmul(x, layer.wv), mask), layer.wo);
  const D got = multi_head(x, layer, cfg, mask);
  CHECK(got.shape() == x.shape());
  for (std::size_t i = 0; i < want.numel(); ++i) CHECK(std::abs(got.data()[i] - want.data()[i]) < 1e-12);
}

TEST_CASE("multi_head keeps the input shape and has correct gradients") {
  std::mt19937_64 rng(6);
  const ModelConfig cfg = test::tiny_config();
  const Model<double> model(cfg, 6);
  for (std::size_t n : {1u, 3u, 7u}) {
    CHECK(multi_head(random_matrix(rng, n, cfg.d_model), model.layers()[0], cfg,
                     causal_mask<double>(n)).shape() == Shape{n, cfg.d_model});
  }
  const auto& layer = model.layers()[1];
  std::vector<D> inputs = {D::parameter({4, cfg.d_model}, values(random_matrix(rng, 4, cfg.d_model))),
                           layer.wq, layer.wk, layer.wv, layer.wo};
  const auto r = check_gradients("multi_head", inputs, [&](const std::vector<D>& in) {
    LayerParams<double> l = layer;
    l.wq = in[1];
    l.wk = in[2];
    l.wv = in[3];
    l.wo = in[4];
    return multi_head(in[0], l, cfg, causal_mask<double>(4));
  }, 1e-5);
  CHECK(r.passed);
}

TEST_CASE("forward shape, finiteness and overflow") {
  std::mt19937_64 rng(7);
  const ModelConfig cfg = test::tiny_config();
  const Model<double> model(cfg, 7);
  for (std::size_t n : {1u, 5u, 32u}) {
    const D h = model.forward(test::random_sequence(rng, cfg.vocab_size, n));
    CHECK(h.shape() == Shape{n, cfg.d_model});
    for (double v : h.data()) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(model.forward(test::random_sequence(rng, cfg.vocab_size, 33)), ContextOverflowError);
  const TokenSequence bad = {static_cast<TokenId>(cfg.vocab_size), Vocabulary::kEos};
  CHECK_THROWS_AS(model.forward(bad), DataError);
}

TEST_CASE("causality by perturbation") {
  std::mt19937_64 rng(8);
  ModelConfig cfg = test::tiny_config();
  const Model<double> causal(cfg, 8);
  cfg.attn_mode = AttentionMode::kBidirectional;
  const Model<double> bidir = Model<double>::from_named(cfg, causal.parameters(), std::nullopt);
  std::size_t bidir_changed = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng() % 20;
    TokenSequence a = test::random_sequence(rng, cfg.vocab_size, n);
    TokenSequence b = a;
    const std::size_t i = rng() % (n - 1);
    for (std::size_t j = i + 1; j + 1 < n; ++j) b[j] = static_cast<TokenId>(4 + (b[j] + 1 - 4) % (cfg.vocab_size - 4));
    b[i + 1] = a[i + 1] == 4 ? 5 : 4;
    const D ha = causal.forward(a), hb = causal.forward(b);
    for (std::size_t r = 0; r <= i; ++r) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) CHECK(ha.at(r, c) == hb.at(r, c));
    }
    const D ba = bidir.forward(a), bb = bidir.forward(b);
    bool changed = false;
    for (std::size_t c = 0; c < cfg.d_model; ++c) changed = changed || ba.at(0, c) != bb.at(0, c);
    bidir_changed += changed;
  }
  CHECK(bidir_changed == 50);
}

TEST_CASE("embed_eos") {
  std::mt19937_64 rng(9);
  const ModelConfig cfg = test::tiny_config();
  const Model<double> model(cfg, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const TokenSequence s = test::random_sequence(rng, cfg.vocab_size, 1 + rng() % 20);
    const D e = model.embed_eos(s);
    CHECK(e.shape() == Shape{1, cfg.d_model});
    double norm = 0.0;
    for (double v : e.data()) norm += v * v;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
    CHECK(values(model.embed_eos(s)) == values(e));
    CHECK(std::abs(cosine_rows(e, model.embed_eos(s)).item() - 1.0) < 1e-12);
  }
  const TokenSequence no_eos = {5, 6};
  CHECK_THROWS_AS(model.embed_eos(no_eos), DataError);
}

TEST_CASE("lm_loss at initialisation is close to log V") {
  std::mt19937_64 rng(10);
  ModelConfig cfg;
  cfg.vocab_size = 500;
  const Model<float> model(cfg, 10);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double loss = model.lm_loss(test::random_sequence(rng, cfg.vocab_size, 16)).item();
    CHECK(loss >= 0.0);
    total += loss;
  }
  const double mean = total / 100.0;
  CHECK(std::abs(mean - std::log(500.0)) < 0.1 * std::log(500.0));
  const TokenSequence one = {Vocabulary::kEos};
  CHECK_THROWS_AS(model.lm_loss(one), DataError);
}

TEST_CASE("lm_loss can memorise one sequence") {
  std::mt19937_64 rng(11);
  ModelConfig cfg;
  cfg.vocab_size = 64;
  cfg.max_context = 32;
  Model<float> model(cfg, 11);
  const std::vector<TokenSequence> docs = {test::random_sequence(rng, cfg.vocab_size, 24)};
  const auto losses = pretrain_lm(model, std::span<const TokenSequence>(docs), 200, 1, 1e-2, 0);
  CHECK(losses.front() > 3.0);
  CHECK(model.lm_loss(docs[0]).item() < 0.1);
}

TEST_CASE("fresh LoRA adapters leave outputs bit-identical") {
  std::mt19937_64 rng(12);
  const ModelConfig cfg = test::tiny_config();
  const Model<double> base(cfg, 12);
  Model<double> adapted = base.clone();
  adapted.enable_lora(LoraConfig(), 3);
  for (int trial = 0; trial < 5; ++trial) {
    const TokenSequence s = test::random_sequence(rng, cfg.vocab_size, 10);
    CHECK(values(adapted.forward(s)) == values(base.forward(s)));
  }
  for (const auto& p : adapted.adapter_parameters()) {
    if (p.name.ends_with("lora_b")) {
      for (double v : p.tensor.data()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("merged LoRA matches applied LoRA") {
  std::mt19937_64 rng(13);
  const ModelConfig cfg = test::tiny_config();
  Model<double> applied(cfg, 13);
  LoraConfig lc;
  lc.rank = 4;
  applied.enable_lora(lc, 4);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& p : applied.adapter_parameters()) {
    for (auto& v : p.tensor.mutable_data()) v = n(rng);
  }
  Model<double> merged = applied.clone();
  merged.merge_lora();
  CHECK_FALSE(merged.has_lora());
  for (int trial = 0; trial < 5; ++trial) {
    const TokenSequence s = test::random_sequence(rng, cfg.vocab_size, 12);
    const D a = applied.forward(s), m = merged.forward(s);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.data()[i] - m.data()[i]) < 1e-10);
  }
}

TEST_CASE("adapted projections equal xW + s(xA)B") {
  std::mt19937_64 rng(17);
  const ModelConfig cfg = test::tiny_config();
  Model<double> model(cfg, 17);
  LoraConfig lc;
  lc.targets = LoraConfig::parse_targets("wq,wk,wv,wo");
  model.enable_lora(lc, 5);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& p : model.adapter_parameters()) {
    for (auto& v : p.tensor.mutable_data()) v = n(rng);
  }
  const D x = random_matrix(rng, 5, cfg.d_model);
  const auto& layer = model.layers()[0];
  const D* bases[] = {&layer.wq, &layer.wk, &layer.wv, &layer.wo};
  for (std::size_t t = 0; t < kNumLoraTargets; ++t) {
    const auto& pair = *layer.lora[t];
    const D want = add(matmul(x, *bases[t]), scale(matmul(matmul(x, pair.a), pair.b), pair.scaling));
    const D got = matmul(x, layer.projection(static_cast<LoraTarget>(t)));
    for (std::size_t i = 0; i < want.numel(); ++i) CHECK(std::abs(got.data()[i] - want.data()[i]) < 1e-10);
  }
}

TEST_CASE("LoRA trainable fraction at desk scale") {
  ModelConfig cfg;
  cfg.vocab_size = 600;
  Model<float> model(cfg, 1);
  std::size_t total = 0;
  for (const auto& p : model.base_parameters()) total += p.tensor.numel();
  model.enable_lora(LoraConfig(), 1);
  std::size_t adapters = 0;
  for (const auto& p : model.trainable_parameters()) adapters += p.tensor.numel();
  const double fraction = static_cast<double>(adapters) / static_cast<double>(total + adapters);
  MESSAGE("LoRA r=8 on wq,wv trains " << fraction * 100.0 << "% of parameters");
  CHECK(fraction > 0.0);
  CHECK(fraction < 0.1);
  CHECK(model.trainable_parameters().size() == 2 * 2 * cfg.n_layers);
}

TEST_CASE("lora config") {
  CHECK(LoraConfig().targets_string() == "wq,wv");
  CHECK(LoraConfig().scaling() == 2.0);
  CHECK(LoraConfig::parse_targets("wk,wo") == std::array<bool, 4>{false, true, false, true});
  CHECK_THROWS_AS(LoraConfig::parse_targets("wz"), UsageError);
  LoraConfig bad;
  bad.rank = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("model config validation and key/value round trip") {
  ModelConfig cfg = test::tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.rope_theta = 500000.0;
  cfg.zero_init_residual = true;
  cfg.attn_mode = AttentionMode::kBidirectional;
  CHECK(ModelConfig::from_map(cfg.to_map()) == cfg);
  ModelConfig odd = test::tiny_config();
  odd.n_heads = 3;
  CHECK_THROWS_AS(odd.validate(), UsageError);
  ModelConfig odd_head = test::tiny_config();
  odd_head.d_model = 6;
  odd_head.n_heads = 2;
  CHECK_THROWS_AS(odd_head.validate(), UsageError);
  ModelConfig ctx = test::tiny_config();
  ctx.max_context = 1;
  CHECK_THROWS_AS(ctx.validate(), UsageError);
  auto kv = cfg.to_map();
  kv["d_model"] = "x";
  CHECK_THROWS_AS(ModelConfig::from_map(kv), DataError);
}

TEST_CASE("zero-initialised residual blocks start as the identity") {
  ModelConfig cfg = test::tiny_config();
  cfg.zero_init_residual = true;
  const Model<double> model(cfg, 14);
  for (const auto& l : model.layers()) {
    for (double v : l.wo.data()) CHECK(v == 0.0);
    for (double v : l.w_down.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("clone shares no storage") {
  const Model<double> a(test::tiny_config(), 15);
  Model<double> b = a.clone();
  b.parameters()[0].tensor.mutable_data()[0] += 1.0;
  CHECK(a.parameters()[0].tensor.data()[0] != b.parameters()[0].tensor.data()[0]);
}

TEST_CASE("full model gradients pass finite differences") {
  const GradCheckReport rep = check_pipeline(grad_check_model(3), 1e-5, 3);
  for (const auto& r : rep.results) {
    INFO(r.name << " rel " << r.rel_error);
    CHECK(r.passed);
  }
  std::mt19937_64 rng(16);
  const Model<double> model = grad_check_model(4);
  const TokenSequence seq = test::random_sequence(rng, 24, 8);
  for (const auto& p : model.trainable_parameters()) {
    const auto r = check_gradients(p.name, {p.tensor},
                                   [&](const auto&) { return model.lm_loss(seq); }, 1e-5);
    INFO(p.name << " lm rel " << r.rel_error);
    CHECK(r.passed);
  }
}
