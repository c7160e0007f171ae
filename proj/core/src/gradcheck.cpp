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

#include "l2ir/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "l2ir/error.hpp"
#include "l2ir/training.hpp"

namespace l2ir {

namespace {

using T = Tensor<double>;

T random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return T::parameter(std::move(shape), std::move(v));
}

T weighted_sum(const T& out, const std::vector<double>& weights) {
  if (out.numel() == 1) return sum(out);
  return sum(mul(out, T::from(out.shape(), weights)));
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& r : results) w = std::max(w, r.rel_error);
  return w;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw UsageError("relative_error: length mismatch");
  }
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-8);
}

GradCheckResult check_gradients(std::string name, std::vector<T> inputs, const GradCheckFn& f,
                                double tol, double h, std::size_t max_entries) {
  const T probe = f(inputs);
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> weights(probe.numel());
  for (auto& w : weights) w = u(rng);
  auto objective = [&]() { return weighted_sum(f(inputs), weights).item(); };

  for (auto& in : inputs) in.zero_grad();
  {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    tape.backward(weighted_sum(f(inputs), weights));
  }

  GradCheckResult result;
  result.name = std::move(name);
  for (auto& in : inputs) {
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    auto values = in.mutable_data();
    const std::size_t n = values.size();
    const std::size_t stride = max_entries > 0 && n > max_entries ? n / max_entries : 1;
    std::vector<double> a_seen;
    std::vector<double> n_seen;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = objective();
      values[i] = saved - h;
      const double down = objective();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      result.max_entry_error = std::max(result.max_entry_error, relative_error(a, numeric));
      a_seen.push_back(a);
      n_seen.push_back(numeric);
      ++result.checked;
    }
    result.rel_error = std::max(result.rel_error, relative_error(a_seen, n_seen));
  }
  result.passed = result.rel_error < tol;
  return result;
}

GradCheckReport check_primitives(double tol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradCheckReport rep;
  auto run = [&](const char* name, std::vector<T> inputs, const GradCheckFn& f) {
    rep.results.push_back(check_gradients(name, std::move(inputs), f, tol));
  };
  const std::vector<std::uint32_t> pick = {2, 0, 3};
  const std::vector<std::uint32_t> ids = {1, 3, 1, 0};
  const std::vector<std::size_t> positions = {0, 3, 7};

  run("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [](const auto& x) { return add(x[0], x[1]); });
  run("sub", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [](const auto& x) { return sub(x[0], x[1]); });
  run("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [](const auto& x) { return mul(x[0], x[1]); });
  run("scale", {random_tensor({3, 4}, rng)}, [](const auto& x) { return scale(x[0], -1.7); });
  run("exp", {random_tensor({3, 4}, rng)}, [](const auto& x) { return exp(x[0]); });
  run("log", {random_tensor({3, 4}, rng, 0.2, 2.0)}, [](const auto& x) { return log(x[0]); });
  run("gelu", {random_tensor({3, 4}, rng, -3.0, 3.0)}, [](const auto& x) { return gelu(x[0]); });
  run("sum", {random_tensor({3, 4}, rng)}, [](const auto& x) { return sum(x[0]); });
  run("mean", {random_tensor({3, 4}, rng)}, [](const auto& x) { return mean(x[0]); });
  run("transpose", {random_tensor({3, 4}, rng)}, [](const auto& x) { return transpose(x[0]); });
  run("concat_rows", {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)},
      [](const auto& x) { return concat(x, 0); });
  run("concat_cols", {random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)},
      [](const auto& x) { return concat(x, 1); });
  run("slice_rows", {random_tensor({4, 3}, rng)},
      [](const auto& x) { return slice(x[0], 0, 1, 3); });
  run("slice_cols", {random_tensor({3, 5}, rng)},
      [](const auto& x) { return slice(x[0], 1, 2, 5); });
  run("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
      [](const auto& x) { return matmul(x[0], x[1]); });
  run("matmul_transposed", {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)},
      [](const auto& x) { return matmul_transposed(x[0], x[1]); });
  run("softmax_rows", {random_tensor({3, 5}, rng, -2.0, 2.0)},
      [](const auto& x) { return softmax_rows(x[0]); });
  run("masked_softmax_rows", {random_tensor({4, 4}, rng, -2.0, 2.0)},
      [](const auto& x) { return softmax_rows(add(x[0], causal_mask<double>(4))); });
  run("log_softmax_rows", {random_tensor({3, 5}, rng, -2.0, 2.0)},
      [](const auto& x) { return log_softmax_rows(x[0]); });
  run("pick_cols", {random_tensor({3, 4}, rng)},
      [&](const auto& x) { return pick_cols(x[0], std::span<const std::uint32_t>(pick)); });
  run("embedding_lookup", {random_tensor({5, 3}, rng)},
      [&](const auto& x) { return embedding_lookup(x[0], std::span<const std::uint32_t>(ids)); });
  run("rms_norm", {random_tensor({3, 4}, rng), random_tensor({4}, rng, 0.5, 1.5)},
      [](const auto& x) { return rms_norm(x[0], x[1]); });
  run("dropout", {random_tensor({4, 5}, rng)},
      [](const auto& x) { return dropout(x[0], 0.3, 17); });
  run("cosine_rows", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [](const auto& x) { return cosine_rows(x[0], x[1]); });
  run("l2_normalize_rows", {random_tensor({3, 4}, rng)},
      [](const auto& x) { return l2_normalize_rows(x[0]); });
  run("rope_rotate", {random_tensor({3, 8}, rng)}, [&](const auto& x) {
    return rope_rotate(x[0], std::span<const std::size_t>(positions), 10000.0);
  });
  run("attention_causal",
      {random_tensor({4, 6}, rng), random_tensor({4, 6}, rng), random_tensor({4, 6}, rng)},
      [](const auto& x) { return attention(x[0], x[1], x[2], causal_mask<double>(4)); });
  run("attention_bidirectional",
      {random_tensor({4, 6}, rng), random_tensor({4, 6}, rng), random_tensor({4, 6}, rng)},
      [](const auto& x) {
        return attention(x[0], x[1], x[2], causal_mask<double>(4, AttentionMode::kBidirectional));
      });
  for (auto scope : {NegativesScope::kBatch, NegativesScope::kOwn}) {
    const std::string name = std::string("info_nce_") + to_string(scope);
    rep.results.push_back(check_gradients(
        name, {random_tensor({3, 3}, rng, -0.2, 0.2), random_tensor({3, 6}, rng, -0.2, 0.2)},
        [scope](const auto& x) { return info_nce_from_similarities(x[0], &x[1], 2, 0.05, scope); },
        tol));
  }
  run("info_nce_no_negatives", {random_tensor({3, 3}, rng, -0.2, 0.2)},
      [](const auto& x) { return info_nce_from_similarities<double>(x[0], nullptr, 0, 0.05); });
  return rep;
}

GradCheckReport check_pipeline(const Model<double>& source, double tol, std::uint64_t seed,
                               std::size_t max_entries) {
  Model<double> model = source.clone();
  const ModelConfig& cfg = model.config();
  if (cfg.vocab_size <= Vocabulary::kNumReserved) {
    throw UsageError("grad-check needs a vocabulary beyond the reserved tokens");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> tok(Vocabulary::kNumReserved,
                                             static_cast<TokenId>(cfg.vocab_size - 1));
  const std::size_t max_len = std::min<std::size_t>(cfg.max_context, 6);
  std::uniform_int_distribution<std::size_t> len(1, max_len - 1);
  auto sequence = [&]() {
    TokenSequence seq(len(rng));
    for (auto& t : seq) t = tok(rng);
    seq.push_back(Vocabulary::kEos);
    return seq;
  };
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 2; ++i) {
    TrainingPair p;
    p.source_id = "pair-" + std::to_string(i);
    p.anchor = sequence();
    p.positive = sequence();
    p.negatives = {sequence(), sequence()};
    pairs.push_back(std::move(p));
  }

  std::vector<NamedTensor<double>> params = model.trainable_parameters();
  GradCheckReport rep;
  for (auto& p : params) {
    rep.results.push_back(check_gradients(
        p.name, {p.tensor},
        [&](const auto&) { return info_nce_loss(embed_batch(model, pairs, {}, seed), 0.05); },
        tol, 1e-5, max_entries));
  }
  return rep;
}

Model<double> grad_check_model(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = 24;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.d_ff = 16;
  cfg.max_context = 16;
  cfg.init_std = 0.3;
  return Model<double>(cfg, seed);
}

}  // namespace l2ir
