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

#include "l2ir/tensor.hpp"

namespace {

using l2ir::Tensor;

Tensor<float> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(r * c);
  for (auto& x : v) x = n(rng);
  return Tensor<float>::from({r, c}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(l2ir::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a0 = random_matrix(n, n, 1), b0 = random_matrix(n, n, 2);
  auto a = Tensor<float>::parameter({n, n}, {a0.data().begin(), a0.data().end()});
  auto b = Tensor<float>::parameter({n, n}, {b0.data().begin(), b0.data().end()});
  for (auto _ : state) {
    l2ir::Tape<float> tape;
    l2ir::Tape<float>::Scope scope(tape);
    tape.backward(l2ir::sum(l2ir::matmul(a, b)));
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 128);

void BM_SoftmaxRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(l2ir::softmax_rows(a));
}
BENCHMARK(BM_SoftmaxRows)->Range(64, 512);

}  // namespace
