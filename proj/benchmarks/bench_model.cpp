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

#include "l2ir/model.hpp"
#include "l2ir/training.hpp"

namespace {

using namespace l2ir;

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.vocab_size = 600;
  cfg.d_model = 64;
  cfg.n_heads = 4;
  cfg.n_layers = 2;
  cfg.d_ff = 256;
  cfg.max_context = 512;
  return cfg;
}

TokenSequence sequence(std::size_t n, std::size_t vocab) {
  std::mt19937_64 rng(n);
  TokenSequence s(n);
  for (auto& t : s) t = static_cast<TokenId>(Vocabulary::kNumReserved + rng() % (vocab - Vocabulary::kNumReserved));
  s.back() = Vocabulary::kEos;
  return s;
}

void BM_EmbedEos(benchmark::State& state) {
  const ModelConfig cfg = desk_config();
  const Model<float> model(cfg, 1);
  const TokenSequence s = sequence(static_cast<std::size_t>(state.range(0)), cfg.vocab_size);
  for (auto _ : state) benchmark::DoNotOptimize(model.embed_eos(s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EmbedEos)->RangeMultiplier(4)->Range(32, 512);

void BM_LmLossBackward(benchmark::State& state) {
  const ModelConfig cfg = desk_config();
  Model<float> model(cfg, 1);
  const TokenSequence s = sequence(static_cast<std::size_t>(state.range(0)), cfg.vocab_size);
  for (auto _ : state) {
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    tape.backward(model.lm_loss(s));
    for (auto& p : model.trainable_parameters()) p.tensor.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LmLossBackward)->RangeMultiplier(4)->Range(32, 512);

}  // namespace
