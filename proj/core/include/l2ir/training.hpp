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

// Unsupervised contrastive training: the InfoNCE objective over in-batch
// positives and mined hard negatives, AdamW, and the training loop.

#ifndef L2IR_TRAINING_HPP_
#define L2IR_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "l2ir/augmentation.hpp"
#include "l2ir/model.hpp"

namespace l2ir {

// Which hard negatives enter anchor i's denominator: those of every batch
// element, or only its own.
enum class NegativesScope { kBatch, kOwn };

const char* to_string(NegativesScope scope);
NegativesScope parse_negatives_scope(std::string_view text);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  double tau = 0.05;
  std::size_t batch_size = 64;
  std::size_t k = 7;
  double lr = 1e-4;
  std::size_t epochs = 1;
  AdamWConfig adamw;
  std::uint64_t seed = 0;
  bool use_lora = false;
  LoraConfig lora;
  std::optional<double> grad_clip;  // max global gradient norm
  std::size_t warmup_steps = 0;     // linear warmup length, 0 = constant lr
  NegativesScope negatives_scope = NegativesScope::kBatch;
  std::size_t max_steps = 0;  // 0 = run every epoch to completion

  void validate() const;
};

// Unit-norm embeddings of one batch. Negatives are stored row-major by
// (batch element, k): row j * k + m is the m-th negative of element j.
template <typename T>
struct ContrastiveBatch {
  Tensor<T> anchors;    // [N x d]
  Tensor<T> positives;  // [N x d]
  Tensor<T> negatives;  // [N*K x d], empty when K = 0
  std::size_t k = 0;

  std::size_t size() const { return anchors.rows(); }
  // Throws NumericalError if any row's norm is off by more than `tol`.
  void check_unit_rows(double tol = 1e-5) const;
};

// Mean over i of -log(e^{s(a_i,p_i)/tau} / (sum_j e^{s(a_i,p_j)/tau}
//   + sum_j sum_k e^{s(a_i,g_jk)/tau})), computed with log-sum-exp.
template <typename T>
Tensor<T> info_nce_loss(const ContrastiveBatch<T>& batch, double tau,
                        NegativesScope scope = NegativesScope::kBatch);

// The same objective from precomputed similarities: `pos` is [N x N] with
// pos[i][j] = s(a_i, p_j); `neg` is [N x N*K] with neg[i][j*K+k] = s(a_i, g_jk).
template <typename T>
Tensor<T> info_nce_from_similarities(const Tensor<T>& pos, const Tensor<T>* neg,
                                     std::size_t k, double tau,
                                     NegativesScope scope = NegativesScope::kBatch);

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<NamedTensor<T>> params, AdamWConfig cfg);

  // One update from the gradients currently held by the parameters. A
  // parameter without a gradient is treated as having a zero gradient.
  // Throws NumericalError naming the first parameter with a non-finite
  // gradient; nothing is modified in that case.
  void step(double lr);

  std::size_t steps() const { return steps_; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }
  std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<NamedTensor<T>> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

// Scales every gradient so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<NamedTensor<T>>& params, double max_norm);

// Learning rate at 1-based `step`.
double scheduled_lr(const TrainConfig& cfg, std::size_t step);

struct StepLog {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> metrics_csv;  // step,loss,lr,seconds
  std::optional<std::filesystem::path> checkpoint;   // written at the end
};

struct TrainResult {
  std::vector<StepLog> log;
  std::size_t steps = 0;
  double trainable_fraction = 0.0;
};

// Embeds every sequence of `pairs` through `model` and assembles a batch.
// Each sequence gets its own dropout stream derived from `seed`.
template <typename T>
ContrastiveBatch<T> embed_batch(const Model<T>& model, const std::vector<TrainingPair>& pairs,
                                const ForwardOptions& base, std::uint64_t seed);

// Trains `model` in place on pairs from `builder`. In dropout augmentation
// mode the forward passes use the augmentation's dropout probability.
template <typename T>
TrainResult train(Model<T>& model, const PairBuilder& builder, const TrainConfig& cfg,
                  const TrainOutputs& outputs = {});

// Mines negatives over `store` with `index`, builds pairs, and trains.
template <typename T>
TrainResult train(Model<T>& model, const DocumentStore& store, const Vocabulary& vocab,
                  const InvertedIndex& index, AugmentationConfig aug,
                  const TrainConfig& cfg, const TrainOutputs& outputs = {});

// Causal-LM steps over whole documents truncated to the context window.
// Returns the mean loss of each step.
template <typename T>
std::vector<double> pretrain_lm(Model<T>& model, std::span<const TokenSequence> docs,
                                std::size_t steps, std::size_t batch_size, double lr,
                                std::uint64_t seed);

}  // namespace l2ir

#endif  // L2IR_TRAINING_HPP_
