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

// A small decoder-only transformer: token embeddings, pre-norm blocks of
// rotary multi-head attention and a GELU feed-forward layer, a final RMS
// norm, and an LM head tied to the embedding matrix. Sequence embeddings
// are the L2-normalised hidden state at the trailing EOS.

#ifndef L2IR_MODEL_HPP_
#define L2IR_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "l2ir/corpus.hpp"
#include "l2ir/tensor.hpp"

namespace l2ir {

enum class AttentionMode { kCausal, kBidirectional };
enum class ForwardMode { kTrain, kInfer };

const char* to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view text);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_context = 256;
  double rope_theta = 10000.0;
  AttentionMode attn_mode = AttentionMode::kCausal;
  double dropout_p = 0.0;
  double init_std = 0.02;
  // Start wo and w_down at zero so every block is the identity at init.
  bool zero_init_residual = false;

  std::size_t head_dim() const { return d_model / n_heads; }
  void validate() const;

  // Flat key/value form used in checkpoints and experiment reports.
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

// Projections an adapter may target.
enum class LoraTarget : std::size_t { kQuery = 0, kKey = 1, kValue = 2, kOutput = 3 };
inline constexpr std::size_t kNumLoraTargets = 4;

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  std::array<bool, kNumLoraTargets> targets = {true, false, true, false};

  double scaling() const { return alpha / static_cast<double>(rank); }
  void validate() const;
  std::string targets_string() const;  // e.g. "wq,wv"
  static std::array<bool, kNumLoraTargets> parse_targets(std::string_view text);

  bool operator==(const LoraConfig&) const = default;
};

// Low-rank update W + scaling * A * B with A [d_in x r], B [r x d_out].
template <typename T>
struct LoraPair {
  Tensor<T> a;
  Tensor<T> b;
  T scaling = T(1);
};

template <typename T>
struct LayerParams {
  Tensor<T> attn_norm;  // [d_model]
  Tensor<T> wq, wk, wv, wo;  // [d_model x d_model], heads fused along columns
  Tensor<T> ffn_norm;   // [d_model]
  Tensor<T> w_up;       // [d_model x d_ff]
  Tensor<T> w_down;     // [d_ff x d_model]
  std::array<std::optional<LoraPair<T>>, kNumLoraTargets> lora;

  // Base projection with its adapter applied, if any.
  Tensor<T> projection(LoraTarget target) const;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::kInfer;
  // Train-mode dropout probability; the config value when unset.
  std::optional<double> dropout_p;
  std::uint64_t dropout_seed = 0;
};

// [n x n] additive mask: 0 where attention is allowed, kMaskedLogit above the
// diagonal in causal mode, all zeros in bidirectional mode.
template <typename T>
Tensor<T> causal_mask(std::size_t n, AttentionMode mode = AttentionMode::kCausal);

// Rotates dimension pairs (2i, 2i+1) of each row by
// position * theta^(-2i / d) radians. Differentiable.
template <typename T>
Tensor<T> rope_rotate(const Tensor<T>& x, std::span<const std::size_t> positions,
                      double theta);

// softmax(Q K^T / sqrt(d_k) + mask) V.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const Tensor<T>& mask);

// Per-head rotary attention over fused projections, concatenated and
// projected by W^O.
template <typename T>
Tensor<T> multi_head(const Tensor<T>& x, const LayerParams<T>& layer,
                     const ModelConfig& cfg, const Tensor<T>& mask);

template <typename T>
class Model {
 public:
  // Random initialisation from `seed`.
  Model(ModelConfig cfg, std::uint64_t seed);

  // Assembles a model from named tensors, as produced by parameters(). Used
  // by checkpoint loading.
  static Model from_named(ModelConfig cfg, const std::vector<NamedTensor<T>>& tensors,
                          std::optional<LoraConfig> lora);

  const ModelConfig& config() const { return cfg_; }

  // [n x d_model] final hidden states. Throws ContextOverflowError when the
  // sequence does not fit the context window.
  Tensor<T> forward(std::span<const TokenId> seq, const ForwardOptions& opts = {}) const;

  // [1 x d_model] unit vector from the trailing EOS position.
  Tensor<T> embed_eos(std::span<const TokenId> seq, const ForwardOptions& opts = {}) const;

  // Mean next-token negative log-likelihood with the tied LM head.
  Tensor<T> lm_loss(std::span<const TokenId> seq, const ForwardOptions& opts = {}) const;

  // Base weights, then adapters when present.
  std::vector<NamedTensor<T>> parameters() const;
  std::vector<NamedTensor<T>> base_parameters() const;
  std::vector<NamedTensor<T>> adapter_parameters() const;
  // Adapters when LoRA is enabled, otherwise the base weights.
  std::vector<NamedTensor<T>> trainable_parameters() const;

  void enable_lora(const LoraConfig& lora, std::uint64_t seed);
  bool has_lora() const { return lora_.has_value(); }
  const std::optional<LoraConfig>& lora_config() const { return lora_; }
  // Folds scaling * A * B into the base weights and removes the adapters.
  void merge_lora();

  // Deep copy: the result shares no storage with this model.
  Model clone() const;

  const Tensor<T>& embedding() const { return embed_; }
  const std::vector<LayerParams<T>>& layers() const { return layers_; }

 private:
  Model() = default;
  void set_trainability();

  ModelConfig cfg_;
  Tensor<T> embed_;       // [vocab x d_model], also the LM head
  std::vector<LayerParams<T>> layers_;
  Tensor<T> final_norm_;  // [d_model]
  std::optional<LoraConfig> lora_;
};

}  // namespace l2ir

#endif  // L2IR_MODEL_HPP_
