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

#include "l2ir/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_map>

#include "l2ir/error.hpp"

namespace l2ir {

namespace {

constexpr std::array<const char*, kNumLoraTargets> kTargetNames = {"wq", "wk", "wv", "wo"};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t site) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (site + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
Tensor<T> normal_parameter(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::parameter(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> deep_copy(const Tensor<T>& t) {
  auto data = t.data();
  auto out = Tensor<T>::from(t.shape(), std::vector<T>(data.begin(), data.end()));
  out.set_requires_grad(t.requires_grad());
  return out;
}

std::size_t parse_size(const std::map<std::string, std::string>& kv, const char* key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError(std::string("model config is missing '") + key + "'");
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError(std::string("model config '") + key + "' is not an integer");
  }
}

double parse_double(const std::map<std::string, std::string>& kv, const char* key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError(std::string("model config is missing '") + key + "'");
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw DataError(std::string("model config '") + key + "' is not a number");
  }
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

const char* to_string(AttentionMode mode) {
  return mode == AttentionMode::kCausal ? "causal" : "bidirectional";
}

AttentionMode parse_attention_mode(std::string_view text) {
  if (text == "causal") return AttentionMode::kCausal;
  if (text == "bidirectional") return AttentionMode::kBidirectional;
  throw UsageError("unknown attention mode '" + std::string(text) +
                   "' (expected causal|bidirectional)");
}

void ModelConfig::validate() const {
  if (vocab_size <= Vocabulary::kNumReserved) {
    throw UsageError("vocab_size must exceed the reserved tokens");
  }
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) {
    throw UsageError("model dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) throw UsageError("d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0) throw UsageError("head dimension must be even for rotary embeddings");
  if (max_context < 2) throw UsageError("max_context must be >= 2");
  if (!(rope_theta > 1.0)) throw UsageError("rope_theta must be > 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw UsageError("dropout_p must be in [0, 1)");
  if (!(init_std > 0.0)) throw UsageError("init_std must be > 0");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"vocab_size", std::to_string(vocab_size)},
          {"d_model", std::to_string(d_model)},
          {"n_heads", std::to_string(n_heads)},
          {"n_layers", std::to_string(n_layers)},
          {"d_ff", std::to_string(d_ff)},
          {"max_context", std::to_string(max_context)},
          {"rope_theta", format_double(rope_theta)},
          {"attn_mode", to_string(attn_mode)},
          {"dropout_p", format_double(dropout_p)},
          {"init_std", format_double(init_std)},
          {"zero_init_residual", zero_init_residual ? "1" : "0"}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig cfg;
  cfg.vocab_size = parse_size(kv, "vocab_size");
  cfg.d_model = parse_size(kv, "d_model");
  cfg.n_heads = parse_size(kv, "n_heads");
  cfg.n_layers = parse_size(kv, "n_layers");
  cfg.d_ff = parse_size(kv, "d_ff");
  cfg.max_context = parse_size(kv, "max_context");
  cfg.rope_theta = parse_double(kv, "rope_theta");
  auto mode = kv.find("attn_mode");
  if (mode == kv.end()) throw DataError("model config is missing 'attn_mode'");
  try {
    cfg.attn_mode = parse_attention_mode(mode->second);
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }
  cfg.dropout_p = parse_double(kv, "dropout_p");
  cfg.init_std = parse_double(kv, "init_std");
  if (auto z = kv.find("zero_init_residual"); z != kv.end()) {
    if (z->second != "0" && z->second != "1") {
      throw DataError("model config 'zero_init_residual' must be 0 or 1");
    }
    cfg.zero_init_residual = z->second == "1";
  }
  try {
    cfg.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid model config: ") + e.what());
  }
  return cfg;
}

void LoraConfig::validate() const {
  if (rank == 0) throw UsageError("lora rank must be >= 1");
  if (!(alpha > 0.0)) throw UsageError("lora alpha must be > 0");
  bool any = false;
  for (bool t : targets) any = any || t;
  if (!any) throw UsageError("lora needs at least one target projection");
}

std::string LoraConfig::targets_string() const {
  std::string out;
  for (std::size_t i = 0; i < kNumLoraTargets; ++i) {
    if (!targets[i]) continue;
    if (!out.empty()) out += ',';
    out += kTargetNames[i];
  }
  return out;
}

std::array<bool, kNumLoraTargets> LoraConfig::parse_targets(std::string_view text) {
  std::array<bool, kNumLoraTargets> out{};
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view name = text.substr(start, end - start);
    bool found = false;
    for (std::size_t i = 0; i < kNumLoraTargets; ++i) {
      if (name == kTargetNames[i]) out[i] = found = true;
    }
    if (!found) {
      throw UsageError("unknown lora target '" + std::string(name) +
                       "' (expected wq, wk, wv or wo)");
    }
    start = end + 1;
  }
  return out;
}

template <typename T>
Tensor<T> LayerParams<T>::projection(LoraTarget target) const {
  const auto idx = static_cast<std::size_t>(target);
  const Tensor<T>* base = nullptr;
  switch (target) {
    case LoraTarget::kQuery: base = &wq; break;
    case LoraTarget::kKey: base = &wk; break;
    case LoraTarget::kValue: base = &wv; break;
    case LoraTarget::kOutput: base = &wo; break;
  }
  if (!lora[idx]) return *base;
  const auto& pair = *lora[idx];
  return add(*base, scale(matmul(pair.a, pair.b), pair.scaling));
}

template <typename T>
Tensor<T> causal_mask(std::size_t n, AttentionMode mode) {
  std::vector<T> values(n * n, T(0));
  if (mode == AttentionMode::kCausal) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) values[i * n + j] = static_cast<T>(kMaskedLogit);
    }
  }
  return Tensor<T>::from({n, n}, std::move(values));
}

template <typename T>
Tensor<T> rope_rotate(const Tensor<T>& x, std::span<const std::size_t> positions,
                      double theta) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (positions.size() != n) throw ShapeError("rope_rotate: one position per row required");
  if (d % 2 != 0) throw ShapeError("rope_rotate: even width required");
  const std::size_t half = d / 2;
  std::vector<T> cosv(n * half), sinv(n * half);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(positions[r]) * freq;
      cosv[r * half + i] = static_cast<T>(std::cos(angle));
      sinv[r * half + i] = static_cast<T>(std::sin(angle));
    }
  }
  auto in = x.data();
  std::vector<T> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      const T c = cosv[r * half + i], s = sinv[r * half + i];
      const T x0 = in[r * d + 2 * i], x1 = in[r * d + 2 * i + 1];
      out[r * d + 2 * i] = x0 * c - x1 * s;
      out[r * d + 2 * i + 1] = x0 * s + x1 * c;
    }
  }
  return make_op<T>(x.shape(), std::move(out), {x},
                    [x, n, d, half, cosv = std::move(cosv),
                     sinv = std::move(sinv)](std::span<const T> g) {
                      if (!x.requires_grad()) return;
                      auto gx = x.grad_accumulator();
                      for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t i = 0; i < half; ++i) {
                          const T c = cosv[r * half + i], s = sinv[r * half + i];
                          const T g0 = g[r * d + 2 * i], g1 = g[r * d + 2 * i + 1];
                          gx[r * d + 2 * i] += g0 * c + g1 * s;
                          gx[r * d + 2 * i + 1] += -g0 * s + g1 * c;
                        }
                      }
                    });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const Tensor<T>& mask) {
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols())));
  auto scores = add(scale(matmul_transposed(q, k), inv_sqrt), mask);
  return matmul(softmax_rows(scores), v);
}

template <typename T>
Tensor<T> multi_head(const Tensor<T>& x, const LayerParams<T>& layer,
                     const ModelConfig& cfg, const Tensor<T>& mask) {
  const std::size_t n = x.rows();
  const std::size_t dk = cfg.head_dim();
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;

  auto q = matmul(x, layer.projection(LoraTarget::kQuery));
  auto k = matmul(x, layer.projection(LoraTarget::kKey));
  auto v = matmul(x, layer.projection(LoraTarget::kValue));
  std::vector<Tensor<T>> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    auto qh = rope_rotate(slice(q, 1, h * dk, (h + 1) * dk), positions, cfg.rope_theta);
    auto kh = rope_rotate(slice(k, 1, h * dk, (h + 1) * dk), positions, cfg.rope_theta);
    auto vh = slice(v, 1, h * dk, (h + 1) * dk);
    heads.push_back(attention(qh, kh, vh, mask));
  }
  auto joined = cfg.n_heads == 1 ? heads.front() : concat(heads, 1);
  return matmul(joined, layer.projection(LoraTarget::kOutput));
}

template <typename T>
Model<T>::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.d_model;
  const double out_std = cfg_.init_std / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers));
  embed_ = normal_parameter<T>({cfg_.vocab_size, d}, cfg_.init_std, rng);
  layers_.resize(cfg_.n_layers);
  for (auto& layer : layers_) {
    layer.attn_norm = Tensor<T>::parameter({d}, std::vector<T>(d, T(1)));
    layer.wq = normal_parameter<T>({d, d}, cfg_.init_std, rng);
    layer.wk = normal_parameter<T>({d, d}, cfg_.init_std, rng);
    layer.wv = normal_parameter<T>({d, d}, cfg_.init_std, rng);
    layer.wo = normal_parameter<T>({d, d}, out_std, rng);
    layer.ffn_norm = Tensor<T>::parameter({d}, std::vector<T>(d, T(1)));
    layer.w_up = normal_parameter<T>({d, cfg_.d_ff}, cfg_.init_std, rng);
    layer.w_down = normal_parameter<T>({cfg_.d_ff, d}, out_std, rng);
    if (cfg_.zero_init_residual) {
      std::fill(layer.wo.mutable_data().begin(), layer.wo.mutable_data().end(), T(0));
      std::fill(layer.w_down.mutable_data().begin(), layer.w_down.mutable_data().end(), T(0));
    }
  }
  final_norm_ = Tensor<T>::parameter({d}, std::vector<T>(d, T(1)));
}

template <typename T>
Model<T> Model<T>::from_named(ModelConfig cfg, const std::vector<NamedTensor<T>>& tensors,
                              std::optional<LoraConfig> lora) {
  cfg.validate();
  Model<T> model(cfg, 0);
  if (lora) model.enable_lora(*lora, 0);
  std::unordered_map<std::string, const Tensor<T>*> by_name;
  for (const auto& nt : tensors) {
    if (!by_name.emplace(nt.name, &nt.tensor).second) {
      throw DataError("duplicate tensor '" + nt.name + "'");
    }
  }
  auto params = model.parameters();
  if (params.size() != tensors.size()) {
    throw DataError("expected " + std::to_string(params.size()) + " tensors, found " +
                    std::to_string(tensors.size()));
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("missing tensor '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw DataError("tensor '" + p.name + "' has shape " +
                      shape_string(it->second->shape()) + ", expected " +
                      shape_string(p.tensor.shape()));
    }
    auto src = it->second->data();
    std::copy(src.begin(), src.end(), p.tensor.mutable_data().begin());
  }
  return model;
}

template <typename T>
Tensor<T> Model<T>::forward(std::span<const TokenId> seq, const ForwardOptions& opts) const {
  const std::size_t n = seq.size();
  if (n == 0) throw DataError("forward: empty sequence");
  if (n > cfg_.max_context) throw ContextOverflowError(n, cfg_.max_context);
  for (TokenId t : seq) {
    if (t >= cfg_.vocab_size) {
      throw DataError("token id " + std::to_string(t) + " outside vocabulary of size " +
                      std::to_string(cfg_.vocab_size));
    }
  }
  const double p = opts.mode == ForwardMode::kTrain ? opts.dropout_p.value_or(cfg_.dropout_p)
                                                    : 0.0;
  std::uint64_t site = 0;
  auto drop = [&](const Tensor<T>& x) {
    if (p <= 0.0) return x;
    return dropout(x, p, mix_seed(opts.dropout_seed, site++));
  };

  const auto mask = causal_mask<T>(n, cfg_.attn_mode);
  auto h = drop(embedding_lookup(embed_, seq));
  for (const auto& layer : layers_) {
    h = add(h, drop(multi_head(rms_norm(h, layer.attn_norm), layer, cfg_, mask)));
    auto up = gelu(matmul(rms_norm(h, layer.ffn_norm), layer.w_up));
    h = add(h, drop(matmul(up, layer.w_down)));
  }
  return rms_norm(h, final_norm_);
}

template <typename T>
Tensor<T> Model<T>::embed_eos(std::span<const TokenId> seq, const ForwardOptions& opts) const {
  if (seq.empty() || seq.back() != Vocabulary::kEos) {
    throw DataError("sequence must end with EOS to be embedded");
  }
  auto h = forward(seq, opts);
  return l2_normalize_rows(slice(h, 0, seq.size() - 1, seq.size()));
}

template <typename T>
Tensor<T> Model<T>::lm_loss(std::span<const TokenId> seq, const ForwardOptions& opts) const {
  const std::size_t n = seq.size();
  if (n < 2) throw DataError("lm_loss needs at least two tokens");
  auto h = forward(seq, opts);
  auto logits = matmul_transposed(slice(h, 0, 0, n - 1), embed_);
  auto picked = pick_cols(log_softmax_rows(logits), seq.subspan(1));
  return scale(mean(picked), T(-1));
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::base_parameters() const {
  std::vector<NamedTensor<T>> out;
  out.push_back({"embed", embed_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string pre = "layers." + std::to_string(i) + ".";
    const auto& l = layers_[i];
    out.push_back({pre + "attn_norm", l.attn_norm});
    out.push_back({pre + "wq", l.wq});
    out.push_back({pre + "wk", l.wk});
    out.push_back({pre + "wv", l.wv});
    out.push_back({pre + "wo", l.wo});
    out.push_back({pre + "ffn_norm", l.ffn_norm});
    out.push_back({pre + "w_up", l.w_up});
    out.push_back({pre + "w_down", l.w_down});
  }
  out.push_back({"final_norm", final_norm_});
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::adapter_parameters() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (std::size_t t = 0; t < kNumLoraTargets; ++t) {
      const auto& pair = layers_[i].lora[t];
      if (!pair) continue;
      const std::string pre =
          "layers." + std::to_string(i) + "." + kTargetNames[t] + ".lora_";
      out.push_back({pre + "a", pair->a});
      out.push_back({pre + "b", pair->b});
    }
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() const {
  auto out = base_parameters();
  for (auto& nt : adapter_parameters()) out.push_back(std::move(nt));
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::trainable_parameters() const {
  return lora_ ? adapter_parameters() : base_parameters();
}

template <typename T>
void Model<T>::set_trainability() {
  for (auto& nt : base_parameters()) nt.tensor.set_requires_grad(!lora_);
  for (auto& nt : adapter_parameters()) nt.tensor.set_requires_grad(true);
}

template <typename T>
void Model<T>::enable_lora(const LoraConfig& lora, std::uint64_t seed) {
  lora.validate();
  if (lora_) throw UsageError("lora adapters are already attached");
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.d_model;
  const double a_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& layer : layers_) {
    for (std::size_t t = 0; t < kNumLoraTargets; ++t) {
      if (!lora.targets[t]) continue;
      LoraPair<T> pair;
      pair.a = normal_parameter<T>({d, lora.rank}, a_std, rng);
      pair.b = Tensor<T>::parameter({lora.rank, d}, std::vector<T>(lora.rank * d, T(0)));
      pair.scaling = static_cast<T>(lora.scaling());
      layer.lora[t] = std::move(pair);
    }
  }
  lora_ = lora;
  set_trainability();
}

template <typename T>
void Model<T>::merge_lora() {
  if (!lora_) return;
  for (auto& layer : layers_) {
    for (std::size_t t = 0; t < kNumLoraTargets; ++t) {
      if (!layer.lora[t]) continue;
      const auto merged = layer.projection(static_cast<LoraTarget>(t)).detach();
      Tensor<T>* base = t == 0 ? &layer.wq : t == 1 ? &layer.wk : t == 2 ? &layer.wv : &layer.wo;
      auto src = merged.data();
      std::copy(src.begin(), src.end(), base->mutable_data().begin());
      layer.lora[t].reset();
    }
  }
  lora_.reset();
  set_trainability();
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model<T> out;
  out.cfg_ = cfg_;
  out.lora_ = lora_;
  out.embed_ = deep_copy(embed_);
  out.final_norm_ = deep_copy(final_norm_);
  out.layers_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& s = layers_[i];
    auto& d = out.layers_[i];
    d.attn_norm = deep_copy(s.attn_norm);
    d.wq = deep_copy(s.wq);
    d.wk = deep_copy(s.wk);
    d.wv = deep_copy(s.wv);
    d.wo = deep_copy(s.wo);
    d.ffn_norm = deep_copy(s.ffn_norm);
    d.w_up = deep_copy(s.w_up);
    d.w_down = deep_copy(s.w_down);
    for (std::size_t t = 0; t < kNumLoraTargets; ++t) {
      if (!s.lora[t]) continue;
      d.lora[t] = LoraPair<T>{deep_copy(s.lora[t]->a), deep_copy(s.lora[t]->b),
                              s.lora[t]->scaling};
    }
  }
  return out;
}

#define L2IR_INSTANTIATE_MODEL(T)                                                    \
  template struct LayerParams<T>;                                                    \
  template class Model<T>;                                                           \
  template Tensor<T> causal_mask<T>(std::size_t, AttentionMode);                     \
  template Tensor<T> rope_rotate<T>(const Tensor<T>&, std::span<const std::size_t>,  \
                                    double);                                         \
  template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&,                \
                                  const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> multi_head<T>(const Tensor<T>&, const LayerParams<T>&,          \
                                   const ModelConfig&, const Tensor<T>&);

L2IR_INSTANTIATE_MODEL(float)
L2IR_INSTANTIATE_MODEL(double)

}  // namespace l2ir
