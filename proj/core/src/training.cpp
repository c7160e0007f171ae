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

#include "l2ir/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "l2ir/checkpoint.hpp"
#include "l2ir/error.hpp"

namespace l2ir {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xD1B54A32D192ED03ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
Tensor<T> stack_rows(std::vector<Tensor<T>> rows) {
  if (rows.size() == 1) return rows.front();
  return concat(rows, 0);
}

template <typename T>
std::size_t count_values(const std::vector<NamedTensor<T>>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace

const char* to_string(NegativesScope scope) {
  return scope == NegativesScope::kBatch ? "batch" : "own";
}

NegativesScope parse_negatives_scope(std::string_view text) {
  if (text == "batch") return NegativesScope::kBatch;
  if (text == "own") return NegativesScope::kOwn;
  throw UsageError("unknown negatives scope '" + std::string(text) +
                   "' (expected batch|own)");
}

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw UsageError("tau must be > 0");
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw UsageError("lr must be > 0");
  if (epochs == 0) throw UsageError("epochs must be >= 1");
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0) ||
      !(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
    throw UsageError("AdamW betas must be in [0, 1)");
  }
  if (!(adamw.eps > 0.0)) throw UsageError("AdamW eps must be > 0");
  if (!(adamw.weight_decay >= 0.0)) throw UsageError("weight_decay must be >= 0");
  if (grad_clip && !(*grad_clip > 0.0)) throw UsageError("grad_clip must be > 0");
  if (use_lora) lora.validate();
}

template <typename T>
void ContrastiveBatch<T>::check_unit_rows(double tol) const {
  auto check = [tol](const Tensor<T>& m, const char* what) {
    if (!m) return;
    const std::size_t d = m.cols();
    auto v = m.data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) sq += double(v[r * d + c]) * double(v[r * d + c]);
      if (std::abs(std::sqrt(sq) - 1.0) > tol) {
        throw NumericalError(std::string(what) + " row " + std::to_string(r) +
                             " is not unit-normalised");
      }
    }
  };
  check(anchors, "anchor");
  check(positives, "positive");
  check(negatives, "negative");
}

template <typename T>
Tensor<T> info_nce_from_similarities(const Tensor<T>& pos, const Tensor<T>* neg,
                                     std::size_t k, double tau, NegativesScope scope) {
  if (!(tau > 0.0)) throw UsageError("tau must be > 0");
  const std::size_t n = pos.rows();
  if (pos.cols() != n) throw ShapeError("info_nce: positive similarities must be square");
  Tensor<T> logits = pos;
  if (k > 0) {
    if (neg == nullptr || neg->rows() != n || neg->cols() != n * k) {
      throw ShapeError("info_nce: negative similarities must be [N x N*K]");
    }
    logits = concat(std::vector<Tensor<T>>{pos, *neg}, 1);
  }
  logits = scale(logits, static_cast<T>(1.0 / tau));
  if (k > 0 && scope == NegativesScope::kOwn) {
    const std::size_t width = n + n * k;
    std::vector<T> mask(n * width, T(0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = n; c < width; ++c) {
        if ((c - n) / k != i) mask[i * width + c] = static_cast<T>(kMaskedLogit);
      }
    }
    logits = add(logits, Tensor<T>::from({n, width}, std::move(mask)));
  }
  std::vector<std::uint32_t> target(n);
  std::iota(target.begin(), target.end(), 0u);
  return scale(mean(pick_cols(log_softmax_rows(logits), target)), T(-1));
}

template <typename T>
Tensor<T> info_nce_loss(const ContrastiveBatch<T>& batch, double tau, NegativesScope scope) {
  if (!(tau > 0.0)) throw UsageError("tau must be > 0");
  if (batch.positives.rows() != batch.size()) {
    throw ShapeError("info_nce: anchors and positives differ in count");
  }
  batch.check_unit_rows();
  auto pos = matmul_transposed(batch.anchors, batch.positives);
  if (batch.k == 0) return info_nce_from_similarities<T>(pos, nullptr, 0, tau, scope);
  if (batch.negatives.rows() != batch.size() * batch.k) {
    throw ShapeError("info_nce: expected N*K negative rows");
  }
  auto neg = matmul_transposed(batch.anchors, batch.negatives);
  return info_nce_from_similarities<T>(pos, &neg, batch.k, tau, scope);
}

template <typename T>
AdamW<T>::AdamW(std::vector<NamedTensor<T>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  for (const auto& p : params_) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericalError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].tensor.mutable_data();
    auto g = params_[i].tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      double wj = static_cast<double>(w[j]);
      wj -= lr * cfg_.weight_decay * wj;
      wj -= lr * update;
      w[j] = static_cast<T>(wj);
    }
  }
}

template <typename T>
double clip_grad_norm(const std::vector<NamedTensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (const auto& p : params) {
      if (p.tensor.grad().empty()) continue;
      for (T& g : p.tensor.grad_accumulator()) g *= factor;
    }
  }
  return norm;
}

double scheduled_lr(const TrainConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.lr;
  return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

template <typename T>
ContrastiveBatch<T> embed_batch(const Model<T>& model, const std::vector<TrainingPair>& pairs,
                                const ForwardOptions& base, std::uint64_t seed) {
  if (pairs.empty()) throw UsageError("embed_batch: empty batch");
  const std::size_t k = pairs.front().negatives.size();
  std::vector<Tensor<T>> anchors, positives, negatives;
  std::uint64_t counter = 0;
  auto embed = [&](const TokenSequence& seq) {
    ForwardOptions opts = base;
    opts.dropout_seed = mix(seed, counter++);
    return model.embed_eos(seq, opts);
  };
  for (const auto& pair : pairs) {
    if (pair.negatives.size() != k) {
      throw DataError("batch pairs carry different numbers of negatives");
    }
    anchors.push_back(embed(pair.anchor));
    positives.push_back(embed(pair.positive));
    for (const auto& neg : pair.negatives) negatives.push_back(embed(neg));
  }
  ContrastiveBatch<T> batch;
  batch.anchors = stack_rows(std::move(anchors));
  batch.positives = stack_rows(std::move(positives));
  if (k > 0) batch.negatives = stack_rows(std::move(negatives));
  batch.k = k;
  return batch;
}

template <typename T>
TrainResult train(Model<T>& model, const PairBuilder& builder, const TrainConfig& cfg,
                  const TrainOutputs& outputs) {
  cfg.validate();
  const auto& aug = builder.config();
  if (aug.k != cfg.k) {
    throw UsageError("augmentation K=" + std::to_string(aug.k) + " but training K=" +
                     std::to_string(cfg.k));
  }
  if (cfg.use_lora && !model.has_lora()) model.enable_lora(cfg.lora, mix(cfg.seed, 1));

  auto trainable = model.trainable_parameters();
  AdamW<T> optimizer(trainable, cfg.adamw);
  TrainResult result;
  result.trainable_fraction = static_cast<double>(count_values(trainable)) /
                              static_cast<double>(count_values(model.parameters()));

  std::ofstream csv;
  if (outputs.metrics_csv) {
    csv.open(*outputs.metrics_csv, std::ios::binary | std::ios::trunc);
    if (!csv) throw DataError("cannot write " + outputs.metrics_csv->string());
    csv << "step,loss,lr,seconds\n";
  }

  ForwardOptions fwd;
  fwd.mode = ForwardMode::kTrain;
  if (aug.mode == AugmentationMode::kDropout) fwd.dropout_p = aug.dropout_p;

  Rng rng(cfg.seed);
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& pairs : builder.build_batches(cfg.batch_size, rng)) {
      if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
      ++step;
      for (auto& p : trainable) p.tensor.zero_grad();
      double loss_value = 0.0;
      {
        Tape<T> tape;
        typename Tape<T>::Scope scope(tape);
        auto batch = embed_batch(model, pairs, fwd, mix(cfg.seed, 2, step));
        auto loss = info_nce_loss(batch, cfg.tau, cfg.negatives_scope);
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
          throw NumericalError("non-finite loss at step " + std::to_string(step));
        }
        tape.backward(loss);
      }
      if (cfg.grad_clip) clip_grad_norm(trainable, *cfg.grad_clip);
      const double lr = scheduled_lr(cfg, step);
      optimizer.step(lr);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.push_back({step, loss_value, lr, seconds});
      if (csv.is_open()) {
        csv << step << ',' << fmt::format("{:.8g}", loss_value) << ','
            << fmt::format("{:.8g}", lr) << ',' << fmt::format("{:.3f}", seconds) << '\n';
        csv.flush();
      }
      spdlog::debug("step {} loss {:.6f}", step, loss_value);
    }
  }
  for (auto& p : trainable) p.tensor.zero_grad();
  result.steps = step;
  if (outputs.checkpoint) save_checkpoint(model, *outputs.checkpoint);
  return result;
}

template <typename T>
TrainResult train(Model<T>& model, const DocumentStore& store, const Vocabulary& vocab,
                  const InvertedIndex& index, AugmentationConfig aug, const TrainConfig& cfg,
                  const TrainOutputs& outputs) {
  if (store.size() <= cfg.k) {
    throw DataError("training needs more than K=" + std::to_string(cfg.k) +
                    " documents, corpus has " + std::to_string(store.size()));
  }
  aug.k = cfg.k;
  const auto negatives =
      mine_all_negatives(store, vocab, index, cfg.k, aug.passage_len, aug.seed);
  PairBuilder builder(store, vocab, negatives, aug);
  return train(model, builder, cfg, outputs);
}

template <typename T>
std::vector<double> pretrain_lm(Model<T>& model, std::span<const TokenSequence> docs,
                                std::size_t steps, std::size_t batch_size, double lr,
                                std::uint64_t seed) {
  if (docs.empty()) throw DataError("pretraining needs at least one document");
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  auto params = model.trainable_parameters();
  AdamW<T> optimizer(params, AdamWConfig{});
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, docs.size() - 1);
  const std::size_t window = model.config().max_context;
  std::vector<double> losses;
  for (std::size_t s = 0; s < steps; ++s) {
    for (auto& p : params) p.tensor.zero_grad();
    double total = 0.0;
    {
      Tape<T> tape;
      typename Tape<T>::Scope scope(tape);
      std::vector<Tensor<T>> parts;
      for (std::size_t b = 0; b < batch_size; ++b) {
        const auto seq = truncate(docs[pick(rng)], window);
        if (seq.size() < 2) continue;
        parts.push_back(model.lm_loss(seq, {ForwardMode::kTrain, std::nullopt,
                                            mix(seed, s, b)}));
      }
      if (parts.empty()) throw DataError("pretraining documents are all too short");
      Tensor<T> acc = parts.front();
      for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
      auto loss = scale(acc, static_cast<T>(1.0 / static_cast<double>(parts.size())));
      total = static_cast<double>(loss.item());
      tape.backward(loss);
    }
    optimizer.step(lr);
    losses.push_back(total);
  }
  for (auto& p : params) p.tensor.zero_grad();
  return losses;
}

#define L2IR_INSTANTIATE_TRAINING(T)                                                      \
  template struct ContrastiveBatch<T>;                                                    \
  template class AdamW<T>;                                                                \
  template Tensor<T> info_nce_loss<T>(const ContrastiveBatch<T>&, double, NegativesScope); \
  template Tensor<T> info_nce_from_similarities<T>(const Tensor<T>&, const Tensor<T>*,    \
                                                   std::size_t, double, NegativesScope);  \
  template double clip_grad_norm<T>(const std::vector<NamedTensor<T>>&, double);          \
  template ContrastiveBatch<T> embed_batch<T>(const Model<T>&,                            \
                                              const std::vector<TrainingPair>&,           \
                                              const ForwardOptions&, std::uint64_t);      \
  template TrainResult train<T>(Model<T>&, const PairBuilder&, const TrainConfig&,        \
                                const TrainOutputs&);                                     \
  template TrainResult train<T>(Model<T>&, const DocumentStore&, const Vocabulary&,       \
                                const InvertedIndex&, AugmentationConfig,                 \
                                const TrainConfig&, const TrainOutputs&);                 \
  template std::vector<double> pretrain_lm<T>(Model<T>&, std::span<const TokenSequence>,  \
                                              std::size_t, std::size_t, double,           \
                                              std::uint64_t);

L2IR_INSTANTIATE_TRAINING(float)
L2IR_INSTANTIATE_TRAINING(double)

}  // namespace l2ir
