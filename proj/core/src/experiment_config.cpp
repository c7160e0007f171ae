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

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "l2ir/error.hpp"
#include "l2ir/experiments.hpp"

namespace l2ir {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    auto it = root.find(name);
    if (it == root.end()) return;
    if (!it->is_object()) throw UsageError(std::string("'") + name + "' must be an object");
    obj_ = &*it;
  }

  // Rejects keys that no read() asked for.
  void done() const {
    if (obj_ == nullptr) return;
    for (const auto& item : obj_->items()) {
      if (!used_.count(item.key())) {
        throw UsageError("unknown key '" + name_ + "." + item.key() + "'");
      }
    }
  }

  void read(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }

  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "true or false");
      out = v->get<bool>();
    }
  }

  void read(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  void read(const char* key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(key, "a number or null");
      }
    }
  }

  template <typename E>
  void read(const char* key, E& out, E (*parse)(std::string_view)) {
    std::string text;
    if (find(key) == nullptr) return;
    read(key, text);
    out = parse(text);
  }

  void read(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) fail(key, "an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }

  void read(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of non-negative integers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number_unsigned()) fail(key, "an array of non-negative integers");
        out.push_back(x.get<std::size_t>());
      }
    }
  }

 private:
  const json* find(const char* key) {
    if (obj_ == nullptr) return nullptr;
    used_.insert(key);
    auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const char* key, const char* what) const {
    throw UsageError("'" + name_ + "." + key + "' must be " + what);
  }

  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> used_;
};

std::string lora_targets(const std::array<bool, kNumLoraTargets>& targets) {
  LoraConfig cfg;
  cfg.targets = targets;
  return cfg.targets_string();
}

}  // namespace

ExperimentSetup::ExperimentSetup() {
  corpus.seed = 1;
  model.init_std = 0.05;
  model.zero_init_residual = true;
  augmentation.anchor_len = 16;
  augmentation.passage_len = 128;
  augmentation.seed = 3;
  train.batch_size = 4;
  train.lr = 1e-3;
  train.seed = 11;
  eval.passage_len = 128;
  eval.query_len = 32;
}

ContextPairConfig ExperimentSetup::context_pair() const {
  ContextPairConfig cfg;
  cfg.config_long = model;
  cfg.config_long.max_context = long_context;
  cfg.config_short = model;
  cfg.config_short.max_context = short_context;
  cfg.doc_len = long_doc_len;
  return cfg;
}

void ExperimentSetup::validate() const {
  corpus.validate();
  ModelConfig probe = model;
  probe.vocab_size = Vocabulary::kNumReserved + 1;
  probe.validate();
  augmentation.validate();
  train.validate();
  if (query_words == 0) throw UsageError("eval.query_words must be >= 1");
  if (eval.passage_len > model.max_context) {
    throw UsageError("eval.passage_len exceeds model.max_context");
  }
  if (augmentation.passage_len > model.max_context) {
    throw UsageError("augmentation.passage_len exceeds model.max_context");
  }
  if (short_context == 0 || short_context >= long_context) {
    throw UsageError("context.short_context must be in [1, context.long_context)");
  }
  if (long_doc_len == 0) throw UsageError("context.doc_len must be >= 1");
  fill.validate();
  context_pair().validate();
}

std::size_t ContextPairConfig::truncate_to() const {
  return std::min(config_long.max_context, config_short.max_context);
}

void ContextPairConfig::validate() const {
  for (ModelConfig probe : {config_long, config_short}) {
    if (probe.vocab_size == 0) probe.vocab_size = Vocabulary::kNumReserved + 1;
    probe.validate();
  }
  ModelConfig aligned = config_short;
  aligned.max_context = config_long.max_context;
  aligned.rope_theta = config_long.rope_theta;
  if (!(aligned == config_long)) {
    throw UsageError("context pair configs differ outside max_context and rope_theta");
  }
  if (doc_len == 0) throw UsageError("context pair doc_len must be >= 1");
}

void FillSweepConfig::validate() const {
  if (fills.empty()) throw UsageError("fill sweep needs at least one fill fraction");
  for (double f : fills) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw UsageError("fill fraction " + std::to_string(f) + " is outside (0, 1]");
    }
  }
  if (n_docs == 0) throw UsageError("fill.n_docs must be >= 1");
  if (!(depth >= 0.0 && depth <= 1.0)) throw UsageError("fill.depth must be in [0, 1]");
}

ExperimentSetup ExperimentSetup::library_defaults() {
  ExperimentSetup s;
  s.corpus = SyntheticCorpusSpec{};
  s.model = ModelConfig{};
  s.model_seed = 0;
  s.pretrain_steps = 0;
  s.augmentation = AugmentationConfig{};
  s.train = TrainConfig{};
  s.eval = EvalConfig{};
  return s;
}

ExperimentSetup parse_experiment_setup(std::string_view json_text, const ExperimentSetup& base) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("experiment spec is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw UsageError("experiment spec must be a JSON object");
  static const std::set<std::string> kSections = {"corpus", "model", "pretrain", "augmentation",
                                                  "train", "eval", "context", "fill"};
  for (const auto& item : root.items()) {
    if (!kSections.count(item.key())) throw UsageError("unknown section '" + item.key() + "'");
  }

  ExperimentSetup s = base;
  {
    Section c(root, "corpus");
    c.read("n_topics", s.corpus.n_topics);
    c.read("docs_per_topic", s.corpus.docs_per_topic);
    c.read("doc_len", s.corpus.doc_len);
    c.read("topic_vocab_size", s.corpus.topic_vocab_size);
    c.read("shared_vocab_size", s.corpus.shared_vocab_size);
    c.read("topic_fraction", s.corpus.topic_fraction);
    std::size_t seed = s.corpus.seed;
    c.read("seed", seed);
    s.corpus.seed = seed;
    c.done();
  }
  {
    Section m(root, "model");
    m.read("d_model", s.model.d_model);
    m.read("n_heads", s.model.n_heads);
    m.read("n_layers", s.model.n_layers);
    m.read("d_ff", s.model.d_ff);
    m.read("max_context", s.model.max_context);
    m.read("rope_theta", s.model.rope_theta);
    m.read("attn_mode", s.model.attn_mode, &parse_attention_mode);
    m.read("dropout_p", s.model.dropout_p);
    m.read("init_std", s.model.init_std);
    m.read("zero_init_residual", s.model.zero_init_residual);
    std::size_t seed = s.model_seed;
    m.read("seed", seed);
    s.model_seed = seed;
    m.done();
  }
  {
    Section p(root, "pretrain");
    p.read("steps", s.pretrain_steps);
    p.read("batch_size", s.pretrain_batch_size);
    p.read("lr", s.pretrain_lr);
    std::size_t seed = s.pretrain_seed;
    p.read("seed", seed);
    s.pretrain_seed = seed;
    p.done();
  }
  {
    Section a(root, "augmentation");
    a.read("mode", s.augmentation.mode, &parse_augmentation_mode);
    a.read("anchor_len", s.augmentation.anchor_len);
    a.read("passage_len", s.augmentation.passage_len);
    a.read("dropout_p", s.augmentation.dropout_p);
    a.read("crop_positive", s.augmentation.crop_positive);
    a.read("query_prefix", s.augmentation.query_prefix);
    a.read("passage_prefix", s.augmentation.passage_prefix);
    std::size_t seed = s.augmentation.seed;
    a.read("seed", seed);
    s.augmentation.seed = seed;
    a.done();
  }
  {
    Section t(root, "train");
    t.read("k", s.train.k);
    t.read("tau", s.train.tau);
    t.read("batch_size", s.train.batch_size);
    t.read("lr", s.train.lr);
    t.read("epochs", s.train.epochs);
    t.read("max_steps", s.train.max_steps);
    t.read("warmup_steps", s.train.warmup_steps);
    t.read("grad_clip", s.train.grad_clip);
    t.read("negatives_scope", s.train.negatives_scope, &parse_negatives_scope);
    t.read("weight_decay", s.train.adamw.weight_decay);
    t.read("beta1", s.train.adamw.beta1);
    t.read("beta2", s.train.adamw.beta2);
    t.read("eps", s.train.adamw.eps);
    t.read("use_lora", s.train.use_lora);
    t.read("lora_rank", s.train.lora.rank);
    t.read("lora_alpha", s.train.lora.alpha);
    std::string targets = s.train.lora.targets_string();
    t.read("lora_targets", targets);
    s.train.lora.targets = LoraConfig::parse_targets(targets);
    std::size_t seed = s.train.seed;
    t.read("seed", seed);
    s.train.seed = seed;
    t.done();
  }
  {
    Section e(root, "eval");
    e.read("passage_len", s.eval.passage_len);
    e.read("query_len", s.eval.query_len);
    e.read("top_k", s.eval.top_k);
    e.read("ndcg_k", s.eval.ndcg_k);
    e.read("recall_ks", s.eval.recall_ks);
    e.read("run_tag", s.eval.run_tag);
    e.read("query_words", s.query_words);
    std::size_t seed = s.query_seed;
    e.read("query_seed", seed);
    s.query_seed = seed;
    e.done();
  }
  {
    Section c(root, "context");
    c.read("short_context", s.short_context);
    c.read("long_context", s.long_context);
    c.read("doc_len", s.long_doc_len);
    c.done();
  }
  {
    Section f(root, "fill");
    f.read("fills", s.fill.fills);
    f.read("n_docs", s.fill.n_docs);
    f.read("depth", s.fill.depth);
    f.read("key_len", s.fill.key_len);
    f.read("filler_vocab_size", s.fill.filler_vocab_size);
    std::size_t seed = s.fill.seed;
    f.read("seed", seed);
    s.fill.seed = seed;
    f.done();
  }
  s.eval.query_prefix = s.augmentation.query_prefix;
  s.eval.passage_prefix = s.augmentation.passage_prefix;
  return s;
}

PasskeySpec parse_passkey_spec(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("passkey spec is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw UsageError("passkey spec must be a JSON object");
  for (const auto& item : root.items()) {
    if (item.key() != "passkey") throw UsageError("unknown section '" + item.key() + "'");
  }
  PasskeySpec spec;
  Section p(root, "passkey");
  p.read("n_docs", spec.n_docs);
  p.read("doc_len", spec.doc_len);
  p.read("depth", spec.depth);
  p.read("key_len", spec.key_len);
  p.read("filler_vocab_size", spec.filler_vocab_size);
  std::size_t seed = spec.seed;
  p.read("seed", seed);
  spec.seed = seed;
  p.done();
  return spec;
}

ExperimentSetup load_experiment_setup(const std::filesystem::path& path,
                                      const ExperimentSetup& base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open experiment spec '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_setup(buf.str(), base);
}

std::string to_json(const ExperimentSetup& s) {
  json root;
  root["corpus"] = {{"n_topics", s.corpus.n_topics},
                    {"docs_per_topic", s.corpus.docs_per_topic},
                    {"doc_len", s.corpus.doc_len},
                    {"topic_vocab_size", s.corpus.topic_vocab_size},
                    {"shared_vocab_size", s.corpus.shared_vocab_size},
                    {"topic_fraction", s.corpus.topic_fraction},
                    {"seed", s.corpus.seed}};
  root["model"] = {{"d_model", s.model.d_model},
                   {"n_heads", s.model.n_heads},
                   {"n_layers", s.model.n_layers},
                   {"d_ff", s.model.d_ff},
                   {"max_context", s.model.max_context},
                   {"rope_theta", s.model.rope_theta},
                   {"attn_mode", to_string(s.model.attn_mode)},
                   {"dropout_p", s.model.dropout_p},
                   {"init_std", s.model.init_std},
                   {"zero_init_residual", s.model.zero_init_residual},
                   {"seed", s.model_seed}};
  root["pretrain"] = {{"steps", s.pretrain_steps},
                      {"batch_size", s.pretrain_batch_size},
                      {"lr", s.pretrain_lr},
                      {"seed", s.pretrain_seed}};
  root["augmentation"] = {{"mode", to_string(s.augmentation.mode)},
                          {"anchor_len", s.augmentation.anchor_len},
                          {"passage_len", s.augmentation.passage_len},
                          {"dropout_p", s.augmentation.dropout_p},
                          {"crop_positive", s.augmentation.crop_positive},
                          {"query_prefix", s.augmentation.query_prefix},
                          {"passage_prefix", s.augmentation.passage_prefix},
                          {"seed", s.augmentation.seed}};
  root["train"] = {{"k", s.train.k},
                   {"tau", s.train.tau},
                   {"batch_size", s.train.batch_size},
                   {"lr", s.train.lr},
                   {"epochs", s.train.epochs},
                   {"max_steps", s.train.max_steps},
                   {"warmup_steps", s.train.warmup_steps},
                   {"grad_clip", s.train.grad_clip ? json(*s.train.grad_clip) : json(nullptr)},
                   {"negatives_scope", to_string(s.train.negatives_scope)},
                   {"weight_decay", s.train.adamw.weight_decay},
                   {"beta1", s.train.adamw.beta1},
                   {"beta2", s.train.adamw.beta2},
                   {"eps", s.train.adamw.eps},
                   {"use_lora", s.train.use_lora},
                   {"lora_rank", s.train.lora.rank},
                   {"lora_alpha", s.train.lora.alpha},
                   {"lora_targets", lora_targets(s.train.lora.targets)},
                   {"seed", s.train.seed}};
  root["eval"] = {{"passage_len", s.eval.passage_len},
                  {"query_len", s.eval.query_len},
                  {"top_k", s.eval.top_k},
                  {"ndcg_k", s.eval.ndcg_k},
                  {"recall_ks", s.eval.recall_ks},
                  {"run_tag", s.eval.run_tag},
                  {"query_words", s.query_words},
                  {"query_seed", s.query_seed}};
  root["context"] = {{"short_context", s.short_context},
                     {"long_context", s.long_context},
                     {"doc_len", s.long_doc_len}};
  root["fill"] = {{"fills", s.fill.fills},
                  {"n_docs", s.fill.n_docs},
                  {"depth", s.fill.depth},
                  {"key_len", s.fill.key_len},
                  {"filler_vocab_size", s.fill.filler_vocab_size},
                  {"seed", s.fill.seed}};
  return root.dump(2) + "\n";
}

}  // namespace l2ir
