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
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "l2ir/checkpoint.hpp"
#include "l2ir/error.hpp"
#include "l2ir/experiments.hpp"

namespace l2ir {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string ndcg_key(const EvalConfig& eval) { return "ndcg@" + std::to_string(eval.ndcg_k); }

EvalConfig eval_config(const ExperimentSetup& setup) {
  EvalConfig eval = setup.eval;
  eval.query_prefix = setup.augmentation.query_prefix;
  eval.passage_prefix = setup.augmentation.passage_prefix;
  return eval;
}

std::vector<std::string> prefix_words(const AugmentationConfig& aug) {
  std::vector<std::string> words = split_words(aug.query_prefix);
  for (auto& w : split_words(aug.passage_prefix)) words.push_back(std::move(w));
  return words;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

ordered_json twin_json(const TwinOutcome& twin) {
  ordered_json j;
  j["label"] = twin.label;
  ordered_json metrics;
  for (const auto& [name, value] : twin.report.metrics) metrics[name] = value;
  j["metrics"] = metrics;
  j["steps"] = twin.log.size();
  j["final_loss"] = twin.log.empty() ? 0.0 : twin.log.back().loss;
  std::vector<double> losses;
  for (const auto& s : twin.log) losses.push_back(s.loss);
  j["loss"] = losses;
  return j;
}

ordered_json twin_row(const TwinOutcome& twin) {
  ordered_json row;
  row["run"] = twin.label;
  for (const auto& [name, value] : twin.report.metrics) row[name] = value;
  row["final_loss"] = twin.log.empty() ? 0.0 : twin.log.back().loss;
  return row;
}

std::string losses_csv(const std::vector<const TwinOutcome*>& twins) {
  std::string out = "run,step,loss,lr\n";
  for (const TwinOutcome* t : twins) {
    for (const auto& s : t->log) {
      out += fmt::format("{},{},{:.9g},{:.9g}\n", t->label, s.step, s.loss, s.lr);
    }
  }
  return out;
}

void write_common(const std::filesystem::path& dir, const ExperimentSetup& setup,
                  const std::string& report_json,
                  const std::vector<const TwinOutcome*>& twins) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", to_json(setup));
  write_text(dir / "report.json", report_json);
  if (!twins.empty()) write_text(dir / "losses.csv", losses_csv(twins));
  for (const TwinOutcome* t : twins) write_run(t->report.run, dir / (t->label + ".run"), t->label);
}

std::uint64_t hash_sequences(const std::vector<TokenSequence>& seqs) {
  std::uint64_t h = fnv1a64("");
  for (const auto& seq : seqs) {
    std::string bytes(reinterpret_cast<const char*>(seq.data()), seq.size() * sizeof(TokenId));
    h = fnv1a64(bytes, h);
    h = fnv1a64(std::string_view("\n", 1), h);
  }
  return h;
}

// Token sequences a model with window `max_context` receives under `eval`.
std::vector<TokenSequence> eval_inputs(const ExperimentData& data, const EvalConfig& eval,
                                       std::size_t max_context) {
  const std::size_t plen = std::min(eval.passage_len, max_context);
  const std::size_t qlen = std::min(eval.query_len == 0 ? eval.passage_len : eval.query_len,
                                    max_context);
  const TokenSequence pprefix = encode_words(eval.passage_prefix, data.vocab);
  const TokenSequence qprefix = encode_words(eval.query_prefix, data.vocab);
  std::vector<TokenSequence> seqs;
  for (const auto& doc : data.corpus.store.docs()) {
    seqs.push_back(with_prefix(pprefix, tokenize(doc.text, data.vocab), plen));
  }
  for (const auto& q : data.queries) {
    seqs.push_back(with_prefix(qprefix, tokenize(q.text, data.vocab), qlen));
  }
  return seqs;
}

}  // namespace

ExperimentData prepare_data(const ExperimentSetup& setup,
                            const std::vector<std::string>& extra_texts) {
  SyntheticCorpus corpus = generate_synthetic_corpus(setup.corpus);
  DocumentStore vocab_source = corpus.store;
  for (std::size_t i = 0; i < extra_texts.size(); ++i) {
    vocab_source.add({"extra:" + std::to_string(i), extra_texts[i]});
  }
  const std::vector<std::string> forced = prefix_words(setup.augmentation);
  Vocabulary vocab = build_vocab(vocab_source, std::size_t{1} << 24, 1, forced);
  InvertedIndex index = InvertedIndex::build(corpus.store, vocab);
  std::vector<Query> queries;
  Qrels qrels;
  make_crop_queries(corpus.store, setup.query_words, setup.query_seed, queries, qrels);
  return {std::move(corpus), std::move(vocab), std::move(index), std::move(queries),
          std::move(qrels)};
}

Model<float> make_backbone(const ExperimentSetup& setup, const ModelConfig& cfg,
                           const ExperimentData& data) {
  ModelConfig mc = cfg;
  mc.vocab_size = data.vocab.size();
  Model<float> model(mc, setup.model_seed);
  if (setup.pretrain_steps > 0) {
    std::vector<TokenSequence> docs;
    for (const auto& doc : data.corpus.store.docs()) docs.push_back(tokenize(doc.text, data.vocab));
    const auto losses = pretrain_lm(model, docs, setup.pretrain_steps, setup.pretrain_batch_size,
                                    setup.pretrain_lr, setup.pretrain_seed);
    spdlog::debug("pretrain ({} ctx): loss {:.4f} -> {:.4f}", mc.max_context, losses.front(),
                  losses.back());
  }
  return model;
}

double TwinOutcome::ndcg() const {
  for (const auto& [name, value] : report.metrics) {
    if (name.rfind("ndcg@", 0) == 0) return value;
  }
  throw DataError("report for '" + label + "' has no nDCG metric");
}

std::optional<std::size_t> first_step_below(const std::vector<StepLog>& log, double threshold) {
  for (const auto& s : log) {
    if (s.loss < threshold) return s.step;
  }
  return std::nullopt;
}

TwinOutcome train_and_evaluate(Model<float>& model, const ExperimentData& data,
                               const AugmentationConfig& aug, const TrainConfig& train_cfg,
                               const EvalConfig& eval, std::string label) {
  spdlog::info("training '{}'", label);
  TrainResult result = train(model, data.corpus.store, data.vocab, data.index, aug, train_cfg);
  EvalConfig ec = eval;
  ec.run_tag = label;
  EvalReport report = evaluate(model, data.corpus.store, data.vocab, data.queries, data.qrels, ec);
  spdlog::info("'{}': {} = {:.4f}", label, ndcg_key(ec), report.metrics.at(ndcg_key(ec)));
  return {std::move(label), std::move(result.log), std::move(report)};
}

EndToEndReport run_end_to_end(const ExperimentSetup& setup) {
  setup.validate();
  const ExperimentData data = prepare_data(setup);
  const EvalConfig eval = eval_config(setup);
  const std::string key = ndcg_key(eval);
  EndToEndReport rep;
  rep.bm25_ndcg =
      evaluate_run(bm25_run(data.index, data.vocab, data.queries, eval.top_k), data.qrels, eval)
          .metrics.at(key);
  ModelConfig mc = setup.model;
  mc.vocab_size = data.vocab.size();
  const Model<float> random(mc, setup.model_seed);
  rep.random_init_ndcg =
      evaluate(random, data.corpus.store, data.vocab, data.queries, data.qrels, eval).metrics.at(key);
  Model<float> model = make_backbone(setup, setup.model, data);
  rep.pretrained_ndcg =
      evaluate(model, data.corpus.store, data.vocab, data.queries, data.qrels, eval).metrics.at(key);
  rep.trained = train_and_evaluate(model, data, setup.augmentation, setup.train, eval, "trained");
  return rep;
}

AblationReport run_ablation_hard_negatives(const ExperimentSetup& setup) {
  setup.validate();
  const ExperimentData data = prepare_data(setup);
  const EvalConfig eval = eval_config(setup);
  const Model<float> backbone = make_backbone(setup, setup.model, data);
  AblationReport rep;
  rep.k = setup.train.k;
  TrainConfig with = setup.train;
  TrainConfig without = setup.train;
  without.k = 0;
  Model<float> a = backbone.clone();
  rep.with_negatives =
      train_and_evaluate(a, data, setup.augmentation, with, eval, "k" + std::to_string(with.k));
  Model<float> b = backbone.clone();
  rep.without_negatives = train_and_evaluate(b, data, setup.augmentation, without, eval, "k0");
  return rep;
}

AugmentationReport run_augmentation_comparison(const ExperimentSetup& setup) {
  setup.validate();
  const ExperimentData data = prepare_data(setup);
  const EvalConfig eval = eval_config(setup);
  const Model<float> backbone = make_backbone(setup, setup.model, data);
  AugmentationReport rep;
  AugmentationConfig crop = setup.augmentation;
  crop.mode = AugmentationMode::kCrop;
  AugmentationConfig dropout = setup.augmentation;
  dropout.mode = AugmentationMode::kDropout;
  rep.dropout_degenerate = dropout.dropout_p == 0.0;
  if (rep.dropout_degenerate) spdlog::warn("dropout mode with p = 0: positives equal anchors");
  Model<float> a = backbone.clone();
  rep.crop = train_and_evaluate(a, data, crop, setup.train, eval, "crop");
  Model<float> b = backbone.clone();
  rep.dropout = train_and_evaluate(b, data, dropout, setup.train, eval, "dropout");
  return rep;
}

ContextPairReport run_context_pair(const ExperimentSetup& setup, const ContextPairConfig& cfg,
                                   const std::vector<std::string>& extra_texts,
                                   std::optional<Model<float>>* long_model, Vocabulary* vocab) {
  cfg.validate();
  ExperimentSetup base = setup;
  base.corpus.doc_len = cfg.doc_len;
  const ExperimentData data = prepare_data(base, extra_texts);
  EvalConfig eval = eval_config(setup);
  const std::size_t truncate_to = cfg.truncate_to();
  eval.passage_len = truncate_to;
  eval.query_len = std::min(eval.query_len == 0 ? setup.eval.passage_len : eval.query_len,
                            truncate_to);

  ContextPairReport rep;
  rep.long_context = cfg.config_long.max_context;
  rep.short_context = cfg.config_short.max_context;
  rep.truncate_to = truncate_to;
  const std::uint64_t long_hash = hash_sequences(eval_inputs(data, eval, rep.long_context));
  const std::uint64_t short_hash = hash_sequences(eval_inputs(data, eval, rep.short_context));
  if (long_hash != short_hash) {
    throw DataError("context twins would receive different evaluation inputs");
  }
  rep.input_hash = long_hash;

  for (int twin = 0; twin < 2; ++twin) {
    const ModelConfig& mc = twin == 0 ? cfg.config_long : cfg.config_short;
    Model<float> model = make_backbone(base, mc, data);
    AugmentationConfig aug = setup.augmentation;
    aug.passage_len = mc.max_context;
    const std::string label = "ctx" + std::to_string(mc.max_context);
    TwinOutcome outcome = train_and_evaluate(model, data, aug, setup.train, eval, label);
    if (twin == 0) {
      rep.long_twin = std::move(outcome);
      if (long_model != nullptr) long_model->emplace(std::move(model));
    } else {
      rep.short_twin = std::move(outcome);
    }
  }
  if (vocab != nullptr) *vocab = data.vocab;
  return rep;
}

std::vector<PasskeyCorpus> make_fill_corpora(const FillSweepConfig& cfg, std::size_t max_context,
                                             std::size_t prefix_tokens) {
  cfg.validate();
  std::vector<PasskeyCorpus> out;
  for (double fill : cfg.fills) {
    const auto total =
        static_cast<std::size_t>(std::llround(fill * static_cast<double>(max_context)));
    if (total < prefix_tokens + 1 + kKeySentenceWords) {
      throw UsageError(fmt::format("fill {} of a {}-token window cannot hold the key sentence",
                                   fill, max_context));
    }
    PasskeySpec spec;
    spec.n_docs = cfg.n_docs;
    spec.doc_len = total - prefix_tokens - 1;
    spec.depth = cfg.depth;
    spec.key_len = cfg.key_len;
    spec.filler_vocab_size = cfg.filler_vocab_size;
    spec.seed = cfg.seed;
    out.push_back(generate_passkey_corpus(spec));
  }
  return out;
}

FillSweepReport run_fill_fraction_sweep(const Model<float>& model, const Vocabulary& vocab,
                                        const FillSweepConfig& cfg, const EvalConfig& eval) {
  const std::size_t ctx = model.config().max_context;
  const TokenSequence prefix = encode_words(eval.passage_prefix, vocab);
  const auto corpora = make_fill_corpora(cfg, ctx, prefix.size());
  FillSweepReport rep;
  rep.max_context = ctx;
  rep.n_docs = cfg.n_docs;
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    const PasskeyCorpus& pk = corpora[i];
    EvalConfig ec = eval;
    ec.passage_len = ctx;
    ec.query_len = std::min(ec.query_len == 0 ? ctx : ec.query_len, ctx);
    ec.top_k = cfg.n_docs;
    const EvalReport report = evaluate(model, pk.store, vocab, pk.queries, pk.qrels, ec);
    FillPoint point;
    point.fill = cfg.fills[i];
    point.doc_words = split_words(pk.store[0].text).size();
    point.tokens = with_prefix(prefix, tokenize(pk.store[0].text, vocab), ctx).size();
    point.accuracy = accuracy_at_1(report.run, pk.qrels);
    spdlog::info("fill {:.2f}: {} tokens, accuracy@1 {:.3f}", point.fill, point.tokens,
                 point.accuracy);
    rep.points.push_back(point);
  }
  return rep;
}

ContextStudy run_context_study(const ExperimentSetup& setup) {
  setup.validate();
  const ContextPairConfig cfg = setup.context_pair();
  const std::size_t prefix_tokens = split_words(setup.augmentation.passage_prefix).size();
  std::vector<std::string> extra;
  for (const auto& pk : make_fill_corpora(setup.fill, cfg.config_long.max_context, prefix_tokens)) {
    for (const auto& doc : pk.store.docs()) extra.push_back(doc.text);
    for (const auto& q : pk.queries) extra.push_back(q.text);
  }
  std::optional<Model<float>> long_model;
  Vocabulary vocab;
  ContextStudy study;
  study.pair = run_context_pair(setup, cfg, extra, &long_model, &vocab);
  study.sweep = run_fill_fraction_sweep(*long_model, vocab, setup.fill, eval_config(setup));
  return study;
}

std::string EndToEndReport::to_json() const {
  ordered_json j;
  j["experiment"] = "end-to-end";
  j["bm25_ndcg"] = bm25_ndcg;
  j["random_init_ndcg"] = random_init_ndcg;
  j["pretrained_ndcg"] = pretrained_ndcg;
  j["trained"] = twin_json(trained);
  j["gain_over_random"] = trained.ndcg() - random_init_ndcg;
  ordered_json bm25_row = {{"run", "bm25"}, {"ndcg", bm25_ndcg}};
  ordered_json random_row = {{"run", "random-init"}, {"ndcg", random_init_ndcg}};
  ordered_json pre_row = {{"run", "pretrained"}, {"ndcg", pretrained_ndcg}};
  ordered_json trained_row = {{"run", "trained"}, {"ndcg", trained.ndcg()}};
  j["rows"] = {bm25_row, random_row, pre_row, trained_row};
  return j.dump(2) + "\n";
}

void EndToEndReport::write(const std::filesystem::path& dir, const ExperimentSetup& setup) const {
  write_common(dir, setup, to_json(), {&trained});
}

std::string AblationReport::to_json() const {
  ordered_json j;
  j["experiment"] = "ablate-negatives";
  j["k"] = k;
  j["with_negatives"] = twin_json(with_negatives);
  j["without_negatives"] = twin_json(without_negatives);
  const auto collapse = first_step_below(without_negatives.log, 0.05);
  j["k0_first_step_below_0.05"] = collapse ? json(*collapse) : json(nullptr);
  j["rows"] = {twin_row(with_negatives), twin_row(without_negatives)};
  return j.dump(2) + "\n";
}

void AblationReport::write(const std::filesystem::path& dir, const ExperimentSetup& setup) const {
  write_common(dir, setup, to_json(), {&with_negatives, &without_negatives});
}

std::string AugmentationReport::to_json() const {
  ordered_json j;
  j["experiment"] = "compare-aug";
  j["crop"] = twin_json(crop);
  j["dropout"] = twin_json(dropout);
  j["dropout_degenerate"] = dropout_degenerate;
  j["crop_minus_dropout"] = crop.ndcg() - dropout.ndcg();
  if (dropout_degenerate) j["notes"] = {"dropout p = 0: positives equal anchors (degenerate)"};
  j["rows"] = {twin_row(crop), twin_row(dropout)};
  return j.dump(2) + "\n";
}

void AugmentationReport::write(const std::filesystem::path& dir,
                               const ExperimentSetup& setup) const {
  write_common(dir, setup, to_json(), {&crop, &dropout});
}

std::string ContextPairReport::to_json() const {
  ordered_json j;
  j["experiment"] = "context-pair";
  j["notes"] = {
      "both twins start from the same initialization; no context-extension fine-tuning",
      fmt::format("inputs truncated to {} tokens for both twins", truncate_to)};
  j["long_context"] = long_context;
  j["short_context"] = short_context;
  j["truncate_to"] = truncate_to;
  j["input_hash"] = fmt::format("{:016x}", input_hash);
  j["long"] = twin_json(long_twin);
  j["short"] = twin_json(short_twin);
  j["delta"] = delta();
  j["rows"] = {twin_row(long_twin), twin_row(short_twin)};
  return j.dump(2) + "\n";
}

void ContextPairReport::write(const std::filesystem::path& dir,
                              const ExperimentSetup& setup) const {
  write_common(dir, setup, to_json(), {&long_twin, &short_twin});
}

double FillSweepReport::accuracy_at(double fill) const {
  for (const auto& p : points) {
    if (std::abs(p.fill - fill) < 1e-12) return p.accuracy;
  }
  throw UsageError(fmt::format("fill {} is not part of the sweep", fill));
}

std::string FillSweepReport::to_csv() const {
  std::string out = "fill,doc_words,tokens,accuracy\n";
  for (const auto& p : points) {
    out += fmt::format("{},{},{},{:.6f}\n", p.fill, p.doc_words, p.tokens, p.accuracy);
  }
  return out;
}

std::string FillSweepReport::to_json() const {
  ordered_json j;
  j["experiment"] = "fill-sweep";
  j["max_context"] = max_context;
  j["n_docs"] = n_docs;
  j["chance"] = n_docs == 0 ? 0.0 : 1.0 / static_cast<double>(n_docs);
  ordered_json rows = ordered_json::array();
  for (const auto& p : points) {
    rows.push_back({{"fill", p.fill},
                    {"doc_words", p.doc_words},
                    {"tokens", p.tokens},
                    {"accuracy@1", p.accuracy}});
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

void FillSweepReport::write(const std::filesystem::path& dir, const ExperimentSetup& setup) const {
  write_common(dir, setup, to_json(), {});
  write_text(dir / "fill_sweep.csv", to_csv());
}

std::string render_report(std::string_view report_json) {
  ordered_json j;
  try {
    j = ordered_json::parse(report_json);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("report must be a JSON object");

  ordered_json rows = ordered_json::array();
  std::string title;
  if (j.contains("rows") && j["rows"].is_array()) {
    rows = j["rows"];
    title = j.value("experiment", std::string("report"));
  } else if (j.contains("metrics") && j["metrics"].is_object()) {
    ordered_json row;
    row["run"] = j.value("run_tag", std::string("run"));
    for (const auto& item : j["metrics"].items()) row[item.key()] = item.value();
    rows.push_back(row);
    title = "evaluation";
  } else {
    throw DataError("report has neither 'rows' nor 'metrics'");
  }

  std::vector<std::string> columns;
  for (const auto& row : rows) {
    if (!row.is_object()) throw DataError("report rows must be objects");
    for (const auto& item : row.items()) {
      if (std::find(columns.begin(), columns.end(), item.key()) == columns.end()) {
        columns.push_back(item.key());
      }
    }
  }
  auto cell = [](const ordered_json& v) -> std::string {
    if (v.is_null()) return "-";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) return fmt::format("{:.4f}", v.get<double>());
    return v.dump();
  };
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
  for (const auto& row : rows) {
    std::vector<std::string> line;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      line.push_back(row.contains(columns[c]) ? cell(row[columns[c]]) : "-");
      width[c] = std::max(width[c], line.back().size());
    }
    cells.push_back(std::move(line));
  }

  std::string out = title + "\n";
  if (j.contains("notes") && j["notes"].is_array()) {
    for (const auto& n : j["notes"]) out += "note: " + cell(n) + "\n";
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out += "  ";
      if (c == 0) {
        out += fmt::format("{:<{}}", line[c], width[c]);
      } else {
        out += fmt::format("{:>{}}", line[c], width[c]);
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
  };
  emit(columns);
  std::vector<std::string> rule;
  for (std::size_t w : width) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& line : cells) emit(line);
  return out;
}

}  // namespace l2ir
