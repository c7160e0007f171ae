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
#include <memory>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "common.hpp"
#include "json.hpp"
#include "l2ir/checkpoint.hpp"
#include "l2ir/dense_retrieval.hpp"
#include "l2ir/error.hpp"
#include "l2ir/sparse_index.hpp"
#include "l2ir/training.hpp"

namespace l2ir::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string default_index_path(const std::string& store) {
  return (fs::path(store) / "bm25.idx").string();
}

InvertedIndex open_or_build_index(const std::string& path, const Store& s) {
  if (!path.empty()) return InvertedIndex::load(path);
  return InvertedIndex::build(s.docs, s.vocab);
}

void add_ingest(CLI::App& app) {
  struct Opts {
    std::string input, out, config;
    std::size_t max_vocab = 8192;
    std::size_t min_freq = 1;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("ingest", "Build a document store and vocabulary from JSONL");
  cmd->add_option("jsonl", o->input, "Input JSONL with \"id\" and \"text\"")->required();
  cmd->add_option("--out", o->out, "Output store directory")->required();
  cmd->add_option("--max-vocab", o->max_vocab, "Vocabulary size cap")->capture_default_str();
  cmd->add_option("--min-freq", o->min_freq, "Minimum token count")->capture_default_str();
  add_config_option(cmd, o->config);
  cmd->callback([o] {
    const ExperimentSetup setup = load_setup(o->config, ExperimentSetup::library_defaults());
    DocumentStore docs = ingest_jsonl(o->input);
    Vocabulary vocab = store_vocab(docs, setup, o->max_vocab, o->min_freq);
    save_store(o->out, docs, vocab);
    fmt::print("ingested {} documents, vocabulary {}\n", docs.size(), vocab.size());
  });
}

void add_index(CLI::App& app) {
  struct Opts {
    std::string store, out;
    BM25Params params;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("index", "Build the BM25 inverted index of a store");
  cmd->add_option("store", o->store, "Store directory")->required();
  cmd->add_option("--k1", o->params.k1, "BM25 term saturation")->capture_default_str();
  cmd->add_option("--b", o->params.b, "BM25 length normalisation")->capture_default_str();
  cmd->add_option("--out", o->out, "Index file (default: <store>/bm25.idx)");
  cmd->callback([o] {
    o->params.validate();
    const Store s = load_store(o->store);
    const InvertedIndex index = InvertedIndex::build(s.docs, s.vocab, o->params);
    const std::string out = o->out.empty() ? default_index_path(o->store) : o->out;
    index.save(out);
    fmt::print("indexed {} documents, avgdl {:.4f}\n", index.num_docs(), index.avgdl());
  });
}

void add_mine(CLI::App& app) {
  struct Opts {
    std::string store, out, index;
    std::size_t k = 7;
    std::size_t query_len = 512;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("mine", "Mine BM25 hard negatives for every document");
  cmd->add_option("store", o->store, "Store directory")->required();
  cmd->add_option("--out", o->out, "Output JSONL")->required();
  cmd->add_option("--k", o->k, "Hard negatives per document")->capture_default_str();
  cmd->add_option("--query-len", o->query_len, "Tokens of the document used as the query")
      ->capture_default_str();
  cmd->add_option("--index", o->index, "Prebuilt index file (default: build in memory)");
  cmd->add_option("--seed", o->seed, "Seed for padding short result lists")
      ->capture_default_str();
  cmd->callback([o] {
    const Store s = load_store(o->store);
    const InvertedIndex index = open_or_build_index(o->index, s);
    const auto entries = mine_all_negatives(s.docs, s.vocab, index, o->k, o->query_len, o->seed);
    write_negatives(entries, o->out);
    fmt::print("mined {} negatives for {} documents\n", o->k, entries.size());
  });
}

void add_train(CLI::App& app) {
  struct Opts {
    std::string store, out, config, metrics, negatives, init;
    std::string mode = "crop";
    std::size_t k = 7;
    double tau = 0.05;
    double lr = 1e-4;
    std::size_t batch_size = 64;
    std::size_t epochs = 1;
    std::size_t max_steps = 0;
    std::size_t anchor_len = 64;
    std::size_t passage_len = 512;
    std::size_t pretrain_steps = 0;
    bool lora = false;
    std::string attn = "causal";
    std::string scope = "batch";
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("train", "Contrastive training of a model on a store");
  cmd->add_option("store", o->store, "Store directory")->required();
  cmd->add_option("--out", o->out, "Output checkpoint")->required();
  add_config_option(cmd, o->config);
  auto* mode = cmd->add_option("--mode", o->mode, "Augmentation")
                   ->check(CLI::IsMember({"crop", "dropout"}))
                   ->capture_default_str();
  auto* k = cmd->add_option("--k", o->k, "Hard negatives per anchor")->capture_default_str();
  auto* tau = cmd->add_option("--tau", o->tau, "InfoNCE temperature")->capture_default_str();
  auto* lr = cmd->add_option("--lr", o->lr, "AdamW learning rate")->capture_default_str();
  auto* bs = cmd->add_option("--batch-size", o->batch_size, "Pairs per step")
                 ->capture_default_str();
  auto* epochs = cmd->add_option("--epochs", o->epochs, "Passes over the store")
                     ->capture_default_str();
  auto* max_steps = cmd->add_option("--max-steps", o->max_steps, "Step cap, 0 = none")
                        ->capture_default_str();
  auto* anchor = cmd->add_option("--anchor-len", o->anchor_len, "Anchor crop tokens")
                     ->capture_default_str();
  auto* passage = cmd->add_option("--passage-len", o->passage_len, "Passage tokens")
                      ->capture_default_str();
  auto* pretrain = cmd->add_option("--pretrain-steps", o->pretrain_steps,
                                   "Causal-LM steps before contrastive training")
                       ->capture_default_str();
  auto* lora = cmd->add_flag("--lora", o->lora, "Train LoRA adapters on a frozen base");
  auto* attn = cmd->add_option("--attn", o->attn, "Attention mask")
                   ->check(CLI::IsMember({"causal", "bidirectional"}))
                   ->capture_default_str();
  auto* scope = cmd->add_option("--negatives-scope", o->scope, "Hard negatives shared by")
                    ->check(CLI::IsMember({"batch", "own"}))
                    ->capture_default_str();
  auto* seed = cmd->add_option("--seed", o->seed, "Seed for init, augmentation and batching")
                   ->capture_default_str();
  cmd->add_option("--metrics", o->metrics, "Step log CSV (default: <out>.metrics.csv)");
  cmd->add_option("--negatives", o->negatives, "Mined negatives JSONL (default: mine now)");
  cmd->add_option("--init", o->init, "Start from this checkpoint");
  cmd->callback([o, mode, k, tau, lr, bs, epochs, max_steps, anchor, passage, pretrain, lora,
                 attn, scope, seed] {
    ExperimentSetup setup = load_setup(o->config, ExperimentSetup::library_defaults());
    if (mode->count()) setup.augmentation.mode = parse_augmentation_mode(o->mode);
    if (k->count()) setup.train.k = o->k;
    if (tau->count()) setup.train.tau = o->tau;
    if (lr->count()) setup.train.lr = o->lr;
    if (bs->count()) setup.train.batch_size = o->batch_size;
    if (epochs->count()) setup.train.epochs = o->epochs;
    if (max_steps->count()) setup.train.max_steps = o->max_steps;
    if (anchor->count()) setup.augmentation.anchor_len = o->anchor_len;
    if (passage->count()) setup.augmentation.passage_len = o->passage_len;
    if (pretrain->count()) setup.pretrain_steps = o->pretrain_steps;
    if (lora->count()) setup.train.use_lora = o->lora;
    if (attn->count()) setup.model.attn_mode = parse_attention_mode(o->attn);
    if (scope->count()) setup.train.negatives_scope = parse_negatives_scope(o->scope);
    if (seed->count()) {
      setup.model_seed = o->seed;
      setup.augmentation.seed = o->seed;
      setup.train.seed = o->seed;
      setup.pretrain_seed = o->seed;
    }
    const Store s = load_store(o->store);
    std::optional<Model<float>> model;
    if (!o->init.empty()) {
      model.emplace(load_checkpoint<float>(o->init));
      if (model->config().vocab_size != s.vocab.size()) {
        throw DataError(fmt::format("checkpoint vocabulary {} does not match the store's {}",
                                    model->config().vocab_size, s.vocab.size()));
      }
      setup.model = model->config();
    } else {
      ModelConfig mc = setup.model;
      mc.vocab_size = s.vocab.size();
      model.emplace(mc, setup.model_seed);
    }
    fit_training_to_context(setup);
    setup.augmentation.validate();
    setup.train.validate();
    if (setup.pretrain_steps > 0) {
      std::vector<TokenSequence> docs;
      for (const auto& d : s.docs.docs()) docs.push_back(tokenize(d.text, s.vocab));
      pretrain_lm(*model, docs, setup.pretrain_steps, setup.pretrain_batch_size, setup.pretrain_lr,
                  setup.pretrain_seed);
    }
    if (s.docs.size() <= setup.train.k) {
      throw DataError(fmt::format("store has {} documents; K={} needs more", s.docs.size(),
                                  setup.train.k));
    }
    std::vector<NegativesEntry> negatives;
    if (!o->negatives.empty()) {
      negatives = read_negatives(o->negatives);
    } else {
      const InvertedIndex index = InvertedIndex::build(s.docs, s.vocab);
      negatives = mine_all_negatives(s.docs, s.vocab, index, setup.train.k,
                                     setup.augmentation.passage_len, setup.augmentation.seed);
    }
    AugmentationConfig aug = setup.augmentation;
    aug.k = setup.train.k;
    const PairBuilder builder(s.docs, s.vocab, negatives, aug);
    TrainOutputs outputs;
    outputs.checkpoint = o->out;
    outputs.metrics_csv = o->metrics.empty() ? o->out + ".metrics.csv" : o->metrics;
    write_file(o->out + ".config.json", to_json(setup));
    const TrainResult result = train(*model, builder, setup.train, outputs);
    fmt::print("trained {} steps, final loss {:.6f}, trainable fraction {:.6f}\n", result.steps,
               result.log.empty() ? 0.0 : result.log.back().loss, result.trainable_fraction);
  });
}

void add_embed(CLI::App& app) {
  struct Opts {
    std::string checkpoint, store, out, config;
    std::size_t max_len = 512;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("embed", "Embed every document of a store");
  cmd->add_option("checkpoint", o->checkpoint, "Model checkpoint")->required();
  cmd->add_option("store", o->store, "Store directory")->required();
  cmd->add_option("--out", o->out, "Output embedding index")->required();
  cmd->add_option("--max-len", o->max_len, "Passage tokens, prefix and EOS included")
      ->capture_default_str();
  add_config_option(cmd, o->config);
  cmd->callback([o] {
    const ExperimentSetup setup = load_setup(o->config, ExperimentSetup::library_defaults());
    const Store s = load_store(o->store);
    const Model<float> model = load_checkpoint<float>(o->checkpoint);
    const std::size_t max_len = std::min(o->max_len, model.config().max_context);
    if (max_len < o->max_len) {
      spdlog::warn("max_len {} capped at the {}-token model window", o->max_len, max_len);
    }
    const std::uint64_t fp = file_fingerprint(o->checkpoint);
    const EmbeddingIndex index =
        embed_corpus(model, s.docs, s.vocab, max_len, setup.augmentation.passage_prefix, fp);
    index.save(o->out);
    json meta = {{"checkpoint", fs::absolute(o->checkpoint).lexically_normal().string()},
                 {"store", fs::absolute(o->store).lexically_normal().string()},
                 {"max_len", max_len},
                 {"query_prefix", setup.augmentation.query_prefix},
                 {"passage_prefix", setup.augmentation.passage_prefix}};
    write_file(o->out + ".meta.json", meta.dump(2) + "\n");
    fmt::print("embedded {} documents, dimension {}\n", index.size(), index.dim());
  });
}

void add_search(CLI::App& app) {
  struct Opts {
    std::string index, query;
    std::size_t k = 10;
    std::optional<std::string> prefix;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("search", "Ad-hoc dense retrieval against an embedding index");
  cmd->add_option("index", o->index, "Embedding index written by embed")->required();
  cmd->add_option("--query", o->query, "Query text")->required();
  cmd->add_option("--k", o->k, "Results to print")->capture_default_str();
  cmd->add_option("--query-prefix", o->prefix, "Instruction prefix (default: from embed)");
  cmd->callback([o] {
    const json meta = json::parse(read_file(o->index + ".meta.json"));
    const EmbeddingIndex index = EmbeddingIndex::load(o->index);
    const std::string ckpt = meta.at("checkpoint").get<std::string>();
    if (file_fingerprint(ckpt) != index.fingerprint()) {
      throw DataError("checkpoint '" + ckpt + "' changed since the index was built");
    }
    const Model<float> model = load_checkpoint<float>(ckpt);
    const Vocabulary vocab =
        Vocabulary::load(fs::path(meta.at("store").get<std::string>()) / "vocab.txt");
    const std::string prefix = o->prefix.value_or(meta.at("query_prefix").get<std::string>());
    const auto q = embed_text(model, vocab, o->query, encode_words(prefix, vocab),
                              meta.at("max_len").get<std::size_t>());
    for (const auto& [rank, hit] : [&] {
           std::vector<std::pair<std::size_t, ScoredDoc>> rows;
           std::size_t r = 0;
           for (auto& h : search(index, q, o->k)) rows.emplace_back(++r, std::move(h));
           return rows;
         }()) {
      fmt::print("{}\t{}\t{:.9g}\n", rank, hit.doc_id, hit.score);
    }
  });
}

void add_eval(CLI::App& app) {
  struct Opts {
    std::string checkpoint, store, queries, qrels, out, config, tag = "l2ir";
    std::size_t top_k = 100;
    std::size_t passage_len = 512;
    std::size_t query_len = 0;
    std::size_t ndcg_k = 10;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("eval", "Dense retrieval evaluation with a TREC run file");
  cmd->add_option("checkpoint", o->checkpoint, "Model checkpoint")->required();
  cmd->add_option("store", o->store, "Store directory")->required();
  cmd->add_option("queries", o->queries, "Queries JSONL")->required();
  cmd->add_option("qrels", o->qrels, "Relevance judgments TSV")->required();
  cmd->add_option("--out", o->out, "Output directory")->required();
  add_config_option(cmd, o->config);
  auto* top_k = cmd->add_option("--top-k", o->top_k, "Run depth")->capture_default_str();
  auto* plen = cmd->add_option("--passage-len", o->passage_len, "Passage tokens")
                   ->capture_default_str();
  auto* qlen = cmd->add_option("--query-len", o->query_len, "Query tokens, 0 = passage-len")
                   ->capture_default_str();
  auto* ndcg_k = cmd->add_option("--ndcg-k", o->ndcg_k, "nDCG cutoff")->capture_default_str();
  auto* tag = cmd->add_option("--tag", o->tag, "Run tag")->capture_default_str();
  cmd->callback([o, top_k, plen, qlen, ndcg_k, tag] {
    ExperimentSetup setup = load_setup(o->config, ExperimentSetup::library_defaults());
    if (top_k->count()) setup.eval.top_k = o->top_k;
    if (plen->count()) setup.eval.passage_len = o->passage_len;
    if (qlen->count()) setup.eval.query_len = o->query_len;
    if (ndcg_k->count()) setup.eval.ndcg_k = o->ndcg_k;
    if (tag->count()) setup.eval.run_tag = o->tag;
    const Store s = load_store(o->store);
    const Model<float> model = load_checkpoint<float>(o->checkpoint);
    setup.model = model.config();
    fit_eval_to_context(setup);
    const auto queries = read_queries(o->queries);
    const Qrels qrels = read_qrels(o->qrels);
    const EvalReport report = evaluate(model, s.docs, s.vocab, queries, qrels, setup.eval,
                                       file_fingerprint(o->checkpoint));
    fs::create_directories(o->out);
    write_run(report.run, fs::path(o->out) / "run.trec", setup.eval.run_tag);
    write_file(fs::path(o->out) / "report.json", report.to_json());
    write_file(fs::path(o->out) / "config.json", to_json(setup));
    fmt::print("{}", render_report(report.to_json()));
  });
}

void add_bm25_eval(CLI::App& app) {
  struct Opts {
    std::string store, queries, qrels, out, tag = "bm25";
    std::size_t top_k = 100;
    std::size_t ndcg_k = 10;
    BM25Params params;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("bm25-eval", "Lexical BM25 baseline evaluation");
  cmd->add_option("store", o->store, "Store directory")->required();
  cmd->add_option("queries", o->queries, "Queries JSONL")->required();
  cmd->add_option("qrels", o->qrels, "Relevance judgments TSV")->required();
  cmd->add_option("--out", o->out, "Output directory for run.trec and report.json");
  cmd->add_option("--top-k", o->top_k, "Run depth")->capture_default_str();
  cmd->add_option("--ndcg-k", o->ndcg_k, "nDCG cutoff")->capture_default_str();
  cmd->add_option("--k1", o->params.k1, "BM25 term saturation")->capture_default_str();
  cmd->add_option("--b", o->params.b, "BM25 length normalisation")->capture_default_str();
  cmd->add_option("--tag", o->tag, "Run tag")->capture_default_str();
  cmd->callback([o] {
    o->params.validate();
    const Store s = load_store(o->store);
    const InvertedIndex index = InvertedIndex::build(s.docs, s.vocab, o->params);
    const auto queries = read_queries(o->queries);
    const Qrels qrels = read_qrels(o->qrels);
    EvalConfig cfg;
    cfg.top_k = o->top_k;
    cfg.ndcg_k = o->ndcg_k;
    cfg.run_tag = o->tag;
    const EvalReport report = evaluate_run(bm25_run(index, s.vocab, queries, o->top_k), qrels, cfg);
    if (!o->out.empty()) {
      fs::create_directories(o->out);
      write_run(report.run, fs::path(o->out) / "run.trec", o->tag);
      write_file(fs::path(o->out) / "report.json", report.to_json());
    }
    fmt::print("{}", render_report(report.to_json()));
  });
}

}  // namespace

void add_pipeline_commands(CLI::App& app) {
  add_ingest(app);
  add_index(app);
  add_mine(app);
  add_train(app);
  add_embed(app);
  add_search(app);
  add_eval(app);
  add_bm25_eval(app);
}

}  // namespace l2ir::cli
