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

#include <memory>
#include <optional>

#include <fmt/format.h>

#include "commands.hpp"
#include "common.hpp"
#include "l2ir/checkpoint.hpp"
#include "l2ir/error.hpp"
#include "l2ir/gradcheck.hpp"

namespace l2ir::cli {

namespace {

namespace fs = std::filesystem;

// Options shared by the experiment drivers.
struct DriverOpts {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

CLI::App* add_driver(CLI::App& app, const char* name, const char* help, DriverOpts& o) {
  auto* cmd = app.add_subcommand(name, help);
  add_config_option(cmd, o.config);
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--seed", o.seed, "Seed for init, pretraining, augmentation and batching");
  return cmd;
}

ExperimentSetup driver_setup(const DriverOpts& o) {
  ExperimentSetup setup = load_setup(o.config, ExperimentSetup());
  if (o.seed) {
    setup.model_seed = *o.seed;
    setup.pretrain_seed = *o.seed;
    setup.augmentation.seed = *o.seed;
    setup.train.seed = *o.seed;
  }
  setup.validate();
  return setup;
}

void print_report(const std::string& json) { fmt::print("{}", render_report(json)); }

void add_synth(CLI::App& app) {
  struct Opts {
    std::string spec, out;
    std::size_t max_vocab = 8192;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("synth", "Generate a clustered synthetic corpus with queries");
  cmd->add_option("--spec", o->spec, "Setup JSON; its corpus and eval sections apply")
      ->envname(kConfigEnv);
  cmd->add_option("--out", o->out, "Output store directory")->required();
  cmd->add_option("--max-vocab", o->max_vocab, "Vocabulary size cap")->capture_default_str();
  cmd->callback([o] {
    const ExperimentSetup setup = load_setup(o->spec, ExperimentSetup());
    setup.corpus.validate();
    const SyntheticCorpus corpus = generate_synthetic_corpus(setup.corpus);
    const Vocabulary vocab = store_vocab(corpus.store, setup, o->max_vocab, 1);
    save_store(o->out, corpus.store, vocab);
    std::vector<Query> queries;
    Qrels qrels;
    make_crop_queries(corpus.store, setup.query_words, setup.query_seed, queries, qrels);
    write_queries(queries, fs::path(o->out) / "queries.jsonl");
    write_qrels(qrels, fs::path(o->out) / "qrels.tsv");
    std::string topics;
    for (std::size_t i = 0; i < corpus.store.size(); ++i) {
      topics += fmt::format("{}\t{}\n", corpus.store[i].id, corpus.topics[i]);
    }
    write_file(fs::path(o->out) / "topics.tsv", topics);
    fmt::print("generated {} documents, {} queries, vocabulary {}\n", corpus.store.size(),
               queries.size(), vocab.size());
  });
}

void add_passkey(CLI::App& app) {
  struct Opts {
    std::string spec, out;
    std::size_t max_vocab = 8192;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("passkey", "Generate a passkey retrieval corpus");
  cmd->add_option("--spec", o->spec, "JSON with a \"passkey\" section")->required();
  cmd->add_option("--out", o->out, "Output store directory")->required();
  cmd->add_option("--max-vocab", o->max_vocab, "Vocabulary size cap")->capture_default_str();
  cmd->callback([o] {
    const PasskeySpec spec = parse_passkey_spec(read_file(o->spec));
    spec.validate();
    const PasskeyCorpus corpus = generate_passkey_corpus(spec);
    const Vocabulary vocab =
        store_vocab(corpus.store, ExperimentSetup::library_defaults(), o->max_vocab, 1);
    save_store(o->out, corpus.store, vocab);
    write_queries(corpus.queries, fs::path(o->out) / "queries.jsonl");
    write_qrels(corpus.qrels, fs::path(o->out) / "qrels.tsv");
    std::string keys;
    for (std::size_t i = 0; i < corpus.store.size(); ++i) {
      keys += fmt::format("{}\t{}\t{}\n", corpus.store[i].id, corpus.keys[i],
                          corpus.key_offsets[i]);
    }
    write_file(fs::path(o->out) / "keys.tsv", keys);
    fmt::print("generated {} passkey documents of {} words\n", corpus.store.size(),
               spec.doc_len);
  });
}

void add_end_to_end(CLI::App& app) {
  auto o = std::make_shared<DriverOpts>();
  auto* cmd = add_driver(app, "end-to-end",
                         "BM25, random-init, pretrained and trained nDCG on one setup", *o);
  cmd->callback([o] {
    const ExperimentSetup setup = driver_setup(*o);
    const EndToEndReport rep = run_end_to_end(setup);
    rep.write(o->out, setup);
    print_report(rep.to_json());
  });
}

void add_ablate(CLI::App& app) {
  auto o = std::make_shared<DriverOpts>();
  auto k = std::make_shared<std::size_t>(7);
  auto* cmd = add_driver(app, "ablate-negatives", "Twins trained with K hard negatives and K=0",
                         *o);
  auto* kopt = cmd->add_option("--k", *k, "Hard negatives of the first twin")
                   ->capture_default_str();
  cmd->callback([o, k, kopt] {
    ExperimentSetup setup = driver_setup(*o);
    if (kopt->count()) setup.train.k = *k;
    const AblationReport rep = run_ablation_hard_negatives(setup);
    rep.write(o->out, setup);
    print_report(rep.to_json());
  });
}

void add_compare_aug(CLI::App& app) {
  auto o = std::make_shared<DriverOpts>();
  auto* cmd = add_driver(app, "compare-aug", "Twins trained with crop and dropout augmentation",
                         *o);
  cmd->callback([o] {
    const ExperimentSetup setup = driver_setup(*o);
    const AugmentationReport rep = run_augmentation_comparison(setup);
    rep.write(o->out, setup);
    print_report(rep.to_json());
  });
}

void add_context_pair(CLI::App& app) {
  auto o = std::make_shared<DriverOpts>();
  auto* cmd = add_driver(app, "context-pair",
                         "Long- and short-context twins on identical truncated inputs", *o);
  cmd->callback([o] {
    const ExperimentSetup setup = driver_setup(*o);
    const ContextPairReport rep = run_context_pair(setup, setup.context_pair());
    rep.write(o->out, setup);
    print_report(rep.to_json());
  });
}

void add_fill_sweep(CLI::App& app) {
  auto o = std::make_shared<DriverOpts>();
  auto ckpt = std::make_shared<std::string>();
  auto store = std::make_shared<std::string>();
  auto* cmd = add_driver(app, "fill-sweep",
                         "Passkey accuracy as documents fill more of the window", *o);
  auto* copt = cmd->add_option("--checkpoint", *ckpt, "Sweep this model instead of training one");
  auto* sopt = cmd->add_option("--store", *store, "Store whose vocabulary the checkpoint uses");
  copt->needs(sopt);
  sopt->needs(copt);
  cmd->callback([o, ckpt, store] {
    const ExperimentSetup setup = driver_setup(*o);
    if (!ckpt->empty()) {
      const Model<float> model = load_checkpoint<float>(*ckpt);
      const Vocabulary vocab = Vocabulary::load(fs::path(*store) / "vocab.txt");
      const FillSweepReport rep = run_fill_fraction_sweep(model, vocab, setup.fill, setup.eval);
      rep.write(o->out, setup);
      print_report(rep.to_json());
      return;
    }
    const ContextStudy study = run_context_study(setup);
    study.pair.write(fs::path(o->out) / "context-pair", setup);
    study.sweep.write(o->out, setup);
    print_report(study.pair.to_json());
    print_report(study.sweep.to_json());
  });
}

void add_grad_check(CLI::App& app) {
  struct Opts {
    std::string model = "random";
    double tol = 1e-5;
    std::uint64_t seed = 0;
    std::size_t max_entries = 64;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("grad-check", "Finite-difference gradient checks in double");
  cmd->add_option("model", o->model, "Checkpoint path, or \"random\" for a tiny model")
      ->capture_default_str();
  cmd->add_option("--tol", o->tol, "Maximum relative error")->capture_default_str();
  cmd->add_option("--seed", o->seed, "Seed for inputs and the random model")
      ->capture_default_str();
  cmd->add_option("--max-entries", o->max_entries,
                  "Entries perturbed per checkpoint parameter, 0 = all")
      ->capture_default_str();
  cmd->callback([o] {
    if (!(o->tol > 0.0)) throw UsageError("--tol must be positive");
    GradCheckReport rep = check_primitives(o->tol, o->seed);
    const bool random = o->model == "random";
    const Model<double> model =
        random ? grad_check_model(o->seed) : load_checkpoint<double>(o->model);
    const GradCheckReport pipe =
        check_pipeline(model, o->tol, o->seed, random ? 0 : o->max_entries);
    rep.results.insert(rep.results.end(), pipe.results.begin(), pipe.results.end());
    std::size_t width = 4;
    for (const auto& r : rep.results) width = std::max(width, r.name.size());
    fmt::print("{:<{}}  {:>6}  {:>9}  {:>9}\n", "name", width, "n", "rel", "max-entry");
    for (const auto& r : rep.results) {
      fmt::print("{:<{}}  {:>6}  {:.3e}  {:.3e}  {}\n", r.name, width, r.checked, r.rel_error,
                 r.max_entry_error, r.passed ? "ok" : "FAIL");
    }
    fmt::print("worst relative error {:.3e} (tol {:.1e})\n", rep.worst(), o->tol);
    if (!rep.passed()) {
      throw NumericalError(fmt::format("grad-check failed: worst relative error {:.3e}",
                                       rep.worst()));
    }
  });
}

void add_report(CLI::App& app) {
  auto dir = std::make_shared<std::string>();
  auto* cmd = app.add_subcommand("report", "Render a report.json as a plain-text table");
  cmd->add_option("dir", *dir, "Experiment directory or report file")->required();
  cmd->callback([dir] {
    fs::path path(*dir);
    if (fs::is_directory(path)) path /= "report.json";
    print_report(read_file(path));
  });
}

}  // namespace

void add_experiment_commands(CLI::App& app) {
  add_synth(app);
  add_passkey(app);
  add_end_to_end(app);
  add_ablate(app);
  add_compare_aug(app);
  add_context_pair(app);
  add_fill_sweep(app);
  add_grad_check(app);
  add_report(app);
}

}  // namespace l2ir::cli
