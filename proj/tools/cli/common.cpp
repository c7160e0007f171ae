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

#include "common.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "l2ir/error.hpp"

namespace l2ir::cli {

Store load_store(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("store '" + dir.string() + "' is not a directory");
  }
  Store s{ingest_jsonl(dir / "docs.jsonl"), Vocabulary::load(dir / "vocab.txt")};
  return s;
}

void save_store(const std::filesystem::path& dir, const DocumentStore& docs,
                const Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  write_jsonl(docs, dir / "docs.jsonl");
  vocab.save(dir / "vocab.txt");
}

Vocabulary store_vocab(const DocumentStore& docs, const ExperimentSetup& setup,
                       std::size_t max_size, std::size_t min_freq) {
  std::vector<std::string> forced = split_words(setup.augmentation.query_prefix);
  for (auto& w : split_words(setup.augmentation.passage_prefix)) forced.push_back(std::move(w));
  return build_vocab(docs, max_size, min_freq, forced);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CLI::Option* add_config_option(CLI::App* app, std::string& path) {
  return app->add_option("--config", path, "JSON run configuration")->envname(kConfigEnv);
}

ExperimentSetup load_setup(const std::string& path, const ExperimentSetup& base) {
  if (path.empty()) return base;
  return load_experiment_setup(path, base);
}

namespace {

void cap_at(std::size_t& len, std::size_t ctx, const char* name) {
  if (len > ctx) {
    spdlog::warn("{} {} capped at the {}-token model window", name, len, ctx);
    len = ctx;
  }
}

}  // namespace

void fit_training_to_context(ExperimentSetup& setup) {
  AugmentationConfig& aug = setup.augmentation;
  cap_at(aug.passage_len, setup.model.max_context, "passage_len");
  if (aug.anchor_len > aug.passage_len) {
    spdlog::warn("anchor_len {} capped at passage_len {}", aug.anchor_len, aug.passage_len);
    aug.anchor_len = aug.passage_len;
  }
}

void fit_eval_to_context(ExperimentSetup& setup) {
  cap_at(setup.eval.passage_len, setup.model.max_context, "eval passage_len");
  cap_at(setup.eval.query_len, setup.model.max_context, "eval query_len");
}

}  // namespace l2ir::cli
