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

#ifndef L2IR_TOOLS_CLI_COMMON_HPP_
#define L2IR_TOOLS_CLI_COMMON_HPP_

#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "l2ir/corpus.hpp"
#include "l2ir/experiments.hpp"

namespace l2ir::cli {

inline constexpr const char* kConfigEnv = "L2IR_CONFIG";

// A store directory holds docs.jsonl and vocab.txt.
struct Store {
  DocumentStore docs;
  Vocabulary vocab;
};

Store load_store(const std::filesystem::path& dir);
void save_store(const std::filesystem::path& dir, const DocumentStore& docs,
                const Vocabulary& vocab);

// Vocabulary over `docs` with the configured prefix words forced in.
Vocabulary store_vocab(const DocumentStore& docs, const ExperimentSetup& setup,
                       std::size_t max_size, std::size_t min_freq);

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

// `--config` option whose default comes from the environment.
CLI::Option* add_config_option(CLI::App* app, std::string& path);

// Setup from `path` layered over `base`; `base` itself when `path` is empty.
ExperimentSetup load_setup(const std::string& path, const ExperimentSetup& base);

// Cap lengths at the model window, with a warning.
void fit_training_to_context(ExperimentSetup& setup);
void fit_eval_to_context(ExperimentSetup& setup);

}  // namespace l2ir::cli

#endif  // L2IR_TOOLS_CLI_COMMON_HPP_
