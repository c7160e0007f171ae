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

#ifndef L2IR_TOOLS_CLI_COMMANDS_HPP_
#define L2IR_TOOLS_CLI_COMMANDS_HPP_

#include <CLI11.hpp>

namespace l2ir::cli {

// ingest, index, mine, train, embed, search, eval, bm25-eval
void add_pipeline_commands(CLI::App& app);

// synth, passkey, ablate-negatives, compare-aug, context-pair, fill-sweep,
// grad-check, report
void add_experiment_commands(CLI::App& app);

}  // namespace l2ir::cli

#endif  // L2IR_TOOLS_CLI_COMMANDS_HPP_
