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

// l2ir: learning-to-retrieve pipeline and experiment drivers.

#include <exception>
#include <filesystem>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "json.hpp"
#include "l2ir/error.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int fail(const char* kind, const std::string& what, int code) {
  std::string line = what;
  for (auto& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  fmt::print(stderr, "error: {}: {}\n", kind, line);
  return code;
}

int exit_code(l2ir::ErrorKind kind) {
  switch (kind) {
    case l2ir::ErrorKind::kUsage:
      return kExitUsage;
    case l2ir::ErrorKind::kData:
      return kExitData;
    case l2ir::ErrorKind::kNumerical:
      return kExitNumerical;
  }
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("l2ir");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"Dense retrieval with decoder-only transformers: training, indexing, evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  app.set_version_flag("--version", L2IR_VERSION);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.parse_complete_callback([&verbose] {
    if (verbose) spdlog::set_level(spdlog::level::info);
  });
  l2ir::cli::add_pipeline_commands(app);
  l2ir::cli::add_experiment_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitUsage);
  } catch (const l2ir::Error& e) {
    return fail(l2ir::to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("data", e.what(), kExitData);
  } catch (const nlohmann::json::exception& e) {
    return fail("data", e.what(), kExitData);
  } catch (const std::exception& e) {
    return fail("data", e.what(), kExitData);
  }
  return kExitOk;
}
