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

// Binary model checkpoints.
//
// Layout, all integers little-endian u32:
//   "L2IR" | version | config length | config text ("key=value\n" lines)
//   | record count | records
// Each record is: name length | name | rank | dims... | float32 values.

#ifndef L2IR_CHECKPOINT_HPP_
#define L2IR_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "l2ir/model.hpp"

namespace l2ir {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct CheckpointContents {
  std::map<std::string, std::string> config;
  std::vector<CheckpointRecord> records;
};

// Writes to a temporary sibling and renames it over `path`.
void write_checkpoint_file(const CheckpointContents& contents,
                           const std::filesystem::path& path);
CheckpointContents read_checkpoint_file(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 over the file's bytes.
std::uint64_t file_fingerprint(const std::filesystem::path& path);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

}  // namespace l2ir

#endif  // L2IR_CHECKPOINT_HPP_
