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

#include "l2ir/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "l2ir/error.hpp"

namespace l2ir {

namespace {

constexpr char kMagic[4] = {'L', '2', 'I', 'R'};
constexpr std::uint32_t kMaxRank = 8;

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  }
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  v = to_le(v);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

class Reader {
 public:
  Reader(std::string bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return to_le(v);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated checkpoint");
  }

  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_checkpoint_file(const CheckpointContents& contents,
                           const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  std::string text;
  for (const auto& [key, value] : contents.config) {
    if (key.find_first_of("=\n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw UsageError("checkpoint config entry '" + key + "' is not encodable");
    }
    text += key + "=" + value + "\n";
  }
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put_u32(out, static_cast<std::uint32_t>(contents.records.size()));
  for (const auto& rec : contents.records) {
    if (rec.values.size() != shape_numel(rec.shape)) {
      throw ShapeError("checkpoint record '" + rec.name + "' does not match its shape");
    }
    put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out += rec.name;
    put_u32(out, static_cast<std::uint32_t>(rec.shape.size()));
    for (auto dim : rec.shape) put_u32(out, static_cast<std::uint32_t>(dim));
    for (float v : rec.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write " + tmp.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place: " + ec.message());
}

CheckpointContents read_checkpoint_file(const std::filesystem::path& path) {
  Reader in(read_all(path), path.string());
  if (in.take(4) != std::string(kMagic, 4)) in.fail("not a checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    in.fail("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointContents contents;
  std::istringstream text(in.take(in.u32()));
  std::string line;
  while (std::getline(text, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) in.fail("malformed config line '" + line + "'");
    contents.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = in.u32();
  for (std::uint32_t r = 0; r < count; ++r) {
    CheckpointRecord rec;
    rec.name = in.take(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank > kMaxRank) in.fail("record '" + rec.name + "' has implausible rank");
    for (std::uint32_t i = 0; i < rank; ++i) rec.shape.push_back(in.u32());
    rec.values.resize(shape_numel(rec.shape));
    for (auto& v : rec.values) v = std::bit_cast<float>(in.u32());
    contents.records.push_back(std::move(rec));
  }
  if (!in.done()) in.fail("trailing bytes after the last record");
  return contents;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  CheckpointContents contents;
  contents.config = model.config().to_map();
  if (const auto& lora = model.lora_config()) {
    contents.config["lora_rank"] = std::to_string(lora->rank);
    std::ostringstream alpha;
    alpha.precision(17);
    alpha << lora->alpha;
    contents.config["lora_alpha"] = alpha.str();
    contents.config["lora_targets"] = lora->targets_string();
  }
  for (const auto& nt : model.parameters()) {
    auto data = nt.tensor.data();
    CheckpointRecord rec{nt.name, nt.tensor.shape(), {}};
    rec.values.reserve(data.size());
    for (T v : data) rec.values.push_back(static_cast<float>(v));
    contents.records.push_back(std::move(rec));
  }
  write_checkpoint_file(contents, path);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  auto contents = read_checkpoint_file(path);
  std::optional<LoraConfig> lora;
  auto rank = contents.config.find("lora_rank");
  if (rank != contents.config.end()) {
    try {
      LoraConfig cfg;
      cfg.rank = std::stoul(rank->second);
      cfg.alpha = std::stod(contents.config.at("lora_alpha"));
      cfg.targets = LoraConfig::parse_targets(contents.config.at("lora_targets"));
      cfg.validate();
      lora = cfg;
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": invalid adapter config: " + e.what());
    }
    contents.config.erase("lora_rank");
    contents.config.erase("lora_alpha");
    contents.config.erase("lora_targets");
  }
  const auto cfg = ModelConfig::from_map(contents.config);
  std::vector<NamedTensor<T>> tensors;
  tensors.reserve(contents.records.size());
  for (auto& rec : contents.records) {
    std::vector<T> values(rec.values.begin(), rec.values.end());
    tensors.push_back({rec.name, Tensor<T>::from(rec.shape, std::move(values))});
  }
  return Model<T>::from_named(cfg, tensors, lora);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  return fnv1a64(read_all(path));
}

template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace l2ir
