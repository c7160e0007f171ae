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

#include "l2ir/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "l2ir/error.hpp"

namespace l2ir {
namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kTokens = {"<pad>", "<unk>", "<bos>",
                                                   "<eos>"};
  return kTokens;
}

bool is_separator(unsigned char c) {
  if (c >= 0x80) return false;
  return !((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9'));
}

}  // namespace

void DocumentStore::add(Document doc) {
  if (doc.id.empty()) throw DataError("document id must be nonempty");
  auto [it, inserted] = by_id_.emplace(doc.id, docs_.size());
  if (!inserted) throw ConflictError("duplicate document id '" + doc.id + "'");
  docs_.push_back(std::move(doc));
}

std::optional<std::size_t> DocumentStore::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

DocumentStore parse_jsonl(std::istream& in) {
  DocumentStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    for (const char* field : {"id", "text"}) {
      auto it = obj.find(field);
      if (it == obj.end()) {
        throw ParseError(line_no, std::string("missing field \"") + field + "\"");
      }
      if (!it->is_string()) {
        throw ParseError(line_no,
                         std::string("field \"") + field + "\" must be a string");
      }
    }
    Document doc{obj["id"].get<std::string>(), obj["text"].get<std::string>()};
    if (doc.id.empty()) throw ParseError(line_no, "empty document id");
    try {
      store.add(std::move(doc));
    } catch (const ConflictError& e) {
      throw ConflictError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

DocumentStore ingest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_jsonl(in);
}

void write_jsonl(const DocumentStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& doc : store.docs()) {
    nlohmann::json obj = {{"id", doc.id}, {"text", doc.text}};
    out << obj.dump() << '\n';
  }
}

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : id_to_token_(std::move(tokens)) {
  const auto& reserved = reserved_tokens();
  if (id_to_token_.size() < kNumReserved ||
      !std::equal(reserved.begin(), reserved.end(), id_to_token_.begin())) {
    throw DataError("vocabulary must start with <pad>, <unk>, <bos>, <eos>");
  }
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    const auto& tok = id_to_token_[i];
    if (tok.empty()) throw ParseError(i + 1, "empty vocabulary token");
    if (!token_to_id_.emplace(tok, static_cast<TokenId>(i)).second) {
      throw ConflictError("duplicate vocabulary token '" + tok + "'");
    }
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  return Vocabulary(std::move(tokens));
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_or_unk(std::string_view token) const {
  return find(token).value_or(kUnk);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= id_to_token_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& tok : id_to_token_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (is_separator(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    current.push_back(static_cast<char>(c));
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary build_vocab(const DocumentStore& store, std::size_t max_size,
                       std::size_t min_freq,
                       std::span<const std::string> forced_tokens) {
  if (max_size < Vocabulary::kNumReserved) {
    throw UsageError("max_size must be at least 4 (reserved tokens)");
  }
  if (min_freq == 0) throw UsageError("min_freq must be positive");

  std::vector<std::string> tokens = reserved_tokens();
  std::unordered_set<std::string> taken(tokens.begin(), tokens.end());
  for (const auto& tok : forced_tokens) {
    if (tokens.size() >= max_size) break;
    if (taken.insert(tok).second) tokens.push_back(tok);
  }

  // std::map keeps the candidate order independent of hashing.
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : store.docs()) {
    for (auto& word : split_words(doc.text)) ++counts[std::move(word)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [word, count] : counts) {
    if (count >= min_freq && !taken.contains(word)) ranked.emplace_back(word, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [word, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(std::move(word));
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

TokenSequence encode_words(std::string_view text, const Vocabulary& vocab) {
  TokenSequence ids;
  for (const auto& word : split_words(text)) ids.push_back(vocab.id_or_unk(word));
  return ids;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence ids = encode_words(text, vocab);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string detokenize(std::span<const TokenId> seq, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : seq) {
    if (Vocabulary::is_reserved(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

TokenSequence truncate(std::span<const TokenId> seq, std::size_t max_len) {
  if (max_len == 0) throw UsageError("truncate: max_len must be >= 1");
  const bool ends_in_eos = !seq.empty() && seq.back() == Vocabulary::kEos;
  if (seq.size() <= max_len && ends_in_eos) {
    return TokenSequence(seq.begin(), seq.end());
  }
  const std::size_t content = ends_in_eos ? seq.size() - 1 : seq.size();
  const std::size_t keep = std::min(content, max_len - 1);
  TokenSequence out(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(keep));
  out.push_back(Vocabulary::kEos);
  return out;
}

TokenSequence with_prefix(std::span<const TokenId> prefix,
                          std::span<const TokenId> body, std::size_t max_len) {
  TokenSequence joined(prefix.begin(), prefix.end());
  joined.insert(joined.end(), body.begin(), body.end());
  return truncate(joined, max_len);
}

}  // namespace l2ir
