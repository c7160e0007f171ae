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

// Document ingestion, vocabulary construction and word-level tokenization.

#ifndef L2IR_CORPUS_HPP_
#define L2IR_CORPUS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace l2ir {

struct Document {
  std::string id;
  std::string text;

  bool operator==(const Document&) const = default;
};

// Ordered collection of documents with unique, nonempty ids. Immutable once
// built; `add` is only used during construction.
class DocumentStore {
 public:
  DocumentStore() = default;

  // Throws ConflictError on a duplicate id and DataError on an empty id.
  void add(Document doc);

  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }
  const std::vector<Document>& docs() const { return docs_; }

  std::optional<std::size_t> index_of(std::string_view id) const;

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// One JSON object per line with string fields "id" and "text". Blank lines are
// skipped. Malformed lines raise ParseError carrying the 1-based line number.
DocumentStore ingest_jsonl(const std::filesystem::path& path);
DocumentStore parse_jsonl(std::istream& in);
void write_jsonl(const DocumentStore& store, const std::filesystem::path& path);

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr std::size_t kNumReserved = 4;

  // Reserved tokens only.
  Vocabulary();

  // `tokens` must start with the four reserved tokens and contain no
  // duplicates.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id_or_unk(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  static bool is_reserved(TokenId id) { return id < kNumReserved; }

  // One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_;
  }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// Lowercases ASCII and splits on whitespace and ASCII punctuation, dropping
// the separators. Bytes >= 0x80 are kept as word characters.
std::vector<std::string> split_words(std::string_view text);

// Reserved tokens, then `forced_tokens` (in order, deduplicated), then the
// most frequent surface tokens with count >= min_freq. Ties are broken
// lexicographically. Total size never exceeds max_size.
Vocabulary build_vocab(const DocumentStore& store, std::size_t max_size,
                       std::size_t min_freq,
                       std::span<const std::string> forced_tokens = {});

// Word ids without the trailing EOS; used for instruction prefixes.
TokenSequence encode_words(std::string_view text, const Vocabulary& vocab);

// Word ids with EOS appended. Empty text gives [EOS].
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

// Space-joined surface form of the non-reserved ids.
std::string detokenize(std::span<const TokenId> seq, const Vocabulary& vocab);

// Keeps the first max_len - 1 content ids and re-appends EOS. Sequences that
// already fit and end in EOS are returned unchanged.
TokenSequence truncate(std::span<const TokenId> seq, std::size_t max_len);

// `prefix` followed by `body`, truncated to max_len.
TokenSequence with_prefix(std::span<const TokenId> prefix,
                          std::span<const TokenId> body, std::size_t max_len);

}  // namespace l2ir

#endif  // L2IR_CORPUS_HPP_
