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

#include "l2ir/dense_retrieval.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "l2ir/error.hpp"

namespace l2ir {

namespace {

constexpr char kIndexMagic[4] = {'L', '2', 'E', 'I'};
constexpr std::uint32_t kIndexVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }

  std::string take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated embedding index");
  }

  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> doc_ids, std::size_t dim,
                               std::vector<float> vectors, std::uint64_t fingerprint)
    : doc_ids_(std::move(doc_ids)),
      dim_(dim),
      vectors_(std::move(vectors)),
      fingerprint_(fingerprint) {
  if (dim_ == 0) throw UsageError("embedding dimension must be >= 1");
  if (vectors_.size() != doc_ids_.size() * dim_) {
    throw ShapeError("embedding matrix does not match the document count");
  }
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    double sq = 0.0;
    for (float v : row(i)) sq += double(v) * double(v);
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) {
      throw NumericalError("embedding of '" + doc_ids_[i] + "' is not unit-normalised");
    }
  }
}

std::span<const float> EmbeddingIndex::row(std::size_t i) const {
  return std::span<const float>(vectors_).subspan(i * dim_, dim_);
}

void EmbeddingIndex::save(const std::filesystem::path& path) const {
  std::string out(kIndexMagic, 4);
  put_u32(out, kIndexVersion);
  put_u64(out, fingerprint_);
  put_u32(out, static_cast<std::uint32_t>(doc_ids_.size()));
  put_u32(out, static_cast<std::uint32_t>(dim_));
  for (const auto& id : doc_ids_) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
  }
  for (float v : vectors_) put_u32(out, std::bit_cast<std::uint32_t>(v));
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
  if (ec) throw DataError("cannot move index into place: " + ec.message());
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
  const std::string source = path.string();
  ByteReader in(bytes, source);
  if (in.take(4) != std::string(kIndexMagic, 4)) in.fail("not an embedding index");
  if (in.u32() != kIndexVersion) in.fail("unsupported embedding index version");
  const std::uint64_t fingerprint = in.u64();
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) ids.push_back(in.take(in.u32()));
  std::vector<float> vectors(static_cast<std::size_t>(count) * dim);
  for (auto& v : vectors) v = std::bit_cast<float>(in.u32());
  if (!in.done()) in.fail("trailing bytes");
  return EmbeddingIndex(std::move(ids), dim, std::move(vectors), fingerprint);
}

template <typename T>
std::vector<float> embed_text(const Model<T>& model, const Vocabulary& vocab,
                              std::string_view text, const TokenSequence& prefix,
                              std::size_t max_len) {
  if (max_len > model.config().max_context) {
    throw UsageError("max_len " + std::to_string(max_len) + " exceeds the model context of " +
                     std::to_string(model.config().max_context));
  }
  const auto seq = with_prefix(prefix, tokenize(text, vocab), max_len);
  const auto emb = model.embed_eos(seq);
  std::vector<float> out;
  out.reserve(emb.numel());
  for (T v : emb.data()) out.push_back(static_cast<float>(v));
  return out;
}

template <typename T>
EmbeddingIndex embed_corpus(const Model<T>& model, const DocumentStore& store,
                            const Vocabulary& vocab, std::size_t max_len,
                            std::string_view passage_prefix, std::uint64_t fingerprint) {
  const auto prefix = encode_words(passage_prefix, vocab);
  std::vector<std::string> ids;
  std::vector<float> vectors;
  ids.reserve(store.size());
  vectors.reserve(store.size() * model.config().d_model);
  for (const auto& doc : store.docs()) {
    ids.push_back(doc.id);
    const auto row = embed_text(model, vocab, doc.text, prefix, max_len);
    vectors.insert(vectors.end(), row.begin(), row.end());
  }
  return EmbeddingIndex(std::move(ids), model.config().d_model, std::move(vectors),
                        fingerprint);
}

std::vector<ScoredDoc> search(const EmbeddingIndex& index, std::span<const float> query,
                              std::size_t k) {
  if (k == 0) throw UsageError("search: k must be >= 1");
  if (query.size() != index.dim()) {
    throw ShapeError("query dimension " + std::to_string(query.size()) +
                     " does not match index dimension " + std::to_string(index.dim()));
  }
  std::vector<ScoredDoc> hits;
  hits.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto row = index.row(i);
    double dot = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) dot += double(row[c]) * double(query[c]);
    hits.push_back({index.doc_ids()[i], dot});
  }
  sort_ranking(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

std::vector<Query> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const auto store = parse_jsonl(in);
  std::vector<Query> queries;
  for (const auto& doc : store.docs()) queries.push_back({doc.id, doc.text});
  return queries;
}

void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& q : queries) {
    out << nlohmann::json{{"id", q.id}, {"text", q.text}}.dump() << '\n';
  }
}

std::string EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [qid, values] : per_query) per[qid] = values;
  const nlohmann::json doc = {{"run_tag", run_tag},
                              {"num_queries", num_queries},
                              {"metrics", metrics},
                              {"excluded_queries", excluded},
                              {"per_query", std::move(per)}};
  return doc.dump(2);
}

EvalReport evaluate_run(RetrievalRun run, const Qrels& qrels, const EvalConfig& cfg) {
  validate_run(run);
  EvalReport report;
  report.run_tag = cfg.run_tag;
  report.num_queries = run.size();
  auto record = [&](const std::string& name, const MetricResult& m) {
    report.metrics[name] = m.mean;
    for (const auto& [qid, v] : m.per_query) report.per_query[qid][name] = v;
    report.excluded = m.excluded;
  };
  record("ndcg@" + std::to_string(cfg.ndcg_k), ndcg_at_k(run, qrels, cfg.ndcg_k));
  for (std::size_t k : cfg.recall_ks) {
    record("recall@" + std::to_string(k), recall_at_k(run, qrels, k));
  }
  record("mrr", mrr(run, qrels));
  report.run = std::move(run);
  return report;
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const EmbeddingIndex& index,
                    const Vocabulary& vocab, const std::vector<Query>& queries,
                    const Qrels& qrels, const EvalConfig& cfg) {
  const auto prefix = encode_words(cfg.query_prefix, vocab);
  const std::size_t qlen = cfg.query_len == 0 ? cfg.passage_len : cfg.query_len;
  RetrievalRun run;
  for (const auto& q : queries) {
    if (run.count(q.id)) throw ConflictError("duplicate query id '" + q.id + "'");
    run[q.id] = search(index, embed_text(model, vocab, q.text, prefix, qlen), cfg.top_k);
  }
  return evaluate_run(std::move(run), qrels, cfg);
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const DocumentStore& store,
                    const Vocabulary& vocab, const std::vector<Query>& queries,
                    const Qrels& qrels, const EvalConfig& cfg, std::uint64_t fingerprint) {
  const auto index =
      embed_corpus(model, store, vocab, cfg.passage_len, cfg.passage_prefix, fingerprint);
  return evaluate(model, index, vocab, queries, qrels, cfg);
}

RetrievalRun bm25_run(const InvertedIndex& index, const Vocabulary& vocab,
                      const std::vector<Query>& queries, std::size_t top_k) {
  RetrievalRun run;
  for (const auto& q : queries) {
    if (run.count(q.id)) throw ConflictError("duplicate query id '" + q.id + "'");
    run[q.id] = index.search(tokenize(q.text, vocab), top_k);
  }
  return run;
}

#define L2IR_INSTANTIATE_DENSE(T)                                                        \
  template std::vector<float> embed_text<T>(const Model<T>&, const Vocabulary&,         \
                                            std::string_view, const TokenSequence&,      \
                                            std::size_t);                                \
  template EmbeddingIndex embed_corpus<T>(const Model<T>&, const DocumentStore&,         \
                                          const Vocabulary&, std::size_t,                \
                                          std::string_view, std::uint64_t);              \
  template EvalReport evaluate<T>(const Model<T>&, const EmbeddingIndex&,                \
                                  const Vocabulary&, const std::vector<Query>&,          \
                                  const Qrels&, const EvalConfig&);                      \
  template EvalReport evaluate<T>(const Model<T>&, const DocumentStore&,                 \
                                  const Vocabulary&, const std::vector<Query>&,          \
                                  const Qrels&, const EvalConfig&, std::uint64_t);

L2IR_INSTANTIATE_DENSE(float)
L2IR_INSTANTIATE_DENSE(double)

}  // namespace l2ir
