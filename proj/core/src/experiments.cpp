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

#include "l2ir/experiments.hpp"

#include <cmath>
#include <random>
#include <set>

#include "l2ir/error.hpp"

namespace l2ir {

namespace {

std::discrete_distribution<std::size_t> zipf(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
  return {w.begin(), w.end()};
}

std::string join(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

void SyntheticCorpusSpec::validate() const {
  if (n_topics == 0 || docs_per_topic == 0 || doc_len == 0 || topic_vocab_size == 0 ||
      shared_vocab_size == 0) {
    throw UsageError("synthetic corpus sizes must all be >= 1");
  }
  if (!(topic_fraction >= 0.0 && topic_fraction <= 1.0)) {
    throw UsageError("topic_fraction must be in [0, 1]");
  }
}

std::string filler_word(std::size_t i) { return "w" + std::to_string(i); }

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto topic_dist = zipf(spec.topic_vocab_size);
  auto shared_dist = zipf(spec.shared_vocab_size);
  std::bernoulli_distribution from_topic(spec.topic_fraction);
  SyntheticCorpus corpus;
  for (std::size_t t = 0; t < spec.n_topics; ++t) {
    for (std::size_t n = 0; n < spec.docs_per_topic; ++n) {
      std::string text;
      for (std::size_t i = 0; i < spec.doc_len; ++i) {
        if (i > 0) text += ' ';
        if (from_topic(rng)) {
          text += "t" + std::to_string(t) + "x" + std::to_string(topic_dist(rng));
        } else {
          text += filler_word(shared_dist(rng));
        }
      }
      corpus.store.add({"doc-" + std::to_string(t) + "-" + std::to_string(n), std::move(text)});
      corpus.topics.push_back(t);
    }
  }
  return corpus;
}

void make_crop_queries(const DocumentStore& store, std::size_t crop_words,
                       std::uint64_t seed, std::vector<Query>& queries, Qrels& qrels) {
  if (crop_words == 0) throw UsageError("crop_words must be >= 1");
  Rng rng(seed);
  for (const auto& doc : store.docs()) {
    const auto words = split_words(doc.text);
    std::size_t begin = 0;
    std::size_t end = words.size();
    if (words.size() > crop_words) {
      std::uniform_int_distribution<std::size_t> offset(0, words.size() - crop_words);
      begin = offset(rng);
      end = begin + crop_words;
    }
    const std::string qid = "q-" + doc.id;
    queries.push_back({qid, join(words, begin, end)});
    qrels[qid][doc.id] = 1;
  }
}

void PasskeySpec::validate() const {
  if (n_docs == 0) throw UsageError("passkey corpus needs at least one document");
  if (doc_len < kKeySentenceWords) {
    throw DataError("passkey doc_len " + std::to_string(doc_len) +
                    " cannot hold the key sentence");
  }
  if (!(depth >= 0.0 && depth <= 1.0)) throw UsageError("depth must be in [0, 1]");
  if (key_len == 0 || key_len > 18) throw UsageError("key_len must be in [1, 18]");
  if (static_cast<double>(n_docs) > 0.5 * std::pow(10.0, static_cast<double>(key_len))) {
    throw UsageError("key_len too small for that many distinct keys");
  }
  if (filler_vocab_size == 0) throw UsageError("filler_vocab_size must be >= 1");
}

PasskeyCorpus generate_passkey_corpus(const PasskeySpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto filler = zipf(spec.filler_vocab_size);
  std::uint64_t lo = 1;
  for (std::size_t i = 1; i < spec.key_len; ++i) lo *= 10;
  std::uniform_int_distribution<std::uint64_t> key_dist(spec.key_len == 1 ? 0 : lo,
                                                        lo * 10 - 1);
  PasskeyCorpus out;
  std::set<std::string> used;
  const std::size_t offset = static_cast<std::size_t>(
      std::llround(spec.depth * static_cast<double>(spec.doc_len - kKeySentenceWords)));
  for (std::size_t d = 0; d < spec.n_docs; ++d) {
    std::string key;
    do {
      key = std::to_string(key_dist(rng));
    } while (!used.insert(key).second);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < spec.doc_len - kKeySentenceWords; ++i) {
      words.push_back(filler_word(filler(rng)));
    }
    const std::vector<std::string> sentence = {"the", "pass", "key", "is", key};
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(offset), sentence.begin(),
                 sentence.end());
    const std::string id = "pk-" + std::to_string(d);
    out.store.add({id, join(words, 0, words.size())});
    out.queries.push_back({"pkq-" + std::to_string(d), "pass key " + key});
    out.qrels[out.queries.back().id][id] = 1;
    out.keys.push_back(key);
    out.key_offsets.push_back(offset);
  }
  return out;
}

double accuracy_at_1(const RetrievalRun& run, const Qrels& qrels) {
  if (run.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& [qid, ranking] : run) {
    auto it = qrels.find(qid);
    if (it == qrels.end()) throw DataError("no relevance judgments for query '" + qid + "'");
    if (ranking.empty()) continue;
    auto g = it->second.find(ranking.front().doc_id);
    if (g != it->second.end() && g->second > 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(run.size());
}

}  // namespace l2ir
