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

#include "l2ir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "l2ir/error.hpp"

namespace l2ir {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string field;
  while (in >> field) out.push_back(field);
  return out;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

const std::map<std::string, int>& judgments_for(const Qrels& qrels, const std::string& qid) {
  auto it = qrels.find(qid);
  if (it == qrels.end()) throw DataError("no relevance judgments for query '" + qid + "'");
  return it->second;
}

std::size_t count_relevant(const std::map<std::string, int>& judged) {
  std::size_t n = 0;
  for (const auto& [doc, grade] : judged) n += grade > 0 ? 1 : 0;
  return n;
}

int grade_of(const std::map<std::string, int>& judged, const std::string& doc) {
  auto it = judged.find(doc);
  return it == judged.end() ? 0 : it->second;
}

using PerQuery = std::function<double(const std::vector<ScoredDoc>&,
                                      const std::map<std::string, int>&)>;

MetricResult aggregate(const RetrievalRun& run, const Qrels& qrels, const PerQuery& fn) {
  MetricResult result;
  double total = 0.0;
  for (const auto& [qid, ranking] : run) {
    const auto& judged = judgments_for(qrels, qid);
    if (count_relevant(judged) == 0) {
      result.excluded.push_back(qid);
      continue;
    }
    const double v = fn(ranking, judged);
    result.per_query[qid] = v;
    total += v;
  }
  if (!result.per_query.empty()) total /= static_cast<double>(result.per_query.size());
  result.mean = total;
  return result;
}

}  // namespace

Qrels read_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) throw ParseError(line_no, "expected query_id, doc_id, grade");
    int grade = 0;
    try {
      std::size_t pos = 0;
      grade = std::stoi(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      throw ParseError(line_no, "grade '" + fields[2] + "' is not an integer");
    }
    if (grade < 0) throw ParseError(line_no, "grade must be >= 0");
    if (fields[0].empty() || fields[1].empty()) throw ParseError(line_no, "empty identifier");
    if (!qrels[fields[0]].emplace(fields[1], grade).second) {
      throw ParseError(line_no, "repeated judgment for (" + fields[0] + ", " + fields[1] + ")");
    }
  }
  return qrels;
}

void write_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [qid, docs] : qrels) {
    for (const auto& [doc, grade] : docs) out << qid << '\t' << doc << '\t' << grade << '\n';
  }
}

void validate_run(const RetrievalRun& run) {
  for (const auto& [qid, ranking] : run) {
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (!seen.insert(ranking[i].doc_id).second) {
        throw DataError("query '" + qid + "' ranks document '" + ranking[i].doc_id + "' twice");
      }
      if (i > 0 && ranking[i].score > ranking[i - 1].score) {
        throw DataError("query '" + qid + "' has increasing scores at rank " +
                        std::to_string(i + 1));
      }
    }
  }
}

void write_run(const RetrievalRun& run, const std::filesystem::path& path,
               const std::string& tag) {
  validate_run(run);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [qid, ranking] : run) {
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      out << fmt::format("{} Q0 {} {} {:.9g} {}\n", qid, ranking[i].doc_id, i + 1,
                         ranking[i].score, tag);
    }
  }
}

RetrievalRun read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::vector<std::pair<std::size_t, ScoredDoc>>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto f = split_ws(line);
    if (f.size() != 6) throw ParseError(line_no, "expected 6 columns");
    std::size_t rank = 0;
    double score = 0.0;
    try {
      rank = std::stoul(f[3]);
      score = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad rank or score");
    }
    rows[f[0]].push_back({rank, {f[2], score}});
  }
  RetrievalRun run;
  for (auto& [qid, list] : rows) {
    std::sort(list.begin(), list.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& ranking = run[qid];
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i].first != i + 1) {
        throw DataError("query '" + qid + "' ranks are not contiguous from 1");
      }
      ranking.push_back(std::move(list[i].second));
    }
  }
  validate_run(run);
  return run;
}

MetricResult ndcg_at_k(const RetrievalRun& run, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw UsageError("ndcg: k must be >= 1");
  return aggregate(run, qrels, [k](const auto& ranking, const auto& judged) {
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
      const int g = grade_of(judged, ranking[i].doc_id);
      if (g > 0) dcg += (std::exp2(g) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    std::vector<int> grades;
    for (const auto& [doc, g] : judged) {
      if (g > 0) grades.push_back(g);
    }
    std::sort(grades.rbegin(), grades.rend());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
      idcg += (std::exp2(grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
  });
}

MetricResult recall_at_k(const RetrievalRun& run, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw UsageError("recall: k must be >= 1");
  return aggregate(run, qrels, [k](const auto& ranking, const auto& judged) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
      hits += grade_of(judged, ranking[i].doc_id) > 0 ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(count_relevant(judged));
  });
}

MetricResult mrr(const RetrievalRun& run, const Qrels& qrels, std::size_t k) {
  return aggregate(run, qrels, [k](const auto& ranking, const auto& judged) {
    const std::size_t limit = k == 0 ? ranking.size() : std::min(k, ranking.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (grade_of(judged, ranking[i].doc_id) > 0) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
  });
}

double random_ndcg_single_relevant(std::size_t num_docs, std::size_t k) {
  if (num_docs == 0) throw UsageError("random baseline needs at least one document");
  double total = 0.0;
  for (std::size_t r = 1; r <= std::min(k, num_docs); ++r) {
    total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return total / static_cast<double>(num_docs);
}

}  // namespace l2ir
