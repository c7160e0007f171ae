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


#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>
#include <string>

#include "test_support.hpp"

using l2ir::test::TempDir;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

class Cli {
 public:
  Cli() : tmp_("cli") {}

  Result run(const std::string& args) const {
    const auto out = tmp_ / "stdout.txt";
    const auto err = tmp_ / "stderr.txt";
    const std::string cmd = quote(L2IR_CLI_PATH) + " " + args + " >" + quote(out.string()) +
                            " 2>" + quote(err.string());
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = l2ir::test::read_text(out);
    r.err = l2ir::test::read_text(err);
    return r;
  }

  std::string path(const std::string& name) const { return quote((tmp_ / name).string()); }
  const TempDir& dir() const { return tmp_; }

 private:
  TempDir tmp_;
};

constexpr const char* kSmallSetup = R"({
  "corpus": {"n_topics": 4, "docs_per_topic": 5, "doc_len": 24, "topic_vocab_size": 10,
             "shared_vocab_size": 40},
  "model": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32, "max_context": 64},
  "pretrain": {"steps": 2, "batch_size": 2},
  "augmentation": {"anchor_len": 6, "passage_len": 32},
  "train": {"k": 2, "batch_size": 4, "max_steps": 3, "lr": 0.001},
  "eval": {"passage_len": 32, "query_len": 16, "query_words": 6, "top_k": 20}
})";

// Synthetic store with a BM25 index and a trained tiny checkpoint.
class Pipeline : public Cli {
 public:
  Pipeline() {
    l2ir::test::write_text(dir() / "setup.json", kSmallSetup);
    REQUIRE(run("synth --spec " + path("setup.json") + " --out " + path("store")).code == 0);
    REQUIRE(run("index " + path("store")).code == 0);
    const Result t = run("train " + path("store") + " --config " + path("setup.json") +
                         " --out " + path("model.ckpt") + " --seed 4");
    INFO(t.err);
    REQUIRE(t.code == 0);
  }
};

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_CASE("help lists the documented defaults") {
  const Cli cli;
  const Result train = cli.run("train --help");
  CHECK(train.code == 0);
  CHECK(train.out.find("--tau FLOAT [0.05]") != std::string::npos);
  CHECK(train.out.find("--k UINT [7]") != std::string::npos);
  CHECK(train.out.find("--lr FLOAT [0.0001]") != std::string::npos);
  CHECK(train.out.find("--negatives-scope") != std::string::npos);
  CHECK(cli.run("mine --help").out.find("--k UINT [7]") != std::string::npos);
  CHECK(cli.run("search --help").out.find("--k UINT [10]") != std::string::npos);
  CHECK(cli.run("grad-check --help").out.find("[1e-05]") != std::string::npos);
  for (const char* sub : {"ingest", "index", "embed", "eval", "bm25-eval", "synth", "passkey",
                          "end-to-end", "ablate-negatives", "compare-aug", "context-pair",
                          "fill-sweep", "report"}) {
    INFO(sub);
    CHECK(cli.run(std::string(sub) + " --help").code == 0);
  }
  CHECK(cli.run("--help-all").code == 0);
  const Result version = cli.run("--version");
  CHECK(version.code == 0);
  CHECK_FALSE(version.out.empty());
}

TEST_CASE("grad-check on a random tiny model exits 0") {
  const Cli cli;
  const Result r = cli.run("grad-check --tol 1e-5");
  INFO(r.out << r.err);
  CHECK(r.code == 0);
  CHECK(r.out.starts_with("name"));
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("grad-check with an unattainable tolerance exits 3") {
  const Cli cli;
  const Result r = cli.run("grad-check --tol 1e-300");
  CHECK(r.code == 3);
  CHECK(r.err.starts_with("error: numerical:"));
}

TEST_CASE("usage and data errors map to exit codes 1 and 2 on one stderr line") {
  const Cli cli;
  const Result unknown = cli.run("train --bogus");
  CHECK(unknown.code == 1);
  const Result nosub = cli.run("");
  CHECK(nosub.code == 1);
  const Result tol = cli.run("grad-check --tol -1");
  CHECK(tol.code == 1);
  CHECK(tol.err.starts_with("error: usage:"));
  const Result missing = cli.run("index " + cli.path("nowhere"));
  CHECK(missing.code == 2);
  CHECK(missing.err.starts_with("error: data:"));
  CHECK(missing.err.find('\n') == missing.err.size() - 1);
  l2ir::test::write_text(cli.dir() / "bad.jsonl", "{\"id\": \"a\", \"text\": \"x\"}\nnot json\n");
  const Result parse = cli.run("ingest " + cli.path("bad.jsonl") + " --out " + cli.path("s"));
  CHECK(parse.code == 2);
  CHECK(parse.err.find("line 2") != std::string::npos);
}

TEST_CASE("end-to-end pipeline: search, eval and BM25") {
  const Pipeline p;
  const Result bm25 = p.run("bm25-eval " + p.path("store") + " " + p.path("store/queries.jsonl") +
                            " " + p.path("store/qrels.tsv"));
  CHECK(bm25.code == 0);
  CHECK(bm25.out.find("ndcg@10") != std::string::npos);

  const Result embed = p.run("embed " + p.path("model.ckpt") + " " + p.path("store") + " --out " +
                             p.path("dense.idx") + " --max-len 32");
  INFO(embed.err);
  REQUIRE(embed.code == 0);
  const std::string docs = l2ir::test::read_text(p.dir() / "store/docs.jsonl");
  const auto text_at = docs.find("\"text\":\"");
  REQUIRE(text_at != std::string::npos);
  const auto begin = text_at + 8;
  const std::string text = docs.substr(begin, docs.find('"', begin) - begin);
  const Result search = p.run("search " + p.path("dense.idx") + " --query " + quote(text) +
                              " --query-prefix 'Passage: ' --k 3");
  INFO(search.err);
  REQUIRE(search.code == 0);
  const std::string top = first_line(search.out);
  const auto id_at = docs.find("\"id\":\"") + 6;
  const std::string id = docs.substr(id_at, docs.find('"', id_at) - id_at);
  CHECK(top.starts_with("1\t" + id + "\t"));

  const std::string eval_args = p.path("model.ckpt") + " " + p.path("store") + " " +
                                p.path("store/queries.jsonl") + " " + p.path("store/qrels.tsv") +
                                " --passage-len 32 --query-len 16 --out ";
  REQUIRE(p.run("eval " + eval_args + p.path("e1")).code == 0);
  REQUIRE(p.run("eval " + eval_args + p.path("e2")).code == 0);
  const std::string run1 = l2ir::test::read_text(p.dir() / "e1/run.trec");
  CHECK_FALSE(run1.empty());
  CHECK(run1 == l2ir::test::read_text(p.dir() / "e2/run.trec"));
  CHECK(l2ir::test::read_text(p.dir() / "e1/report.json") ==
        l2ir::test::read_text(p.dir() / "e2/report.json"));
  CHECK(std::filesystem::exists(p.dir() / "e1/config.json"));
  const Result report = p.run("report " + p.path("e1"));
  CHECK(report.code == 0);
  CHECK(report.out.find("ndcg@10") != std::string::npos);
}

TEST_CASE("training with the same seed is byte-identical") {
  const Pipeline p;
  const Result again = p.run("train " + p.path("store") + " --config " + p.path("setup.json") +
                             " --out " + p.path("again.ckpt") + " --seed 4");
  REQUIRE(again.code == 0);
  CHECK(l2ir::test::read_text(p.dir() / "again.ckpt") ==
        l2ir::test::read_text(p.dir() / "model.ckpt"));
  CHECK(std::filesystem::exists(p.dir() / "model.ckpt.config.json"));
  const std::string metrics = l2ir::test::read_text(p.dir() / "model.ckpt.metrics.csv");
  CHECK(metrics.starts_with("step,loss,lr,seconds\n"));
}

TEST_CASE("mined negatives are reproducible") {
  const Pipeline p;
  REQUIRE(p.run("mine " + p.path("store") + " --k 2 --out " + p.path("n1.jsonl")).code == 0);
  REQUIRE(p.run("mine " + p.path("store") + " --k 2 --out " + p.path("n2.jsonl")).code == 0);
  CHECK(l2ir::test::read_text(p.dir() / "n1.jsonl") == l2ir::test::read_text(p.dir() / "n2.jsonl"));
  const Result too_many = p.run("mine " + p.path("store") + " --k 50 --out " + p.path("n3.jsonl"));
  CHECK(too_many.code == 2);
}
