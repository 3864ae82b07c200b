// End-to-end checks of the command-line tool: conversion, training,
// prediction, scoring, significance, exit codes, and reproducibility.
#include <catch2/catch_amalgamated.hpp>

#include <fieldex/corpus.hpp>
#include <fieldex/rng.hpp>
#include <fieldex/train.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "support/synthetic.hpp"
#include "support/testutil.hpp"

using fieldex::ordered_json;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const std::string& scratch) {
  const std::string out_path = scratch + ".stdout";
  const std::string err_path = scratch + ".stderr";
  const std::string cmd =
      std::string(FIELDEX_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::read_file(out_path);
  r.err = testutil::read_file(err_path);
  return r;
}

double max_logged_val_metric(const std::string& log_path) {
  std::ifstream in(log_path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  REQUIRE(header == fieldex::kLogHeader);
  double best = -1.0;
  long update = 0;
  double loss = 0.0, metric = 0.0, wall = 0.0;
  while (in >> update >> loss >> metric >> wall) best = std::max(best, metric);
  REQUIRE(best >= 0.0);
  return best;
}

ordered_json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return ordered_json::parse(in);
}

// One shared workspace: the corpus is converted and both model kinds trained
// exactly once, then inspected from several test cases.
struct Workspace {
  testutil::TempDir dir{"cli"};
  std::string bio = dir.path("corpus.bio");
  std::string records = dir.path("corpus.jsonl");
  std::string schema = dir.path("corpus.schema.json");
  std::string ptr_cfg = dir.path("ptr_config.json");
  std::string tag_cfg = dir.path("tag_config.json");
  std::string ptr_ckpt = dir.path("ptr.ckpt");
  std::string tag_ckpt = dir.path("tag.ckpt");
  CliResult convert_res, ptr_res, tag_res;
  int n_sentences = 30;
};

const Workspace& ws() {
  static const Workspace w = [] {
    Workspace w;
    fieldex::Rng rng(11);
    fieldex::write_bio(w.bio, testutil::synthetic_corpus(rng, w.n_sentences));
    testutil::write_file(w.ptr_cfg, R"({
      "train": {"batch_size": 8, "eval_every": 50, "max_updates": 600,
                "patience": 5, "learning_rate": 0.003},
      "model": {"embed_dim": 16, "encoder_hidden": 20, "decoder_hidden": 20, "attn_dim": 16}
    })");
    testutil::write_file(w.tag_cfg, R"({
      "train": {"batch_size": 8, "eval_every": 50, "max_updates": 400,
                "patience": 4, "learning_rate": 0.003},
      "model": {"embed_dim": 16, "layer1_hidden": 16, "layer2_hidden": 16}
    })");
    w.convert_res = run_cli("convert " + w.bio + " --dataset movie --out " + w.records,
                            w.dir.path("convert"));
    w.ptr_res = run_cli("train --model pointer --data " + w.records + " --out " + w.ptr_ckpt +
                            " --config " + w.ptr_cfg + " --seed 42",
                        w.dir.path("ptr_train"));
    w.tag_res = run_cli("train --model baseline --data " + w.bio + " --out " + w.tag_ckpt +
                            " --config " + w.tag_cfg + " --schema " + w.schema + " --seed 42",
                        w.dir.path("tag_train"));
    return w;
  }();
  return w;
}

}  // namespace

TEST_CASE("convert writes records plus a derived schema and reports counts") {
  const Workspace& w = ws();
  REQUIRE(w.convert_res.exit_code == 0);
  CHECK(w.convert_res.out.find("records: " + std::to_string(w.n_sentences)) != std::string::npos);

  const fieldex::FieldSchema schema = fieldex::read_schema(w.schema);
  CHECK(schema.dataset == "movie");
  REQUIRE_FALSE(schema.fields.empty());

  const auto records = fieldex::read_e2e_jsonl(w.records, schema);
  REQUIRE(records.size() == static_cast<size_t>(w.n_sentences));
  for (const auto& r : records) {
    REQUIRE(r.input_tokens.size() >= 2);
    CHECK(r.input_tokens.front() == fieldex::kCommaToken);
    CHECK(r.input_tokens.back() == fieldex::kEosToken);
  }
}

TEST_CASE("pointer training produces checkpoint, log, and validation dump") {
  const Workspace& w = ws();
  REQUIRE(w.ptr_res.exit_code == 0);
  CHECK(w.ptr_res.out.find("checkpoint: " + w.ptr_ckpt) != std::string::npos);
  CHECK(std::ifstream(w.ptr_ckpt).good());
  CHECK(std::ifstream(w.ptr_ckpt + ".log").good());
  CHECK(std::ifstream(w.ptr_ckpt + ".val.jsonl").good());
}

TEST_CASE("predicting the validation dump reproduces the logged best metric") {
  const Workspace& w = ws();
  REQUIRE(w.ptr_res.exit_code == 0);
  const std::string pred = w.dir.path("ptr_val.pred.jsonl");
  const std::string report = w.dir.path("ptr_val.report.json");

  CliResult r = run_cli("predict " + w.ptr_ckpt + " " + w.ptr_ckpt + ".val.jsonl --out " + pred,
                        w.dir.path("p1"));
  REQUIRE(r.exit_code == 0);
  r = run_cli("evaluate " + pred + " " + w.ptr_ckpt + ".val.jsonl --schema " + w.schema +
                  " --out " + report,
              w.dir.path("p2"));
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("micro") != std::string::npos);

  const double scored = parse_json_file(report)["micro"]["f1"].get<double>();
  const double logged = max_logged_val_metric(w.ptr_ckpt + ".log");
  CHECK(scored == Catch::Approx(logged).margin(1e-6));
}

TEST_CASE("baseline training round-trips through the BIO side channel") {
  const Workspace& w = ws();
  REQUIRE(w.tag_res.exit_code == 0);
  const std::string val_bio = w.tag_ckpt + ".val.bio";
  REQUIRE(std::ifstream(val_bio).good());

  const std::string pred = w.dir.path("tag_val.pred.jsonl");
  CliResult r = run_cli("predict " + w.tag_ckpt + " " + val_bio + " --out " + pred,
                        w.dir.path("t1"));
  REQUIRE(r.exit_code == 0);
  REQUIRE(std::ifstream(pred + ".bio").good());

  // Chunk F1 of the BIO side channel against gold matches the logged metric.
  const std::string report = w.dir.path("tag_val.report.json");
  r = run_cli("evaluate " + pred + ".bio " + val_bio + " --bio --out " + report,
              w.dir.path("t2"));
  REQUIRE(r.exit_code == 0);
  const double scored = parse_json_file(report)["f1"].get<double>();
  CHECK(scored == Catch::Approx(max_logged_val_metric(w.tag_ckpt + ".log")).margin(1e-6));

  // The record view scores against gold records converted with the same schema.
  const std::string gold_records = w.dir.path("tag_val.gold.jsonl");
  r = run_cli("convert " + val_bio + " --dataset movie --schema " + w.schema + " --out " +
                  gold_records,
              w.dir.path("t3"));
  REQUIRE(r.exit_code == 0);
  r = run_cli("evaluate " + pred + " " + gold_records + " --schema " + w.schema,
              w.dir.path("t4"));
  CHECK(r.exit_code == 0);
}

TEST_CASE("gold scored against itself is perfect; identical systems tie") {
  const Workspace& w = ws();
  const std::string report = w.dir.path("self.report.json");
  CliResult r = run_cli("evaluate " + w.records + " " + w.records + " --schema " + w.schema +
                            " --out " + report,
                        w.dir.path("g1"));
  REQUIRE(r.exit_code == 0);
  CHECK(parse_json_file(report)["micro"]["f1"].get<double>() == 1.0);

  const std::string sig = w.dir.path("self.sig.json");
  r = run_cli("significance " + w.records + " " + w.records + " " + w.records + " --schema " +
                  w.schema + " --resamples 300 --out " + sig,
              w.dir.path("g2"));
  REQUIRE(r.exit_code == 0);
  const ordered_json j = parse_json_file(sig);
  CHECK(j["better"].get<std::string>() == "tie");
  CHECK(j["p"].get<double>() == 0.0);
  CHECK(j["full_f1_a"].get<double>() == j["full_f1_b"].get<double>());
}

TEST_CASE("significance identifies the strictly better system") {
  const Workspace& w = ws();
  // Corrupt the first record's fields to make a strictly worse system.
  const fieldex::FieldSchema schema = fieldex::read_schema(w.schema);
  auto corrupted = fieldex::read_e2e_jsonl(w.records, schema);
  bool changed = false;
  for (auto& values : corrupted[0].targets) {
    if (!values.empty()) {
      values.clear();
      changed = true;
    }
  }
  REQUIRE(changed);
  const std::string worse = w.dir.path("worse.jsonl");
  fieldex::write_e2e_jsonl(worse, corrupted, schema);

  const std::string sig = w.dir.path("dir.sig.json");
  CliResult r = run_cli("significance " + worse + " " + w.records + " " + w.records +
                            " --schema " + w.schema + " --resamples 300 --out " + sig,
                        w.dir.path("d1"));
  REQUIRE(r.exit_code == 0);
  const ordered_json j = parse_json_file(sig);
  CHECK(j["better"].get<std::string>() == "B");
  CHECK(j["full_f1_b"].get<double>() == 1.0);
  CHECK(j["full_f1_a"].get<double>() < 1.0);
  // The perfect system is never strictly worse in any resample.
  CHECK(j["p"].get<double>() == 0.0);
}

TEST_CASE("record, BIO, and plain-token inputs decode identically") {
  const Workspace& w = ws();
  REQUIRE(w.ptr_res.exit_code == 0);
  const fieldex::FieldSchema schema = fieldex::read_schema(w.schema);
  const auto val = fieldex::read_e2e_jsonl(w.ptr_ckpt + ".val.jsonl", schema);
  REQUIRE_FALSE(val.empty());

  std::vector<fieldex::BioSentence> as_bio;
  std::ostringstream plain;
  for (const auto& rec : val) {
    std::vector<std::string> toks(rec.input_tokens.begin() + 1, rec.input_tokens.end() - 1);
    fieldex::BioSentence s;
    s.labels.assign(toks.size(), "O");
    s.tokens = toks;
    as_bio.push_back(std::move(s));
    for (size_t i = 0; i < toks.size(); ++i) plain << (i ? " " : "") << toks[i];
    plain << "\n";
  }
  const std::string bio_in = w.dir.path("val_as.bio");
  const std::string plain_in = w.dir.path("val_as.txt");
  fieldex::write_bio(bio_in, as_bio);
  testutil::write_file(plain_in, plain.str());

  const std::string out1 = w.dir.path("agree1.jsonl");
  const std::string out2 = w.dir.path("agree2.jsonl");
  const std::string out3 = w.dir.path("agree3.jsonl");
  REQUIRE(run_cli("predict " + w.ptr_ckpt + " " + w.ptr_ckpt + ".val.jsonl --out " + out1,
                  w.dir.path("a1"))
              .exit_code == 0);
  REQUIRE(run_cli("predict " + w.ptr_ckpt + " " + bio_in + " --out " + out2, w.dir.path("a2"))
              .exit_code == 0);
  REQUIRE(run_cli("predict " + w.ptr_ckpt + " " + plain_in + " --out " + out3, w.dir.path("a3"))
              .exit_code == 0);
  const std::string first = testutil::read_file(out1);
  CHECK(first == testutil::read_file(out2));
  CHECK(first == testutil::read_file(out3));
}

TEST_CASE("training twice with one seed is byte-identical; another seed differs") {
  const Workspace& w = ws();
  const std::string ck1 = w.dir.path("rep1.ckpt");
  const std::string ck2 = w.dir.path("rep2.ckpt");
  const std::string ck3 = w.dir.path("rep3.ckpt");
  const std::string base = "train --model pointer --data " + w.records + " --config " + w.ptr_cfg +
                           " --max-updates 60 ";
  REQUIRE(run_cli(base + "--out " + ck1 + " --seed 7", w.dir.path("r1")).exit_code == 0);
  REQUIRE(run_cli(base + "--out " + ck2 + " --seed 7", w.dir.path("r2")).exit_code == 0);
  REQUIRE(run_cli(base + "--out " + ck3 + " --seed 8", w.dir.path("r3")).exit_code == 0);
  const std::string bytes1 = testutil::read_file(ck1);
  CHECK(bytes1 == testutil::read_file(ck2));
  CHECK(bytes1 != testutil::read_file(ck3));
}

TEST_CASE("a one-update budget still yields a usable checkpoint") {
  const Workspace& w = ws();
  const std::string ckpt = w.dir.path("one.ckpt");
  CliResult r = run_cli("train --model pointer --data " + w.records + " --config " + w.ptr_cfg +
                            " --max-updates 1 --out " + ckpt,
                        w.dir.path("o1"));
  REQUIRE(r.exit_code == 0);

  const std::string log = testutil::read_file(ckpt + ".log");
  CHECK(log.find(fieldex::kLogHeader) == 0);
  CHECK(log.find("\n1\t") != std::string::npos);

  const std::string pred = w.dir.path("one.pred.jsonl");
  CHECK(run_cli("predict " + ckpt + " " + ckpt + ".val.jsonl --out " + pred, w.dir.path("o2"))
            .exit_code == 0);
}

TEST_CASE("exit codes separate usage errors from success") {
  const Workspace& w = ws();
  auto code = [&](const std::string& args, const std::string& tag) {
    return run_cli(args, w.dir.path(tag)).exit_code;
  };
  CHECK(code("convert " + w.dir.path("absent.bio") + " --dataset atis --out " +
                 w.dir.path("x.jsonl"),
             "e1") == 2);
  CHECK(code("convert " + w.bio + " --dataset pizza --out " + w.dir.path("x.jsonl"), "e2") == 2);
  CHECK(code("--bogus-flag", "e3") == 2);
  CHECK(code("", "e4") == 2);
  CHECK(code("--help", "e5") == 0);
  CHECK(code("predict " + w.schema + " " + w.bio + " --out " + w.dir.path("x.jsonl"), "e6") == 2);

  // Prediction/gold record count mismatch is an input error.
  const fieldex::FieldSchema schema = fieldex::read_schema(w.schema);
  auto two = fieldex::read_e2e_jsonl(w.records, schema);
  two.resize(2);
  const std::string short_file = w.dir.path("short.jsonl");
  fieldex::write_e2e_jsonl(short_file, two, schema);
  CHECK(code("evaluate " + short_file + " " + w.records + " --schema " + w.schema, "e7") == 2);
}

TEST_CASE("selfcheck passes and reports per-check lines") {
  const Workspace& w = ws();
  const CliResult r = run_cli("selfcheck", w.dir.path("sc"));
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("selfcheck: PASS") != std::string::npos);
  CHECK(r.out.find("[FAIL]") == std::string::npos);
}
