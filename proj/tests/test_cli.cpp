/**
 * Copyright 2026 The ASQ Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "cli_config.hpp"
#include "doctest.h"

using namespace asq;
using asq::cli::json;
namespace fs = std::filesystem;

#ifndef ASQ_CLI_PATH
#error "ASQ_CLI_PATH must name the asq executable"
#endif

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result run(const std::string& args) {
  Result r;
  const std::string cmd = std::string("\"") + ASQ_CLI_PATH + "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an asq::Error");
  return ErrorKind::io;
}

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("asq-cli-test-" + std::to_string(::getpid()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

}  // namespace

TEST_CASE("config merging and overrides") {
  auto c = cli::default_config();
  cli::apply_override(c, "train.epochs=7");
  cli::apply_override(c, "quant.scheme=lsq-baseline");
  cli::apply_override(c, "train.lr0=1");
  cli::apply_override(c, "analyze.bits=[8,2]");
  CHECK(c["train"]["epochs"] == 7);
  CHECK(c["quant"]["scheme"] == "lsq-baseline");
  CHECK(c["train"]["lr0"].is_number_float());
  CHECK(c["train"]["lr0"].get<double>() == 1.0);
  CHECK(c["analyze"]["bits"] == json::array({8, 2}));
  CHECK(cli::at_path(c, "data.synthetic.classes") == 4);

  CHECK(kind_of([&] { cli::apply_override(c, "train.nope=1"); }) == ErrorKind::config_schema);
  CHECK(kind_of([&] { cli::apply_override(c, "train.epochs=0.5"); }) == ErrorKind::config_schema);
  CHECK(kind_of([&] { cli::apply_override(c, "train.epochs=ten"); }) == ErrorKind::config_schema);
  CHECK(kind_of([&] { cli::apply_override(c, "noequals"); }) == ErrorKind::config_schema);
  CHECK(kind_of([&] { cli::merge_checked(c, json{{"train", 3}}); }) == ErrorKind::config_schema);
  CHECK(kind_of([&] { cli::at_path(c, "train.missing"); }) == ErrorKind::config_schema);
  CHECK(kind_of([&] { cli::load_config_file("/nonexistent/cfg.json"); }) == ErrorKind::config_path);

  TempDir tmp;
  std::ofstream(tmp / "bad.json") << "{ not json";
  CHECK(kind_of([&] { cli::load_config_file(tmp / "bad.json"); }) == ErrorKind::config_schema);
  try {
    cli::apply_override(c, "model.bogus.deep=1");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("model.bogus") != std::string::npos);
  }
}

TEST_CASE("exit codes are distinct per category") {
  std::set<int> codes;
  for (auto k : {ErrorKind::dimension, ErrorKind::invalid_argument, ErrorKind::format, ErrorKind::checkpoint,
                 ErrorKind::numeric, ErrorKind::overflow, ErrorKind::unsupported_scheme, ErrorKind::config_path,
                 ErrorKind::config_schema, ErrorKind::dataset_missing, ErrorKind::io}) {
    const int c = cli::exit_code(k);
    CHECK(c > 2);
    codes.insert(c);
  }
  CHECK(codes.size() == 11);
}

TEST_CASE("levels prints the nominal set") {
  const auto r = run("levels --scheme post --bits 3");
  CHECK(r.code == 0);
  CHECK(r.out ==
        "-1\n-0.70710678118654757\n-0.5\n-0.35355339059327379\n0\n0.35355339059327379\n0.5\n0.70710678118654757\n1\n");
  const auto pot = run("levels --scheme pot --bits 2 --alpha 2");
  CHECK(pot.out == "-2\n-1\n0\n1\n2\n");
  CHECK(run("levels --scheme pot --bits 2 --codebook").out == "-1\n0\n0.5\n1\n");
  CHECK(run("levels --bits 5").code == 2);
}

TEST_CASE("error lines and exit codes") {
  TempDir tmp;
  auto r = run("--out " + tmp / "a" + " --config /nonexistent.json train");
  CHECK(r.code == 3);
  CHECK(r.out.find("error: category=config-path code=3 message=") != std::string::npos);
  r = run("--out " + tmp / "b" + " --set train.bogus=1 train");
  CHECK(r.code == 4);
  CHECK(r.out.find("train.bogus") != std::string::npos);
  r = run("--out " + tmp / "c" + " --set data.kind=cifar-binary --set data.dir=/nonexistent train");
  CHECK(r.code == 5);
  CHECK(r.out.find("category=dataset-missing") != std::string::npos);
  r = run("--out " + tmp / "d" + " --set checkpoint=/nonexistent.ckpt eval");
  CHECK(r.code == 3);
  r = run("--out " + tmp / "e" + " eval");
  CHECK(r.code == 4);
  CHECK(run("bogus-command").code == 2);
}

TEST_CASE("train, eval, export and integer inference end to end") {
  TempDir tmp;
  const std::string small = " --no-timestamps --set data.synthetic.train_samples=64 --set data.synthetic.test_samples=32 "
                            "--set data.synthetic.size=8 --set model.width=8 ";
  auto r = run("--out " + tmp / "f" + small + "--scheme float --epochs 2 train");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(tmp / "f/model.ckpt"));
  CHECK(fs::exists(tmp / "f/log.txt"));
  auto echo = json::parse(slurp(tmp / "f/config.json"));
  CHECK(echo["quant"]["scheme"] == "float");
  CHECK(echo["train"]["epochs"] == 2);
  const auto hist = slurp(tmp / "f/history.csv");
  CHECK(hist.rfind("epoch,split,loss,top1,top5,lr", 0) == 0);
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 5);

  const std::string init = " --set train.init_checkpoint=" + tmp / "f/model.ckpt ";
  r = run("--out " + tmp / "q" + small + init + "train");
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp / "q/history.csv").find("mean_beta_") != std::string::npos);

  r = run("--out " + tmp / "e" + small + "--set checkpoint=" + tmp / "q/model.ckpt eval");
  CHECK(r.code == 0);
  CHECK(r.out.find("top1=") != std::string::npos);
  CHECK(slurp(tmp / "e/metrics.csv").rfind("split,samples,loss,top1,top5\ntest,32,", 0) == 0);

  r = run("--out " + tmp / "x" + small + "--set checkpoint=" + tmp / "q/model.ckpt export");
  REQUIRE(r.code == 0);
  r = run("--out " + tmp / "i" + small + "--set int_model=" + tmp / "x/model.int infer-int");
  CHECK(r.code == 0);
  const auto agreement = slurp(tmp / "i/agreement.csv");
  CHECK(agreement.rfind("samples,top1_agreement,", 0) == 0);
  CHECK(std::count(agreement.begin(), agreement.end(), '\n') == 2);
  const auto logits = slurp(tmp / "i/logits.csv");
  CHECK(std::count(logits.begin(), logits.end(), '\n') == 33);

  r = run("--out " + tmp / "s1" + small + init + "--scheme scheme1 train");
  REQUIRE(r.code == 0);
  r = run("--out " + tmp / "s1i" + small + "--set checkpoint=" + tmp / "s1/model.ckpt infer-int");
  CHECK(r.code == 6);
  CHECK(r.out.find("category=unsupported-scheme") != std::string::npos);

  r = run("--out " + tmp / "m" + " --set data.synthetic.size=16 --set checkpoint=" + tmp / "q/model.ckpt eval");
  CHECK(r.code == 12);
}

TEST_CASE("seeded training is byte-reproducible and the seed matters") {
  TempDir tmp;
  const std::string base = " --no-timestamps --epochs 2 --set data.synthetic.train_samples=64 train";
  REQUIRE(run("--out " + tmp / "a" + " --seed 4" + base).code == 0);
  REQUIRE(run("--out " + tmp / "b" + " --seed 4" + base).code == 0);
  REQUIRE(run("--out " + tmp / "c" + " --seed 5" + base).code == 0);
  CHECK(slurp(tmp / "a/history.csv") == slurp(tmp / "b/history.csv"));
  CHECK(slurp(tmp / "a/model.ckpt") == slurp(tmp / "b/model.ckpt"));
  CHECK(slurp(tmp / "a/history.csv") != slurp(tmp / "c/history.csv"));
}

TEST_CASE("analyze and bench artifacts") {
  TempDir tmp;
  auto r = run("--out " + tmp / "o" + " analyze");
  REQUIRE(r.code == 0);
  const auto csv = slurp(tmp / "o/overhead.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 5);
  CHECK(csv.find("resnet18,2,11679912,") != std::string::npos);

  r = run("--out " + tmp / "s" + " --set 'analyze.reports=[\"shift\"]' analyze");
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp / "s/shift.csv").find("asq,4,4,") != std::string::npos);

  r = run("--out " + tmp / "u" + " --set 'analyze.reports=[\"nope\"]' analyze");
  CHECK(r.code == 4);

  r = run("--out " + tmp / "b" + " --set 'bench.sizes=[16]' --set bench.repeats=1 bench");
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp / "b/bench.csv").rfind("size,shift_ns_per_mac,lut_mixed_ns_per_mac,int_mul_ns_per_mac\n16,", 0) == 0);
}
