/*
 * Copyright 2026 The seqdefer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seqdefer/cli.hpp"
#include "seqdefer/config.hpp"
#include "seqdefer/experiments.hpp"
#include "seqdefer/trace_io.hpp"

using namespace seqdefer;
namespace fs = std::filesystem;

namespace {

fs::path Fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seqdefer-pipe-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int RunCli(std::vector<std::string> args) {
  args.insert(args.begin(), "seqdefer");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return cli::Run(static_cast<int>(argv.size()), argv.data());
}

const char* kSmall =
    "schema = 1\n"
    "task = mwp\n"
    "mode = token\n"
    "seeds = 0,1\n"
    "mwp.train = 120\n"
    "mwp.test = 30\n"
    "train.token.epochs = 3\n"
    "train.onetime.epochs = 3\n"
    "train.whole.epochs = 3\n";

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig c = ParseConfig(kSmall);
  CHECK(c.setup.kind == TaskKind::kMwp);
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(c.setup.mwp.train == 120);
  CHECK(c.options.token.epochs == 3);
  CHECK(c.Method() == kTokenwiseModel);

  const ExperimentConfig back = ParseConfig(SerializeConfig(c));
  CHECK(SerializeConfig(back) == SerializeConfig(c));
  CHECK(ConfigHash(back) == ConfigHash(c));
  CHECK(ConfigHash(c).size() == 40);

  ExperimentConfig moved = c;
  moved.out = "elsewhere";
  moved.seeds = {4};
  CHECK(ConfigHash(moved) == ConfigHash(c));
  moved.setup.mwp.test = 31;
  CHECK(ConfigHash(moved) != ConfigHash(c));

  const std::string unknown = oracle::MessageOf(
      [] { ParseConfig("schema = 1\ntask = mwp\nbogus = 3\n"); });
  CHECK(unknown.find("line 3") != std::string::npos);
  CHECK(oracle::KindOf([] { ParseConfig("task = mwp\n"); }) == ErrorKind::kConfig);
  CHECK(oracle::KindOf([] { ParseConfig("schema = 1\nschema = 1\n"); }) ==
        ErrorKind::kConfig);
  CHECK(oracle::KindOf([] { ParseConfig("schema = 1\nmwp.train = many\n"); }) ==
        ErrorKind::kConfig);

  ExperimentConfig tsp = ParseConfig("schema = 1\ntask = tsp\nmode = onetime\ntsp.exact = true\n");
  CHECK(oracle::KindOf([&] { ValidateConfig(tsp); }) == ErrorKind::kConfig);
  tsp.setup.tsp.n = 10;
  ValidateConfig(tsp);
  ExperimentConfig tok = ParseConfig("schema = 1\ntask = tsp\nmode = token\n");
  CHECK(oracle::KindOf([&] { ValidateConfig(tok); }) == ErrorKind::kConfig);
}

TEST_CASE("config matrix") {
  const fs::path dir = Fresh("matrix");
  WriteFile(dir / "base.conf", kSmall);
  WriteFile(dir / "m.conf",
            "base = base.conf\n[fast]\ntrain.token.epochs = 1\n[slow]\ntrain.token.epochs = 9\n");
  const auto entries = ReadConfigMatrix(dir / "m.conf");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].name == "fast");
  CHECK(entries[0].config.options.token.epochs == 1);
  CHECK(entries[1].config.options.token.epochs == 9);
  CHECK(entries[1].config.setup.mwp.train == 120);
}

TEST_CASE("method applicability") {
  const auto tsp = ApplicableMethods(TaskKind::kTsp);
  CHECK(std::find(tsp.begin(), tsp.end(), kTokenwiseModel) == tsp.end());
  CHECK(std::find(tsp.begin(), tsp.end(), kOneTimeModel) != tsp.end());
  const auto mwp = ApplicableMethods(TaskKind::kMwp);
  CHECK(std::find(mwp.begin(), mwp.end(), kTokenwiseEntropy) == mwp.end());
  CHECK(std::find(mwp.begin(), mwp.end(), kOneTimeEntropy) == mwp.end());
  CHECK(oracle::KindOf([] { CheckMethod(TaskKind::kTsp, kTokenwiseScore); }) ==
        ErrorKind::kConfig);
  CHECK(IsWholeMethod(kChowMean));
  CHECK_FALSE(IsWholeMethod(kOneTimeModel));
  CHECK(DefaultConfidence(TaskKind::kMwp) == ConfidenceKind::kMcVariance);
}

TEST_CASE("aggregation") {
  const std::vector<double> v = {1.0, 2.0, 4.0};
  // mean 7/3, squared deviations sum 14/3, divided by n - 1.
  CHECK(SampleStd(v) == doctest::Approx(std::sqrt(7.0 / 3.0)));
  CHECK(SampleStd(std::vector<double>{5.0}) == 0.0);
  CHECK(FormatMeanStd(12.344, 0.555) == "12.34 (0.56)");

  std::vector<SweepCell> cells = {{"a", "M", 0, 1.0, 10.0, {}},
                                  {"a", "M", 1, 3.0, 20.0, {}},
                                  {"b", "M", 0, 2.0, 5.0, 0.5}};
  const auto rows = Aggregate(cells);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].group == "a");
  CHECK(rows[0].runs == 2);
  CHECK(rows[0].audc_mean == 2.0);
  CHECK(rows[0].pct_std == doctest::Approx(std::sqrt(50.0)));
  CHECK(rows[1].rate_mean.value() == 0.5);
  const std::string csv = SweepToCsv(rows);
  CHECK(csv.rfind("group,method,runs,audc_mean,audc_std,pct_mean,pct_std,audc,pct,deferral_rate\n", 0) == 0);
}

TEST_CASE("log-softmax rows") {
  const auto g = LogSoftmaxRows({{0.0, 0.0}, {1.0, 2.0, 3.0}});
  CHECK(g[0][0] == doctest::Approx(-std::log(2.0)));
  double z = 0.0;
  for (double v : g[1]) z += std::exp(v);
  CHECK(z == doctest::Approx(1.0));
  CHECK(g[1][2] - g[1][1] == doctest::Approx(1.0));
}

TEST_CASE("sweep argument errors") {
  TaskSetup setup;
  setup.kind = TaskKind::kMwp;
  setup.mwp.train = 20;
  setup.mwp.test = 5;
  MethodOptions opt;
  const std::vector<std::uint64_t> seeds = {0};
  const std::vector<int> bad = {1};
  CHECK(oracle::KindOf([&] { JSweep(setup, bad, opt, seeds); }) == ErrorKind::kParameter);
  const std::vector<double> neg = {-1.0};
  CHECK(oracle::KindOf([&] { AlphaSweep(setup, neg, opt, seeds); }) ==
        ErrorKind::kParameter);
  TaskSetup tsp;
  tsp.kind = TaskKind::kTsp;
  CHECK(oracle::KindOf([&] { RolloutAblation(tsp, opt, seeds); }) ==
        ErrorKind::kCapability);
  const TaskDataset data = BuildDataset(setup, 0);
  opt.methods = {kOneTimeModel};
  CHECK(oracle::KindOf([&] { EvaluateMethods(data, TrainedModels{}, opt, 0); }) ==
        ErrorKind::kCapability);
}

TEST_CASE("compare methods on a small mwp run") {
  TaskSetup setup;
  setup.kind = TaskKind::kMwp;
  setup.mwp.train = 120;
  setup.mwp.test = 30;
  MethodOptions opt;
  opt.token.epochs = 3;
  opt.onetime.epochs = 3;
  opt.whole.epochs = 3;
  const TaskDataset data = BuildDataset(setup, 1);
  const Comparison a = CompareMethods(data, opt, 1);
  const Comparison b = CompareMethods(data, opt, 1);
  REQUIRE(a.methods.size() == ApplicableMethods(TaskKind::kMwp).size());
  for (std::size_t i = 0; i < a.methods.size(); ++i) {
    CHECK(a.methods[i].method == b.methods[i].method);
    CHECK(a.methods[i].audc == b.methods[i].audc);
  }
  const MethodResult* rnd = a.Find(kRandom);
  REQUIRE(rnd != nullptr);
  CHECK(std::abs(rnd->pct) < 5.0);
  const MethodResult* best = a.Find(kOptimal);
  REQUIRE(best != nullptr);
  for (const MethodResult& m : a.methods) CHECK(best->audc <= m.audc + 1e-9);
}

TEST_CASE("cli pipeline") {
  const fs::path dir = Fresh("cli");
  WriteFile(dir / "run.conf", kSmall);
  const std::string conf = (dir / "run.conf").string();
  const std::string out1 = (dir / "a").string();
  const std::string out2 = (dir / "b").string();

  CHECK(RunCli({"gen", "--config", conf, "--out", out1}) == 0);
  CHECK(RunCli({"trace", "--config", conf, "--out", out1}) == 0);
  // eval before train
  CHECK(RunCli({"eval", "--config", conf, "--out", out1}) == cli::kExitData);
  CHECK(RunCli({"train", "--config", conf, "--out", out1}) == 0);
  CHECK(RunCli({"eval", "--config", conf, "--out", out1}) == 0);
  CHECK(fs::exists(fs::path(out1) / "summary.csv"));
  CHECK(fs::exists(fs::path(out1) / "seed-1" / "curves.csv"));

  for (const char* stage : {"gen", "trace", "train", "eval"}) {
    CHECK(RunCli({stage, "--config", conf, "--out", out2, "--jobs", "2"}) == 0);
  }
  for (const char* f : {"summary.csv", "summary-cells.csv", "seed-0/summary.csv",
                        "seed-1/curves.csv"}) {
    CHECK(ReadFile(fs::path(out1) / f) == ReadFile(fs::path(out2) / f));
  }
  const std::string summary = ReadFile(fs::path(out1) / "summary.csv");
  CHECK(summary.rfind("# config_hash=", 0) == 0);

  // A changed config makes the earlier stages stale.
  WriteFile(dir / "other.conf", std::string(kSmall) + "mwp.sigma_scale = 0.1\n");
  CHECK(RunCli({"train", "--config", (dir / "other.conf").string(), "--out", out1}) ==
        cli::kExitData);
  CHECK(RunCli({"gen", "--config", (dir / "missing.conf").string(), "--out", out1}) ==
        cli::kExitConfig);
  CHECK(cli::ExitCode(ErrorKind::kConfig) == cli::kExitConfig);
  CHECK(cli::ExitCode(ErrorKind::kStaleness) == cli::kExitData);
}
