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

#include "seqdefer/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqdefer/checkpoint.hpp"
#include "seqdefer/config.hpp"
#include "seqdefer/experiments.hpp"
#include "seqdefer/hash.hpp"
#include "seqdefer/trace_io.hpp"
#include "seqdefer/verify.hpp"

namespace seqdefer::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kInstancesVersion = "instances/v1";
constexpr const char* kManifestVersion = "manifest/v1";

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string out;
  bool oracle = false;
};

struct Context {
  ExperimentConfig config;
  std::string hash;
  fs::path root;
};

Context LoadContext(const Flags& flags, bool config_optional) {
  Context ctx;
  if (flags.config.empty()) {
    if (!config_optional) Fail(ErrorKind::kConfig, "--config is required");
  } else {
    if (!fs::exists(flags.config)) {
      Fail(ErrorKind::kConfig, "config file not found: " + flags.config);
    }
    ctx.config = ReadConfig(flags.config);
  }
  if (flags.seed) ctx.config.seeds = {*flags.seed};
  if (!flags.out.empty()) ctx.config.out = flags.out;
  if (flags.oracle) ctx.config.setup.tsp.exact = true;
  ValidateConfig(ctx.config);
  if (flags.jobs < 0) Fail(ErrorKind::kConfig, "--jobs must be positive");
  if (flags.jobs > 0) omp_set_num_threads(flags.jobs);
  ctx.hash = ConfigHash(ctx.config);
  ctx.root = ctx.config.out;
  fs::create_directories(ctx.root);
  WriteFile(ctx.root / "config.txt", SerializeConfig(ctx.config));
  return ctx;
}

fs::path SeedDir(const Context& ctx, std::uint64_t seed) {
  return ctx.root / ("seed-" + std::to_string(seed));
}

std::string WithHash(const Context& ctx, const std::string& csv) {
  return "# config_hash=" + ctx.hash + "\n" + csv;
}

json ReadJson(const fs::path& path) {
  try {
    return json::parse(ReadFile(path));
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifests

json FileHashes(const fs::path& dir, const std::vector<std::string>& files) {
  json out = json::object();
  for (const std::string& f : files) out[f] = GitBlobHash(ReadFile(dir / f));
  return out;
}

void WriteManifest(const Context& ctx, const fs::path& dir,
                   const std::string& stage, std::uint64_t seed,
                   const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs) {
  json m;
  m["version"] = kManifestVersion;
  m["stage"] = stage;
  m["config_hash"] = ctx.hash;
  m["seed"] = seed;
  m["inputs"] = FileHashes(dir, inputs);
  m["outputs"] = FileHashes(dir, outputs);
  WriteFile(dir / (stage + ".manifest.json"), m.dump(2) + "\n");
}

bool HasManifest(const fs::path& dir, const std::string& stage) {
  return fs::exists(dir / (stage + ".manifest.json"));
}

// Checks that `stage` ran under the current config and that none of its
// outputs changed since.
void RequireStage(const Context& ctx, const fs::path& dir,
                  const std::string& stage) {
  const fs::path path = dir / (stage + ".manifest.json");
  if (!fs::exists(path)) {
    Fail(ErrorKind::kData, "missing " + path.string() + "; run `seqdefer " +
                               stage + "` first");
  }
  const json m = ReadJson(path);
  if (m.value("version", "") != kManifestVersion) {
    Fail(ErrorKind::kData, path.string() + ": expected " + kManifestVersion);
  }
  const std::string written = m.at("config_hash").get<std::string>();
  if (written != ctx.hash) {
    Fail(ErrorKind::kStaleness,
         path.string() + " was written under config " + written +
             " but the current config is " + ctx.hash + "; rerun `seqdefer " +
             stage + "`");
  }
  for (const auto& [file, blob] : m.at("outputs").items()) {
    const fs::path f = dir / file;
    if (!fs::exists(f)) {
      Fail(ErrorKind::kData, "missing " + f.string() + " listed by " +
                                 path.string());
    }
    if (GitBlobHash(ReadFile(f)) != blob.get<std::string>()) {
      Fail(ErrorKind::kStaleness, f.string() + " changed after `seqdefer " +
                                      stage + "`; rerun it");
    }
  }
}

// ---------------------------------------------------------------------------
// Instance files

json MwpToJson(const std::vector<MwpInstance>& v) {
  json a = json::array();
  for (const MwpInstance& i : v) {
    a.push_back({{"history", i.history}, {"target", i.target}});
  }
  return a;
}

std::vector<MwpInstance> MwpFromJson(const json& a) {
  std::vector<MwpInstance> v;
  for (const json& j : a) {
    MwpInstance i;
    i.history = j.at("history").get<std::vector<double>>();
    i.target = j.at("target").get<std::vector<double>>();
    if (i.history.size() != static_cast<std::size_t>(kMwpHistory) ||
        i.target.size() != static_cast<std::size_t>(kMwpHorizon)) {
      Fail(ErrorKind::kData, "mwp instance has the wrong window length");
    }
    v.push_back(std::move(i));
  }
  return v;
}

json TextToJson(const std::vector<TextInstance>& v) {
  json a = json::array();
  for (const TextInstance& i : v) {
    a.push_back({{"context", i.context}, {"target", i.target}});
  }
  return a;
}

std::vector<TextInstance> TextFromJson(const json& a) {
  std::vector<TextInstance> v;
  for (const json& j : a) {
    v.push_back({j.at("context").get<std::vector<std::int64_t>>(),
                 j.at("target").get<std::vector<std::int64_t>>()});
  }
  return v;
}

json GenerateInstances(const TaskSetup& setup, std::uint64_t seed) {
  json d;
  switch (setup.kind) {
    case TaskKind::kTsp: {
      TspConfig c = setup.tsp;
      c.seed = seed;
      const TspSplit s = GenTspSplit(c);
      d["train"] = TspToJson(s.train);
      d["test"] = TspToJson(s.test);
      break;
    }
    case TaskKind::kMwp: {
      MwpConfig c = setup.mwp;
      c.seed = seed;
      const MwpSplit s = GenMwpSplit(c);
      d["train"] = MwpToJson(s.train);
      d["test"] = MwpToJson(s.test);
      d["series_sd"] = s.series_sd;
      break;
    }
    case TaskKind::kText: {
      TextConfig c = setup.text;
      c.seed = seed;
      const TextSplit s = GenTextSplit(c);
      d["chain"] = NGramToJson(s.chain);
      d["train"] = TextToJson(s.train);
      d["test"] = TextToJson(s.test);
      break;
    }
  }
  return d;
}

TaskDataset TraceInstances(const TaskSetup& setup, std::uint64_t seed,
                           const json& d) {
  try {
    switch (setup.kind) {
      case TaskKind::kTsp: {
        TspConfig c = setup.tsp;
        c.seed = seed;
        return TraceTspSplit({TspFromJson(d.at("train")), TspFromJson(d.at("test"))},
                             c);
      }
      case TaskKind::kMwp: {
        MwpConfig c = setup.mwp;
        c.seed = seed;
        MwpSplit s;
        s.train = MwpFromJson(d.at("train"));
        s.test = MwpFromJson(d.at("test"));
        s.series_sd = d.at("series_sd").get<double>();
        return TraceMwpSplit(s, c);
      }
      case TaskKind::kText: {
        TextConfig c = setup.text;
        c.seed = seed;
        return TraceTextSplit({NGramFromJson(d.at("chain")),
                               TextFromJson(d.at("train")),
                               TextFromJson(d.at("test"))},
                              c);
      }
    }
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, std::string("instances: ") + e.what());
  }
  Fail(ErrorKind::kConfig, "unknown task");
}

// ---------------------------------------------------------------------------
// Stages

std::vector<std::string> SelectedMethods(const Context& ctx) {
  const MethodOptions& o = ctx.config.options;
  return o.methods.empty() ? ApplicableMethods(ctx.config.setup.kind)
                           : o.methods;
}

bool Selected(const Context& ctx, const std::string& method) {
  const auto m = SelectedMethods(ctx);
  return std::find(m.begin(), m.end(), method) != m.end();
}

void Gen(const Context& ctx) {
  for (std::uint64_t seed : ctx.config.seeds) {
    const fs::path dir = SeedDir(ctx, seed);
    fs::create_directories(dir);
    json doc;
    doc["version"] = kInstancesVersion;
    doc["config_hash"] = ctx.hash;
    doc["task"] = ToString(ctx.config.setup.kind);
    doc["seed"] = seed;
    doc["data"] = GenerateInstances(ctx.config.setup, seed);
    WriteFile(dir / "instances.json", doc.dump() + "\n");
    WriteManifest(ctx, dir, "gen", seed, {}, {"instances.json"});
    std::cout << "gen: " << (dir / "instances.json").string() << "\n";
  }
}

void TraceStage(const Context& ctx) {
  for (std::uint64_t seed : ctx.config.seeds) {
    const fs::path dir = SeedDir(ctx, seed);
    RequireStage(ctx, dir, "gen");
    const json doc = ReadJson(dir / "instances.json");
    if (doc.value("version", "") != kInstancesVersion ||
        doc.value("task", "") != ToString(ctx.config.setup.kind)) {
      Fail(ErrorKind::kData, (dir / "instances.json").string() +
                                 ": not a " + ToString(ctx.config.setup.kind) +
                                 " instance file");
    }
    const TaskDataset data = TraceInstances(ctx.config.setup, seed, doc.at("data"));
    SaveDataset(dir / "data", data, ctx.hash);
    WriteManifest(ctx, dir, "trace", seed, {"instances.json"},
                  {"data/meta.json", "data/train.ndjson", "data/test.ndjson"});
    std::cout << "trace: " << (dir / "data").string() << " ("
              << data.train.size() << " train, " << data.test.size()
              << " test)\n";
  }
}

json LogToJson(const TrainingLog& log) {
  return {{"train_loss", log.train_loss},   {"val_loss", log.val_loss},
          {"best_epoch", log.best_epoch},   {"epochs_run", log.epochs_run},
          {"early_stopped", log.early_stopped}, {"warnings", log.warnings}};
}

void Train(const Context& ctx) {
  const MethodOptions& o = ctx.config.options;
  for (std::uint64_t seed : ctx.config.seeds) {
    const fs::path dir = SeedDir(ctx, seed);
    RequireStage(ctx, dir, "trace");
    const TaskDataset data = LoadDataset(dir / "data");
    const TrainedModels models = TrainModels(data, o, seed);
    fs::create_directories(dir / "models");
    std::vector<std::string> outputs;
    json logs = json::object();
    auto save = [&](const std::string& kind, json doc) {
      doc["config_hash"] = ctx.hash;
      const std::string rel = "models/" + kind + ".json";
      WriteCheckpoint(dir / rel, doc);
      outputs.push_back(rel);
    };
    if (models.token) {
      TrainConfig tc = o.token;
      tc.seed = seed;
      save("token", TokenModelToJson(*models.token, tc));
      logs["token"] = LogToJson(*models.token_log);
    }
    if (models.onetime) {
      TrainConfig tc = o.onetime;
      tc.seed = seed;
      save("onetime", OnetimeModelToJson(*models.onetime, tc));
      logs["onetime"] = LogToJson(*models.onetime_log);
    }
    if (models.whole) {
      TrainConfig tc = o.whole;
      tc.seed = seed;
      save("whole", WholeModelToJson(*models.whole, tc));
      logs["whole"] = {{"positives", models.whole_log->positives},
                       {"negatives", models.whole_log->negatives},
                       {"epochs_run", models.whole_log->epochs_run},
                       {"train_loss", models.whole_log->train_loss},
                       {"warnings", models.whole_log->warnings}};
    }
    json log_doc{{"config_hash", ctx.hash}, {"seed", seed}, {"logs", logs}};
    WriteFile(dir / "models/train-log.json", log_doc.dump(1) + "\n");
    outputs.push_back("models/train-log.json");
    WriteManifest(ctx, dir, "train", seed,
                  {"data/meta.json", "data/train.ndjson"}, outputs);
    std::cout << "train: seed " << seed << ", " << outputs.size() - 1
              << " checkpoint(s) in " << (dir / "models").string() << "\n";
  }
}

json RequireCheckpoint(const fs::path& dir, const std::string& kind) {
  const fs::path path = dir / "models" / (kind + ".json");
  if (!fs::exists(path)) {
    Fail(ErrorKind::kData, "missing checkpoint " + path.string() +
                               "; run `seqdefer train` first");
  }
  return ReadCheckpoint(path);
}

void PrintTable(const std::vector<SweepRow>& rows) {
  std::printf("%-18s %-8s %-18s %-18s %10s\n", "group", "runs", "pct mean (std)",
              "audc mean (std)", "rate");
  for (const SweepRow& r : rows) {
    char rate[32] = "-";
    if (r.rate_mean) std::snprintf(rate, sizeof rate, "%.3f", *r.rate_mean);
    std::printf("%-18s %-8zu %-18s %-18s %10s  %s\n", r.group.c_str(), r.runs,
                FormatMeanStd(r.pct_mean, r.pct_std).c_str(),
                FormatMeanStd(r.audc_mean, r.audc_std).c_str(), rate,
                r.method.c_str());
  }
}

void Eval(const Context& ctx) {
  const MethodOptions& o = ctx.config.options;
  std::vector<SweepCell> cells;
  for (std::uint64_t seed : ctx.config.seeds) {
    const fs::path dir = SeedDir(ctx, seed);
    RequireStage(ctx, dir, "trace");
    const bool learned = Selected(ctx, kTokenwiseModel) ||
                         Selected(ctx, kOneTimeModel) ||
                         Selected(ctx, kWholeModelEmbed);
    TrainedModels models;
    if (learned) {
      if (!HasManifest(dir, "train")) {
        Fail(ErrorKind::kData, "missing checkpoints in " +
                                   (dir / "models").string() +
                                   "; run `seqdefer train` first");
      }
      RequireStage(ctx, dir, "train");
      if (Selected(ctx, kTokenwiseModel)) {
        models.token.emplace(TokenModelFromJson(RequireCheckpoint(dir, "token")));
      }
      if (Selected(ctx, kOneTimeModel)) {
        models.onetime.emplace(
            OnetimeModelFromJson(RequireCheckpoint(dir, "onetime")));
      }
      if (Selected(ctx, kWholeModelEmbed)) {
        models.whole = WholeModelFromJson(RequireCheckpoint(dir, "whole"));
      }
    }
    const TaskDataset data = LoadDataset(dir / "data");
    const Comparison cmp = EvaluateMethods(data, models, o, seed);
    std::vector<DeferralCurve> curves;
    std::vector<SummaryRow> rows;
    for (const MethodResult& m : cmp.methods) {
      curves.push_back(m.curve);
      rows.push_back({m.method, m.audc, m.pct, seed});
      cells.push_back({"all", m.method, seed, m.audc, m.pct, std::nullopt});
    }
    WriteFile(dir / "curves.csv", WithHash(ctx, CurvesToCsv(curves)));
    WriteFile(dir / "summary.csv", WithHash(ctx, SummaryToCsv(rows)));
    std::vector<std::string> inputs = {"data/meta.json", "data/test.ndjson"};
    if (learned) inputs.push_back("train.manifest.json");
    WriteManifest(ctx, dir, "eval", seed, inputs, {"curves.csv", "summary.csv"});
  }
  const std::vector<SweepRow> rows = Aggregate(cells);
  WriteFile(ctx.root / "summary.csv", WithHash(ctx, SweepToCsv(rows)));
  WriteFile(ctx.root / "summary-cells.csv",
            WithHash(ctx, SweepCellsToCsv(cells)));
  PrintTable(rows);
  std::cout << "eval: " << (ctx.root / "summary.csv").string() << "\n";
}

void Sweep(const Context& ctx, const std::string& matrix_override) {
  const ExperimentConfig& c = ctx.config;
  std::vector<SweepCell> cells;
  std::string extra;
  switch (c.sweep) {
    case SweepKind::kMethods:
      cells = MethodSweep(c.setup, c.options, c.seeds);
      break;
    case SweepKind::kJ:
      cells = JSweep(c.setup, c.sweep_sizes, c.options, c.seeds);
      break;
    case SweepKind::kAlpha:
      cells = AlphaSweep(c.setup, c.sweep_alphas, c.options, c.seeds);
      break;
    case SweepKind::kRollout:
      cells = RolloutAblation(c.setup, c.options, c.seeds);
      break;
    case SweepKind::kMatrix: {
      fs::path path = matrix_override.empty() ? fs::path(c.sweep_matrix)
                                              : fs::path(matrix_override);
      if (path.empty()) {
        Fail(ErrorKind::kConfig, "sweep.kind = matrix needs sweep.matrix");
      }
      if (!fs::exists(path)) {
        Fail(ErrorKind::kConfig, "config matrix not found: " + path.string());
      }
      extra = GitBlobHash(ReadFile(path));
      for (const MatrixEntry& e : ReadConfigMatrix(path)) {
        ValidateConfig(e.config);
        for (SweepCell cell : MethodSweep(e.config.setup, e.config.options,
                                          c.seeds)) {
          cell.group = e.name;
          cells.push_back(std::move(cell));
        }
      }
      break;
    }
  }
  const std::string kind = ToString(c.sweep);
  const std::string table = "sweep-" + kind + ".csv";
  const std::string raw = "sweep-" + kind + "-cells.csv";
  const std::vector<SweepRow> rows = Aggregate(cells);
  std::string head = WithHash(ctx, "");
  if (!extra.empty()) head += "# matrix_blob=" + extra + "\n";
  WriteFile(ctx.root / table, head + SweepToCsv(rows));
  WriteFile(ctx.root / raw, head + SweepCellsToCsv(cells));
  PrintTable(rows);
  std::cout << "sweep: " << (ctx.root / table).string() << "\n";
}

int Verify(const Context& ctx) {
  const std::uint64_t seed = ctx.config.seeds.front();
  const auto suites = verify::RunAll(
      static_cast<std::size_t>(ctx.config.verify_samples), seed);
  json report;
  report["config_hash"] = ctx.hash;
  report["seed"] = seed;
  report["samples"] = ctx.config.verify_samples;
  bool ok = true;
  for (const verify::SuiteResult& s : suites) {
    ok = ok && s.passed;
    // Timings are left out of the report so reruns compare equal.
    report["suites"].push_back({{"name", s.name},
                                {"passed", s.passed},
                                {"metrics", s.metrics},
                                {"failures", s.failures}});
    std::printf("%s %-12s %7.2f s\n", s.passed ? "PASS" : "FAIL",
                s.name.c_str(), s.seconds);
    for (const std::string& f : s.failures) std::printf("     %s\n", f.c_str());
  }
  report["passed"] = ok;
  WriteFile(ctx.root / "verify-report.json", report.dump(2) + "\n");
  std::cout << "verify: " << (ctx.root / "verify-report.json").string() << "\n";
  return ok ? kExitOk : kExitVerify;
}

}  // namespace

int ExitCode(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kParameter:
    case ErrorKind::kCapability:
      return kExitConfig;
    default:
      return kExitData;
  }
}

int Run(int argc, char** argv) {
  CLI::App app{"Token-level and one-time learning-to-defer experiments"};
  app.require_subcommand(1, 1);
  Flags flags;
  std::string matrix;
  app.add_option("--config", flags.config, "config file (key = value)");
  app.add_option("--seed", flags.seed, "run this seed only");
  app.add_option("--jobs", flags.jobs, "worker threads (default: all cores)");
  app.add_option("--out", flags.out, "output root (overrides `out`)");
  app.add_flag("--oracle", flags.oracle,
               "exact Held-Karp completion for the TSP expert (n <= 12)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "generate task instances per seed"},
      {"trace", "roll out predictor and expert into traces"},
      {"train", "train the learned rejectors"},
      {"eval", "deferral curves, AUDC and summary tables"},
      {"sweep", "J-size, alpha, rollout or config-matrix sweeps"},
      {"verify", "run the property suites"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    if (name == "sweep") {
      sub->add_option("--matrix", matrix, "config matrix (overrides sweep.matrix)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const Context ctx = LoadContext(flags, cmd == "verify");
    if (cmd == "gen") Gen(ctx);
    if (cmd == "trace") TraceStage(ctx);
    if (cmd == "train") Train(ctx);
    if (cmd == "eval") Eval(ctx);
    if (cmd == "sweep") Sweep(ctx, matrix);
    if (cmd == "verify") return Verify(ctx);
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "seqdefer " << cmd << ": " << e.what() << "\n";
    return ExitCode(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "seqdefer " << cmd << ": io error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "seqdefer " << cmd << ": " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace seqdefer::cli
