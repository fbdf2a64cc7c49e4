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

// The `seqdefer` command line.
//
//   seqdefer gen    --config run.conf     instances per seed
//   seqdefer trace  --config run.conf     predictor/expert traces
//   seqdefer train  --config run.conf     rejector checkpoints
//   seqdefer eval   --config run.conf     curves and summaries
//   seqdefer sweep  --config run.conf     J / alpha / rollout / matrix tables
//   seqdefer verify [--config run.conf]   property suites
//
// Layout under the output root:
//
//   config.txt                     serialized config
//   seed-<s>/instances.json        gen
//   seed-<s>/data/                 trace (meta.json, train/test.ndjson)
//   seed-<s>/models/<kind>.json    train
//   seed-<s>/curves.csv            eval
//   seed-<s>/summary.csv           eval
//   seed-<s>/<stage>.manifest.json config hash and blob hashes per stage
//   summary.csv                    eval, mean (std) over seeds
//   sweep-<kind>.csv               sweep, plus sweep-<kind>-cells.csv
//   verify-report.json             verify
//
// CSV files start with a `# config_hash=<sha1>` comment line; JSON files
// carry a config_hash field. A stage whose upstream manifest was written
// under another config hash, or whose input files changed since, fails
// with a staleness error.

#ifndef SEQDEFER_CLI_HPP_
#define SEQDEFER_CLI_HPP_

#include "seqdefer/core.hpp"

namespace seqdefer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitVerify = 4;
inline constexpr int kExitInternal = 1;

// Config and parameter problems map to 2; everything raised while reading
// or processing artifacts maps to 3.
int ExitCode(ErrorKind kind);

// Runs one subcommand and returns the process exit code. Diagnostics go to
// stderr, progress and tables to stdout.
int Run(int argc, char** argv);

}  // namespace seqdefer::cli

#endif  // SEQDEFER_CLI_HPP_
