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

#include "seqdefer/config.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "seqdefer/hash.hpp"
#include "seqdefer/trace_io.hpp"

namespace seqdefer {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  if (Trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(Trim(item));
  return out;
}

template <typename T>
T ParseNumber(const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    Fail(ErrorKind::kConfig, "'" + text + "' is not a valid number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      Fail(ErrorKind::kConfig, "'" + text + "' is not finite");
    }
  }
  return value;
}

bool ParseBool(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  Fail(ErrorKind::kConfig, "'" + text + "' is not true or false");
}

std::string Bool(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string JoinNumbers(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += FormatDouble(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> ParseNumbers(const std::string& text) {
  std::vector<T> out;
  for (const std::string& s : SplitList(text)) out.push_back(ParseNumber<T>(s));
  return out;
}

std::string Join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::string OptionalDouble(const std::optional<double>& v) {
  return v ? FormatDouble(*v) : "auto";
}

std::optional<double> ParseOptionalDouble(const std::string& text) {
  if (text == "auto") return std::nullopt;
  return ParseNumber<double>(text);
}

TokenEvalMode ParseEvalMode(const std::string& s) {
  if (s == ToString(TokenEvalMode::kStatic)) return TokenEvalMode::kStatic;
  if (s == ToString(TokenEvalMode::kReroll)) return TokenEvalMode::kReroll;
  Fail(ErrorKind::kConfig, "unknown evaluation mode '" + s + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

using TrainSelector = TrainConfig& (*)(ExperimentConfig&);

void AddTrainFields(std::vector<Field>& f, const std::string& prefix,
                    TrainSelector sel, bool rollout) {
  auto get = [sel](const ExperimentConfig& c) -> const TrainConfig& {
    return sel(const_cast<ExperimentConfig&>(c));
  };
  f.push_back({prefix + "lr",
               [=](const ExperimentConfig& c) { return FormatDouble(get(c).learning_rate); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).learning_rate = ParseNumber<double>(v);
               }});
  f.push_back({prefix + "epochs",
               [=](const ExperimentConfig& c) { return std::to_string(get(c).epochs); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).epochs = ParseNumber<int>(v);
               }});
  f.push_back({prefix + "batch",
               [=](const ExperimentConfig& c) { return std::to_string(get(c).batch_size); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).batch_size = ParseNumber<int>(v);
               }});
  f.push_back({prefix + "patience",
               [=](const ExperimentConfig& c) {
                 return std::to_string(get(c).early_stopping.patience);
               },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).early_stopping.patience = ParseNumber<int>(v);
               }});
  f.push_back({prefix + "delta",
               [=](const ExperimentConfig& c) {
                 return FormatDouble(get(c).early_stopping.delta);
               },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).early_stopping.delta = ParseNumber<double>(v);
               }});
  f.push_back({prefix + "weight_decay",
               [=](const ExperimentConfig& c) { return FormatDouble(get(c).weight_decay); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).weight_decay = ParseNumber<double>(v);
               }});
  f.push_back({prefix + "clip",
               [=](const ExperimentConfig& c) { return FormatDouble(get(c).grad_clip_norm); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).grad_clip_norm = ParseNumber<double>(v);
               }});
  f.push_back({prefix + "optimizer",
               [=](const ExperimentConfig& c) { return ToString(get(c).optimizer); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).optimizer = ParseOptimizerKind(v);
               }});
  f.push_back({prefix + "validation",
               [=](const ExperimentConfig& c) {
                 return FormatDouble(get(c).validation_fraction);
               },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).validation_fraction = ParseNumber<double>(v);
               }});
  if (!rollout) return;
  f.push_back({prefix + "rollout",
               [=](const ExperimentConfig& c) { return ToString(get(c).rollout.kind); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).rollout.kind = ParseRolloutKind(v);
               }});
  f.push_back({prefix + "rollout_decay",
               [=](const ExperimentConfig& c) { return FormatDouble(get(c).rollout.decay); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).rollout.decay = ParseNumber<double>(v);
               }});
  f.push_back({prefix + "rollout_floor",
               [=](const ExperimentConfig& c) { return FormatDouble(get(c).rollout.floor); },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).rollout.floor = ParseNumber<double>(v);
               }});
  f.push_back({prefix + "rollout_warmup",
               [=](const ExperimentConfig& c) {
                 return std::to_string(get(c).rollout.warmup_epochs);
               },
               [=](ExperimentConfig& c, const std::string& v) {
                 sel(c).rollout.warmup_epochs = ParseNumber<int>(v);
               }});
}

// Shorthand for plain scalar members.
#define SD_FIELD(KEY, EXPR, TO, FROM)                                      \
  f.push_back({KEY, [](const ExperimentConfig& c) { return TO(c.EXPR); }, \
               [](ExperimentConfig& c, const std::string& v) { c.EXPR = FROM(v); }})

std::string Str(const std::string& s) { return s; }
std::string Num(double v) { return FormatDouble(v); }
std::string Num(int v) { return std::to_string(v); }
std::string Num(std::size_t v) { return std::to_string(v); }
double Dbl(const std::string& s) { return ParseNumber<double>(s); }
int Int(const std::string& s) { return ParseNumber<int>(s); }
std::size_t Size(const std::string& s) { return ParseNumber<std::size_t>(s); }

std::string Widths(const std::vector<std::size_t>& v) { return JoinNumbers(v); }
std::vector<std::size_t> ParseWidths(const std::string& s) {
  return ParseNumbers<std::size_t>(s);
}

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"task", [](const ExperimentConfig& c) { return ToString(c.setup.kind); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.setup.kind = ParseTaskKind(v);
                 }});
    f.push_back({"mode", [](const ExperimentConfig& c) { return ToString(c.mode); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.mode = ParseDeferralMode(v);
                 }});
    SD_FIELD("method", method, Str, Str);
    f.push_back({"methods", [](const ExperimentConfig& c) { return Join(c.options.methods); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.options.methods = SplitList(v);
                 }});
    f.push_back({"seeds", [](const ExperimentConfig& c) { return JoinNumbers(c.seeds); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds = ParseNumbers<std::uint64_t>(v);
                 }});
    SD_FIELD("out", out, Str, Str);
    f.push_back({"phi", [](const ExperimentConfig& c) { return ToString(c.options.token.phi); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.options.token.phi = ParsePhiKind(v);
                 }});
    f.push_back({"psi", [](const ExperimentConfig& c) { return ToString(c.options.onetime.psi); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.options.onetime.psi = ParsePsiKind(v);
                 }});
    f.push_back({"candidates",
                 [](const ExperimentConfig& c) {
                   return c.options.candidate_size == 0
                              ? std::string("full")
                              : std::to_string(c.options.candidate_size);
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.options.candidate_size = v == "full" ? 0 : Int(v);
                 }});
    f.push_back({"eval_mode", [](const ExperimentConfig& c) { return ToString(c.options.eval_mode); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.options.eval_mode = ParseEvalMode(v);
                 }});
    f.push_back({"confidence",
                 [](const ExperimentConfig& c) {
                   return c.options.confidence ? ToString(*c.options.confidence)
                                               : std::string("auto");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "auto") {
                     c.options.confidence.reset();
                   } else {
                     c.options.confidence = ParseConfidenceKind(v);
                   }
                 }});
    SD_FIELD("chow.alpha", options.chow_alpha, Num, Dbl);

    SD_FIELD("tsp.n", setup.tsp.n, Num, Size);
    SD_FIELD("tsp.train", setup.tsp.train, Num, Size);
    SD_FIELD("tsp.test", setup.tsp.test, Num, Size);
    SD_FIELD("tsp.alpha1", setup.tsp.alpha1, Num, Dbl);
    SD_FIELD("tsp.exact", setup.tsp.exact, Bool, ParseBool);
    SD_FIELD("mwp.train", setup.mwp.train, Num, Size);
    SD_FIELD("mwp.test", setup.mwp.test, Num, Size);
    SD_FIELD("mwp.sigma_scale", setup.mwp.sigma_scale, Num, Dbl);
    SD_FIELD("mwp.alpha1", setup.mwp.alpha1, OptionalDouble, ParseOptionalDouble);
    SD_FIELD("mwp.bootstrap", setup.mwp.bootstrap, Num, Int);
    f.push_back({"mwp.csv",
                 [](const ExperimentConfig& c) {
                   return c.setup.mwp.csv ? c.setup.mwp.csv->string() : std::string();
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty()) {
                     c.setup.mwp.csv.reset();
                   } else {
                     c.setup.mwp.csv = v;
                   }
                 }});
    SD_FIELD("mwp.csv_header", setup.mwp.csv_header, Bool, ParseBool);
    SD_FIELD("text.vocab", setup.text.vocab, Num, Int);
    SD_FIELD("text.length", setup.text.length, Num, Int);
    SD_FIELD("text.train", setup.text.train, Num, Size);
    SD_FIELD("text.test", setup.text.test, Num, Size);
    SD_FIELD("text.temperature", setup.text.temperature, Num, Dbl);
    SD_FIELD("text.smoothing", setup.text.smoothing, Num, Dbl);
    SD_FIELD("text.alpha1", setup.text.alpha1, OptionalDouble, ParseOptionalDouble);

    SD_FIELD("token.hidden", options.token_spec.hidden, Widths, ParseWidths);
    SD_FIELD("token.dropout", options.token_spec.dropout_rate, Num, Dbl);
    SD_FIELD("token.recurrent", options.token_spec.recurrent, Bool, ParseBool);
    SD_FIELD("token.state_dim", options.token_spec.state_dim, Num, Size);
    SD_FIELD("onetime.hidden", options.onetime_spec.hidden, Widths, ParseWidths);
    SD_FIELD("onetime.dropout", options.onetime_spec.dropout_rate, Num, Dbl);
    SD_FIELD("onetime.clamp", options.onetime_spec.score_clamp, Num, Dbl);

    AddTrainFields(f, "train.token.",
                   [](ExperimentConfig& c) -> TrainConfig& { return c.options.token; },
                   true);
    AddTrainFields(f, "train.onetime.",
                   [](ExperimentConfig& c) -> TrainConfig& { return c.options.onetime; },
                   false);
    AddTrainFields(f, "train.whole.",
                   [](ExperimentConfig& c) -> TrainConfig& { return c.options.whole; },
                   false);

    f.push_back({"sweep.kind", [](const ExperimentConfig& c) { return ToString(c.sweep); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.sweep = ParseSweepKind(v);
                 }});
    f.push_back({"sweep.sizes", [](const ExperimentConfig& c) { return JoinNumbers(c.sweep_sizes); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.sweep_sizes = ParseNumbers<int>(v);
                 }});
    f.push_back({"sweep.alphas", [](const ExperimentConfig& c) { return JoinNumbers(c.sweep_alphas); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.sweep_alphas = ParseNumbers<double>(v);
                 }});
    SD_FIELD("sweep.matrix", sweep_matrix, Str, Str);
    SD_FIELD("verify.samples", verify_samples, Num, Int);
    return f;
  }();
  return fields;
}

#undef SD_FIELD

const Field* FindField(const std::string& key) {
  for (const Field& f : Fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

// Applies `key = value` lines to `config`; `where` prefixes messages.
void ApplyLines(ExperimentConfig& config, const std::string& text,
                bool require_schema, const std::string& where) {
  std::set<std::string> seen;
  bool schema = false;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string at = where + "line " + std::to_string(number) + ": ";
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorKind::kConfig, at + "expected 'key = value'");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      Fail(ErrorKind::kConfig, at + "duplicate key '" + key + "'");
    }
    if (key == "schema") {
      if (value != std::to_string(kConfigSchema)) {
        Fail(ErrorKind::kConfig, at + "unsupported schema '" + value + "'");
      }
      schema = true;
      continue;
    }
    const Field* f = FindField(key);
    if (!f) Fail(ErrorKind::kConfig, at + "unknown key '" + key + "'");
    try {
      f->set(config, value);
    } catch (const Error& e) {
      Fail(ErrorKind::kConfig, at + key + ": " + e.what());
    }
  }
  if (require_schema && !schema) {
    Fail(ErrorKind::kConfig, where + "missing 'schema = " +
                                 std::to_string(kConfigSchema) + "'");
  }
}

}  // namespace

std::string ToString(DeferralMode mode) {
  switch (mode) {
    case DeferralMode::kToken: return "token";
    case DeferralMode::kOnetime: return "onetime";
    case DeferralMode::kWhole: return "whole";
  }
  return "token";
}

DeferralMode ParseDeferralMode(const std::string& name) {
  if (name == "token") return DeferralMode::kToken;
  if (name == "onetime") return DeferralMode::kOnetime;
  if (name == "whole") return DeferralMode::kWhole;
  Fail(ErrorKind::kConfig, "unknown deferral mode '" + name + "'");
}

std::string ToString(SweepKind kind) {
  switch (kind) {
    case SweepKind::kMethods: return "methods";
    case SweepKind::kJ: return "j";
    case SweepKind::kAlpha: return "alpha";
    case SweepKind::kRollout: return "rollout";
    case SweepKind::kMatrix: return "matrix";
  }
  return "methods";
}

SweepKind ParseSweepKind(const std::string& name) {
  for (SweepKind k : {SweepKind::kMethods, SweepKind::kJ, SweepKind::kAlpha,
                      SweepKind::kRollout, SweepKind::kMatrix}) {
    if (ToString(k) == name) return k;
  }
  Fail(ErrorKind::kConfig, "unknown sweep kind '" + name + "'");
}

std::string ExperimentConfig::Method() const {
  if (!method.empty()) return method;
  switch (mode) {
    case DeferralMode::kToken: return kTokenwiseModel;
    case DeferralMode::kOnetime: return kOneTimeModel;
    case DeferralMode::kWhole: return kWholeModelEmbed;
  }
  return kTokenwiseModel;
}

ExperimentConfig ParseConfig(const std::string& text) {
  ExperimentConfig c;
  ApplyLines(c, text, true, "");
  return c;
}

ExperimentConfig ReadConfig(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    Fail(ErrorKind::kConfig, "missing config file " + path.string());
  }
  ExperimentConfig c;
  ApplyLines(c, ReadFile(path), true, path.string() + ": ");
  return c;
}

std::string SerializeConfig(const ExperimentConfig& config) {
  std::string out = "schema = " + std::to_string(kConfigSchema) + "\n";
  for (const Field& f : Fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::string ConfigHash(const ExperimentConfig& config) {
  ExperimentConfig keyed = config;
  keyed.out.clear();
  keyed.seeds.clear();
  return Sha1Hex(SerializeConfig(keyed));
}

void ValidateConfig(const ExperimentConfig& c) {
  const TaskKind task = c.setup.kind;
  const std::string method = c.Method();
  CheckMethod(task, method);
  const bool token = method.rfind("Tokenwise", 0) == 0;
  const bool onetime = method.rfind("OneTime", 0) == 0;
  const bool whole = IsWholeMethod(method);
  if ((token && c.mode != DeferralMode::kToken) ||
      (onetime && c.mode != DeferralMode::kOnetime) ||
      (whole && c.mode != DeferralMode::kWhole)) {
    Fail(ErrorKind::kConfig, "method " + method + " is not a " +
                                 ToString(c.mode) + "-level method");
  }
  for (const std::string& m : c.options.methods) CheckMethod(task, m);
  if (c.options.confidence == ConfidenceKind::kEntropy && task == TaskKind::kMwp) {
    Fail(ErrorKind::kConfig, "entropy confidence needs a finite vocabulary");
  }
  if (c.seeds.empty()) Fail(ErrorKind::kConfig, "at least one seed is required");
  const int length = TaskLength(c.setup);
  if (c.options.candidate_size != 0 &&
      (c.options.candidate_size < 2 || c.options.candidate_size > length + 1)) {
    Fail(ErrorKind::kConfig, "candidates must be 'full' or in [2, L + 1]");
  }
  if (task == TaskKind::kTsp && c.setup.tsp.exact && c.setup.tsp.n > 12) {
    Fail(ErrorKind::kConfig, "exact TSP completion needs tsp.n <= 12");
  }
  if (task == TaskKind::kMwp && c.setup.mwp.csv &&
      !std::filesystem::exists(*c.setup.mwp.csv)) {
    Fail(ErrorKind::kConfig, "missing MWP series " + c.setup.mwp.csv->string());
  }
  if (c.verify_samples < 1) Fail(ErrorKind::kConfig, "verify.samples must be >= 1");
}

std::vector<MatrixEntry> ReadConfigMatrix(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    Fail(ErrorKind::kConfig, "missing config matrix " + path.string());
  }
  const std::string text = ReadFile(path);
  std::istringstream in(text);
  std::string line;
  std::string base_text;
  std::vector<std::pair<std::string, std::string>> sections;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string body = line;
    const auto hash = body.find('#');
    if (hash != std::string::npos) body.erase(hash);
    body = Trim(body);
    if (body.empty()) continue;
    if (body.front() == '[' && body.back() == ']') {
      sections.emplace_back(Trim(body.substr(1, body.size() - 2)), "");
      continue;
    }
    if (sections.empty()) {
      const auto eq = body.find('=');
      if (eq == std::string::npos || Trim(body.substr(0, eq)) != "base") {
        Fail(ErrorKind::kConfig, path.string() + ": line " +
                                     std::to_string(number) +
                                     ": expected 'base = PATH' before sections");
      }
      std::filesystem::path base = Trim(body.substr(eq + 1));
      if (base.is_relative()) base = path.parent_path() / base;
      base_text = ReadFile(base);
      continue;
    }
    sections.back().second += body + "\n";
  }
  if (base_text.empty()) Fail(ErrorKind::kConfig, path.string() + ": no base config");
  if (sections.empty()) Fail(ErrorKind::kConfig, path.string() + ": no sections");
  std::vector<MatrixEntry> out;
  std::set<std::string> names;
  for (const auto& [name, body] : sections) {
    if (name.empty() || !names.insert(name).second) {
      Fail(ErrorKind::kConfig, path.string() + ": bad or repeated section '" + name + "'");
    }
    ExperimentConfig c = ParseConfig(base_text);
    ApplyLines(c, body, false, path.string() + " [" + name + "]: ");
    out.push_back({name, std::move(c)});
  }
  return out;
}

}  // namespace seqdefer
