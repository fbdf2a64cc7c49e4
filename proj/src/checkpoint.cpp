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

#include "seqdefer/checkpoint.hpp"

#include "seqdefer/trace_io.hpp"

namespace seqdefer {

namespace {

using nlohmann::json;

json ParamsToJson(const ad::ParamSet& params) {
  json shapes = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    shapes.push_back({{"name", params[i].name},
                      {"rows", params[i].rows},
                      {"cols", params[i].cols}});
  }
  return {{"tensors", shapes}, {"values", params.FlatValues()}};
}

void ParamsFromJson(const json& j, ad::ParamSet& params) {
  const json& shapes = j.at("tensors");
  if (shapes.size() != params.size()) {
    Fail(ErrorKind::kData, "checkpoint tensor count does not match its spec");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (shapes[i].at("rows").get<std::size_t>() != params[i].rows ||
        shapes[i].at("cols").get<std::size_t>() != params[i].cols) {
      Fail(ErrorKind::kData, "checkpoint tensor " + params[i].name +
                                 " has the wrong shape");
    }
  }
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != params.ParameterCount()) {
    Fail(ErrorKind::kData, "checkpoint weight count does not match its spec");
  }
  params.SetFlatValues(values);
}

json Envelope(const std::string& kind, const TrainConfig& config) {
  return {{"version", kModelVersion},
          {"kind", kind},
          {"seed", config.seed},
          {"train_config", TrainConfigToJson(config)}};
}

void ExpectKind(const json& j, const std::string& kind) {
  const std::string got = CheckpointKind(j);
  if (got != kind) {
    Fail(ErrorKind::kData, "expected a " + kind + " checkpoint, found " + got);
  }
}

}  // namespace

json TrainConfigToJson(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"patience", c.early_stopping.patience},
          {"delta", c.early_stopping.delta},
          {"weight_decay", c.weight_decay},
          {"grad_clip_norm", c.grad_clip_norm},
          {"seed", c.seed},
          {"rollout", ToString(c.rollout.kind)},
          {"rollout_decay", c.rollout.decay},
          {"rollout_floor", c.rollout.floor},
          {"rollout_warmup", c.rollout.warmup_epochs},
          {"phi", ToString(c.phi)},
          {"psi", ToString(c.psi)},
          {"optimizer", ToString(c.optimizer)},
          {"validation_fraction", c.validation_fraction}};
}

TrainConfig TrainConfigFromJson(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.early_stopping.patience = j.at("patience").get<int>();
  c.early_stopping.delta = j.at("delta").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.rollout.kind = ParseRolloutKind(j.at("rollout").get<std::string>());
  c.rollout.decay = j.at("rollout_decay").get<double>();
  c.rollout.floor = j.at("rollout_floor").get<double>();
  c.rollout.warmup_epochs = j.at("rollout_warmup").get<int>();
  c.phi = ParsePhiKind(j.at("phi").get<std::string>());
  c.psi = ParsePsiKind(j.at("psi").get<std::string>());
  c.optimizer = ParseOptimizerKind(j.at("optimizer").get<std::string>());
  c.validation_fraction = j.at("validation_fraction").get<double>();
  return c;
}

json ScalerToJson(const FeatureScaler& s) {
  return {{"mean", s.mean}, {"inv_std", s.inv_std}};
}

FeatureScaler ScalerFromJson(const json& j) {
  FeatureScaler s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.inv_std = j.at("inv_std").get<std::vector<double>>();
  if (s.mean.size() != s.inv_std.size()) {
    Fail(ErrorKind::kData, "scaler columns disagree in length");
  }
  return s;
}

json TokenModelToJson(const TokenRejectorModel& model,
                      const TrainConfig& config) {
  json doc = Envelope("token", config);
  const TokenRejectorSpec& s = model.spec();
  doc["spec"] = {{"feature_dim", s.feature_dim},
                 {"hidden", s.hidden},
                 {"dropout_rate", s.dropout_rate},
                 {"recurrent", s.recurrent},
                 {"state_dim", s.state_dim},
                 {"init_seed", model.init_seed()}};
  doc["scaler"] = ScalerToJson(model.scaler());
  doc["weights"] = ParamsToJson(model.params());
  return doc;
}

TokenRejectorModel TokenModelFromJson(const json& j) {
  try {
    ExpectKind(j, "token");
    const json& js = j.at("spec");
    TokenRejectorSpec s;
    s.feature_dim = js.at("feature_dim").get<std::size_t>();
    s.hidden = js.at("hidden").get<std::vector<std::size_t>>();
    s.dropout_rate = js.at("dropout_rate").get<double>();
    s.recurrent = js.at("recurrent").get<bool>();
    s.state_dim = js.at("state_dim").get<std::size_t>();
    TokenRejectorModel m(s, js.at("init_seed").get<std::uint64_t>());
    m.scaler() = ScalerFromJson(j.at("scaler"));
    ParamsFromJson(j.at("weights"), m.params());
    return m;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed token checkpoint: ") + e.what());
  }
}

json OnetimeModelToJson(const OneTimeModel& model, const TrainConfig& config) {
  json doc = Envelope("onetime", config);
  const OnetimeSpec& s = model.spec();
  doc["spec"] = {{"summary_dim", s.summary_dim},
                 {"hidden", s.hidden},
                 {"dropout_rate", s.dropout_rate},
                 {"score_clamp", s.score_clamp},
                 {"init_seed", model.init_seed()},
                 {"length", model.candidates().length()},
                 {"candidates", model.candidates().positions()}};
  doc["scaler"] = ScalerToJson(model.scaler());
  doc["weights"] = ParamsToJson(model.params());
  return doc;
}

OneTimeModel OnetimeModelFromJson(const json& j) {
  try {
    ExpectKind(j, "onetime");
    const json& js = j.at("spec");
    OnetimeSpec s;
    s.summary_dim = js.at("summary_dim").get<std::size_t>();
    s.hidden = js.at("hidden").get<std::vector<std::size_t>>();
    s.dropout_rate = js.at("dropout_rate").get<double>();
    s.score_clamp = js.at("score_clamp").get<double>();
    CandidateSet cands(js.at("candidates").get<std::vector<int>>(),
                       js.at("length").get<int>());
    OneTimeModel m(s, std::move(cands), js.at("init_seed").get<std::uint64_t>());
    m.scaler() = ScalerFromJson(j.at("scaler"));
    ParamsFromJson(j.at("weights"), m.params());
    return m;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData,
         std::string("malformed one-time checkpoint: ") + e.what());
  }
}

json WholeModelToJson(const WholeEmbedModel& model, const TrainConfig& config) {
  json doc = Envelope("whole", config);
  doc["scaler"] = ScalerToJson(model.scaler);
  doc["weights"] = model.weights;
  doc["bias"] = model.bias;
  return doc;
}

WholeEmbedModel WholeModelFromJson(const json& j) {
  try {
    ExpectKind(j, "whole");
    WholeEmbedModel m;
    m.scaler = ScalerFromJson(j.at("scaler"));
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    if (m.weights.size() != m.scaler.mean.size()) {
      Fail(ErrorKind::kData, "whole-sequence weights disagree with the scaler");
    }
    return m;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed whole checkpoint: ") + e.what());
  }
}

std::string CheckpointKind(const json& j) {
  if (!j.is_object() || j.value("version", "") != kModelVersion) {
    Fail(ErrorKind::kData, "checkpoint is not tagged model/v1");
  }
  return j.at("kind").get<std::string>();
}

json ReadCheckpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    Fail(ErrorKind::kIo, "missing checkpoint " + path.string());
  }
  try {
    json doc = json::parse(ReadFile(path));
    CheckpointKind(doc);
    return doc;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, path.string() + ": " + e.what());
  }
}

void WriteCheckpoint(const std::filesystem::path& path, const json& doc) {
  WriteFile(path, doc.dump() + "\n");
}

}  // namespace seqdefer
