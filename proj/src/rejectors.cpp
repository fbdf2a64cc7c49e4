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

#include "seqdefer/rejectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace seqdefer {

// ---------------------------------------------------------------------------
// Building blocks

Mlp::Mlp(const MlpSpec& spec, ad::ParamSet& params, const std::string& prefix)
    : spec_(spec) {
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    Fail(ErrorKind::kParameter, "MLP dimensions must be positive");
  }
  if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0) {
    Fail(ErrorKind::kParameter, "dropout rate must lie in [0, 1)");
  }
  std::size_t in = spec.input_dim;
  std::vector<std::size_t> widths = spec.hidden;
  widths.push_back(spec.output_dim);
  for (std::size_t k = 0; k < widths.size(); ++k) {
    if (widths[k] == 0) Fail(ErrorKind::kParameter, "zero-width layer");
    const std::string tag = prefix + ".layer" + std::to_string(k);
    weights_.push_back(params.Add(tag + ".weight", widths[k], in));
    biases_.push_back(params.Add(tag + ".bias", widths[k], 1));
    in = widths[k];
  }
}

void Mlp::Initialize(ad::ParamSet& params, Rng& rng) const {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    ad::Tensor& w = params[weights_[k]];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& v : w.value) v = rng.Uniform(-bound, bound);
    std::fill(params[biases_[k]].value.begin(), params[biases_[k]].value.end(),
              0.0);
  }
}

ad::Var Mlp::Forward(ad::Tape& tape, ad::Var x,
                     std::vector<Rng>* dropout) const {
  ad::Var h = x;
  const std::size_t last = weights_.size() - 1;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    h = tape.Affine(weights_[k], biases_[k], h);
    if (k == last) break;
    h = tape.Relu(h);
    if (dropout != nullptr && spec_.dropout_rate > 0.0) {
      Rng& rng = (*dropout)[k];
      const double keep = 1.0 - spec_.dropout_rate;
      std::vector<double> mask(tape.Value(h).size());
      for (double& m : mask) m = rng.Bernoulli(keep) ? 1.0 / keep : 0.0;
      h = tape.Mask(h, std::move(mask));
    }
  }
  return h;
}

FeatureScaler FeatureScaler::Identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

FeatureScaler FeatureScaler::Fit(const std::vector<std::vector<double>>& rows,
                                 std::size_t dim) {
  FeatureScaler s = Identity(dim);
  if (rows.empty()) return s;
  const double n = static_cast<double>(rows.size());
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < dim; ++c) s.mean[c] += row[c] / n;
  }
  std::vector<double> var(dim, 0.0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = row[c] - s.mean[c];
      var[c] += d * d / n;
    }
  }
  for (std::size_t c = 0; c < dim; ++c) {
    s.inv_std[c] = var[c] > 1e-24 ? 1.0 / std::sqrt(var[c]) : 1.0;
  }
  return s;
}

std::vector<double> FeatureScaler::Apply(std::span<const double> x) const {
  if (x.size() != mean.size()) {
    Fail(ErrorKind::kShape, "feature dimension does not match the model");
  }
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    out[c] = (x[c] - mean[c]) * inv_std[c];
  }
  return out;
}

std::string ToString(OptimizerKind kind) {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd";
}

OptimizerKind ParseOptimizerKind(const std::string& name) {
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "sgd") return OptimizerKind::kSgd;
  Fail(ErrorKind::kConfig, "unknown optimizer '" + name + "'");
}

TrainConfig DefaultOnetimeConfig() {
  TrainConfig c;
  c.learning_rate = 5e-4;
  c.epochs = 200;
  c.early_stopping = {20, 1e-4};
  c.weight_decay = 0.005;
  c.grad_clip_norm = 1.0;
  return c;
}

TrainConfig DefaultTokenConfig() {
  TrainConfig c;
  c.learning_rate = 5e-4;
  c.epochs = 100;
  c.early_stopping = {7, 1e-4};
  c.weight_decay = 0.001;
  c.grad_clip_norm = 1.0;
  c.rollout = RolloutMode::FreeRunning();
  return c;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate,
                     double weight_decay)
    : kind_(kind), lr_(learning_rate), wd_(weight_decay) {
  if (!(learning_rate > 0.0)) {
    Fail(ErrorKind::kParameter, "learning rate must be positive");
  }
  if (weight_decay < 0.0) {
    Fail(ErrorKind::kParameter, "weight decay must be nonnegative");
  }
}

void Optimizer::Step(ad::ParamSet& params) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++step_;
  if (kind_ == OptimizerKind::kAdamW && m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.size(), 0.0);
      v_.emplace_back(params[i].value.size(), 0.0);
    }
  }
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor& t = params[i];
    for (std::size_t k = 0; k < t.value.size(); ++k) {
      const double g = t.grad[k];
      double update = g;
      if (kind_ == OptimizerKind::kAdamW) {
        m_[i][k] = kBeta1 * m_[i][k] + (1.0 - kBeta1) * g;
        v_[i][k] = kBeta2 * v_[i][k] + (1.0 - kBeta2) * g * g;
        update = (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + kEps);
      }
      t.value[k] -= lr_ * (update + wd_ * t.value[k]);
    }
  }
}

double ClipGradNorm(ad::ParamSet& params, double max_norm) {
  const double norm = params.GradNorm();
  if (max_norm > 0.0 && norm > max_norm) params.ScaleGrad(max_norm / norm);
  return norm;
}

namespace {

std::vector<Rng> DropoutStreams(std::uint64_t seed, std::size_t count) {
  std::vector<Rng> streams;
  for (std::size_t k = 0; k < count; ++k) {
    streams.emplace_back(DeriveSeed(seed, 100 + k));
  }
  return streams;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

Split SplitIndices(std::size_t n, double fraction, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.Below(i)]);
  }
  Split s;
  std::size_t nval = n >= 5 ? static_cast<std::size_t>(std::ceil(fraction * n))
                            : 0;
  nval = std::min(nval, n - 1);
  s.val.assign(idx.begin(), idx.begin() + nval);
  s.train.assign(idx.begin() + nval, idx.end());
  return s;
}

void Shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.Below(i)]);
  }
}

void CheckConfig(const TrainConfig& config) {
  if (config.epochs < 0) Fail(ErrorKind::kParameter, "epochs must be >= 0");
  if (config.batch_size < 1) {
    Fail(ErrorKind::kParameter, "batch size must be positive");
  }
  if (!(config.learning_rate > 0.0)) {
    Fail(ErrorKind::kParameter, "learning rate must be positive");
  }
  if (config.early_stopping.patience < 1) {
    Fail(ErrorKind::kParameter, "patience must be positive");
  }
  if (config.validation_fraction < 0.0 || config.validation_fraction >= 1.0) {
    Fail(ErrorKind::kParameter, "validation fraction must lie in [0, 1)");
  }
}

// Early-stopping bookkeeping shared by both trainers.
class EarlyStopper {
 public:
  explicit EarlyStopper(EarlyStopping rule) : rule_(rule) {}

  // Returns true when training should stop.
  bool Update(int epoch, double val, const ad::ParamSet& params,
              TrainingLog& log) {
    log.val_loss.push_back(val);
    if (val < best_ - rule_.delta) {
      best_ = val;
      best_params_ = params.FlatValues();
      log.best_epoch = epoch;
      wait_ = 0;
    } else {
      ++wait_;
    }
    log.best_val.push_back(best_);
    return wait_ >= rule_.patience;
  }

  void Restore(ad::ParamSet& params) const {
    if (!best_params_.empty()) params.SetFlatValues(best_params_);
  }

 private:
  EarlyStopping rule_;
  double best_ = std::numeric_limits<double>::infinity();
  std::vector<double> best_params_;
  int wait_ = 0;
};

void CheckFinite(double loss, int epoch) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "non-finite training loss at epoch " << epoch
       << "; lower the learning rate or check the trace costs";
    Fail(ErrorKind::kNumeric, os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Token-level rejector

TokenRejectorModel::TokenRejectorModel(const TokenRejectorSpec& spec,
                                       std::uint64_t init_seed)
    : spec_(spec),
      init_seed_(init_seed),
      scaler_(FeatureScaler::Identity(spec.feature_dim)) {
  if (spec.feature_dim == 0) {
    Fail(ErrorKind::kParameter, "token rejector needs at least one feature");
  }
  const std::size_t step_in = spec.feature_dim + 1;  // + previous decision
  std::size_t trunk_in = step_in;
  if (spec.recurrent) {
    if (spec.state_dim == 0) {
      Fail(ErrorKind::kParameter, "recurrent state width must be positive");
    }
    state_weight_ =
        params_.Add("state.weight", spec.state_dim, step_in + spec.state_dim);
    state_bias_ = params_.Add("state.bias", spec.state_dim, 1);
    trunk_in += spec.state_dim;
  }
  trunk_ = Mlp({trunk_in, spec.hidden, spec.dropout_rate, 1}, params_, "trunk");
  Rng rng(init_seed);
  if (spec.recurrent) {
    ad::Tensor& w = params_[state_weight_];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& v : w.value) v = rng.Uniform(-bound, bound);
  }
  trunk_.Initialize(params_, rng);
}

TokenRejectorModel::State TokenRejectorModel::InitialState() const {
  return State{std::vector<double>(spec_.recurrent ? spec_.state_dim : 0, 0.0),
               0.0};
}

ad::Var TokenRejectorModel::InitialHidden(ad::Tape& tape) const {
  const std::vector<double> zeros(spec_.recurrent ? spec_.state_dim : 0, 0.0);
  return tape.Input(zeros);
}

TokenRejectorModel::StepOutput TokenRejectorModel::ForwardStep(
    ad::Tape& tape, std::span<const double> features, ad::Var hidden,
    double prev_decision, std::vector<Rng>* dropout) const {
  std::vector<double> in = scaler_.Apply(features);
  in.push_back(prev_decision);
  ad::Var x = tape.Input(in);
  ad::Var next_hidden = hidden;
  if (spec_.recurrent) {
    next_hidden =
        tape.Tanh(tape.Affine(state_weight_, state_bias_, tape.Concat(x, hidden)));
    x = tape.Concat(x, next_hidden);
  }
  return {trunk_.Forward(tape, x, dropout), next_hidden};
}

double TokenRejectorModel::Score(std::span<const double> features,
                                 State& state) const {
  ad::ParamSet& params = const_cast<ad::ParamSet&>(params_);
  ad::Tape tape(params);
  ad::Var hidden = tape.Input(state.hidden);
  StepOutput out =
      ForwardStep(tape, features, hidden, state.prev_decision, nullptr);
  state.hidden = tape.Value(out.hidden);
  return tape.Scalar(out.score);
}

namespace {

double DefaultTeacherProb(const RolloutMode& mode) {
  return mode.TeacherProbability(0);
}

bool ChooseExpert(const StepRecord& rec, double score, double teacher_prob,
                  Rng& rng) {
  const bool oracle = rec.model_loss >= rec.expert_cost;
  const bool own = score >= 0.0;
  if (teacher_prob >= 1.0) return oracle;
  if (teacher_prob <= 0.0) return own;
  return rng.Bernoulli(teacher_prob) ? oracle : own;
}

// Records one trace's rollout on `tape`, seeds d loss / d r scaled by
// `weight`, and returns the per-trace surrogate loss.
double RecordTokenTrace(const TokenRejectorModel& model, ad::Tape& tape,
                        const Trace& trace, const RolloutEnv& env,
                        PhiKind phi, double teacher_prob, double weight,
                        Rng& coin, std::vector<Rng>* dropout) {
  const int length = trace.length();
  std::vector<Label> context;
  context.reserve(length);
  ad::Var hidden = model.InitialHidden(tape);
  double prev = 0.0;
  double loss = 0.0;
  for (int j = 1; j <= length; ++j) {
    const StepRecord rec = env.Step(trace, context);
    auto out = model.ForwardStep(tape, rec.features, hidden, prev, dropout);
    const double r = tape.Scalar(out.score);
    loss += TokenStepSurrogate(phi, rec.model_loss, rec.expert_cost, r) / length;
    tape.SeedGradient(out.score, weight / length *
                                     TokenStepSurrogateDerivative(
                                         phi, rec.model_loss, rec.expert_cost, r));
    const bool expert = ChooseExpert(rec, r, teacher_prob, coin);
    context.push_back(expert ? rec.expert_pred : rec.model_pred);
    prev = expert ? 1.0 : 0.0;
    hidden = out.hidden;
  }
  return loss;
}

}  // namespace

TokenForwardResult TokenForward(const TokenRejectorModel& model,
                                const Trace& trace, const RolloutMode& mode,
                                const RolloutEnv& env, Rng& rng,
                                double teacher_prob) {
  if (teacher_prob < 0.0) teacher_prob = DefaultTeacherProb(mode);
  TokenForwardResult result;
  TokenRejectorModel::State state = model.InitialState();
  for (int j = 1; j <= trace.length(); ++j) {
    StepRecord rec = env.Step(trace, result.context);
    if (rec.features.size() != model.spec().feature_dim) {
      Fail(ErrorKind::kShape, "trace feature dimension does not match model");
    }
    const double r = model.Score(rec.features, state);
    const bool expert = ChooseExpert(rec, r, teacher_prob, rng);
    state.prev_decision = expert ? 1.0 : 0.0;
    result.scores.push_back(r);
    result.decisions.push_back(expert ? 1 : 0);
    result.context.push_back(expert ? rec.expert_pred : rec.model_pred);
    result.steps.push_back(std::move(rec));
  }
  return result;
}

double TokenObjective(const TokenRejectorModel& model,
                      std::span<const Trace> batch, const RolloutEnv& env,
                      const RolloutMode& mode, PhiKind phi) {
  if (batch.empty()) return 0.0;
  const double teacher_prob =
      mode.kind == RolloutKind::kTeacherForced ? 1.0 : 0.0;
  Rng unused(0);
  double total = 0.0;
  for (const Trace& trace : batch) {
    TokenForwardResult f = TokenForward(model, trace, mode, env, unused,
                                        teacher_prob);
    double loss = 0.0;
    for (std::size_t j = 0; j < f.steps.size(); ++j) {
      loss += TokenStepSurrogate(phi, f.steps[j].model_loss,
                                 f.steps[j].expert_cost, f.scores[j]);
    }
    total += loss / static_cast<double>(f.steps.size());
  }
  return total / static_cast<double>(batch.size());
}

TokenTrainResult TrainTokenRejector(std::span<const Trace> traces,
                                    const RolloutEnv& env,
                                    const TokenRejectorSpec& spec,
                                    const TrainConfig& config) {
  if (traces.empty()) Fail(ErrorKind::kEmptyInput, "no training traces");
  CheckConfig(config);
  TokenTrainResult result{TokenRejectorModel(spec, DeriveSeed(config.seed, 1)),
                          {}};
  TokenRejectorModel& model = result.model;
  TrainingLog& log = result.log;

  std::vector<std::vector<double>> rows;
  for (const Trace& t : traces) {
    for (const StepRecord& s : t.steps) rows.push_back(s.features);
  }
  model.scaler() = FeatureScaler::Fit(rows, spec.feature_dim);
  if (config.epochs == 0) return result;

  Rng split_rng(DeriveSeed(config.seed, 2));
  Rng coin(DeriveSeed(config.seed, 3));
  Split split = SplitIndices(traces.size(), config.validation_fraction,
                             split_rng);
  std::vector<Trace> val;
  for (std::size_t i : split.val) val.push_back(traces[i]);
  std::vector<Rng> dropout =
      DropoutStreams(config.seed, model.DropoutStreams());
  const RolloutMode val_mode =
      config.rollout.kind == RolloutKind::kTeacherForced
          ? RolloutMode::TeacherForced()
          : RolloutMode::FreeRunning();

  Optimizer opt(config.optimizer, config.learning_rate, config.weight_decay);
  EarlyStopper stopper(config.early_stopping);
  ad::Tape tape(model.params());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double p = config.rollout.TeacherProbability(epoch);
    log.teacher_prob.push_back(p);
    Shuffle(split.train, split_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < split.train.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(split.train.size(), start + config.batch_size);
      const double weight = 1.0 / static_cast<double>(stop - start);
      model.params().ZeroGrad();
      for (std::size_t k = start; k < stop; ++k) {
        tape.Clear();
        epoch_loss += RecordTokenTrace(model, tape, traces[split.train[k]], env,
                                       config.phi, p, weight, coin, &dropout);
        tape.Backward();
      }
      CheckFinite(epoch_loss, epoch);
      ClipGradNorm(model.params(), config.grad_clip_norm);
      opt.Step(model.params());
    }
    epoch_loss /= static_cast<double>(split.train.size());
    log.train_loss.push_back(epoch_loss);
    const double val_loss =
        val.empty() ? epoch_loss
                    : TokenObjective(model, val, env, val_mode, config.phi);
    CheckFinite(val_loss, epoch);
    log.epochs_run = epoch + 1;
    if (stopper.Update(epoch, val_loss, model.params(), log)) {
      log.early_stopped = true;
      break;
    }
  }
  stopper.Restore(model.params());
  return result;
}

// ---------------------------------------------------------------------------
// One-time rejector

OneTimeModel::OneTimeModel(const OnetimeSpec& spec, CandidateSet candidates,
                           std::uint64_t init_seed)
    : spec_(spec),
      candidates_(std::move(candidates)),
      init_seed_(init_seed),
      scaler_(FeatureScaler::Identity(spec.summary_dim)) {
  if (spec.summary_dim == 0) {
    Fail(ErrorKind::kParameter, "one-time rejector needs summary features");
  }
  if (!(spec.score_clamp > 0.0)) {
    Fail(ErrorKind::kParameter, "score clamp M must be positive");
  }
  trunk_ = Mlp({spec.summary_dim, spec.hidden, spec.dropout_rate,
                candidates_.size()},
               params_, "trunk");
  Rng rng(init_seed);
  trunk_.Initialize(params_, rng);
}

ad::Var OneTimeModel::Forward(ad::Tape& tape, std::span<const double> summary,
                              std::vector<Rng>* dropout) const {
  ad::Var x = tape.Input(scaler_.Apply(summary));
  ad::Var raw = trunk_.Forward(tape, x, dropout);
  // M * tanh(raw / M) keeps every score strictly inside (-M, M).
  const double m = spec_.score_clamp;
  return tape.Scale(tape.Tanh(tape.Scale(raw, 1.0 / m)), m);
}

std::vector<double> OneTimeModel::Scores(const Trace& trace) const {
  ad::ParamSet& params = const_cast<ad::ParamSet&>(params_);
  ad::Tape tape(params);
  return tape.Value(Forward(tape, trace.x_summary, nullptr));
}

int OneTimeModel::Decide(const Trace& trace) const {
  const std::vector<double> g = Scores(trace);
  return candidates_[ArgmaxPreferLast(g)];
}

double OnetimeObjective(const OneTimeModel& model,
                        std::span<const Trace> batch, PsiKind psi) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const Trace& t : batch) {
    const std::vector<double> w = OnetimeWeights(t, model.candidates());
    total += WeightedPsi(psi, w, model.Scores(t));
  }
  return total / static_cast<double>(batch.size());
}

OnetimeTrainResult TrainOnetimeRejector(std::span<const Trace> traces,
                                        const CandidateSet& candidates,
                                        const OnetimeSpec& spec,
                                        const TrainConfig& config) {
  if (traces.empty()) Fail(ErrorKind::kEmptyInput, "no training traces");
  CheckConfig(config);
  OnetimeTrainResult result{
      OneTimeModel(spec, candidates, DeriveSeed(config.seed, 1)), {}};
  OneTimeModel& model = result.model;
  TrainingLog& log = result.log;

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> weights;
  bool any_weight = false;
  for (const Trace& t : traces) {
    rows.push_back(t.x_summary);
    weights.push_back(OnetimeWeights(t, candidates));
    for (double w : weights.back()) any_weight = any_weight || w > 0.0;
  }
  if (!any_weight) {
    log.warnings.push_back(
        "all realized one-time losses are equal on every trace; surrogate "
        "weights vanish and training cannot move the model");
  }
  model.scaler() = FeatureScaler::Fit(rows, spec.summary_dim);
  if (config.epochs == 0) return result;

  Rng split_rng(DeriveSeed(config.seed, 2));
  Split split = SplitIndices(traces.size(), config.validation_fraction,
                             split_rng);
  std::vector<Trace> val;
  for (std::size_t i : split.val) val.push_back(traces[i]);
  std::vector<Rng> dropout =
      DropoutStreams(config.seed, model.DropoutStreams());

  Optimizer opt(config.optimizer, config.learning_rate, config.weight_decay);
  EarlyStopper stopper(config.early_stopping);
  ad::Tape tape(model.params());
  std::vector<double> grad(candidates.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    log.teacher_prob.push_back(1.0);
    Shuffle(split.train, split_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < split.train.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(split.train.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      model.params().ZeroGrad();
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = split.train[k];
        tape.Clear();
        ad::Var g = model.Forward(tape, traces[i].x_summary, &dropout);
        std::fill(grad.begin(), grad.end(), 0.0);
        epoch_loss += WeightedPsi(config.psi, weights[i], tape.Value(g), grad);
        for (double& v : grad) v *= scale;
        tape.SeedGradient(g, grad);
        tape.Backward();
      }
      CheckFinite(epoch_loss, epoch);
      ClipGradNorm(model.params(), config.grad_clip_norm);
      opt.Step(model.params());
    }
    epoch_loss /= static_cast<double>(split.train.size());
    log.train_loss.push_back(epoch_loss);
    const double val_loss =
        val.empty() ? epoch_loss : OnetimeObjective(model, val, config.psi);
    CheckFinite(val_loss, epoch);
    log.epochs_run = epoch + 1;
    if (stopper.Update(epoch, val_loss, model.params(), log)) {
      log.early_stopped = true;
      break;
    }
  }
  stopper.Restore(model.params());
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checks

namespace {

template <typename Objective>
double CompareWithCentralDifferences(ad::ParamSet& params,
                                     const std::vector<double>& analytic,
                                     Objective objective, double epsilon) {
  std::vector<double> flat = params.FlatValues();
  double worst = 0.0;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double saved = flat[k];
    flat[k] = saved + epsilon;
    params.SetFlatValues(flat);
    const double up = objective();
    flat[k] = saved - epsilon;
    params.SetFlatValues(flat);
    const double down = objective();
    flat[k] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom =
        std::max({std::abs(analytic[k]), std::abs(numeric), kGradCheckFloor});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  params.SetFlatValues(flat);
  return worst;
}

}  // namespace

double GradCheckToken(const TokenRejectorModel& model,
                      std::span<const Trace> batch, const RolloutEnv& env,
                      PhiKind phi, double epsilon) {
  if (!(epsilon > 0.0)) Fail(ErrorKind::kParameter, "epsilon must be > 0");
  if (batch.empty()) return 0.0;
  TokenRejectorModel copy = model;
  copy.params().ZeroGrad();
  ad::Tape tape(copy.params());
  Rng unused(0);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const Trace& t : batch) {
    tape.Clear();
    RecordTokenTrace(copy, tape, t, env, phi, 1.0, weight, unused, nullptr);
    tape.Backward();
  }
  const std::vector<double> analytic = copy.params().FlatGrads();
  const RolloutMode tf = RolloutMode::TeacherForced();
  return CompareWithCentralDifferences(
      copy.params(), analytic,
      [&] { return TokenObjective(copy, batch, env, tf, phi); }, epsilon);
}

double GradCheckOnetime(const OneTimeModel& model,
                        std::span<const Trace> batch, PsiKind psi,
                        double epsilon) {
  if (!(epsilon > 0.0)) Fail(ErrorKind::kParameter, "epsilon must be > 0");
  if (batch.empty()) return 0.0;
  OneTimeModel copy = model;
  copy.params().ZeroGrad();
  ad::Tape tape(copy.params());
  std::vector<double> grad(copy.candidates().size());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Trace& t : batch) {
    tape.Clear();
    ad::Var g = copy.Forward(tape, t.x_summary, nullptr);
    std::fill(grad.begin(), grad.end(), 0.0);
    WeightedPsi(psi, OnetimeWeights(t, copy.candidates()), tape.Value(g), grad);
    for (double& v : grad) v *= scale;
    tape.SeedGradient(g, grad);
    tape.Backward();
  }
  const std::vector<double> analytic = copy.params().FlatGrads();
  return CompareWithCentralDifferences(
      copy.params(), analytic,
      [&] { return OnetimeObjective(copy, batch, psi); }, epsilon);
}

}  // namespace seqdefer
