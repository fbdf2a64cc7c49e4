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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "seqdefer/tasks.hpp"
#include "seqdefer/trace_io.hpp"

namespace seqdefer {

namespace {

// Lagged regression rows: y[i] against lags[i] (most recent first).
struct Design {
  std::vector<std::vector<double>> lags;
  std::vector<double> y;
};

void AppendRows(std::span<const double> values, int order, Design& d) {
  for (std::size_t t = order; t < values.size(); ++t) {
    std::vector<double> row(order);
    for (int k = 0; k < order; ++k) row[k] = values[t - 1 - k];
    d.lags.push_back(std::move(row));
    d.y.push_back(values[t]);
  }
}

// Solves G a = b by Gaussian elimination with partial pivoting.
std::vector<double> Solve(std::vector<std::vector<double>> g,
                          std::vector<double> b) {
  const std::size_t p = b.size();
  double scale = 0.0;
  for (std::size_t i = 0; i < p; ++i) scale = std::max(scale, std::abs(g[i][i]));
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::abs(g[r][c]) > std::abs(g[piv][c])) piv = r;
    }
    if (std::abs(g[piv][c]) <= 1e-12 * scale) {
      Fail(ErrorKind::kFit, "singular AR design matrix (collinear lags)");
    }
    std::swap(g[c], g[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < p; ++r) {
      const double f = g[r][c] / g[c][c];
      for (std::size_t k = c; k < p; ++k) g[r][k] -= f * g[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> a(p);
  for (std::size_t i = p; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < p; ++k) s -= g[i][k] * a[k];
    a[i] = s / g[i][i];
  }
  return a;
}

// Least squares with intercept on centered columns. `solver` is reused for
// bootstrap refits, which share the design.
class ArSolver {
 public:
  ArSolver(const Design& d, int order) : d_(d), order_(order) {
    const double n = static_cast<double>(d.y.size());
    if (d.y.size() <= static_cast<std::size_t>(order)) {
      Fail(ErrorKind::kFit, "too few rows to fit the AR model");
    }
    mean_.assign(order, 0.0);
    for (const auto& row : d.lags) {
      for (int k = 0; k < order; ++k) mean_[k] += row[k] / n;
    }
    gram_.assign(order, std::vector<double>(order, 0.0));
    for (const auto& row : d.lags) {
      for (int a = 0; a < order; ++a) {
        for (int b = 0; b < order; ++b) {
          gram_[a][b] += (row[a] - mean_[a]) * (row[b] - mean_[b]);
        }
      }
    }
    double diag = 0.0;
    for (int k = 0; k < order; ++k) diag = std::max(diag, gram_[k][k]);
    flat_ = diag <= 1e-24 * n;
  }

  std::vector<double> Fit(std::span<const double> y) const {
    const double n = static_cast<double>(y.size());
    double ybar = 0.0;
    for (double v : y) ybar += v / n;
    std::vector<double> coef(order_ + 1, 0.0);
    if (flat_) {
      coef[0] = ybar;
      return coef;
    }
    std::vector<double> cross(order_, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (int k = 0; k < order_; ++k) {
        cross[k] += (d_.lags[i][k] - mean_[k]) * (y[i] - ybar);
      }
    }
    const std::vector<double> a = Solve(gram_, cross);
    coef[0] = ybar;
    for (int k = 0; k < order_; ++k) {
      coef[k + 1] = a[k];
      coef[0] -= a[k] * mean_[k];
    }
    return coef;
  }

 private:
  const Design& d_;
  int order_;
  std::vector<double> mean_;
  std::vector<std::vector<double>> gram_;
  bool flat_ = false;
};

ArModel FitDesign(const Design& d, int order, int bootstrap,
                  std::uint64_t seed) {
  if (order < 1) Fail(ErrorKind::kParameter, "AR order must be >= 1");
  if (bootstrap < 0) Fail(ErrorKind::kParameter, "bootstrap count must be >= 0");
  ArSolver solver(d, order);
  ArModel m;
  m.order = order;
  m.coef = solver.Fit(d.y);
  std::vector<double> fitted(d.y.size());
  std::vector<double> resid(d.y.size());
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    fitted[i] = m.Predict(d.lags[i]);
    resid[i] = d.y[i] - fitted[i];
  }
  std::vector<double> ystar(d.y.size());
  for (int b = 0; b < bootstrap; ++b) {
    Rng rng(DeriveSeed(seed, static_cast<std::uint64_t>(b)));
    for (std::size_t i = 0; i < ystar.size(); ++i) {
      ystar[i] = fitted[i] + resid[rng.Below(resid.size())];
    }
    m.bootstrap.push_back(solver.Fit(ystar));
  }
  return m;
}

double Rms(std::span<const double> diffs) {
  if (diffs.empty()) return 0.0;
  double s = 0.0;
  for (double d : diffs) s += d * d;
  return std::sqrt(s / static_cast<double>(diffs.size()));
}

// RMS first difference over the last `window` values.
double DiffRms(std::span<const double> values, std::size_t window) {
  const std::size_t start = values.size() > window ? values.size() - window : 0;
  std::vector<double> d;
  for (std::size_t i = start + 1; i < values.size(); ++i) {
    d.push_back(values[i] - values[i - 1]);
  }
  return Rms(d);
}

double Sd(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean) / static_cast<double>(v.size());
  return std::sqrt(var);
}

}  // namespace

std::vector<double> SimulateMwpSeries(std::size_t length, std::uint64_t seed,
                                      const MwpSeriesConfig& c) {
  Rng rng(seed);
  constexpr std::size_t kBurn = 500;
  std::vector<double> x(length + kBurn, 0.0);
  bool high = rng.Bernoulli(0.5);
  for (std::size_t t = 2; t < x.size(); ++t) {
    if (rng.Bernoulli(c.switch_prob)) high = !high;
    const double cycle =
        c.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                               c.period);
    const double sd = high ? c.high_sd : c.low_sd;
    x[t] = c.a1 * x[t - 1] + c.a2 * x[t - 2] + cycle + sd * rng.Normal();
  }
  std::vector<double> out(x.begin() + kBurn, x.end());
  double mean = 0.0;
  for (double v : out) mean += v / static_cast<double>(out.size());
  double sd = Sd(out);
  if (sd <= 0.0) sd = 1.0;
  for (double& v : out) v = (v - mean) / sd;
  return out;
}

std::vector<MwpInstance> WindowsFromSeries(std::span<const double> series,
                                           std::size_t stride) {
  if (stride < 1) Fail(ErrorKind::kParameter, "window stride must be >= 1");
  if (series.size() < static_cast<std::size_t>(kMwpWindow)) {
    Fail(ErrorKind::kData, "series needs at least 18 values for one window");
  }
  std::vector<MwpInstance> out;
  for (std::size_t s = 0; s + kMwpWindow <= series.size(); s += stride) {
    MwpInstance inst;
    inst.history.assign(series.begin() + s, series.begin() + s + kMwpHistory);
    inst.target.assign(series.begin() + s + kMwpHistory,
                       series.begin() + s + kMwpWindow);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<MwpInstance> GenMwp(std::size_t count, std::uint64_t seed,
                                const MwpSeriesConfig& config) {
  const auto series = SimulateMwpSeries(count * kMwpWindow, seed, config);
  auto windows = WindowsFromSeries(series, kMwpWindow);
  windows.resize(count);
  return windows;
}

std::vector<double> ParseSeriesCsv(const std::string& text, bool header) {
  std::istringstream in(text);
  std::string line;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (header && row == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    const std::string cell = line.substr(first, last - first + 1);
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
        !std::isfinite(v)) {
      Fail(ErrorKind::kData, "row " + std::to_string(row) +
                                 ": non-numeric value '" + cell + "'");
    }
    values.push_back(v);
  }
  if (values.size() < static_cast<std::size_t>(kMwpWindow)) {
    Fail(ErrorKind::kData, "series CSV has " + std::to_string(values.size()) +
                               " values; need at least 18");
  }
  return values;
}

std::vector<double> ReadSeriesCsv(const std::filesystem::path& path,
                                  bool header) {
  try {
    return ParseSeriesCsv(ReadFile(path), header);
  } catch (const Error& e) {
    Fail(e.kind(), path.string() + ": " + e.what());
  }
}

double ArModel::Predict(std::span<const double> lags) const {
  double y = coef[0];
  for (int k = 0; k < order; ++k) y += coef[k + 1] * lags[k];
  return y;
}

double ArModel::McVariance(std::span<const double> lags) const {
  if (bootstrap.size() < 2) return 0.0;
  std::vector<double> preds;
  for (const auto& c : bootstrap) {
    double y = c[0];
    for (int k = 0; k < order; ++k) y += c[k + 1] * lags[k];
    preds.push_back(y);
  }
  const double n = static_cast<double>(preds.size());
  double mean = 0.0;
  for (double p : preds) mean += p / n;
  double var = 0.0;
  for (double p : preds) var += (p - mean) * (p - mean) / (n - 1.0);
  return var;
}

ArModel FitAr(std::span<const MwpInstance> windows, int order, int bootstrap,
              std::uint64_t seed) {
  Design d;
  for (const MwpInstance& w : windows) {
    std::vector<double> v = w.history;
    v.insert(v.end(), w.target.begin(), w.target.end());
    AppendRows(v, order, d);
  }
  return FitDesign(d, order, bootstrap, seed);
}

ArModel FitArSeries(std::span<const double> series, int order, int bootstrap,
                    std::uint64_t seed) {
  Design d;
  AppendRows(series, order, d);
  return FitDesign(d, order, bootstrap, seed);
}

Label MwpExpert(double y, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) Fail(ErrorKind::kParameter, "expert sigma must be >= 0");
  return y + sigma * rng.Normal();
}

TaskBounds MwpBounds(double alpha1) {
  TaskBounds b;
  b.label_kind = LabelKind::kScalar;
  b.vocab_size = 0;
  b.length = kMwpHorizon;
  b.feature_dim = kMwpFeatureDim;
  b.summary_dim = kMwpSummaryDim;
  b.loss_max = 100.0;  // squared error on a z-scored series
  b.cost_min = alpha1 / kMwpHorizon;
  b.cost_max = b.loss_max + b.cost_min;
  return b;
}

StepRecord MwpEnv::Step(const Trace& trace,
                        std::span<const Label> context) const {
  const std::size_t j = context.size() + 1;
  if (j > trace.steps.size()) {
    Fail(ErrorKind::kPosition, "rollout ran past the forecast horizon");
  }
  std::vector<double> values = trace.inputs;
  for (const Label& l : context) values.push_back(LabelValue(l));
  std::vector<double> lags(model_.order);
  for (int k = 0; k < model_.order; ++k) {
    lags[k] = values[values.size() - 1 - k];
  }
  const double y = LabelValue(trace.target[j - 1]);
  const double e = LabelValue(trace.steps[j - 1].expert_pred);
  StepRecord s;
  s.j = static_cast<int>(j);
  const double pred = model_.Predict(lags);
  s.model_pred = pred;
  s.expert_pred = e;
  s.model_loss = (pred - y) * (pred - y);
  s.expert_loss = (e - y) * (e - y);
  s.expert_cost = s.expert_loss + price_;
  s.conf_score = model_.McVariance(lags);
  const std::span<const double> hist(trace.inputs);
  s.features = {static_cast<double>(j) / kMwpHorizon,
                pred,
                s.conf_score,
                std::log(s.conf_score + 1e-8),
                lags[0],
                model_.order > 1 ? lags[0] - lags[1] : 0.0,
                DiffRms(values, 6),
                DiffRms(hist, hist.size()),
                std::abs(pred - lags[0]),
                Sd(hist)};
  return s;
}

Trace MwpTrace(const MwpInstance& inst, const std::string& id,
               const ArModel& model, double sigma, const CostSchedule& schedule,
               std::uint64_t expert_seed) {
  if (inst.history.size() != static_cast<std::size_t>(kMwpHistory) ||
      inst.target.size() != static_cast<std::size_t>(kMwpHorizon)) {
    Fail(ErrorKind::kShape, "MWP windows hold 12 + 6 values");
  }
  const MwpEnv env(model, schedule.PerToken());
  Trace t;
  t.instance_id = id;
  t.inputs = inst.history;
  Rng rng(expert_seed);
  for (int j = 1; j <= kMwpHorizon; ++j) {
    t.target.emplace_back(inst.target[j - 1]);
    StepRecord placeholder;
    placeholder.j = j;
    placeholder.expert_pred = MwpExpert(inst.target[j - 1], sigma, rng);
    t.steps.push_back(std::move(placeholder));
  }
  std::vector<Label> context;
  for (int j = 1; j <= kMwpHorizon; ++j) {
    t.steps[j - 1] = env.Step(t, context);
    context.push_back(t.steps[j - 1].model_pred);
  }
  FillOnetimeFromEnv(t, env, schedule);

  t.x_summary = inst.history;
  t.x_summary.push_back(DiffRms(inst.history, inst.history.size()));
  t.x_summary.push_back(DiffRms(inst.history, 6));
  for (const StepRecord& s : t.steps) t.x_summary.push_back(LabelValue(s.model_pred));
  for (const StepRecord& s : t.steps) t.x_summary.push_back(s.conf_score);
  return t;
}

MwpSplit GenMwpSplit(const MwpConfig& config) {
  MwpSplit split;
  if (config.csv) {
    const auto series = ReadSeriesCsv(*config.csv, config.csv_header);
    split.series_sd = Sd(series);
    auto windows = WindowsFromSeries(series, 1);
    if (windows.size() < 2) {
      Fail(ErrorKind::kData, "CSV series yields fewer than two windows");
    }
    const std::size_t n_test =
        std::max<std::size_t>(1, std::min(config.test, windows.size() / 5));
    std::size_t train_end = windows.size() - n_test;
    // Skip the windows that overlap the first test window.
    if (train_end > static_cast<std::size_t>(kMwpWindow)) {
      train_end -= kMwpWindow - 1;
    }
    split.train.assign(windows.begin(), windows.begin() + train_end);
    split.test.assign(windows.end() - n_test, windows.end());
  } else {
    split.train = GenMwp(config.train, DeriveSeed(config.seed, 21));
    split.test = GenMwp(config.test, DeriveSeed(config.seed, 22));
  }
  return split;
}

TaskDataset TraceMwpSplit(const MwpSplit& split, const MwpConfig& config) {
  if (config.sigma_scale < 0.0) {
    Fail(ErrorKind::kParameter, "sigma scale must be >= 0");
  }
  const auto& train = split.train;
  const auto& test = split.test;
  if (train.empty()) Fail(ErrorKind::kData, "no MWP training windows");

  TaskDataset data;
  data.kind = TaskKind::kMwp;
  const ArModel model = FitAr(train, 2, config.bootstrap,
                              DeriveSeed(config.seed, 23));
  data.predictor = ArModelToJson(model);
  const double sigma = config.sigma_scale * split.series_sd;
  data.predictor["sigma"] = sigma;
  data.alpha1 = 0.0;
  data.bounds = MwpBounds(0.0);
  const CostSchedule free(0.0, kMwpHorizon);
  data.train.resize(train.size());
  data.test.resize(test.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < train.size(); ++i) {
    data.train[i] = MwpTrace(train[i], "mwp-train-" + std::to_string(i), model,
                             sigma, free, DeriveSeed(config.seed, 1000000 + i));
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < test.size(); ++i) {
    data.test[i] = MwpTrace(test[i], "mwp-test-" + std::to_string(i), model,
                            sigma, free, DeriveSeed(config.seed, 2000000 + i));
  }
  const double alpha1 =
      config.alpha1 ? *config.alpha1 : RecommendAlpha1(data.train);
  ApplySchedule(data, alpha1);
  return data;
}

TaskDataset BuildMwpDataset(const MwpConfig& config) {
  if (config.sigma_scale < 0.0) {
    Fail(ErrorKind::kParameter, "sigma scale must be >= 0");
  }
  return TraceMwpSplit(GenMwpSplit(config), config);
}

nlohmann::json ArModelToJson(const ArModel& model) {
  return {{"kind", "ar"},
          {"order", model.order},
          {"coef", model.coef},
          {"bootstrap", model.bootstrap}};
}

ArModel ArModelFromJson(const nlohmann::json& j) {
  ArModel m;
  m.order = j.at("order").get<int>();
  m.coef = j.at("coef").get<std::vector<double>>();
  m.bootstrap = j.at("bootstrap").get<std::vector<std::vector<double>>>();
  if (m.coef.size() != static_cast<std::size_t>(m.order) + 1) {
    Fail(ErrorKind::kData, "AR coefficient count does not match its order");
  }
  return m;
}

}  // namespace seqdefer
