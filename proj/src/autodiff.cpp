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

#include "seqdefer/autodiff.hpp"

#include <cmath>

#include "seqdefer/core.hpp"

namespace seqdefer::ad {

std::size_t ParamSet::Add(std::string name, std::size_t rows,
                          std::size_t cols) {
  Tensor t;
  t.name = std::move(name);
  t.rows = rows;
  t.cols = cols;
  t.value.assign(rows * cols, 0.0);
  t.grad.assign(rows * cols, 0.0);
  tensors_.push_back(std::move(t));
  return tensors_.size() - 1;
}

std::size_t ParamSet::ParameterCount() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.value.size();
  return n;
}

void ParamSet::ZeroGrad() {
  for (Tensor& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

void ParamSet::ScaleGrad(double factor) {
  for (Tensor& t : tensors_) {
    for (double& g : t.grad) g *= factor;
  }
}

double ParamSet::GradNorm() const {
  double sq = 0.0;
  for (const Tensor& t : tensors_) {
    for (double g : t.grad) sq += g * g;
  }
  return std::sqrt(sq);
}

std::vector<double> ParamSet::FlatValues() const {
  std::vector<double> flat;
  flat.reserve(ParameterCount());
  for (const Tensor& t : tensors_) {
    flat.insert(flat.end(), t.value.begin(), t.value.end());
  }
  return flat;
}

std::vector<double> ParamSet::FlatGrads() const {
  std::vector<double> flat;
  flat.reserve(ParameterCount());
  for (const Tensor& t : tensors_) {
    flat.insert(flat.end(), t.grad.begin(), t.grad.end());
  }
  return flat;
}

void ParamSet::SetFlatValues(std::span<const double> flat) {
  if (flat.size() != ParameterCount()) {
    Fail(ErrorKind::kShape, "flat parameter vector has the wrong length");
  }
  std::size_t pos = 0;
  for (Tensor& t : tensors_) {
    std::copy(flat.begin() + pos, flat.begin() + pos + t.value.size(),
              t.value.begin());
    pos += t.value.size();
  }
}

void AffineKernel(std::span<const double> w, std::span<const double> b,
                  std::span<const double> x, std::span<double> out) {
  const std::size_t rows = out.size();
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

Var Tape::Push(Node node) {
  node.grad.assign(node.value.size(), 0.0);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::Input(std::span<const double> values) {
  Node n{.op = Op::kInput};
  n.value.assign(values.begin(), values.end());
  return Push(std::move(n));
}

Var Tape::Affine(std::size_t weight, std::size_t bias, Var x) {
  const Tensor& w = (*params_)[weight];
  const Tensor& b = (*params_)[bias];
  const std::vector<double>& in = nodes_[x.id].value;
  if (w.cols != in.size() || b.value.size() != w.rows) {
    Fail(ErrorKind::kShape, "affine input dimension mismatch in " + w.name);
  }
  Node n{.op = Op::kAffine, .a = x.id, .weight = weight, .bias = bias};
  n.value.resize(w.rows);
  AffineKernel(w.value, b.value, in, n.value);
  return Push(std::move(n));
}

Var Tape::Relu(Var x) {
  Node n{.op = Op::kRelu, .a = x.id};
  n.value = nodes_[x.id].value;
  for (double& v : n.value) v = v > 0.0 ? v : 0.0;
  return Push(std::move(n));
}

Var Tape::Tanh(Var x) {
  Node n{.op = Op::kTanh, .a = x.id};
  n.value = nodes_[x.id].value;
  for (double& v : n.value) v = std::tanh(v);
  return Push(std::move(n));
}

Var Tape::Scale(Var x, double factor) {
  Node n{.op = Op::kScale, .a = x.id, .factor = factor};
  n.value = nodes_[x.id].value;
  for (double& v : n.value) v *= factor;
  return Push(std::move(n));
}

Var Tape::Mask(Var x, std::vector<double> mask) {
  if (mask.size() != nodes_[x.id].value.size()) {
    Fail(ErrorKind::kShape, "mask dimension mismatch");
  }
  Node n{.op = Op::kMask, .a = x.id};
  n.value = nodes_[x.id].value;
  for (std::size_t i = 0; i < mask.size(); ++i) n.value[i] *= mask[i];
  n.aux = std::move(mask);
  return Push(std::move(n));
}

Var Tape::Concat(Var a, Var b) {
  Node n{.op = Op::kConcat, .a = a.id, .b = b.id};
  n.value = nodes_[a.id].value;
  const std::vector<double>& tail = nodes_[b.id].value;
  n.value.insert(n.value.end(), tail.begin(), tail.end());
  return Push(std::move(n));
}

void Tape::SeedGradient(Var v, std::span<const double> grad) {
  std::vector<double>& g = nodes_[v.id].grad;
  if (grad.size() != g.size()) Fail(ErrorKind::kShape, "seed gradient size");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
}

void Tape::SeedGradient(Var v, double grad) {
  const double one[] = {grad};
  SeedGradient(v, one);
}

void Tape::Backward() {
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    Node& n = nodes_[id];
    const std::vector<double>& dy = n.grad;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kAffine: {
        Tensor& w = (*params_)[n.weight];
        Tensor& b = (*params_)[n.bias];
        Node& in = nodes_[n.a];
        const std::size_t cols = w.cols;
        for (std::size_t r = 0; r < w.rows; ++r) {
          const double g = dy[r];
          if (g == 0.0) continue;
          b.grad[r] += g;
          double* wg = w.grad.data() + r * cols;
          const double* wv = w.value.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            wg[c] += g * in.value[c];
            in.grad[c] += g * wv[c];
          }
        }
        break;
      }
      case Op::kRelu: {
        Node& in = nodes_[n.a];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          if (in.value[i] > 0.0) in.grad[i] += dy[i];
        }
        break;
      }
      case Op::kTanh: {
        Node& in = nodes_[n.a];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          in.grad[i] += dy[i] * (1.0 - n.value[i] * n.value[i]);
        }
        break;
      }
      case Op::kScale: {
        Node& in = nodes_[n.a];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          in.grad[i] += dy[i] * n.factor;
        }
        break;
      }
      case Op::kMask: {
        Node& in = nodes_[n.a];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          in.grad[i] += dy[i] * n.aux[i];
        }
        break;
      }
      case Op::kConcat: {
        Node& left = nodes_[n.a];
        Node& right = nodes_[n.b];
        const std::size_t split = left.value.size();
        for (std::size_t i = 0; i < split; ++i) left.grad[i] += dy[i];
        for (std::size_t i = split; i < dy.size(); ++i) {
          right.grad[i - split] += dy[i];
        }
        break;
      }
    }
  }
  // Gradients are single-use.
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

}  // namespace seqdefer::ad
