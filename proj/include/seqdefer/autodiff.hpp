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

// Minimal reverse-mode differentiation over dense vector operations.
//
// Parameters live in a ParamSet as row-major tensors with matching gradient
// buffers. A Tape records the forward pass node by node; Backward() walks
// the nodes in reverse creation order and accumulates parameter gradients
// into the ParamSet. Losses are not part of the graph: callers seed the
// output gradient directly with SeedGradient().

#ifndef SEQDEFER_AUTODIFF_HPP_
#define SEQDEFER_AUTODIFF_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace seqdefer::ad {

struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;  // row-major, rows * cols
  std::vector<double> grad;
};

class ParamSet {
 public:
  // Returns the index of a zero-initialized tensor.
  std::size_t Add(std::string name, std::size_t rows, std::size_t cols);

  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t ParameterCount() const;

  void ZeroGrad();
  void ScaleGrad(double factor);
  double GradNorm() const;

  // Flat views in tensor order, row-major within each tensor.
  std::vector<double> FlatValues() const;
  std::vector<double> FlatGrads() const;
  void SetFlatValues(std::span<const double> flat);

 private:
  std::vector<Tensor> tensors_;
};

// Handle to a tape node.
struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  explicit Tape(ParamSet& params) : params_(&params) {}

  Var Input(std::span<const double> values);
  // W x + b with W = params[weight] (rows x cols) and b = params[bias].
  Var Affine(std::size_t weight, std::size_t bias, Var x);
  Var Relu(Var x);
  Var Tanh(Var x);
  Var Scale(Var x, double factor);
  // Elementwise product with a constant mask (dropout).
  Var Mask(Var x, std::vector<double> mask);
  Var Concat(Var a, Var b);

  const std::vector<double>& Value(Var v) const { return nodes_[v.id].value; }
  double Scalar(Var v) const { return nodes_[v.id].value.front(); }

  void SeedGradient(Var v, std::span<const double> grad);
  void SeedGradient(Var v, double grad);

  // Accumulates into ParamSet gradients. Node gradients are consumed.
  void Backward();
  void Clear() { nodes_.clear(); }
  std::size_t NodeCount() const { return nodes_.size(); }

 private:
  enum class Op { kInput, kAffine, kRelu, kTanh, kScale, kMask, kConcat };

  struct Node {
    Op op = Op::kInput;
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
    double factor = 1.0;
    std::vector<double> aux{};
    std::vector<double> value{};
    std::vector<double> grad{};
  };

  Var Push(Node node);

  ParamSet* params_;
  std::vector<Node> nodes_;
};

// Row-major W (rows x cols) times x plus b, written to `out`.
void AffineKernel(std::span<const double> w, std::span<const double> b,
                  std::span<const double> x, std::span<double> out);

}  // namespace seqdefer::ad

#endif  // SEQDEFER_AUTODIFF_HPP_
