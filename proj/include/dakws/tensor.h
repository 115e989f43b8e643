// include/dakws/tensor.h

// Copyright 2026  The dakws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DAKWS_TENSOR_H_
#define DAKWS_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dakws {

using Shape = std::vector<int64_t>;

std::string ShapeString(const Shape &shape);
int64_t NumElements(const Shape &shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::string op;
  int64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents.
  std::function<void(Node &)> backward;

  std::vector<T> &Grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Handle to a graph node. Copies share the node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor Zeros(const Shape &shape);
  static Tensor Full(const Shape &shape, T value);
  static Tensor FromData(const Shape &shape, std::vector<T> data);
  // Leaf with requires_grad set.
  static Tensor Param(const Shape &shape, std::vector<T> data);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node_->shape; }
  int64_t dim(int axis) const;
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  std::vector<T> &data() { return node_->value; }
  const std::vector<T> &data() const { return node_->value; }
  // Gradient, zero-filled on first access.
  std::vector<T> &grad() const { return node_->Grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  T item() const;
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const std::string &op() const { return node_->op; }
  int64_t id() const { return node_->id; }

  void ZeroGrad() { node_->grad.clear(); }
  // Reverse-mode sweep from a scalar; gradients accumulate into leaves.
  void Backward() const;
  Tensor Detach() const;
  template <typename U>
  Tensor<U> Cast() const;

  const std::shared_ptr<Node<T>> &node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Graph recording is skipped while a guard is alive on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool previous_;
};
bool GradEnabled();

// Bumped by every stochastic forward (dropout in train mode).
uint64_t StochasticOpCount();

// Builds an op result; `backward` is attached only when a parent needs grad.
template <typename T>
Tensor<T> MakeResult(const std::string &op, const Shape &shape, std::vector<T> value,
                     std::vector<Tensor<T>> parents, std::function<void(Node<T> &)> backward);

template <typename T>
struct ComplexTensor {
  Tensor<T> re, im;
  void Check() const;
};

struct Conv2dOptions {
  int stride_t = 1, stride_f = 1;
  int pad_t = 0;  // left side of time only
  int pad_f = 0;  // both sides of frequency
};

// Elementwise, identical shapes.
template <typename T> Tensor<T> Add(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> Sub(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> Mul(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> Scale(const Tensor<T> &a, T s);
// b has the size of a's last axis.
template <typename T> Tensor<T> AddBias(const Tensor<T> &a, const Tensor<T> &b);
// x [B, T, C] plus e [B, C] repeated over T.
template <typename T> Tensor<T> AddOverTime(const Tensor<T> &x, const Tensor<T> &e);

template <typename T> Tensor<T> MatMul(const Tensor<T> &a, const Tensor<T> &b);
// x [..., in], w [out, in], optional b [out].
template <typename T> Tensor<T> Linear(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b = {});

// x [B, T, F, Cin], w [Cout, kt, kf, Cin], optional b [Cout] -> [B, T', F', Cout].
template <typename T>
Tensor<T> Conv2d(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b, const Conv2dOptions &opt);
// Packed complex input [B, T, F, 2*Cin] (real channels first) -> packed
// output [B, T', F', 2*Cout] with real outputs first.
template <typename T>
Tensor<T> ComplexConv2dPacked(const Tensor<T> &x, const ComplexTensor<T> &w, const ComplexTensor<T> &b,
                              const Conv2dOptions &opt);
template <typename T>
ComplexTensor<T> ComplexConv2d(const ComplexTensor<T> &x, const ComplexTensor<T> &w, const ComplexTensor<T> &b,
                               const Conv2dOptions &opt);
template <typename T> Tensor<T> PackComplex(const ComplexTensor<T> &x);
template <typename T> ComplexTensor<T> UnpackComplex(const Tensor<T> &x);

// x [B, T, C], w [C, k], optional b [C]; y[t] reads x[t + j*dilation - pad_left].
template <typename T>
Tensor<T> DepthwiseConv1d(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b, int dilation, int pad_left);

template <typename T> Tensor<T> Relu(const Tensor<T> &x);
template <typename T> Tensor<T> Sigmoid(const Tensor<T> &x);
template <typename T> Tensor<T> Softmax(const Tensor<T> &x);  // last axis
template <typename T>
Tensor<T> LayerNorm(const Tensor<T> &x, const Tensor<T> &gain, const Tensor<T> &bias, T eps = T(1e-5));
template <typename T>
Tensor<T> Dropout(const Tensor<T> &x, T p, bool train, std::mt19937_64 &rng);
// table [V, D], ids in [0, V) -> [ids.size(), D].
template <typename T> Tensor<T> Embedding(const Tensor<T> &table, const std::vector<int> &ids);

template <typename T> Tensor<T> Sum(const Tensor<T> &x);
template <typename T> Tensor<T> Mean(const Tensor<T> &x);
template <typename T> Tensor<T> Concat(const std::vector<Tensor<T>> &xs, int axis);
template <typename T> Tensor<T> Reshape(const Tensor<T> &x, const Shape &shape);
// Keeps [begin, end) of `axis`.
template <typename T> Tensor<T> Slice(const Tensor<T> &x, int axis, int64_t begin, int64_t end);

// Max relative error of analytic against central-difference gradients over
// up to `samples` coordinates (all of them when fewer). Rejects functions
// that run stochastic ops.
//
// A central difference that moves any relu input across zero does not
// estimate the derivative. Such coordinates are skipped and replaced by the
// next sampled one; `skipped` counts them.
struct GradCheckReport {
  double max_rel_err = 0;
  int checked = 0;
  int skipped = 0;
};

GradCheckReport GradCheckDetailed(const std::function<Tensor<double>()> &f, const std::vector<Tensor<double>> &params,
                                  double eps = 1e-4, int samples = 200, uint64_t seed = 0);
double GradCheck(const std::function<Tensor<double>()> &f, const std::vector<Tensor<double>> &params,
                 double eps = 1e-4, int samples = 200, uint64_t seed = 0);

}  // namespace dakws

#endif  // DAKWS_TENSOR_H_
