// src/tensor.cc

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

#include "dakws/tensor.h"

#include <cblas.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace dakws {

namespace {

thread_local bool g_grad_enabled = true;
thread_local uint64_t g_stochastic_ops = 0;
// Hash of relu sign patterns, folded only while a gradient check runs.
thread_local bool g_track_kinks = false;
thread_local uint64_t g_kink_hash = 0;
std::atomic<int64_t> g_next_id{1};

void Gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float *a, int lda, const float *b, int ldb,
          float beta, float *c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}
void Gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double *a, int lda, const double *b, int ldb,
          double beta, double *c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

[[noreturn]] void ShapeError(const std::string &op, const Shape &a, const Shape &b) {
  throw std::invalid_argument(op + ": shape mismatch " + ShapeString(a) + " vs " + ShapeString(b));
}

int NormAxis(int axis, int ndim, const std::string &op) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) throw std::invalid_argument(op + ": axis out of range");
  return axis;
}

template <typename T>
void Accumulate(std::vector<T> &dst, const std::vector<T> &src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string ShapeString(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

int64_t NumElements(const Shape &shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in " + ShapeString(shape));
    n *= d;
  }
  return n;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool GradEnabled() { return g_grad_enabled; }
uint64_t StochasticOpCount() { return g_stochastic_ops; }

template <typename T>
Tensor<T> Tensor<T>::FromData(const Shape &shape, std::vector<T> data) {
  if (static_cast<int64_t>(data.size()) != NumElements(shape))
    throw std::invalid_argument("Tensor: " + std::to_string(data.size()) + " values for shape " + ShapeString(shape));
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(data);
  node->op = "leaf";
  node->id = g_next_id++;
  return Tensor(node);
}

template <typename T>
Tensor<T> Tensor<T>::Zeros(const Shape &shape) {
  return FromData(shape, std::vector<T>(NumElements(shape), T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::Full(const Shape &shape, T value) {
  return FromData(shape, std::vector<T>(NumElements(shape), value));
}

template <typename T>
Tensor<T> Tensor<T>::Param(const Shape &shape, std::vector<T> data) {
  Tensor t = FromData(shape, std::move(data));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
int64_t Tensor<T>::dim(int axis) const {
  return node_->shape[NormAxis(axis, ndim(), "dim")];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor of shape " + ShapeString(shape()) + " is not scalar");
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::Detach() const {
  return FromData(shape(), data());
}

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::Cast() const {
  Tensor<U> out = Tensor<U>::FromData(shape(), std::vector<U>(data().begin(), data().end()));
  out.set_requires_grad(requires_grad());
  return out;
}

template <typename T>
void Tensor<T>::Backward() const {
  if (numel() != 1) throw std::invalid_argument("Backward: loss must be scalar, got shape " + ShapeString(shape()));
  if (!requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T> *> order;
  std::unordered_set<Node<T> *> seen;
  std::vector<std::pair<Node<T> *, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto &[n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T> *p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->Grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T> *n = *it;
    if (!n->backward || n->grad.empty()) continue;
    n->backward(*n);
    // Interior gradients are not needed once propagated.
    std::vector<T>().swap(n->grad);
  }
}

template <typename T>
Tensor<T> MakeResult(const std::string &op, const Shape &shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                     std::function<void(Node<T> &)> backward) {
  Tensor<T> out = Tensor<T>::FromData(shape, std::move(value));
  auto &node = *out.node();
  node.op = op;
  if (!g_grad_enabled) return out;
  bool needs = false;
  for (const auto &p : parents) needs = needs || (p.defined() && p.requires_grad());
  if (!needs) return out;
  node.requires_grad = true;
  for (const auto &p : parents)
    if (p.defined()) node.parents.push_back(p.node());
  node.backward = std::move(backward);
  return out;
}

template <typename T>
void ComplexTensor<T>::Check() const {
  if (!re.defined() || !im.defined()) throw std::invalid_argument("ComplexTensor: undefined part");
  if (re.shape() != im.shape()) ShapeError("ComplexTensor", re.shape(), im.shape());
}

// ---------------------------------------------------------------------------
// Elementwise.

template <typename T>
Tensor<T> Add(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.shape() != b.shape()) ShapeError("Add", a.shape(), b.shape());
  std::vector<T> y(a.data());
  Accumulate(y, b.data());
  auto na = a.node(), nb = b.node();
  return MakeResult<T>("add", a.shape(), std::move(y), {a, b}, [na, nb](Node<T> &o) {
    if (na->requires_grad) Accumulate(na->Grad(), o.grad);
    if (nb->requires_grad) Accumulate(nb->Grad(), o.grad);
  });
}

template <typename T>
Tensor<T> Sub(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.shape() != b.shape()) ShapeError("Sub", a.shape(), b.shape());
  std::vector<T> y(a.data());
  for (size_t i = 0; i < y.size(); ++i) y[i] -= b.data()[i];
  auto na = a.node(), nb = b.node();
  return MakeResult<T>("sub", a.shape(), std::move(y), {a, b}, [na, nb](Node<T> &o) {
    if (na->requires_grad) Accumulate(na->Grad(), o.grad);
    if (nb->requires_grad) {
      auto &g = nb->Grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> Mul(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.shape() != b.shape()) ShapeError("Mul", a.shape(), b.shape());
  std::vector<T> y(a.data());
  for (size_t i = 0; i < y.size(); ++i) y[i] *= b.data()[i];
  auto na = a.node(), nb = b.node();
  return MakeResult<T>("mul", a.shape(), std::move(y), {a, b}, [na, nb](Node<T> &o) {
    if (na->requires_grad) {
      auto &g = na->Grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * nb->value[i];
    }
    if (nb->requires_grad) {
      auto &g = nb->Grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * na->value[i];
    }
  });
}

template <typename T>
Tensor<T> Scale(const Tensor<T> &a, T s) {
  std::vector<T> y(a.data());
  for (auto &v : y) v *= s;
  auto na = a.node();
  return MakeResult<T>("scale", a.shape(), std::move(y), {a}, [na, s](Node<T> &o) {
    auto &g = na->Grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += s * o.grad[i];
  });
}

template <typename T>
Tensor<T> AddBias(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.ndim() < 1 || b.ndim() != 1 || b.dim(0) != a.dim(-1)) ShapeError("AddBias", a.shape(), b.shape());
  const int64_t c = b.dim(0), rows = a.numel() / std::max<int64_t>(c, 1);
  std::vector<T> y(a.data());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) y[r * c + j] += b.data()[j];
  auto na = a.node(), nb = b.node();
  return MakeResult<T>("add_bias", a.shape(), std::move(y), {a, b}, [na, nb, rows, c](Node<T> &o) {
    if (na->requires_grad) Accumulate(na->Grad(), o.grad);
    if (nb->requires_grad) {
      auto &g = nb->Grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) g[j] += o.grad[r * c + j];
    }
  });
}

template <typename T>
Tensor<T> AddOverTime(const Tensor<T> &x, const Tensor<T> &e) {
  if (x.ndim() != 3 || e.ndim() != 2 || e.dim(0) != x.dim(0) || e.dim(1) != x.dim(2))
    ShapeError("AddOverTime", x.shape(), e.shape());
  const int64_t bs = x.dim(0), t = x.dim(1), c = x.dim(2);
  std::vector<T> y(x.data());
  for (int64_t b = 0; b < bs; ++b)
    for (int64_t i = 0; i < t; ++i)
      for (int64_t j = 0; j < c; ++j) y[(b * t + i) * c + j] += e.data()[b * c + j];
  auto nx = x.node(), ne = e.node();
  return MakeResult<T>("add_over_time", x.shape(), std::move(y), {x, e}, [nx, ne, bs, t, c](Node<T> &o) {
    if (nx->requires_grad) Accumulate(nx->Grad(), o.grad);
    if (ne->requires_grad) {
      auto &g = ne->Grad();
      for (int64_t b = 0; b < bs; ++b)
        for (int64_t i = 0; i < t; ++i)
          for (int64_t j = 0; j < c; ++j) g[b * c + j] += o.grad[(b * t + i) * c + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix products.

template <typename T>
Tensor<T> MatMul(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) ShapeError("MatMul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> y(size_t(m) * n);
  if (m && n && k) Gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), y.data(), n);
  auto na = a.node(), nb = b.node();
  return MakeResult<T>("matmul", {m, n}, std::move(y), {a, b}, [na, nb, m, k, n](Node<T> &o) {
    if (!m || !n || !k) return;
    if (na->requires_grad)
      Gemm(false, true, m, k, n, T(1), o.grad.data(), n, nb->value.data(), n, T(1), na->Grad().data(), k);
    if (nb->requires_grad)
      Gemm(true, false, k, n, m, T(1), na->value.data(), k, o.grad.data(), n, T(1), nb->Grad().data(), n);
  });
}

template <typename T>
Tensor<T> Linear(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b) {
  if (x.ndim() < 1 || w.ndim() != 2 || w.dim(1) != x.dim(-1)) ShapeError("Linear", x.shape(), w.shape());
  const int in = w.dim(1), out = w.dim(0), rows = x.numel() / std::max(in, 1);
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != out)) ShapeError("Linear bias", w.shape(), b.shape());
  Shape shape = x.shape();
  shape.back() = out;
  std::vector<T> y(size_t(rows) * out, T(0));
  if (b.defined())
    for (int r = 0; r < rows; ++r) std::copy(b.data().begin(), b.data().end(), y.begin() + size_t(r) * out);
  if (rows && in && out)
    Gemm(false, true, rows, out, in, T(1), x.data().data(), in, w.data().data(), in, b.defined() ? T(1) : T(0),
         y.data(), out);
  auto nx = x.node(), nw = w.node();
  auto nb = b.defined() ? b.node() : nullptr;
  return MakeResult<T>("linear", shape, std::move(y), {x, w, b}, [nx, nw, nb, rows, in, out](Node<T> &o) {
    if (!rows || !in || !out) return;
    if (nx->requires_grad)
      Gemm(false, false, rows, in, out, T(1), o.grad.data(), out, nw->value.data(), in, T(1), nx->Grad().data(), in);
    if (nw->requires_grad)
      Gemm(true, false, out, in, rows, T(1), o.grad.data(), out, nx->value.data(), in, T(1), nw->Grad().data(), in);
    if (nb && nb->requires_grad) {
      auto &g = nb->Grad();
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < out; ++j) g[j] += o.grad[size_t(r) * out + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions.

template <typename T>
Tensor<T> Conv2d(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b, const Conv2dOptions &opt) {
  if (x.ndim() != 4 || w.ndim() != 4 || w.dim(3) != x.dim(3)) ShapeError("Conv2d", x.shape(), w.shape());
  if (opt.stride_t < 1 || opt.stride_f < 1 || opt.pad_t < 0 || opt.pad_f < 0)
    throw std::invalid_argument("Conv2d: invalid stride or padding");
  const int bs = x.dim(0), tin = x.dim(1), fin = x.dim(2), cin = x.dim(3);
  const int cout = w.dim(0), kt = w.dim(1), kf = w.dim(2);
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != cout)) ShapeError("Conv2d bias", w.shape(), b.shape());
  if (tin + opt.pad_t < kt || fin + 2 * opt.pad_f < kf)
    throw std::invalid_argument("Conv2d: input " + ShapeString(x.shape()) + " smaller than kernel " +
                                ShapeString(w.shape()));
  const int tout = (tin + opt.pad_t - kt) / opt.stride_t + 1;
  const int fout = (fin + 2 * opt.pad_f - kf) / opt.stride_f + 1;
  const int k = kt * kf * cin;
  const int rows = bs * tout * fout;

  auto col = std::make_shared<std::vector<T>>(size_t(rows) * k, T(0));
  const T *xd = x.data().data();
  for (int n = 0; n < bs; ++n)
    for (int to = 0; to < tout; ++to)
      for (int fo = 0; fo < fout; ++fo) {
        T *row = col->data() + (size_t(n * tout + to) * fout + fo) * k;
        for (int i = 0; i < kt; ++i) {
          const int ti = to * opt.stride_t + i - opt.pad_t;
          if (ti < 0 || ti >= tin) continue;
          for (int j = 0; j < kf; ++j) {
            const int fi = fo * opt.stride_f + j - opt.pad_f;
            if (fi < 0 || fi >= fin) continue;
            std::memcpy(row + (i * kf + j) * cin, xd + ((size_t(n) * tin + ti) * fin + fi) * cin, sizeof(T) * cin);
          }
        }
      }
  std::vector<T> y(size_t(rows) * cout, T(0));
  if (b.defined())
    for (int r = 0; r < rows; ++r) std::copy(b.data().begin(), b.data().end(), y.begin() + size_t(r) * cout);
  Gemm(false, true, rows, cout, k, T(1), col->data(), k, w.data().data(), k, b.defined() ? T(1) : T(0), y.data(),
       cout);

  auto nx = x.node(), nw = w.node();
  auto nb = b.defined() ? b.node() : nullptr;
  if (!(GradEnabled() && (nx->requires_grad || nw->requires_grad || (nb && nb->requires_grad)))) col.reset();
  return MakeResult<T>(
      "conv2d", {bs, tout, fout, cout}, std::move(y), {x, w, b},
      [=](Node<T> &o) {
        if (nw->requires_grad)
          Gemm(true, false, cout, k, rows, T(1), o.grad.data(), cout, col->data(), k, T(1), nw->Grad().data(), k);
        if (nb && nb->requires_grad) {
          auto &g = nb->Grad();
          for (int r = 0; r < rows; ++r)
            for (int j = 0; j < cout; ++j) g[j] += o.grad[size_t(r) * cout + j];
        }
        if (nx->requires_grad) {
          std::vector<T> dcol(size_t(rows) * k);
          Gemm(false, false, rows, k, cout, T(1), o.grad.data(), cout, nw->value.data(), k, T(0), dcol.data(), k);
          auto &g = nx->Grad();
          for (int n = 0; n < bs; ++n)
            for (int to = 0; to < tout; ++to)
              for (int fo = 0; fo < fout; ++fo) {
                const T *row = dcol.data() + (size_t(n * tout + to) * fout + fo) * k;
                for (int i = 0; i < kt; ++i) {
                  const int ti = to * opt.stride_t + i - opt.pad_t;
                  if (ti < 0 || ti >= tin) continue;
                  for (int j = 0; j < kf; ++j) {
                    const int fi = fo * opt.stride_f + j - opt.pad_f;
                    if (fi < 0 || fi >= fin) continue;
                    T *dst = g.data() + ((size_t(n) * tin + ti) * fin + fi) * cin;
                    const T *src = row + (i * kf + j) * cin;
                    for (int c = 0; c < cin; ++c) dst[c] += src[c];
                  }
                }
              }
        }
      });
}

namespace {

// Real weight of the packed complex convolution:
//   [[Wr, -Wi],
//    [Wi,  Wr]]  (rows: re/im outputs, columns: re/im inputs)
template <typename T>
Tensor<T> ComplexWeight(const Tensor<T> &wr, const Tensor<T> &wi) {
  if (wr.shape() != wi.shape() || wr.ndim() != 4) ShapeError("ComplexConv2d weight", wr.shape(), wi.shape());
  const int64_t cout = wr.dim(0), pos = wr.dim(1) * wr.dim(2), cin = wr.dim(3);
  std::vector<T> w(size_t(4 * cout * pos * cin));
  auto at = [&](int64_t o, int64_t p, int64_t c) -> size_t { return size_t((o * pos + p) * 2 * cin + c); };
  for (int64_t o = 0; o < cout; ++o)
    for (int64_t p = 0; p < pos; ++p)
      for (int64_t c = 0; c < cin; ++c) {
        const T r = wr.data()[(o * pos + p) * cin + c], i = wi.data()[(o * pos + p) * cin + c];
        w[at(o, p, c)] = r;
        w[at(o, p, cin + c)] = -i;
        w[at(cout + o, p, c)] = i;
        w[at(cout + o, p, cin + c)] = r;
      }
  auto nr = wr.node(), ni = wi.node();
  return MakeResult<T>("complex_weight", {2 * cout, wr.dim(1), wr.dim(2), 2 * cin}, std::move(w), {wr, wi},
                       [=](Node<T> &o) {
                         auto g = [&](int64_t oo, int64_t p, int64_t c) {
                           return o.grad[size_t((oo * pos + p) * 2 * cin + c)];
                         };
                         for (int64_t oo = 0; oo < cout; ++oo)
                           for (int64_t p = 0; p < pos; ++p)
                             for (int64_t c = 0; c < cin; ++c) {
                               const size_t idx = size_t((oo * pos + p) * cin + c);
                               if (nr->requires_grad) nr->Grad()[idx] += g(oo, p, c) + g(cout + oo, p, cin + c);
                               if (ni->requires_grad) ni->Grad()[idx] += g(cout + oo, p, c) - g(oo, p, cin + c);
                             }
                       });
}

}  // namespace

template <typename T>
Tensor<T> ComplexConv2dPacked(const Tensor<T> &x, const ComplexTensor<T> &w, const ComplexTensor<T> &b,
                              const Conv2dOptions &opt) {
  w.Check();
  if (x.ndim() != 4 || x.dim(3) != 2 * w.re.dim(3)) ShapeError("ComplexConv2d", x.shape(), w.re.shape());
  Tensor<T> bias;
  if (b.re.defined()) {
    b.Check();
    bias = Concat<T>({b.re, b.im}, 0);
  }
  return Conv2d(x, ComplexWeight(w.re, w.im), bias, opt);
}

template <typename T>
Tensor<T> PackComplex(const ComplexTensor<T> &x) {
  x.Check();
  return Concat<T>({x.re, x.im}, -1);
}

template <typename T>
ComplexTensor<T> UnpackComplex(const Tensor<T> &x) {
  const int64_t c = x.dim(-1);
  if (c % 2) throw std::invalid_argument("UnpackComplex: odd channel count in " + ShapeString(x.shape()));
  return {Slice(x, -1, 0, c / 2), Slice(x, -1, c / 2, c)};
}

template <typename T>
ComplexTensor<T> ComplexConv2d(const ComplexTensor<T> &x, const ComplexTensor<T> &w, const ComplexTensor<T> &b,
                               const Conv2dOptions &opt) {
  return UnpackComplex(ComplexConv2dPacked(PackComplex(x), w, b, opt));
}

template <typename T>
Tensor<T> DepthwiseConv1d(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b, int dilation, int pad_left) {
  if (x.ndim() != 3 || w.ndim() != 2 || w.dim(0) != x.dim(2)) ShapeError("DepthwiseConv1d", x.shape(), w.shape());
  if (dilation < 1 || pad_left < 0) throw std::invalid_argument("DepthwiseConv1d: invalid dilation or padding");
  const int64_t bs = x.dim(0), tin = x.dim(1), c = x.dim(2), k = w.dim(1);
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != c)) ShapeError("DepthwiseConv1d bias", w.shape(), b.shape());
  const int64_t tout = tin + pad_left - (k - 1) * dilation;
  if (tout < 1)
    throw std::invalid_argument("DepthwiseConv1d: input " + ShapeString(x.shape()) + " shorter than receptive field");
  std::vector<T> y(size_t(bs * tout * c), T(0));
  const T *xd = x.data().data(), *wd = w.data().data();
  for (int64_t n = 0; n < bs; ++n)
    for (int64_t t = 0; t < tout; ++t) {
      T *yr = y.data() + (n * tout + t) * c;
      if (b.defined()) std::copy(b.data().begin(), b.data().end(), yr);
      for (int64_t j = 0; j < k; ++j) {
        const int64_t ti = t + j * dilation - pad_left;
        if (ti < 0) continue;
        const T *xr = xd + (n * tin + ti) * c;
        for (int64_t ch = 0; ch < c; ++ch) yr[ch] += wd[ch * k + j] * xr[ch];
      }
    }
  auto nx = x.node(), nw = w.node();
  auto nb = b.defined() ? b.node() : nullptr;
  return MakeResult<T>("depthwise_conv1d", {bs, tout, c}, std::move(y), {x, w, b}, [=](Node<T> &o) {
    T *gx = nx->requires_grad ? nx->Grad().data() : nullptr;
    T *gw = nw->requires_grad ? nw->Grad().data() : nullptr;
    T *gb = nb && nb->requires_grad ? nb->Grad().data() : nullptr;
    for (int64_t n = 0; n < bs; ++n)
      for (int64_t t = 0; t < tout; ++t) {
        const T *gy = o.grad.data() + (n * tout + t) * c;
        if (gb)
          for (int64_t ch = 0; ch < c; ++ch) gb[ch] += gy[ch];
        for (int64_t j = 0; j < k; ++j) {
          const int64_t ti = t + j * dilation - pad_left;
          if (ti < 0) continue;
          const size_t off = size_t((n * tin + ti) * c);
          for (int64_t ch = 0; ch < c; ++ch) {
            if (gx) gx[off + ch] += gy[ch] * nw->value[ch * k + j];
            if (gw) gw[ch * k + j] += gy[ch] * nx->value[off + ch];
          }
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization.

template <typename T>
Tensor<T> Relu(const Tensor<T> &x) {
  std::vector<T> y(x.data());
  for (auto &v : y) v = v > T(0) ? v : T(0);
  if (g_track_kinks)
    for (const T v : y) g_kink_hash = (g_kink_hash ^ uint64_t(v > T(0))) * 0x100000001b3ull;
  auto nx = x.node();
  return MakeResult<T>("relu", x.shape(), std::move(y), {x}, [nx](Node<T> &o) {
    auto &g = nx->Grad();
    // Subgradient at 0 is 0.
    for (size_t i = 0; i < g.size(); ++i)
      if (o.value[i] > T(0)) g[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> Sigmoid(const Tensor<T> &x) {
  std::vector<T> y(x.data());
  for (auto &v : y) {
    if (v >= 0) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  auto nx = x.node();
  return MakeResult<T>("sigmoid", x.shape(), std::move(y), {x}, [nx](Node<T> &o) {
    auto &g = nx->Grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.value[i] * (T(1) - o.value[i]);
  });
}

template <typename T>
Tensor<T> Softmax(const Tensor<T> &x) {
  if (x.ndim() < 1) throw std::invalid_argument("Softmax: scalar input");
  const int64_t c = x.dim(-1), rows = c ? x.numel() / c : 0;
  std::vector<T> y(x.data());
  for (int64_t r = 0; r < rows; ++r) {
    T *p = y.data() + r * c;
    const T mx = *std::max_element(p, p + c);
    T s = 0;
    for (int64_t j = 0; j < c; ++j) s += (p[j] = std::exp(p[j] - mx));
    for (int64_t j = 0; j < c; ++j) p[j] /= s;
  }
  auto nx = x.node();
  return MakeResult<T>("softmax", x.shape(), std::move(y), {x}, [nx, rows, c](Node<T> &o) {
    auto &g = nx->Grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T *p = o.value.data() + r * c, *gy = o.grad.data() + r * c;
      T dot = 0;
      for (int64_t j = 0; j < c; ++j) dot += gy[j] * p[j];
      for (int64_t j = 0; j < c; ++j) g[r * c + j] += p[j] * (gy[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> LayerNorm(const Tensor<T> &x, const Tensor<T> &gain, const Tensor<T> &bias, T eps) {
  if (x.ndim() < 1 || gain.ndim() != 1 || gain.dim(0) != x.dim(-1) || bias.shape() != gain.shape())
    ShapeError("LayerNorm", x.shape(), gain.shape());
  const int64_t d = x.dim(-1), rows = d ? x.numel() / d : 0;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> y(x.numel());
  for (int64_t r = 0; r < rows; ++r) {
    const T *p = x.data().data() + r * d;
    T mean = 0, var = 0;
    for (int64_t j = 0; j < d; ++j) mean += p[j];
    mean /= d;
    for (int64_t j = 0; j < d; ++j) var += (p[j] - mean) * (p[j] - mean);
    var /= d;
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int64_t j = 0; j < d; ++j) {
      const T h = (p[j] - mean) * rs;
      (*xhat)[r * d + j] = h;
      y[r * d + j] = gain.data()[j] * h + bias.data()[j];
    }
  }
  auto nx = x.node(), ng = gain.node(), nb = bias.node();
  return MakeResult<T>("layernorm", x.shape(), std::move(y), {x, gain, bias}, [=](Node<T> &o) {
    std::vector<T> dh(d);
    for (int64_t r = 0; r < rows; ++r) {
      const T *gy = o.grad.data() + r * d, *h = xhat->data() + r * d;
      if (ng->requires_grad)
        for (int64_t j = 0; j < d; ++j) ng->Grad()[j] += gy[j] * h[j];
      if (nb->requires_grad)
        for (int64_t j = 0; j < d; ++j) nb->Grad()[j] += gy[j];
      if (!nx->requires_grad) continue;
      T m1 = 0, m2 = 0;
      for (int64_t j = 0; j < d; ++j) {
        dh[j] = gy[j] * ng->value[j];
        m1 += dh[j];
        m2 += dh[j] * h[j];
      }
      m1 /= d;
      m2 /= d;
      auto &g = nx->Grad();
      for (int64_t j = 0; j < d; ++j) g[r * d + j] += (*rstd)[r] * (dh[j] - m1 - h[j] * m2);
    }
  });
}

template <typename T>
Tensor<T> Dropout(const Tensor<T> &x, T p, bool train, std::mt19937_64 &rng) {
  if (!(p >= 0 && p < 1)) throw std::invalid_argument("Dropout: p must lie in [0, 1)");
  if (!train || p == T(0)) return x;
  ++g_stochastic_ops;
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  std::bernoulli_distribution keep(1.0 - double(p));
  const T scale = T(1) / (T(1) - p);
  for (auto &m : *mask) m = keep(rng) ? scale : T(0);
  std::vector<T> y(x.data());
  for (size_t i = 0; i < y.size(); ++i) y[i] *= (*mask)[i];
  auto nx = x.node();
  return MakeResult<T>("dropout", x.shape(), std::move(y), {x}, [nx, mask](Node<T> &o) {
    auto &g = nx->Grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (*mask)[i];
  });
}

template <typename T>
Tensor<T> Embedding(const Tensor<T> &table, const std::vector<int> &ids) {
  if (table.ndim() != 2) throw std::invalid_argument("Embedding: table must be 2-D, got " + ShapeString(table.shape()));
  const int64_t v = table.dim(0), d = table.dim(1), n = static_cast<int64_t>(ids.size());
  std::vector<T> y(size_t(n * d));
  for (int64_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= v)
      throw std::out_of_range("Embedding: id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(v) + ")");
    std::copy_n(table.data().begin() + ids[i] * d, d, y.begin() + i * d);
  }
  auto nt = table.node();
  return MakeResult<T>("embedding", {n, d}, std::move(y), {table}, [nt, ids, d](Node<T> &o) {
    auto &g = nt->Grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int64_t j = 0; j < d; ++j) g[ids[i] * d + j] += o.grad[i * d + j];
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops.

template <typename T>
Tensor<T> Sum(const Tensor<T> &x) {
  T s = 0;
  for (T v : x.data()) s += v;
  auto nx = x.node();
  return MakeResult<T>("sum", {}, {s}, {x}, [nx](Node<T> &o) {
    for (auto &g : nx->Grad()) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> Mean(const Tensor<T> &x) {
  if (x.numel() == 0) throw std::invalid_argument("Mean: empty tensor");
  return Scale(Sum(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> Concat(const std::vector<Tensor<T>> &xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("Concat: no inputs");
  const int nd = xs[0].ndim();
  axis = NormAxis(axis, nd, "Concat");
  Shape shape = xs[0].shape();
  shape[axis] = 0;
  for (const auto &x : xs) {
    Shape a = x.shape(), b = xs[0].shape();
    if (x.ndim() != nd) ShapeError("Concat", b, a);
    a[axis] = b[axis] = 0;
    if (a != b) ShapeError("Concat", xs[0].shape(), x.shape());
    shape[axis] += x.dim(axis);
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < nd; ++i) inner *= shape[i];
  const int64_t width = shape[axis] * inner;
  std::vector<T> y(NumElements(shape));
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const auto &x : xs) {
    offsets.push_back(off);
    const int64_t w = x.dim(axis) * inner;
    for (int64_t o = 0; o < outer; ++o) std::copy_n(x.data().begin() + o * w, w, y.begin() + o * width + off);
    off += w;
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto &x : xs) nodes.push_back(x.node());
  return MakeResult<T>("concat", shape, std::move(y), xs, [=](Node<T> &o) {
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i]->requires_grad) continue;
      auto &g = nodes[i]->Grad();
      const int64_t w = int64_t(g.size()) / std::max<int64_t>(outer, 1);
      for (int64_t r = 0; r < outer; ++r)
        for (int64_t j = 0; j < w; ++j) g[r * w + j] += o.grad[r * width + offsets[i] + j];
    }
  });
}

template <typename T>
Tensor<T> Reshape(const Tensor<T> &x, const Shape &shape) {
  if (NumElements(shape) != x.numel()) ShapeError("Reshape", x.shape(), shape);
  auto nx = x.node();
  return MakeResult<T>("reshape", shape, x.data(), {x}, [nx](Node<T> &o) { Accumulate(nx->Grad(), o.grad); });
}

template <typename T>
Tensor<T> Slice(const Tensor<T> &x, int axis, int64_t begin, int64_t end) {
  axis = NormAxis(axis, x.ndim(), "Slice");
  if (begin < 0 || end > x.dim(axis) || begin > end)
    throw std::invalid_argument("Slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") outside " + ShapeString(x.shape()));
  Shape shape = x.shape();
  shape[axis] = end - begin;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= shape[i];
  const int64_t src_w = x.dim(axis) * inner, w = (end - begin) * inner, off = begin * inner;
  std::vector<T> y(NumElements(shape));
  for (int64_t o = 0; o < outer; ++o) std::copy_n(x.data().begin() + o * src_w + off, w, y.begin() + o * w);
  auto nx = x.node();
  return MakeResult<T>("slice", shape, std::move(y), {x}, [=](Node<T> &o) {
    auto &g = nx->Grad();
    for (int64_t r = 0; r < outer; ++r)
      for (int64_t j = 0; j < w; ++j) g[r * src_w + off + j] += o.grad[r * w + j];
  });
}

// ---------------------------------------------------------------------------

namespace {

struct KinkTracker {
  KinkTracker() { g_track_kinks = true; }
  ~KinkTracker() { g_track_kinks = false; }
  // Value of f plus the relu sign signature of that evaluation.
  std::pair<double, uint64_t> Eval(const std::function<Tensor<double>()> &f) {
    g_kink_hash = 0xcbf29ce484222325ull;
    const double v = f().item();
    return {v, g_kink_hash};
  }
};

}  // namespace

GradCheckReport GradCheckDetailed(const std::function<Tensor<double>()> &f, const std::vector<Tensor<double>> &params,
                                  double eps, int samples, uint64_t seed) {
  for (auto p : params) p.ZeroGrad();
  const uint64_t before = StochasticOpCount();
  Tensor<double> loss = f();
  if (StochasticOpCount() != before)
    throw std::logic_error("GradCheck: function runs stochastic ops (dropout in train mode)");
  if (loss.numel() != 1) throw std::invalid_argument("GradCheck: function must return a scalar");
  loss.Backward();

  std::vector<std::pair<size_t, size_t>> coords;
  for (size_t i = 0; i < params.size(); ++i)
    for (size_t j = 0; j < size_t(params[i].numel()); ++j) coords.push_back({i, j});
  if (samples > 0 && coords.size() > size_t(samples)) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
  } else {
    samples = int(coords.size());
  }

  NoGradGuard guard;
  KinkTracker kinks;
  const uint64_t base = kinks.Eval(f).second;
  GradCheckReport report;
  for (size_t k = 0; k < coords.size() && report.checked < samples; ++k) {
    auto [i, j] = coords[k];
    Tensor<double> p = params[i];
    const double analytic = p.has_grad() ? p.grad()[j] : 0.0;
    const double orig = p.data()[j];
    p.data()[j] = orig + eps;
    const auto [fp, sp] = kinks.Eval(f);
    p.data()[j] = orig - eps;
    const auto [fm, sm] = kinks.Eval(f);
    p.data()[j] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic))
      throw std::runtime_error("GradCheck: non-finite value at parameter " + std::to_string(i) + " index " +
                               std::to_string(j));
    if (sp != base || sm != base) {
      ++report.skipped;
      continue;
    }
    const double numeric = (fp - fm) / (2 * eps);
    report.max_rel_err = std::max(report.max_rel_err,
                                  std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric)));
    ++report.checked;
  }
  return report;
}

double GradCheck(const std::function<Tensor<double>()> &f, const std::vector<Tensor<double>> &params, double eps,
                 int samples, uint64_t seed) {
  return GradCheckDetailed(f, params, eps, samples, seed).max_rel_err;
}

#define DAKWS_INSTANTIATE(T)                                                                                     \
  template class Tensor<T>;                                                                                      \
  template struct ComplexTensor<T>;                                                                              \
  template Tensor<T> MakeResult<T>(const std::string &, const Shape &, std::vector<T>, std::vector<Tensor<T>>, \
                                   std::function<void(Node<T> &)>);                                              \
  template Tensor<T> Add(const Tensor<T> &, const Tensor<T> &);                                                  \
  template Tensor<T> Sub(const Tensor<T> &, const Tensor<T> &);                                                  \
  template Tensor<T> Mul(const Tensor<T> &, const Tensor<T> &);                                                  \
  template Tensor<T> Scale(const Tensor<T> &, T);                                                                \
  template Tensor<T> AddBias(const Tensor<T> &, const Tensor<T> &);                                              \
  template Tensor<T> AddOverTime(const Tensor<T> &, const Tensor<T> &);                                          \
  template Tensor<T> MatMul(const Tensor<T> &, const Tensor<T> &);                                               \
  template Tensor<T> Linear(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &);                            \
  template Tensor<T> Conv2d(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, const Conv2dOptions &);      \
  template Tensor<T> ComplexConv2dPacked(const Tensor<T> &, const ComplexTensor<T> &, const ComplexTensor<T> &, \
                                         const Conv2dOptions &);                                                 \
  template ComplexTensor<T> ComplexConv2d(const ComplexTensor<T> &, const ComplexTensor<T> &,                   \
                                          const ComplexTensor<T> &, const Conv2dOptions &);                      \
  template Tensor<T> PackComplex(const ComplexTensor<T> &);                                                      \
  template ComplexTensor<T> UnpackComplex(const Tensor<T> &);                                                    \
  template Tensor<T> DepthwiseConv1d(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, int, int);        \
  template Tensor<T> Relu(const Tensor<T> &);                                                                    \
  template Tensor<T> Sigmoid(const Tensor<T> &);                                                                 \
  template Tensor<T> Softmax(const Tensor<T> &);                                                                 \
  template Tensor<T> LayerNorm(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, T);                      \
  template Tensor<T> Dropout(const Tensor<T> &, T, bool, std::mt19937_64 &);                                     \
  template Tensor<T> Embedding(const Tensor<T> &, const std::vector<int> &);                                     \
  template Tensor<T> Sum(const Tensor<T> &);                                                                     \
  template Tensor<T> Mean(const Tensor<T> &);                                                                    \
  template Tensor<T> Concat(const std::vector<Tensor<T>> &, int);                                                \
  template Tensor<T> Reshape(const Tensor<T> &, const Shape &);                                                  \
  template Tensor<T> Slice(const Tensor<T> &, int, int64_t, int64_t);

DAKWS_INSTANTIATE(float)
DAKWS_INSTANTIATE(double)
#undef DAKWS_INSTANTIATE

template Tensor<double> Tensor<float>::Cast<double>() const;
template Tensor<float> Tensor<double>::Cast<float>() const;
template Tensor<float> Tensor<float>::Cast<float>() const;
template Tensor<double> Tensor<double>::Cast<double>() const;

}  // namespace dakws
