// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace xfields::ad {
namespace {

void require_arity(std::span<const Shape> in, std::size_t n) {
  if (in.size() != n) {
    throw ShapeError("expected " + std::to_string(n) + " inputs, got " +
                     std::to_string(in.size()));
  }
}

void require_same(const Shape& a, const Shape& b) {
  if (a != b) {
    throw ShapeError("shape mismatch " + shape_to_string(a) + " vs " +
                     shape_to_string(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + " must have rank " +
                     std::to_string(rank) + ", got " + shape_to_string(s));
  }
}

std::string describe(std::size_t index, double value) {
  std::ostringstream os;
  os << "element " << index << " = " << value;
  return os.str();
}

// ---------------------------------------------------------------------------
// Elementwise binary ops.

enum class Binary { add, sub, mul, div };

template <typename T>
class BinaryOp final : public Op<T> {
 public:
  explicit BinaryOp(Binary kind) : kind_(kind) {}

  std::string name() const override {
    switch (kind_) {
      case Binary::add: return "add";
      case Binary::sub: return "sub";
      case Binary::mul: return "mul";
      case Binary::div: return "div";
    }
    return "binary";
  }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 2);
    require_same(in[0], in[1]);
    return in[0];
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const T* a = in[0]->ptr();
    const T* b = in[1]->ptr();
    T* o = out.ptr();
    const std::size_t n = out.size();
    switch (kind_) {
      case Binary::add: for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i]; break;
      case Binary::sub: for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i]; break;
      case Binary::mul: for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i]; break;
      case Binary::div: for (std::size_t i = 0; i < n; ++i) o[i] = a[i] / b[i]; break;
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>& out,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    const T* a = in[0]->ptr();
    const T* b = in[1]->ptr();
    const T* go = grad_out.ptr();
    const std::size_t n = grad_out.size();
    T* ga = grads[0] ? grads[0]->ptr() : nullptr;
    T* gb = grads[1] ? grads[1]->ptr() : nullptr;
    switch (kind_) {
      case Binary::add:
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += go[i];
        break;
      case Binary::sub:
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= go[i];
        break;
      case Binary::mul:
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * b[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * a[i];
        break;
      case Binary::div: {
        const T* o = out.ptr();
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] / b[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= go[i] * o[i] / b[i];
        break;
      }
    }
  }

 private:
  Binary kind_;
};

// ---------------------------------------------------------------------------
// Elementwise unary ops.

enum class Unary { identity, scale, add_scalar, abs, exp, leaky_relu };

template <typename T>
class UnaryOp final : public Op<T> {
 public:
  UnaryOp(Unary kind, double param) : kind_(kind), param_(static_cast<T>(param)) {}

  std::string name() const override {
    switch (kind_) {
      case Unary::identity: return "identity";
      case Unary::scale: return "scale";
      case Unary::add_scalar: return "add_scalar";
      case Unary::abs: return "abs";
      case Unary::exp: return "exp";
      case Unary::leaky_relu: return "leaky_relu";
    }
    return "unary";
  }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 1);
    return in[0];
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const T* a = in[0]->ptr();
    T* o = out.ptr();
    const std::size_t n = out.size();
    const T p = param_;
    switch (kind_) {
      case Unary::identity: std::copy(a, a + n, o); break;
      case Unary::scale: for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * p; break;
      case Unary::add_scalar: for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + p; break;
      case Unary::abs: for (std::size_t i = 0; i < n; ++i) o[i] = std::abs(a[i]); break;
      case Unary::exp: for (std::size_t i = 0; i < n; ++i) o[i] = std::exp(a[i]); break;
      case Unary::leaky_relu:
        for (std::size_t i = 0; i < n; ++i) o[i] = a[i] > T(0) ? a[i] : p * a[i];
        break;
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>& out,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const T* a = in[0]->ptr();
    const T* go = grad_out.ptr();
    T* ga = grads[0]->ptr();
    const std::size_t n = grad_out.size();
    const T p = param_;
    switch (kind_) {
      case Unary::identity:
      case Unary::add_scalar:
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
        break;
      case Unary::scale:
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * p;
        break;
      case Unary::abs:
        for (std::size_t i = 0; i < n; ++i) {
          ga[i] += a[i] > T(0) ? go[i] : (a[i] < T(0) ? -go[i] : T(0));
        }
        break;
      case Unary::exp: {
        const T* o = out.ptr();
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * o[i];
        break;
      }
      case Unary::leaky_relu:
        for (std::size_t i = 0; i < n; ++i) ga[i] += a[i] > T(0) ? go[i] : p * go[i];
        break;
    }
  }

  std::optional<std::string> find_kink(typename Op<T>::Inputs in,
                                       std::span<const bool> needs,
                                       double radius) const override {
    if (!needs[0]) return std::nullopt;
    if (kind_ != Unary::abs && kind_ != Unary::leaky_relu) return std::nullopt;
    const T* a = in[0]->ptr();
    for (std::size_t i = 0; i < in[0]->size(); ++i) {
      if (std::abs(static_cast<double>(a[i])) <= radius) {
        return describe(i, a[i]) + " at the kink of " + name();
      }
    }
    return std::nullopt;
  }

 private:
  Unary kind_;
  T param_;
};

// ---------------------------------------------------------------------------
// Reductions and reshaping.

template <typename T>
class ReduceOp final : public Op<T> {
 public:
  explicit ReduceOp(bool average) : average_(average) {}
  std::string name() const override { return average_ ? "mean" : "sum"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 1);
    return {1};
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    // Whole-tensor reductions feed the loss; a float running sum over a 64x64
    // image drifts by ~1e-5 relative, so accumulate in double.
    double acc = 0.0;
    for (const T v : in[0]->data()) acc += static_cast<double>(v);
    out[0] = static_cast<T>(average_ ? acc / static_cast<double>(in[0]->size()) : acc);
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const T g = average_ ? grad_out[0] / static_cast<T>(in[0]->size())
                         : grad_out[0];
    for (T& v : grads[0]->data()) v += g;
  }

 private:
  bool average_;
};

template <typename T>
class SumLastAxisOp final : public Op<T> {
 public:
  std::string name() const override { return "sum_last_axis"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 1);
    Shape s = in[0];
    s.back() = 1;
    return s;
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t c = in[0]->shape().back();
    const T* a = in[0]->ptr();
    for (std::size_t i = 0; i < out.size(); ++i) {
      T acc = T(0);
      for (std::size_t k = 0; k < c; ++k) acc += a[i * c + k];
      out[i] = acc;
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const std::size_t c = in[0]->shape().back();
    T* ga = grads[0]->ptr();
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
      for (std::size_t k = 0; k < c; ++k) ga[i * c + k] += grad_out[i];
    }
  }
};

template <typename T>
class MulBroadcastLastOp final : public Op<T> {
 public:
  std::string name() const override { return "mul_broadcast_last"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 2);
    Shape expect = in[0];
    expect.back() = 1;
    if (in[1] != expect) {
      throw ShapeError("weight shape " + shape_to_string(in[1]) +
                       " does not broadcast over " + shape_to_string(in[0]));
    }
    return in[0];
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t c = in[0]->shape().back();
    const T* a = in[0]->ptr();
    const T* w = in[1]->ptr();
    T* o = out.ptr();
    for (std::size_t i = 0; i < in[1]->size(); ++i) {
      for (std::size_t k = 0; k < c; ++k) o[i * c + k] = a[i * c + k] * w[i];
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    const std::size_t c = in[0]->shape().back();
    const T* a = in[0]->ptr();
    const T* w = in[1]->ptr();
    const T* go = grad_out.ptr();
    for (std::size_t i = 0; i < in[1]->size(); ++i) {
      if (grads[0]) {
        T* ga = grads[0]->ptr();
        for (std::size_t k = 0; k < c; ++k) ga[i * c + k] += go[i * c + k] * w[i];
      }
      if (grads[1]) {
        T acc = T(0);
        for (std::size_t k = 0; k < c; ++k) acc += go[i * c + k] * a[i * c + k];
        (*grads[1])[i] += acc;
      }
    }
  }
};

template <typename T>
class ReshapeOp final : public Op<T> {
 public:
  explicit ReshapeOp(Shape shape) : shape_(std::move(shape)) {}
  std::string name() const override { return "reshape"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 1);
    if (shape_size(in[0]) != shape_size(shape_)) {
      throw ShapeError("cannot reshape " + shape_to_string(in[0]) + " to " +
                       shape_to_string(shape_));
    }
    return shape_;
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    std::copy(in[0]->data().begin(), in[0]->data().end(), out.ptr());
  }

  void backward(typename Op<T>::Inputs, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    T* ga = grads[0]->ptr();
    for (std::size_t i = 0; i < grad_out.size(); ++i) ga[i] += grad_out[i];
  }

 private:
  Shape shape_;
};

template <typename T>
class SoftmaxLastOp final : public Op<T> {
 public:
  std::string name() const override { return "softmax_last"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 1);
    return in[0];
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t c = out.shape().back();
    const T* a = in[0]->ptr();
    T* o = out.ptr();
    for (std::size_t i = 0; i < out.size(); i += c) {
      const T top = *std::max_element(a + i, a + i + c);
      T total = T(0);
      for (std::size_t k = 0; k < c; ++k) {
        o[i + k] = std::exp(a[i + k] - top);
        total += o[i + k];
      }
      for (std::size_t k = 0; k < c; ++k) o[i + k] /= total;
    }
  }

  void backward(typename Op<T>::Inputs, const Tensor<T>& out,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const std::size_t c = out.shape().back();
    const T* o = out.ptr();
    const T* go = grad_out.ptr();
    T* ga = grads[0]->ptr();
    for (std::size_t i = 0; i < out.size(); i += c) {
      T dot = T(0);
      for (std::size_t k = 0; k < c; ++k) dot += go[i + k] * o[i + k];
      for (std::size_t k = 0; k < c; ++k) ga[i + k] += o[i + k] * (go[i + k] - dot);
    }
  }
};

template <typename T>
class SliceLastOp final : public Op<T> {
 public:
  explicit SliceLastOp(std::size_t index) : index_(index) {}
  std::string name() const override { return "slice_last"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 1);
    if (index_ >= in[0].back()) {
      throw ShapeError("slice index " + std::to_string(index_) +
                       " out of range for " + shape_to_string(in[0]));
    }
    Shape s = in[0];
    s.back() = 1;
    return s;
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t c = in[0]->shape().back();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i * c + index_];
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const std::size_t c = in[0]->shape().back();
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
      (*grads[0])[i * c + index_] += grad_out[i];
    }
  }

 private:
  std::size_t index_;
};

template <typename T>
class ConcatLastOp final : public Op<T> {
 public:
  std::string name() const override { return "concat_last"; }

  Shape output_shape(std::span<const Shape> in) const override {
    if (in.empty()) throw ShapeError("concat of zero tensors");
    Shape out = in[0];
    std::size_t channels = 0;
    for (const Shape& s : in) {
      if (s.size() != out.size() ||
          !std::equal(s.begin(), s.end() - 1, out.begin())) {
        throw ShapeError("leading extents differ: " + shape_to_string(s) +
                         " vs " + shape_to_string(out));
      }
      channels += s.back();
    }
    out.back() = channels;
    return out;
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t total = out.shape().back();
    const std::size_t sites = out.size() / total;
    std::size_t offset = 0;
    for (const Tensor<T>* part : in) {
      const std::size_t c = part->shape().back();
      for (std::size_t i = 0; i < sites; ++i) {
        std::copy_n(part->ptr() + i * c, c, out.ptr() + i * total + offset);
      }
      offset += c;
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>& out,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    const std::size_t total = out.shape().back();
    const std::size_t sites = out.size() / total;
    std::size_t offset = 0;
    for (std::size_t p = 0; p < in.size(); ++p) {
      const std::size_t c = in[p]->shape().back();
      if (grads[p]) {
        T* g = grads[p]->ptr();
        for (std::size_t i = 0; i < sites; ++i) {
          for (std::size_t k = 0; k < c; ++k) {
            g[i * c + k] += grad_out[i * total + offset + k];
          }
        }
      }
      offset += c;
    }
  }
};

// ---------------------------------------------------------------------------
// Dense layers.

template <typename T>
class LinearOp final : public Op<T> {
 public:
  std::string name() const override { return "linear"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 3);
    require_rank(in[0], 1, "linear input");
    require_rank(in[1], 2, "linear weight");
    require_rank(in[2], 1, "linear bias");
    if (in[1][0] != in[0][0] || in[1][1] != in[2][0]) {
      throw ShapeError("linear: weight " + shape_to_string(in[1]) +
                       " incompatible with input " + shape_to_string(in[0]) +
                       " / bias " + shape_to_string(in[2]));
    }
    return {in[1][1]};
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t n = in[0]->size();
    const std::size_t m = out.size();
    const T* x = in[0]->ptr();
    const T* w = in[1]->ptr();
    std::copy_n(in[2]->ptr(), m, out.ptr());
    T* o = out.ptr();
    for (std::size_t i = 0; i < n; ++i) {
      const T xi = x[i];
      for (std::size_t j = 0; j < m; ++j) o[j] += xi * w[i * m + j];
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    const std::size_t n = in[0]->size();
    const std::size_t m = grad_out.size();
    const T* x = in[0]->ptr();
    const T* w = in[1]->ptr();
    const T* go = grad_out.ptr();
    if (grads[0]) {
      for (std::size_t i = 0; i < n; ++i) {
        T acc = T(0);
        for (std::size_t j = 0; j < m; ++j) acc += go[j] * w[i * m + j];
        (*grads[0])[i] += acc;
      }
    }
    if (grads[1]) {
      T* gw = grads[1]->ptr();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) gw[i * m + j] += x[i] * go[j];
      }
    }
    if (grads[2]) {
      T* gb = grads[2]->ptr();
      for (std::size_t j = 0; j < m; ++j) gb[j] += go[j];
    }
  }
};

template <typename T>
class Conv2dOp final : public Op<T> {
 public:
  std::string name() const override { return "conv2d"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 3);
    require_rank(in[0], 3, "conv2d input");
    require_rank(in[1], 4, "conv2d kernel");
    require_rank(in[2], 1, "conv2d bias");
    const Shape& k = in[1];
    if (k[0] != k[1] || k[0] % 2 == 0) {
      throw ShapeError("conv2d kernel must be square with odd size, got " +
                       shape_to_string(k));
    }
    if (k[2] != in[0][2]) {
      throw ShapeError("conv2d channel mismatch: input has " +
                       std::to_string(in[0][2]) + ", kernel expects " +
                       std::to_string(k[2]));
    }
    if (in[2][0] != k[3]) {
      throw ShapeError("conv2d bias length " + std::to_string(in[2][0]) +
                       " != output channels " + std::to_string(k[3]));
    }
    return {in[0][0], in[0][1], k[3]};
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const Tensor<T>& x = *in[0];
    const Tensor<T>& kernel = *in[1];
    const long h = static_cast<long>(x.extent(0));
    const long w = static_cast<long>(x.extent(1));
    const std::size_t ci_n = x.extent(2);
    const long ks = static_cast<long>(kernel.extent(0));
    const std::size_t co_n = kernel.extent(3);
    const long r = ks / 2;
    const T* bias = in[2]->ptr();
    for (long y = 0; y < h; ++y) {
      for (long xx = 0; xx < w; ++xx) {
        T* o = out.ptr() + (y * w + xx) * co_n;
        std::copy_n(bias, co_n, o);
        for (long ky = 0; ky < ks; ++ky) {
          const long iy = y + ky - r;
          if (iy < 0 || iy >= h) continue;
          for (long kx = 0; kx < ks; ++kx) {
            const long ix = xx + kx - r;
            if (ix < 0 || ix >= w) continue;
            const T* px = x.ptr() + (iy * w + ix) * ci_n;
            const T* wk = kernel.ptr() + (ky * ks + kx) * ci_n * co_n;
            for (std::size_t ci = 0; ci < ci_n; ++ci) {
              const T a = px[ci];
              const T* wr = wk + ci * co_n;
              for (std::size_t co = 0; co < co_n; ++co) o[co] += a * wr[co];
            }
          }
        }
      }
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    const Tensor<T>& x = *in[0];
    const Tensor<T>& kernel = *in[1];
    const long h = static_cast<long>(x.extent(0));
    const long w = static_cast<long>(x.extent(1));
    const std::size_t ci_n = x.extent(2);
    const long ks = static_cast<long>(kernel.extent(0));
    const std::size_t co_n = kernel.extent(3);
    const long r = ks / 2;
    const std::size_t taps = static_cast<std::size_t>(ks * ks);

    if (grads[2]) {
      T* gb = grads[2]->ptr();
      for (std::size_t i = 0; i < grad_out.size() / co_n; ++i) {
        const T* go = grad_out.ptr() + i * co_n;
        for (std::size_t co = 0; co < co_n; ++co) gb[co] += go[co];
      }
    }

    // Transposed kernel [tap][co][ci] so the input gradient is an axpy over ci.
    std::vector<T> kt;
    if (grads[0]) {
      kt.resize(kernel.size());
      for (std::size_t t = 0; t < taps; ++t) {
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          for (std::size_t co = 0; co < co_n; ++co) {
            kt[(t * co_n + co) * ci_n + ci] = kernel[(t * ci_n + ci) * co_n + co];
          }
        }
      }
    }

    T* gx = grads[0] ? grads[0]->ptr() : nullptr;
    T* gk = grads[1] ? grads[1]->ptr() : nullptr;
    for (long y = 0; y < h; ++y) {
      for (long xx = 0; xx < w; ++xx) {
        const T* go = grad_out.ptr() + (y * w + xx) * co_n;
        for (long ky = 0; ky < ks; ++ky) {
          const long iy = y + ky - r;
          if (iy < 0 || iy >= h) continue;
          for (long kx = 0; kx < ks; ++kx) {
            const long ix = xx + kx - r;
            if (ix < 0 || ix >= w) continue;
            const std::size_t tap = static_cast<std::size_t>(ky * ks + kx);
            const std::size_t site = static_cast<std::size_t>(iy * w + ix);
            if (gk) {
              const T* px = x.ptr() + site * ci_n;
              T* gkt = gk + tap * ci_n * co_n;
              for (std::size_t ci = 0; ci < ci_n; ++ci) {
                const T a = px[ci];
                T* row = gkt + ci * co_n;
                for (std::size_t co = 0; co < co_n; ++co) row[co] += a * go[co];
              }
            }
            if (gx) {
              T* gpx = gx + site * ci_n;
              const T* ktt = kt.data() + tap * co_n * ci_n;
              for (std::size_t co = 0; co < co_n; ++co) {
                const T g = go[co];
                const T* row = ktt + co * ci_n;
                for (std::size_t ci = 0; ci < ci_n; ++ci) gpx[ci] += g * row[ci];
              }
            }
          }
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Resampling.

struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

// Half-pixel-centered 2x magnification taps along one axis.
std::vector<Tap> upsample_taps(std::size_t n) {
  std::vector<Tap> taps(2 * n);
  const double hi = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    double src = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, hi);
    const std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double f = src - static_cast<double>(i0);
    taps[i] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

template <typename T>
class Upsample2xOp final : public Op<T> {
 public:
  std::string name() const override { return "upsample2x"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 1);
    require_rank(in[0], 3, "upsample2x input");
    return {2 * in[0][0], 2 * in[0][1], in[0][2]};
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const Tensor<T>& x = *in[0];
    const std::size_t w = x.extent(1), c = x.extent(2);
    const auto ty = upsample_taps(x.extent(0));
    const auto tx = upsample_taps(w);
    for (std::size_t oy = 0; oy < ty.size(); ++oy) {
      const Tap& a = ty[oy];
      for (std::size_t ox = 0; ox < tx.size(); ++ox) {
        const Tap& b = tx[ox];
        const T w00 = T(a.w0 * b.w0), w01 = T(a.w0 * b.w1);
        const T w10 = T(a.w1 * b.w0), w11 = T(a.w1 * b.w1);
        const T* p00 = x.ptr() + (a.i0 * w + b.i0) * c;
        const T* p01 = x.ptr() + (a.i0 * w + b.i1) * c;
        const T* p10 = x.ptr() + (a.i1 * w + b.i0) * c;
        const T* p11 = x.ptr() + (a.i1 * w + b.i1) * c;
        T* o = out.ptr() + (oy * tx.size() + ox) * c;
        for (std::size_t k = 0; k < c; ++k) {
          o[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
        }
      }
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const Tensor<T>& x = *in[0];
    const std::size_t w = x.extent(1), c = x.extent(2);
    const auto ty = upsample_taps(x.extent(0));
    const auto tx = upsample_taps(w);
    T* g = grads[0]->ptr();
    for (std::size_t oy = 0; oy < ty.size(); ++oy) {
      const Tap& a = ty[oy];
      for (std::size_t ox = 0; ox < tx.size(); ++ox) {
        const Tap& b = tx[ox];
        const T w00 = T(a.w0 * b.w0), w01 = T(a.w0 * b.w1);
        const T w10 = T(a.w1 * b.w0), w11 = T(a.w1 * b.w1);
        const T* go = grad_out.ptr() + (oy * tx.size() + ox) * c;
        T* g00 = g + (a.i0 * w + b.i0) * c;
        T* g01 = g + (a.i0 * w + b.i1) * c;
        T* g10 = g + (a.i1 * w + b.i0) * c;
        T* g11 = g + (a.i1 * w + b.i1) * c;
        for (std::size_t k = 0; k < c; ++k) {
          g00[k] += w00 * go[k];
          g01[k] += w01 * go[k];
          g10[k] += w10 * go[k];
          g11[k] += w11 * go[k];
        }
      }
    }
  }
};

// One axis of a clamped bilinear lookup.
template <typename T>
struct AxisSample {
  std::size_t i0 = 0, i1 = 0;
  T f = T(0);
  bool clamped = false;
};

template <typename T>
AxisSample<T> axis_sample(T pos, std::size_t extent) {
  AxisSample<T> s;
  if (extent == 1) {
    s.clamped = true;
    return s;
  }
  const T hi = static_cast<T>(extent - 1);
  if (pos < T(0) || pos > hi) s.clamped = true;
  const T pc = std::clamp(pos, T(0), hi);
  std::size_t i0 = static_cast<std::size_t>(std::floor(pc));
  if (i0 > extent - 2) i0 = extent - 2;
  s.i0 = i0;
  s.i1 = i0 + 1;
  s.f = pc - static_cast<T>(i0);
  return s;
}

template <typename T>
class BilinearSampleOp final : public Op<T> {
 public:
  std::string name() const override { return "bilinear_sample"; }

  Shape output_shape(std::span<const Shape> in) const override {
    require_arity(in, 2);
    require_rank(in[0], 3, "bilinear_sample image");
    require_rank(in[1], 3, "bilinear_sample positions");
    if (in[1][2] != 2) {
      throw ShapeError("positions need 2 channels, got " +
                       shape_to_string(in[1]));
    }
    return {in[1][0], in[1][1], in[0][2]};
  }

  void forward(typename Op<T>::Inputs in, Tensor<T>& out) const override {
    const Tensor<T>& img = *in[0];
    const Tensor<T>& pos = *in[1];
    const std::size_t h = img.extent(0), w = img.extent(1), c = img.extent(2);
    const std::size_t sites = pos.size() / 2;
    for (std::size_t i = 0; i < sites; ++i) {
      const auto sx = axis_sample(pos[2 * i], w);
      const auto sy = axis_sample(pos[2 * i + 1], h);
      const T* p00 = img.ptr() + (sy.i0 * w + sx.i0) * c;
      const T* p01 = img.ptr() + (sy.i0 * w + sx.i1) * c;
      const T* p10 = img.ptr() + (sy.i1 * w + sx.i0) * c;
      const T* p11 = img.ptr() + (sy.i1 * w + sx.i1) * c;
      T* o = out.ptr() + i * c;
      const T fx = sx.f, fy = sy.f;
      for (std::size_t k = 0; k < c; ++k) {
        const T top = p00[k] * (T(1) - fx) + p01[k] * fx;
        const T bottom = p10[k] * (T(1) - fx) + p11[k] * fx;
        o[k] = top * (T(1) - fy) + bottom * fy;
      }
    }
  }

  void backward(typename Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    const Tensor<T>& img = *in[0];
    const Tensor<T>& pos = *in[1];
    const std::size_t h = img.extent(0), w = img.extent(1), c = img.extent(2);
    const std::size_t sites = pos.size() / 2;
    T* gi = grads[0] ? grads[0]->ptr() : nullptr;
    T* gp = grads[1] ? grads[1]->ptr() : nullptr;
    for (std::size_t i = 0; i < sites; ++i) {
      const auto sx = axis_sample(pos[2 * i], w);
      const auto sy = axis_sample(pos[2 * i + 1], h);
      const std::size_t o00 = (sy.i0 * w + sx.i0) * c;
      const std::size_t o01 = (sy.i0 * w + sx.i1) * c;
      const std::size_t o10 = (sy.i1 * w + sx.i0) * c;
      const std::size_t o11 = (sy.i1 * w + sx.i1) * c;
      const T fx = sx.f, fy = sy.f;
      const T* go = grad_out.ptr() + i * c;
      if (gi) {
        const T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy);
        const T w10 = (T(1) - fx) * fy, w11 = fx * fy;
        for (std::size_t k = 0; k < c; ++k) {
          gi[o00 + k] += w00 * go[k];
          gi[o01 + k] += w01 * go[k];
          gi[o10 + k] += w10 * go[k];
          gi[o11 + k] += w11 * go[k];
        }
      }
      if (gp) {
        const T* p = img.ptr();
        T dx = T(0), dy = T(0);
        for (std::size_t k = 0; k < c; ++k) {
          const T v00 = p[o00 + k], v01 = p[o01 + k];
          const T v10 = p[o10 + k], v11 = p[o11 + k];
          dx += go[k] * ((v01 - v00) * (T(1) - fy) + (v11 - v10) * fy);
          dy += go[k] * ((v10 - v00) * (T(1) - fx) + (v11 - v01) * fx);
        }
        if (!sx.clamped) gp[2 * i] += dx;
        if (!sy.clamped) gp[2 * i + 1] += dy;
      }
    }
  }

  std::optional<std::string> find_kink(typename Op<T>::Inputs in,
                                       std::span<const bool> needs,
                                       double radius) const override {
    if (!needs[1]) return std::nullopt;
    const Tensor<T>& img = *in[0];
    const Tensor<T>& pos = *in[1];
    const std::size_t extents[2] = {img.extent(1), img.extent(0)};
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const std::size_t extent = extents[i % 2];
      if (extent == 1) continue;
      const double v = static_cast<double>(pos[i]);
      if (v < -radius || v > static_cast<double>(extent - 1) + radius) continue;
      if (std::abs(v - std::round(v)) <= radius) {
        return describe(i, v) + " lies on the sampling lattice";
      }
    }
    return std::nullopt;
  }
};

template <typename T, typename OpT, typename... Args>
NodeId apply_op(Graph<T>& g, std::vector<NodeId> inputs, Args&&... args) {
  return g.apply(std::make_shared<const OpT>(std::forward<Args>(args)...),
                 std::move(inputs));
}

}  // namespace

template <typename T> NodeId add(Graph<T>& g, NodeId a, NodeId b) {
  return apply_op<T, BinaryOp<T>>(g, {a, b}, Binary::add);
}
template <typename T> NodeId sub(Graph<T>& g, NodeId a, NodeId b) {
  return apply_op<T, BinaryOp<T>>(g, {a, b}, Binary::sub);
}
template <typename T> NodeId mul(Graph<T>& g, NodeId a, NodeId b) {
  return apply_op<T, BinaryOp<T>>(g, {a, b}, Binary::mul);
}
template <typename T> NodeId div(Graph<T>& g, NodeId a, NodeId b) {
  return apply_op<T, BinaryOp<T>>(g, {a, b}, Binary::div);
}
template <typename T> NodeId identity(Graph<T>& g, NodeId a) {
  return apply_op<T, UnaryOp<T>>(g, {a}, Unary::identity, 0.0);
}
template <typename T> NodeId scale(Graph<T>& g, NodeId a, double factor) {
  return apply_op<T, UnaryOp<T>>(g, {a}, Unary::scale, factor);
}
template <typename T> NodeId add_scalar(Graph<T>& g, NodeId a, double offset) {
  return apply_op<T, UnaryOp<T>>(g, {a}, Unary::add_scalar, offset);
}
template <typename T> NodeId abs(Graph<T>& g, NodeId a) {
  return apply_op<T, UnaryOp<T>>(g, {a}, Unary::abs, 0.0);
}
template <typename T> NodeId exp(Graph<T>& g, NodeId a) {
  return apply_op<T, UnaryOp<T>>(g, {a}, Unary::exp, 0.0);
}
template <typename T> NodeId leaky_relu(Graph<T>& g, NodeId a, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu slope must lie in (0, 1)");
  }
  return apply_op<T, UnaryOp<T>>(g, {a}, Unary::leaky_relu, slope);
}
template <typename T> NodeId sum(Graph<T>& g, NodeId a) {
  return apply_op<T, ReduceOp<T>>(g, {a}, false);
}
template <typename T> NodeId mean(Graph<T>& g, NodeId a) {
  return apply_op<T, ReduceOp<T>>(g, {a}, true);
}
template <typename T> NodeId sum_last_axis(Graph<T>& g, NodeId a) {
  return apply_op<T, SumLastAxisOp<T>>(g, {a});
}
template <typename T> NodeId mul_broadcast_last(Graph<T>& g, NodeId a, NodeId w) {
  return apply_op<T, MulBroadcastLastOp<T>>(g, {a, w});
}
template <typename T> NodeId reshape(Graph<T>& g, NodeId a, Shape shape) {
  return apply_op<T, ReshapeOp<T>>(g, {a}, std::move(shape));
}
template <typename T> NodeId softmax_last(Graph<T>& g, NodeId a) {
  return apply_op<T, SoftmaxLastOp<T>>(g, {a});
}
template <typename T> NodeId slice_last(Graph<T>& g, NodeId a, std::size_t index) {
  return apply_op<T, SliceLastOp<T>>(g, {a}, index);
}
template <typename T>
NodeId concat_last(Graph<T>& g, const std::vector<NodeId>& parts) {
  return apply_op<T, ConcatLastOp<T>>(g, parts);
}
template <typename T>
NodeId linear(Graph<T>& g, NodeId x, NodeId weight, NodeId bias) {
  return apply_op<T, LinearOp<T>>(g, {x, weight, bias});
}
template <typename T>
NodeId conv2d(Graph<T>& g, NodeId input, NodeId kernel, NodeId bias) {
  return apply_op<T, Conv2dOp<T>>(g, {input, kernel, bias});
}
template <typename T> NodeId upsample2x(Graph<T>& g, NodeId input) {
  return apply_op<T, Upsample2xOp<T>>(g, {input});
}
template <typename T>
NodeId bilinear_sample(Graph<T>& g, NodeId image, NodeId positions) {
  return apply_op<T, BilinearSampleOp<T>>(g, {image, positions});
}

#define XFIELDS_INSTANTIATE_OPS(T)                                          \
  template NodeId add<T>(Graph<T>&, NodeId, NodeId);                        \
  template NodeId sub<T>(Graph<T>&, NodeId, NodeId);                        \
  template NodeId mul<T>(Graph<T>&, NodeId, NodeId);                        \
  template NodeId div<T>(Graph<T>&, NodeId, NodeId);                        \
  template NodeId identity<T>(Graph<T>&, NodeId);                           \
  template NodeId scale<T>(Graph<T>&, NodeId, double);                      \
  template NodeId add_scalar<T>(Graph<T>&, NodeId, double);                 \
  template NodeId abs<T>(Graph<T>&, NodeId);                                \
  template NodeId exp<T>(Graph<T>&, NodeId);                                \
  template NodeId leaky_relu<T>(Graph<T>&, NodeId, double);                 \
  template NodeId sum<T>(Graph<T>&, NodeId);                                \
  template NodeId mean<T>(Graph<T>&, NodeId);                               \
  template NodeId sum_last_axis<T>(Graph<T>&, NodeId);                      \
  template NodeId mul_broadcast_last<T>(Graph<T>&, NodeId, NodeId);         \
  template NodeId reshape<T>(Graph<T>&, NodeId, Shape);                     \
  template NodeId softmax_last<T>(Graph<T>&, NodeId);                       \
  template NodeId slice_last<T>(Graph<T>&, NodeId, std::size_t);            \
  template NodeId concat_last<T>(Graph<T>&, const std::vector<NodeId>&);    \
  template NodeId linear<T>(Graph<T>&, NodeId, NodeId, NodeId);             \
  template NodeId conv2d<T>(Graph<T>&, NodeId, NodeId, NodeId);             \
  template NodeId upsample2x<T>(Graph<T>&, NodeId);                         \
  template NodeId bilinear_sample<T>(Graph<T>&, NodeId, NodeId);

XFIELDS_INSTANTIATE_OPS(float)
XFIELDS_INSTANTIATE_OPS(double)

#undef XFIELDS_INSTANTIATE_OPS

}  // namespace xfields::ad
