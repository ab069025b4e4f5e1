#pragma once

// Define-by-run reverse-mode autodiff over row-major 2D buffers. The graph
// is rebuilt every step; backprop walks it once in reverse topological
// order and accumulates gradients additively across fan-out.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "ist/errors.hpp"
#include "ist/kernels.hpp"

namespace ist {

template <typename T>
struct TensorNode {
  std::vector<T> data;
  std::size_t rows = 0, cols = 0;
  std::vector<T> grad;  // lazily allocated, same size as data
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void()> backward;  // accumulates into inputs' grads

  std::size_t size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(std::size_t r, std::size_t c, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->rows = r;
    n->cols = c;
    n->data.assign(r * c, T(0));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor from(std::vector<T> buf, std::size_t r, std::size_t c,
                     bool requires_grad = false) {
    if (buf.size() != r * c) throw ShapeMismatch("from: buffer/shape mismatch");
    auto n = std::make_shared<Node>();
    n->rows = r;
    n->cols = c;
    n->data = std::move(buf);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor scalar(T v) { return from({v}, 1, 1); }

  bool valid() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->size(); }
  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  const std::string& op() const { return node_->op; }
  T item() const {
    if (size() != 1) throw ShapeMismatch("item: tensor not scalar");
    return node_->data[0];
  }
  T at(std::size_t i, std::size_t j) const {
    return node_->data[i * cols() + j];
  }
  std::shared_ptr<Node> node() const { return node_; }

  // value copy with no graph attachment; gradient never flows through
  Tensor detach() const {
    auto n = std::make_shared<Node>();
    n->rows = rows();
    n->cols = cols();
    n->data = node_->data;
    n->requires_grad = false;
    n->op = "detach";
    return Tensor(n);
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <typename T>
std::shared_ptr<TensorNode<T>> make_out(std::size_t r, std::size_t c,
                                        const char* op,
                                        std::vector<std::shared_ptr<TensorNode<T>>> ins) {
  auto n = std::make_shared<TensorNode<T>>();
  n->rows = r;
  n->cols = c;
  n->data.assign(r * c, T(0));
  n->op = op;
  n->inputs = std::move(ins);
  for (auto& i : n->inputs)
    if (i->requires_grad) n->requires_grad = true;
  return n;
}

// Broadcast category for binary elementwise ops: equal shapes, row vector
// (1 x c) against (r x c), or scalar (1 x 1) against anything.
enum class Bcast { Same, RowB, ScalarB, RowA, ScalarA };

template <typename T>
Bcast bcast_kind(const TensorNode<T>& a, const TensorNode<T>& b,
                 const char* op) {
  if (a.rows == b.rows && a.cols == b.cols) return Bcast::Same;
  if (b.rows == 1 && b.cols == 1) return Bcast::ScalarB;
  if (a.rows == 1 && a.cols == 1) return Bcast::ScalarA;
  if (b.rows == 1 && b.cols == a.cols) return Bcast::RowB;
  if (a.rows == 1 && a.cols == b.cols) return Bcast::RowA;
  throw ShapeMismatch(std::string(op) + ": incompatible shapes");
}

}  // namespace detail

// ---- primitive ops -------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dims differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = detail::make_out<T>(m, n, "matmul", {a.node(), b.node()});
  const auto& K = kernels::active<T>();
  K.matmul(a.data().data(), b.data().data(), out->data.data(), m, k, n);
  if (out->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto* o = out.get();
    out->backward = [an, bn, o, m, k, n] {
      const auto& K2 = kernels::active<T>();
      if (an->requires_grad) {
        an->ensure_grad();
        K2.matmul_acc_a(o->grad.data(), bn->data.data(), an->grad.data(), m, k, n);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        K2.matmul_acc_b(an->data.data(), o->grad.data(), bn->grad.data(), m, k, n);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T, bool Sub>
Tensor<T> add_like(const Tensor<T>& a, const Tensor<T>& b, const char* name) {
  auto kind = detail::bcast_kind(*a.node(), *b.node(), name);
  const std::size_t r = std::max(a.rows(), b.rows());
  const std::size_t c = std::max(a.cols(), b.cols());
  auto out = detail::make_out<T>(r, c, name, {a.node(), b.node()});
  const auto& K = kernels::active<T>();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out->data.data();
  const T sb = Sub ? T(-1) : T(1);
  using detail::Bcast;
  switch (kind) {
    case Bcast::Same:
      if (Sub)
        K.sub(pa, pb, po, r * c);
      else
        K.add(pa, pb, po, r * c);
      break;
    case Bcast::ScalarB:
      for (std::size_t i = 0; i < r * c; ++i) po[i] = pa[i] + sb * pb[0];
      break;
    case Bcast::ScalarA:
      for (std::size_t i = 0; i < r * c; ++i) po[i] = pa[0] + sb * pb[i];
      break;
    case Bcast::RowB:
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          po[i * c + j] = pa[i * c + j] + sb * pb[j];
      break;
    case Bcast::RowA:
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          po[i * c + j] = pa[j] + sb * pb[i * c + j];
      break;
  }
  if (out->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto* o = out.get();
    out->backward = [an, bn, o, kind, r, c, sb] {
      const auto& K2 = kernels::active<T>();
      auto reduce_into = [&](const std::shared_ptr<TensorNode<T>>& n, T sign) {
        if (!n->requires_grad) return;
        n->ensure_grad();
        if (n->rows == r && n->cols == c) {
          K2.axpy(sign, o->grad.data(), n->grad.data(), r * c);
        } else if (n->size() == 1) {
          n->grad[0] += sign * K2.sum(o->grad.data(), r * c);
        } else {  // 1 x c row vector
          for (std::size_t i = 0; i < r; ++i)
            K2.axpy(sign, o->grad.data() + i * c, n->grad.data(), c);
        }
      };
      (void)kind;
      reduce_into(an, T(1));
      reduce_into(bn, sb);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return add_like<T, false>(a, b, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add_like<T, true>(a, b, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto kind = detail::bcast_kind(*a.node(), *b.node(), "mul");
  const std::size_t r = std::max(a.rows(), b.rows());
  const std::size_t c = std::max(a.cols(), b.cols());
  auto out = detail::make_out<T>(r, c, "mul", {a.node(), b.node()});
  const auto& K = kernels::active<T>();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out->data.data();
  using detail::Bcast;
  auto bval = [&](std::size_t i, std::size_t j, const TensorNode<T>& n) -> T {
    if (n.rows == r && n.cols == c) return n.data[i * c + j];
    if (n.size() == 1) return n.data[0];
    return n.data[j];
  };
  if (kind == Bcast::Same) {
    K.mul(pa, pb, po, r * c);
  } else {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        po[i * c + j] = bval(i, j, *a.node()) * bval(i, j, *b.node());
  }
  if (out->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto* o = out.get();
    out->backward = [an, bn, o, r, c] {
      auto other_val = [&](std::size_t i, std::size_t j,
                           const TensorNode<T>& n) -> T {
        if (n.rows == r && n.cols == c) return n.data[i * c + j];
        if (n.size() == 1) return n.data[0];
        return n.data[j];
      };
      auto accum = [&](const std::shared_ptr<TensorNode<T>>& dst,
                       const std::shared_ptr<TensorNode<T>>& other) {
        if (!dst->requires_grad) return;
        dst->ensure_grad();
        if (dst->rows == r && dst->cols == c) {
          const auto& K2 = kernels::active<T>();
          if (other->rows == r && other->cols == c) {
            // dst.grad += o.grad * other.data
            std::vector<T> tmp(r * c);
            K2.mul(o->grad.data(), other->data.data(), tmp.data(), r * c);
            K2.add(dst->grad.data(), tmp.data(), dst->grad.data(), r * c);
          } else {
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < c; ++j)
                dst->grad[i * c + j] +=
                    o->grad[i * c + j] * other_val(i, j, *other);
          }
        } else if (dst->size() == 1) {
          T acc = 0;
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              acc += o->grad[i * c + j] * other_val(i, j, *other);
          dst->grad[0] += acc;
        } else {  // 1 x c
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              dst->grad[j] += o->grad[i * c + j] * other_val(i, j, *other);
        }
      };
      accum(an, bn);
      accum(bn, an);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T alpha) {
  auto out = detail::make_out<T>(a.rows(), a.cols(), "scale", {a.node()});
  kernels::active<T>().scale(alpha, a.data().data(), out->data.data(), a.size());
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, alpha] {
      an->ensure_grad();
      kernels::active<T>().axpy(alpha, o->grad.data(), an->grad.data(),
                                an->data.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto out = detail::make_out<T>(a.rows(), a.cols(), "relu", {a.node()});
  kernels::active<T>().relu(a.data().data(), out->data.data(), a.size());
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o] {
      an->ensure_grad();
      kernels::active<T>().relu_backward(an->data.data(), o->grad.data(),
                                         an->grad.data(), an->data.size());
    };
  }
  return Tensor<T>(out);
}

// concat along the feature axis; a 1-row input is broadcast to the other's
// row count (used for appending the pooled global feature)
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  std::size_t r = std::max(a.rows(), b.rows());
  if (a.rows() != r && a.rows() != 1)
    throw ShapeMismatch("concat_cols: row mismatch");
  if (b.rows() != r && b.rows() != 1)
    throw ShapeMismatch("concat_cols: row mismatch");
  const std::size_t ca = a.cols(), cb = b.cols(), c = ca + cb;
  auto out = detail::make_out<T>(r, c, "concat", {a.node(), b.node()});
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ia = a.rows() == 1 ? 0 : i;
    const std::size_t ib = b.rows() == 1 ? 0 : i;
    std::copy_n(a.data().data() + ia * ca, ca, out->data.data() + i * c);
    std::copy_n(b.data().data() + ib * cb, cb, out->data.data() + i * c + ca);
  }
  if (out->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto* o = out.get();
    out->backward = [an, bn, o, r, ca, cb, c] {
      const auto& K = kernels::active<T>();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          const std::size_t ia = an->rows == 1 ? 0 : i;
          K.axpy(T(1), o->grad.data() + i * c, an->grad.data() + ia * ca, ca);
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          const std::size_t ib = bn->rows == 1 ? 0 : i;
          K.axpy(T(1), o->grad.data() + i * c + ca, bn->grad.data() + ib * cb,
                 cb);
        }
      }
    };
  }
  return Tensor<T>(out);
}

// global average pooling over rows -> 1 x c
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = detail::make_out<T>(1, c, "mean_rows", {a.node()});
  for (std::size_t i = 0; i < r; ++i)
    kernels::active<T>().axpy(T(1), a.data().data() + i * c, out->data.data(), c);
  kernels::active<T>().scale(T(1) / T(r), out->data.data(), out->data.data(), c);
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, r, c] {
      an->ensure_grad();
      const T inv = T(1) / T(r);
      for (std::size_t i = 0; i < r; ++i)
        kernels::active<T>().axpy(inv, o->grad.data(), an->grad.data() + i * c, c);
    };
  }
  return Tensor<T>(out);
}

// max pooling over rows -> 1 x c; subgradient routes to the first argmax
template <typename T>
Tensor<T> max_rows(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = detail::make_out<T>(1, c, "max_rows", {a.node()});
  auto argmax = std::make_shared<std::vector<std::size_t>>(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    T best = a.at(0, j);
    std::size_t bi = 0;
    for (std::size_t i = 1; i < r; ++i)
      if (a.at(i, j) > best) {
        best = a.at(i, j);
        bi = i;
      }
    out->data[j] = best;
    (*argmax)[j] = bi;
  }
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, argmax, c] {
      an->ensure_grad();
      for (std::size_t j = 0; j < c; ++j)
        an->grad[(*argmax)[j] * c + j] += o->grad[j];
    };
  }
  return Tensor<T>(out);
}

// rows grouped in consecutive blocks of `group`; max within each block.
// (n*group) x c -> n x c
template <typename T>
Tensor<T> segment_max(const Tensor<T>& a, std::size_t group) {
  if (group == 0 || a.rows() % group != 0)
    throw ShapeMismatch("segment_max: rows not divisible by group");
  const std::size_t n = a.rows() / group, c = a.cols();
  auto out = detail::make_out<T>(n, c, "segment_max", {a.node()});
  auto argmax = std::make_shared<std::vector<std::size_t>>(n * c);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < c; ++j) {
      T best = a.at(s * group, j);
      std::size_t bi = s * group;
      for (std::size_t i = 1; i < group; ++i)
        if (a.at(s * group + i, j) > best) {
          best = a.at(s * group + i, j);
          bi = s * group + i;
        }
      out->data[s * c + j] = best;
      (*argmax)[s * c + j] = bi;
    }
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, argmax, n, c] {
      an->ensure_grad();
      for (std::size_t s = 0; s < n * c; ++s)
        an->grad[(*argmax)[s] * c + s % c] += o->grad[s];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t j0, std::size_t j1) {
  if (j1 > a.cols() || j0 >= j1) throw ShapeMismatch("slice_cols: bad range");
  const std::size_t r = a.rows(), c = a.cols(), w = j1 - j0;
  auto out = detail::make_out<T>(r, w, "slice", {a.node()});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(a.data().data() + i * c + j0, w, out->data.data() + i * w);
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, r, c, j0, w] {
      an->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        kernels::active<T>().axpy(T(1), o->grad.data() + i * w,
                                  an->grad.data() + i * c + j0, w);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t i0, std::size_t i1) {
  if (i1 > a.rows() || i0 >= i1) throw ShapeMismatch("slice_rows: bad range");
  const std::size_t c = a.cols(), h = i1 - i0;
  auto out = detail::make_out<T>(h, c, "slice", {a.node()});
  std::copy_n(a.data().data() + i0 * c, h * c, out->data.data());
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, i0, c, h] {
      an->ensure_grad();
      kernels::active<T>().axpy(T(1), o->grad.data(),
                                an->grad.data() + i0 * c, h * c);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::size_t r, std::size_t c) {
  if (r * c != a.size()) throw ShapeMismatch("reshape: element count differs");
  auto out = detail::make_out<T>(r, c, "reshape", {a.node()});
  out->data = a.data();
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o] {
      an->ensure_grad();
      kernels::active<T>().axpy(T(1), o->grad.data(), an->grad.data(),
                                an->data.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& idx) {
  const std::size_t c = a.cols();
  auto out = detail::make_out<T>(idx.size(), c, "gather", {a.node()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) throw ShapeMismatch("gather_rows: index out of range");
    std::copy_n(a.data().data() + idx[i] * c, c, out->data.data() + i * c);
  }
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    auto ix = std::make_shared<std::vector<std::size_t>>(idx);
    out->backward = [an, o, ix, c] {
      an->ensure_grad();
      for (std::size_t i = 0; i < ix->size(); ++i)
        kernels::active<T>().axpy(T(1), o->grad.data() + i * c,
                                  an->grad.data() + (*ix)[i] * c, c);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = detail::make_out<T>(c, r, "transpose", {a.node()});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out->data[j * r + i] = a.data()[i * c + j];
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, r, c] {
      an->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          an->grad[i * c + j] += o->grad[j * r + i];
    };
  }
  return Tensor<T>(out);
}

// elementwise x^p; domain restricted to x > 0 when p is non-integer
template <typename T>
Tensor<T> pow_elem(const Tensor<T>& a, T p) {
  auto out = detail::make_out<T>(a.rows(), a.cols(), "pow", {a.node()});
  for (std::size_t i = 0; i < a.size(); ++i)
    out->data[i] = std::pow(a.data()[i], p);
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, p] {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->data.size(); ++i)
        an->grad[i] += o->grad[i] * p * std::pow(an->data[i], p - T(1));
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  auto out = detail::make_out<T>(a.rows(), a.cols(), "softplus", {a.node()});
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T x = a.data()[i];
    out->data[i] = x > T(20) ? x : std::log1p(std::exp(x));
  }
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o] {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->data.size(); ++i) {
        const T x = an->data[i];
        const T sig = x > T(20) ? T(1) : T(1) / (T(1) + std::exp(-x));
        an->grad[i] += o->grad[i] * sig;
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = detail::make_out<T>(r, c, "softmax", {a.node()});
  for (std::size_t i = 0; i < r; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, a.at(i, j));
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) {
      out->data[i * c + j] = std::exp(a.at(i, j) - mx);
      z += out->data[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out->data[i * c + j] /= z;
  }
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o, r, c] {
      an->ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        T dotv = 0;
        for (std::size_t j = 0; j < c; ++j)
          dotv += o->grad[i * c + j] * o->data[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          an->grad[i * c + j] +=
              o->data[i * c + j] * (o->grad[i * c + j] - dotv);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto out = detail::make_out<T>(1, 1, "sum", {a.node()});
  out->data[0] = kernels::active<T>().sum(a.data().data(), a.size());
  if (out->requires_grad) {
    auto an = a.node();
    auto* o = out.get();
    out->backward = [an, o] {
      an->ensure_grad();
      for (auto& g : an->grad) g += o->grad[0];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / T(a.size()));
}

// ---- losses --------------------------------------------------------------

// mean over elements of the Huber-style penalty with transition at |d| = 1
template <typename T>
Tensor<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeMismatch("smooth_l1: shape mismatch");
  auto out = detail::make_out<T>(1, 1, "smooth_l1", {pred.node(), target.node()});
  const std::size_t n = pred.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pred.data()[i] - target.data()[i];
    acc += std::abs(d) < T(1) ? T(0.5) * d * d : std::abs(d) - T(0.5);
  }
  out->data[0] = acc / T(n);
  if (out->requires_grad) {
    auto pn = pred.node();
    auto tn = target.node();
    auto* o = out.get();
    out->backward = [pn, tn, o, n] {
      const T g0 = o->grad[0] / T(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = pn->data[i] - tn->data[i];
        const T gi = g0 * (std::abs(d) < T(1) ? d : (d > 0 ? T(1) : T(-1)));
        if (pn->requires_grad) {
          pn->ensure_grad();
          pn->grad[i] += gi;
        }
        if (tn->requires_grad) {
          tn->ensure_grad();
          tn->grad[i] -= gi;
        }
      }
    };
  }
  return Tensor<T>(out);
}

// (1 / (rows*cols)) * sum of squared differences
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch("mse: shape mismatch");
  auto out = detail::make_out<T>(1, 1, "mse", {a.node(), b.node()});
  const std::size_t n = a.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  out->data[0] = acc / T(n);
  if (out->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto* o = out.get();
    out->backward = [an, bn, o, n] {
      const T g0 = o->grad[0] * T(2) / T(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T gi = g0 * (an->data[i] - bn->data[i]);
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += gi;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[i] -= gi;
        }
      }
    };
  }
  return Tensor<T>(out);
}

// mean absolute difference
template <typename T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch("l1: shape mismatch");
  auto out = detail::make_out<T>(1, 1, "l1", {a.node(), b.node()});
  const std::size_t n = a.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.data()[i] - b.data()[i]);
  out->data[0] = acc / T(n);
  if (out->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto* o = out.get();
    out->backward = [an, bn, o, n] {
      const T g0 = o->grad[0] / T(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = an->data[i] - bn->data[i];
        const T gi = g0 * (d > 0 ? T(1) : d < 0 ? T(-1) : T(0));
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += gi;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[i] -= gi;
        }
      }
    };
  }
  return Tensor<T>(out);
}

// sqrt(sum of squares + eps): Euclidean / Frobenius norm with a floor that
// keeps the gradient finite at zero residual
template <typename T>
Tensor<T> norm_all(const Tensor<T>& a, T eps = T(1e-12)) {
  return pow_elem(add(sum_all(mul(a, a)), Tensor<T>::scalar(eps)), T(0.5));
}

// ---- backprop ------------------------------------------------------------

template <typename T>
void backprop(Tensor<T> loss) {
  if (loss.size() != 1) throw NonScalarLoss("backprop: loss must be scalar");
  // reverse topological order, each node visited exactly once
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->inputs.size()) {
      TensorNode<T>* child = n->inputs[i++].get();
      if (child->requires_grad && seen.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

// ---- generic primitive dispatcher ---------------------------------------

struct PrimitiveAttrs {
  std::size_t i0 = 0, i1 = 0;  // slice range / reshape rows,cols / group size
  double alpha = 1.0;          // scalar-scale factor
  std::vector<std::size_t> indices;  // gather
};

template <typename T>
Tensor<T> apply_primitive(const std::string& op_kind,
                          const std::vector<Tensor<T>>& inputs,
                          const PrimitiveAttrs& attrs = {}) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      throw ShapeMismatch(op_kind + ": expected " + std::to_string(n) +
                          " inputs");
  };
  if (op_kind == "matmul") { need(2); return matmul(inputs[0], inputs[1]); }
  if (op_kind == "add") { need(2); return add(inputs[0], inputs[1]); }
  if (op_kind == "mul") { need(2); return mul(inputs[0], inputs[1]); }
  if (op_kind == "concat") { need(2); return concat_cols(inputs[0], inputs[1]); }
  if (op_kind == "relu") { need(1); return relu(inputs[0]); }
  if (op_kind == "mean_rows") { need(1); return mean_rows(inputs[0]); }
  if (op_kind == "max_rows") { need(1); return max_rows(inputs[0]); }
  if (op_kind == "slice") { need(1); return slice_cols(inputs[0], attrs.i0, attrs.i1); }
  if (op_kind == "reshape") { need(1); return reshape(inputs[0], attrs.i0, attrs.i1); }
  if (op_kind == "scale") { need(1); return scale(inputs[0], T(attrs.alpha)); }
  if (op_kind == "gather_rows") { need(1); return gather_rows(inputs[0], attrs.indices); }
  if (op_kind == "segment_max") { need(1); return segment_max(inputs[0], attrs.i0); }
  throw UnknownOp("apply_primitive: unknown op '" + op_kind + "'");
}

// ---- gradient checking ---------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

// central finite differences against analytic gradients; f must rebuild its
// graph from the param values on every call
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>(void)>& f,
                           const std::vector<Tensor<T>>& params, T h, T tol) {
  if (!(h > T(0))) throw ConfigError("grad_check: h must be positive");
  GradCheckReport rep;
  for (const auto& p : params) p.node()->grad.clear();
  auto loss = f();
  backprop(loss);
  std::vector<std::vector<T>> analytic;
  for (const auto& p : params) {
    analytic.push_back(p.node()->grad.empty() ? std::vector<T>(p.size(), T(0))
                                              : p.node()->grad);
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& node = *params[pi].node();
    for (std::size_t i = 0; i < node.data.size(); ++i) {
      const T orig = node.data[i];
      node.data[i] = orig + h;
      const T fp = f().item();
      node.data[i] = orig - h;
      const T fm = f().item();
      node.data[i] = orig;
      const T numeric = (fp - fm) / (T(2) * h);
      const T a = analytic[pi][i];
      const T denom = std::max({std::abs(a), std::abs(numeric), T(1e-8)});
      const T rel = (a == T(0) && numeric == T(0)) ? T(0)
                                                   : std::abs(a - numeric) / denom;
      rep.max_rel_err = std::max<double>(rep.max_rel_err, rel);
      ++rep.checked;
      if (rel > tol) rep.passed = false;
    }
  }
  // restore analytic grads for callers that inspect them afterwards
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    params[pi].node()->grad = analytic[pi];
  return rep;
}

template <typename T>
void zero_grad(std::vector<Tensor<T>>& params) {
  for (auto& p : params)
    if (!p.grad().empty()) std::fill(p.grad().begin(), p.grad().end(), T(0));
}

}  // namespace ist
