#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <memory>
#include <utility>

#include "wmnet/tensor.hpp"

namespace wmnet {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename T>
struct Param {
  std::string name;
  int index = -1;  // position in the owning ParamStore
  Tensor<T> value;
};

/// Owns all learnable tensors of a model. Parameter order is registration
/// order and is the canonical order for checkpoints and gradient buffers.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(const std::string& name, Tensor<T> init) {
    for (const auto& p : params_)
      WMNET_CHECK(p->name != name, "duplicate parameter name: " + name);
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->index = static_cast<int>(params_.size());
    p->value = std::move(init);
    params_.push_back(std::move(p));
    return *params_.back();
  }

  size_t count() const { return params_.size(); }
  Param<T>& at(size_t i) { return *params_[i]; }
  const Param<T>& at(size_t i) const { return *params_[i]; }

  Param<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  int64_t total_scalars_with_prefix(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (p->name.rfind(prefix, 0) == 0) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
};

/// Per-parameter gradient accumulator, indexed like the ParamStore.
template <typename T>
struct GradBuffer {
  std::vector<Tensor<T>> grads;

  explicit GradBuffer(const ParamStore<T>& store) {
    grads.reserve(store.count());
    for (size_t i = 0; i < store.count(); ++i)
      grads.emplace_back(Tensor<T>::zeros(store.at(i).value.shape));
  }

  void zero() {
    for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), T(0));
  }

  void add_scaled(const GradBuffer& o, T s) {
    for (size_t i = 0; i < grads.size(); ++i)
      for (int64_t j = 0; j < grads[i].size(); ++j) grads[i][j] += s * o.grads[i][j];
  }
};

// ---------------------------------------------------------------------------
// Tape (Wengert list). One tape per forward pass; creation order is a valid
// topological order, so backward is a single reverse sweep.
// ---------------------------------------------------------------------------

template <typename T>
class Tape;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until first accumulation
  bool needs_grad = false;
  const Param<T>* bound = nullptr;
  std::function<void(Tape<T>&, int)> backward;  // (tape, self index)
};

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
  const Tensor<T>& val() const;
  const Shape& shape() const { return val().shape; }
};

template <typename T>
class Tape {
 public:
  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  Var<T> input(Tensor<T> v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, nullptr);
  }

  Var<T> param(const Param<T>& p) {
    Var<T> v = push_copy(p.value, true, &p);
    return v;
  }

  Node<T>& node(int i) { return nodes_[static_cast<size_t>(i)]; }
  const Node<T>& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Var<T> make(Tensor<T> value, std::vector<int> parents,
              std::function<void(Tape<T>&, int)> bwd) {
    bool ng = false;
    for (int p : parents)
      if (node(p).needs_grad) ng = true;
    Node<T> n;
    n.value = std::move(value);
    n.needs_grad = ng;
    if (ng) n.backward = std::move(bwd);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Accumulate g into node i's gradient (no-op when i does not need grads).
  void acc(int i, const Tensor<T>& g) {
    Node<T>& n = node(i);
    if (!n.needs_grad) return;
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    for (int64_t k = 0; k < g.size(); ++k) n.grad[k] += g[k];
  }

  Tensor<T>& grad_sink(int i) {
    Node<T>& n = node(i);
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  bool wants_grad(int i) const { return node(i).needs_grad; }

  /// Reverse sweep from a scalar root (seeds d root/d root = 1).
  void backward(Var<T> root) {
    WMNET_CHECK(root.val().size() == 1, "backward: root must be a scalar");
    Tensor<T> seed({1}, T(1));
    backward(root, seed);
  }

  void backward(Var<T> root, const Tensor<T>& seed) {
    WMNET_CHECK(root.tape == this, "backward: var from another tape");
    acc(root.idx, seed);
    for (int i = root.idx; i >= 0; --i) {
      Node<T>& n = nodes_[static_cast<size_t>(i)];
      if (!n.needs_grad || n.grad.data.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  /// Adds scale * (d root / d param) into `out` for every bound parameter leaf.
  void collect_param_grads(GradBuffer<T>& out, T scale = T(1)) const {
    for (const Node<T>& n : nodes_) {
      if (n.bound == nullptr || n.grad.data.empty()) continue;
      Tensor<T>& dst = out.grads[static_cast<size_t>(n.bound->index)];
      for (int64_t k = 0; k < dst.size(); ++k) dst[k] += scale * n.grad[k];
    }
  }

 private:
  Var<T> push(Tensor<T> v, bool ng, const Param<T>* bound) {
    Node<T> n;
    n.value = std::move(v);
    n.needs_grad = ng;
    n.bound = bound;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }
  Var<T> push_copy(const Tensor<T>& v, bool ng, const Param<T>* bound) {
    return push(Tensor<T>(v), ng, bound);
  }

  std::deque<Node<T>> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::val() const {
  return tape->node(idx).value;
}

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  WMNET_CHECK(a.val().shape == b.val().shape, "add: shape mismatch");
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), {ai, bi}, [ai, bi](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    t.acc(ai, g);
    t.acc(bi, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  WMNET_CHECK(a.val().shape == b.val().shape, "sub: shape mismatch");
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), {ai, bi}, [ai, bi](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    t.acc(ai, g);
    if (t.wants_grad(bi)) {
      Tensor<T> gb = g;
      for (auto& v : gb.data) v = -v;
      t.acc(bi, gb);
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  WMNET_CHECK(a.val().shape == b.val().shape, "mul: shape mismatch");
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), {ai, bi}, [ai, bi](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    if (t.wants_grad(ai)) {
      Tensor<T> ga = g;
      const Tensor<T>& bv2 = t.node(bi).value;
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] *= bv2[i];
      t.acc(ai, ga);
    }
    if (t.wants_grad(bi)) {
      Tensor<T> gb = g;
      const Tensor<T>& av2 = t.node(ai).value;
      for (int64_t i = 0; i < gb.size(); ++i) gb[i] *= av2[i];
      t.acc(bi, gb);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v *= s;
  int ai = a.idx;
  return a.tape->make(std::move(out), {ai}, [ai, s](Tape<T>& t, int self) {
    Tensor<T> g = t.node(self).grad;
    for (auto& v : g.data) v *= s;
    t.acc(ai, g);
  });
}

template <typename T>
Var<T> neg(Var<T> a) {
  return scale(a, T(-1));
}

template <typename T>
Var<T> add_const(Var<T> a, T c) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v += c;
  int ai = a.idx;
  return a.tape->make(std::move(out), {ai},
                      [ai](Tape<T>& t, int self) { t.acc(ai, t.node(self).grad); });
}

/// x: (..., C) op v: (C), broadcast over leading dims.
template <typename T>
Var<T> add_chanvec(Var<T> x, Var<T> v) {
  const int C = x.val().shape.back();
  WMNET_CHECK(v.val().size() == C, "add_chanvec: vector length mismatch");
  Tensor<T> out = x.val();
  const Tensor<T>& vv = v.val();
  const int64_t rows = out.size() / C;
  for (int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c) out[r * C + c] += vv[c];
  int xi = x.idx, vi = v.idx;
  return x.tape->make(std::move(out), {xi, vi}, [xi, vi, C](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    t.acc(xi, g);
    if (t.wants_grad(vi)) {
      Tensor<T> gv({C}, T(0));
      const int64_t rows = g.size() / C;
      for (int64_t r = 0; r < rows; ++r)
        for (int c = 0; c < C; ++c) gv[c] += g[r * C + c];
      t.acc(vi, gv);
    }
  });
}

template <typename T>
Var<T> mul_chanvec(Var<T> x, Var<T> v) {
  const int C = x.val().shape.back();
  WMNET_CHECK(v.val().size() == C, "mul_chanvec: vector length mismatch");
  Tensor<T> out = x.val();
  const Tensor<T>& vv = v.val();
  const int64_t rows = out.size() / C;
  for (int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c) out[r * C + c] *= vv[c];
  int xi = x.idx, vi = v.idx;
  return x.tape->make(std::move(out), {xi, vi}, [xi, vi, C](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    if (t.wants_grad(xi)) {
      Tensor<T> gx = g;
      const Tensor<T>& vv2 = t.node(vi).value;
      const int64_t rows = gx.size() / C;
      for (int64_t r = 0; r < rows; ++r)
        for (int c = 0; c < C; ++c) gx[r * C + c] *= vv2[c];
      t.acc(xi, gx);
    }
    if (t.wants_grad(vi)) {
      Tensor<T> gv({C}, T(0));
      const Tensor<T>& xv = t.node(xi).value;
      const int64_t rows = g.size() / C;
      for (int64_t r = 0; r < rows; ++r)
        for (int c = 0; c < C; ++c) gv[c] += g[r * C + c] * xv[r * C + c];
      t.acc(vi, gv);
    }
  });
}

/// x times a single-element tensor s, broadcast to every element.
template <typename T>
Var<T> mul_bcast_all(Var<T> x, Var<T> s) {
  WMNET_CHECK(s.val().size() == 1, "mul_bcast_all: scalar operand expected");
  Tensor<T> out = x.val();
  const T sv = s.val()[0];
  for (auto& v : out.data) v *= sv;
  int xi = x.idx, si = s.idx;
  return x.tape->make(std::move(out), {xi, si}, [xi, si](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    if (t.wants_grad(xi)) {
      Tensor<T> gx = g;
      const T sv2 = t.node(si).value[0];
      for (auto& v : gx.data) v *= sv2;
      t.acc(xi, gx);
    }
    if (t.wants_grad(si)) {
      const Tensor<T>& xv = t.node(xi).value;
      T acc = 0;
      for (int64_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      Tensor<T> gs({1}, acc);
      t.acc(si, gs);
    }
  });
}

/// x: (L, N) scaled row-wise by s: (L).
template <typename T>
Var<T> mul_rows(Var<T> x, Var<T> s) {
  const int L = x.val().shape[0], N = x.val().shape[1];
  WMNET_CHECK(s.val().size() == L, "mul_rows: row vector length mismatch");
  Tensor<T> out = x.val();
  const Tensor<T>& sv = s.val();
  for (int r = 0; r < L; ++r)
    for (int c = 0; c < N; ++c) out[static_cast<int64_t>(r) * N + c] *= sv[r];
  int xi = x.idx, si = s.idx;
  return x.tape->make(std::move(out), {xi, si}, [xi, si, L, N](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    if (t.wants_grad(xi)) {
      Tensor<T> gx = g;
      const Tensor<T>& sv2 = t.node(si).value;
      for (int r = 0; r < L; ++r)
        for (int c = 0; c < N; ++c) gx[static_cast<int64_t>(r) * N + c] *= sv2[r];
      t.acc(xi, gx);
    }
    if (t.wants_grad(si)) {
      Tensor<T> gs(t.node(si).value.shape, T(0));
      const Tensor<T>& xv = t.node(xi).value;
      for (int r = 0; r < L; ++r) {
        T a = 0;
        for (int c = 0; c < N; ++c)
          a += g[static_cast<int64_t>(r) * N + c] * xv[static_cast<int64_t>(r) * N + c];
        gs[r] = a;
      }
      t.acc(si, gs);
    }
  });
}

/// Elementwise product with a constant tensor (no gradient to the mask).
template <typename T>
Var<T> mul_mask(Var<T> x, Tensor<T> mask) {
  WMNET_CHECK(x.val().shape == mask.shape, "mul_mask: shape mismatch");
  Tensor<T> out = x.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  int xi = x.idx;
  auto m = std::make_shared<Tensor<T>>(std::move(mask));
  return x.tape->make(std::move(out), {xi}, [xi, m](Tape<T>& t, int self) {
    Tensor<T> g = t.node(self).grad;
    for (int64_t i = 0; i < g.size(); ++i) g[i] *= (*m)[i];
    t.acc(xi, g);
  });
}

// Generic unary op: y = f(x), backward gx += gy * d, with d precomputed.
template <typename T, typename F, typename D>
Var<T> unary_op(Var<T> x, F f, D dfdx) {
  const Tensor<T>& xv = x.val();
  Tensor<T> out(xv.shape);
  auto deriv = std::make_shared<Tensor<T>>(xv.shape);
  for (int64_t i = 0; i < xv.size(); ++i) {
    out[i] = f(xv[i]);
    (*deriv)[i] = dfdx(xv[i], out[i]);
  }
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, deriv](Tape<T>& t, int self) {
    Tensor<T> g = t.node(self).grad;
    for (int64_t i = 0; i < g.size(); ++i) g[i] *= (*deriv)[i];
    t.acc(xi, g);
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary_op(
      x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
T sigmoid_scalar(T v) {
  return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary_op(
      x, [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> silu(Var<T> x) {
  return unary_op(
      x, [](T v) { return v * sigmoid_scalar(v); },
      [](T v, T) {
        T s = sigmoid_scalar(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
T softplus_scalar(T v) {
  if (v > T(20)) return v;
  if (v < T(-20)) return std::exp(v);
  return std::log1p(std::exp(v));
}

template <typename T>
Var<T> softplus(Var<T> x) {
  return unary_op(
      x, [](T v) { return softplus_scalar(v); }, [](T v, T) { return sigmoid_scalar(v); });
}

template <typename T>
Var<T> exp_op(Var<T> x) {
  return unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> abs_op(Var<T> x) {
  return unary_op(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> square(Var<T> x) {
  return unary_op(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var<T> pow_const(Var<T> x, double e) {
  return unary_op(
      x, [e](T v) { return static_cast<T>(std::pow(static_cast<double>(v), e)); },
      [e](T v, T) {
        return static_cast<T>(e * std::pow(static_cast<double>(v), e - 1.0));
      });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  T s = 0;
  for (const T& v : x.val().data) s += v;
  int xi = x.idx;
  return x.tape->make(Tensor<T>({1}, s), {xi}, [xi](Tape<T>& t, int self) {
    const T g = t.node(self).grad[0];
    Tensor<T> gx(t.node(xi).value.shape, g);
    t.acc(xi, gx);
  });
}

template <typename T>
Var<T> mean_all(Var<T> x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.val().size()));
}

template <typename T>
Var<T> reshape(Var<T> x, Shape s) {
  WMNET_CHECK(shape_numel(s) == x.val().size(), "reshape: element count mismatch");
  Tensor<T> out = x.val();
  Shape old = out.shape;
  out.shape = std::move(s);
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, old](Tape<T>& t, int self) {
    Tensor<T> g = t.node(self).grad;
    g.shape = old;
    t.acc(xi, g);
  });
}

// ---------------------------------------------------------------------------
// Concat / split along the last dim, and row slicing for token sequences
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat_lastdim(const std::vector<Var<T>>& xs) {
  WMNET_CHECK(!xs.empty(), "concat_lastdim: empty input list");
  Shape base = xs[0].val().shape;
  int ctotal = 0;
  for (const auto& x : xs) {
    const Shape& s = x.val().shape;
    WMNET_CHECK(s.size() == base.size(), "concat_lastdim: rank mismatch");
    for (size_t i = 0; i + 1 < s.size(); ++i)
      WMNET_CHECK(s[i] == base[i], "concat_lastdim: leading dim mismatch");
    ctotal += s.back();
  }
  Shape oshape = base;
  oshape.back() = ctotal;
  Tensor<T> out(oshape);
  const int64_t rows = out.size() / ctotal;
  std::vector<int> widths, idxs;
  for (const auto& x : xs) {
    widths.push_back(x.val().shape.back());
    idxs.push_back(x.idx);
  }
  int64_t off = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    const Tensor<T>& xv = xs[k].val();
    const int w = widths[k];
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c) out[r * ctotal + off + c] = xv[r * w + c];
    off += w;
  }
  return xs[0].tape->make(std::move(out), idxs,
                          [idxs, widths, ctotal, rows](Tape<T>& t, int self) {
                            const Tensor<T>& g = t.node(self).grad;
                            int64_t off2 = 0;
                            for (size_t k = 0; k < idxs.size(); ++k) {
                              const int w = widths[k];
                              if (t.wants_grad(idxs[k])) {
                                Tensor<T> gk(t.node(idxs[k]).value.shape);
                                for (int64_t r = 0; r < rows; ++r)
                                  for (int c = 0; c < w; ++c)
                                    gk[r * w + c] = g[r * ctotal + off2 + c];
                                t.acc(idxs[k], gk);
                              }
                              off2 += w;
                            }
                          });
}

template <typename T>
Var<T> slice_lastdim(Var<T> x, int c0, int c1) {
  const Shape& s = x.val().shape;
  const int C = s.back();
  WMNET_CHECK(0 <= c0 && c0 < c1 && c1 <= C, "slice_lastdim: bad range");
  Shape oshape = s;
  oshape.back() = c1 - c0;
  Tensor<T> out(oshape);
  const int w = c1 - c0;
  const int64_t rows = x.val().size() / C;
  const Tensor<T>& xv = x.val();
  for (int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < w; ++c) out[r * w + c] = xv[r * C + c0 + c];
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, c0, w, C, rows](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    Tensor<T> gx(t.node(xi).value.shape, T(0));
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c) gx[r * C + c0 + c] = g[r * w + c];
    t.acc(xi, gx);
  });
}

/// Rows [r0, r1) of a (L, C) sequence.
template <typename T>
Var<T> slice_rows(Var<T> x, int r0, int r1) {
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 2, "slice_rows: expects (L, C)");
  const int L = s[0], C = s[1];
  WMNET_CHECK(0 <= r0 && r0 < r1 && r1 <= L, "slice_rows: bad range");
  Tensor<T> out({r1 - r0, C});
  const Tensor<T>& xv = x.val();
  std::copy(xv.data.begin() + static_cast<size_t>(r0) * C,
            xv.data.begin() + static_cast<size_t>(r1) * C, out.data.begin());
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, r0, C](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    Tensor<T> gx(t.node(xi).value.shape, T(0));
    std::copy(g.data.begin(), g.data.end(), gx.data.begin() + static_cast<size_t>(r0) * C);
    t.acc(xi, gx);
  });
}

template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  const Shape& sa = a.val().shape;
  const Shape& sb = b.val().shape;
  WMNET_CHECK(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[1],
              "concat_rows: incompatible shapes");
  Tensor<T> out({sa[0] + sb[0], sa[1]});
  std::copy(a.val().data.begin(), a.val().data.end(), out.data.begin());
  std::copy(b.val().data.begin(), b.val().data.end(),
            out.data.begin() + a.val().data.size());
  int ai = a.idx, bi = b.idx;
  const int64_t na = a.val().size();
  return a.tape->make(std::move(out), {ai, bi}, [ai, bi, na](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    if (t.wants_grad(ai)) {
      Tensor<T> ga(t.node(ai).value.shape);
      std::copy(g.data.begin(), g.data.begin() + na, ga.data.begin());
      t.acc(ai, ga);
    }
    if (t.wants_grad(bi)) {
      Tensor<T> gb(t.node(bi).value.shape);
      std::copy(g.data.begin() + na, g.data.end(), gb.data.begin());
      t.acc(bi, gb);
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix ops (Eigen-backed)
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;
}  // namespace detail

/// C = op(A) * op(B) where op transposes when the flag is set.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool ta = false, bool tb = false) {
  const Shape& sa = a.val().shape;
  const Shape& sb = b.val().shape;
  WMNET_CHECK(sa.size() == 2 && sb.size() == 2, "matmul: 2D operands required");
  const int M = ta ? sa[1] : sa[0];
  const int Ka = ta ? sa[0] : sa[1];
  const int Kb = tb ? sb[1] : sb[0];
  const int N = tb ? sb[0] : sb[1];
  WMNET_CHECK(Ka == Kb, "matmul: inner dim mismatch");
  Tensor<T> out({M, N});
  {
    detail::ECMap<T> A(a.val().data.data(), sa[0], sa[1]);
    detail::ECMap<T> B(b.val().data.data(), sb[0], sb[1]);
    detail::EMap<T> C(out.data.data(), M, N);
    if (!ta && !tb)
      C.noalias() = A * B;
    else if (ta && !tb)
      C.noalias() = A.transpose() * B;
    else if (!ta && tb)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), {ai, bi}, [ai, bi, ta, tb, M, N](Tape<T>& t, int self) {
    const Tensor<T>& gv = t.node(self).grad;
    const Tensor<T>& av = t.node(ai).value;
    const Tensor<T>& bv = t.node(bi).value;
    detail::ECMap<T> G(gv.data.data(), M, N);
    detail::ECMap<T> A(av.data.data(), av.shape[0], av.shape[1]);
    detail::ECMap<T> B(bv.data.data(), bv.shape[0], bv.shape[1]);
    if (t.wants_grad(ai)) {
      Tensor<T> ga(av.shape);
      detail::EMap<T> GA(ga.data.data(), av.shape[0], av.shape[1]);
      // dA for C = op(A) op(B)
      if (!ta)
        GA.noalias() = tb ? (G * B).eval() : (G * B.transpose()).eval();
      else
        GA.noalias() = tb ? (B.transpose() * G.transpose()).eval() : (B * G.transpose()).eval();
      t.acc(ai, ga);
    }
    if (t.wants_grad(bi)) {
      Tensor<T> gb(bv.shape);
      detail::EMap<T> GB(gb.data.data(), bv.shape[0], bv.shape[1]);
      if (!tb)
        GB.noalias() = ta ? (A * G).eval() : (A.transpose() * G).eval();
      else
        GB.noalias() = ta ? (G.transpose() * A.transpose()).eval() : (G.transpose() * A).eval();
      t.acc(bi, gb);
    }
  });
}

/// x: (L, Cin) -> (L, Cout). Pass an invalid Var for a bias-free layer.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b = Var<T>{}) {
  Var<T> y = matmul(x, w);
  if (b.valid()) y = add_chanvec(y, b);
  return y;
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 2, "softmax_rows: expects (R, C)");
  const int R = s[0], C = s[1];
  Tensor<T> out(s);
  const Tensor<T>& xv = x.val();
  for (int r = 0; r < R; ++r) {
    T m = xv[static_cast<int64_t>(r) * C];
    for (int c = 1; c < C; ++c) m = std::max(m, xv[static_cast<int64_t>(r) * C + c]);
    T sum = 0;
    for (int c = 0; c < C; ++c) {
      T e = std::exp(xv[static_cast<int64_t>(r) * C + c] - m);
      out[static_cast<int64_t>(r) * C + c] = e;
      sum += e;
    }
    for (int c = 0; c < C; ++c) out[static_cast<int64_t>(r) * C + c] /= sum;
  }
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, R, C](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    const Tensor<T>& y = t.node(self).value;
    Tensor<T> gx(y.shape);
    for (int r = 0; r < R; ++r) {
      T dot = 0;
      for (int c = 0; c < C; ++c)
        dot += g[static_cast<int64_t>(r) * C + c] * y[static_cast<int64_t>(r) * C + c];
      for (int c = 0; c < C; ++c) {
        const int64_t i = static_cast<int64_t>(r) * C + c;
        gx[i] = (g[i] - dot) * y[i];
      }
    }
    t.acc(xi, gx);
  });
}

/// LayerNorm over the last dim with affine parameters gamma, beta.
template <typename T>
Var<T> layernorm_lastdim(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  const Shape& s = x.val().shape;
  const int C = s.back();
  WMNET_CHECK(gamma.val().size() == C && beta.val().size() == C,
              "layernorm: affine parameter length mismatch");
  const int64_t rows = x.val().size() / C;
  Tensor<T> out(s);
  auto xhat = std::make_shared<Tensor<T>>(s);
  auto inv_sigma = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  const Tensor<T>& xv = x.val();
  const Tensor<T>& gv = gamma.val();
  const Tensor<T>& bv = beta.val();
  for (int64_t r = 0; r < rows; ++r) {
    T mu = 0;
    for (int c = 0; c < C; ++c) mu += xv[r * C + c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (int c = 0; c < C; ++c) {
      T d = xv[r * C + c] - mu;
      var += d * d;
    }
    var /= static_cast<T>(C);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[static_cast<size_t>(r)] = is;
    for (int c = 0; c < C; ++c) {
      T h = (xv[r * C + c] - mu) * is;
      (*xhat)[r * C + c] = h;
      out[r * C + c] = h * gv[c] + bv[c];
    }
  }
  int xi = x.idx, gi = gamma.idx, bi = beta.idx;
  return x.tape->make(
      std::move(out), {xi, gi, bi}, [xi, gi, bi, C, rows, xhat, inv_sigma](Tape<T>& t, int self) {
        const Tensor<T>& g = t.node(self).grad;
        const Tensor<T>& gv2 = t.node(gi).value;
        if (t.wants_grad(gi)) {
          Tensor<T> gg({C}, T(0));
          for (int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gg[c] += g[r * C + c] * (*xhat)[r * C + c];
          t.acc(gi, gg);
        }
        if (t.wants_grad(bi)) {
          Tensor<T> gb({C}, T(0));
          for (int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gb[c] += g[r * C + c];
          t.acc(bi, gb);
        }
        if (t.wants_grad(xi)) {
          Tensor<T> gx(t.node(xi).value.shape);
          for (int64_t r = 0; r < rows; ++r) {
            T mean_gp = 0, mean_gph = 0;
            for (int c = 0; c < C; ++c) {
              const T gp = g[r * C + c] * gv2[c];
              mean_gp += gp;
              mean_gph += gp * (*xhat)[r * C + c];
            }
            mean_gp /= static_cast<T>(C);
            mean_gph /= static_cast<T>(C);
            const T is = (*inv_sigma)[static_cast<size_t>(r)];
            for (int c = 0; c < C; ++c) {
              const T gp = g[r * C + c] * gv2[c];
              gx[r * C + c] = is * (gp - mean_gp - (*xhat)[r * C + c] * mean_gph);
            }
          }
          t.acc(xi, gx);
        }
      });
}

}  // namespace wmnet
