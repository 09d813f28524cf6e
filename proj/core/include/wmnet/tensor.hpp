#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wmnet {

/// Thrown when an operation receives inputs that violate its contract
/// (shape mismatches, non-finite values, invalid configuration).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

#define WMNET_CHECK(cond, msg)                       \
  do {                                               \
    if (!(cond)) throw ::wmnet::ValidationError(msg); \
  } while (0)

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

/// Dense row-major tensor. Feature maps are (H, W, C) with channels
/// fastest; token sequences are (L, C); conv kernels are (kh, kw, Cin, Cout).
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(Shape s, T fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }

  template <typename Rng>
  static Tensor randn(Shape s, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(s));
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& v : t.data) v = static_cast<T>(d(rng)) * stddev;
    return t;
  }

  template <typename Rng>
  static Tensor uniform(Shape s, Rng& rng, T lo, T hi) {
    Tensor t(std::move(s));
    std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data) v = static_cast<T>(d(rng));
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // (H, W, C) accessor
  T& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + c];
  }
  const T& at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + c];
  }

  // (R, C) accessor
  T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T abs_max() const {
    T m = 0;
    for (const T& v : data) m = std::max(m, static_cast<T>(std::abs(v)));
    return m;
  }

  double sum_sq() const {
    double s = 0;
    for (const T& v : data) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  WMNET_CHECK(a.shape == b.shape, "max_abs_diff: shape mismatch " + shape_str(a.shape) +
                                      " vs " + shape_str(b.shape));
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace wmnet
