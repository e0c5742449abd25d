#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "subm/errors.hpp"
#include "subm/rng.hpp"

namespace subm {

/// Dense row-major tensor. Runtime storage is always TensorT<float>; the
/// double instantiation exists for test oracles and the grad-check path.
template <class T>
struct TensorT {
  std::vector<size_t> shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(std::vector<size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  TensorT(std::vector<size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == numel_of(shape), ErrCode::dim_mismatch,
            "tensor data length does not match shape " + shape_str());
  }

  static size_t numel_of(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static TensorT zeros(std::vector<size_t> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<size_t> s, T v) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static TensorT identity(size_t n) {
    TensorT t({n, n});
    for (size_t i = 0; i < n; ++i) t.data[i * n + i] = T(1);
    return t;
  }

  static TensorT random_normal(std::vector<size_t> s, T mean, T stddev, Rng& rng) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = mean + stddev * static_cast<T>(rng.normal());
    return t;
  }

  size_t numel() const { return data.size(); }
  size_t ndim() const { return shape.size(); }

  size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

  T& at(size_t i, size_t j) { return data[i * shape[1] + j]; }
  T at(size_t i, size_t j) const { return data[i * shape[1] + j]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (T v : data) out.data.push_back(static_cast<U>(v));
    return out;
  }

  bool operator==(const TensorT& o) const { return shape == o.shape && data == o.data; }
};

using Tensor = TensorT<float>;

constexpr float kLayerNormEps = 1e-5f;

namespace detail {
template <class T>
void check_matmul(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.ndim() == 2 && b.ndim() == 2, ErrCode::dim_mismatch,
          "matmul needs 2-D operands, got " + a.shape_str() + " and " + b.shape_str());
  require(a.shape[1] == b.shape[0], ErrCode::dim_mismatch,
          "matmul inner dimensions disagree: " + a.shape_str() + " x " + b.shape_str());
}
}  // namespace detail

/// C[i,j] = sum_t A[i,t]*B[t,j], accumulated in T in ascending t order.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_matmul(a, b);
  const size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  TensorT<T> c({m, n});
  for (size_t i = 0; i < m; ++i) {
    const T* arow = &a.data[i * k];
    T* crow = &c.data[i * n];
    for (size_t t = 0; t < k; ++t) {
      const T av = arow[t];
      const T* brow = &b.data[t * n];
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

/// A[m×k] * B^T where B is [n×k].
template <class T>
TensorT<T> matmul_nt(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.shape[1] == b.shape[1], ErrCode::dim_mismatch,
          "matmul_nt shape mismatch: " + a.shape_str() + " x " + b.shape_str() + "^T");
  const size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  TensorT<T> c({m, n});
  for (size_t i = 0; i < m; ++i) {
    const T* arow = &a.data[i * k];
    for (size_t j = 0; j < n; ++j) {
      const T* brow = &b.data[j * k];
      T acc = 0;
      for (size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      c.data[i * n + j] = acc;
    }
  }
  return c;
}

/// A^T * B where A is [k×m], B is [k×n].
template <class T>
TensorT<T> matmul_tn(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.shape[0] == b.shape[0], ErrCode::dim_mismatch,
          "matmul_tn shape mismatch: " + a.shape_str() + "^T x " + b.shape_str());
  const size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  TensorT<T> c({m, n});
  for (size_t t = 0; t < k; ++t) {
    const T* arow = &a.data[t * m];
    const T* brow = &b.data[t * n];
    for (size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = &c.data[i * n];
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

namespace detail {

// Gradient-path variants of the transposed matmuls: accumulation runs in
// double and rounds once at the end. Dot-product cancellation in float alone
// costs up to ~1e-3 relative error on small gradients, which the gradient
// checks cannot distinguish from a backprop bug.
inline Tensor matmul_nt_acc64(const Tensor& a, const Tensor& b) {
  const size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor c({m, n});
  for (size_t i = 0; i < m; ++i) {
    const float* arow = &a.data[i * k];
    for (size_t j = 0; j < n; ++j) {
      const float* brow = &b.data[j * k];
      double acc = 0;
      for (size_t t = 0; t < k; ++t)
        acc += static_cast<double>(arow[t]) * static_cast<double>(brow[t]);
      c.data[i * n + j] = static_cast<float>(acc);
    }
  }
  return c;
}

inline Tensor matmul_tn_acc64(const Tensor& a, const Tensor& b) {
  const size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  std::vector<double> acc(m * n, 0.0);
  for (size_t t = 0; t < k; ++t) {
    const float* arow = &a.data[t * m];
    const float* brow = &b.data[t * n];
    for (size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = &acc[i * n];
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] = static_cast<float>(acc[i]);
  return c;
}

}  // namespace detail

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.same_shape(b), ErrCode::dim_mismatch,
          "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  TensorT<T> c = a;
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.same_shape(b), ErrCode::dim_mismatch,
          "sub shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  TensorT<T> c = a;
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  TensorT<T> c = a;
  for (auto& v : c.data) v *= s;
  return c;
}

/// Adds bias vector b[d] to each row of x[B×d] (or to x[d] itself).
template <class T>
TensorT<T> add_row_bias(const TensorT<T>& x, const TensorT<T>& b) {
  const size_t d = b.numel();
  require(x.numel() % d == 0 && (x.ndim() == 1 ? x.shape[0] == d : x.shape.back() == d),
          ErrCode::dim_mismatch, "bias shape mismatch: " + x.shape_str() + " vs " + b.shape_str());
  TensorT<T> c = x;
  const size_t rows = c.numel() / d;
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < d; ++j) c.data[i * d + j] += b.data[j];
  return c;
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> c = x;
  for (auto& v : c.data) v = v > T(0) ? v : T(0);
  return c;
}

/// Row-wise layer norm over the last dimension using population variance.
/// Mean and variance accumulate in double; normalization is done in T.
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(kLayerNormEps)) {
  const size_t d = gamma.numel();
  require(eps > T(0), ErrCode::precondition, "layer_norm eps must be > 0");
  require(beta.numel() == d && x.numel() % d == 0 && d >= 1 &&
              (x.ndim() == 1 ? x.shape[0] == d : x.shape.back() == d),
          ErrCode::dim_mismatch,
          "layer_norm shape mismatch: " + x.shape_str() + " vs gamma " + gamma.shape_str());
  TensorT<T> y = x;
  const size_t rows = x.numel() / d;
  for (size_t i = 0; i < rows; ++i) {
    const T* xr = &x.data[i * d];
    T* yr = &y.data[i * d];
    double sum = 0.0, sq = 0.0;
    for (size_t j = 0; j < d; ++j) sum += static_cast<double>(xr[j]);
    const double mean = sum / static_cast<double>(d);
    for (size_t j = 0; j < d; ++j) {
      const double c = static_cast<double>(xr[j]) - mean;
      sq += c * c;
    }
    const double var = sq / static_cast<double>(d);
    const T mu = static_cast<T>(mean);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    for (size_t j = 0; j < d; ++j) yr[j] = gamma.data[j] * ((xr[j] - mu) * inv) + beta.data[j];
  }
  return y;
}

/// Sum of squared errors, accumulated in double, rounded to T at the end.
template <class T>
T sse(const TensorT<T>& pred, const TensorT<T>& target) {
  require(pred.same_shape(target), ErrCode::dim_mismatch,
          "sse shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
  }
  return static_cast<T>(acc);
}

/// Mean over all elements of (pred - target)^2.
template <class T>
T mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  require(pred.same_shape(target), ErrCode::dim_mismatch,
          "mse shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  require(pred.numel() > 0, ErrCode::precondition, "mse over empty tensors");
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<double>(pred.numel()));
}

template <class T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

/// FNV-1a over raw element bytes; used for frozen-weight checks.
inline uint64_t hash_bytes(uint64_t h, const void* p, size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  for (size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t hash_tensor(uint64_t h, const Tensor& t) {
  for (size_t d : t.shape) h = hash_bytes(h, &d, sizeof(d));
  return hash_bytes(h, t.data.data(), t.data.size() * sizeof(float));
}

constexpr uint64_t kHashSeed = 0xcbf29ce484222325ull;

}  // namespace subm
