#pragma once

// Dense row-major fp64 matrices and channel vectors, plus the rank-1
// power-iteration SVD consumed by SVID.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "rabit/error.hpp"

namespace rabit {

namespace detail {

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace detail

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_shape(data_.size() == rows_ * cols_,
                          "Matrix: data length != rows * cols");
    if (!detail::all_finite(data_))
      throw DomainError("Matrix: non-finite entry on construction");
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      detail::require_shape(r.size() == cols_, "Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    if (!detail::all_finite(data_))
      throw DomainError("Matrix: non-finite entry on construction");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix filled(std::size_t rows, std::size_t cols, double value) {
    Matrix m(rows, cols);
    std::fill(m.data_.begin(), m.data_.end(), value);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::span<double> row(std::size_t i) {
    return std::span<double>(data_).subspan(i * cols_, cols_);
  }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Which side of a weight matrix a per-channel vector lives on.
enum class Axis : std::uint8_t { input, output };

class ChannelVec {
 public:
  ChannelVec() = default;

  ChannelVec(Axis axis, std::size_t n) : axis_(axis), data_(n, 0.0) {}

  ChannelVec(Axis axis, std::vector<double> data)
      : axis_(axis), data_(std::move(data)) {
    if (!detail::all_finite(data_))
      throw DomainError("ChannelVec: non-finite entry on construction");
  }

  static ChannelVec filled(Axis axis, std::size_t n, double value) {
    ChannelVec v(axis, n);
    std::fill(v.data_.begin(), v.data_.end(), value);
    return v;
  }

  Axis axis() const noexcept { return axis_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const ChannelVec&, const ChannelVec&) = default;

 private:
  Axis axis_ = Axis::input;
  std::vector<double> data_;
};

/// Leading singular triple: M ~= sigma * u * v^T.
struct Rank1Factor {
  double sigma = 0.0;
  ChannelVec u{Axis::output, 0};
  ChannelVec v{Axis::input, 0};
};

// ---------------------------------------------------------------------------
// Element-wise and reduction helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_shape(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double frobenius_inner(const Matrix& a, const Matrix& b) {
  detail::require_shape(a.same_shape(b), "frobenius_inner: shape mismatch");
  return dot(a.data(), b.data());
}

inline double frobenius_norm(const Matrix& m) { return norm2(m.data()); }

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  detail::require_shape(a.same_shape(b), "add: shape mismatch");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  detail::require_shape(a.same_shape(b), "subtract: shape mismatch");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return out;
}

inline Matrix& operator+=(Matrix& a, const Matrix& b) {
  detail::require_shape(a.same_shape(b), "add: shape mismatch");
  auto o = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return a;
}

inline Matrix& operator-=(Matrix& a, const Matrix& b) {
  detail::require_shape(a.same_shape(b), "subtract: shape mismatch");
  auto o = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return a;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& x : out.data()) x *= s;
  return out;
}

inline Matrix abs(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = std::fabs(x);
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Products

/// out[i][j] = g[i] * W[i][j] * h[j]
inline Matrix scale_rows_cols(const Matrix& w, const ChannelVec& g,
                              const ChannelVec& h) {
  detail::require_shape(g.size() == w.rows(),
                        "scale_rows_cols: g length != rows");
  detail::require_shape(h.size() == w.cols(),
                        "scale_rows_cols: h length != cols");
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double gi = g[i];
    for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = gi * w(i, j) * h[j];
  }
  return out;
}

/// y = W x. Each row accumulates left to right, so results are bit-stable.
inline ChannelVec matvec(const Matrix& w, const ChannelVec& x) {
  detail::require_shape(x.size() == w.cols(), "matvec: x length != cols");
  ChannelVec y(Axis::output, w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    const auto r = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

/// C = A B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::require_shape(a.cols() == b.rows(), "matmul: inner dim mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const auto brow = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

/// C = A B^T
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  detail::require_shape(a.cols() == b.cols(), "matmul_bt: inner dim mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(arow, b.row(j));
  }
  return c;
}

/// C = A^T B
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
  detail::require_shape(a.rows() == b.rows(), "matmul_at: inner dim mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const auto arow = a.row(p);
    const auto brow = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      auto crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += api * brow[j];
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Rank-1 SVD

namespace detail {

inline void normalize_in_place(std::vector<double>& v) {
  const double n = norm2(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
}

inline std::vector<double> seed_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  normalize_in_place(v);
  return v;
}

// Power iteration on M^T M starting from v. Returns the converged right
// vector; sigma is recovered by the caller as ||M v||.
inline std::vector<double> power_iterate(const Matrix& m, std::vector<double> v,
                                         double tol, std::size_t max_iters) {
  std::vector<double> w(m.rows());
  std::vector<double> z(m.cols());
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < m.rows(); ++i) w[i] = dot(m.row(i), v);
    std::fill(z.begin(), z.end(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const auto r = m.row(i);
      const double wi = w[i];
      for (std::size_t j = 0; j < m.cols(); ++j) z[j] += r[j] * wi;
    }
    const double nz = norm2(z);
    if (nz == 0.0) return z;
    double diff2 = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double vj = z[j] / nz;
      diff2 += (vj - v[j]) * (vj - v[j]);
      v[j] = vj;
    }
    if (std::sqrt(diff2) < tol) break;
  }
  return v;
}

}  // namespace detail

/// Leading singular triple of `m` by power iteration on M^T M.
///
/// Iterates until successive right-vector estimates differ by less than `tol`
/// in l2, or `max_iters` is reached. The start vector is seeded from the
/// matrix dimensions so results are reproducible. The returned pair is
/// sign-normalized so the largest-magnitude entry of u is nonnegative.
///
/// An all-zero matrix yields sigma = 0 with u, v set to the first canonical
/// basis vectors.
inline Rank1Factor rank1_svd(const Matrix& m, double tol = 1e-12,
                             std::size_t max_iters = 20000) {
  if (!(tol > 0.0)) throw DomainError("rank1_svd: tol must be positive");
  if (!detail::all_finite(m.data()))
    throw DomainError("rank1_svd: non-finite input");

  Rank1Factor f;
  f.u = ChannelVec(Axis::output, m.rows());
  f.v = ChannelVec(Axis::input, m.cols());
  if (m.empty()) return f;

  const bool nonzero = std::any_of(m.data().begin(), m.data().end(),
                                   [](double x) { return x != 0.0; });
  if (!nonzero) {
    f.u[0] = 1.0;
    f.v[0] = 1.0;
    return f;
  }

  const std::uint64_t base_seed =
      0x9E3779B97F4A7C15ull ^ (static_cast<std::uint64_t>(m.rows()) << 32) ^
      static_cast<std::uint64_t>(m.cols());

  std::vector<double> v;
  std::vector<double> w(m.rows());
  double sigma = 0.0;
  for (int attempt = 0; attempt < 2 && sigma == 0.0; ++attempt) {
    v = detail::power_iterate(
        m, detail::seed_vector(m.cols(), base_seed + 7919u * attempt), tol,
        max_iters);
    for (std::size_t i = 0; i < m.rows(); ++i) w[i] = dot(m.row(i), v);
    sigma = norm2(w);
  }
  if (sigma == 0.0) {
    f.u[0] = 1.0;
    f.v[0] = 1.0;
    return f;
  }

  std::size_t argmax = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] /= sigma;
    if (std::fabs(w[i]) > std::fabs(w[argmax])) argmax = i;
  }
  const double flip = w[argmax] < 0.0 ? -1.0 : 1.0;
  f.sigma = sigma;
  for (std::size_t i = 0; i < w.size(); ++i) f.u[i] = flip * w[i];
  for (std::size_t j = 0; j < v.size(); ++j) f.v[j] = flip * v[j];
  return f;
}

}  // namespace rabit
