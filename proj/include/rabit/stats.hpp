#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

#include "rabit/error.hpp"

namespace rabit {

/// Single-pass population moments of a teacher stream and two path streams.
///
/// Keeps running means and co-moments (Welford); two accumulators over
/// disjoint samples merge exactly as if the samples had been pushed into one.
class PathMoments {
 public:
  static constexpr std::size_t kT = 0, k1 = 1, k2 = 2;

  void push(double yt, double y1, double y2) {
    const std::array<double, 3> x{yt, y1, y2};
    ++n_;
    const double inv = 1.0 / static_cast<double>(n_);
    std::array<double, 3> d{};
    for (std::size_t a = 0; a < 3; ++a) {
      d[a] = x[a] - mean_[a];
      mean_[a] += d[a] * inv;
    }
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) co_[a][b] += d[a] * (x[b] - mean_[b]);
    const double e = yt - y1 - y2;
    sq_err_ += e * e;
  }

  void merge(const PathMoments& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(o.n_);
    const double n = na + nb;
    std::array<double, 3> delta{};
    for (std::size_t a = 0; a < 3; ++a) delta[a] = o.mean_[a] - mean_[a];
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        co_[a][b] += o.co_[a][b] + delta[a] * delta[b] * na * nb / n;
    for (std::size_t a = 0; a < 3; ++a) mean_[a] += delta[a] * nb / n;
    n_ += o.n_;
    sq_err_ += o.sq_err_;
  }

  std::size_t count() const noexcept { return n_; }
  double mean(std::size_t a) const { return mean_[a]; }
  /// Population covariance.
  double cov(std::size_t a, std::size_t b) const {
    return n_ == 0 ? 0.0 : co_[a][b] / static_cast<double>(n_);
  }
  /// E[x_a x_b].
  double raw(std::size_t a, std::size_t b) const {
    return cov(a, b) + mean_[a] * mean_[b];
  }
  /// E[(y_t - y_1 - y_2)^2], accumulated directly.
  double mse() const {
    return n_ == 0 ? 0.0 : sq_err_ / static_cast<double>(n_);
  }

 private:
  std::size_t n_ = 0;
  std::array<double, 3> mean_{};
  std::array<std::array<double, 3>, 3> co_{};
  double sq_err_ = 0.0;
};

/// Pearson correlation of two equal-length streams; 0 when either stream has
/// zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  detail::require_shape(a.size() == b.size(), "pearson: length mismatch");
  PathMoments m;
  for (std::size_t i = 0; i < a.size(); ++i) m.push(0.0, a[i], b[i]);
  const double v1 = m.cov(PathMoments::k1, PathMoments::k1);
  const double v2 = m.cov(PathMoments::k2, PathMoments::k2);
  if (!(v1 > 0.0) || !(v2 > 0.0)) return 0.0;
  return m.cov(PathMoments::k1, PathMoments::k2) / std::sqrt(v1 * v2);
}

}  // namespace rabit
