#pragma once

// Distillation losses over column-per-sample output batches (d_out x N) and
// their gradients with respect to the student output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string_view>
#include <vector>

#include "rabit/error.hpp"
#include "rabit/matrix.hpp"

namespace rabit {

enum class LossKind { mse_distill, kl_distill };

/// mse_distill: ||Y_s - Y_t||^2 / (N d_out).
/// kl_distill: mean_n KL(softmax(y_t) || softmax(y_s)) + gamma * mse_distill.
struct LossSpec {
  LossKind kind = LossKind::mse_distill;
  double gamma = 0.0;
};

inline std::string_view to_string(LossKind k) {
  return k == LossKind::mse_distill ? "mse" : "kl";
}

inline double mse_distill(const Matrix& ys, const Matrix& yt) {
  detail::require_shape(ys.same_shape(yt), "mse_distill: shape mismatch");
  if (ys.empty()) return 0.0;
  double s = 0.0;
  auto a = ys.data();
  auto b = yt.data();
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(ys.size());
}

inline Matrix mse_distill_grad(const Matrix& ys, const Matrix& yt) {
  detail::require_shape(ys.same_shape(yt), "mse_distill_grad: shape mismatch");
  Matrix g(ys.rows(), ys.cols());
  const double c = ys.empty() ? 0.0 : 2.0 / static_cast<double>(ys.size());
  auto o = g.data();
  auto a = ys.data();
  auto b = yt.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = c * (a[i] - b[i]);
  return g;
}

namespace detail {

// Column-wise log-softmax (softmax over the output dimension).
inline Matrix log_softmax_columns(const Matrix& y) {
  Matrix out(y.rows(), y.cols());
  for (std::size_t n = 0; n < y.cols(); ++n) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < y.rows(); ++i) mx = std::max(mx, y(i, n));
    double z = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) z += std::exp(y(i, n) - mx);
    const double lz = mx + std::log(z);
    for (std::size_t i = 0; i < y.rows(); ++i) out(i, n) = y(i, n) - lz;
  }
  return out;
}

}  // namespace detail

inline double kl_distill(const Matrix& ys, const Matrix& yt) {
  detail::require_shape(ys.same_shape(yt), "kl_distill: shape mismatch");
  if (ys.cols() == 0) return 0.0;
  const Matrix ls = detail::log_softmax_columns(ys);
  const Matrix lt = detail::log_softmax_columns(yt);
  double s = 0.0;
  for (std::size_t n = 0; n < ys.cols(); ++n)
    for (std::size_t i = 0; i < ys.rows(); ++i)
      s += std::exp(lt(i, n)) * (lt(i, n) - ls(i, n));
  return s / static_cast<double>(ys.cols());
}

inline Matrix kl_distill_grad(const Matrix& ys, const Matrix& yt) {
  detail::require_shape(ys.same_shape(yt), "kl_distill_grad: shape mismatch");
  Matrix g(ys.rows(), ys.cols());
  if (ys.cols() == 0) return g;
  const Matrix ls = detail::log_softmax_columns(ys);
  const Matrix lt = detail::log_softmax_columns(yt);
  const double inv_n = 1.0 / static_cast<double>(ys.cols());
  for (std::size_t n = 0; n < ys.cols(); ++n)
    for (std::size_t i = 0; i < ys.rows(); ++i)
      g(i, n) = (std::exp(ls(i, n)) - std::exp(lt(i, n))) * inv_n;
  return g;
}

inline double distillation_loss(const LossSpec& spec, const Matrix& ys,
                                const Matrix& yt) {
  if (spec.kind == LossKind::mse_distill) return mse_distill(ys, yt);
  double l = kl_distill(ys, yt);
  if (spec.gamma != 0.0) l += spec.gamma * mse_distill(ys, yt);
  return l;
}

/// dL/dY_s for `distillation_loss`.
inline Matrix distillation_grad(const LossSpec& spec, const Matrix& ys,
                                const Matrix& yt) {
  if (spec.kind == LossKind::mse_distill) return mse_distill_grad(ys, yt);
  Matrix g = kl_distill_grad(ys, yt);
  if (spec.gamma != 0.0) g += spec.gamma * mse_distill_grad(ys, yt);
  return g;
}

}  // namespace rabit
