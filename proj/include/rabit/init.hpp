#pragma once

// Path initialization: greedy SVID, Gauss-Seidel iterative residual SVID, and
// the calibrated pipeline that runs the iteration on an I/O-importance
// preconditioned weight and maps the scales back.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "rabit/binarize.hpp"
#include "rabit/error.hpp"
#include "rabit/loss.hpp"
#include "rabit/matrix.hpp"

namespace rabit {

inline constexpr std::size_t kDefaultSvidIterations = 20;
inline constexpr double kProfileFloor = 1e-6;

/// Per-channel importance statistics and their intensities.
///
/// s_in / s_out are normalized to a maximum of exactly 1 and floored at
/// kProfileFloor, so s^-alpha stays finite for dead channels.
class CalibProfile {
 public:
  CalibProfile(ChannelVec s_in, ChannelVec s_out, double alpha_in,
               double alpha_out)
      : s_in_(std::move(s_in)),
        s_out_(std::move(s_out)),
        alpha_in_(alpha_in),
        alpha_out_(alpha_out) {
    validate();
  }

  /// Normalizes raw magnitudes by their max and applies the floor. An
  /// all-zero statistic carries no importance information and becomes all
  /// ones.
  static CalibProfile from_raw(std::vector<double> s_in_raw,
                               std::vector<double> s_out_raw, double alpha_in,
                               double alpha_out) {
    return CalibProfile(ChannelVec(Axis::input, normalize(std::move(s_in_raw))),
                        ChannelVec(Axis::output, normalize(std::move(s_out_raw))),
                        alpha_in, alpha_out);
  }

  static CalibProfile uniform(std::size_t d_out, std::size_t d_in,
                              double alpha_in, double alpha_out) {
    return CalibProfile(ChannelVec::filled(Axis::input, d_in, 1.0),
                        ChannelVec::filled(Axis::output, d_out, 1.0), alpha_in,
                        alpha_out);
  }

  const ChannelVec& s_in() const noexcept { return s_in_; }
  const ChannelVec& s_out() const noexcept { return s_out_; }
  double alpha_in() const noexcept { return alpha_in_; }
  double alpha_out() const noexcept { return alpha_out_; }

  CalibProfile with_alphas(double alpha_in, double alpha_out) const {
    return CalibProfile(s_in_, s_out_, alpha_in, alpha_out);
  }

  /// s_in^(sign * alpha_in), and likewise for the output side.
  ChannelVec in_factor(double sign) const { return power(s_in_, sign * alpha_in_); }
  ChannelVec out_factor(double sign) const {
    return power(s_out_, sign * alpha_out_);
  }

  friend bool operator==(const CalibProfile&, const CalibProfile&) = default;

 private:
  static std::vector<double> normalize(std::vector<double> s) {
    if (s.empty()) throw DomainError("CalibProfile: empty statistic");
    double mx = 0.0;
    for (double x : s) {
      if (!std::isfinite(x) || x < 0.0)
        throw DomainError("CalibProfile: magnitudes must be finite and >= 0");
      mx = std::max(mx, x);
    }
    for (double& x : s) x = mx > 0.0 ? std::max(x / mx, kProfileFloor) : 1.0;
    return s;
  }

  static ChannelVec power(const ChannelVec& s, double e) {
    ChannelVec out(s.axis(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = std::pow(s[i], e);
    return out;
  }

  void validate() const {
    auto check = [](const ChannelVec& s, const char* name) {
      if (s.size() == 0)
        throw DomainError(std::string("CalibProfile: empty ") + name);
      double mx = 0.0;
      for (double x : s.data()) {
        if (!(x > 0.0))
          throw DomainError(std::string("CalibProfile: nonpositive entry in ") +
                            name);
        mx = std::max(mx, x);
      }
      if (mx != 1.0)
        throw DomainError(std::string("CalibProfile: max of ") + name +
                          " must be 1");
    };
    check(s_in_, "s_in");
    check(s_out_, "s_out");
    if (s_in_.axis() != Axis::input || s_out_.axis() != Axis::output)
      throw DomainError("CalibProfile: channel vectors on wrong axis");
    if (!(alpha_in_ >= 0.0 && alpha_in_ <= 1.0 && alpha_out_ >= 0.0 &&
          alpha_out_ <= 1.0))
      throw DomainError("CalibProfile: intensities must lie in [0, 1]");
  }

  ChannelVec s_in_;
  ChannelVec s_out_;
  double alpha_in_ = 0.0;
  double alpha_out_ = 0.0;
};

/// s_in[j] = max_n |x_n[j]|, s_out[i] = max_n |delta_n[i]|, then normalized.
inline CalibProfile collect_calib_profile(std::span<const ChannelVec> layer_inputs,
                                          std::span<const ChannelVec> output_grads,
                                          double alpha_in, double alpha_out) {
  if (layer_inputs.empty() || output_grads.empty())
    throw DomainError("collect_calib_profile: empty sample list");
  auto fold = [](std::span<const ChannelVec> xs, const char* what) {
    std::vector<double> m(xs.front().size(), 0.0);
    for (const auto& x : xs) {
      detail::require_shape(x.size() == m.size(), what);
      for (std::size_t j = 0; j < m.size(); ++j)
        m[j] = std::max(m[j], std::fabs(x[j]));
    }
    return m;
  };
  return CalibProfile::from_raw(
      fold(layer_inputs, "collect_calib_profile: ragged input samples"),
      fold(output_grads, "collect_calib_profile: ragged gradient samples"),
      alpha_in, alpha_out);
}

/// Column-per-sample overload: X is d_in x N, dY is d_out x N.
inline CalibProfile collect_calib_profile(const Matrix& x, const Matrix& dy,
                                          double alpha_in, double alpha_out) {
  if (x.cols() == 0 || dy.cols() == 0)
    throw DomainError("collect_calib_profile: empty sample list");
  auto fold = [](const Matrix& m) {
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (double v : m.row(i)) out[i] = std::max(out[i], std::fabs(v));
    return out;
  };
  return CalibProfile::from_raw(fold(x), fold(dy), alpha_in, alpha_out);
}

/// W' = s_out^alpha_out (.) W (.) s_in^alpha_in
inline Matrix precondition(const Matrix& w, const CalibProfile& c) {
  detail::require_shape(c.s_out().size() == w.rows() && c.s_in().size() == w.cols(),
                        "precondition: profile does not match weight");
  return scale_rows_cols(w, c.out_factor(1.0), c.in_factor(1.0));
}

/// Maps scales fit in the preconditioned domain back: g = s_out^-a (.) g',
/// h = s_in^-a (.) h'. Cores are untouched.
inline std::vector<BinaryPath> unprecondition_scales(std::span<const BinaryPath> paths,
                                                     const CalibProfile& c) {
  const ChannelVec out_inv = c.out_factor(-1.0);
  const ChannelVec in_inv = c.in_factor(-1.0);
  std::vector<BinaryPath> result;
  result.reserve(paths.size());
  for (const auto& p : paths) {
    detail::require_shape(p.rows() == out_inv.size() && p.cols() == in_inv.size(),
                          "unprecondition_scales: profile does not match path");
    ChannelVec g(Axis::output, p.rows());
    ChannelVec h(Axis::input, p.cols());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = out_inv[i] * p.g()[i];
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = in_inv[j] * p.h()[j];
    result.emplace_back(p.core(), std::move(g), std::move(h));
  }
  return result;
}

/// Sequential one-shot decomposition: each path fits the residual left by the
/// previous ones and is never revisited.
inline std::vector<BinaryPath> greedy_svid_init(const Matrix& w, std::size_t k) {
  if (k < 1) throw DomainError("greedy_svid_init: k must be >= 1");
  std::vector<BinaryPath> paths;
  paths.reserve(k);
  Matrix r = w;
  for (std::size_t i = 0; i < k; ++i) {
    paths.push_back(svid(r));
    r -= reconstruct(paths.back());
  }
  return paths;
}

struct IterativeSvidOptions {
  /// Stop once a sweep improves the residual norm by less than this fraction.
  /// Zero disables the short-circuit.
  double early_stop_rel = 1e-10;
};

struct IterativeSvidResult {
  std::vector<BinaryPath> paths;
  /// ||W - sum_i W_hat_i||_F after each completed sweep.
  std::vector<double> sweep_residuals;
};

/// Gauss-Seidel residual SVID. In sweep t, path i refits
///   R_i = W - sum_{j<i} W_hat_j^(t) - sum_{j>i} W_hat_j^(t-1)
/// starting from W_hat^(0) = 0, so a single sweep is exactly the greedy
/// decomposition.
inline IterativeSvidResult iterative_residual_svid_trace(
    const Matrix& w, std::size_t k, std::size_t t_max = kDefaultSvidIterations,
    IterativeSvidOptions opts = {}) {
  if (k < 1) throw DomainError("iterative_residual_svid: k must be >= 1");
  if (t_max < 1) throw DomainError("iterative_residual_svid: t_max must be >= 1");

  IterativeSvidResult res;
  std::vector<Matrix> recon(k, Matrix(w.rows(), w.cols()));
  std::vector<bool> fitted(k, false);
  res.paths.resize(k);

  for (std::size_t t = 0; t < t_max; ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      Matrix r = w;
      for (std::size_t j = 0; j < k; ++j)
        if (j != i && fitted[j]) r -= recon[j];
      res.paths[i] = svid(r);
      recon[i] = reconstruct(res.paths[i]);
      fitted[i] = true;
    }
    Matrix total = w;
    for (const auto& m : recon) total -= m;
    const double norm = frobenius_norm(total);
    const bool stall =
        !res.sweep_residuals.empty() && opts.early_stop_rel > 0.0 &&
        res.sweep_residuals.back() - norm <
            opts.early_stop_rel * res.sweep_residuals.back();
    res.sweep_residuals.push_back(norm);
    if (stall) break;
  }
  return res;
}

inline std::vector<BinaryPath> iterative_residual_svid(
    const Matrix& w, std::size_t k, std::size_t t_max = kDefaultSvidIterations,
    IterativeSvidOptions opts = {}) {
  return iterative_residual_svid_trace(w, k, t_max, opts).paths;
}

/// Precondition, iterate, map back.
inline std::vector<BinaryPath> calibrated_init(
    const Matrix& w, std::size_t k, std::size_t t_max, const CalibProfile& c,
    IterativeSvidOptions opts = {}) {
  const Matrix wp = precondition(w, c);
  const auto paths = iterative_residual_svid(wp, k, t_max, opts);
  return unprecondition_scales(paths, c);
}

enum class InitMethod { greedy, iterative, iterative_precond };

inline std::string_view to_string(InitMethod m) {
  switch (m) {
    case InitMethod::greedy: return "greedy";
    case InitMethod::iterative: return "iterative";
    case InitMethod::iterative_precond: return "iterative_precond";
  }
  return "?";
}

/// Calibration batch for measuring functional error: inputs (d_in x N) and
/// the teacher's outputs on them (d_out x N).
struct TeacherIO {
  Matrix inputs;
  Matrix targets;

  static TeacherIO from_teacher(const Matrix& teacher, Matrix inputs) {
    Matrix t = matmul(teacher, inputs);
    return TeacherIO{std::move(inputs), std::move(t)};
  }
};

struct InitReport {
  double avg_mae = 0.0;
  double avg_mse = 0.0;
  double initial_task_loss = 0.0;
  InitMethod method = InitMethod::greedy;
};

inline InitReport init_report(const Matrix& w, std::span<const BinaryPath> paths,
                              const TeacherIO& io, InitMethod method,
                              const LossSpec& loss = {}) {
  const Matrix w_hat = effective_weight(paths);
  detail::require_shape(w_hat.same_shape(w), "init_report: shape mismatch");
  InitReport rep;
  rep.method = method;
  const auto a = w.data();
  const auto b = w_hat.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    rep.avg_mae += std::fabs(d);
    rep.avg_mse += d * d;
  }
  if (!a.empty()) {
    rep.avg_mae /= static_cast<double>(a.size());
    rep.avg_mse /= static_cast<double>(a.size());
  }
  rep.initial_task_loss =
      distillation_loss(loss, matmul(w_hat, io.inputs), io.targets);
  return rep;
}

}  // namespace rabit
