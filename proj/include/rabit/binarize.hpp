#pragma once

// Dual-scale binary paths W_hat = g (.) B (.) h and residual stacks of them.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "rabit/error.hpp"
#include "rabit/matrix.hpp"

namespace rabit {

/// Entrywise sign with sign(0) = +1.
inline Matrix sign(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  auto o = out.data();
  auto in = m.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] < 0.0 ? -1.0 : 1.0;
  return out;
}

inline bool is_binary(const Matrix& m) {
  for (double x : m.data())
    if (x != 1.0 && x != -1.0) return false;
  return true;
}

/// One dual-scale binary term: core B in {-1,+1}, row scales g, column scales h.
class BinaryPath {
 public:
  BinaryPath() = default;

  BinaryPath(Matrix core, ChannelVec g, ChannelVec h)
      : core_(std::move(core)), g_(std::move(g)), h_(std::move(h)) {
    if (!is_binary(core_))
      throw DomainError("BinaryPath: core entries must be exactly +1 or -1");
    detail::require_shape(g_.size() == core_.rows(),
                          "BinaryPath: g length != rows");
    detail::require_shape(h_.size() == core_.cols(),
                          "BinaryPath: h length != cols");
  }

  const Matrix& core() const noexcept { return core_; }
  const ChannelVec& g() const noexcept { return g_; }
  const ChannelVec& h() const noexcept { return h_; }
  ChannelVec& g() noexcept { return g_; }
  ChannelVec& h() noexcept { return h_; }

  std::size_t rows() const noexcept { return core_.rows(); }
  std::size_t cols() const noexcept { return core_.cols(); }

  friend bool operator==(const BinaryPath&, const BinaryPath&) = default;

 private:
  Matrix core_;
  ChannelVec g_{Axis::output, 0};
  ChannelVec h_{Axis::input, 0};
};

inline Matrix reconstruct(const BinaryPath& p) {
  return scale_rows_cols(p.core(), p.g(), p.h());
}

/// k binary paths plus, while training, the shared full-precision weight.
class ResidualStack {
 public:
  ResidualStack() = default;

  explicit ResidualStack(std::vector<BinaryPath> paths,
                         std::optional<Matrix> w_fp = std::nullopt)
      : paths_(std::move(paths)), w_fp_(std::move(w_fp)) {
    if (paths_.empty()) throw DomainError("ResidualStack: k must be >= 1");
    for (const auto& p : paths_)
      detail::require_shape(p.rows() == rows() && p.cols() == cols(),
                            "ResidualStack: path dimensions differ");
    if (w_fp_)
      detail::require_shape(w_fp_->rows() == rows() && w_fp_->cols() == cols(),
                            "ResidualStack: w_fp dimensions differ");
  }

  std::size_t k() const noexcept { return paths_.size(); }
  std::size_t rows() const noexcept { return paths_.front().rows(); }
  std::size_t cols() const noexcept { return paths_.front().cols(); }

  const std::vector<BinaryPath>& paths() const noexcept { return paths_; }
  std::vector<BinaryPath>& paths() noexcept { return paths_; }
  const BinaryPath& path(std::size_t i) const { return paths_.at(i); }

  const std::optional<Matrix>& w_fp() const noexcept { return w_fp_; }
  std::optional<Matrix>& w_fp() noexcept { return w_fp_; }
  bool has_w_fp() const noexcept { return w_fp_.has_value(); }
  void discard_w_fp() noexcept { w_fp_.reset(); }

  friend bool operator==(const ResidualStack&, const ResidualStack&) = default;

 private:
  std::vector<BinaryPath> paths_;
  std::optional<Matrix> w_fp_;
};

/// Sign-Value-Independent Decomposition of R.
///
/// B = sign(R); the magnitudes |R| are fit by their leading singular triple
/// (sigma, u, v) and split symmetrically, g = sqrt(sigma) u, h = sqrt(sigma) v.
/// |R| is nonnegative, so its leading vectors are too; entries that power
/// iteration leaves slightly negative are clamped to zero first.
inline BinaryPath svid(const Matrix& r) {
  Matrix core = sign(r);
  const Rank1Factor f = rank1_svd(abs(r));
  const double root = std::sqrt(f.sigma);
  ChannelVec g(Axis::output, r.rows());
  ChannelVec h(Axis::input, r.cols());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = root * std::max(f.u[i], 0.0);
  for (std::size_t j = 0; j < h.size(); ++j)
    h[j] = root * std::max(f.v[j], 0.0);
  return BinaryPath(std::move(core), std::move(g), std::move(h));
}

inline Matrix effective_weight(std::span<const BinaryPath> paths) {
  if (paths.empty()) throw DomainError("effective_weight: no paths");
  Matrix w = reconstruct(paths.front());
  for (std::size_t i = 1; i < paths.size(); ++i) w += reconstruct(paths[i]);
  return w;
}

inline Matrix effective_weight(const ResidualStack& s) {
  return effective_weight(std::span<const BinaryPath>(s.paths()));
}

}  // namespace rabit
