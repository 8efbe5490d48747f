#pragma once

// Quantization-aware training of residual binary layers.
//
// The coupled layer keeps one shared full-precision weight and re-derives every
// binary core from it on each forward pass:
//   R_0 = W_fp,  B_i = sign(R_{i-1}),  R_i = R_{i-1} - g_i (.) B_i (.) h_i.
// The shared weight is updated with the effective-weight gradient dL/dY X^T;
// scales receive their exact gradients with the cores held constant.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rabit/binarize.hpp"
#include "rabit/error.hpp"
#include "rabit/kernel.hpp"
#include "rabit/loss.hpp"
#include "rabit/matrix.hpp"

namespace rabit {

/// Training schemes compared against each other.
///   coupled           cores re-derived from the shared weight; all groups train
///   standard_qat      one latent weight per path, B_i = sign(latent_i)
///   mbok_frozen_core  first core frozen, later cores coupled to the residual
///   scale_only        every core frozen, only scales train
///   scale_frozen      coupled derivation, scales frozen
enum class Variant { coupled, standard_qat, mbok_frozen_core, scale_only, scale_frozen };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::coupled: return "coupled";
    case Variant::standard_qat: return "standard";
    case Variant::mbok_frozen_core: return "mbok";
    case Variant::scale_only: return "scale-only";
    case Variant::scale_frozen: return "scale-frozen";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : {Variant::coupled, Variant::standard_qat, Variant::mbok_frozen_core,
                    Variant::scale_only, Variant::scale_frozen})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Which parameter groups are held fixed. `core[i]` frozen means B_i is the
/// stored core rather than re-derived.
struct FrozenMask {
  bool w_fp = false;
  std::vector<bool> g;
  std::vector<bool> h;
  std::vector<bool> core;

  static FrozenMask for_variant(Variant v, std::size_t k) {
    FrozenMask m;
    m.g.assign(k, false);
    m.h.assign(k, false);
    m.core.assign(k, false);
    switch (v) {
      case Variant::coupled:
      case Variant::standard_qat:
        break;
      case Variant::mbok_frozen_core:
        m.core[0] = true;
        break;
      case Variant::scale_only:
        m.w_fp = true;
        m.core.assign(k, true);
        break;
      case Variant::scale_frozen:
        m.g.assign(k, true);
        m.h.assign(k, true);
        break;
    }
    return m;
  }

  friend bool operator==(const FrozenMask&, const FrozenMask&) = default;
};

struct PathScales {
  ChannelVec g;
  ChannelVec h;
};

struct ForwardResult {
  Matrix y;
  std::vector<BinaryPath> derived;
  /// Residual chain R_1..R_k of the coupled derivation (empty for
  /// standard QAT, which has no shared anchor).
  std::vector<Matrix> residuals;
};

struct GradientBundle {
  Matrix d_wfp;
  std::vector<ChannelVec> d_g;
  std::vector<ChannelVec> d_h;
};

class CoupledLayer;
ForwardResult forward(const CoupledLayer& layer, const Matrix& x);

/// A trainable residual binary layer under one of the Variant schemes.
class CoupledLayer {
 public:
  /// Builds a layer whose step-0 forward is identical across variants: the
  /// shared weight is `w_fp`, scales come from `init`, and the cores are
  /// those of the coupled derivation. Frozen cores are captured from that
  /// derivation; standard QAT latents are set to its residual chain
  /// (latent_1 = W_fp, latent_i = R_{i-1}).
  static CoupledLayer from_init(Variant variant, Matrix w_fp,
                                std::span<const BinaryPath> init) {
    if (init.empty()) throw DomainError("CoupledLayer: k must be >= 1");
    CoupledLayer layer;
    layer.variant_ = Variant::coupled;
    layer.mask_ = FrozenMask::for_variant(variant, init.size());
    layer.stack_ = ResidualStack(std::vector<BinaryPath>(init.begin(), init.end()),
                                 std::move(w_fp));
    // Coupled derivation with no frozen cores yet.
    const FrozenMask frozen = layer.mask_;
    layer.mask_.core.assign(init.size(), false);
    const auto d = layer.derive();
    layer.mask_ = frozen;
    layer.variant_ = variant;
    layer.stack_.paths() = d.paths;
    if (variant == Variant::standard_qat) {
      layer.latents_.push_back(*layer.stack_.w_fp());
      for (std::size_t i = 0; i + 1 < d.residuals.size(); ++i)
        layer.latents_.push_back(d.residuals[i]);
      layer.stack_.discard_w_fp();
    }
    return layer;
  }

  Variant variant() const noexcept { return variant_; }
  const FrozenMask& mask() const noexcept { return mask_; }
  const ResidualStack& stack() const noexcept { return stack_; }
  const std::vector<Matrix>& latents() const noexcept { return latents_; }
  std::size_t k() const noexcept { return stack_.k(); }
  std::size_t rows() const noexcept { return stack_.rows(); }
  std::size_t cols() const noexcept { return stack_.cols(); }

  /// Full-precision matrices that carry optimizer state.
  std::size_t trainable_matrix_count() const noexcept {
    if (variant_ == Variant::standard_qat) return latents_.size();
    return stack_.has_w_fp() && !mask_.w_fp ? 1 : 0;
  }

  std::vector<PathScales> scales() const {
    std::vector<PathScales> s;
    for (const auto& p : stack_.paths()) s.push_back({p.g(), p.h()});
    return s;
  }

  struct Derivation {
    std::vector<BinaryPath> paths;
    std::vector<Matrix> residuals;
  };

  /// Derive the current binary paths (no caching: always from current state).
  Derivation derive() const {
    Derivation d;
    const std::size_t k = stack_.k();
    if (variant_ == Variant::standard_qat) {
      for (std::size_t i = 0; i < k; ++i)
        d.paths.emplace_back(sign(latents_[i]), stack_.path(i).g(), stack_.path(i).h());
      return d;
    }
    if (!stack_.has_w_fp())
      throw StateError("coupled_forward: layer has no shared full-precision weight");
    Matrix r = *stack_.w_fp();
    for (std::size_t i = 0; i < k; ++i) {
      const BinaryPath& p = stack_.path(i);
      Matrix core = mask_.core[i] ? p.core() : sign(r);
      d.paths.emplace_back(std::move(core), p.g(), p.h());
      r -= reconstruct(d.paths.back());
      d.residuals.push_back(r);
    }
    return d;
  }

  /// Replace the shared weight (e.g. to probe re-derivation).
  void set_w_fp(Matrix w) {
    if (!stack_.has_w_fp()) throw StateError("set_w_fp: layer has no shared weight");
    rabit::detail::require_shape(w.same_shape(*stack_.w_fp()), "set_w_fp: shape mismatch");
    stack_.w_fp() = std::move(w);
  }

  /// Plain gradient descent on unfrozen groups, optionally with heavy-ball
  /// momentum (velocity buffers live in the layer). Standard QAT applies the
  /// one shared surrogate step to every latent.
  void sgd_step(const GradientBundle& grads, double lr, double momentum = 0.0) {
    const std::size_t k = stack_.k();
    rabit::detail::require_shape(grads.d_g.size() == k && grads.d_h.size() == k,
                                 "sgd_step: gradient bundle has wrong path count");
    if (lr == 0.0) return;
    ensure_velocity(grads);

    const bool train_w =
        variant_ == Variant::standard_qat || (!mask_.w_fp && stack_.has_w_fp());
    if (train_w) {
      const auto step = direction(grads.d_wfp.data(), vel_w_, momentum);
      if (variant_ == Variant::standard_qat) {
        for (auto& lat : latents_) apply(lat.data(), step, lr);
      } else {
        apply(stack_.w_fp()->data(), step, lr);
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      BinaryPath& p = stack_.paths()[i];
      if (!mask_.g[i]) apply(p.g().data(), direction(grads.d_g[i].data(), vel_g_[i], momentum), lr);
      if (!mask_.h[i]) apply(p.h().data(), direction(grads.d_h[i].data(), vel_h_[i], momentum), lr);
    }
  }

 private:
  void ensure_velocity(const GradientBundle& grads) {
    if (vel_g_.size() == grads.d_g.size()) return;
    vel_w_.assign(grads.d_wfp.size(), 0.0);
    vel_g_.clear();
    vel_h_.clear();
    for (const auto& g : grads.d_g) vel_g_.emplace_back(g.size(), 0.0);
    for (const auto& h : grads.d_h) vel_h_.emplace_back(h.size(), 0.0);
  }

  static std::span<const double> direction(std::span<const double> grad,
                                           std::vector<double>& vel, double momentum) {
    if (momentum == 0.0) return grad;
    rabit::detail::require_shape(vel.size() == grad.size(), "sgd_step: gradient shape");
    for (std::size_t i = 0; i < vel.size(); ++i) vel[i] = momentum * vel[i] + grad[i];
    return vel;
  }

  static void apply(std::span<double> param, std::span<const double> step, double lr) {
    rabit::detail::require_shape(param.size() == step.size(), "sgd_step: gradient shape");
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * step[i];
  }

  Variant variant_ = Variant::coupled;
  FrozenMask mask_;
  ResidualStack stack_;
  std::vector<Matrix> latents_;

  std::vector<double> vel_w_;
  std::vector<std::vector<double>> vel_g_;
  std::vector<std::vector<double>> vel_h_;
};

// ---------------------------------------------------------------------------
// Forward / backward

/// Y = W_hat^(k) X with cores re-derived from the layer's current state.
/// X is d_in x N, one sample per column.
inline ForwardResult coupled_forward(const CoupledLayer& layer, const Matrix& x) {
  rabit::detail::require_shape(x.rows() == layer.cols(),
                               "coupled_forward: X rows != d_in");
  if (layer.variant() == Variant::standard_qat || !layer.stack().has_w_fp())
    throw StateError("coupled_forward: layer has no shared full-precision weight");
  auto d = layer.derive();
  ForwardResult out;
  out.y = matmul(effective_weight(d.paths), x);
  out.derived = std::move(d.paths);
  out.residuals = std::move(d.residuals);
  return out;
}

/// Independent-latent forward: B_i = sign(latent_i).
inline ForwardResult standard_qat_forward(std::span<const Matrix> latents,
                                          std::span<const PathScales> scales,
                                          const Matrix& x) {
  rabit::detail::require_shape(latents.size() == scales.size() && !latents.empty(),
                               "standard_qat_forward: one latent per path required");
  ForwardResult out;
  for (std::size_t i = 0; i < latents.size(); ++i)
    out.derived.emplace_back(sign(latents[i]), scales[i].g, scales[i].h);
  out.y = matmul(effective_weight(out.derived), x);
  return out;
}

inline ForwardResult forward(const CoupledLayer& layer, const Matrix& x) {
  if (layer.variant() == Variant::standard_qat)
    return standard_qat_forward(layer.latents(), layer.scales(), x);
  return coupled_forward(layer, x);
}

/// Gradients for one minibatch. `delta` is dL/dY (d_out x N).
///   d_wfp = delta X^T
///   d_g_i = sum_n delta_n (.) (B_i (h_i (.) x_n))
///   d_h_i = sum_n (B_i^T (delta_n (.) g_i)) (.) x_n
inline GradientBundle backward(const Matrix& x, const Matrix& delta,
                               std::span<const BinaryPath> derived) {
  rabit::detail::require_shape(x.cols() == delta.cols(), "backward: batch size mismatch");
  GradientBundle gb;
  gb.d_wfp = matmul_bt(delta, x);
  for (const auto& p : derived) {
    rabit::detail::require_shape(p.rows() == delta.rows() && p.cols() == x.rows(),
                                 "backward: path shape mismatch");
    Matrix hx = x;
    for (std::size_t j = 0; j < hx.rows(); ++j)
      for (double& v : hx.row(j)) v *= p.h()[j];
    const Matrix bhx = matmul(p.core(), hx);
    ChannelVec dg(Axis::output, p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) dg[i] = dot(delta.row(i), bhx.row(i));

    Matrix gd = delta;
    for (std::size_t i = 0; i < gd.rows(); ++i)
      for (double& v : gd.row(i)) v *= p.g()[i];
    const Matrix btgd = matmul_at(p.core(), gd);
    ChannelVec dh(Axis::input, p.cols());
    for (std::size_t j = 0; j < p.cols(); ++j) dh[j] = dot(btgd.row(j), x.row(j));

    gb.d_g.push_back(std::move(dg));
    gb.d_h.push_back(std::move(dh));
  }
  return gb;
}

inline GradientBundle backward(const CoupledLayer& layer, const Matrix& x,
                               const Matrix& delta, std::span<const BinaryPath> derived) {
  rabit::detail::require_shape(derived.size() == layer.k(), "backward: path count mismatch");
  return backward(x, delta, derived);
}

inline void sgd_step(CoupledLayer& layer, const GradientBundle& grads, double lr,
                     double momentum = 0.0) {
  layer.sgd_step(grads, lr, momentum);
}

/// Derive final cores and drop the shared weight.
inline ResidualStack freeze_stack(const CoupledLayer& layer) {
  return ResidualStack(layer.derive().paths);
}

/// Frozen, bit-packed inference representation.
inline kernel::PackedStack freeze(const CoupledLayer& layer) {
  return kernel::pack(freeze_stack(layer));
}

// ---------------------------------------------------------------------------
// Closed forms for shared-gradient dynamics

/// Change of <W1, W2>_F after both take the step -eta G:
///   -eta (<W1,G> + <W2,G>) + eta^2 ||G||^2
inline double inner_product_drift(const Matrix& w1, const Matrix& w2, const Matrix& g,
                                  double eta) {
  rabit::detail::require_shape(w1.same_shape(w2) && w1.same_shape(g),
                               "inner_product_drift: shape mismatch");
  return -eta * (frobenius_inner(w1, g) + frobenius_inner(w2, g)) +
         eta * eta * frobenius_inner(g, g);
}

/// Cosine between two directions in the joint space of (path 1, path 2).
inline double joint_cosine(const Matrix& a1, const Matrix& a2, const Matrix& b1,
                           const Matrix& b2) {
  const double num = frobenius_inner(a1, b1) + frobenius_inner(a2, b2);
  const double na = std::sqrt(frobenius_inner(a1, a1) + frobenius_inner(a2, a2));
  const double nb = std::sqrt(frobenius_inner(b1, b1) + frobenius_inner(b2, b2));
  if (na == 0.0 || nb == 0.0) throw DomainError("joint_cosine: zero direction");
  return num / (na * nb);
}

/// Cosine between the one-path-frozen step (0, -G) and steepest descent
/// (-G, -G). Constant 1/sqrt(2) for every nonzero G.
inline double iterative_direction_cosine(const Matrix& g) {
  if (frobenius_norm(g) == 0.0)
    throw DomainError("iterative_direction_cosine: G must be nonzero");
  const Matrix zero(g.rows(), g.cols());
  const Matrix neg = -1.0 * g;
  return joint_cosine(zero, neg, neg, neg);
}

}  // namespace rabit
