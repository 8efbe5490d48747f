#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rabit/init.hpp"
#include "rabit/qat.hpp"
#include "rabit/toy.hpp"

using namespace rabit;

namespace {

std::vector<BinaryPath> random_init(std::size_t r, std::size_t c, std::size_t k,
                                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.6);
  std::vector<BinaryPath> ps;
  for (std::size_t i = 0; i < k; ++i) {
    ChannelVec g(Axis::output, r), h(Axis::input, c);
    for (std::size_t a = 0; a < r; ++a) g[a] = u(rng);
    for (std::size_t b = 0; b < c; ++b) h[b] = u(rng);
    ps.emplace_back(Matrix::filled(r, c, 1.0), g, h);
  }
  return ps;
}

std::vector<oracle::Scales> scales_of(std::span<const BinaryPath> ps) {
  std::vector<oracle::Scales> s;
  for (const auto& p : ps) s.push_back({{p.g().data().begin(), p.g().data().end()},
                 {p.h().data().begin(), p.h().data().end()}});
  return s;
}

std::vector<Matrix> cores_of(std::span<const BinaryPath> ps) {
  std::vector<Matrix> c;
  for (const auto& p : ps) c.push_back(p.core());
  return c;
}

GradientBundle zero_grads(const CoupledLayer& l) {
  GradientBundle g{Matrix(l.rows(), l.cols()), {}, {}};
  for (std::size_t i = 0; i < l.k(); ++i) {
    g.d_g.emplace_back(Axis::output, l.rows());
    g.d_h.emplace_back(Axis::input, l.cols());
  }
  return g;
}

}  // namespace

TEST(CoupledForward, SinglePath) {
  std::mt19937_64 rng(1);
  const Matrix w = oracle::random_matrix(4, 5, rng);
  const auto init = random_init(4, 5, 1, rng);
  const auto layer = CoupledLayer::from_init(Variant::coupled, w, init);
  const Matrix x = oracle::random_matrix(5, 3, rng);
  const auto out = coupled_forward(layer, x);
  EXPECT_EQ(out.derived[0].core(), sign(w));
  EXPECT_EQ(out.y, matmul(reconstruct(BinaryPath(sign(w), init[0].g(), init[0].h())), x));
}

TEST(CoupledForward, ZeroResidualTieBreak) {
  std::mt19937_64 rng(2);
  auto init = random_init(3, 4, 2, rng);
  const BinaryPath p1(oracle::random_signs(3, 4, rng), init[0].g(), init[0].h());
  init[0] = p1;
  const auto layer = CoupledLayer::from_init(Variant::coupled, reconstruct(p1), init);
  const auto out = coupled_forward(layer, Matrix::identity(4));
  EXPECT_EQ(out.residuals[0], Matrix(3, 4));
  EXPECT_EQ(out.derived[1].core(), Matrix::filled(3, 4, 1.0));
  EXPECT_EQ(out.y, reconstruct(p1) + reconstruct(BinaryPath(Matrix::filled(3, 4, 1.0),
                                                            init[1].g(), init[1].h())));
}

TEST(CoupledForward, MatchesScalarAlgorithm) {
  std::mt19937_64 rng(3);
  const Matrix w = oracle::random_matrix(8, 8, rng);
  const auto init = random_init(8, 8, 2, rng);
  const Matrix x = oracle::random_matrix(8, 4, rng);
  const auto out = coupled_forward(CoupledLayer::from_init(Variant::coupled, w, init), x);
  const Matrix ref = oracle::matmul(oracle::coupled_effective(w, scales_of(init)), x);
  EXPECT_LT(oracle::frob_diff(out.y, ref), 1e-12);
  const auto cores = oracle::coupled_cores(w, scales_of(init));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(out.derived[i].core(), cores[i]);
}

TEST(CoupledForward, MissingSharedWeight) {
  std::mt19937_64 rng(4);
  const auto layer =
      CoupledLayer::from_init(Variant::standard_qat, oracle::random_matrix(3, 3, rng),
                              random_init(3, 3, 2, rng));
  EXPECT_THROW(coupled_forward(layer, Matrix(3, 1)), StateError);
  EXPECT_NO_THROW(forward(layer, Matrix(3, 1)));
}

TEST(CoupledForward, ReDerivationIsFresh) {
  std::mt19937_64 rng(5);
  const Matrix w = oracle::random_matrix(5, 6, rng);
  auto layer = CoupledLayer::from_init(Variant::coupled, w, random_init(5, 6, 2, rng));
  const Matrix x = oracle::random_matrix(6, 2, rng);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const double before = coupled_forward(layer, x).derived[0].core()(i, j);
      Matrix w2 = *layer.stack().w_fp();
      w2(i, j) = -w2(i, j) + (w2(i, j) >= 0 ? -1e-3 : 1e-3);
      layer.set_w_fp(w2);
      EXPECT_EQ(coupled_forward(layer, x).derived[0].core()(i, j), -before);
    }
}

TEST(Backward, ZeroDelta) {
  std::mt19937_64 rng(6);
  const auto paths = random_init(3, 4, 2, rng);
  const auto gb = backward(oracle::random_matrix(4, 5, rng), Matrix(3, 5), paths);
  EXPECT_EQ(gb.d_wfp, Matrix(3, 4));
  for (std::size_t i = 0; i < 2; ++i) {
    for (double v : gb.d_g[i].data()) EXPECT_EQ(v, 0.0);
    for (double v : gb.d_h[i].data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, HandExpandedSingleSample) {
  // B = [[1,-1],[1,1]], g = (2,3), h = (0.5,-1), x = (1,2), delta = (1,-1).
  // h.x = (0.5,-2); B(h.x) = (2.5,-1.5); d_g = delta . B(h.x) = (2.5, 1.5).
  // delta.g = (2,-3); B^T(delta.g) = (-1,-5); d_h = (-1,-5) . x = (-1,-10).
  const BinaryPath p(Matrix{{1, -1}, {1, 1}}, ChannelVec(Axis::output, std::vector<double>{2, 3}),
                     ChannelVec(Axis::input, std::vector<double>{0.5, -1}));
  const std::vector<BinaryPath> ps{p};
  const auto gb = backward(Matrix{{1}, {2}}, Matrix{{1}, {-1}}, ps);
  EXPECT_EQ(gb.d_g[0], ChannelVec(Axis::output, std::vector<double>{2.5, 1.5}));
  EXPECT_EQ(gb.d_h[0], ChannelVec(Axis::input, std::vector<double>{-1, -10}));
  EXPECT_EQ(gb.d_wfp, (Matrix{{1, 2}, {-1, -2}}));
}

TEST(Backward, EffectiveWeightGradientIsDeltaXT) {
  std::mt19937_64 rng(7);
  const Matrix x = oracle::random_matrix(6, 9, rng), d = oracle::random_matrix(4, 9, rng);
  const auto gb = backward(x, d, random_init(4, 6, 2, rng));
  EXPECT_LT(oracle::frob_diff(gb.d_wfp, oracle::matmul(d, transpose(x))), 1e-13);
  EXPECT_THROW(backward(x, Matrix(4, 8), random_init(4, 6, 1, rng)), ShapeError);
  EXPECT_THROW(backward(x, d, random_init(4, 5, 1, rng)), ShapeError);
}

class ScaleGradientFd
    : public ::testing::TestWithParam<std::tuple<std::pair<std::size_t, std::size_t>, int>> {};

TEST_P(ScaleGradientFd, MatchesCentralDifferences) {
  const auto [shape, k] = GetParam();
  const auto [r, c] = shape;
  std::mt19937_64 rng(100 + r * 10 + c + k);
  const Matrix w = oracle::random_matrix(r, c, rng);
  const auto layer = CoupledLayer::from_init(Variant::coupled, w,
                                             iterative_residual_svid(w, k, 20));
  const Matrix x = oracle::random_matrix(c, 7, rng);
  const Matrix yt = oracle::matmul(oracle::random_matrix(r, c, rng), x);
  const auto fwd = coupled_forward(layer, x);
  const auto gb = backward(layer, x, mse_distill_grad(fwd.y, yt), fwd.derived);

  // Cores held fixed at the forward's derivation.
  const auto cores = cores_of(fwd.derived);
  auto s = scales_of(fwd.derived);
  const auto f = [&] { return oracle::fixed_core_mse(cores, s, x, yt); };
  auto check = [](double ours, double fd) {
    EXPECT_LT(std::fabs(ours - fd) / std::max(std::fabs(fd), 1e-6), 1e-4)
        << "ours " << ours << " fd " << fd;
  };
  for (int i = 0; i < k; ++i) {
    for (std::size_t a = 0; a < r; ++a) check(gb.d_g[i][a], oracle::central_difference(f, s[i].g[a]));
    for (std::size_t b = 0; b < c; ++b) check(gb.d_h[i][b], oracle::central_difference(f, s[i].h[b]));
  }
}

INSTANTIATE_TEST_SUITE_P(
    Shapes, ScaleGradientFd,
    ::testing::Combine(::testing::Values(std::pair<std::size_t, std::size_t>{2, 3},
                                         std::pair<std::size_t, std::size_t>{5, 5},
                                         std::pair<std::size_t, std::size_t>{8, 4}),
                       ::testing::Values(1, 2, 3)));

TEST(Loss, KlGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  Matrix ys = oracle::random_matrix(5, 4, rng);
  const Matrix yt = oracle::random_matrix(5, 4, rng);
  for (const LossSpec spec : {LossSpec{LossKind::kl_distill, 0.0}, LossSpec{LossKind::kl_distill, 100.0},
                              LossSpec{LossKind::mse_distill, 0.0}}) {
    const Matrix g = distillation_grad(spec, ys, yt);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t n = 0; n < 4; ++n) {
        const double fd = oracle::central_difference(
            [&] { return distillation_loss(spec, ys, yt); }, ys(i, n));
        EXPECT_NEAR(g(i, n), fd, 1e-7 * std::max(1.0, std::fabs(fd)));
      }
  }
  EXPECT_NEAR(kl_distill(yt, yt), 0.0, 1e-15);
  EXPECT_GE(kl_distill(ys, yt), 0.0);
}

TEST(SgdStep, ZeroLearningRateLeavesLayerUnchanged) {
  std::mt19937_64 rng(9);
  auto layer = CoupledLayer::from_init(Variant::coupled, oracle::random_matrix(4, 4, rng),
                                       random_init(4, 4, 2, rng));
  const Matrix x = oracle::random_matrix(4, 3, rng);
  const auto fwd = coupled_forward(layer, x);
  const auto before = layer.stack();
  sgd_step(layer, backward(layer, x, oracle::random_matrix(4, 3, rng), fwd.derived), 0.0);
  EXPECT_TRUE(layer.stack() == before);
}

TEST(SgdStep, UpdateValuesAndMomentumMatchScalarRule) {
  std::mt19937_64 rng(10);
  const Matrix w = oracle::random_matrix(3, 4, rng);
  auto layer = CoupledLayer::from_init(Variant::coupled, w, random_init(3, 4, 2, rng));
  const double lr = 0.1, mu = 0.9;
  GradientBundle g1 = zero_grads(layer), g2 = zero_grads(layer);
  g1.d_wfp = oracle::random_matrix(3, 4, rng);
  g2.d_wfp = oracle::random_matrix(3, 4, rng);
  for (std::size_t i = 0; i < 2; ++i) {
    for (double& v : g1.d_g[i].data()) v = 0.5;
    for (double& v : g2.d_h[i].data()) v = -0.25;
  }
  const auto g0 = layer.stack().path(1).g(), h0 = layer.stack().path(1).h();
  sgd_step(layer, g1, lr, mu);
  sgd_step(layer, g2, lr, mu);
  const Matrix& wn = *layer.stack().w_fp();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double v1 = g1.d_wfp(i, j), v2 = mu * v1 + g2.d_wfp(i, j);
      EXPECT_NEAR(wn(i, j), w(i, j) - lr * v1 - lr * v2, 1e-15);
    }
  // g: v1 = 0.5, v2 = 0.45  h: v1 = 0, v2 = -0.25
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(layer.stack().path(1).g()[i], g0[i] - lr * 0.5 - lr * 0.45, 1e-15);
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_NEAR(layer.stack().path(1).h()[j], h0[j] + lr * 0.25, 1e-15);
}

TEST(SgdStep, SmallStepDecreasesLoss) {
  std::mt19937_64 rng(11);
  const Matrix w = oracle::random_matrix(6, 6, rng);
  auto layer = CoupledLayer::from_init(Variant::coupled, w, random_init(6, 6, 2, rng));
  const Matrix x = oracle::random_matrix(6, 16, rng);
  const Matrix yt = oracle::matmul(w, x);
  const auto fwd = coupled_forward(layer, x);
  const double before = mse_distill(fwd.y, yt);
  sgd_step(layer, backward(layer, x, mse_distill_grad(fwd.y, yt), fwd.derived), 1e-4);
  EXPECT_LT(mse_distill(coupled_forward(layer, x).y, yt), before);
}

TEST(Variants, MasksAreRespected) {
  std::mt19937_64 rng(12);
  const Matrix w = oracle::random_matrix(4, 5, rng);
  const auto init = iterative_residual_svid(w, 2, 20);
  const Matrix x = oracle::random_matrix(5, 8, rng);
  const Matrix delta = oracle::random_matrix(4, 8, rng);

  auto so = CoupledLayer::from_init(Variant::scale_only, w, init);
  const auto so_cores = cores_of(so.derive().paths);
  sgd_step(so, backward(so, x, delta, forward(so, x).derived), 0.5);
  EXPECT_EQ(*so.stack().w_fp(), w);
  EXPECT_EQ(cores_of(so.derive().paths), so_cores);
  EXPECT_NE(so.stack().path(0).g(), init[0].g());

  auto sf = CoupledLayer::from_init(Variant::scale_frozen, w, init);
  sgd_step(sf, backward(sf, x, delta, forward(sf, x).derived), 0.5);
  EXPECT_NE(*sf.stack().w_fp(), w);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(sf.stack().path(i).g(), init[i].g());
    EXPECT_EQ(sf.stack().path(i).h(), init[i].h());
  }

  auto mb = CoupledLayer::from_init(Variant::mbok_frozen_core, w, init);
  const Matrix core0 = mb.derive().paths[0].core();
  mb.set_w_fp(-1.0 * w);
  const auto d = mb.derive();
  EXPECT_EQ(d.paths[0].core(), core0);
  EXPECT_EQ(d.paths[1].core(), sign(-1.0 * w - reconstruct(d.paths[0])));
}

TEST(Variants, IdenticalStepZeroForward) {
  std::mt19937_64 rng(13);
  const Matrix w = oracle::random_matrix(6, 6, rng);
  const auto init = iterative_residual_svid(w, 2, 20);
  const Matrix x = oracle::random_matrix(6, 4, rng);
  const Matrix ref = forward(CoupledLayer::from_init(Variant::coupled, w, init), x).y;
  for (Variant v : {Variant::standard_qat, Variant::mbok_frozen_core, Variant::scale_only,
                    Variant::scale_frozen})
    EXPECT_EQ(forward(CoupledLayer::from_init(v, w, init), x).y, ref) << to_string(v);
}

TEST(StandardQat, IdenticalLatentsGiveIdenticalPaths) {
  std::mt19937_64 rng(14);
  const Matrix lat = oracle::random_matrix(3, 5, rng);
  const auto init = random_init(3, 5, 1, rng);
  const std::vector<Matrix> lats{lat, lat};
  const std::vector<PathScales> sc{{init[0].g(), init[0].h()}, {init[0].g(), init[0].h()}};
  const auto out = standard_qat_forward(lats, sc, oracle::random_matrix(5, 2, rng));
  EXPECT_TRUE(out.derived[0] == out.derived[1]);
  EXPECT_THROW(standard_qat_forward(lats, std::span(sc).first(1), Matrix(5, 1)), ShapeError);
}

TEST(StandardQat, SinglePathEqualsCoupled) {
  std::mt19937_64 rng(15);
  const Matrix w = oracle::random_matrix(4, 4, rng);
  const auto init = random_init(4, 4, 1, rng);
  const Matrix x = oracle::random_matrix(4, 3, rng);
  const std::vector<Matrix> lats{w};
  const std::vector<PathScales> sc{{init[0].g(), init[0].h()}};
  EXPECT_EQ(standard_qat_forward(lats, sc, x).y,
            coupled_forward(CoupledLayer::from_init(Variant::coupled, w, init), x).y);
}

TEST(StandardQat, ScalarOracleAndSharedLatentUpdate) {
  std::mt19937_64 rng(16);
  const Matrix w = oracle::random_matrix(5, 4, rng);
  auto layer = CoupledLayer::from_init(Variant::standard_qat, w, random_init(5, 4, 2, rng));
  ASSERT_EQ(layer.latents().size(), 2u);
  const Matrix x = oracle::random_matrix(4, 3, rng);
  const auto out = forward(layer, x);
  Matrix wh(5, 4);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        wh(i, j) += layer.stack().path(p).g()[i] * oracle::sgn(layer.latents()[p](i, j)) *
                    layer.stack().path(p).h()[j];
  EXPECT_LT(oracle::frob_diff(out.y, oracle::matmul(wh, x)), 1e-13);

  const auto lat0 = layer.latents();
  const Matrix delta = oracle::random_matrix(5, 3, rng);
  const auto gb = backward(layer, x, delta, out.derived);
  sgd_step(layer, gb, 0.01);
  for (std::size_t p = 0; p < 2; ++p)
    EXPECT_LT(oracle::frob_diff(layer.latents()[p] - lat0[p], -0.01 * gb.d_wfp), 1e-15);
}

TEST(Footprint, OptimizerStateMatrixCount) {
  std::mt19937_64 rng(17);
  const Matrix w = oracle::random_matrix(4, 4, rng);
  const auto init = random_init(4, 4, 2, rng);
  EXPECT_EQ(CoupledLayer::from_init(Variant::coupled, w, init).trainable_matrix_count(), 1u);
  EXPECT_EQ(CoupledLayer::from_init(Variant::standard_qat, w, init).trainable_matrix_count(), 2u);
  EXPECT_EQ(CoupledLayer::from_init(Variant::scale_only, w, init).trainable_matrix_count(), 0u);
  EXPECT_FALSE(CoupledLayer::from_init(Variant::standard_qat, w, init).stack().has_w_fp());
}

TEST(Freeze, MatchesLastDerivationAndKernel) {
  std::mt19937_64 rng(18);
  const Matrix w = oracle::random_matrix(16, 40, rng);
  auto layer = CoupledLayer::from_init(Variant::coupled, w, iterative_residual_svid(w, 2, 20));
  const Matrix x = oracle::random_matrix(40, 8, rng);
  for (int s = 0; s < 3; ++s) {
    const auto fwd = coupled_forward(layer, x);
    sgd_step(layer, backward(layer, x, mse_distill_grad(fwd.y, matmul(w, x)), fwd.derived), 0.05);
  }
  const ResidualStack fs = freeze_stack(layer);
  EXPECT_FALSE(fs.has_w_fp());
  EXPECT_EQ(effective_weight(fs), effective_weight(layer.derive().paths));

  const auto packed = freeze(layer);
  Matrix col(40, 1);
  std::vector<float> xf(40);
  for (std::size_t j = 0; j < 40; ++j) {
    col(j, 0) = x(j, 0);
    xf[j] = static_cast<float>(x(j, 0));
  }
  const Matrix y = coupled_forward(layer, col).y;
  const auto yk = kernel::stacked_gemv(packed, xf);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    num += std::pow(yk[i] - y(i, 0), 2);
    den += y(i, 0) * y(i, 0);
  }
  EXPECT_LT(std::sqrt(num / den), 1e-5);
}

TEST(SharedGradient, InnerProductDrift) {
  std::mt19937_64 rng(19);
  const Matrix w1 = oracle::random_matrix(3, 4, rng), w2 = oracle::random_matrix(3, 4, rng);
  const Matrix g = oracle::random_matrix(3, 4, rng);
  EXPECT_EQ(inner_product_drift(w1, w2, Matrix(3, 4), 0.3), 0.0);
  EXPECT_DOUBLE_EQ(inner_product_drift(Matrix(3, 4), Matrix(3, 4), g, 0.3),
                   0.09 * oracle::frob2(g));
  EXPECT_GT(inner_product_drift(Matrix(3, 4), Matrix(3, 4), g, 0.3), 0.0);
  for (double eta : {1e-3, 0.1, 0.7}) {
    const Matrix a = w1 - eta * g, b = w2 - eta * g;
    double direct = 0, base = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        direct += a(i, j) * b(i, j);
        base += w1(i, j) * w2(i, j);
      }
    EXPECT_NEAR(inner_product_drift(w1, w2, g, eta), direct - base, 1e-12);
  }
}

TEST(SharedGradient, IterativeDirectionCosine) {
  Matrix single(2, 3);
  single(1, 2) = 4.0;
  EXPECT_NEAR(iterative_direction_cosine(single), 0.7071067811865476, 1e-12);
  std::mt19937_64 rng(20);
  for (auto [r, c] : {std::pair{1, 1}, std::pair{5, 2}, std::pair{7, 9}}) {
    const Matrix g = oracle::random_matrix(r, c, rng);
    EXPECT_NEAR(iterative_direction_cosine(g), 1.0 / std::sqrt(2.0), 1e-12);
    // Generic joint cosine by hand.
    const double num = oracle::frob2(g);
    const double na = std::sqrt(oracle::frob2(g)), nb = std::sqrt(2 * oracle::frob2(g));
    EXPECT_NEAR(iterative_direction_cosine(g), num / (na * nb), 1e-12);
  }
  EXPECT_THROW(iterative_direction_cosine(Matrix(2, 2)), DomainError);
}

TEST(TrainToy, ZeroStepsTraceEqualsInitReport) {
  toy::TrainConfig cfg;
  cfg.steps = 0;
  cfg.seed = 3;
  const Matrix w = toy::random_teacher(16, 16, 3);
  const auto scales = toy::geometric_scales(16, 10.0);
  const auto res = toy::train_toy(cfg, w, scales);
  ASSERT_EQ(res.trace.rows.size(), 1u);
  EXPECT_EQ(res.trace.rows[0].step, 0u);
  EXPECT_EQ(res.trace.rows[0].loss, res.init.initial_task_loss);
}

TEST(TrainToy, LoggingCadenceAndDeterminism) {
  toy::TrainConfig cfg;
  cfg.steps = 10;
  cfg.log_every = 4;
  cfg.variant = Variant::standard_qat;
  const Matrix w = toy::random_teacher(8, 8, 0);
  const auto scales = toy::geometric_scales(8, 10.0);
  const auto a = toy::train_toy(cfg, w, scales), b = toy::train_toy(cfg, w, scales);
  std::vector<std::size_t> steps;
  for (const auto& r : a.trace.rows) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 4, 8, 10}));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    EXPECT_EQ(a.trace.rows[i].loss, b.trace.rows[i].loss);
    EXPECT_EQ(a.trace.rows[i].residual_norms.size(), 2u);
  }
  EXPECT_EQ(a.final_weight, b.final_weight);
}

TEST(TrainToy, ConfigValidation) {
  const Matrix w = toy::random_teacher(4, 4, 0);
  const auto scales = toy::geometric_scales(4, 10.0);
  toy::TrainConfig bad;
  bad.lr = 0.0;
  EXPECT_THROW(toy::train_toy(bad, w, scales), DomainError);
  bad = {};
  bad.batch = 0;
  EXPECT_THROW(toy::train_toy(bad, w, scales), DomainError);
  EXPECT_THROW(toy::train_toy({}, w, toy::geometric_scales(5, 10.0)), ShapeError);
}

TEST(TrainToy, NonFiniteLossAborts) {
  toy::TrainConfig cfg;
  cfg.lr = 1e6;
  cfg.steps = 200;
  const Matrix w = toy::random_teacher(8, 8, 1);
  try {
    toy::train_toy(cfg, w, toy::geometric_scales(8, 10.0));
    FAIL() << "expected divergence";
  } catch (const NonFiniteLossError& e) {
    EXPECT_GE(e.step(), 1u);
    EXPECT_EQ(e.layer(), "toy");
  }
}
