#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rabit/analysis.hpp"
#include "rabit/svg.hpp"

using namespace rabit;

namespace {

std::vector<double> normal_stream(std::size_t n, double mean, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

void expect_decomp_near(const MseDecomposition& a, const MseDecomposition& b, double tol) {
  EXPECT_NEAR(a.c_prime, b.c_prime, tol);
  EXPECT_NEAR(a.amp, b.amp, tol);
  EXPECT_NEAR(a.corr, b.corr, tol);
  EXPECT_NEAR(a.cov, b.cov, tol);
  EXPECT_NEAR(a.total, b.total, tol);
  EXPECT_NEAR(a.mean_product_residual, b.mean_product_residual, tol);
}

}  // namespace

TEST(DecomposeMse, PerfectCancellation) {
  std::mt19937_64 rng(1);
  const auto y1 = normal_stream(1000, 0.3, 1.0, rng);
  std::vector<double> y2(y1.size()), yt(y1.size(), 0.0);
  for (std::size_t i = 0; i < y1.size(); ++i) y2[i] = -y1[i];
  const auto d = decompose_mse(yt, y1, y2);
  EXPECT_NEAR(d.corr, -1.0, 1e-12);
  EXPECT_EQ(d.mse, 0.0);
  // total omits 2E[y1]E[y2], which is -2 mean^2 here.
  EXPECT_NEAR(d.total + d.mean_product_residual, 0.0, 1e-12);
  EXPECT_FALSE(d.degenerate);
}

TEST(DecomposeMse, PerfectCancellationZeroMean) {
  std::vector<double> y1{1, -1, 2, -2}, y2{-1, 1, -2, 2}, yt(4, 0.0);
  const auto d = decompose_mse(yt, y1, y2);
  EXPECT_EQ(d.corr, -1.0);
  EXPECT_NEAR(d.total, 0.0, 1e-15);
}

TEST(DecomposeMse, IndependentStreams) {
  std::mt19937_64 rng(2);
  const auto yt = normal_stream(100000, 0.0, 1.0, rng);
  const auto y1 = normal_stream(100000, 0.0, 0.5, rng);
  const auto y2 = normal_stream(100000, 0.0, 0.7, rng);
  const auto d = decompose_mse(yt, y1, y2);
  EXPECT_NEAR(d.corr, 0.0, 0.02);
  EXPECT_NEAR(d.total, d.c_prime, 0.02 * d.c_prime);
}

TEST(DecomposeMse, IdentityHoldsOnArbitraryStreams) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto yt = normal_stream(257, 0.5, 2.0, rng);
    const auto y1 = normal_stream(257, -0.2, 1.0, rng);
    auto y2 = normal_stream(257, 1.1, 0.3, rng);
    for (std::size_t i = 0; i < y2.size(); ++i) y2[i] -= 0.4 * y1[i];
    const auto d = decompose_mse(yt, y1, y2);
    EXPECT_NEAR(d.mse, d.c_prime + d.cov + d.mean_product_residual, 1e-9);
    EXPECT_LE(d.identity_error(), kIdentityTolerance);
    EXPECT_NEAR(d.cov, d.amp * d.corr, 1e-12);
    EXPECT_GE(d.corr, -1.0);
    EXPECT_LE(d.corr, 1.0);

    const auto ref = oracle::two_pass_moments(yt, y1, y2);
    EXPECT_NEAR(d.c_prime, ref.c_prime, 1e-10);
    EXPECT_NEAR(d.amp, 2 * std::sqrt(ref.var1 * ref.var2), 1e-10);
    EXPECT_NEAR(d.corr, ref.cov12 / std::sqrt(ref.var1 * ref.var2), 1e-10);
    EXPECT_NEAR(d.mean_product_residual, 2 * ref.mean1 * ref.mean2, 1e-10);
    EXPECT_NEAR(d.mse, ref.mse, 1e-10);
  }
}

TEST(DecomposeMse, SymmetricInPaths) {
  std::mt19937_64 rng(4);
  const auto yt = normal_stream(300, 0, 1, rng), y1 = normal_stream(300, 0.1, 1, rng),
             y2 = normal_stream(300, -0.3, 2, rng);
  expect_decomp_near(decompose_mse(yt, y1, y2), decompose_mse(yt, y2, y1), 1e-12);
}

TEST(DecomposeMse, JointScalingScalesAmplitude) {
  std::mt19937_64 rng(5);
  const auto yt = normal_stream(300, 0, 1, rng);
  auto y1 = normal_stream(300, 0.1, 1, rng), y2 = normal_stream(300, -0.3, 2, rng);
  const auto a = decompose_mse(yt, y1, y2);
  for (double& v : y1) v *= 3.0;
  for (double& v : y2) v *= 3.0;
  const auto b = decompose_mse(yt, y1, y2);
  EXPECT_NEAR(b.amp, 9.0 * a.amp, 1e-10 * b.amp);
  EXPECT_NEAR(b.corr, a.corr, 1e-12);
}

TEST(DecomposeMse, Degenerate) {
  const std::vector<double> one{1.0};
  EXPECT_TRUE(decompose_mse(one, one, one).degenerate);
  const std::vector<double> yt{1, 2, 3}, y1{1, 1, 1}, y2{0, 1, 2};
  const auto d = decompose_mse(yt, y1, y2);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.corr, 0.0);
  EXPECT_NEAR(d.mse, d.c_prime + d.cov + d.mean_product_residual, 1e-12);
  EXPECT_THROW(decompose_mse(yt, y1, one), ShapeError);
}

TEST(PathMoments, MergeIsExactAndAssociative) {
  std::mt19937_64 rng(6);
  const auto yt = normal_stream(600, 0.2, 1, rng), y1 = normal_stream(600, 1, 1, rng),
             y2 = normal_stream(600, -1, 0.5, rng);
  PathMoments whole, a, b, c;
  for (std::size_t i = 0; i < 600; ++i) {
    whole.push(yt[i], y1[i], y2[i]);
    (i < 100 ? a : i < 350 ? b : c).push(yt[i], y1[i], y2[i]);
  }
  PathMoments left = a;
  left.merge(b);
  left.merge(c);
  PathMoments bc = b;
  bc.merge(c);
  PathMoments right = a;
  right.merge(bc);
  const auto dw = decompose_from_moments(whole);
  expect_decomp_near(decompose_from_moments(left), dw, 1e-12);
  expect_decomp_near(decompose_from_moments(right), dw, 1e-12);
  EXPECT_EQ(left.count(), 600u);
}

TEST(Combine, ReferenceRowArithmetic) {
  const auto r = combine(0.0023, 0.0028, -0.4961);
  EXPECT_NEAR(r.cov, -0.00139, 1e-5);
  EXPECT_NEAR(r.total, 0.00091, 1e-5);
  EXPECT_NEAR(r.cov, -0.0014, kReferenceTolerance);
  EXPECT_NEAR(r.total, 0.0009, kReferenceTolerance);
  const auto checks = verify_reference_rows();
  ASSERT_EQ(checks.size(), 6u);
  for (const auto& c : checks) {
    EXPECT_TRUE(c.pass) << "row " << c.row;
    const auto& row = kReferenceRows[c.row - 1];
    EXPECT_NEAR(row.c_prime + row.amp * row.corr, row.total, kReferenceTolerance);
    EXPECT_NEAR(row.amp * row.corr, row.cov, kReferenceTolerance);
  }
}

namespace {

ResidualStack identity_stack(std::size_t d) {
  Matrix b2 = -1.0 * Matrix::filled(d, d, 1.0);
  for (std::size_t i = 0; i < d; ++i) b2(i, i) = 1.0;
  return ResidualStack({BinaryPath(Matrix::filled(d, d, 1.0), ChannelVec::filled(Axis::output, d, 1.0),
                                   ChannelVec::filled(Axis::input, d, 0.5)),
                        BinaryPath(b2, ChannelVec::filled(Axis::output, d, 1.0),
                                   ChannelVec::filled(Axis::input, d, 0.5))});
}

Matrix centered(Matrix x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double m = 0;
    for (double v : x.row(i)) m += v;
    m /= static_cast<double>(x.cols());
    for (double& v : x.row(i)) v -= m;
  }
  return x;
}

}  // namespace

TEST(LayerwiseReport, SingleLayerEqualsDecomposeMse) {
  std::mt19937_64 rng(7);
  toy::ToyModel m;
  m.teachers.push_back(oracle::random_matrix(6, 5, rng));
  m.students.emplace_back(iterative_residual_svid(m.teachers[0], 2, 20));
  const Matrix x = oracle::random_matrix(5, 40, rng);
  const auto rep = layerwise_report(m, x);
  ASSERT_EQ(rep.size(), 1u);
  const auto s = toy::split_outputs(m.students[0].paths(), x);
  expect_decomp_near(rep[0].d, decompose_mse(matmul(m.teachers[0], x), s.y1, s.y_rest), 0.0);
}

TEST(LayerwiseReport, IdentityLayersHaveZeroTotal) {
  std::mt19937_64 rng(8);
  toy::ToyModel m;
  m.relu = false;
  for (int l = 0; l < 3; ++l) {
    m.teachers.push_back(Matrix::identity(4));
    m.students.push_back(identity_stack(4));
  }
  EXPECT_EQ(effective_weight(m.students[0]), Matrix::identity(4));
  const auto rep = layerwise_report(m, centered(oracle::random_matrix(4, 64, rng)));
  for (const auto& r : rep) {
    EXPECT_NEAR(r.d.total, 0.0, 1e-12);
    EXPECT_NEAR(r.d.mse, 0.0, 1e-24);
  }
}

TEST(LayerwiseReport, ThreeLayerCrossCheck) {
  const std::vector<std::size_t> widths{8, 12, 10, 6};
  const auto m = toy::make_toy_model(widths, 2, InitMethod::iterative, 4);
  ASSERT_EQ(m.layers(), 3u);
  auto rng = toy::make_rng(4, toy::Stream::probe);
  const Matrix x = toy::gaussian_inputs(toy::geometric_scales(8, 10.0), 200, rng);
  const auto rep = layerwise_report(m, x);
  // Recompute each layer's inputs and moments independently.
  Matrix a = x;
  for (std::size_t l = 0; l < 3; ++l) {
    const Matrix yt = oracle::matmul(m.teachers[l], a);
    const auto& ps = m.students[l].paths();
    const Matrix y1 = oracle::matmul(reconstruct(ps[0]), a);
    const Matrix y2 = oracle::matmul(reconstruct(ps[1]), a);
    auto flat = [](const Matrix& mm) { return std::vector<double>(mm.data().begin(), mm.data().end()); };
    const auto ref = oracle::two_pass_moments(flat(yt), flat(y1), flat(y2));
    EXPECT_EQ(rep[l].layer_id, l);
    EXPECT_NEAR(rep[l].d.c_prime, ref.c_prime, 1e-10 * std::max(1.0, ref.c_prime));
    EXPECT_NEAR(rep[l].d.corr, ref.cov12 / std::sqrt(ref.var1 * ref.var2), 1e-10);
    EXPECT_NEAR(rep[l].d.mse, ref.mse, 1e-10 * std::max(1.0, ref.mse));
    a = yt;
    if (l + 1 < 3)
      for (double& v : a.data()) v = std::max(v, 0.0);
  }
}

TEST(LayerwiseReport, CsvSchema) {
  std::vector<LayerDecomposition> rows{{0, {}}, {1, {}}};
  rows[1].d.corr = -0.25;
  std::ostringstream os;
  write_decomposition_csv(os, rows);
  EXPECT_EQ(os.str(),
            "layer_id,c_prime,amp,corr,cov,total,mean_product_residual\n"
            "0,0,0,0,0,0,0\n"
            "1,0,0,-0.25,0,0,0\n");
}

TEST(CorrelationTrace, InitCorrelationNegativeOnSpreadInputs) {
  int negative = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    toy::TrainConfig cfg;
    cfg.steps = 0;
    cfg.seed = seed;
    cfg.probe_samples = 1024;
    const auto res = toy::train_toy(cfg, toy::random_teacher(32, 32, seed),
                                    toy::geometric_scales(32, 10.0));
    const auto s = path_correlation_trace(res.trace);
    ASSERT_EQ(s.size(), 1u);
    negative += s[0].corr < 0;
  }
  EXPECT_EQ(negative, 5);
}

TEST(TraceCsv, RoundTrip) {
  toy::TrainTrace t;
  t.k = 2;
  t.rows.push_back({0, 0.125, -0.3, {1.5, 0.75}});
  t.rows.push_back({5, 1.0 / 3.0, 0.1, {1.25, 0.5}});
  std::stringstream ss;
  toy::write_trace_csv(ss, t);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')),
            "step,loss,corr_y1_y2,residual_norm_1,residual_norm_2");
  const auto back = read_trace_csv(ss);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.k, 2u);
  EXPECT_EQ(back.rows[1].loss, 1.0 / 3.0);
  EXPECT_EQ(back.rows[1].residual_norms, t.rows[1].residual_norms);
  std::istringstream bad("step,loss\n0,1\n");
  EXPECT_THROW(read_trace_csv(bad), DomainError);
  std::istringstream bad_row("step,loss,corr_y1_y2\n0,x,1\n");
  EXPECT_THROW(read_trace_csv(bad_row), DomainError);
}

TEST(Svg, DeterministicWellFormedOutput) {
  const std::vector<svg::Series> s{{"coupled", {0, 1, 2}, {-0.1, -0.2, -0.3}},
                                   {"standard", {0, 1, 2}, {-0.1, 0.05, 0.2}}};
  std::ostringstream a, b;
  svg::line_chart(a, s, "corr", "step", "corr");
  svg::line_chart(b, s, "corr", "step", "corr");
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("<svg", 0), 0u);
  EXPECT_NE(a.str().find("</svg>"), std::string::npos);
  EXPECT_NE(a.str().find("standard"), std::string::npos);
  std::vector<LayerDecomposition> rows{{0, {}}, {1, {}}};
  rows[0].d.c_prime = 0.002;
  rows[0].d.cov = -0.001;
  std::ostringstream c;
  svg::decomposition_bars(c, rows, "layers");
  EXPECT_NE(c.str().find("</svg>"), std::string::npos);
}
