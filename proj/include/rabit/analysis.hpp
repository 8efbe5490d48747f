#pragma once

// Output-space view of a two-path quantizer: how much of the squared error
// is removed by negative correlation between path outputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rabit/binarize.hpp"
#include "rabit/csv.hpp"
#include "rabit/error.hpp"
#include "rabit/matrix.hpp"
#include "rabit/stats.hpp"
#include "rabit/toy.hpp"

namespace rabit {

/// MSE(y_t, y_1 + y_2) = c_prime + cov + mean_product_residual, where
///   c_prime = E[y_t^2] + E[y_1^2] + E[y_2^2] - 2 E[y_t (y_1 + y_2)]
///   amp     = 2 sigma_1 sigma_2            (population std)
///   cov     = amp * corr = 2 Cov(y_1, y_2)
///   total   = c_prime + cov
///   mean_product_residual = 2 E[y_1] E[y_2]
struct MseDecomposition {
  double c_prime = 0.0;
  double amp = 0.0;
  double corr = 0.0;
  double cov = 0.0;
  double total = 0.0;
  double mean_product_residual = 0.0;
  double mse = 0.0;
  std::size_t samples = 0;
  /// Set when there are fewer than 2 samples or a path has zero variance;
  /// corr is then 0.
  bool degenerate = false;

  /// |mse - (total + mean_product_residual)|.
  double identity_error() const { return std::fabs(mse - (total + mean_product_residual)); }
};

inline constexpr double kIdentityTolerance = 1e-9;

/// Assembles a decomposition from already-computed moments.
inline MseDecomposition decompose_from_moments(const PathMoments& m) {
  using PM = PathMoments;
  MseDecomposition d;
  d.samples = m.count();
  d.mse = m.mse();
  d.c_prime = m.raw(PM::kT, PM::kT) + m.raw(PM::k1, PM::k1) + m.raw(PM::k2, PM::k2) -
              2.0 * (m.raw(PM::kT, PM::k1) + m.raw(PM::kT, PM::k2));
  const double v1 = m.cov(PM::k1, PM::k1);
  const double v2 = m.cov(PM::k2, PM::k2);
  d.amp = 2.0 * std::sqrt(std::max(v1, 0.0)) * std::sqrt(std::max(v2, 0.0));
  d.degenerate = d.samples < 2 || !(v1 > 0.0) || !(v2 > 0.0);
  d.corr = d.degenerate ? 0.0 : std::clamp(m.cov(PM::k1, PM::k2) / std::sqrt(v1 * v2), -1.0, 1.0);
  // Exact covariance term, so the identity holds even for degenerate input.
  d.cov = 2.0 * m.cov(PM::k1, PM::k2);
  d.total = d.c_prime + d.cov;
  d.mean_product_residual = 2.0 * m.mean(PM::k1) * m.mean(PM::k2);
  const double scale = std::max({1.0, std::fabs(d.mse), std::fabs(d.c_prime)});
  if (d.identity_error() > kIdentityTolerance * scale)
    throw StateError("decompose_mse: moment identity violated");
  return d;
}

/// Streams are flattened (output coordinate x sample) values of equal length.
inline MseDecomposition decompose_mse(std::span<const double> yt, std::span<const double> y1,
                                      std::span<const double> y2) {
  detail::require_shape(yt.size() == y1.size() && yt.size() == y2.size(),
                        "decompose_mse: stream lengths differ");
  PathMoments m;
  for (std::size_t i = 0; i < yt.size(); ++i) m.push(yt[i], y1[i], y2[i]);
  return decompose_from_moments(m);
}

inline MseDecomposition decompose_mse(const Matrix& yt, const Matrix& y1, const Matrix& y2) {
  detail::require_shape(yt.same_shape(y1) && yt.same_shape(y2),
                        "decompose_mse: output shapes differ");
  return decompose_mse(yt.data(), y1.data(), y2.data());
}

/// Decomposition of a stack's error on a batch; y_2 collects every path after
/// the first.
inline MseDecomposition decompose_layer(const Matrix& teacher,
                                        std::span<const BinaryPath> paths, const Matrix& x) {
  const auto s = toy::split_outputs(paths, x);
  return decompose_mse(matmul(teacher, x), s.y1, s.y_rest);
}

struct CombinedTerms {
  double cov = 0.0;
  double total = 0.0;
};

/// cov = amp * corr, total = c_prime + cov.
inline CombinedTerms combine(double c_prime, double amp, double corr) {
  const double cov = amp * corr;
  return {cov, c_prime + cov};
}

/// Published decomposition rows (c_prime, amp, corr, cov, total), rounded to
/// four decimals. Re-combining the first three must reproduce the last two.
struct ReferenceRow {
  double c_prime, amp, corr, cov, total;
};

inline constexpr std::array<ReferenceRow, 6> kReferenceRows{{
    {0.0019, 0.0030, -0.0752, -0.0002, 0.0017},
    {0.0023, 0.0028, -0.4961, -0.0014, 0.0009},
    {0.0182, 0.0214, -0.1240, -0.0026, 0.0156},
    {0.0163, 0.0200, -0.3418, -0.0068, 0.0094},
    {0.0575, 0.0728, -0.1279, -0.0093, 0.0482},
    {0.0609, 0.0801, -0.3535, -0.0283, 0.0327},
}};

inline constexpr double kReferenceTolerance = 5e-4;

struct ReferenceCheck {
  std::size_t row = 0;
  CombinedTerms recomputed;
  double total_error = 0.0;
  double cov_error = 0.0;
  bool pass = false;
};

inline std::vector<ReferenceCheck> verify_reference_rows() {
  std::vector<ReferenceCheck> out;
  for (std::size_t i = 0; i < kReferenceRows.size(); ++i) {
    const auto& r = kReferenceRows[i];
    ReferenceCheck c;
    c.row = i + 1;
    c.recomputed = combine(r.c_prime, r.amp, r.corr);
    c.total_error = std::fabs(c.recomputed.total - r.total);
    c.cov_error = std::fabs(c.recomputed.cov - r.cov);
    c.pass = c.total_error <= kReferenceTolerance && c.cov_error <= kReferenceTolerance;
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Traces and layer reports

struct CorrelationPoint {
  std::size_t step = 0;
  double corr = 0.0;
};

inline std::vector<CorrelationPoint> path_correlation_trace(const toy::TrainTrace& trace) {
  std::vector<CorrelationPoint> s;
  s.reserve(trace.rows.size());
  for (const auto& r : trace.rows) s.push_back({r.step, r.corr});
  return s;
}

struct LayerDecomposition {
  std::size_t layer_id = 0;
  MseDecomposition d;
};

/// One decomposition per layer, each on the teacher activations feeding it.
inline std::vector<LayerDecomposition> layerwise_report(const toy::ToyModel& model,
                                                        const Matrix& probe) {
  const auto ins = model.layer_inputs(probe);
  std::vector<LayerDecomposition> out;
  for (std::size_t l = 0; l < model.layers(); ++l)
    out.push_back({l, decompose_layer(model.teachers[l], model.students[l].paths(), ins[l])});
  return out;
}

/// layer_id,c_prime,amp,corr,cov,total,mean_product_residual
inline void write_decomposition_csv(std::ostream& os,
                                    std::span<const LayerDecomposition> rows) {
  csv::Writer w(os);
  w.header({"layer_id", "c_prime", "amp", "corr", "cov", "total", "mean_product_residual"});
  for (const auto& r : rows) {
    w.cell(std::uint64_t{r.layer_id}).cell(r.d.c_prime).cell(r.d.amp).cell(r.d.corr)
        .cell(r.d.cov).cell(r.d.total).cell(r.d.mean_product_residual);
    w.end_row();
  }
}

/// Parses the trace CSV written by toy::write_trace_csv.
inline toy::TrainTrace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DomainError("trace csv: empty input");
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) head.push_back(c);
  }
  if (head.size() < 3 || head[0] != "step" || head[1] != "loss" || head[2] != "corr_y1_y2")
    throw DomainError("trace csv: unexpected header");
  toy::TrainTrace t;
  t.k = head.size() - 3;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != head.size())
      throw DomainError("trace csv: wrong column count on line " + std::to_string(lineno));
    toy::TraceRow r;
    try {
      r.step = std::stoull(cells[0]);
      r.loss = std::stod(cells[1]);
      r.corr = std::stod(cells[2]);
      for (std::size_t i = 3; i < cells.size(); ++i) r.residual_norms.push_back(std::stod(cells[i]));
    } catch (const std::exception&) {
      throw DomainError("trace csv: unparseable number on line " + std::to_string(lineno));
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace rabit
