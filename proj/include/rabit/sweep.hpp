#pragma once

// Parameter sweeps over the initializer: the (alpha_in, alpha_out) grid scored
// by initial distillation loss, and residual-vs-iterations for the
// Gauss-Seidel refinement.

#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "rabit/csv.hpp"
#include "rabit/init.hpp"
#include "rabit/loss.hpp"
#include "rabit/toy.hpp"

namespace rabit {

struct GridCell {
  double alpha_in = 0.0;
  double alpha_out = 0.0;
  double initial_loss = 0.0;
  double avg_mse = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
};

inline constexpr double kDefaultAlphaIn[] = {0.75, 0.80, 0.85, 0.90};
inline constexpr double kDefaultAlphaOut[] = {0.55, 0.60, 0.65, 0.70};

/// Calibrated init for every (alpha_in, alpha_out) pair; `probe` scores it.
/// Rows are ordered alpha_in-major. Ties keep the first cell.
inline GridResult grid_search(const Matrix& teacher, const TeacherIO& calib,
                              const TeacherIO& probe, std::span<const double> alpha_in,
                              std::span<const double> alpha_out, std::size_t k,
                              std::size_t t_max, const LossSpec& loss = {}) {
  if (alpha_in.empty() || alpha_out.empty()) throw DomainError("grid_search: empty alpha list");
  GridResult g;
  double best = std::numeric_limits<double>::infinity();
  for (double ai : alpha_in)
    for (double ao : alpha_out) {
      const auto paths = toy::initialize(teacher, calib, InitMethod::iterative_precond, k, t_max,
                                         ai, ao, loss);
      const auto rep = init_report(teacher, paths, probe, InitMethod::iterative_precond, loss);
      g.cells.push_back({ai, ao, rep.initial_task_loss, rep.avg_mse});
      if (rep.initial_task_loss < best) {
        best = rep.initial_task_loss;
        g.best = g.cells.size() - 1;
      }
    }
  return g;
}

/// alpha_in,alpha_out,initial_loss,avg_mse
inline void write_grid_csv(std::ostream& os, const GridResult& g) {
  csv::Writer w(os);
  w.header({"alpha_in", "alpha_out", "initial_loss", "avg_mse"});
  for (const auto& c : g.cells) {
    w.cell(c.alpha_in).cell(c.alpha_out).cell(c.initial_loss).cell(c.avg_mse);
    w.end_row();
  }
}

struct SweepPoint {
  std::size_t t_max = 0;
  /// Frobenius residual in the domain the decomposition ran in.
  double residual = 0.0;
  double initial_loss = 0.0;
  bool saturated = false;
};

inline constexpr double kSaturationRel = 1e-4;

/// One decomposition per entry of `t_max_list`. With a profile the sweep runs
/// on the preconditioned weight and scores the mapped-back paths. An entry is
/// saturated when it improves on the previous one by less than kSaturationRel.
inline std::vector<SweepPoint> svid_sweep(const Matrix& teacher, const TeacherIO& probe,
                                          std::span<const std::size_t> t_max_list,
                                          std::size_t k,
                                          const std::optional<CalibProfile>& profile,
                                          const LossSpec& loss = {}) {
  const Matrix w = profile ? precondition(teacher, *profile) : teacher;
  std::vector<SweepPoint> out;
  for (std::size_t t : t_max_list) {
    if (t < 1) throw DomainError("svid_sweep: t_max must be >= 1");
    auto tr = iterative_residual_svid_trace(w, k, t);
    auto paths = profile ? unprecondition_scales(tr.paths, *profile) : std::move(tr.paths);
    SweepPoint p;
    p.t_max = t;
    p.residual = tr.sweep_residuals.back();
    p.initial_loss = init_report(teacher, paths, probe, InitMethod::iterative, loss).initial_task_loss;
    if (!out.empty()) {
      const double prev = out.back().residual;
      p.saturated = prev == 0.0 || (prev - p.residual) / prev < kSaturationRel;
    }
    out.push_back(p);
  }
  return out;
}

/// t_max,residual,initial_loss,saturated
inline void write_sweep_csv(std::ostream& os, std::span<const SweepPoint> pts) {
  csv::Writer w(os);
  w.header({"t_max", "residual", "initial_loss", "saturated"});
  for (const auto& p : pts) {
    w.cell(std::uint64_t{p.t_max}).cell(p.residual).cell(p.initial_loss).cell(p.saturated ? 1 : 0);
    w.end_row();
  }
}

}  // namespace rabit
