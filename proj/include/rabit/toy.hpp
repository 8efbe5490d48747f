#pragma once

// Desk-scale teacher-student setup: seeded Gaussian inputs with per-channel
// magnitudes, fixed random teachers, and the training loop that runs one
// Variant from a shared calibrated initialization.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "rabit/binarize.hpp"
#include "rabit/csv.hpp"
#include "rabit/error.hpp"
#include "rabit/init.hpp"
#include "rabit/loss.hpp"
#include "rabit/matrix.hpp"
#include "rabit/qat.hpp"
#include "rabit/stats.hpp"

namespace rabit::toy {

/// Distinct RNG streams derived from one run seed.
enum class Stream : std::uint64_t {
  teacher = 1,
  channel = 2,
  calib = 3,
  probe = 4,
  train = 5,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

/// Geometric channel magnitudes from 1/span up to 1, in channel order.
inline std::vector<double> geometric_scales(std::size_t d, double span) {
  if (!(span >= 1.0)) throw DomainError("geometric_scales: span must be >= 1");
  std::vector<double> s(d, 1.0);
  if (d < 2) return s;
  for (std::size_t j = 0; j < d; ++j)
    s[j] = std::pow(span, static_cast<double>(j) / static_cast<double>(d - 1) - 1.0);
  return s;
}

/// x[j, n] = scale_j * N(0, 1).
inline Matrix gaussian_inputs(std::span<const double> channel_scales, std::size_t n,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix x(channel_scales.size(), n);
  for (std::size_t j = 0; j < x.rows(); ++j)
    for (double& v : x.row(j)) v = channel_scales[j] * dist(rng);
  return x;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

/// Random linear teacher with N(0, 1/d_in) entries.
inline Matrix random_teacher(std::size_t d_out, std::size_t d_in, std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::teacher);
  return gaussian_matrix(d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
}

/// Teacher that is exactly a k-path dual-scale sum with a clear hierarchy:
/// path i's scales shrink by `decay` per level, so sign(W) = B_1.
inline std::vector<BinaryPath> realizable_paths(std::size_t d_out, std::size_t d_in,
                                                std::size_t k, std::uint64_t seed,
                                                double decay = 0.25) {
  auto rng = make_rng(seed, Stream::teacher);
  std::uniform_real_distribution<double> unif(0.75, 1.25);
  std::bernoulli_distribution coin(0.5);
  const double base = 1.0 / std::sqrt(std::sqrt(static_cast<double>(d_in) * d_out));
  std::vector<BinaryPath> paths;
  double level = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    Matrix core(d_out, d_in);
    for (double& v : core.data()) v = coin(rng) ? 1.0 : -1.0;
    ChannelVec g(Axis::output, d_out), h(Axis::input, d_in);
    for (std::size_t r = 0; r < d_out; ++r) g[r] = level * base * unif(rng);
    for (std::size_t c = 0; c < d_in; ++c) h[c] = base * unif(rng);
    paths.emplace_back(std::move(core), std::move(g), std::move(h));
    level *= decay;
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  Variant variant = Variant::coupled;
  double lr = 1e-2;
  std::size_t steps = 200;
  std::size_t batch = 64;
  LossSpec loss{};
  std::uint64_t seed = 0;
  double momentum = 0.0;

  std::size_t k = 2;
  std::size_t t_max = kDefaultSvidIterations;
  InitMethod init = InitMethod::iterative_precond;
  double alpha_in = 0.8;
  double alpha_out = 0.65;
  std::size_t calib_samples = 128;

  std::size_t probe_samples = 256;
  std::size_t log_every = 1;

  void validate() const {
    if (!(lr > 0.0)) throw DomainError("TrainConfig: lr must be positive");
    if (batch < 1) throw DomainError("TrainConfig: batch must be >= 1");
    if (k < 1) throw DomainError("TrainConfig: k must be >= 1");
    if (log_every < 1) throw DomainError("TrainConfig: log_every must be >= 1");
    if (probe_samples < 2) throw DomainError("TrainConfig: probe needs >= 2 samples");
  }
};

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  /// Pearson correlation of path-1 output with the summed outputs of the
  /// remaining paths over the probe batch (0 when k = 1).
  double corr = 0.0;
  /// ||W_teacher - sum_{j<=i} W_hat_j||_F for i = 1..k.
  std::vector<double> residual_norms;
};

struct TrainTrace {
  std::size_t k = 0;
  Variant variant = Variant::coupled;
  std::vector<TraceRow> rows;
};

struct TrainResult {
  TrainTrace trace;
  CoupledLayer layer;
  std::vector<BinaryPath> init_paths;
  InitReport init;
  Matrix final_weight;
  Matrix probe_inputs;
};

/// Outputs of path 1 and of the remaining paths, each d_out x N.
struct SplitOutputs {
  Matrix y1;
  Matrix y_rest;
};

inline SplitOutputs split_outputs(std::span<const BinaryPath> paths, const Matrix& x) {
  SplitOutputs s;
  s.y1 = matmul(reconstruct(paths.front()), x);
  s.y_rest = Matrix(s.y1.rows(), s.y1.cols());
  if (paths.size() > 1) s.y_rest = matmul(effective_weight(paths.subspan(1)), x);
  return s;
}

inline double path_output_correlation(std::span<const BinaryPath> paths, const Matrix& x) {
  if (paths.size() < 2) return 0.0;
  const SplitOutputs s = split_outputs(paths, x);
  return pearson(s.y1.data(), s.y_rest.data());
}

inline CalibProfile calibration_profile(const Matrix& teacher, const TeacherIO& calib,
                                        std::size_t k, std::size_t t_max,
                                        double alpha_in, double alpha_out,
                                        const LossSpec& loss) {
  const auto plain = iterative_residual_svid(teacher, k, t_max);
  const Matrix ys = matmul(effective_weight(plain), calib.inputs);
  const Matrix dy = distillation_grad(loss, ys, calib.targets);
  return collect_calib_profile(calib.inputs, dy, alpha_in, alpha_out);
}

/// Initial paths for `teacher` under `method`. The calibration profile is
/// built from input magnitudes of `calib` and output gradients of the
/// distillation loss at the plain iterative initialization.
inline std::vector<BinaryPath> initialize(const Matrix& teacher, const TeacherIO& calib,
                                          InitMethod method, std::size_t k,
                                          std::size_t t_max, double alpha_in,
                                          double alpha_out, const LossSpec& loss) {
  switch (method) {
    case InitMethod::greedy:
      return greedy_svid_init(teacher, k);
    case InitMethod::iterative:
      return iterative_residual_svid(teacher, k, t_max);
    case InitMethod::iterative_precond: {
      const CalibProfile profile =
          calibration_profile(teacher, calib, k, t_max, alpha_in, alpha_out, loss);
      return calibrated_init(teacher, k, t_max, profile);
    }
  }
  throw DomainError("initialize: unknown method");
}

namespace detail {

inline TraceRow measure(const CoupledLayer& layer, const Matrix& teacher,
                        const TeacherIO& probe, const LossSpec& loss, std::size_t step) {
  const auto paths = layer.derive().paths;
  TraceRow row;
  row.step = step;
  row.loss = distillation_loss(loss, matmul(effective_weight(paths), probe.inputs),
                               probe.targets);
  row.corr = path_output_correlation(paths, probe.inputs);
  Matrix r = teacher;
  for (const auto& p : paths) {
    r -= reconstruct(p);
    row.residual_norms.push_back(frobenius_norm(r));
  }
  return row;
}

}  // namespace detail

/// Train one variant against a fixed linear teacher.
///
/// Every variant starts from the same initialization (chosen by
/// `cfg.init`) and sees the same minibatch sequence for a given seed.
/// Trace rows are measured on a fixed probe batch at step 0, every
/// `log_every` steps, and at the final step.
/// `init_override`, when given, replaces the initializer's paths.
inline TrainResult train_toy(const TrainConfig& cfg, const Matrix& teacher,
                             std::span<const double> channel_scales,
                             const std::optional<std::vector<BinaryPath>>& init_override =
                                 std::nullopt) {
  cfg.validate();
  rabit::detail::require_shape(channel_scales.size() == teacher.cols(),
                               "train_toy: channel scales != d_in");
  auto calib_rng = make_rng(cfg.seed, Stream::calib);
  auto probe_rng = make_rng(cfg.seed, Stream::probe);
  auto train_rng = make_rng(cfg.seed, Stream::train);

  const TeacherIO calib = TeacherIO::from_teacher(
      teacher, gaussian_inputs(channel_scales, cfg.calib_samples, calib_rng));
  const TeacherIO probe = TeacherIO::from_teacher(
      teacher, gaussian_inputs(channel_scales, cfg.probe_samples, probe_rng));

  TrainResult res;
  res.init_paths = init_override ? *init_override
                                 : initialize(teacher, calib, cfg.init, cfg.k, cfg.t_max,
                                              cfg.alpha_in, cfg.alpha_out, cfg.loss);
  res.layer = CoupledLayer::from_init(cfg.variant, teacher, res.init_paths);
  res.init = init_report(teacher, res.layer.derive().paths, probe, cfg.init, cfg.loss);
  res.probe_inputs = probe.inputs;
  res.trace.k = cfg.k;
  res.trace.variant = cfg.variant;
  res.trace.rows.push_back(detail::measure(res.layer, teacher, probe, cfg.loss, 0));

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const Matrix x = gaussian_inputs(channel_scales, cfg.batch, train_rng);
    const Matrix yt = matmul(teacher, x);
    const ForwardResult fwd = forward(res.layer, x);
    const double l = distillation_loss(cfg.loss, fwd.y, yt);
    if (!std::isfinite(l)) throw NonFiniteLossError(step, "toy");
    const Matrix delta = distillation_grad(cfg.loss, fwd.y, yt);
    sgd_step(res.layer, backward(res.layer, x, delta, fwd.derived), cfg.lr, cfg.momentum);
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      res.trace.rows.push_back(detail::measure(res.layer, teacher, probe, cfg.loss, step));
      if (!std::isfinite(res.trace.rows.back().loss))
        throw NonFiniteLossError(step, "toy");
    }
  }
  res.final_weight = effective_weight(res.layer.derive().paths);
  return res;
}

/// step,loss,corr_y1_y2,residual_norm_1..residual_norm_k
inline void write_trace_csv(std::ostream& os, const TrainTrace& t) {
  csv::Writer w(os);
  std::vector<std::string> cols{"step", "loss", "corr_y1_y2"};
  for (std::size_t i = 1; i <= t.k; ++i) cols.push_back("residual_norm_" + std::to_string(i));
  w.header(cols);
  for (const auto& r : t.rows) {
    w.cell(std::uint64_t{r.step}).cell(r.loss).cell(r.corr);
    for (double v : r.residual_norms) w.cell(v);
    w.end_row();
  }
}

// ---------------------------------------------------------------------------
// Multi-layer toy

/// Stack of linear teacher layers, each with a quantized student. Layer l's
/// input is the teacher activation of layer l-1 (ReLU between layers when
/// `relu` is set), so every layer is probed on in-distribution inputs.
struct ToyModel {
  std::vector<Matrix> teachers;
  std::vector<ResidualStack> students;
  bool relu = true;

  std::size_t layers() const noexcept { return teachers.size(); }

  /// Teacher-side inputs of every layer for probe batch `x`.
  std::vector<Matrix> layer_inputs(const Matrix& x) const {
    std::vector<Matrix> ins;
    Matrix a = x;
    for (std::size_t l = 0; l < teachers.size(); ++l) {
      ins.push_back(a);
      a = matmul(teachers[l], a);
      if (relu && l + 1 < teachers.size())
        for (double& v : a.data()) v = std::max(v, 0.0);
    }
    return ins;
  }
};

/// Random `widths.size()-1`-layer MLP; each student is initialized with
/// `method` on calibration activations of its layer.
inline ToyModel make_toy_model(std::span<const std::size_t> widths, std::size_t k,
                               InitMethod method, std::uint64_t seed,
                               std::size_t calib_samples = 128, double input_span = 10.0,
                               double alpha_in = 0.8, double alpha_out = 0.65) {
  if (widths.size() < 2) throw DomainError("make_toy_model: need >= 2 widths");
  ToyModel m;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    m.teachers.push_back(random_teacher(widths[l + 1], widths[l], seed + 7919 * l));
  auto rng = make_rng(seed, Stream::calib);
  const auto scales = geometric_scales(widths.front(), input_span);
  const auto ins = m.layer_inputs(gaussian_inputs(scales, calib_samples, rng));
  for (std::size_t l = 0; l < m.layers(); ++l) {
    const TeacherIO io = TeacherIO::from_teacher(m.teachers[l], ins[l]);
    m.students.emplace_back(initialize(m.teachers[l], io, method, k, kDefaultSvidIterations,
                                       alpha_in, alpha_out, LossSpec{}));
  }
  return m;
}

}  // namespace rabit::toy
