// rabit: experiment driver. Every run prints its resolved spec and writes it
// next to its outputs under --out.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rabit.hpp"

using namespace rabit;
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string out = "out";
  std::uint64_t seed = 0;
};

std::uint64_t default_seed() {
  const char* env = std::getenv("RABIT_SEED");
  if (!env || !*env) return 0;
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(env, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != std::string(env).size()) throw DomainError("RABIT_SEED is not an unsigned integer");
  return v;
}

void write_text(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw io::IoError(io::IoErrc::unwritable, p.string());
  body(f);
  if (!f) throw io::IoError(io::IoErrc::unwritable, p.string());
}

fs::path prepare_out(const Common& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw io::IoError(io::IoErrc::unwritable, c.out + ": " + ec.message());
  return fs::path(c.out);
}

void emit_runspec(const fs::path& out, const std::string& name, const Json& spec) {
  std::cout << "runspec " << spec.dump() << '\n';
  write_text(out / (name + ".runspec.json"), [&](std::ostream& os) { os << spec.dump(2) << '\n'; });
}

/// Row-per-line comma-separated matrix.
Matrix read_matrix_csv(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw io::IoError(io::IoErrc::unreadable, p.string());
  std::vector<double> vals;
  std::size_t rows = 0, cols = 0;
  for (std::string line; std::getline(f, line);) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::size_t n = 0;
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DomainError("weights: unparseable value '" + cell + "' on row " + std::to_string(rows + 1));
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw ShapeError("weights: ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  if (rows == 0) throw DomainError("weights: empty file");
  return Matrix(rows, cols, std::move(vals));
}

LossSpec make_loss(const std::string& kind, std::optional<double> gamma) {
  if (kind == "mse") return {LossKind::mse_distill, 0.0};
  if (kind == "kl") return {LossKind::kl_distill, gamma.value_or(0.0)};
  return {LossKind::kl_distill, gamma.value_or(100.0)};  // kl+mse
}

std::string loss_name(const LossSpec& l) {
  if (l.kind == LossKind::mse_distill) return "mse";
  return l.gamma == 0.0 ? "kl" : "kl+mse";
}

InitMethod parse_method(const std::string& m) {
  if (m == "greedy") return InitMethod::greedy;
  if (m == "iterative") return InitMethod::iterative;
  return InitMethod::iterative_precond;
}

/// Teacher plus seeded calibration and probe batches.
struct Problem {
  Matrix teacher;
  std::vector<double> scales;
  TeacherIO calib;
  TeacherIO probe;
};

Problem make_problem(Matrix teacher, std::uint64_t seed, double span, std::size_t n_calib,
                     std::size_t n_probe) {
  Problem p;
  p.scales = toy::geometric_scales(teacher.cols(), span);
  auto crng = toy::make_rng(seed, toy::Stream::calib);
  auto prng = toy::make_rng(seed, toy::Stream::probe);
  p.calib = TeacherIO::from_teacher(teacher, toy::gaussian_inputs(p.scales, n_calib, crng));
  p.probe = TeacherIO::from_teacher(teacher, toy::gaussian_inputs(p.scales, n_probe, prng));
  p.teacher = std::move(teacher);
  return p;
}

struct Shape {
  std::size_t d_out = 64, d_in = 64;
};

void add_common(CLI::App* sc, Common& c) {
  sc->add_option("--out", c.out, "Output directory")->capture_default_str();
  sc->add_option("--seed", c.seed, "Run seed (default: $RABIT_SEED or 0)")->capture_default_str();
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
  Common common;
  std::string weights;
  std::vector<std::size_t> random{64, 64};
  std::size_t k = 2, t_max = kDefaultSvidIterations;
  double alpha_in = 0.8, alpha_out = 0.65, input_span = 10.0;
  std::string method = "calibrated";
  std::size_t calib_samples = 128, probe_samples = 256;
  bool keep_wfp = false, store_calib = false;
};

int cmd_decompose(const DecomposeArgs& a) {
  const auto out = prepare_out(a.common);
  Matrix w = a.weights.empty() ? toy::random_teacher(a.random[0], a.random[1], a.common.seed)
                               : read_matrix_csv(a.weights);
  Json spec{{"subcommand", "decompose"}, {"seed", a.common.seed}, {"out", a.common.out},
            {"weights", a.weights},      {"d_out", w.rows()},       {"d_in", w.cols()},
            {"k", a.k},                  {"t_max", a.t_max},        {"method", a.method},
            {"alpha_in", a.alpha_in},    {"alpha_out", a.alpha_out}, {"input_span", a.input_span},
            {"calib_samples", a.calib_samples}, {"probe_samples", a.probe_samples},
            {"keep_wfp", a.keep_wfp},    {"store_calib", a.store_calib}};
  emit_runspec(out, "decompose", spec);
  if (a.k < 1 || a.k > 255) throw DomainError("decompose: k must be in [1, 255]");

  const Problem p = make_problem(std::move(w), a.common.seed, a.input_span, a.calib_samples,
                                 a.probe_samples);
  const InitMethod m = parse_method(a.method);
  const auto paths = toy::initialize(p.teacher, p.calib, m, a.k, a.t_max, a.alpha_in,
                                     a.alpha_out, {});
  const auto rep = init_report(p.teacher, paths, p.probe, m);
  std::optional<CalibProfile> calib;
  if (a.store_calib && m == InitMethod::iterative_precond)
    calib = toy::calibration_profile(p.teacher, p.calib, a.k, a.t_max, a.alpha_in, a.alpha_out, {});
  const ResidualStack stack = a.keep_wfp ? ResidualStack(paths, p.teacher) : ResidualStack(paths);
  io::save(stack, out / "decompose.rbit", calib);
  write_text(out / "init_report.csv", [&](std::ostream& os) {
    csv::Writer wr(os);
    wr.header({"method", "k", "t_max", "avg_mae", "avg_mse", "initial_task_loss"});
    wr.cell(a.method).cell(std::uint64_t{a.k}).cell(std::uint64_t{a.t_max}).cell(rep.avg_mae)
        .cell(rep.avg_mse).cell(rep.initial_task_loss);
    wr.end_row();
  });
  std::cout << "avg_mae " << csv::format_double(rep.avg_mae) << " avg_mse "
            << csv::format_double(rep.avg_mse) << " initial_task_loss "
            << csv::format_double(rep.initial_task_loss) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string variant = "coupled";
  std::size_t steps = 200, batch = 64, k = 2, t_max = kDefaultSvidIterations, log_every = 1;
  std::size_t calib_samples = 128, probe_samples = 256;
  double lr = 1e-2, momentum = 0.0, alpha_in = 0.8, alpha_out = 0.65, input_span = 10.0;
  std::string loss = "mse";
  std::optional<double> gamma;
  std::string teacher = "random";
  std::string init = "calibrated";
  Shape shape;
};

int cmd_train(const TrainArgs& a) {
  const auto out = prepare_out(a.common);
  toy::TrainConfig cfg;
  cfg.variant = *parse_variant(a.variant);
  cfg.lr = a.lr;
  cfg.steps = a.steps;
  cfg.batch = a.batch;
  cfg.loss = make_loss(a.loss, a.gamma);
  cfg.seed = a.common.seed;
  cfg.momentum = a.momentum;
  cfg.k = a.k;
  cfg.t_max = a.t_max;
  cfg.init = parse_method(a.init);
  cfg.alpha_in = a.alpha_in;
  cfg.alpha_out = a.alpha_out;
  cfg.calib_samples = a.calib_samples;
  cfg.probe_samples = a.probe_samples;
  cfg.log_every = a.log_every;
  Json spec{{"subcommand", "train"}, {"seed", cfg.seed}, {"out", a.common.out},
            {"variant", a.variant}, {"steps", cfg.steps}, {"lr", cfg.lr}, {"batch", cfg.batch},
            {"loss", loss_name(cfg.loss)}, {"gamma", cfg.loss.gamma}, {"momentum", cfg.momentum},
            {"k", cfg.k}, {"t_max", cfg.t_max}, {"init", a.init}, {"alpha_in", cfg.alpha_in},
            {"alpha_out", cfg.alpha_out}, {"calib_samples", cfg.calib_samples},
            {"probe_samples", cfg.probe_samples}, {"log_every", cfg.log_every},
            {"teacher", a.teacher}, {"d_out", a.shape.d_out}, {"d_in", a.shape.d_in},
            {"input_span", a.input_span}};
  emit_runspec(out, "train", spec);
  cfg.validate();

  const Matrix teacher =
      a.teacher == "realizable"
          ? effective_weight(toy::realizable_paths(a.shape.d_out, a.shape.d_in, a.k, cfg.seed))
          : toy::random_teacher(a.shape.d_out, a.shape.d_in, cfg.seed);
  const auto res = toy::train_toy(cfg, teacher, toy::geometric_scales(a.shape.d_in, a.input_span));
  write_text(out / "trace.csv", [&](std::ostream& os) { toy::write_trace_csv(os, res.trace); });
  io::save(freeze_stack(res.layer), out / "final.rbit");

  std::vector<svg::Series> corr{{a.variant, {}, {}}}, loss{{a.variant, {}, {}}};
  for (const auto& r : res.trace.rows) {
    corr[0].x.push_back(static_cast<double>(r.step));
    corr[0].y.push_back(r.corr);
    loss[0].x.push_back(static_cast<double>(r.step));
    loss[0].y.push_back(r.loss);
  }
  write_text(out / "trace_corr.svg",
             [&](std::ostream& os) { svg::line_chart(os, corr, "path correlation", "step", "corr(y1, y2)"); });
  write_text(out / "trace_loss.svg",
             [&](std::ostream& os) { svg::line_chart(os, loss, "distillation loss", "step", "loss"); });
  const auto& last = res.trace.rows.back();
  std::cout << "final_step " << last.step << " loss " << csv::format_double(last.loss) << " corr "
            << csv::format_double(last.corr) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  Common common;
  bool verify_table1 = false;
  bool synthetic_cancel = false;
  std::vector<std::string> traces;
  std::string manifest;
  std::vector<std::size_t> toy_layers;
  std::size_t k = 2, probe_samples = 1024, calib_samples = 128;
  double input_span = 10.0;
  std::string method = "calibrated";
};

void write_layerwise(const fs::path& out, const std::string& stem,
                     const std::vector<LayerDecomposition>& rows, const std::string& title) {
  write_text(out / (stem + ".csv"), [&](std::ostream& os) { write_decomposition_csv(os, rows); });
  write_text(out / (stem + ".svg"), [&](std::ostream& os) { svg::decomposition_bars(os, rows, title); });
}

int cmd_analyze(const AnalyzeArgs& a) {
  const auto out = prepare_out(a.common);
  Json spec{{"subcommand", "analyze"}, {"seed", a.common.seed}, {"out", a.common.out},
            {"verify_table1", a.verify_table1}, {"synthetic_cancel", a.synthetic_cancel},
            {"traces", a.traces}, {"manifest", a.manifest}, {"toy_layers", a.toy_layers},
            {"k", a.k}, {"method", a.method}, {"probe_samples", a.probe_samples},
            {"calib_samples", a.calib_samples}, {"input_span", a.input_span}};
  emit_runspec(out, "analyze", spec);
  if (!a.verify_table1 && !a.synthetic_cancel && a.traces.empty() && a.manifest.empty() &&
      a.toy_layers.empty())
    throw DomainError("analyze: choose at least one of --verify-table1, --synthetic-cancel, "
                      "--trace, --manifest, --toy-layers");

  bool ok = true;
  if (a.verify_table1) {
    const auto checks = verify_reference_rows();
    write_text(out / "table1_check.csv", [&](std::ostream& os) {
      csv::Writer w(os);
      w.header({"row", "c_prime", "amp", "corr", "cov", "total", "recomputed_cov",
                "recomputed_total", "pass"});
      for (const auto& c : checks) {
        const auto& r = kReferenceRows[c.row - 1];
        w.cell(std::uint64_t{c.row}).cell(r.c_prime).cell(r.amp).cell(r.corr).cell(r.cov)
            .cell(r.total).cell(c.recomputed.cov).cell(c.recomputed.total).cell(c.pass ? 1 : 0);
        w.end_row();
        ok = ok && c.pass;
      }
    });
    std::cout << "table1 " << (ok ? "pass" : "fail") << '\n';
  }

  if (a.synthetic_cancel) {
    auto rng = toy::make_rng(a.common.seed, toy::Stream::probe);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> y1(a.probe_samples), y2(a.probe_samples), yt(a.probe_samples, 0.0);
    for (std::size_t i = 0; i < y1.size(); ++i) {
      y1[i] = d(rng);
      y2[i] = -y1[i];
    }
    const std::vector<LayerDecomposition> rows{{0, decompose_mse(yt, y1, y2)}};
    write_text(out / "synthetic_cancel.csv", [&](std::ostream& os) { write_decomposition_csv(os, rows); });
  }

  if (!a.traces.empty()) {
    std::vector<svg::Series> corr, loss;
    std::vector<std::pair<std::string, std::vector<CorrelationPoint>>> all;
    for (const auto& t : a.traces) {
      std::ifstream f(t);
      if (!f) throw io::IoError(io::IoErrc::unreadable, t);
      const auto trace = read_trace_csv(f);
      const std::string name = fs::path(t).parent_path().filename().string() + "/" +
                               fs::path(t).stem().string();
      svg::Series c{name, {}, {}}, l{name, {}, {}};
      for (const auto& r : trace.rows) {
        c.x.push_back(static_cast<double>(r.step));
        c.y.push_back(r.corr);
        l.x.push_back(static_cast<double>(r.step));
        l.y.push_back(r.loss);
      }
      corr.push_back(std::move(c));
      loss.push_back(std::move(l));
      all.emplace_back(name, path_correlation_trace(trace));
    }
    write_text(out / "correlation.csv", [&](std::ostream& os) {
      csv::Writer w(os);
      w.header({"trace", "step", "corr_y1_y2"});
      for (const auto& [name, pts] : all)
        for (const auto& p : pts) {
          w.cell(name).cell(std::uint64_t{p.step}).cell(p.corr);
          w.end_row();
        }
    });
    write_text(out / "correlation.svg",
               [&](std::ostream& os) { svg::line_chart(os, corr, "path correlation", "step", "corr(y1, y2)"); });
    write_text(out / "loss.svg",
               [&](std::ostream& os) { svg::line_chart(os, loss, "distillation loss", "step", "loss"); });
  }

  if (!a.toy_layers.empty()) {
    const auto model = toy::make_toy_model(a.toy_layers, a.k, parse_method(a.method), a.common.seed,
                                           a.calib_samples, a.input_span);
    auto rng = toy::make_rng(a.common.seed, toy::Stream::probe);
    const Matrix probe = toy::gaussian_inputs(toy::geometric_scales(a.toy_layers.front(), a.input_span),
                                              a.probe_samples, rng);
    write_layerwise(out, "layerwise", layerwise_report(model, probe), "layer-wise decomposition");
    const fs::path mdir = out / "model";
    fs::create_directories(mdir);
    io::Manifest man;
    for (std::size_t l = 0; l < model.layers(); ++l) {
      char name[32];
      std::snprintf(name, sizeof name, "layer%02zu", l);
      io::save(ResidualStack(model.students[l].paths(), model.teachers[l]),
               mdir / (std::string(name) + ".rbit"));
      man[name] = std::string(name) + ".rbit";
    }
    io::save_manifest(man, mdir / "manifest.json");
  }

  if (!a.manifest.empty()) {
    // Layers chain in manifest key order; each container's w_fp is its teacher.
    toy::ToyModel model;
    for (const auto& [name, c] : io::load_model(a.manifest)) {
      if (!c.w_fp) throw StateError("analyze: layer '" + name + "' has no w_fp to act as teacher");
      const ResidualStack s = io::to_stack(c);
      model.teachers.push_back(*s.w_fp());
      model.students.emplace_back(s.paths());
    }
    auto rng = toy::make_rng(a.common.seed, toy::Stream::probe);
    const Matrix probe = toy::gaussian_inputs(
        toy::geometric_scales(model.teachers.front().cols(), a.input_span), a.probe_samples, rng);
    write_layerwise(out, "manifest_layerwise", layerwise_report(model, probe),
                    "layer-wise decomposition");
  }
  if (!ok) throw StateError("analyze: reference rows failed arithmetic check");
  return 0;
}

// ---------------------------------------------------------------------------

struct GridArgs {
  Common common;
  std::vector<double> alpha_in{std::begin(kDefaultAlphaIn), std::end(kDefaultAlphaIn)};
  std::vector<double> alpha_out{std::begin(kDefaultAlphaOut), std::end(kDefaultAlphaOut)};
  std::string metric = "initial-loss";
  std::size_t k = 2, t_max = kDefaultSvidIterations, calib_samples = 128, probe_samples = 256;
  double input_span = 10.0;
  Shape shape;
};

int cmd_gridsearch(const GridArgs& a) {
  const auto out = prepare_out(a.common);
  Json spec{{"subcommand", "gridsearch"}, {"seed", a.common.seed}, {"out", a.common.out},
            {"alpha_in_list", a.alpha_in}, {"alpha_out_list", a.alpha_out}, {"metric", a.metric},
            {"k", a.k}, {"t_max", a.t_max}, {"d_out", a.shape.d_out}, {"d_in", a.shape.d_in},
            {"calib_samples", a.calib_samples}, {"probe_samples", a.probe_samples},
            {"input_span", a.input_span}};
  emit_runspec(out, "gridsearch", spec);
  const Problem p = make_problem(toy::random_teacher(a.shape.d_out, a.shape.d_in, a.common.seed),
                                 a.common.seed, a.input_span, a.calib_samples, a.probe_samples);
  const auto g = grid_search(p.teacher, p.calib, p.probe, a.alpha_in, a.alpha_out, a.k, a.t_max);
  write_text(out / "grid.csv", [&](std::ostream& os) { write_grid_csv(os, g); });
  const auto& b = g.cells[g.best];
  std::cout << "best alpha_in " << csv::format_double(b.alpha_in) << " alpha_out "
            << csv::format_double(b.alpha_out) << " initial_loss "
            << csv::format_double(b.initial_loss) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  Common common;
  std::vector<std::string> shapes;
  std::size_t k = 2, reps = 10, warmup = 1;
  unsigned threads = 1;
};

kernel::BenchShape parse_shape(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t u1 = 0, u2 = 0;
    const auto r = std::stoull(s.substr(0, x), &u1);
    const auto c = std::stoull(s.substr(x + 1), &u2);
    if (u1 != x || u2 != s.size() - x - 1) throw std::invalid_argument(s);
    return {static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
  } catch (const std::exception&) {
    throw DomainError("bench: shape '" + s + "' is not ROWSxCOLS");
  }
}

int cmd_bench(const BenchArgs& a) {
  const auto out = prepare_out(a.common);
  std::vector<kernel::BenchShape> shapes;
  if (a.shapes.empty()) shapes = kernel::default_bench_shapes();
  for (const auto& s : a.shapes) shapes.push_back(parse_shape(s));
  std::vector<std::string> labels;
  for (const auto& s : shapes) labels.push_back(s.label());
  Json spec{{"subcommand", "bench"}, {"seed", a.common.seed}, {"out", a.common.out},
            {"shapes", labels}, {"k", a.k}, {"reps", a.reps}, {"warmup", a.warmup},
            {"threads", a.threads}};
  emit_runspec(out, "bench", spec);
  kernel::BenchOptions opt;
  opt.k = a.k;
  opt.reps = a.reps;
  opt.warmup = a.warmup;
  opt.seed = a.common.seed;
  opt.threads = a.threads;
  const auto rows = kernel::bench(shapes, opt);
  write_text(out / "bench.csv", [&](std::ostream& os) { kernel::write_bench_csv(os, rows); });
  for (const auto& r : rows)
    std::cout << r.shape << ' ' << r.impl << " median_us " << csv::format_double(r.median_us)
              << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  Common common;
  std::vector<std::size_t> t_max_list{1, 2, 3, 5, 10, 20, 30, 50};
  std::string method = "calibrated";
  std::size_t k = 2, calib_samples = 128, probe_samples = 256;
  double alpha_in = 0.8, alpha_out = 0.65, input_span = 10.0;
  Shape shape;
};

int cmd_svid_sweep(const SweepArgs& a) {
  const auto out = prepare_out(a.common);
  Json spec{{"subcommand", "svid-sweep"}, {"seed", a.common.seed}, {"out", a.common.out},
            {"t_max_list", a.t_max_list}, {"method", a.method}, {"k", a.k},
            {"alpha_in", a.alpha_in}, {"alpha_out", a.alpha_out}, {"d_out", a.shape.d_out},
            {"d_in", a.shape.d_in}, {"calib_samples", a.calib_samples},
            {"probe_samples", a.probe_samples}, {"input_span", a.input_span}};
  emit_runspec(out, "svid-sweep", spec);
  const Problem p = make_problem(toy::random_teacher(a.shape.d_out, a.shape.d_in, a.common.seed),
                                 a.common.seed, a.input_span, a.calib_samples, a.probe_samples);
  std::optional<CalibProfile> profile;
  if (a.method == "calibrated")
    profile = toy::calibration_profile(p.teacher, p.calib, a.k, kDefaultSvidIterations,
                                       a.alpha_in, a.alpha_out, {});
  const auto pts = svid_sweep(p.teacher, p.probe, a.t_max_list, a.k, profile);
  write_text(out / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, pts); });
  std::vector<svg::Series> s{{"residual", {}, {}}};
  for (const auto& q : pts) {
    s[0].x.push_back(static_cast<double>(q.t_max));
    s[0].y.push_back(q.residual);
  }
  write_text(out / "sweep.svg",
             [&](std::ostream& os) { svg::line_chart(os, s, "residual vs iterations", "T_max", "residual"); });
  for (const auto& q : pts)
    std::cout << "t_max " << q.t_max << " residual " << csv::format_double(q.residual)
              << (q.saturated ? " saturated" : "") << '\n';
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (auto* io = dynamic_cast<const io::IoError*>(&e)) return "io." + std::string(io::to_string(io->code()));
  if (dynamic_cast<const NonFiniteLossError*>(&e)) return "non_finite_loss";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const StateError*>(&e)) return "state";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual binary decomposition, coupled QAT and packed kernels"};
  app.require_subcommand(1);
  std::string active = "rabit";

  std::uint64_t env_seed = 0;
  try {
    env_seed = default_seed();
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", error_kind(e)}, {"subcommand", active}, {"message", e.what()}}.dump()
              << '\n';
    return 2;
  }

  DecomposeArgs dec;
  TrainArgs tr;
  AnalyzeArgs an;
  GridArgs gr;
  BenchArgs be;
  SweepArgs sw;
  for (Common* c : {&dec.common, &tr.common, &an.common, &gr.common, &be.common, &sw.common})
    c->seed = env_seed;

  auto* d = app.add_subcommand("decompose", "Residual SVID initialization of one weight matrix");
  add_common(d, dec.common);
  auto* w_opt = d->add_option("--weights", dec.weights, "CSV weight matrix")->check(CLI::ExistingFile);
  d->add_option("--random", dec.random, "Random teacher D_OUT D_IN")->expected(2)->excludes(w_opt)
      ->capture_default_str();
  d->add_option("--k", dec.k, "Number of paths")->capture_default_str();
  d->add_option("--t-max", dec.t_max, "Gauss-Seidel sweeps")->capture_default_str();
  d->add_option("--alpha-in", dec.alpha_in)->capture_default_str();
  d->add_option("--alpha-out", dec.alpha_out)->capture_default_str();
  d->add_option("--method", dec.method)->check(CLI::IsMember({"greedy", "iterative", "calibrated"}))
      ->capture_default_str();
  d->add_option("--input-span", dec.input_span, "Input channel magnitude span")->capture_default_str();
  d->add_option("--calib-samples", dec.calib_samples)->capture_default_str();
  d->add_option("--probe-samples", dec.probe_samples)->capture_default_str();
  d->add_flag("--keep-wfp", dec.keep_wfp, "Store the source weight in the container");
  d->add_flag("--store-calib", dec.store_calib, "Store the calibration profile (calibrated only)");

  auto* t = app.add_subcommand("train", "Train one variant on the toy teacher");
  add_common(t, tr.common);
  t->add_option("--variant", tr.variant)
      ->check(CLI::IsMember({"coupled", "standard", "mbok", "scale-only", "scale-frozen"}))
      ->capture_default_str();
  t->add_option("--steps", tr.steps)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--momentum", tr.momentum)->capture_default_str();
  t->add_option("--loss", tr.loss)->check(CLI::IsMember({"mse", "kl", "kl+mse"}))->capture_default_str();
  t->add_option("--gamma", tr.gamma, "Intermediate MSE weight (kl+mse default 100, kl default 0)");
  t->add_option("--k", tr.k)->capture_default_str();
  t->add_option("--t-max", tr.t_max)->capture_default_str();
  t->add_option("--init", tr.init)->check(CLI::IsMember({"greedy", "iterative", "calibrated"}))
      ->capture_default_str();
  t->add_option("--alpha-in", tr.alpha_in)->capture_default_str();
  t->add_option("--alpha-out", tr.alpha_out)->capture_default_str();
  t->add_option("--d-out", tr.shape.d_out)->capture_default_str();
  t->add_option("--d-in", tr.shape.d_in)->capture_default_str();
  t->add_option("--teacher", tr.teacher)->check(CLI::IsMember({"random", "realizable"}))
      ->capture_default_str();
  t->add_option("--input-span", tr.input_span)->capture_default_str();
  t->add_option("--calib-samples", tr.calib_samples)->capture_default_str();
  t->add_option("--probe-samples", tr.probe_samples)->capture_default_str();
  t->add_option("--log-every", tr.log_every)->capture_default_str();

  auto* a = app.add_subcommand("analyze", "MSE decomposition reports and plots");
  add_common(a, an.common);
  a->add_flag("--verify-table1", an.verify_table1, "Check the published decomposition rows");
  a->add_flag("--synthetic-cancel", an.synthetic_cancel, "Decompose a perfectly cancelling pair");
  a->add_option("--trace", an.traces, "Trace CSV (repeatable)")->check(CLI::ExistingFile);
  a->add_option("--manifest", an.manifest, "Model manifest JSON")->check(CLI::ExistingFile);
  a->add_option("--toy-layers", an.toy_layers, "Toy MLP widths, e.g. 64,64,64,64")->delimiter(',');
  a->add_option("--k", an.k)->capture_default_str();
  a->add_option("--method", an.method)->check(CLI::IsMember({"greedy", "iterative", "calibrated"}))
      ->capture_default_str();
  a->add_option("--probe-samples", an.probe_samples)->capture_default_str();
  a->add_option("--calib-samples", an.calib_samples)->capture_default_str();
  a->add_option("--input-span", an.input_span)->capture_default_str();

  auto* g = app.add_subcommand("gridsearch", "Grid over preconditioning intensities");
  add_common(g, gr.common);
  g->add_option("--alpha-in-list", gr.alpha_in)->delimiter(',')->capture_default_str();
  g->add_option("--alpha-out-list", gr.alpha_out)->delimiter(',')->capture_default_str();
  g->add_option("--metric", gr.metric)->check(CLI::IsMember({"initial-loss"}))->capture_default_str();
  g->add_option("--k", gr.k)->capture_default_str();
  g->add_option("--t-max", gr.t_max)->capture_default_str();
  g->add_option("--d-out", gr.shape.d_out)->capture_default_str();
  g->add_option("--d-in", gr.shape.d_in)->capture_default_str();
  g->add_option("--calib-samples", gr.calib_samples)->capture_default_str();
  g->add_option("--probe-samples", gr.probe_samples)->capture_default_str();
  g->add_option("--input-span", gr.input_span)->capture_default_str();

  auto* b = app.add_subcommand("bench", "Packed vs dense GEMV latency");
  add_common(b, be.common);
  b->add_option("--shapes", be.shapes, "ROWSxCOLS list (default: four decoder shapes)")->delimiter(',');
  b->add_option("--k", be.k)->capture_default_str();
  b->add_option("--reps", be.reps)->capture_default_str();
  b->add_option("--warmup", be.warmup)->capture_default_str();
  b->add_option("--threads", be.threads)->capture_default_str();

  auto* s = app.add_subcommand("svid-sweep", "Residual and initial loss against T_max");
  add_common(s, sw.common);
  s->add_option("--t-max-list", sw.t_max_list)->delimiter(',')->capture_default_str();
  s->add_option("--method", sw.method)->check(CLI::IsMember({"iterative", "calibrated"}))
      ->capture_default_str();
  s->add_option("--k", sw.k)->capture_default_str();
  s->add_option("--alpha-in", sw.alpha_in)->capture_default_str();
  s->add_option("--alpha-out", sw.alpha_out)->capture_default_str();
  s->add_option("--d-out", sw.shape.d_out)->capture_default_str();
  s->add_option("--d-in", sw.shape.d_in)->capture_default_str();
  s->add_option("--calib-samples", sw.calib_samples)->capture_default_str();
  s->add_option("--probe-samples", sw.probe_samples)->capture_default_str();
  s->add_option("--input-span", sw.input_span)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (d->parsed()) return active = "decompose", cmd_decompose(dec);
    if (t->parsed()) return active = "train", cmd_train(tr);
    if (a->parsed()) return active = "analyze", cmd_analyze(an);
    if (g->parsed()) return active = "gridsearch", cmd_gridsearch(gr);
    if (b->parsed()) return active = "bench", cmd_bench(be);
    if (s->parsed()) return active = "svid-sweep", cmd_svid_sweep(sw);
  } catch (const std::exception& e) {
    Json err{{"error", error_kind(e)}, {"subcommand", active}, {"message", e.what()}};
    if (auto* nf = dynamic_cast<const NonFiniteLossError*>(&e)) err["step"] = nf->step();
    std::cerr << err.dump() << '\n';
    return 2;
  }
  return 1;
}
