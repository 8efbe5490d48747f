// Train a coupled layer briefly, freeze it to packed bits, save and reload the
// container, then run the multiply-free GEMV against the dense reconstruction.

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "rabit.hpp"

int main() {
  using namespace rabit;
  toy::TrainConfig cfg;
  cfg.steps = 100;
  cfg.lr = 3e-3;
  const Matrix teacher = toy::random_teacher(48, 80, cfg.seed);
  const auto res = toy::train_toy(cfg, teacher, toy::geometric_scales(80, 10.0));
  std::printf("loss %.6f -> %.6f\n", res.trace.rows.front().loss, res.trace.rows.back().loss);

  const auto file = std::filesystem::temp_directory_path() / "freeze_and_run.rbit";
  io::save(freeze_stack(res.layer), file);
  const auto packed = io::load(file).stack;
  std::printf("%s: %ju bytes, k=%zu\n", file.c_str(),
              static_cast<std::uintmax_t>(std::filesystem::file_size(file)), packed.k());

  std::vector<float> x(80);
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::sin(0.37f * static_cast<float>(j));
  const auto y = kernel::stacked_gemv(packed, x);
  const Matrix w = effective_weight(freeze_stack(res.layer));
  double err = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double ref = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) ref += w(i, j) * x[j];
    err = std::fmax(err, std::fabs(ref - y[i]));
  }
  std::printf("max |packed - dense| = %.3g\n", err);
}
