// Decompose a random 64x64 layer into two binary paths, with and without
// channel-importance preconditioning, and compare weight error to task loss.

#include <cstdio>

#include "rabit.hpp"

int main() {
  using namespace rabit;
  const Matrix teacher = toy::random_teacher(64, 64, /*seed=*/1);
  const auto scales = toy::geometric_scales(64, 10.0);
  auto crng = toy::make_rng(1, toy::Stream::calib);
  auto prng = toy::make_rng(1, toy::Stream::probe);
  const auto calib = TeacherIO::from_teacher(teacher, toy::gaussian_inputs(scales, 128, crng));
  const auto probe = TeacherIO::from_teacher(teacher, toy::gaussian_inputs(scales, 1024, prng));

  for (auto m : {InitMethod::greedy, InitMethod::iterative, InitMethod::iterative_precond}) {
    const auto paths = toy::initialize(teacher, calib, m, 2, kDefaultSvidIterations, 0.8, 0.65, {});
    const auto r = init_report(teacher, paths, probe, m);
    std::printf("%-18s mse %.6f  loss %.6f  corr(y1,y2) %+.3f\n", to_string(m).data(), r.avg_mse,
                r.initial_task_loss, toy::path_output_correlation(paths, probe.inputs));
  }
}
