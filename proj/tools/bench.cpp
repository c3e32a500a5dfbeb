// Benchmark of the OpenMP kernels against the serial reference paths:
// Monte Carlo risk evaluation and per-y boundary table solves. Both code
// paths must produce bitwise-identical numbers; this tool reports timings
// and verifies that equality on the fly.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "qdet/numerics.hpp"
#include "qdet/riskeval.hpp"
#include "qdet/solver_exp.hpp"
#include "qdet/solver_linear.hpp"

using namespace qdet;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Timing {
  double serial_s = 0.0;
  double parallel_s = 0.0;
  bool identical = true;
};

Timing bench_mc(std::size_t n_paths) {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  Prior prior{0.0, 1.0};
  PenaltySpec pen = PenaltySpec::exponential(1.0, 1.0);
  Policy pol =
      Policy::constant_threshold(1.37, Policy::Statistic::PhiExponential);
  SimGrid grid{default_horizon(prior), 1e-3};

  Timing t;
  McOptions serial;
  serial.threads = 1;
  double t0 = now_s();
  RiskEstimate a = evaluate_risk(m, prior, pen, pol, grid, n_paths, 42, serial);
  t.serial_s = now_s() - t0;

  McOptions par;
  par.threads = -1;
  t0 = now_s();
  RiskEstimate b = evaluate_risk(m, prior, pen, pol, grid, n_paths, 42, par);
  t.parallel_s = now_s() - t0;

  t.identical = a.risk == b.risk && a.se == b.se &&
                a.false_alarm == b.false_alarm && a.delay == b.delay;
  return t;
}

Timing bench_boundary(std::size_t n_y) {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 0.5, 2.0, 1.0);
  ChangeOfVariables cov(m, 1.0);
  Prior prior{0.0, 1.0};
  LinearBoundarySolver solver(cov, prior, 1.0);
  std::vector<double> yg = linspace(-4.0, 4.0, n_y);

  Timing t;
  double t0 = now_s();
  BoundaryTable a = solver.solve_boundary(yg, false);
  t.serial_s = now_s() - t0;
  t0 = now_s();
  BoundaryTable b = solver.solve_boundary(yg, true);
  t.parallel_s = now_s() - t0;
  t.identical = a.h == b.h;
  return t;
}

void report(const char* name, const Timing& t) {
  std::printf("%-22s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   %s\n",
              name, t.serial_s, t.parallel_s,
              t.parallel_s > 0 ? t.serial_s / t.parallel_s : 0.0,
              t.identical ? "bitwise-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n_paths = 20000, n_y = 33;
  if (argc > 1) n_paths = static_cast<std::size_t>(std::stoul(argv[1]));
  if (argc > 2) n_y = static_cast<std::size_t>(std::stoul(argv[2]));

#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel path falls back to serial\n");
#endif

  report("mc_risk", bench_mc(n_paths));
  report("boundary_table", bench_boundary(n_y));
  return 0;
}
