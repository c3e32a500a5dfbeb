#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qdet/path_io.hpp"
#include "qdet/simulate.hpp"
#include "test_util.hpp"

using namespace qdet;
using qdet_test::mean_se;

namespace {

CoeffTable equal_drift_table(double drift, double sig) {
  CoeffTable t;
  t.x = logspace(0.01, 100.0, 9);
  for (double x : t.x) {
    t.mu0.push_back(drift * x);
    t.mu1.push_back(drift * x);
    t.sigma.push_back(sig * x);
  }
  return t;
}

const double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("disorder draw: atom and exponential tail") {
  // full atom: every draw is zero
  {
    RngStream rng(5, 0);
    Prior p{1.0 - 1e-15, 2.0};
    for (int i = 0; i < 100; ++i) CHECK(draw_disorder_time(p, rng) == 0.0);
  }
  // pi = 0: sample mean of Exp(2) within 3 sigma of 1/2
  {
    const std::size_t n = 100000;
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) {
      RngStream rng(6, i);
      draws[i] = draw_disorder_time(Prior{0.0, 2.0}, rng);
    }
    auto m = mean_se(draws);
    CHECK(std::abs(m.mean - 0.5) < 3.0 * (0.5 / std::sqrt(double(n))));
  }
  // pi = 0.3: frequency of exact zeros within 3 sigma of 0.3
  {
    const std::size_t n = 100000;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < n; ++i) {
      RngStream rng(7, i);
      if (draw_disorder_time(Prior{0.3, 1.0}, rng) == 0.0) ++zeros;
    }
    const double frac = double(zeros) / double(n);
    CHECK(std::abs(frac - 0.3) < 3.0 * std::sqrt(0.21 / double(n)));
  }
}

TEST_CASE("equal drifts make the path law independent of theta") {
  DiffusionModel m = DiffusionModel::tabulated(equal_drift_table(0.2, 0.4), 1.0);
  SimGrid grid{1.0, 1e-3};
  SamplePath a = simulate_observation(m, 0.1, 1.0, grid, 99);
  SamplePath b = simulate_observation(m, 7.0, 1.0, grid, 99);
  CHECK(a.x == b.x);
  CHECK(a.db == b.db);
}

TEST_CASE("determinism: same seed gives bitwise-identical paths") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  SimGrid grid{0.5, 1e-3};
  SamplePath a = simulate_observation(m, 0.2, 1.0, grid, 1234);
  SamplePath b = simulate_observation(m, 0.2, 1.0, grid, 1234);
  CHECK(a.x == b.x);
  JointPath ja = simulate_joint(m, Prior{0.1, 1.0}, PenaltySpec::linear(1.0),
                                1.0, grid, 77);
  JointPath jb = simulate_joint(m, Prior{0.1, 1.0}, PenaltySpec::linear(1.0),
                                1.0, grid, 77);
  CHECK(ja.phi == jb.phi);
  CHECK(ja.x == jb.x);
}

TEST_CASE("no-change log-state mean matches the constant-coefficient moment") {
  // s0 = s1 = 1, eta0 = 0: under theta = inf, d log X = -s^2/2 dt + s dB
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  SimGrid grid{1.0, 1e-3};
  const std::size_t n = 10000;
  std::vector<double> logx(n);
  const std::int64_t ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < ni; ++i) {
    RngStream rng(31, static_cast<std::uint64_t>(i));
    SamplePath p = simulate_observation(m, kInf, 1.0, grid, rng);
    logx[i] = std::log(p.x.back());
  }
  auto ms = mean_se(logx);
  CHECK(std::abs(ms.mean - (-0.5)) < 3.0 * ms.se);
}

TEST_CASE("euler strong error drops by about sqrt(2) per step halving") {
  // one shared Brownian path per replication, coarse increments aggregated
  // from the fine ones (bridge-consistent refinement)
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  const double T = 1.0;
  const std::size_t n_fine = 4096;
  const double dt_fine = T / double(n_fine);
  const std::size_t n_paths = 1000;

  auto euler_level = [&](std::span<const double> db_fine, std::size_t factor) {
    const double dt = dt_fine * double(factor);
    double x = 1.0;
    for (std::size_t k = 0; k < n_fine / factor; ++k) {
      double db = 0.0;
      for (std::size_t j = 0; j < factor; ++j) db += db_fine[k * factor + j];
      x += m.mu1(x) * dt + m.sigma(x) * db;  // changed regime throughout
      if (x < 1e-10) x = 1e-10;
    }
    return x;
  };

  std::vector<double> err4(n_paths), err8(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    RngStream rng(41, i);
    std::vector<double> db(n_fine);
    for (double& d : db) d = std::sqrt(dt_fine) * rng.normal();
    const double ref = euler_level(db, 1);
    err4[i] = std::abs(euler_level(db, 8) - ref);
    err8[i] = std::abs(euler_level(db, 4) - ref);
  }
  const double e4 = mean_se(err4).mean;
  const double e8 = mean_se(err8).mean;
  const double ratio = e4 / e8;
  CHECK(ratio > 1.15);
  CHECK(ratio < 1.75);
}

TEST_CASE("joint path basics") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  SimGrid grid{0.5, 1e-3};
  JointPath p = simulate_joint(m, Prior{0.0, 1.0}, PenaltySpec::linear(1.0),
                               1.0, grid, 11);
  CHECK(p.phi[0] == 0.0);
  CHECK(p.pi[0] == 0.0);
  // derived identity is exact
  for (std::size_t k = 0; k < p.phi.size(); ++k)
    CHECK(std::abs(p.pi[k] - p.phi[k] / (1.0 + p.phi[k])) <= 1e-12);
}

TEST_CASE("alpha = 0 exponential joint dynamics equal the linear ones") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 0.5, 2.0, 1.0);
  SimGrid grid{0.5, 1e-3};
  PenaltySpec exp0;
  exp0.kind = PenaltySpec::Kind::Exponential;
  exp0.c = 1.0;
  exp0.alpha = 0.0;
  JointPath a = simulate_joint(m, Prior{0.2, 1.0}, PenaltySpec::linear(1.0),
                               1.0, grid, 313);
  JointPath b = simulate_joint(m, Prior{0.2, 1.0}, exp0, 1.0, grid, 313);
  CHECK(a.phi == b.phi);
  CHECK(a.x == b.x);
}

TEST_CASE("posterior mean follows the prior decay") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  const Prior prior{0.2, 1.0};
  SimGrid grid{1.0, 1e-3};
  const std::size_t n = 10000;
  const std::size_t steps = grid.n_steps();
  const std::size_t ks[3] = {steps / 4, steps / 2, steps};
  std::vector<std::vector<double>> vals(3, std::vector<double>(n));
  const std::int64_t ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < ni; ++i) {
    JointPath p = simulate_joint(m, prior, PenaltySpec::linear(1.0), 1.0, grid,
                                 1000 + static_cast<std::uint64_t>(i));
    for (int j = 0; j < 3; ++j) vals[j][i] = 1.0 - p.pi[ks[j]];
  }
  for (int j = 0; j < 3; ++j) {
    const double t = grid.time(ks[j]);
    const double target = (1.0 - prior.pi) * std::exp(-prior.lambda * t);
    auto ms = mean_se(vals[j]);
    CHECK(std::abs(ms.mean - target) < 3.0 * ms.se);
  }
}

TEST_CASE("debug mode: independently evolved posterior stays locked") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  SimGrid grid{0.5, 1e-4};
  // the systematic part of the gap between the two discretizations is O(dt);
  // averaging the signed terminal gap strips the zero-mean noise
  double gap_sum = 0.0, sup = 0.0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    JointDebug d =
        simulate_joint_debug(m, Prior{0.1, 1.0}, PenaltySpec::linear(1.0), 1.0,
                             grid, 500 + static_cast<std::uint64_t>(r));
    gap_sum += d.final_pi_gap;
    sup = std::max(sup, d.max_pi_drift);
  }
  CHECK(std::abs(gap_sum / reps) <= 1e-4);
  CHECK(sup <= 1e-2);
}

TEST_CASE("state underflow raises after excessive clamping") {
  CoeffTable t;
  t.x = {0.5, 1.0, 2.0};
  t.mu0 = {-500.0, -500.0, -500.0};
  t.mu1 = {-500.0, -500.0, -500.0};
  t.sigma = {0.01, 0.01, 0.01};
  DiffusionModel m = DiffusionModel::tabulated(t, 1.0);
  SimGrid grid{1.0, 0.01};
  CHECK_THROWS_AS(simulate_observation(m, kInf, 1.0, grid, 3), StateUnderflow);
}

TEST_CASE("path csv round trip") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  SimGrid grid{0.1, 1e-2};
  SamplePath p = simulate_observation(m, kInf, 1.0, grid, 21);
  p.seed = 21;
  std::ostringstream os;
  write_path_csv(os, p);
  std::istringstream is(os.str());
  SamplePath q = read_path_csv(is);
  CHECK(q.x == p.x);
  CHECK(q.theta == p.theta);
  CHECK(q.seed == p.seed);
}
