#include <doctest.h>

#include <cmath>

#include "qdet/filter.hpp"
#include "qdet/simulate.hpp"
#include "test_util.hpp"

using namespace qdet;
using qdet_test::mean_se;
using qdet_test::median;
using qdet_test::regression_slope;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

CoeffTable table_from(double d0, double d1, double sig) {
  CoeffTable t;
  t.x = logspace(0.01, 100.0, 9);
  for (double x : t.x) {
    t.mu0.push_back(d0 * x);
    t.mu1.push_back(d1 * x);
    t.sigma.push_back(sig * x);
  }
  return t;
}

SamplePath path_from_values(std::vector<double> xs, double dt) {
  SamplePath p;
  p.x = std::move(xs);
  for (std::size_t k = 0; k < p.x.size(); ++k) p.times.push_back(dt * double(k));
  return p;
}

PenaltySpec exp_alpha0(double c) {
  PenaltySpec p;
  p.kind = PenaltySpec::Kind::Exponential;
  p.c = c;
  p.alpha = 0.0;
  return p;
}

}  // namespace

TEST_CASE("equal drifts leave the log likelihood ratio at zero") {
  DiffusionModel m = DiffusionModel::tabulated(table_from(0.2, 0.2, 0.5), 1.0);
  SamplePath p = path_from_values({1.0, 1.2, 0.9, 1.4, 1.1}, 0.01);
  auto st = run_filter(p, m, Prior{0.0, 1.0}, PenaltySpec::linear(1.0));
  for (const auto& s : st) CHECK(s.logL == 0.0);
}

TEST_CASE("one-step update matches a hand quadrature of the two sums") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, std::sqrt(2.0),
                                                 std::sqrt(2.0), 1.0);
  const double dt = 0.01;
  SamplePath p = path_from_values({1.0, 1.05, 1.1, 1.15, 1.2, 1.25}, dt);

  // left-point sums computed independently
  double expected = 0.0;
  for (std::size_t k = 0; k + 1 < p.x.size(); ++k) {
    const double x = p.x[k];
    const double sg = m.sigma(x);
    const double r = (m.mu1(x) - m.mu0(x)) / (sg * sg);
    const double q = (m.mu1(x) * m.mu1(x) - m.mu0(x) * m.mu0(x)) / (sg * sg);
    expected += r * (p.x[k + 1] - p.x[k]) - 0.5 * q * dt;
  }
  double logl = 0.0;
  for (std::size_t k = 0; k + 1 < p.x.size(); ++k)
    logl = update_logL(m, logl, p.x[k], p.x[k + 1], dt);
  CHECK(std::abs(logl - expected) <= 1e-12);
}

TEST_CASE("likelihood mean stays at one without a change") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  SimGrid grid{1.0, 1e-3};
  const std::size_t n = 4000;
  std::vector<double> lt(n);
  const std::int64_t ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < ni; ++i) {
    RngStream rng(91, static_cast<std::uint64_t>(i));
    SamplePath p = simulate_observation(m, kInf, 1.0, grid, rng);
    auto st = run_filter(p, m, Prior{0.0, 1.0}, PenaltySpec::linear(1.0));
    lt[i] = std::exp(st.back().logL);
  }
  auto ms = mean_se(lt);
  CHECK(std::abs(ms.mean - 1.0) < 4.0 * ms.se);
}

TEST_CASE("weighted ratio update limits") {
  const Prior no_rate{0.0, 0.0};
  // lambda = 0, unit likelihood ratio: linear leaves phi alone
  CHECK(update_phi(no_rate, PenaltySpec::linear(1.0), 0.7, 1.0, 0.01) == 0.7);
  // exponential grows by the deterministic factor
  PenaltySpec pe = PenaltySpec::exponential(1.0, 2.0);
  CHECK(update_phi(no_rate, pe, 0.7, 1.0, 0.01) ==
        doctest::Approx(0.7 * std::exp(2.0 * 0.01)).epsilon(1e-14));
}

TEST_CASE("initial state and the half prior") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  SamplePath p = path_from_values({1.0}, 1e-3);  // length-zero path
  auto st = run_filter(p, m, Prior{0.5, 1.0}, PenaltySpec::linear(1.0));
  REQUIRE(st.size() == 1);
  CHECK(st[0].t == 0.0);
  CHECK(st[0].logL == 0.0);
  CHECK(st[0].phi == doctest::Approx(1.0));
  CHECK(st[0].pi == doctest::Approx(0.5));
}

TEST_CASE("unit likelihood ratio integrates the prior exactly") {
  // equal drifts freeze L at 1; phi then has the closed form e^{lam t} - 1
  DiffusionModel m = DiffusionModel::tabulated(table_from(0.1, 0.1, 0.4), 1.0);
  const double dt = 1e-5, T = 0.1, lam = 1.0;
  const std::size_t n = static_cast<std::size_t>(T / dt);
  std::vector<double> xs(n + 1, 1.0);
  SamplePath p = path_from_values(std::move(xs), dt);
  auto st = run_filter(p, m, Prior{0.0, lam}, PenaltySpec::linear(1.0));
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = dt * double(k);
    CHECK(std::abs(st[k].phi - std::expm1(lam * t)) <= 1e-8);
  }
}

TEST_CASE("linear filter equals the alpha = 0 exponential filter bitwise") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 0.5, 2.0, 1.0);
  SimGrid grid{1.0, 1e-3};
  SamplePath p = simulate_observation(m, 0.3, 1.0, grid, 5150);
  auto lin = run_filter(p, m, Prior{0.1, 0.7}, PenaltySpec::linear(2.0));
  auto exp0 = run_filter(p, m, Prior{0.1, 0.7}, exp_alpha0(2.0));
  REQUIRE(lin.size() == exp0.size());
  for (std::size_t k = 0; k < lin.size(); ++k) {
    CHECK(lin[k].phi == exp0[k].phi);
    CHECK(lin[k].logL == exp0[k].logL);
  }
}

TEST_CASE("filter tracks the joint simulation as dt shrinks") {
  // Both discretizations share the innovation path; their per-step mismatch
  // is the zero-mean Milstein-type residual phi((dB)^2 - dt)/2 plus an O(dt^2)
  // systematic part. Pathwise the gap is therefore strong order 1/2, while
  // the signed mean gap is first order.
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  const Prior prior{0.1, 1.0};
  const PenaltySpec pen = PenaltySpec::linear(1.0);
  const double T = 0.5;

  std::vector<double> log_dt_w, log_gap_w;
  for (double dt : {8e-3, 4e-3, 2e-3}) {
    SimGrid grid{T, dt};
    const int reps = 4000;
    std::vector<double> gaps(reps);
    const std::int64_t nrep = reps;
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t r = 0; r < nrep; ++r) {
      JointPath jp = simulate_joint(m, prior, pen, 1.0, grid,
                                    9000 + static_cast<std::uint64_t>(r));
      SamplePath sp;
      sp.times = jp.times;
      sp.x = jp.x;
      auto st = run_filter(sp, m, prior, pen);
      gaps[r] = st.back().phi - jp.phi.back();
    }
    log_dt_w.push_back(std::log(dt));
    log_gap_w.push_back(std::log(std::abs(qdet::pairwise_sum(gaps) / reps)));
  }
  const double weak_slope = regression_slope(log_dt_w, log_gap_w);
  CHECK(weak_slope > 0.7);
  CHECK(weak_slope < 1.4);

  std::vector<double> log_dt_s, log_gap_s;
  for (double dt : {4e-3, 2e-3, 1e-3, 5e-4}) {
    SimGrid grid{T, dt};
    double gap_sum = 0.0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
      JointPath jp = simulate_joint(m, prior, pen, 1.0, grid,
                                    9000 + static_cast<std::uint64_t>(r));
      SamplePath sp;
      sp.times = jp.times;
      sp.x = jp.x;
      auto st = run_filter(sp, m, prior, pen);
      double gap = 0.0;
      for (std::size_t k = 0; k < st.size(); ++k)
        gap = std::max(gap, std::abs(st[k].phi - jp.phi[k]));
      gap_sum += gap;
    }
    log_dt_s.push_back(std::log(dt));
    log_gap_s.push_back(std::log(gap_sum / reps));
  }
  const double strong_slope = regression_slope(log_dt_s, log_gap_s);
  CHECK(strong_slope > 0.3);
  CHECK(strong_slope < 0.75);
}

TEST_CASE("strong signal drives the posterior to certainty") {
  // rho = 9; disorder active from the start
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 3.0, 3.0, 1.0);
  SimGrid grid{5.0, 1e-3};
  const std::size_t n = 1000;
  std::size_t confident = 0;
  const std::int64_t ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : confident)
  for (std::int64_t i = 0; i < ni; ++i) {
    RngStream rng(141, static_cast<std::uint64_t>(i));
    SamplePath p = simulate_observation(m, 0.0, 1.0, grid, rng);
    auto st = run_filter(p, m, Prior{0.0, 1.0}, PenaltySpec::linear(1.0));
    if (st.back().pi > 0.99) ++confident;
  }
  CHECK(double(confident) / double(n) >= 0.95);
}

TEST_CASE("median terminal posterior grows with the horizon") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  std::vector<double> med;
  for (double T : {0.5, 1.0, 2.0}) {
    SimGrid grid{T, 1e-3};
    std::vector<double> pis(200);
    for (std::size_t i = 0; i < pis.size(); ++i) {
      RngStream rng(151, i);
      SamplePath p = simulate_observation(m, 0.0, 1.0, grid, rng);
      auto st = run_filter(p, m, Prior{0.0, 1.0}, PenaltySpec::linear(1.0));
      pis[i] = st.back().pi;
    }
    med.push_back(median(pis));
  }
  CHECK(med[0] <= med[1]);
  CHECK(med[1] <= med[2]);
}

TEST_CASE("log likelihood is invariant under joint time rescaling") {
  // t -> c t with mu -> mu/c and sigma -> sigma/sqrt(c)
  const double c = 4.0;
  CoeffTable base = table_from(0.1, 0.6, 0.5);
  CoeffTable scaled = base;
  for (std::size_t i = 0; i < base.x.size(); ++i) {
    scaled.mu0[i] /= c;
    scaled.mu1[i] /= c;
    scaled.sigma[i] /= std::sqrt(c);
  }
  DiffusionModel m0 = DiffusionModel::tabulated(base, 1.0);
  DiffusionModel m1 = DiffusionModel::tabulated(scaled, 1.0);

  std::vector<double> xs = {1.0, 1.1, 0.95, 1.2, 1.3, 1.25};
  SamplePath p0 = path_from_values(xs, 0.01);
  SamplePath p1 = path_from_values(xs, 0.01 * c);

  double l0 = 0.0, l1 = 0.0;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    l0 = update_logL(m0, l0, xs[k], xs[k + 1], 0.01);
    l1 = update_logL(m1, l1, xs[k], xs[k + 1], 0.01 * c);
  }
  CHECK(std::abs(l0 - l1) <= 1e-12);
}

TEST_CASE("saturation cap engages on absurd jumps") {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 3.0, 3.0, 1.0);
  std::vector<double> xs = {1.0};
  for (int k = 1; k <= 40; ++k) xs.push_back(xs.back() * 3.0);
  SamplePath p = path_from_values(xs, 0.05);
  auto st = run_filter(p, m, Prior{0.3, 1.0}, PenaltySpec::linear(1.0));
  CHECK(st.back().phi <= 1e12);
  CHECK(st.back().saturated);
}
