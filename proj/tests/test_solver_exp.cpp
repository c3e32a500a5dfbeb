#include <doctest.h>

#include <cmath>

#include "qdet/numerics.hpp"
#include "qdet/solver_exp.hpp"
#include "qdet/solver_linear.hpp"

using namespace qdet;

namespace {

ExpBoundarySolver flat_solver(double s = std::sqrt(2.0), double c = 1.0,
                              double alpha = 1.0) {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, s, s, 1.0);
  return ExpBoundarySolver(ChangeOfVariables(m, 1.0), Prior{0.0, 1.0}, c,
                           alpha);
}

ExpBoundarySolver sigmoid_solver() {
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, 0.5, 2.0, 1.0);
  return ExpBoundarySolver(ChangeOfVariables(m, 1.0), Prior{0.0, 1.0}, 1.0,
                           1.0);
}

}  // namespace

TEST_CASE("fundamental solution: degenerate-point slope") {
  ExpBoundarySolver s = flat_solver();
  FundamentalSolution a = s.fundamental(0.0, 4.0, 1e-10, 1e-6);
  FundamentalSolution b = s.fundamental(0.0, 4.0, 1e-10, 1e-7);
  CHECK(std::abs(a.log_deriv(1e-6) - 1.0) <= 1e-4);
  CHECK(std::abs(b.log_deriv(1e-7) - 1.0) <= 1e-4);
}

TEST_CASE("fundamental solution: positive and increasing") {
  ExpBoundarySolver s = sigmoid_solver();
  FundamentalSolution fs = s.fundamental(0.5, 6.0);
  double prev = -1e300;
  for (double phi : fs.node_phi()) {
    CHECK(fs.log_deriv(phi) > 0.0);  // H' > 0 given H > 0
    const double lh = fs.log_H(phi);
    CHECK(lh >= prev);
    prev = lh;
  }
}

TEST_CASE("fundamental solution: tolerance self-convergence") {
  ExpBoundarySolver s = flat_solver();
  FundamentalSolution a = s.fundamental(0.0, 4.0, 1e-10);
  FundamentalSolution b = s.fundamental(0.0, 4.0, 5e-11);
  for (double phi : {0.2, 0.7, 1.9})
    CHECK(std::abs(a.ratio(phi, 3.0) - b.ratio(phi, 3.0)) <= 1e-8);
}

TEST_CASE("normalization start point is immaterial") {
  ExpBoundarySolver s = flat_solver();
  const double h = s.solve_at(0.0).h;
  FundamentalSolution a = s.fundamental(0.0, 4.0, 1e-10, 1e-6);
  FundamentalSolution b = s.fundamental(0.0, 4.0, 1e-10, 1e-7);
  for (double phi : {0.3, 0.9, 1.2}) {
    const double va = (s.cost() * (1 + h) + 1) * a.ratio(phi, h) -
                      s.cost() * (1 + phi);
    const double vb = (s.cost() * (1 + h) + 1) * b.ratio(phi, h) -
                      s.cost() * (1 + phi);
    CHECK(std::abs(va - vb) <= 1e-8);
  }
}

TEST_CASE("smooth-fit boundary on the flat model") {
  ExpBoundarySolver s = flat_solver();
  auto info = s.solve_at(0.0);
  CHECK(info.h >= s.floor());
  CHECK(info.smooth_fit_residual <= 1e-7);

  // y-independence for constant rho
  CHECK(std::abs(s.solve_at(-1.5).h - info.h) <= 1e-6);
  CHECK(std::abs(s.solve_at(2.0).h - info.h) <= 1e-6);
}

TEST_CASE("value at the boundary and bounds inside") {
  ExpBoundarySolver s = flat_solver();
  const double h = s.solve_at(0.0).h;
  CHECK(s.value(h, 0.0, h) == doctest::Approx(1.0));
  CHECK(s.value(1.5 * h, 0.0, h) == doctest::Approx(1.0));

  auto slice = s.value_slice(0.0, h, linspace(0.0, h, 41));
  for (double v : slice.value) {
    CHECK(v >= -1e-10);
    CHECK(v <= 1.0 + 1e-10);
  }
}

TEST_CASE("value solves the inhomogeneous equation pointwise") {
  ExpBoundarySolver s = flat_solver();
  const double lam = 1.0, c = 1.0, alpha = 1.0;
  const double h = s.solve_at(0.0).h;
  FundamentalSolution fs = s.fundamental(0.0, std::max(1.05 * h, 1.0));
  auto H = [&](double p) { return s.value(fs, p, h); };
  for (double f : {0.1, 0.25, 0.5, 0.75, 0.95}) {
    const double phi = f * h;
    const double d = 0.02 * h;
    auto d1 = [&](double dd) { return (H(phi + dd) - H(phi - dd)) / (2 * dd); };
    auto d2 = [&](double dd) {
      return (H(phi + dd) - 2 * H(phi) + H(phi - dd)) / (dd * dd);
    };
    const double h1 = (4 * d1(d / 2) - d1(d)) / 3.0;
    const double h2 = (4 * d2(d / 2) - d2(d)) / 3.0;
    const double rho = s.cov().rho_hat(phi, 0.0);
    const double resid = 0.5 * rho * phi * phi * h2 +
                         (lam + (lam + alpha) * phi) * h1 - lam * H(phi) +
                         c * alpha * phi;
    CHECK(std::abs(resid) <= 1e-4 * (c * alpha * phi));
  }
}

TEST_CASE("sigmoid modulation: boundary and value sandwiches") {
  ExpBoundarySolver s = sigmoid_solver();
  ExpBoundarySolver lo = flat_solver(0.5);
  ExpBoundarySolver hi = flat_solver(2.0);
  const double h_lo = lo.solve_at(0.0).h;
  const double h_hi = hi.solve_at(0.0).h;

  auto yg = linspace(-6.0, 6.3, 9);
  BoundaryTable t = s.solve_boundary(yg);
  CHECK(t.min_h() >= h_lo - 1e-6);
  CHECK(t.max_h() <= h_hi + 1e-6);
  CHECK(t.min_h() >= s.floor());

  // value estimates bracket pointwise: lower rho means higher risk
  const double y = 0.0;
  const double h_mid = t.value_at(y);
  for (double f : {0.2, 0.5, 0.8}) {
    const double phi = f * h_lo;
    const double v = s.value(phi, y, h_mid);
    const double v_lo_rho = lo.value(phi, 0.0, h_lo);  // upper risk estimate
    const double v_hi_rho = hi.value(phi, 0.0, h_hi);  // lower risk estimate
    CHECK(v <= v_lo_rho + 1e-6);
    CHECK(v >= v_hi_rho - 1e-6);
  }
}

TEST_CASE("estimate direction in y follows the modulation") {
  // s0 < s1 and eta > 0: the normalized value is increasing in y
  ExpBoundarySolver s = sigmoid_solver();
  auto yg = linspace(-6.0, 6.3, 9);
  BoundaryTable t = s.solve_boundary(yg);
  for (double phi : {0.3, 0.8}) {
    for (double y : {-1.0, 0.0, 1.0}) {
      const double d = 0.25;
      const double up = s.value(phi, y + d, t.value_at(y + d));
      const double dn = s.value(phi, y - d, t.value_at(y - d));
      CHECK(up >= dn - 1e-9);
    }
  }
}

TEST_CASE("vanishing-alpha boundaries approach the linear one") {
  // c_exp = c_lin / alpha keeps the penalties comparable as alpha drops
  DiffusionModel m = DiffusionModel::eta_sigmoid(0.0, 1.0, std::sqrt(2.0),
                                                 std::sqrt(2.0), 1.0);
  ChangeOfVariables cov(m, 1.0);
  const Prior prior{0.0, 1.0};
  const double c_lin = 1.0;
  LinearBoundarySolver lin(cov, prior, c_lin);
  const double h_lin = lin.solve_at(0.0).h;

  double prev_gap = 1e300;
  for (double alpha : {1.0, 0.1, 0.01}) {
    ExpBoundarySolver ex(cov, prior, c_lin / alpha, alpha);
    const double gap = std::abs(ex.solve_at(0.0).h - h_lin);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap < 0.02);
}

TEST_CASE("boundary stays above the never-stop floor across costs") {
  for (double c : {0.3, 1.0, 3.0}) {
    for (double alpha : {0.5, 1.0, 2.0}) {
      ExpBoundarySolver s = flat_solver(1.0, c, alpha);
      const double h = s.solve_at(0.0).h;
      CHECK(h >= 1.0 / (c * alpha));
    }
  }
}
