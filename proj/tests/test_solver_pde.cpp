#include <doctest.h>

#include <cmath>

#include "qdet/numerics.hpp"
#include "qdet/solver_exp.hpp"
#include "qdet/solver_linear.hpp"
#include "qdet/solver_pde.hpp"

using namespace qdet;

namespace {

DiffusionModel flat_model() {
  return DiffusionModel::eta_sigmoid(0.0, 1.0, std::sqrt(2.0), std::sqrt(2.0),
                                     1.0);
}

DiffusionModel sigmoid_model() {
  return DiffusionModel::eta_sigmoid(0.0, 1.0, 0.5, 2.0, 1.0);
}

}  // namespace

TEST_CASE("operator reproduces constants and linear functions") {
  ChangeOfVariables cov(sigmoid_model(), 1.0);
  std::vector<double> phi = {0.0, 0.2, 0.5, 0.9, 1.4, 2.0, 2.7, 3.5};
  std::vector<double> y = linspace(-1.0, 1.0, 5);
  DiscreteOperator op = assemble_operator(cov, Prior{0.0, 1.0}, 1.0, phi, y);

  // H == 1: only the decay term survives
  std::vector<double> ones(phi.size() * y.size(), 1.0);
  auto L1 = op.apply(ones);
  for (double v : L1) CHECK(v == doctest::Approx(-1.0).epsilon(1e-12));

  // H = 1 + eps (phi - phi0): drift and decay only, stencils exact on linears
  const double eps = 0.01, phi0 = 1.0, lam = 1.0, alpha = 1.0;
  std::vector<double> lin(phi.size() * y.size());
  for (std::size_t j = 0; j < y.size(); ++j)
    for (std::size_t i = 0; i < phi.size(); ++i)
      lin[op.idx(i, j)] = 1.0 + eps * (phi[i] - phi0);
  auto Ll = op.apply(lin);
  for (std::size_t j = 0; j < y.size(); ++j)
    for (std::size_t i = 0; i + 1 < phi.size(); ++i) {
      const double b = lam + (lam + alpha) * phi[i];
      const double expect = b * eps - lam * lin[op.idx(i, j)];
      CHECK(std::abs(Ll[op.idx(i, j)] - expect) <= 1e-10);
    }

  CHECK(op.monotone);
}

TEST_CASE("constant rho: solution is y-independent and matches the ode route") {
  ChangeOfVariables cov(flat_model(), 1.0);
  const Prior prior{0.0, 1.0};
  const PenaltySpec pen = PenaltySpec::exponential(1.0, 1.0);
  PdeSolver solver(cov, prior, pen);
  LCPGrid g = solver.solve();

  CHECK(g.comp_residual <= 1e-6);
  CHECK(*std::min_element(g.H.begin(), g.H.end()) >= -1e-12);
  CHECK(*std::max_element(g.H.begin(), g.H.end()) <= 1.0 + 1e-12);

  // flat in y away from the Dirichlet rows (the edge rows carry the
  // continuous far-field data, which sits one truncation error away from the
  // discrete interior solution)
  double dy_max = 0.0;
  for (std::size_t j = 1; j + 2 < g.y.size(); ++j)
    for (std::size_t i = 0; i < g.phi.size(); ++i)
      dy_max = std::max(dy_max,
                        std::abs(g.H[g.idx(i, j + 1)] - g.H[g.idx(i, j)]));
  CHECK(dy_max <= 1e-4);

  // boundary within one cell of the smooth-fit height
  ExpBoundarySolver ode(cov, prior, pen.c, pen.alpha);
  const double h_ode = ode.solve_at(0.0).h;
  BoundaryTable bt = PdeSolver::extract_boundary(g, solver.stop_floor());
  double cell = 0.0;
  for (std::size_t i = 0; i + 1 < g.phi.size(); ++i)
    if (g.phi[i + 1] > 0.5 * h_ode && g.phi[i] < 1.5 * h_ode)
      cell = std::max(cell, g.phi[i + 1] - g.phi[i]);
  for (double h : bt.h) CHECK(std::abs(h - h_ode) <= cell);
  CHECK(bt.min_h() >= solver.stop_floor());
}

TEST_CASE("constant rho, linear penalty: matches the integral-equation route") {
  ChangeOfVariables cov(flat_model(), 1.0);
  const Prior prior{0.0, 1.0};
  const PenaltySpec pen = PenaltySpec::linear(1.0);
  PdeSolver solver(cov, prior, pen);
  LCPGrid g = solver.solve();
  CHECK(g.comp_residual <= 1e-6);

  LinearBoundarySolver lin(cov, prior, pen.c);
  const double h_lin = lin.solve_at(0.0).h;
  BoundaryTable bt = PdeSolver::extract_boundary(g, solver.stop_floor());
  double cell = 0.0;
  for (std::size_t i = 0; i + 1 < g.phi.size(); ++i)
    if (g.phi[i + 1] > 0.5 * h_lin && g.phi[i] < 1.5 * h_lin)
      cell = std::max(cell, g.phi[i + 1] - g.phi[i]);
  for (double h : bt.h) CHECK(std::abs(h - h_lin) <= cell);

  // the mid-column value factor agrees with (1 + phi) G(phi)
  const std::size_t j = g.y.size() / 2;
  for (double f : {0.25, 0.5, 0.75}) {
    const double phi = f * h_lin;
    auto it = std::upper_bound(g.phi.begin(), g.phi.end(), phi);
    const std::size_t i = static_cast<std::size_t>(it - g.phi.begin()) - 1;
    const double t = (phi - g.phi[i]) / (g.phi[i + 1] - g.phi[i]);
    const double h_pde =
        (1 - t) * g.H[g.idx(i, j)] + t * g.H[g.idx(i + 1, j)];
    const double h_ref = (1.0 + phi) * lin.value(phi, 0.0, h_lin);
    CHECK(std::abs(h_pde - h_ref) <= 5e-3);
  }
}

TEST_CASE("sigmoid modulation: mask structure, sandwich and monotone map") {
  ChangeOfVariables cov(sigmoid_model(), 1.0);
  const Prior prior{0.0, 1.0};
  const PenaltySpec pen = PenaltySpec::exponential(1.0, 1.0);
  PdeSolver solver(cov, prior, pen);
  LCPGrid g = solver.solve();
  CHECK(g.comp_residual <= 1e-6);

  // each column's continuation set is an interval [0, h*)
  for (std::size_t j = 0; j < g.y.size(); ++j) {
    bool seen = false;
    for (std::size_t i = 0; i < g.phi.size(); ++i) {
      const bool a = g.active[g.idx(i, j)] != 0;
      if (a) seen = true;
      if (seen) CHECK(a);
    }
  }

  BoundaryTable bt = PdeSolver::extract_boundary(g, solver.stop_floor());
  ExpBoundarySolver lo(ChangeOfVariables(
                           DiffusionModel::eta_sigmoid(0.0, 1.0, 0.5, 0.5, 1.0),
                           1.0),
                       prior, pen.c, pen.alpha);
  ExpBoundarySolver hi(ChangeOfVariables(
                           DiffusionModel::eta_sigmoid(0.0, 1.0, 2.0, 2.0, 1.0),
                           1.0),
                       prior, pen.c, pen.alpha);
  const double h_lo = lo.solve_at(0.0).h;
  const double h_hi = hi.solve_at(0.0).h;
  double cell = 0.0;
  for (std::size_t i = 0; i + 1 < g.phi.size(); ++i)
    if (g.phi[i + 1] > 0.5 * h_lo && g.phi[i] < 1.5 * h_hi)
      cell = std::max(cell, g.phi[i + 1] - g.phi[i]);
  for (double h : bt.h) {
    CHECK(h >= h_lo - cell);
    CHECK(h <= h_hi + cell);
  }

  // mapped to x: nondecreasing for s0 < s1
  ExpBoundarySolver mapper(cov, prior, pen.c, pen.alpha);
  auto xg = logspace(0.05, 20.0, 60);
  BoundaryTable bx = mapper.map_to_x(bt, xg);
  for (std::size_t i = 0; i + 1 < bx.h.size(); ++i)
    CHECK(bx.h[i + 1] >= bx.h[i] - 1e-6);
}

TEST_CASE("grid refinement moves the boundary by less than two coarse cells") {
  ChangeOfVariables cov(sigmoid_model(), 1.0);
  const Prior prior{0.0, 1.0};
  PdeSolver solver(cov, prior, PenaltySpec::exponential(1.0, 1.0));
  PdeOptions coarse;
  coarse.n_phi = 121;
  coarse.n_y = 25;
  LCPGrid gc = solver.solve(coarse);
  PdeOptions fine;
  fine.n_phi = 241;
  fine.n_y = 49;
  LCPGrid gf = solver.solve(fine, &gc);

  BoundaryTable bc = PdeSolver::extract_boundary(gc, solver.stop_floor());
  BoundaryTable bf = PdeSolver::extract_boundary(gf, solver.stop_floor());

  double coarse_cell = 0.0;
  for (std::size_t i = 0; i + 1 < gc.phi.size(); ++i)
    if (gc.phi[i + 1] > bc.min_h() * 0.5 && gc.phi[i] < bc.max_h() * 1.5)
      coarse_cell = std::max(coarse_cell, gc.phi[i + 1] - gc.phi[i]);

  for (std::size_t j = 0; j < bf.grid.size(); ++j) {
    const double yv = bf.grid[j];
    if (yv < bc.grid.front() || yv > bc.grid.back()) continue;
    CHECK(std::abs(bf.h[j] - bc.value_at(yv)) <= 2.0 * coarse_cell);
  }
}

TEST_CASE("degenerate columns are reported") {
  LCPGrid g;
  g.phi = {0.0, 0.5, 1.0};
  g.y = {0.0, 1.0};
  g.H = {1.0, 1.0, 1.0, 0.5, 0.6, 1.0};
  g.active = {1, 1, 1, 0, 0, 1};
  CHECK_THROWS_AS(PdeSolver::extract_boundary(g, 0.1), DegenerateColumn);

  LCPGrid all_open;
  all_open.phi = {0.0, 0.5, 1.0};
  all_open.y = {0.0};
  all_open.H = {0.1, 0.2, 0.3};
  all_open.active = {0, 0, 0};
  CHECK_THROWS_AS(PdeSolver::extract_boundary(all_open, 0.1),
                  DegenerateColumn);
}
