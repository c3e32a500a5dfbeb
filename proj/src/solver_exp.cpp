#include "qdet/solver_exp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "qdet/numerics.hpp"

namespace qdet {

double FundamentalSolution::phi_max() const { return node_phi_.back(); }

double FundamentalSolution::log_H(double phi) const {
  if (phi < phi_min) {
    // R -> 1 at the degenerate point; linear in phi, not in log phi
    return -(phi_min - std::max(phi, 0.0)) * r_at_min_;
  }
  return logH_(std::log(phi));
}

double FundamentalSolution::log_deriv(double phi) const {
  if (phi < phi_min) return r_at_min_;
  return R_(std::log(phi));
}

ExpBoundarySolver::ExpBoundarySolver(ChangeOfVariables cov, Prior prior,
                                     double c, double alpha)
    : cov_(std::move(cov)), prior_(prior), c_(c), alpha_(alpha) {
  if (!cov_.subclass())
    throw CapabilityError("exponential boundary solver requires the EtaSigmoid family");
  if (!(c_ > 0.0)) throw ConfigError("/penalty/c", "must be positive");
  if (!(alpha_ > 0.0)) throw ConfigError("/penalty/alpha", "must be positive");
  if (!(prior_.lambda > 0.0))
    throw ConfigError("/prior/lambda", "must be positive");
}

// Smooth branch of the Riccati equation for R = H'/H:
//   R = (lam - eps (R^2 + R')) / b,  eps = rho_hat phi^2 / 2,  b = lam+(lam+alpha) phi.
// Picard iteration from R_0 = lam/b with numerically differentiated
// correction terms; each level gains a factor ~ rho phi / lam, so a few
// levels reach ~1e-10 below phi_switch.
double ExpBoundarySolver::slaved_log_deriv(double y, double phi,
                                           int order) const {
  const double lam = prior_.lambda;
  const double b = lam + (lam + alpha_) * phi;
  if (order <= 0) return lam / b;
  const double eps = 0.5 * cov_.rho_hat(phi, y) * phi * phi;
  const double dphi = 1e-3 * phi;
  const double r = slaved_log_deriv(y, phi, order - 1);
  const double rp = (slaved_log_deriv(y, phi + dphi, order - 1) -
                     slaved_log_deriv(y, phi - dphi, order - 1)) /
                    (2.0 * dphi);
  return (lam - eps * (r * r + rp)) / b;
}

FundamentalSolution ExpBoundarySolver::fundamental(double y, double phi_max,
                                                   double rel_tol,
                                                   double phi_min) const {
  if (!(phi_max > phi_min))
    throw ConfigError("/phi_max", "must exceed phi_min");
  const double lam = prior_.lambda;

  FundamentalSolution fs;
  fs.y = y;
  fs.phi_min = phi_min;

  const double rho0 = cov_.rho_hat(std::min(4.0 * phi_min, 0.5 * phi_max), y);
  double phi_switch = 0.02 * lam / rho0;
  phi_switch = std::min({phi_switch, 0.05, 0.5 * phi_max});
  phi_switch = std::max(phi_switch, 4.0 * phi_min);
  fs.phi_switch = phi_switch;

  std::vector<double> tau_nodes, logh_nodes, r_nodes, phis;

  // boundary layer: log H by quadrature of the slaved derivative
  {
    const double t0 = std::log(phi_min), t1 = std::log(phi_switch);
    const std::size_t n_seg = static_cast<std::size_t>(
                                  std::ceil((t1 - t0) / 0.0625)) +
                              1;
    std::vector<double> tau = linspace(t0, t1, n_seg + 1);
    auto r_of_tau = [&](double t) {
      const double p = std::exp(t);
      return slaved_log_deriv(y, p, 4);
    };
    double acc = 0.0;
    for (std::size_t i = 0; i <= n_seg; ++i) {
      if (i > 0)
        acc += gk15_segment([&](double t) { return r_of_tau(t) * std::exp(t); },
                            tau[i - 1], tau[i])
                   .value;
      tau_nodes.push_back(tau[i]);
      logh_nodes.push_back(acc);
      r_nodes.push_back(r_of_tau(tau[i]));
      phis.push_back(std::exp(tau[i]));
    }
  }
  fs.r_at_min_ = r_nodes.front();

  // RK45 (Dormand-Prince) on u = (logH, R) from phi_switch outward
  {
    static constexpr double A[7][6] = {
        {0, 0, 0, 0, 0, 0},
        {1.0 / 5, 0, 0, 0, 0, 0},
        {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
        {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
         -5103.0 / 18656, 0},
        {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
         11.0 / 84}};
    static constexpr double B5[7] = {35.0 / 384,      0, 500.0 / 1113,
                                     125.0 / 192,     -2187.0 / 6784,
                                     11.0 / 84,       0};
    static constexpr double B4[7] = {5179.0 / 57600,  0, 7571.0 / 16695,
                                     393.0 / 640,     -92097.0 / 339200,
                                     187.0 / 2100,    1.0 / 40};

    auto deriv = [&](double phi, const double u[2], double out[2]) {
      const double b = lam + (lam + alpha_) * phi;
      const double eps = 0.5 * cov_.rho_hat(phi, y) * phi * phi;
      const double r = u[1];
      out[0] = r;
      out[1] = (lam - b * r) / eps - r * r;
    };

    double phi = phi_switch;
    double u[2] = {logh_nodes.back(), r_nodes.back()};
    double h = 1e-3 * phi_switch;
    const double atol = 1e-13;
    int guard = 0;
    while (phi < phi_max) {
      if (++guard > 2000000) throw StiffnessFailure("step budget exhausted");
      if (phi_max - phi <= 4e-16 * phi_max) break;  // landed on the edge
      h = std::min(h, phi_max - phi);
      if (h < 1e-14 * std::max(1.0, phi))
        throw StiffnessFailure("step size collapsed below 1e-14");
      double k[7][2], ut[2];
      deriv(phi, u, k[0]);
      bool bad = false;
      for (int s = 1; s < 7 && !bad; ++s) {
        ut[0] = u[0];
        ut[1] = u[1];
        for (int j = 0; j < s; ++j) {
          ut[0] += h * A[s][j] * k[j][0];
          ut[1] += h * A[s][j] * k[j][1];
        }
        const double ph = phi + h * (s == 1 ? 0.2
                                     : s == 2 ? 0.3
                                     : s == 3 ? 0.8
                                     : s == 4 ? 8.0 / 9.0
                                              : 1.0);
        if (!std::isfinite(ut[0]) || !std::isfinite(ut[1])) {
          bad = true;
          break;
        }
        deriv(ph, ut, k[s]);
      }
      double u5[2], err = 0.0;
      if (!bad) {
        for (int d = 0; d < 2; ++d) {
          double s5 = 0.0, s4 = 0.0;
          for (int s = 0; s < 7; ++s) {
            s5 += B5[s] * k[s][d];
            s4 += B4[s] * k[s][d];
          }
          u5[d] = u[d] + h * s5;
          const double sc = atol + rel_tol * std::max(std::abs(u[d]),
                                                      std::abs(u5[d]));
          err = std::max(err, std::abs(h * (s5 - s4)) / sc);
        }
        if (!std::isfinite(err)) bad = true;
      }
      if (bad || err > 1.0) {
        h *= bad ? 0.25 : std::max(0.2, 0.9 * std::pow(err, -0.25));
        continue;
      }
      phi += h;
      u[0] = u5[0];
      u[1] = u5[1];
      tau_nodes.push_back(std::log(phi));
      logh_nodes.push_back(u[0]);
      r_nodes.push_back(u[1]);
      phis.push_back(phi);
      h *= std::min(5.0, 0.9 * std::pow(std::max(err, 1e-10), -0.2));
    }
  }

  // Hermite tables keyed on log phi: d logH/d tau = R phi, dR/d tau = R' phi
  std::vector<double> dlogh(tau_nodes.size()), dr(tau_nodes.size());
  for (std::size_t i = 0; i < tau_nodes.size(); ++i) {
    const double phi = phis[i];
    const double b = lam + (lam + alpha_) * phi;
    const double eps = 0.5 * cov_.rho_hat(phi, y) * phi * phi;
    const double r = r_nodes[i];
    dlogh[i] = r * phi;
    dr[i] = ((lam - b * r) / eps - r * r) * phi;
  }
  fs.node_phi_ = phis;
  fs.logH_ = HermiteTable(tau_nodes, logh_nodes, dlogh);
  fs.R_ = HermiteTable(std::move(tau_nodes), std::move(r_nodes), std::move(dr));
  return fs;
}

ExpBoundarySolver::RootInfo ExpBoundarySolver::solve_at(double y) const {
  const double lo0 = floor() * (1.0 + 1e-9);
  double phi_max = std::max(8.0 * lo0, 8.0);
  FundamentalSolution fs = fundamental(y, phi_max);

  auto q = [&](double h) {
    return fs.log_deriv(h) * (c_ * (1.0 + h) + 1.0) - c_;
  };

  if (!(q(lo0) > 0.0))
    throw NoRoot("smooth-fit equation nonpositive at the stopping floor");

  double hi = std::max(2.0 * lo0, 1.0);
  while (q(hi) >= 0.0) {
    hi *= 2.0;
    if (hi > 1e9) throw NoRoot("smooth-fit bracket expansion exceeded 1e9");
    if (hi > 0.9 * phi_max) {
      phi_max = 4.0 * hi;
      fs = fundamental(y, phi_max);
    }
  }

  double lo = lo0;
  double root = bisect([&](double h) { return -q(h); }, lo, hi, -q(lo), 1e-8);

  // secant polish toward |q| <= 1e-9
  for (int it = 0; it < 6; ++it) {
    const double r = q(root);
    if (std::abs(r) <= 1e-9) break;
    const double dh = 1e-6 * std::max(1.0, root);
    const double slope = (q(root + dh) - q(root - dh)) / (2.0 * dh);
    if (!(slope < 0.0)) break;
    const double next = root - r / slope;
    if (next <= lo0 || next >= fs.phi_max()) break;
    root = next;
  }

  RootInfo info;
  info.h = root;
  info.smooth_fit_residual = std::abs(q(root));
  return info;
}

BoundaryTable ExpBoundarySolver::solve_boundary(std::span<const double> y_grid,
                                                bool parallel) const {
  BoundaryTable t;
  t.coord = BoundaryTable::Coord::Y;
  t.penalty = "exponential";
  t.solver = "ode";
  t.z = cov_.z();
  t.tol = 1e-8;
  t.grid.assign(y_grid.begin(), y_grid.end());
  t.h.resize(y_grid.size());

  std::vector<RootInfo> infos(y_grid.size());
  const std::int64_t n = static_cast<std::int64_t>(y_grid.size());
  std::exception_ptr eptr = nullptr;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      infos[static_cast<std::size_t>(i)] =
          solve_at(y_grid[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical
      if (!eptr) eptr = std::current_exception();
    }
  }
  if (eptr) std::rethrow_exception(eptr);

  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    t.h[i] = infos[i].h;
    t.max_residual = std::max(t.max_residual, infos[i].smooth_fit_residual);
  }
  return t;
}

double ExpBoundarySolver::value(const FundamentalSolution& fs, double phi,
                                double h) const {
  if (phi >= h) return 1.0;
  return (c_ * (1.0 + h) + 1.0) * fs.ratio(phi, h) - c_ * (1.0 + phi);
}

double ExpBoundarySolver::value(double phi, double y, double h) const {
  FundamentalSolution fs = fundamental(y, std::max(h * 1.05, 1.0));
  return value(fs, phi, h);
}

ValueSlice ExpBoundarySolver::value_slice(
    double y, double h, std::span<const double> phi_grid) const {
  FundamentalSolution fs = fundamental(y, std::max(h * 1.05, 1.0));
  ValueSlice s;
  s.y = y;
  s.h = h;
  s.penalty = "exponential";
  s.phi.assign(phi_grid.begin(), phi_grid.end());
  s.value.resize(phi_grid.size());
  for (std::size_t i = 0; i < phi_grid.size(); ++i)
    s.value[i] = value(fs, phi_grid[i], h);
  return s;
}

BoundaryTable ExpBoundarySolver::map_to_x(
    const BoundaryTable& in_y, std::span<const double> x_grid) const {
  BoundaryTable t = map_boundary_to_x(cov_, in_y, x_grid, floor());
  t.penalty = "exponential";
  return t;
}

}  // namespace qdet
