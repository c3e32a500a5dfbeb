#include "qdet/solver_linear.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "qdet/numerics.hpp"

namespace qdet {

namespace {

constexpr double kUMinFactor = 1e-8;  // outer lower endpoint as fraction of h
constexpr double kQuadTol = 1e-10;    // target tolerance (failure limit 1e-9)
constexpr double kRootTolH = 1e-8;    // bisection tolerance in h
constexpr double kHMaxCap = 1e9;      // bracket expansion limit

// One y-slice of the damped kernel machinery. The cumulative damping
// integral
//   J(t) = int_t^{t_hi} lam(1+v)/v^2 W(v) dv
// is tabulated once in log-t (cubic Hermite with the exact derivative), so
// every inner integral becomes a difference J(u) - J(w). For constant rho
// the exact antiderivative lam W (log(w/u) + 1/u - 1/w) is used instead and
// doubles as a cross-check of the tabulated path.
class LinearSlice {
 public:
  LinearSlice(const ChangeOfVariables& cov, double lambda, double c, double y,
              double w_max, double quad_tol = kQuadTol)
      : lambda_(lambda), c_(c), quad_tol_(quad_tol),
        w_const_(cov.model().s0() == cov.model().s1()),
        w_value_(w_const_ ? 2.0 / cov.model().rho_min() : 0.0),
        t_lo_(w_max * 1e-12), t_hi_(w_max * 1.001),
        w_fn_([&cov, y](double v) { return 2.0 / cov.rho_hat(v, y); }) {
    if (w_const_) return;
    // Hermite interpolation error of the cumulative table scales like the
    // fourth power of the segment width; tight tolerances get a finer table
    const double seg_w = quad_tol_ <= 1e-11 ? 0.015625 : 0.0625;
    const double tau_lo = std::log(t_lo_), tau_hi = std::log(t_hi_);
    const std::size_t n_seg =
        static_cast<std::size_t>(std::ceil((tau_hi - tau_lo) / seg_w)) + 1;
    std::vector<double> tau = linspace(tau_lo, tau_hi, n_seg + 1);
    std::vector<double> val(n_seg + 1), dv(n_seg + 1);
    val[n_seg] = 0.0;
    for (std::size_t i = n_seg; i-- > 0;)
      val[i] = val[i + 1] + gk15_segment([this](double s) { return jlog(s); },
                                         tau[i], tau[i + 1])
                                .value;
    for (std::size_t i = 0; i <= n_seg; ++i) dv[i] = -jlog(tau[i]);
    table_ = HermiteTable(std::move(tau), std::move(val), std::move(dv));
  }

  double weight(double v) const {
    return w_const_ ? w_value_ : w_fn_(v);
  }

  // J(u) - J(w), nonnegative for u <= w
  double damping_exponent(double u, double w) const {
    if (w_const_) {
      const double m = lambda_ * w_value_;
      return m * (std::log(w / u) + 1.0 / u - 1.0 / w);
    }
    if (u < t_lo_) return 1e30;  // damping factor underflows to zero anyway
    return table_(std::log(u)) - table_(std::log(w));
  }

  // int_0^w c(1+u)/u W(u) exp(-(J(u)-J(w))) du; equals the boundary-equation
  // left side when w is the candidate height. The 1/u singularity dies under
  // the damping factor; below u_min = 1e-8 w the remainder is bounded by
  // c(1+u_min) W_hi e^{-J(u_min,w)} u_min/(lam W_lo), which underflows.
  double damped_integral(double w) const {
    const double u_min = kUMinFactor * w;
    auto f = [&](double s) {
      const double u = std::exp(s);
      const double e = damping_exponent(u, w);
      if (e > 745.0) return 0.0;
      return c_ * (1.0 + u) * weight(u) * std::exp(-e);
    };
    // the mass concentrates just below w; pre-splitting keeps the error
    // estimate honest on the damped flank
    return adaptive_gk15(f, std::log(u_min), std::log(w), quad_tol_, 1e-13,
                         20000, 16);
  }

 private:
  double jlog(double s) const {
    const double v = std::exp(s);
    return lambda_ * (1.0 + v) / v * w_fn_(v);
  }

  double lambda_, c_, quad_tol_;
  bool w_const_;
  double w_value_;
  double t_lo_, t_hi_;
  std::function<double(double)> w_fn_;
  HermiteTable table_;
};

}  // namespace

LinearBoundarySolver::LinearBoundarySolver(ChangeOfVariables cov, Prior prior,
                                           double c)
    : cov_(std::move(cov)), prior_(prior), c_(c) {
  if (!cov_.subclass())
    throw CapabilityError("linear boundary solver requires the EtaSigmoid family");
  if (!(c_ > 0.0)) throw ConfigError("/penalty/c", "must be positive");
  if (!(prior_.lambda > 0.0))
    throw ConfigError("/prior/lambda", "must be positive");
}

double LinearBoundarySolver::weight_W(double v, double y) const {
  return 2.0 / cov_.rho_hat(v, y);
}

double LinearBoundarySolver::boundary_equation_lhs(double h, double y) const {
  if (!(h > 0.0)) throw ConfigError("/h", "must be positive");
  LinearSlice slice(cov_, prior_.lambda, c_, y, std::max(h, 1.0));
  return slice.damped_integral(h);
}

LinearBoundarySolver::RootInfo LinearBoundarySolver::solve_at(double y) const {
  const double lo0 = floor() * (1.0 + 1e-9);

  double w_max = std::max(32.0 * lo0, 16.0);
  auto slice =
      std::make_unique<LinearSlice>(cov_, prior_.lambda, c_, y, w_max);
  auto lhs = [&](double h) { return slice->damped_integral(h); };

  const double f_lo = lhs(lo0);
  if (f_lo >= 1.0)
    throw NoRoot("boundary equation already above 1 at the stopping floor");

  double hi = std::max(2.0 * lo0, 1.0);
  while (lhs(hi) <= 1.0) {
    hi *= 2.0;
    if (hi > kHMaxCap) throw NoRoot("boundary bracket expansion exceeded 1e9");
    if (hi > 0.5 * w_max) {
      w_max = 32.0 * hi;
      slice = std::make_unique<LinearSlice>(cov_, prior_.lambda, c_, y, w_max);
    }
  }

  auto froot = [&](double h) { return lhs(h) - 1.0; };
  double root = bisect(froot, lo0, hi, f_lo - 1.0, kRootTolH);

  // secant polish toward |lhs - 1| <= 1e-9; accept improving steps only
  double best = std::abs(froot(root));
  for (int it = 0; it < 6 && best > 1e-9; ++it) {
    const double dh = 1e-6 * std::max(1.0, root);
    const double slope = (froot(root + dh) - froot(root - dh)) / (2.0 * dh);
    if (!(slope > 0.0)) break;
    const double next = root - froot(root) / slope;
    if (!(next > lo0) || !(next < hi)) break;
    const double r_next = std::abs(froot(next));
    if (r_next >= best) break;
    root = next;
    best = r_next;
  }

  RootInfo info;
  info.h = root;
  info.residual = std::abs(froot(root));
  const double dh = 1e-5 * std::max(1.0, root);
  info.slope = (froot(root + dh) - froot(root - dh)) / (2.0 * dh);

  // scan for a second crossing on [floor, 2 hi]
  int crossings = 0;
  double prev = f_lo - 1.0;
  for (double hh : logspace(lo0 * 1.000001, std::min(2.0 * hi, kHMaxCap), 48)) {
    const double cur = froot(hh);
    if ((prev < 0.0) != (cur < 0.0)) ++crossings;
    prev = cur;
  }
  info.unique = crossings <= 1;
  return info;
}

BoundaryTable LinearBoundarySolver::solve_boundary(
    std::span<const double> y_grid, bool parallel) const {
  BoundaryTable t;
  t.coord = BoundaryTable::Coord::Y;
  t.penalty = "linear";
  t.solver = "integral";
  t.z = cov_.z();
  t.tol = kRootTolH;
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
    t.max_residual = std::max(t.max_residual, infos[i].residual);
    t.slope_certified = t.slope_certified && infos[i].slope > 0.0;
    t.unique_certified = t.unique_certified && infos[i].unique;
  }
  return t;
}

double LinearBoundarySolver::value(double phi, double y, double h,
                                   double abs_tol) const {
  if (!(phi >= 0.0 && phi <= h))
    throw ConfigError("/phi", "value is defined on 0 <= phi <= h");
  if (phi == h) return 1.0 / (1.0 + h);
  LinearSlice slice(cov_, prior_.lambda, c_, y, std::max(h, 1.0), abs_tol);
  auto outer = [&](double w) {
    return slice.damped_integral(w) / ((1.0 + w) * (1.0 + w));
  };
  // the outer integrand vanishes as w -> 0 with the same damping, so the
  // lower endpoint may be cut at the same relative floor
  const double lo = std::max(phi, kUMinFactor * h);
  double g = 1.0 / (1.0 + h) +
             adaptive_gk15(outer, lo, h, abs_tol, 1e-13, 20000, 8);
  if (g < 0.0 && g > -1e-12) g = 0.0;
  return g;
}

ValueSlice LinearBoundarySolver::value_slice(
    double y, double h, std::span<const double> phi_grid) const {
  ValueSlice s;
  s.y = y;
  s.h = h;
  s.penalty = "linear";
  s.phi.assign(phi_grid.begin(), phi_grid.end());
  s.value.resize(phi_grid.size());
  for (std::size_t i = 0; i < phi_grid.size(); ++i)
    s.value[i] = phi_grid[i] >= h ? 1.0 / (1.0 + phi_grid[i])
                                  : value(phi_grid[i], y, h);
  return s;
}

double LinearBoundarySolver::homogeneous_term(double phi, double y,
                                              double w_ref) const {
  // C(y) != 0 would add this to dG/dphi; its blow-up as phi -> 0 is what
  // forces C(y) = 0.
  auto g = [&](double s) {
    const double v = std::exp(s);
    return prior_.lambda * (1.0 + v) / v * weight_W(v, y);
  };
  const double expo =
      adaptive_gk15(g, std::log(phi), std::log(w_ref), 1e-10, 1e-12, 8000);
  if (expo > 700.0) return std::numeric_limits<double>::infinity();
  return std::exp(expo) / ((1.0 + phi) * (1.0 + phi));
}

BoundaryTable LinearBoundarySolver::map_to_x(
    const BoundaryTable& in_y, std::span<const double> x_grid) const {
  BoundaryTable t = map_boundary_to_x(cov_, in_y, x_grid, floor());
  t.penalty = "linear";
  return t;
}

}  // namespace qdet
