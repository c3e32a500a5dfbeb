#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "qdet/boundary_table.hpp"
#include "qdet/geometry.hpp"
#include "qdet/numerics.hpp"

namespace qdet {

// Increasing fundamental solution of the homogeneous value equation
//
//   (1/2) rho_hat(phi,y) phi^2 H'' + (lam + (lam+alpha) phi) H' - lam H = 0
//
// represented in the log domain as (log H, R = H'/H) so that only ratios
// H(a)/H(b) and logarithmic derivatives are ever formed; the normalization
// H(phi_min) = 1 is therefore immaterial. Near phi = 0 the equation forces
// H'(0) = H(0); on the boundary layer [phi_min, phi_switch] the logarithmic
// derivative is slaved to the smooth branch of the Riccati equation (any
// transient decays like exp(-2 lam/(rho phi))), and an adaptive RK45
// integration carries the solution from phi_switch outward.
class FundamentalSolution {
 public:
  double y = 0.0;
  double phi_min = 1e-6;
  double phi_switch = 0.0;

  double log_H(double phi) const;      // log H, H(phi_min) = 1
  double log_deriv(double phi) const;  // R = H'/H
  double ratio(double num, double den) const {  // H(num)/H(den)
    return std::exp(log_H(num) - log_H(den));
  }
  double phi_max() const;
  const std::vector<double>& node_phi() const { return node_phi_; }

 private:
  friend class ExpBoundarySolver;
  std::vector<double> node_phi_;
  HermiteTable logH_;  // keyed on log phi
  HermiteTable R_;     // keyed on log phi
  double r_at_min_ = 1.0;
};

class ExpBoundarySolver {
 public:
  ExpBoundarySolver(ChangeOfVariables cov, Prior prior, double c, double alpha);

  const ChangeOfVariables& cov() const { return cov_; }
  double floor() const { return prior_.lambda / (c_ * alpha_); }

  // integrates the homogeneous equation on [phi_min, phi_max]
  FundamentalSolution fundamental(double y, double phi_max,
                                  double rel_tol = 1e-10,
                                  double phi_min = 1e-6) const;

  struct RootInfo {
    double h = 0.0;
    double smooth_fit_residual = 0.0;  // |H'(h)(c(1+h)+1) - c H(h)| / H(h)
  };
  // smooth-fit height: H'(h)/H(h) = c/(c(1+h)+1), h > lam/(c alpha)
  RootInfo solve_at(double y) const;

  BoundaryTable solve_boundary(std::span<const double> y_grid,
                               bool parallel = true) const;

  // H(phi, y; h) = (c(1+h)+1) Hinf(phi)/Hinf(h) - c(1+phi) on [0, h],
  // 1 beyond the boundary; the full value is (1-pi) H.
  double value(double phi, double y, double h) const;
  double value(const FundamentalSolution& fs, double phi, double h) const;
  ValueSlice value_slice(double y, double h,
                         std::span<const double> phi_grid) const;

  BoundaryTable map_to_x(const BoundaryTable& in_y,
                         std::span<const double> x_grid) const;

  double alpha() const { return alpha_; }
  double cost() const { return c_; }

 private:
  double slaved_log_deriv(double y, double phi, int order) const;

  ChangeOfVariables cov_;
  Prior prior_;
  double c_, alpha_;
};

}  // namespace qdet
