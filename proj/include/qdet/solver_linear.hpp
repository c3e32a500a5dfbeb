#pragma once

#include <span>

#include "qdet/boundary_table.hpp"
#include "qdet/geometry.hpp"

namespace qdet {

// Linear-penalty boundary and value from the closed-form reduction: the
// boundary height h(y) solves the scalar integral equation
//
//   int_0^h (c(1+u)/u) W(u,y) exp( -int_u^h (lam(1+v)/v^2) W(v,y) dv ) du = 1
//
// with weight W(v,y) = 2/rho_hat(v,y), and the value G(phi,y;h) follows by
// integrating the same damped kernel twice. All integrals use nested
// adaptive quadrature in log coordinates; the u -> 0 endpoint is harmless
// because the inner integral diverges like 1/u and kills the singularity.
class LinearBoundarySolver {
 public:
  LinearBoundarySolver(ChangeOfVariables cov, Prior prior, double c);

  const ChangeOfVariables& cov() const { return cov_; }
  double cost() const { return c_; }
  double floor() const { return prior_.lambda / c_; }  // never stop below

  // the factor 2 eta^2 z^2 e^{-2 eta y} v^{2 eta} / sigma^2(z e^{-eta y} v^eta),
  // identically 2/rho_hat(v, y)
  double weight_W(double v, double y) const;

  // left side of the boundary equation at height h
  double boundary_equation_lhs(double h, double y) const;

  struct RootInfo {
    double h = 0.0;
    double residual = 0.0;  // |lhs - 1| at the root
    double slope = 0.0;     // finite-difference slope of lhs at the root
    bool unique = true;     // no second crossing seen on the scan
  };
  RootInfo solve_at(double y) const;

  BoundaryTable solve_boundary(std::span<const double> y_grid,
                               bool parallel = true) const;

  // G(phi, y; h), the value factor on 0 <= phi <= h; equals 1/(1+h) at the
  // boundary and is clamped at 0 against quadrature noise. abs_tol tightens
  // the quadrature for derivative studies.
  double value(double phi, double y, double h, double abs_tol = 1e-10) const;
  ValueSlice value_slice(double y, double h,
                         std::span<const double> phi_grid) const;

  // the discarded homogeneous term of the first-order equation for
  // dG/dphi, evaluated for the exclusion audit (blows up as phi -> 0)
  double homogeneous_term(double phi, double y, double w_ref) const;

  BoundaryTable map_to_x(const BoundaryTable& in_y,
                         std::span<const double> x_grid) const;

 private:
  ChangeOfVariables cov_;
  Prior prior_;
  double c_;
};

}  // namespace qdet
