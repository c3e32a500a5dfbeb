#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qdet/boundary_table.hpp"
#include "qdet/geometry.hpp"

namespace qdet {

// Discretization of the parabolic operator acting on the value factor H
// over a (phi, y) rectangle:
//
//   L H = (1/2) rho_hat phi^2 H_pp + (lam + (lam+alpha) phi) H_p
//         + (lam/phi + lam + alpha) H_y - lam H
//
// (alpha = 0 and right side c phi for the linear penalty). phi uses
// second-order central differences where the cell Peclet number permits a
// monotone row, first-order upwind elsewhere; y uses first-order upwind in
// the drift direction (towards larger y, so each row couples to the next).
// Rows flagged in `central_fallback` indicate where the upwind fallback
// engaged; `row_sum_min` and `offdiag_max` summarize the M-matrix check of
// the assembled A = -L + obstacle bookkeeping.
struct DiscreteOperator {
  std::vector<double> phi;  // n_phi nodes, phi[0] == 0
  std::vector<double> y;    // n_y nodes, uniform

  // stencil of L at node (i,j): west/diag/east in phi and north (j+1) in y
  std::vector<double> west, diag, east, north;

  std::size_t n_phi() const { return phi.size(); }
  std::size_t n_y() const { return y.size(); }
  std::size_t idx(std::size_t i, std::size_t j) const {
    return j * phi.size() + i;
  }

  // applies L to a grid function (zero contribution from out-of-range
  // neighbours; Dirichlet handling is the solver's business)
  std::vector<double> apply(std::span<const double> H) const;

  std::size_t central_fallback_count = 0;  // nodes where upwinding replaced central
  double offdiag_max = 0.0;                // most positive off-diagonal of A
  double row_sum_min = 0.0;                // smallest row sum of A
  bool monotone = true;
};

DiscreteOperator assemble_operator(const ChangeOfVariables& cov,
                                   const Prior& prior, double alpha,
                                   std::vector<double> phi_nodes,
                                   std::vector<double> y_nodes);

struct LCPGrid {
  std::vector<double> phi;
  std::vector<double> y;
  std::vector<double> H;        // row-major, j * n_phi + i
  std::vector<std::uint8_t> active;  // 1 where the obstacle binds
  std::string penalty;
  double comp_residual = 0.0;   // scaled complementarity residual
  std::size_t sweeps = 0;
  std::size_t central_fallback_count = 0;
  bool monotone = true;  // discrete operator passed the M-matrix check

  std::size_t idx(std::size_t i, std::size_t j) const {
    return j * phi.size() + i;
  }
};

// y interval on which the diffusion modulation s(x(phi, y)) stays within
// edge_fraction of its limits across the phi window [0.25 floor, phi_max];
// degenerates to [-1, 1] for constant rho.
struct YRange {
  double y_min = -1.0, y_max = 1.0;
};
YRange far_field_y_range(const ChangeOfVariables& cov, double floor,
                         double phi_max, double edge_fraction = 0.01);

struct PdeOptions {
  std::size_t n_phi = 201;
  std::size_t n_y = 41;
  // Fixed relaxation parameter. The upwinded operator is strongly
  // nonsymmetric, which caps the convergent SOR window near 1 (Kahan bound
  // 2/(1+rho_Jacobi) with rho_Jacobi ~ 1-lambda/diag); omega = 1 is
  // projected Gauss-Seidel.
  double omega = 1.0;
  double comp_tol = 1e-7;
  double update_tol = 1e-9;
  std::size_t max_sweeps = 100000;
  double phi_max_factor = 4.0;  // phi_max as a multiple of the upper far-field height
  double edge_fraction = 0.01;  // s(x) within this fraction of its limits at the y edges
};

class PdeSolver {
 public:
  PdeSolver(ChangeOfVariables cov, Prior prior, PenaltySpec penalty);

  // y range on which the modulation is within edge_fraction of its limits
  // across the active phi window, and the two constant-rho far-field
  // heights (lo = at rho_min, hi = at rho_max)
  struct FarField {
    double y_min = 0.0, y_max = 0.0;
    double h_rho_min = 0.0, h_rho_max = 0.0;
    std::vector<double> slice_rho_min;  // H on the phi nodes
    std::vector<double> slice_rho_max;
  };

  LCPGrid solve(const PdeOptions& opt = {}) const;
  // warm start from a previously solved (coarser) grid
  LCPGrid solve(const PdeOptions& opt, const LCPGrid* warm) const;

  static BoundaryTable extract_boundary(const LCPGrid& grid, double floor);

  double stop_floor() const;

 private:
  friend struct PdeTestAccess;
  FarField far_field(const PdeOptions& opt,
                     std::span<const double> phi_nodes) const;
  std::vector<double> phi_nodes(const PdeOptions& opt, double phi_max,
                                double band_lo, double band_hi) const;

  ChangeOfVariables cov_;
  Prior prior_;
  PenaltySpec penalty_;
};

}  // namespace qdet
