#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qdet/geometry.hpp"

namespace qdet {

// Stopping boundary sampled on a monotone grid, in either the normal-form
// coordinate (Y) or the observation coordinate (X).
struct BoundaryTable {
  enum class Coord { Y, X };

  Coord coord = Coord::Y;
  std::vector<double> grid;
  std::vector<double> h;

  std::string penalty;  // "linear" | "exponential"
  std::string solver;   // "integral" | "ode" | "pde"
  double z = 1.0;
  double tol = 0.0;  // tolerance achieved by the producing solver

  // certificates / diagnostics from the producing solver
  bool slope_certified = true;
  bool unique_certified = true;
  double max_residual = 0.0;

  double min_h() const;
  double max_h() const;
  // linear interpolation with flat extrapolation
  double value_at(double g) const;
  bool covers(double g) const;
};

struct ValueSlice {
  double y = 0.0;
  double h = 0.0;  // boundary height used
  std::string penalty;
  std::vector<double> phi;
  std::vector<double> value;  // G (linear) or H (exponential)
};

// CSV with header "coord,grid,h" and '#' comment lines carrying penalty, z,
// solver and tolerance metadata.
void write_boundary_csv(std::ostream& os, const BoundaryTable& t);
BoundaryTable read_boundary_csv(std::istream& is);

// CSV with header "phi,G".
void write_value_slice_csv(std::ostream& os, const ValueSlice& s);

// Maps a boundary in Y to the observation coordinate by solving the fixed
// point g = h(y(g, x)) at each requested x (damped iteration with a
// bisection fallback). `floor` is the hard lower bound of admissible
// thresholds (lambda/c or lambda/(c alpha)).
BoundaryTable map_boundary_to_x(const ChangeOfVariables& cov,
                                const BoundaryTable& in_y,
                                std::span<const double> x_grid, double floor);

}  // namespace qdet
