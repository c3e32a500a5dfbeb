#include "qdet/boundary_table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "qdet/numerics.hpp"

namespace qdet {

double BoundaryTable::min_h() const {
  return *std::min_element(h.begin(), h.end());
}

double BoundaryTable::max_h() const {
  return *std::max_element(h.begin(), h.end());
}

double BoundaryTable::value_at(double g) const {
  return interp_linear_flat(grid, h, g);
}

bool BoundaryTable::covers(double g) const {
  return g >= grid.front() && g <= grid.back();
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_boundary_csv(std::ostream& os, const BoundaryTable& t) {
  os << "# penalty=" << t.penalty << " solver=" << t.solver
     << " z=" << fmt17(t.z) << " tol=" << fmt17(t.tol)
     << " slope_certified=" << (t.slope_certified ? 1 : 0)
     << " unique_certified=" << (t.unique_certified ? 1 : 0)
     << " max_residual=" << fmt17(t.max_residual) << "\n";
  os << "coord,grid,h\n";
  const char* c = t.coord == BoundaryTable::Coord::Y ? "Y" : "X";
  for (std::size_t i = 0; i < t.grid.size(); ++i)
    os << c << "," << fmt17(t.grid[i]) << "," << fmt17(t.h[i]) << "\n";
}

BoundaryTable read_boundary_csv(std::istream& is) {
  BoundaryTable t;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "penalty") t.penalty = val;
        else if (key == "solver") t.solver = val;
        else if (key == "z") t.z = std::stod(val);
        else if (key == "tol") t.tol = std::stod(val);
        else if (key == "slope_certified") t.slope_certified = val != "0";
        else if (key == "unique_certified") t.unique_certified = val != "0";
        else if (key == "max_residual") t.max_residual = std::stod(val);
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("coord,grid,h", 0) != 0)
        throw ConfigError("/boundary_csv", "expected header coord,grid,h");
      header_seen = true;
      continue;
    }
    std::istringstream ls(line);
    std::string coord, gs, hs;
    if (!std::getline(ls, coord, ',') || !std::getline(ls, gs, ',') ||
        !std::getline(ls, hs, ','))
      throw ConfigError("/boundary_csv", "malformed row: " + line);
    t.coord = coord == "X" ? BoundaryTable::Coord::X : BoundaryTable::Coord::Y;
    t.grid.push_back(std::stod(gs));
    t.h.push_back(std::stod(hs));
  }
  if (t.grid.empty()) throw ConfigError("/boundary_csv", "no rows");
  return t;
}

void write_value_slice_csv(std::ostream& os, const ValueSlice& s) {
  os << "# penalty=" << s.penalty << " y=" << fmt17(s.y) << " h=" << fmt17(s.h)
     << "\n";
  os << "phi,G\n";
  for (std::size_t i = 0; i < s.phi.size(); ++i)
    os << fmt17(s.phi[i]) << "," << fmt17(s.value[i]) << "\n";
}

BoundaryTable map_boundary_to_x(const ChangeOfVariables& cov,
                                const BoundaryTable& in_y,
                                std::span<const double> x_grid, double floor) {
  if (in_y.coord != BoundaryTable::Coord::Y)
    throw ConfigError("/boundary", "expected a table in the Y coordinate");

  BoundaryTable out;
  out.coord = BoundaryTable::Coord::X;
  out.penalty = in_y.penalty;
  out.solver = in_y.solver;
  out.z = cov.z();
  out.tol = 1e-8;
  out.grid.assign(x_grid.begin(), x_grid.end());
  out.h.resize(x_grid.size());

  const double h_hi = 10.0 * in_y.max_h();
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    const double x = x_grid[i];
    auto fixed_map = [&](double g) { return in_y.value_at(cov.y_of(g, x)); };

    double g = 0.5 * (in_y.min_h() + in_y.max_h());
    bool converged = false;
    for (int it = 0; it < 1000; ++it) {
      const double next = fixed_map(g);
      const double step = 0.5 * (next - g);  // damped
      g += step;
      if (std::abs(step) <= 1e-8 * std::max(1.0, std::abs(g))) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      // bisection fallback on g - h(y(g, x))
      double lo = floor, hi = h_hi;
      auto f = [&](double g) { return g - fixed_map(g); };
      double flo = f(lo);
      if (flo > 0.0)
        throw NoConvergence("boundary map: no bracket at x=" + std::to_string(x));
      if (f(hi) < 0.0)
        throw NoConvergence("boundary map: upper bracket too small at x=" +
                            std::to_string(x));
      g = bisect(f, lo, hi, flo, 1e-10 * std::max(1.0, hi));
    }
    out.h[i] = std::max(g, floor);
  }
  return out;
}

}  // namespace qdet
