#include "qdet/solver_pde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qdet/numerics.hpp"
#include "qdet/solver_exp.hpp"
#include "qdet/solver_linear.hpp"

namespace qdet {

std::vector<double> DiscreteOperator::apply(std::span<const double> H) const {
  std::vector<double> out(H.size(), 0.0);
  const std::size_t np = n_phi(), ny = n_y();
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < np; ++i) {
      const std::size_t k = idx(i, j);
      double v = diag[k] * H[k];
      if (i > 0) v += west[k] * H[k - 1];
      if (i + 1 < np) v += east[k] * H[k + 1];
      if (j + 1 < ny) v += north[k] * H[idx(i, j + 1)];
      out[k] = v;
    }
  }
  return out;
}

DiscreteOperator assemble_operator(const ChangeOfVariables& cov,
                                   const Prior& prior, double alpha,
                                   std::vector<double> phi_nodes,
                                   std::vector<double> y_nodes) {
  if (phi_nodes.size() < 3 || y_nodes.size() < 2)
    throw ConfigError("/pde/grid", "grid too small");
  if (phi_nodes.front() != 0.0)
    throw ConfigError("/pde/grid", "phi grid must start at 0");

  DiscreteOperator op;
  op.phi = std::move(phi_nodes);
  op.y = std::move(y_nodes);
  const std::size_t np = op.n_phi(), ny = op.n_y();
  const std::size_t n = np * ny;
  op.west.assign(n, 0.0);
  op.diag.assign(n, 0.0);
  op.east.assign(n, 0.0);
  op.north.assign(n, 0.0);

  const double lam = prior.lambda;
  const double dy = op.y.size() > 1 ? op.y[1] - op.y[0] : 1.0;

  op.row_sum_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < ny; ++j) {
    const double yv = op.y[j];
    for (std::size_t i = 0; i < np; ++i) {
      const std::size_t k = op.idx(i, j);
      const double p = op.phi[i];

      if (i == 0) {
        // degenerate edge: diffusion vanishes, drift lam points inward and
        // H_y(0, y) = 0, so a one-sided first-order row closes the system
        const double de = op.phi[1] - op.phi[0];
        op.east[k] = lam / de;
        op.diag[k] = -lam / de - lam;
        continue;
      }

      const double b = lam + (lam + alpha) * p;
      const double d = lam / p + lam + alpha;
      double w = 0.0, dg = -lam, e = 0.0, nn = 0.0;

      if (i + 1 < np) {
        const double dw = op.phi[i] - op.phi[i - 1];
        const double de = op.phi[i + 1] - op.phi[i];
        const double a = 0.5 * cov.rho_hat(p, yv) * p * p;
        // diffusion, nonuniform central
        w += 2.0 * a / (dw * (dw + de));
        e += 2.0 * a / (de * (dw + de));
        dg += -2.0 * a / (dw * de);
        // drift: central where the row stays monotone, upwind otherwise
        if (2.0 * a >= b * de) {
          w += -b * de / (dw * (dw + de));
          dg += b * (de - dw) / (dw * de);
          e += b * dw / (de * (dw + de));
        } else {
          ++op.central_fallback_count;
          dg += -b / de;
          e += b / de;
        }
      } else {
        // phi_max column is held Dirichlet in solves; keep a pure decay row
        // so constants still map to -lambda
        op.west[k] = 0.0;
        op.diag[k] = -lam;
        op.east[k] = 0.0;
        op.north[k] = 0.0;
        continue;
      }

      // y upwind in the drift direction (coefficient d > 0: couples to j+1)
      if (j + 1 < ny) {
        nn = d / dy;
        dg += -d / dy;
      }

      op.west[k] = w;
      op.diag[k] = dg;
      op.east[k] = e;
      op.north[k] = nn;

      // M-matrix diagnostics for A = -L
      op.offdiag_max = std::max({op.offdiag_max, -w, -e, -nn});
      op.row_sum_min = std::min(op.row_sum_min, -(w + dg + e + nn));
    }
  }
  op.monotone = op.offdiag_max <= 0.0 || op.offdiag_max < 1e-14;
  return op;
}

PdeSolver::PdeSolver(ChangeOfVariables cov, Prior prior, PenaltySpec penalty)
    : cov_(std::move(cov)), prior_(prior), penalty_(penalty) {
  if (!cov_.subclass())
    throw CapabilityError("PDE solver requires the EtaSigmoid family");
}

double PdeSolver::stop_floor() const {
  return penalty_.stop_floor(prior_.lambda);
}

namespace {

// constant-rho companion model with the same eta pair and anchor
DiffusionModel constant_rho_model(const DiffusionModel& m, double s) {
  return DiffusionModel::eta_sigmoid(m.eta0(), m.eta1(), s, s, m.z());
}

// flat-boundary height and value slice for a constant-rho companion
struct FlatSolution {
  double h = 0.0;
  std::vector<double> H;  // on the requested phi nodes
};

FlatSolution flat_solution(const DiffusionModel& companion, const Prior& prior,
                           const PenaltySpec& pen,
                           std::span<const double> phi_nodes) {
  ChangeOfVariables cov(companion, companion.z());
  FlatSolution out;
  if (pen.kind == PenaltySpec::Kind::Exponential) {
    ExpBoundarySolver s(cov, prior, pen.c, pen.alpha);
    auto root = s.solve_at(0.0);
    out.h = root.h;
    FundamentalSolution fs = s.fundamental(0.0, std::max(1.05 * root.h, 1.0));
    out.H.resize(phi_nodes.size());
    for (std::size_t i = 0; i < phi_nodes.size(); ++i)
      out.H[i] = s.value(fs, phi_nodes[i], root.h);
  } else {
    LinearBoundarySolver s(cov, prior, pen.c);
    auto root = s.solve_at(0.0);
    out.h = root.h;
    out.H.resize(phi_nodes.size());
    for (std::size_t i = 0; i < phi_nodes.size(); ++i) {
      const double p = phi_nodes[i];
      // H = (1+phi) G maps the linear-penalty value onto the obstacle form
      out.H[i] = p >= root.h ? 1.0 : (1.0 + p) * s.value(p, 0.0, root.h);
    }
  }
  for (double& v : out.H) v = std::min(std::max(v, 0.0), 1.0);
  return out;
}

}  // namespace

std::vector<double> PdeSolver::phi_nodes(const PdeOptions& opt, double phi_max,
                                         double band_lo,
                                         double band_hi) const {
  // three zones with half the nodes packed into the boundary band
  const std::size_t n = opt.n_phi;
  const std::size_t n_band = n / 2;
  const std::size_t n_low = n / 4;
  const std::size_t n_high = n - n_band - n_low;
  band_lo = std::max(0.5 * band_lo, 1e-6 * phi_max);
  band_hi = std::min(1.3 * band_hi, 0.9 * phi_max);

  std::vector<double> nodes;
  nodes.reserve(n + 2);
  for (std::size_t i = 0; i < n_low; ++i)
    nodes.push_back(band_lo * static_cast<double>(i) /
                    static_cast<double>(n_low));
  for (std::size_t i = 0; i < n_band; ++i)
    nodes.push_back(band_lo + (band_hi - band_lo) * static_cast<double>(i) /
                                  static_cast<double>(n_band));
  for (std::size_t i = 0; i <= n_high; ++i)
    nodes.push_back(band_hi + (phi_max - band_hi) * static_cast<double>(i) /
                                  static_cast<double>(n_high));
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

YRange far_field_y_range(const ChangeOfVariables& cov, double floor,
                         double phi_max, double edge_fraction) {
  YRange r;
  if (cov.model().s0() == cov.model().s1()) return r;

  // x thresholds where s(x) is within edge_fraction of its limits
  const double f = edge_fraction;
  const double x_small = f / (1.0 - f);
  const double x_large = (1.0 - f) / f;
  const double eta = cov.eta();
  const double z = cov.z();
  const double window_lo = 0.25 * floor;

  // s -> s0 edge needs x small uniformly over the window; s -> s1 needs it
  // large; the binding phi end depends on the sign of eta
  const double phi_s0 = eta > 0.0 ? phi_max : window_lo;
  const double phi_s1 = eta > 0.0 ? window_lo : phi_max;
  const double y_s0 = std::log(z / x_small) / eta + std::log(phi_s0);
  const double y_s1 = std::log(z / x_large) / eta + std::log(phi_s1);

  r.y_min = std::min(y_s0, y_s1);
  r.y_max = std::max(y_s0, y_s1);
  return r;
}

PdeSolver::FarField PdeSolver::far_field(
    const PdeOptions& opt, std::span<const double> phi_nodes) const {
  const DiffusionModel& m = cov_.model();
  const double s_lo = std::min(m.s0(), m.s1());
  const double s_hi = std::max(m.s0(), m.s1());

  FlatSolution lo = flat_solution(constant_rho_model(m, s_lo), prior_,
                                  penalty_, phi_nodes);
  FlatSolution hi = flat_solution(constant_rho_model(m, s_hi), prior_,
                                  penalty_, phi_nodes);

  FarField ff;
  ff.h_rho_min = lo.h;
  ff.h_rho_max = hi.h;
  ff.slice_rho_min = std::move(lo.H);
  ff.slice_rho_max = std::move(hi.H);

  const YRange yr = far_field_y_range(cov_, stop_floor(), phi_nodes.back(),
                                      opt.edge_fraction);
  ff.y_min = yr.y_min;
  ff.y_max = yr.y_max;
  return ff;
}

LCPGrid PdeSolver::solve(const PdeOptions& opt) const {
  return solve(opt, nullptr);
}

LCPGrid PdeSolver::solve(const PdeOptions& opt, const LCPGrid* warm) const {
  const double alpha =
      penalty_.kind == PenaltySpec::Kind::Exponential ? penalty_.alpha : 0.0;
  const double cost_scale =
      penalty_.kind == PenaltySpec::Kind::Exponential ? penalty_.c * alpha
                                                      : penalty_.c;

  // provisional band from the constant-rho companions
  const DiffusionModel& m = cov_.model();
  FlatSolution flat_lo =
      flat_solution(constant_rho_model(m, std::min(m.s0(), m.s1())), prior_,
                    penalty_, std::vector<double>{});
  FlatSolution flat_hi =
      flat_solution(constant_rho_model(m, std::max(m.s0(), m.s1())), prior_,
                    penalty_, std::vector<double>{});
  const double h_lo = std::min(flat_lo.h, flat_hi.h);
  const double h_hi = std::max(flat_lo.h, flat_hi.h);
  const double phi_max = opt.phi_max_factor * h_hi;

  std::vector<double> pn = phi_nodes(opt, phi_max, h_lo, h_hi);
  FarField ff = far_field(opt, pn);
  std::vector<double> yn = linspace(ff.y_min, ff.y_max, opt.n_y);

  DiscreteOperator op = assemble_operator(cov_, prior_, alpha, pn, yn);
  const std::size_t np = op.n_phi(), ny = op.n_y();

  LCPGrid g;
  g.phi = op.phi;
  g.y = op.y;
  g.penalty = penalty_.name();
  g.central_fallback_count = op.central_fallback_count;
  g.monotone = op.monotone;
  g.H.assign(np * ny, 0.0);
  g.active.assign(np * ny, 0);

  // which slice sits at which y edge: x(phi, y) collapses toward y_max when
  // eta > 0 (grows when eta < 0), so the top edge carries the s0-limit for
  // eta > 0 and the s1-limit otherwise; pick whichever companion slice owns
  // that limit
  const bool rho_min_at_top = cov_.model().s0() == cov_.model().s1()
                                  ? true
                                  : (cov_.eta() > 0.0) ==
                                        (cov_.model().s0() < cov_.model().s1());
  const std::vector<double>& top_slice =
      rho_min_at_top ? ff.slice_rho_min : ff.slice_rho_max;
  const std::vector<double>& bottom_slice =
      rho_min_at_top ? ff.slice_rho_max : ff.slice_rho_min;

  // initial guess: y-linear blend of the far-field slices (or warm start)
  for (std::size_t j = 0; j < ny; ++j) {
    const double t = ny == 1 ? 0.0
                             : static_cast<double>(j) /
                                   static_cast<double>(ny - 1);
    for (std::size_t i = 0; i < np; ++i)
      g.H[g.idx(i, j)] =
          (1.0 - t) * bottom_slice[i] + t * top_slice[i];
  }
  if (warm) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < np; ++i) {
        // bilinear sample of the warm grid
        const double yy = g.y[j], pp = g.phi[i];
        const auto& wy = warm->y;
        const auto& wp = warm->phi;
        const std::size_t jj = std::min<std::size_t>(
            wy.size() - 2, static_cast<std::size_t>(std::max(
                               0.0, (yy - wy.front()) /
                                        (wy[1] - wy[0]))));
        auto itp = std::upper_bound(wp.begin(), wp.end(), pp);
        std::size_t ii =
            itp == wp.begin() ? 0 : static_cast<std::size_t>(itp - wp.begin()) - 1;
        ii = std::min(ii, wp.size() - 2);
        const double ty = std::min(
            1.0, std::max(0.0, (yy - wy[jj]) / (wy[jj + 1] - wy[jj])));
        const double tp = std::min(
            1.0, std::max(0.0, (pp - wp[ii]) / (wp[ii + 1] - wp[ii])));
        const double v00 = warm->H[warm->idx(ii, jj)];
        const double v10 = warm->H[warm->idx(ii + 1, jj)];
        const double v01 = warm->H[warm->idx(ii, jj + 1)];
        const double v11 = warm->H[warm->idx(ii + 1, jj + 1)];
        g.H[g.idx(i, j)] = (1 - ty) * ((1 - tp) * v00 + tp * v10) +
                           ty * ((1 - tp) * v01 + tp * v11);
      }
  }

  // Dirichlet data: both y edges carry the far-field slices, the phi_max
  // column sits deep in the stopping region
  std::vector<std::uint8_t> dirichlet(np * ny, 0);
  for (std::size_t i = 0; i < np; ++i) {
    dirichlet[g.idx(i, 0)] = 1;
    g.H[g.idx(i, 0)] = bottom_slice[i];
    dirichlet[g.idx(i, ny - 1)] = 1;
    g.H[g.idx(i, ny - 1)] = top_slice[i];
  }
  for (std::size_t j = 0; j < ny; ++j) {
    dirichlet[g.idx(np - 1, j)] = 1;
    g.H[g.idx(np - 1, j)] = 1.0;
  }

  // rhs of A H = b with A = -L
  std::vector<double> rhs(np * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < np; ++i)
      rhs[g.idx(i, j)] = cost_scale * g.phi[i];

  // projected SOR, sweeping down the y rows (information flows toward
  // smaller y) and up the phi rows
  const double omega = opt.omega;
  double comp = std::numeric_limits<double>::infinity();
  std::size_t sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    double max_update = 0.0;
    for (std::size_t jj = ny; jj-- > 0;) {
      for (std::size_t i = 0; i < np; ++i) {
        const std::size_t k = g.idx(i, jj);
        if (dirichlet[k]) continue;
        const double a_w = -op.west[k], a_e = -op.east[k], a_n = -op.north[k];
        const double a_d = -op.diag[k];
        double s = rhs[k];
        if (i > 0) s -= a_w * g.H[k - 1];
        if (i + 1 < np) s -= a_e * g.H[k + 1];
        if (jj + 1 < ny) s -= a_n * g.H[g.idx(i, jj + 1)];
        const double gs = s / a_d;
        double v = g.H[k] + omega * (gs - g.H[k]);
        if (v > 1.0) v = 1.0;  // obstacle
        max_update = std::max(max_update, std::abs(v - g.H[k]));
        g.H[k] = v;
      }
    }
    if (max_update <= opt.update_tol || (sweep % 16) == 15) {
      // LCP conditions: LH + f >= 0, H <= 1, complementary. Both slack
      // quantities are nonnegative at a solution, so the scaled residual is
      // the largest |min| over free nodes.
      std::vector<double> LH = op.apply(g.H);
      comp = 0.0;
      for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < np; ++i) {
          const std::size_t k = g.idx(i, j);
          if (dirichlet[k]) continue;
          const double slack = (LH[k] + rhs[k]) / (-op.diag[k]);
          const double gap = 1.0 - g.H[k];
          comp = std::max(comp, std::abs(std::min(slack, gap)));
        }
      if (comp <= opt.comp_tol && max_update <= opt.update_tol) {
        ++sweep;
        break;
      }
    }
  }
  if (comp > opt.comp_tol)
    throw NoConvergence("projected SOR: complementarity residual " +
                        std::to_string(comp) + " after " +
                        std::to_string(sweep) + " sweeps");

  g.sweeps = sweep;
  g.comp_residual = comp;
  for (std::size_t k = 0; k < g.H.size(); ++k)
    g.active[k] = g.H[k] >= 1.0 - 1e-12 ? 1 : 0;
  return g;
}

BoundaryTable PdeSolver::extract_boundary(const LCPGrid& grid, double floor) {
  const std::size_t np = grid.phi.size(), ny = grid.y.size();
  BoundaryTable t;
  t.coord = BoundaryTable::Coord::Y;
  t.penalty = grid.penalty;
  t.solver = "pde";
  t.grid = grid.y;
  t.h.resize(ny);

  for (std::size_t j = 0; j < ny; ++j) {
    std::size_t first = np;
    for (std::size_t i = 0; i < np; ++i) {
      if (grid.active[grid.idx(i, j)]) {
        first = i;
        break;
      }
    }
    if (first == 0)
      throw DegenerateColumn("column y=" + std::to_string(grid.y[j]) +
                             " entirely stopped");
    if (first == np)
      throw DegenerateColumn("column y=" + std::to_string(grid.y[j]) +
                             " never stops inside the domain");

    // smooth fit makes the gap vanish quadratically: extrapolate sqrt(gap)
    double h = 0.5 * (grid.phi[first - 1] + grid.phi[first]);
    if (first >= 2) {
      const double g1 = 1.0 - grid.H[grid.idx(first - 1, j)];
      const double g2 = 1.0 - grid.H[grid.idx(first - 2, j)];
      if (g1 > 0.0 && g2 > g1) {
        const double step = grid.phi[first - 1] - grid.phi[first - 2];
        const double adv =
            std::sqrt(g1) * step / (std::sqrt(g2) - std::sqrt(g1));
        h = std::min(grid.phi[first],
                     std::max(grid.phi[first - 1],
                              grid.phi[first - 1] + adv));
      }
    }
    if (h < floor)
      throw NoConvergence("extracted boundary fell below the stopping floor");
    t.h[j] = h;
  }
  return t;
}

}  // namespace qdet
