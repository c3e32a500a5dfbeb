#include "qdet/riskeval.hpp"

#include <algorithm>
#include <cmath>

#include "qdet/numerics.hpp"
#include "qdet/solver_exp.hpp"
#include "qdet/solver_linear.hpp"

namespace qdet {

Policy Policy::constant_threshold(double h, Statistic s) {
  if (!(h > 0.0)) throw ConfigError("/policy/h", "threshold must be positive");
  Policy p;
  p.kind = Kind::ConstantThreshold;
  p.statistic = s;
  p.h = h;
  return p;
}

Policy Policy::boundary_in_x(BoundaryTable t, Statistic s) {
  if (t.min_h() <= 0.0)
    throw ConfigError("/policy/table", "thresholds must be positive");
  Policy p;
  p.kind = Kind::BoundaryInX;
  p.statistic = s;
  p.table = std::move(t);
  return p;
}

Policy Policy::boundary_in_y(BoundaryTable t, double z, Statistic s) {
  if (t.min_h() <= 0.0)
    throw ConfigError("/policy/table", "thresholds must be positive");
  if (!(z > 0.0)) throw ConfigError("/policy/z", "must be positive");
  Policy p;
  p.kind = Kind::BoundaryInY;
  p.statistic = s;
  p.table = std::move(t);
  p.z = z;
  return p;
}

Policy Policy::never() {
  Policy p;
  p.kind = Kind::Never;
  return p;
}

Policy Policy::immediate() {
  Policy p;
  p.kind = Kind::Immediate;
  return p;
}

Policy Policy::scaled(double multiplier) const {
  if (!(multiplier > 0.0))
    throw ConfigError("/policy/multiplier", "must be positive");
  Policy p = *this;
  p.h *= multiplier;
  for (double& v : p.table.h) v *= multiplier;
  return p;
}

double default_horizon(const Prior& prior, double tail) {
  return std::log((1.0 - prior.pi) / tail) / prior.lambda;
}

namespace {

struct RuntimePolicy {
  Policy::Kind kind;
  double h = 0.0;
  const BoundaryTable* table = nullptr;
  double inv_eta = 0.0;  // BoundaryInY, subclass
  double z = 1.0;

  bool stops(double phi, double x) const {
    switch (kind) {
      case Policy::Kind::Immediate:
        return true;
      case Policy::Kind::Never:
        return false;
      case Policy::Kind::ConstantThreshold:
        return phi >= h;
      case Policy::Kind::BoundaryInX:
        return phi >= table->value_at(x);
      case Policy::Kind::BoundaryInY: {
        if (!(phi > 0.0)) return false;
        const double y = std::log(phi) - inv_eta * std::log(x / z);
        return phi >= table->value_at(y);
      }
    }
    return false;
  }
};

RuntimePolicy make_runtime(const Policy& p, const DiffusionModel& model) {
  RuntimePolicy r;
  r.kind = p.kind;
  r.h = p.h;
  r.table = &p.table;
  r.z = p.z;
  if (p.kind == Policy::Kind::BoundaryInY) {
    if (!model.is_subclass())
      throw CapabilityError("BoundaryInY policies require the EtaSigmoid family");
    r.inv_eta = 1.0 / model.eta();
  }
  return r;
}

struct PathResult {
  double false_alarm = 0.0;
  double delay = 0.0;
  bool truncated = false;
};

// One path evaluated for several policies at once under common random
// numbers: simulate the observations under the drawn disorder time, filter,
// stop each policy at its first crossing, early-exit once all have fired.
void run_one_path(const DiffusionModel& model, const Prior& prior,
                  const PenaltySpec& penalty,
                  const std::vector<RuntimePolicy>& pols,
                  const PenaltySpec& stat_penalty, const SimGrid& grid,
                  double x0, double phi_cap, RngStream& rng,
                  std::span<PathResult> out) {
  const double theta = draw_disorder_time(prior, rng);
  const std::size_t n = grid.n_steps();
  const double sq_dt = std::sqrt(grid.dt);
  const double horizon = grid.time(n);

  const std::size_t m = pols.size();
  double tau[16];
  std::size_t unfired = m;
  for (std::size_t p = 0; p < m; ++p) tau[p] = -1.0;

  double x = x0;
  double logL = 0.0;
  double phi = prior.pi / (1.0 - prior.pi);

  for (std::size_t p = 0; p < m; ++p) {
    if (pols[p].stops(phi, x)) {
      tau[p] = 0.0;
      --unfired;
    }
  }

  for (std::size_t k = 0; k < n && unfired > 0; ++k) {
    const double t = grid.time(k);
    const double drift = theta <= t ? model.mu1(x) : model.mu0(x);
    const double db = sq_dt * rng.normal();
    double x_next = x + drift * grid.dt + model.sigma(x) * db;
    if (x_next < 1e-10) x_next = 1e-10;

    const double logL_next = update_logL(model, logL, x, x_next, grid.dt);
    phi = update_phi(prior, stat_penalty, phi, std::exp(logL_next - logL),
                     grid.dt);
    if (phi > phi_cap) phi = phi_cap;
    logL = logL_next;
    x = x_next;

    const double t_next = grid.time(k + 1);
    for (std::size_t p = 0; p < m; ++p) {
      if (tau[p] < 0.0 && pols[p].stops(phi, x)) {
        tau[p] = t_next;
        --unfired;
      }
    }
  }

  for (std::size_t p = 0; p < m; ++p) {
    PathResult r;
    double tp = tau[p];
    if (tp < 0.0) {
      tp = horizon;
      r.truncated = true;
    }
    if (tp < theta)
      r.false_alarm = 1.0;
    else
      r.delay = penalty.cost(tp - theta);
    out[p] = r;
  }
}

// per-policy, per-path outcome arrays; filled by index so the fixed pairwise
// reduction gives one result for any thread count
struct McAccum {
  std::vector<double> fa, delay, risk, risk_sq;
  std::vector<std::uint8_t> truncated;

  void resize(std::size_t n) {
    fa.assign(n, 0.0);
    delay.assign(n, 0.0);
    risk.assign(n, 0.0);
    risk_sq.assign(n, 0.0);
    truncated.assign(n, 0);
  }

  void record(std::size_t i, const PathResult& r) {
    fa[i] = r.false_alarm;
    delay[i] = r.delay;
    const double v = r.false_alarm + r.delay;
    risk[i] = v;
    risk_sq[i] = v * v;
    truncated[i] = r.truncated ? 1 : 0;
  }
};

struct McContext {
  const DiffusionModel& model;
  const Prior& prior;
  const PenaltySpec& penalty;
  const std::vector<RuntimePolicy>& pols;
  const PenaltySpec& stat_penalty;
  const SimGrid& grid;
  double x0;
  double phi_cap;
  std::uint64_t seed;
};

// serial reference implementation, kept verbatim for testing and benchmarks
void run_paths_serial(const McContext& c, std::size_t n_paths,
                      std::span<McAccum> acc) {
  const std::size_t m = c.pols.size();
  std::vector<PathResult> res(m);
  for (std::size_t i = 0; i < n_paths; ++i) {
    RngStream rng(c.seed, i);
    run_one_path(c.model, c.prior, c.penalty, c.pols, c.stat_penalty, c.grid,
                 c.x0, c.phi_cap, rng, res);
    for (std::size_t p = 0; p < m; ++p) acc[p].record(i, res[p]);
  }
}

// OpenMP kernel; bitwise-identical to the serial reference
void run_paths_parallel(const McContext& c, std::size_t n_paths,
                        std::span<McAccum> acc) {
  const std::size_t m = c.pols.size();
  const std::int64_t n = static_cast<std::int64_t>(n_paths);
  std::exception_ptr eptr = nullptr;
#pragma omp parallel
  {
    std::vector<PathResult> res(m);
#pragma omp for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        RngStream rng(c.seed, static_cast<std::uint64_t>(i));
        run_one_path(c.model, c.prior, c.penalty, c.pols, c.stat_penalty,
                     c.grid, c.x0, c.phi_cap, rng, res);
        for (std::size_t p = 0; p < m; ++p)
          acc[p].record(static_cast<std::size_t>(i), res[p]);
      } catch (...) {
#pragma omp critical
        if (!eptr) eptr = std::current_exception();
      }
    }
  }
  if (eptr) std::rethrow_exception(eptr);
}

RiskEstimate reduce_estimate(const McAccum& a, std::size_t n) {
  RiskEstimate e;
  e.n_paths = n;
  const double dn = static_cast<double>(n);
  e.false_alarm = pairwise_sum(a.fa) / dn;
  e.delay = pairwise_sum(a.delay) / dn;
  e.risk = e.false_alarm + e.delay;
  const double sum_sq = pairwise_sum(a.risk_sq);
  const double var =
      n > 1 ? std::max(0.0, (sum_sq - dn * e.risk * e.risk) / (dn - 1.0)) : 0.0;
  e.se = std::sqrt(var / dn);
  for (std::uint8_t t : a.truncated) e.truncated += t;
  e.truncation_flagged =
      static_cast<double>(e.truncated) > 0.01 * static_cast<double>(n);
  return e;
}

std::vector<McAccum> run_policies(const DiffusionModel& model,
                                  const Prior& prior,
                                  const PenaltySpec& penalty,
                                  const std::vector<Policy>& policies,
                                  const SimGrid& grid, std::size_t n_paths,
                                  std::uint64_t seed, const McOptions& opt) {
  if (policies.empty() || policies.size() > 16)
    throw ConfigError("/policies", "between 1 and 16 policies per pass");
  std::vector<RuntimePolicy> rts;
  rts.reserve(policies.size());
  for (const Policy& p : policies) rts.push_back(make_runtime(p, model));

  PenaltySpec stat_penalty = penalty;
  stat_penalty.kind =
      policies.front().statistic == Policy::Statistic::PhiExponential
          ? PenaltySpec::Kind::Exponential
          : PenaltySpec::Kind::Linear;
  if (stat_penalty.kind == PenaltySpec::Kind::Exponential &&
      !(stat_penalty.alpha > 0.0))
    throw ConfigError("/policy/statistic",
                      "exponential statistic needs a positive alpha");

  const double x0 = opt.x0 > 0.0 ? opt.x0 : model.z();

  std::vector<McAccum> acc(policies.size());
  for (McAccum& a : acc) a.resize(n_paths);

  McContext ctx{model, prior, penalty, rts, stat_penalty,
                grid,  x0,    opt.phi_cap, seed};
  if (opt.threads == 0 || opt.threads == 1)
    run_paths_serial(ctx, n_paths, acc);
  else
    run_paths_parallel(ctx, n_paths, acc);
  return acc;
}

}  // namespace

RiskEstimate evaluate_risk(const DiffusionModel& model, const Prior& prior,
                           const PenaltySpec& penalty, const Policy& policy,
                           const SimGrid& grid, std::size_t n_paths,
                           std::uint64_t seed, const McOptions& opt) {
  if (policy.kind == Policy::Kind::Immediate) {
    // tau = 0 stops before theta exactly when theta > 0; both components are
    // deterministic functionals of the prior
    RiskEstimate e;
    e.n_paths = n_paths;
    e.false_alarm = 1.0 - prior.pi;
    e.risk = e.false_alarm;
    return e;
  }
  std::vector<Policy> pols{policy};
  auto acc = run_policies(model, prior, penalty, pols, grid, n_paths, seed, opt);
  return reduce_estimate(acc[0], n_paths);
}

ScanReport optimality_scan(const DiffusionModel& model, const Prior& prior,
                           const PenaltySpec& penalty, const Policy& base,
                           std::span<const double> multipliers,
                           const SimGrid& grid, std::size_t n_paths,
                           std::uint64_t seed, const McOptions& opt) {
  std::vector<Policy> pols;
  std::size_t base_idx = multipliers.size();
  for (double mlt : multipliers) {
    if (mlt == 1.0 && base_idx == multipliers.size()) base_idx = pols.size();
    pols.push_back(base.scaled(mlt));
  }
  if (base_idx == multipliers.size()) {
    base_idx = pols.size();
    pols.push_back(base);
  }

  auto acc = run_policies(model, prior, penalty, pols, grid, n_paths, seed, opt);

  ScanReport rep;
  const double dn = static_cast<double>(n_paths);
  for (std::size_t p = 0; p < multipliers.size(); ++p) {
    ScanRow row;
    row.multiplier = multipliers[p];
    row.estimate = reduce_estimate(acc[p], n_paths);

    // paired difference against the base policy (common random numbers)
    std::vector<double> d(n_paths), d_sq(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
      d[i] = acc[p].risk[i] - acc[base_idx].risk[i];
      d_sq[i] = d[i] * d[i];
    }
    row.diff_vs_base = pairwise_sum(d) / dn;
    const double var = n_paths > 1
                           ? std::max(0.0, (pairwise_sum(d_sq) -
                                            dn * row.diff_vs_base *
                                                row.diff_vs_base) /
                                               (dn - 1.0))
                           : 0.0;
    row.se_diff = std::sqrt(var / dn);
    row.resolved = std::abs(row.diff_vs_base) > 2.0 * row.se_diff;
    if (row.multiplier != 1.0 &&
        row.diff_vs_base < -2.0 * row.se_diff)
      rep.base_local_min_2se = false;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

PairedComparison compare_policies(const DiffusionModel& model,
                                  const Prior& prior,
                                  const PenaltySpec& penalty, const Policy& a,
                                  const Policy& b, const SimGrid& grid,
                                  std::size_t n_paths, std::uint64_t seed,
                                  const McOptions& opt) {
  std::vector<Policy> pols{a, b};
  auto acc = run_policies(model, prior, penalty, pols, grid, n_paths, seed, opt);
  PairedComparison out;
  out.a = reduce_estimate(acc[0], n_paths);
  out.b = reduce_estimate(acc[1], n_paths);
  const double dn = static_cast<double>(n_paths);
  std::vector<double> d(n_paths), d_sq(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    d[i] = acc[0].risk[i] - acc[1].risk[i];
    d_sq[i] = d[i] * d[i];
  }
  out.diff = pairwise_sum(d) / dn;
  const double var =
      n_paths > 1
          ? std::max(0.0, (pairwise_sum(d_sq) - dn * out.diff * out.diff) /
                              (dn - 1.0))
          : 0.0;
  out.se_diff = std::sqrt(var / dn);
  return out;
}

SandwichReport sandwich_audit(const DiffusionModel& model, const Prior& prior,
                              const PenaltySpec& penalty,
                              const BoundaryTable& g_in_x,
                              std::size_t n_points, double slack) {
  if (!model.is_subclass())
    throw CapabilityError("sandwich audit requires the EtaSigmoid family");
  if (g_in_x.coord != BoundaryTable::Coord::X)
    throw ConfigError("/boundary", "sandwich audit expects a table in X");

  auto flat_height = [&](double s) {
    DiffusionModel companion = DiffusionModel::eta_sigmoid(
        model.eta0(), model.eta1(), s, s, model.z());
    ChangeOfVariables cov(companion, companion.z());
    if (penalty.kind == PenaltySpec::Kind::Exponential) {
      ExpBoundarySolver solver(cov, prior, penalty.c, penalty.alpha);
      return solver.solve_at(0.0).h;
    }
    LinearBoundarySolver solver(cov, prior, penalty.c);
    return solver.solve_at(0.0).h;
  };

  SandwichReport rep;
  rep.floor = penalty.stop_floor(prior.lambda);
  const double s_lo = std::min(model.s0(), model.s1());
  const double s_hi = std::max(model.s0(), model.s1());
  const double h_a = flat_height(s_lo);
  const double h_b = s_hi == s_lo ? h_a : flat_height(s_hi);
  rep.h_lo = std::min(h_a, h_b);
  rep.h_hi = std::max(h_a, h_b);

  if (rep.floor > rep.h_lo + slack)
    rep.violations.push_back({0.0, rep.h_lo, rep.floor, rep.h_hi, "floor"});

  std::vector<double> xs =
      logspace(g_in_x.grid.front(), g_in_x.grid.back(), n_points);
  rep.n_checked = xs.size();
  for (double x : xs) {
    const double g = g_in_x.value_at(x);
    if (g < rep.h_lo - slack)
      rep.violations.push_back({x, g, rep.h_lo, rep.h_hi, "below"});
    if (g > rep.h_hi + slack)
      rep.violations.push_back({x, g, rep.h_lo, rep.h_hi, "above"});
  }
  rep.pass = rep.violations.empty();
  return rep;
}

}  // namespace qdet
