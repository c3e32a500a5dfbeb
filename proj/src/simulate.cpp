#include "qdet/simulate.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace qdet {

std::size_t SimGrid::n_steps() const {
  if (!(dt > 0.0)) throw ConfigError("/grid/dt", "must be positive");
  if (!(horizon >= dt)) throw ConfigError("/grid/horizon", "must be >= dt");
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-12));
}

double draw_disorder_time(const Prior& prior, RngStream& rng) {
  const double u = rng.uniform();
  if (u < prior.pi) return 0.0;
  return rng.exponential(prior.lambda);
}

double draw_disorder_time(const Prior& prior, std::uint64_t seed) {
  RngStream rng(seed, 0);
  return draw_disorder_time(prior, rng);
}

namespace {

void check_clamps(std::size_t clamps, std::size_t steps, const SimOptions& opt) {
  if (steps > 0 &&
      static_cast<double>(clamps) >
          opt.max_clamp_fraction * static_cast<double>(steps))
    throw StateUnderflow("state clamped on " + std::to_string(clamps) + " of " +
                         std::to_string(steps) + " steps");
}

}  // namespace

SamplePath simulate_observation(const DiffusionModel& model, double theta,
                                double x0, const SimGrid& grid,
                                std::uint64_t seed, const SimOptions& opt) {
  RngStream rng(seed, 0);
  SamplePath p = simulate_observation(model, theta, x0, grid, rng, opt);
  p.seed = seed;
  return p;
}

SamplePath simulate_observation(const DiffusionModel& model, double theta,
                                double x0, const SimGrid& grid, RngStream& rng,
                                const SimOptions& opt) {
  if (!(x0 > 0.0)) throw ConfigError("/x0", "must be positive");
  const std::size_t n = grid.n_steps();
  const double sq_dt = std::sqrt(grid.dt);

  SamplePath p;
  p.theta = theta;
  p.times.resize(n + 1);
  p.x.resize(n + 1);
  p.db.resize(n);
  p.x[0] = x0;
  p.times[0] = 0.0;

  double x = x0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = grid.time(k);
    const double drift =
        theta <= t ? model.mu1(x) : model.mu0(x);
    const double db = sq_dt * rng.normal();
    x += drift * grid.dt + model.sigma(x) * db;
    if (x < opt.clamp_floor) {
      x = opt.clamp_floor;
      ++p.clamp_count;
    }
    p.db[k] = db;
    p.times[k + 1] = grid.time(k + 1);
    p.x[k + 1] = x;
  }
  check_clamps(p.clamp_count, n, opt);
  return p;
}

namespace {

struct JointState {
  double phi, x;
};

// One Euler step of the innovation-driven (phi, X) system. The posterior
// entering both drifts is the same derived value pi = phi/(1+phi), so the
// pi-terms cancel in the normal-form coordinate exactly as they do in
// continuous time.
JointState joint_step(const DiffusionModel& model, const Prior& prior,
                      double alpha, JointState s, double dt, double dbbar,
                      const SimOptions& opt, std::size_t* clamps) {
  const double x = s.x;
  const double sg = model.sigma(x);
  const double r = (model.mu1(x) - model.mu0(x)) / sg;  // signed root of rho
  const double pi = s.phi / (1.0 + s.phi);
  const double lam = prior.lambda;

  double phi = s.phi +
               (lam + (lam + alpha) * s.phi + r * r * pi * s.phi) * dt +
               r * s.phi * dbbar;
  double xn = x + (model.mu0(x) + pi * (model.mu1(x) - model.mu0(x))) * dt +
              sg * dbbar;
  if (phi < 0.0) {
    phi = 0.0;
    ++*clamps;
  }
  if (xn < opt.clamp_floor) {
    xn = opt.clamp_floor;
    ++*clamps;
  }
  return {phi, xn};
}

}  // namespace

JointPath simulate_joint(const DiffusionModel& model, const Prior& prior,
                         const PenaltySpec& penalty, double x0,
                         const SimGrid& grid, std::uint64_t seed,
                         const SimOptions& opt) {
  if (!(x0 > 0.0)) throw ConfigError("/x0", "must be positive");
  if (!(prior.pi >= 0.0 && prior.pi < 1.0))
    throw ConfigError("/prior/pi", "must lie in [0,1)");
  const std::size_t n = grid.n_steps();
  const double sq_dt = std::sqrt(grid.dt);
  const double alpha =
      penalty.kind == PenaltySpec::Kind::Exponential ? penalty.alpha : 0.0;

  RngStream rng(seed, 0);
  JointPath p;
  p.seed = seed;
  p.times.resize(n + 1);
  p.pi.resize(n + 1);
  p.phi.resize(n + 1);
  p.x.resize(n + 1);
  p.dbbar.resize(n);

  JointState s{prior.pi / (1.0 - prior.pi), x0};
  p.times[0] = 0.0;
  p.phi[0] = s.phi;
  p.pi[0] = s.phi / (1.0 + s.phi);
  p.x[0] = x0;

  for (std::size_t k = 0; k < n; ++k) {
    const double dbbar = sq_dt * rng.normal();
    s = joint_step(model, prior, alpha, s, grid.dt, dbbar, opt, &p.clamp_count);
    if (s.phi > 1e12) {
      s.phi = 1e12;
      p.saturated = true;
    }
    double pi = s.phi / (1.0 + s.phi);
    if (pi > opt.pi_cap) pi = opt.pi_cap;
    p.dbbar[k] = dbbar;
    p.times[k + 1] = grid.time(k + 1);
    p.phi[k + 1] = s.phi;
    p.pi[k + 1] = pi;
    p.x[k + 1] = s.x;
  }
  check_clamps(p.clamp_count, n, opt);
  return p;
}

JointDebug simulate_joint_debug(const DiffusionModel& model, const Prior& prior,
                                const PenaltySpec& penalty, double x0,
                                const SimGrid& grid, std::uint64_t seed,
                                const SimOptions& opt) {
  JointDebug out;
  out.path = simulate_joint(model, prior, penalty, x0, grid, seed, opt);

  // replay the same innovations, evolving pi by its own SDE
  const double lam = prior.lambda;
  double pi_sde = prior.pi;
  for (std::size_t k = 0; k < out.path.dbbar.size(); ++k) {
    const double x = out.path.x[k];
    const double r = (model.mu1(x) - model.mu0(x)) / model.sigma(x);
    pi_sde += lam * (1.0 - pi_sde) * grid.dt +
              r * pi_sde * (1.0 - pi_sde) * out.path.dbbar[k];
    pi_sde = std::min(std::max(pi_sde, 0.0), opt.pi_cap);
    out.max_pi_drift =
        std::max(out.max_pi_drift, std::abs(pi_sde - out.path.pi[k + 1]));
  }
  out.final_pi_gap = pi_sde - out.path.pi.back();
  return out;
}

}  // namespace qdet
