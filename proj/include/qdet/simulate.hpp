#pragma once

#include <cstdint>
#include <vector>

#include "qdet/model.hpp"
#include "qdet/rng.hpp"

namespace qdet {

struct SimGrid {
  double horizon = 1.0;  // T
  double dt = 1e-3;      // step

  std::size_t n_steps() const;
  double time(std::size_t k) const { return static_cast<double>(k) * dt; }
};

struct SimOptions {
  double clamp_floor = 1e-10;       // state positivity floor
  double max_clamp_fraction = 0.01; // StateUnderflow beyond this
  double pi_cap = 1.0 - 1e-12;
};

// Observation path simulated under a known disorder time theta
// (theta may be +infinity for no-change experiments).
struct SamplePath {
  std::vector<double> times;
  std::vector<double> x;
  std::vector<double> db;  // Brownian increments actually used, size n_steps
  double theta = 0.0;
  std::uint64_t seed = 0;
  std::size_t clamp_count = 0;
};

// Sufficient statistics evolved jointly with the observations, all driven by
// one innovation increment sequence.
struct JointPath {
  std::vector<double> times;
  std::vector<double> pi;
  std::vector<double> phi;
  std::vector<double> x;
  std::vector<double> dbbar;  // innovation increments, size n_steps
  std::uint64_t seed = 0;
  std::size_t clamp_count = 0;
  bool saturated = false;
};

// 0 with probability prior.pi, otherwise Exp(prior.lambda).
double draw_disorder_time(const Prior& prior, RngStream& rng);
double draw_disorder_time(const Prior& prior, std::uint64_t seed);

// Euler path of dX = (mu0 + 1{theta<=t}(mu1-mu0)) dt + sigma dB.
SamplePath simulate_observation(const DiffusionModel& model, double theta,
                                double x0, const SimGrid& grid,
                                std::uint64_t seed,
                                const SimOptions& opt = {});

// Same stepping, drawing increments from a caller-provided stream. Used by
// the Monte Carlo driver so that a path's disorder draw and increments come
// from one per-path stream.
SamplePath simulate_observation(const DiffusionModel& model, double theta,
                                double x0, const SimGrid& grid, RngStream& rng,
                                const SimOptions& opt = {});

// Euler path of the closed (pi, phi, X) system under the innovation
// representation. phi follows the weighted-likelihood-ratio dynamics of the
// given penalty (growth rate lambda for linear, lambda + alpha for
// exponential); pi is derived each step as phi/(1+phi), which keeps the
// algebraic identity exact and cancels the posterior terms between the phi
// and X drifts.
JointPath simulate_joint(const DiffusionModel& model, const Prior& prior,
                         const PenaltySpec& penalty, double x0,
                         const SimGrid& grid, std::uint64_t seed,
                         const SimOptions& opt = {});

// Debug variant: pi is additionally evolved by its own SDE on the shared
// innovations; reports the largest pathwise gap against the derived value
// and the signed terminal gap (whose average over paths isolates the
// systematic discretization drift from the zero-mean noise).
struct JointDebug {
  JointPath path;
  double max_pi_drift = 0.0;
  double final_pi_gap = 0.0;  // pi_sde(T) - pi_derived(T)
};
JointDebug simulate_joint_debug(const DiffusionModel& model, const Prior& prior,
                                const PenaltySpec& penalty, double x0,
                                const SimGrid& grid, std::uint64_t seed,
                                const SimOptions& opt = {});

}  // namespace qdet
