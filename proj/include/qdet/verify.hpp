#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qdet/boundary_table.hpp"
#include "qdet/config.hpp"
#include "qdet/riskeval.hpp"

namespace qdet {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      // measured quantity
  double threshold = 0.0;  // limit it was held against
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckResult> checks;
  bool pass() const;
};

struct VerifyOptions {
  std::uint64_t seed = 20240801;
  std::size_t n_small = 10000;   // filter/posterior Monte Carlo sizes
  std::size_t n_large = 100000;  // optimality and value-match sizes
  bool quick = false;            // shrink the large Monte Carlo (CLI default off)
  int threads = -1;
};

// filter identities, no-change likelihood mean, posterior mean law
SuiteResult verify_filters(const Setup& setup, const VerifyOptions& opt = {});

// boundary oracle match, lower bounds, monotonicity, sandwich, cross-solver
// agreement, smooth fit, ODE/PDE residuals
SuiteResult verify_boundaries(const Setup& setup, const VerifyOptions& opt = {});

// Monte Carlo risk identities, optimality scan, value match, sandwich audit
// (optionally against an externally supplied boundary table in X)
SuiteResult verify_risk(const Setup& setup, const VerifyOptions& opt = {},
                        const BoundaryTable* external_gx = nullptr);

// Independent scalar oracle for the constant-rho linear boundary: composite
// Simpson on the closed-form damped integrand plus plain bisection. Kept
// deliberately separate from the production quadrature path.
double linear_boundary_oracle_const_weight(double lambda, double c, double W,
                                           std::size_t nodes = 1000000);

// Risk of the never-alarm policy capped at the horizon, in closed form from
// the prior (independent of the diffusion).
double never_risk_closed_form(const Prior& prior, const PenaltySpec& penalty,
                              double horizon);

}  // namespace qdet
