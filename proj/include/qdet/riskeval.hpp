#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qdet/boundary_table.hpp"
#include "qdet/filter.hpp"
#include "qdet/model.hpp"
#include "qdet/simulate.hpp"

namespace qdet {

// Stopping rule applied to the filtered statistic along a simulated path.
struct Policy {
  enum class Kind { ConstantThreshold, BoundaryInX, BoundaryInY, Never, Immediate };
  enum class Statistic { PhiLinear, PhiExponential };

  Kind kind = Kind::ConstantThreshold;
  Statistic statistic = Statistic::PhiLinear;
  double h = 1.0;        // ConstantThreshold
  BoundaryTable table;   // BoundaryInX / BoundaryInY
  double z = 1.0;        // anchor for BoundaryInY

  static Policy constant_threshold(double h, Statistic s);
  static Policy boundary_in_x(BoundaryTable t, Statistic s);
  static Policy boundary_in_y(BoundaryTable t, double z, Statistic s);
  static Policy never();
  static Policy immediate();

  Policy scaled(double multiplier) const;  // thresholds scaled by multiplier
};

struct RiskEstimate {
  double risk = 0.0;
  double se = 0.0;
  double false_alarm = 0.0;  // mean of 1{tau < theta}
  double delay = 0.0;        // mean of F(tau-theta) 1{tau >= theta}
  std::size_t n_paths = 0;
  std::size_t truncated = 0;  // paths where the boundary was never crossed
  bool truncation_flagged = false;
};

struct McOptions {
  double x0 = 0.0;       // 0 -> model reference point z
  int threads = -1;      // <=1 serial reference, otherwise OpenMP
  double phi_cap = 1e12;
};

// horizon with P(theta > T) <= tail under the prior
double default_horizon(const Prior& prior, double tail = 1e-4);

// Monte Carlo Bayesian risk of a policy: per path, draw theta, simulate the
// observations, run the filter, stop at the first threshold crossing (capped
// at the horizon), and accumulate 1{tau<theta} + F(tau-theta) 1{tau>=theta}.
// Per-path counter-based streams and a fixed pairwise reduction make the
// estimate identical for any thread count.
RiskEstimate evaluate_risk(const DiffusionModel& model, const Prior& prior,
                           const PenaltySpec& penalty, const Policy& policy,
                           const SimGrid& grid, std::size_t n_paths,
                           std::uint64_t seed, const McOptions& opt = {});

struct ScanRow {
  double multiplier = 1.0;
  RiskEstimate estimate;
  double diff_vs_base = 0.0;     // paired risk difference against multiplier 1
  double se_diff = 0.0;          // SE of the paired difference
  bool resolved = false;         // |diff| > 2 se_diff
};

struct ScanReport {
  std::vector<ScanRow> rows;
  bool base_local_min_2se = true;  // no alternative beats base by > 2 SE
};

// Evaluates the policy at scaled thresholds with common random numbers
// (one shared simulation per path).
ScanReport optimality_scan(const DiffusionModel& model, const Prior& prior,
                           const PenaltySpec& penalty, const Policy& base,
                           std::span<const double> multipliers,
                           const SimGrid& grid, std::size_t n_paths,
                           std::uint64_t seed, const McOptions& opt = {});

// Paired comparison of two policies on shared paths.
struct PairedComparison {
  RiskEstimate a, b;
  double diff = 0.0;     // mean of risk_a - risk_b per path
  double se_diff = 0.0;  // SE of the paired difference
};
PairedComparison compare_policies(const DiffusionModel& model,
                                  const Prior& prior,
                                  const PenaltySpec& penalty, const Policy& a,
                                  const Policy& b, const SimGrid& grid,
                                  std::size_t n_paths, std::uint64_t seed,
                                  const McOptions& opt = {});

struct SandwichViolation {
  double x = 0.0, g = 0.0, lo = 0.0, hi = 0.0;
  const char* which = "";
};

struct SandwichReport {
  double floor = 0.0;   // lambda/c or lambda/(c alpha)
  double h_lo = 0.0;    // constant-rho boundary at rho_min
  double h_hi = 0.0;    // constant-rho boundary at rho_max
  std::size_t n_checked = 0;
  std::vector<SandwichViolation> violations;
  bool pass = true;
};

// Checks floor <= h_lo <= g(x) <= h_hi pointwise on a log-spaced grid over
// the table's range, with a small slack for solver tolerances.
SandwichReport sandwich_audit(const DiffusionModel& model, const Prior& prior,
                              const PenaltySpec& penalty,
                              const BoundaryTable& g_in_x,
                              std::size_t n_points, double slack = 1e-6);

}  // namespace qdet
