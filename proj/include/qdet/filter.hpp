#pragma once

#include <vector>

#include "qdet/model.hpp"
#include "qdet/simulate.hpp"

namespace qdet {

struct FilterState {
  double t = 0.0;
  double logL = 0.0;
  double phi = 0.0;  // weighted likelihood ratio of the active penalty
  double pi = 0.0;   // phi/(1+phi), exact by construction
  bool saturated = false;
};

struct FilterOptions {
  double phi_cap = 1e12;
};

// One left-point step of the log likelihood ratio:
//   logL += r(x_prev) (x_next - x_prev) - q(x_prev) dt / 2
// with r = (mu1-mu0)/sigma^2 and q = (mu1^2-mu0^2)/sigma^2.
double update_logL(const DiffusionModel& model, double logL, double x_prev,
                   double x_next, double dt);

// One step of the weighted likelihood ratio,
//   phi' = e^{kappa dt} L_ratio (phi + lambda d_eff),
// kappa = lambda (linear) or lambda + alpha (exponential). The exponential
// factor inside the update integral is taken exactly,
// d_eff = (1 - e^{-kappa dt})/kappa, with the left endpoint used for 1/L
// only; this makes the L == 1 case exact at any step size.
double update_phi(const Prior& prior, const PenaltySpec& penalty, double phi,
                  double L_ratio, double dt);

// Applies the two updates along an observed path. pi is derived as
// phi/(1+phi). A path of length zero yields the single initial state.
std::vector<FilterState> run_filter(const SamplePath& path,
                                    const DiffusionModel& model,
                                    const Prior& prior,
                                    const PenaltySpec& penalty,
                                    const FilterOptions& opt = {});

}  // namespace qdet
