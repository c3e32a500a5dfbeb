#include "qdet/filter.hpp"

#include <cmath>

namespace qdet {

double update_logL(const DiffusionModel& model, double logL, double x_prev,
                   double x_next, double dt) {
  const double sg = model.sigma(x_prev);
  const double m0 = model.mu0(x_prev);
  const double m1 = model.mu1(x_prev);
  const double r = (m1 - m0) / (sg * sg);
  const double q = (m1 * m1 - m0 * m0) / (sg * sg);
  return logL + r * (x_next - x_prev) - 0.5 * q * dt;
}

double update_phi(const Prior& prior, const PenaltySpec& penalty, double phi,
                  double L_ratio, double dt) {
  const double kappa = penalty.kappa(prior.lambda);
  const double d_eff = kappa > 0.0 ? -std::expm1(-kappa * dt) / kappa : dt;
  return std::exp(kappa * dt) * L_ratio * (phi + prior.lambda * d_eff);
}

std::vector<FilterState> run_filter(const SamplePath& path,
                                    const DiffusionModel& model,
                                    const Prior& prior,
                                    const PenaltySpec& penalty,
                                    const FilterOptions& opt) {
  std::vector<FilterState> out;
  out.reserve(path.x.size());

  FilterState st;
  st.t = 0.0;
  st.logL = 0.0;
  st.phi = prior.pi / (1.0 - prior.pi);
  st.pi = st.phi / (1.0 + st.phi);
  out.push_back(st);

  for (std::size_t k = 0; k + 1 < path.x.size(); ++k) {
    const double dt = path.times[k + 1] - path.times[k];
    const double logL_next =
        update_logL(model, st.logL, path.x[k], path.x[k + 1], dt);
    const double L_ratio = std::exp(logL_next - st.logL);
    double phi_next = update_phi(prior, penalty, st.phi, L_ratio, dt);
    if (phi_next > opt.phi_cap) {
      phi_next = opt.phi_cap;
      st.saturated = true;
    }
    st.t = path.times[k + 1];
    st.logL = logL_next;
    st.phi = phi_next;
    st.pi = phi_next / (1.0 + phi_next);
    out.push_back(st);
  }
  return out;
}

}  // namespace qdet
