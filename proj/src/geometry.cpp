#include "qdet/geometry.hpp"

#include <cmath>

#include "qdet/numerics.hpp"

namespace qdet {

ChangeOfVariables::ChangeOfVariables(DiffusionModel model, double z)
    : model_(std::move(model)), z_(z) {
  if (!(z_ > 0.0)) throw ConfigError("/z", "must be positive");
}

double drift_integral_quadrature(const DiffusionModel& model, double z,
                                 double x, double abs_tol) {
  if (x == z) return 0.0;
  // integrate in log-w, where the family's integrands are smooth
  auto f = [&](double s) {
    const double w = std::exp(s);
    const double sg = model.sigma(w);
    return (model.mu1(w) - model.mu0(w)) / (sg * sg) * w;
  };
  return adaptive_simpson(f, std::log(z), std::log(x), abs_tol);
}

double ChangeOfVariables::drift_integral(double x) const {
  if (!(x > 0.0)) throw ConfigError("/x", "must be positive");
  if (model_.is_subclass()) return std::log(x / z_) / model_.eta();
  return drift_integral_quadrature(model_, z_, x);
}

double ChangeOfVariables::y_of(double phi, double x) const {
  if (!(phi > 0.0)) throw ConfigError("/phi", "must be positive");
  return std::log(phi) - drift_integral(x);
}

double ChangeOfVariables::x_of(double phi, double y) const {
  if (!(phi > 0.0)) throw ConfigError("/phi", "must be positive");
  if (model_.is_subclass()) {
    const double eta = model_.eta();
    return z_ * std::exp(-eta * y) * std::pow(phi, eta);
  }

  // general case: monotone root find on y_of(phi, .) to 1e-12 in y
  const double target = std::log(phi) - y;  // drift_integral(x) == target
  const double at_z = 0.0;
  // single-signed integrand => drift_integral strictly monotone in x
  const double probe = drift_integral(2.0 * z_);
  if (probe == at_z)
    throw NotInvertible("(mu1-mu0)/sigma^2 integrates to zero; not invertible");
  const bool increasing = probe > 0.0;

  double lo = z_, hi = z_;
  const bool go_up = increasing == (target > 0.0);
  double span = z_;
  for (int i = 0; i < 200; ++i) {
    if (go_up)
      hi = z_ + span;
    else
      lo = std::max(z_ - span, z_ * std::pow(2.0, -static_cast<double>(i + 1)));
    const double f_lo = drift_integral(lo) - target;
    const double f_hi = drift_integral(hi) - target;
    if (f_lo == 0.0) return lo;
    if (f_hi == 0.0) return hi;
    if ((f_lo < 0.0) != (f_hi < 0.0)) {
      auto g = [&](double x) { return drift_integral(x) - target; };
      // bisect to 1e-12 in y via the integral values
      double a = lo, b = hi, fa = f_lo;
      for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        const double fm = g(m);
        if (std::abs(fm) < 1e-12) return m;
        if ((fm < 0.0) == (fa < 0.0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      return 0.5 * (a + b);
    }
    span *= 2.0;
    if (!(span < 1e12 * z_)) break;
  }
  throw NotInvertible("x(phi, y) bracket not found; integrand may change sign");
}

double ChangeOfVariables::rho_hat(double phi, double y) const {
  return model_.rho(x_of(phi, y));
}

}  // namespace qdet
