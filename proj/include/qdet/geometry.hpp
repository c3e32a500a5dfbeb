#pragma once

#include "qdet/model.hpp"

namespace qdet {

// Normal-form change of variables
//   y(phi, x; z) = log phi - int_z^x (mu1(w)-mu0(w))/sigma^2(w) dw
// with closed forms for the EtaSigmoid family:
//   y = log phi - (1/eta) log(x/z),  x(phi, y) = z e^{-eta y} phi^eta.
// The transformed diffusion coefficient rho_hat(phi, y) = rho(x(phi, y)) is
// the signal/noise ratio evaluated along the inverse map.
class ChangeOfVariables {
 public:
  ChangeOfVariables(DiffusionModel model, double z);

  const DiffusionModel& model() const { return model_; }
  double z() const { return z_; }
  double eta() const { return model_.eta(); }
  bool subclass() const { return model_.is_subclass(); }

  double y_of(double phi, double x) const;
  double x_of(double phi, double y) const;
  double rho_hat(double phi, double y) const;

  // int_z^x (mu1-mu0)/sigma^2 dw; quadrature path used for tabulated models
  double drift_integral(double x) const;

 private:
  DiffusionModel model_;
  double z_;
};

// Quadrature route for the drift integral regardless of family; used to
// cross-check the closed form.
double drift_integral_quadrature(const DiffusionModel& model, double z,
                                 double x, double abs_tol = 1e-10);

}  // namespace qdet
