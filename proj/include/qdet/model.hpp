#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdet/errors.hpp"

namespace qdet {

// Piecewise-linear coefficient samples in log-x with flat extrapolation.
// Accepted by the simulator and the filter only; the boundary solvers
// require the structured family below.
struct CoeffTable {
  std::vector<double> x;  // strictly increasing, all > 0
  std::vector<double> mu0, mu1, sigma;
};

enum class Family { EtaSigmoid, Tabulated };

// Observation-process coefficients. The EtaSigmoid family couples the two
// drift regimes to the diffusion coefficient through exponents (eta0, eta1)
// with eta0 + eta1 = 1:
//
//   sigma(x) = x * s(x),  s(x) = s0 + (s1 - s0) * x / (1 + x)
//   mu_i(x)  = eta_i * sigma(x)^2 / x
//
// so the signal/noise ratio rho(x) = (eta1 - eta0)^2 s(x)^2 is pinched
// between its values at s0 and s1, and degenerates to a constant when
// s0 == s1.
class DiffusionModel {
 public:
  static DiffusionModel eta_sigmoid(double eta0, double eta1, double s0,
                                    double s1, double z);
  static DiffusionModel tabulated(CoeffTable table, double z);

  Family family() const { return family_; }
  bool is_subclass() const { return family_ == Family::EtaSigmoid; }

  double mu0(double x) const;
  double mu1(double x) const;
  double sigma(double x) const;  // throws NonPositiveSigma if <= 0

  // diffusion modulation s(x) = sigma(x)/x (EtaSigmoid only)
  double s_mod(double x) const;

  double eta0() const { return eta0_; }
  double eta1() const { return eta1_; }
  double s0() const { return s0_; }
  double s1() const { return s1_; }
  // eta = 1/(eta1 - eta0), the exponent of the normal-form change of variables
  double eta() const;
  double z() const { return z_; }

  // signal/noise ratio ((mu1-mu0)/sigma)^2
  double rho(double x) const;
  // subclass bounds on rho over (0, infinity)
  double rho_min() const;
  double rho_max() const;

  const CoeffTable& table() const { return *table_; }

 private:
  DiffusionModel() = default;

  Family family_ = Family::EtaSigmoid;
  double eta0_ = 0.0, eta1_ = 1.0;
  double s0_ = 1.0, s1_ = 1.0;
  double z_ = 1.0;
  std::optional<CoeffTable> table_;
};

// free-function form of the signal/noise ratio
double rho(const DiffusionModel& model, double x);

// Prior of the disorder time: an atom pi at zero plus an Exp(lambda) tail.
struct Prior {
  double pi = 0.0;
  double lambda = 1.0;
};

// Delay penalty F: linear F(t) = c t, or exponential F(t) = c (e^{alpha t}-1),
// with F == 0 on t <= 0.
struct PenaltySpec {
  enum class Kind { Linear, Exponential };

  Kind kind = Kind::Linear;
  double c = 1.0;
  double alpha = 0.0;  // unused for Kind::Linear

  static PenaltySpec linear(double c);
  static PenaltySpec exponential(double c, double alpha);

  double cost(double delay) const;

  // Growth rate of the weighted likelihood ratio recursion:
  // lambda for linear, lambda + alpha for exponential.
  double kappa(double lambda) const {
    return kind == Kind::Exponential ? lambda + alpha : lambda;
  }

  // It is never optimal to stop below this statistic level.
  double stop_floor(double lambda) const {
    return kind == Kind::Exponential ? lambda / (c * alpha) : lambda / c;
  }

  const char* name() const {
    return kind == Kind::Exponential ? "exponential" : "linear";
  }
};

double penalty_cost(const PenaltySpec& spec, double delay);

struct ValidationIssue {
  std::string condition;
  double x = 0.0;
  std::string detail;
};

struct ValidationReport {
  bool pass = true;
  double K = 0.0;          // smallest constant witnessing the growth bounds on the grid
  double ratio_min = 0.0;  // range of (mu1 - mu0)/sigma over the grid
  double ratio_max = 0.0;
  bool subclass = false;
  std::vector<ValidationIssue> failures;  // sign/positivity violations
  std::vector<ValidationIssue> warnings;  // bound-related observations
};

// Checks the standing assumptions on a strictly increasing grid of x > 0:
// sigma > 0, (mu1-mu0)/sigma bounded away from zero with a single sign, and
// reports the smallest K with |mu_i| + |sigma| <= K(1+|x|) and
// |(mu1-mu0)/sigma| <= K on the grid. K is reported, not enforced; only
// sign/positivity violations fail the report.
ValidationReport validate_model(const DiffusionModel& model,
                                std::span<const double> grid);

}  // namespace qdet
