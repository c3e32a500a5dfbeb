#include "qdet/model.hpp"

#include <algorithm>
#include <cmath>

#include "qdet/numerics.hpp"

namespace qdet {

namespace {

double interp_log_flat(std::span<const double> xs, std::span<const double> fs,
                       double x) {
  if (x <= xs.front()) return fs.front();
  if (x >= xs.back()) return fs.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - xs.begin()) - 1;
  const double t = std::log(x / xs[j]) / std::log(xs[j + 1] / xs[j]);
  return fs[j] + t * (fs[j + 1] - fs[j]);
}

}  // namespace

DiffusionModel DiffusionModel::eta_sigmoid(double eta0, double eta1, double s0,
                                           double s1, double z) {
  if (std::abs(eta0 + eta1 - 1.0) > 1e-12)
    throw SubclassViolation("eta0 + eta1 must equal 1");
  if (eta0 == eta1) throw SubclassViolation("eta0 and eta1 must differ");
  if (!(s0 > 0.0) || !(s1 > 0.0))
    throw NonPositiveSigma("diffusion modulation endpoints must be positive");
  if (!(z > 0.0)) throw SubclassViolation("reference point z must be positive");
  DiffusionModel m;
  m.family_ = Family::EtaSigmoid;
  m.eta0_ = eta0;
  m.eta1_ = eta1;
  m.s0_ = s0;
  m.s1_ = s1;
  m.z_ = z;
  return m;
}

DiffusionModel DiffusionModel::tabulated(CoeffTable table, double z) {
  if (table.x.size() < 2) throw ConfigError("/model/table", "needs >= 2 samples");
  if (table.mu0.size() != table.x.size() || table.mu1.size() != table.x.size() ||
      table.sigma.size() != table.x.size())
    throw ConfigError("/model/table", "column length mismatch");
  for (std::size_t i = 0; i < table.x.size(); ++i) {
    if (!(table.x[i] > 0.0) || (i > 0 && table.x[i] <= table.x[i - 1]))
      throw ConfigError("/model/table/x", "grid must be strictly increasing and positive");
    if (!(table.sigma[i] > 0.0))
      throw NonPositiveSigma("tabulated sigma must be positive");
  }
  if (!(z > 0.0)) throw ConfigError("/model/z", "reference point must be positive");
  DiffusionModel m;
  m.family_ = Family::Tabulated;
  m.z_ = z;
  m.table_ = std::move(table);
  return m;
}

double DiffusionModel::s_mod(double x) const {
  return s0_ + (s1_ - s0_) * x / (1.0 + x);
}

double DiffusionModel::sigma(double x) const {
  double s;
  if (family_ == Family::EtaSigmoid) {
    s = x * s_mod(x);
  } else {
    s = interp_log_flat(table_->x, table_->sigma, x);
  }
  if (!(s > 0.0)) throw NonPositiveSigma("sigma(x) <= 0");
  return s;
}

double DiffusionModel::mu0(double x) const {
  if (family_ == Family::EtaSigmoid) {
    const double sg = sigma(x);
    return eta0_ * sg * sg / x;
  }
  return interp_log_flat(table_->x, table_->mu0, x);
}

double DiffusionModel::mu1(double x) const {
  if (family_ == Family::EtaSigmoid) {
    const double sg = sigma(x);
    return eta1_ * sg * sg / x;
  }
  return interp_log_flat(table_->x, table_->mu1, x);
}

double DiffusionModel::eta() const {
  if (family_ != Family::EtaSigmoid)
    throw CapabilityError("eta is defined for the EtaSigmoid family only");
  return 1.0 / (eta1_ - eta0_);
}

double DiffusionModel::rho(double x) const {
  if (family_ == Family::EtaSigmoid) {
    const double d = (eta1_ - eta0_) * s_mod(x);
    return d * d;
  }
  const double sg = sigma(x);
  const double d = (mu1(x) - mu0(x)) / sg;
  return d * d;
}

double DiffusionModel::rho_min() const {
  const double d = eta1_ - eta0_;
  return d * d * std::min(s0_, s1_) * std::min(s0_, s1_);
}

double DiffusionModel::rho_max() const {
  const double d = eta1_ - eta0_;
  return d * d * std::max(s0_, s1_) * std::max(s0_, s1_);
}

double rho(const DiffusionModel& model, double x) { return model.rho(x); }

PenaltySpec PenaltySpec::linear(double c) {
  if (!(c > 0.0)) throw ConfigError("/penalty/c", "must be positive");
  PenaltySpec p;
  p.kind = Kind::Linear;
  p.c = c;
  p.alpha = 0.0;
  return p;
}

PenaltySpec PenaltySpec::exponential(double c, double alpha) {
  if (!(c > 0.0)) throw ConfigError("/penalty/c", "must be positive");
  if (!(alpha > 0.0)) throw ConfigError("/penalty/alpha", "must be positive");
  PenaltySpec p;
  p.kind = Kind::Exponential;
  p.c = c;
  p.alpha = alpha;
  return p;
}

double PenaltySpec::cost(double delay) const {
  if (delay <= 0.0) return 0.0;
  if (kind == Kind::Exponential) return c * std::expm1(alpha * delay);
  return c * delay;
}

double penalty_cost(const PenaltySpec& spec, double delay) {
  return spec.cost(delay);
}

ValidationReport validate_model(const DiffusionModel& model,
                                std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("/grid", "validation grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || (i > 0 && grid[i] <= grid[i - 1]))
      throw ConfigError("/grid", "grid must be strictly increasing and positive");
  }

  ValidationReport rep;
  rep.subclass = model.is_subclass();
  rep.ratio_min = std::numeric_limits<double>::infinity();
  rep.ratio_max = -std::numeric_limits<double>::infinity();

  bool have_sign = false;
  bool sign_positive = false;
  for (double x : grid) {
    const double sg = model.sigma(x);  // throws NonPositiveSigma
    const double m0 = model.mu0(x);
    const double m1 = model.mu1(x);
    const double ratio = (m1 - m0) / sg;
    rep.ratio_min = std::min(rep.ratio_min, ratio);
    rep.ratio_max = std::max(rep.ratio_max, ratio);

    const double k_growth =
        std::max(std::abs(m0), std::abs(m1)) + std::abs(sg);
    rep.K = std::max(rep.K, std::max(k_growth / (1.0 + std::abs(x)),
                                     std::abs(ratio)));

    if (ratio == 0.0) {
      rep.failures.push_back(
          {"ratio_nonzero", x, "(mu1-mu0)/sigma vanishes"});
      continue;
    }
    if (!have_sign) {
      have_sign = true;
      sign_positive = ratio > 0.0;
    } else if ((ratio > 0.0) != sign_positive) {
      rep.failures.push_back(
          {"ratio_single_sign", x, "(mu1-mu0)/sigma changes sign"});
    }
  }

  // near-degenerate ratios and very large growth constants are worth a flag,
  // a finite grid cannot certify the global bounds anyway
  const double tiny = std::min(std::abs(rep.ratio_min), std::abs(rep.ratio_max));
  if (tiny < 1e-12 && rep.failures.empty())
    rep.warnings.push_back({"ratio_near_zero", grid.front(),
                            "|(mu1-mu0)/sigma| below 1e-12 somewhere on grid"});
  if (rep.K > 1e6)
    rep.warnings.push_back(
        {"growth_constant_large", grid.back(), "reported K exceeds 1e6"});

  rep.pass = rep.failures.empty();
  return rep;
}

}  // namespace qdet
