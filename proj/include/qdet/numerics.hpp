#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qdet/errors.hpp"

namespace qdet {

// ---------------------------------------------------------------------------
// grids
// ---------------------------------------------------------------------------

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
  std::vector<double> v = linspace(std::log(lo), std::log(hi), n);
  for (double& x : v) x = std::exp(x);
  return v;
}

// ---------------------------------------------------------------------------
// order-independent summation
// ---------------------------------------------------------------------------

// Pairwise (tree) sum over a fixed-length array. The reduction tree depends
// only on the length, so the result is identical no matter how the entries
// were produced (serial loop or parallel fill).
inline double pairwise_sum(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

// ---------------------------------------------------------------------------
// adaptive quadrature
// ---------------------------------------------------------------------------

namespace detail {

template <class F>
double simpson_rec(const F& f, double a, double fa, double b, double fb,
                   double m, double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) throw QuadratureFailure("adaptive Simpson: max depth reached");
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

template <class F>
double adaptive_simpson(const F& f, double a, double b, double abs_tol,
                        int max_depth = 48) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, fa, b, fb, m, fm, whole, abs_tol, max_depth);
}

// Gauss-Kronrod 15(7) pair on [-1,1].
namespace gk15 {
inline constexpr double nodes[8] = {
    0.0,
    0.2077849550078985,
    0.4058451513773972,
    0.5860872354676911,
    0.7415311855993944,
    0.8648644233597691,
    0.9491079123427585,
    0.9914553711208126,
};
inline constexpr double wk[8] = {
    0.2094821410847278,
    0.2044329400752989,
    0.1903505780647854,
    0.1690047266392679,
    0.1406532597155259,
    0.1047900103222502,
    0.0630920926299786,
    0.0229353220105292,
};
inline constexpr double wg[4] = {
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892767,
    0.1294849661688697,
};
}  // namespace gk15

struct GkResult {
  double value;
  double error;
};

template <class F>
GkResult gk15_segment(const F& f, double a, double b) {
  const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
  const double f0 = f(c);
  double kron = gk15::wk[0] * f0;
  double gauss = gk15::wg[0] * f0;
  for (int i = 1; i < 8; ++i) {
    const double dx = hw * gk15::nodes[i];
    const double fl = f(c - dx), fr = f(c + dx);
    kron += gk15::wk[i] * (fl + fr);
    if (i % 2 == 0) gauss += gk15::wg[i / 2] * (fl + fr);
  }
  kron *= hw;
  gauss *= hw;
  const double diff = std::abs(kron - gauss);
  // standard rescaled error estimate
  const double err = diff * std::min(1.0, std::pow(200.0 * diff / std::max(std::abs(kron), 1e-300), 1.5));
  return {kron, std::max(err, std::abs(kron) * 1e-16)};
}

// Globally adaptive Gauss-Kronrod: split the worst segment until the summed
// error estimate meets abs_tol (or rel_tol * |integral|). min_segments
// pre-splits the span so sharply localized integrands cannot fool the
// error estimate of a single coarse panel.
template <class F>
double adaptive_gk15(const F& f, double a, double b, double abs_tol,
                     double rel_tol = 1e-12, std::size_t max_segments = 2000,
                     std::size_t min_segments = 1) {
  if (a == b) return 0.0;
  struct Seg {
    double a, b, value, error;
  };
  std::vector<Seg> segs;
  min_segments = std::max<std::size_t>(min_segments, 1);
  for (std::size_t k = 0; k < min_segments; ++k) {
    const double sa = a + (b - a) * static_cast<double>(k) /
                              static_cast<double>(min_segments);
    const double sb = a + (b - a) * static_cast<double>(k + 1) /
                              static_cast<double>(min_segments);
    GkResult r = gk15_segment(f, sa, sb);
    segs.push_back({sa, sb, r.value, r.error});
  }
  while (true) {
    double total = 0.0, err = 0.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      total += segs[i].value;
      err += segs[i].error;
      if (segs[i].error > segs[worst].error) worst = i;
    }
    if (err <= std::max(abs_tol, rel_tol * std::abs(total))) return total;
    if (segs.size() >= max_segments)
      throw QuadratureFailure("adaptive GK15: segment budget exhausted");
    const Seg s = segs[worst];
    const double m = 0.5 * (s.a + s.b);
    GkResult rl = gk15_segment(f, s.a, m);
    GkResult rr = gk15_segment(f, m, s.b);
    segs[worst] = {s.a, m, rl.value, rl.error};
    segs.push_back({m, s.b, rr.value, rr.error});
  }
}

// ---------------------------------------------------------------------------
// scalar root finding
// ---------------------------------------------------------------------------

// Bisection on a bracketing interval [lo, hi] with f(lo), f(hi) of opposite
// sign. Stops when the interval is below x_tol. Returns the midpoint.
template <class F>
double bisect(const F& f, double lo, double hi, double flo, double x_tol,
              int max_iter = 200) {
  double mid = 0.5 * (lo + hi);
  for (int i = 0; i < max_iter && (hi - lo) > x_tol; ++i) {
    mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Cubic Hermite interpolation on an increasing node table with values and
// derivatives. Clamped evaluation outside the table range.
class HermiteTable {
 public:
  HermiteTable() = default;
  HermiteTable(std::vector<double> x, std::vector<double> f,
               std::vector<double> df)
      : x_(std::move(x)), f_(std::move(f)), df_(std::move(df)) {}

  bool empty() const { return x_.empty(); }
  double x_front() const { return x_.front(); }
  double x_back() const { return x_.back(); }

  double operator()(double x) const {
    if (x <= x_.front()) return f_.front() + df_.front() * (x - x_.front());
    if (x >= x_.back()) return f_.back() + df_.back() * (x - x_.back());
    const std::size_t j = seg(x);
    const double h = x_[j + 1] - x_[j];
    const double t = (x - x_[j]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f_[j] + (t3 - 2 * t2 + t) * h * df_[j] +
           (-2 * t3 + 3 * t2) * f_[j + 1] + (t3 - t2) * h * df_[j + 1];
  }

  double derivative(double x) const {
    if (x <= x_.front()) return df_.front();
    if (x >= x_.back()) return df_.back();
    const std::size_t j = seg(x);
    const double h = x_[j + 1] - x_[j];
    const double t = (x - x_[j]) / h;
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * f_[j] + (3 * t2 - 4 * t + 1) * h * df_[j] +
            (-6 * t2 + 6 * t) * f_[j + 1] + (3 * t2 - 2 * t) * h * df_[j + 1]) /
           h;
  }

 private:
  std::size_t seg(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t j = static_cast<std::size_t>(it - x_.begin());
    if (j == 0) return 0;
    if (j >= x_.size()) return x_.size() - 2;
    return j - 1;
  }

  std::vector<double> x_, f_, df_;
};

// Simple linear interpolation with flat extrapolation.
inline double interp_linear_flat(std::span<const double> x,
                                 std::span<const double> f, double xq) {
  if (xq <= x.front()) return f.front();
  if (xq >= x.back()) return f.back();
  auto it = std::upper_bound(x.begin(), x.end(), xq);
  const std::size_t j = static_cast<std::size_t>(it - x.begin()) - 1;
  const double t = (xq - x[j]) / (x[j + 1] - x[j]);
  return f[j] + t * (f[j + 1] - f[j]);
}

}  // namespace qdet
