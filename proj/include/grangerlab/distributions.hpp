#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "grangerlab/errors.hpp"

// Reference distributions for the test statistics: regularized incomplete
// gamma and beta functions evaluated by series/continued-fraction expansions,
// plus the F, chi-square, and standard normal CDFs built on them.

namespace grangerlab {

namespace detail {

inline constexpr double kEps = 1e-15;
inline constexpr int kMaxIter = 500;

// P(a,x) by power series, valid for x < a+1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a,x) by modified Lentz continued fraction, valid for x >= a+1.
inline double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Continued fraction for the incomplete beta function.
inline double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a,x).
inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_cf(a, x);
}

/// Regularized upper incomplete gamma Q(a,x) = 1 - P(a,x).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_cf(a, x);
}

/// Regularized incomplete beta I_x(a,b).
inline double beta_inc(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || x < 0.0 || x > 1.0)
    return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                     a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

inline double chi2_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  return gamma_p(df / 2.0, x / 2.0);
}

inline double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return gamma_q(df / 2.0, x / 2.0);
}

inline double f_cdf(double x, double df1, double df2) {
  if (x <= 0.0) return 0.0;
  return beta_inc(df1 / 2.0, df2 / 2.0, df1 * x / (df1 * x + df2));
}

inline double f_sf(double x, double df1, double df2) {
  if (x <= 0.0) return 1.0;
  return beta_inc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Upper-tail quantile inversion by bisection on a survival function.
template <typename Sf>
inline double invert_sf(Sf sf, double alpha, double lo, double hi) {
  for (int i = 0; i < 200 && sf(hi) > alpha; ++i) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (sf(mid) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double chi2_quantile(double prob, double df) {
  return invert_sf([df](double x) { return chi2_sf(x, df); }, 1.0 - prob, 0.0,
                   df + 10.0);
}

inline double f_quantile(double prob, double df1, double df2) {
  return invert_sf([df1, df2](double x) { return f_sf(x, df1, df2); },
                   1.0 - prob, 0.0, 10.0);
}

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}.
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-14) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample KS test of `values` against Uniform(0,1); returns the p-value
/// with the Stephens small-sample correction.
inline double ks_uniform_pvalue(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "ks test: no values");
  std::sort(values.begin(), values.end());
  double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double cdf = std::clamp(values[i], 0.0, 1.0);
    double upper = (static_cast<double>(i) + 1.0) / n - cdf;
    double lower = cdf - static_cast<double>(i) / n;
    d = std::max({d, upper, lower});
  }
  double sqrt_n = std::sqrt(n);
  return kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
}

}  // namespace grangerlab
