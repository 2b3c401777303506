#pragma once

// Batched-means errors, autocorrelation times, control coefficients and the
// error-ratio decomposition used to compare estimators at equal simulated
// time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "ccv/mjp.hpp"

namespace ccv::stats {

/// A value with its standard error. `dof` is the number of degrees of
/// freedom behind the error estimate (0 when not applicable).
struct Estimate {
  double value = 0.0;
  double se = 0.0;
  std::size_t dof = 0;
};

struct BatchedSeries {
  std::vector<double> means;
  double batch_duration = 0.0;

  std::size_t batches() const { return means.size(); }
};

inline double sample_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Unbiased sample variance.
inline double sample_variance(std::span<const double> v) {
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

/// Standard error of the time average from equal-duration batch means:
/// sqrt(s^2 / B) with s^2 the sample variance of the B batch means.
inline double batched_standard_error(std::span<const double> batch_means) {
  if (batch_means.size() < 2)
    throw std::invalid_argument("batched_standard_error: need >= 2 batches");
  return std::sqrt(sample_variance(batch_means) /
                   static_cast<double>(batch_means.size()));
}

inline double batched_standard_error(const BatchedSeries& series) {
  return batched_standard_error(series.means);
}

inline Estimate mean_estimate(const ChannelSummary& c) {
  return {c.mean, batched_standard_error(c.batch_means),
          c.batch_means.size() - 1};
}

/// Stationary variance of a channel. The error comes from the batch series
/// of the linearization m2_b - 2 m m_b.
inline Estimate variance_estimate(const ChannelSummary& c) {
  std::vector<double> g(c.batch_means.size());
  for (std::size_t b = 0; b < g.size(); ++b)
    g[b] = c.batch_second_moments[b] - 2.0 * c.mean * c.batch_means[b];
  return {c.variance(), batched_standard_error(g), g.size() - 1};
}

/// Cov(f_i, f_j) from the channels of f_i f_j, f_i and f_j recorded over the
/// same batches. Delta-method error.
inline Estimate covariance_estimate(const ChannelSummary& product,
                                    const ChannelSummary& a,
                                    const ChannelSummary& b) {
  const std::size_t n = product.batch_means.size();
  if (a.batch_means.size() != n || b.batch_means.size() != n)
    throw std::invalid_argument("covariance_estimate: batch counts differ");
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k)
    g[k] = product.batch_means[k] - b.mean * a.batch_means[k] -
           a.mean * b.batch_means[k];
  return {product.mean - a.mean * b.mean, batched_standard_error(g), n - 1};
}

/// Correlation time implied by the Kubo variance formula
/// Var[estimate] = Var[phi] tau / T.
inline double kubo_tau(double estimator_variance, double t_total,
                       double var_phi) {
  if (!(var_phi > 0.0))
    throw std::invalid_argument("kubo_tau: observable variance must be > 0");
  return estimator_variance * t_total / var_phi;
}

struct AcfEstimate {
  std::vector<double> lags;  // time units
  std::vector<double> c;     // autocovariance
  std::vector<double> rho;   // c / c[0]
  double tau = 0.0;
  double tau_se = 0.0;
  std::size_t window = 0;    // number of lags summed
};

/// Integrated autocorrelation time of a series sampled at uniform `spacing`.
///
/// tau = spacing * (2 sum_{k<M} rho_k - rho_0), where M is the first lag
/// with rho_M < cutoff, capped at n/10. The error uses the large-sample
/// approximation Var(tau)/tau^2 = 2 (2M + 1) / n.
inline AcfEstimate direct_tau(std::span<const double> series, double spacing,
                              double cutoff = 0.05) {
  const std::size_t n = series.size();
  if (n < 100) throw std::invalid_argument(
        "direct_tau: series too short (need >= 100 grid samples; raise t_final or lower acf_spacing)");
  if (!(spacing > 0.0)) throw std::invalid_argument("direct_tau: bad spacing");
  const double m = sample_mean(series);
  std::vector<double> d(n);
  for (std::size_t t = 0; t < n; ++t) d[t] = series[t] - m;

  auto autocov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += d[t] * d[t + k];
    return s / static_cast<double>(n);
  };

  AcfEstimate acf;
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) throw std::invalid_argument("direct_tau: constant series");
  const std::size_t max_lag = std::max<std::size_t>(1, n / 10);
  acf.lags.push_back(0.0);
  acf.c.push_back(c0);
  acf.rho.push_back(1.0);
  double sum = 1.0;
  for (std::size_t k = 1; k < max_lag; ++k) {
    const double ck = autocov(k);
    const double rk = ck / c0;
    if (rk < cutoff) break;
    acf.lags.push_back(static_cast<double>(k) * spacing);
    acf.c.push_back(ck);
    acf.rho.push_back(rk);
    sum += rk;
  }
  acf.window = acf.rho.size();
  acf.tau = spacing * (2.0 * sum - 1.0);
  acf.tau_se = acf.tau * std::sqrt(2.0 * (2.0 * static_cast<double>(acf.window) + 1.0) /
                                   static_cast<double>(n));
  return acf;
}

/// e_N = coupled_se / simple_se at equal simulated time.
inline double error_ratio(double coupled_se, double simple_se) {
  if (!(simple_se > 0.0))
    throw std::invalid_argument("error_ratio: simple standard error is zero");
  return coupled_se / simple_se;
}

/// Error of e_N by the delta method, treating the two squared standard
/// errors as independent chi-square estimates with the given dof.
inline double error_ratio_se(double e, std::size_t coupled_dof,
                             std::size_t simple_dof) {
  return e * std::sqrt(0.5 / static_cast<double>(coupled_dof) +
                       0.5 / static_cast<double>(simple_dof));
}

struct ErrorFactors {
  double e_var = 0.0;
  double e_tau = 0.0;
};

inline ErrorFactors error_ratio_factors(double var_diff, double var_phi,
                                        double tau_couple, double tau) {
  if (!(var_phi > 0.0) || !(tau > 0.0))
    throw std::invalid_argument("error_ratio_factors: nonpositive denominator");
  if (var_diff < 0.0 || tau_couple < 0.0)
    throw std::invalid_argument("error_ratio_factors: negative numerator");
  return {std::sqrt(var_diff / var_phi), std::sqrt(tau_couple / tau)};
}

struct AlphaEstimate {
  double alpha = 0.0;
  // Var[X + alpha (EY - Y)] / Var[X] at the optimum, i.e. 1 - rho_XY^2.
  double residual_factor = 1.0;
};

inline AlphaEstimate optimal_alpha(std::span<const double> x,
                                   std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("optimal_alpha: need >= 2 paired samples");
  const double mx = sample_mean(x);
  const double my = sample_mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (!(syy > 0.0))
    throw std::invalid_argument("optimal_alpha: degenerate Y samples");
  AlphaEstimate out;
  out.alpha = sxy / syy;
  if (sxx > 0.0) out.residual_factor = std::max(0.0, 1.0 - sxy * sxy / (sxx * syy));
  return out;
}

/// Independently measured ingredients of the error ratio of one
/// observable: standard errors of both estimators, the stationary variances
/// of phi(X) and phi(X) - alpha phi(Y), and their integrated
/// autocorrelation times.
struct ErrorComponents {
  Estimate simple_se;   // value = standard error, dof = batch dof
  Estimate coupled_se;
  Estimate var_phi;
  Estimate var_diff;
  Estimate tau;
  Estimate tau_couple;
};

struct ErrorRatioReport {
  ErrorComponents parts;
  double e_n = 0.0;
  double e_n_se = 0.0;
  double e_var = 0.0;
  double e_var_se = 0.0;
  double e_tau = 0.0;
  double e_tau_se = 0.0;

  double product() const { return e_var * e_tau; }
  double product_se() const {
    if (e_var == 0.0 || e_tau == 0.0) return 0.0;
    return product() * std::hypot(e_var_se / e_var, e_tau_se / e_tau);
  }
};

namespace detail {
inline double relative(const Estimate& e) { return e.value > 0.0 ? e.se / e.value : 0.0; }
}  // namespace detail

inline ErrorRatioReport assemble_error_ratio(const ErrorComponents& c) {
  ErrorRatioReport r;
  r.parts = c;
  r.e_n = error_ratio(c.coupled_se.value, c.simple_se.value);
  r.e_n_se = error_ratio_se(r.e_n, c.coupled_se.dof, c.simple_se.dof);
  const auto f = error_ratio_factors(c.var_diff.value, c.var_phi.value,
                                     c.tau_couple.value, c.tau.value);
  r.e_var = f.e_var;
  r.e_tau = f.e_tau;
  r.e_var_se = 0.5 * r.e_var * std::hypot(detail::relative(c.var_diff), detail::relative(c.var_phi));
  r.e_tau_se = 0.5 * r.e_tau * std::hypot(detail::relative(c.tau_couple), detail::relative(c.tau));
  return r;
}

/// Measures the components from a simple-run channel and the matching
/// coupled estimator channel. Both must carry grid samples at `spacing`.
inline ErrorComponents measure_error_components(const ChannelSummary& simple,
                                                const ChannelSummary& coupled,
                                                double spacing,
                                                double acf_cutoff = 0.05) {
  ErrorComponents c;
  const Estimate ms = mean_estimate(simple);
  const Estimate mc = mean_estimate(coupled);
  c.simple_se = {ms.se, 0.0, ms.dof};
  c.coupled_se = {mc.se, 0.0, mc.dof};
  c.var_phi = variance_estimate(simple);
  c.var_diff = variance_estimate(coupled);
  const AcfEstimate acf_s = direct_tau(simple.samples, spacing, acf_cutoff);
  c.tau = {acf_s.tau, acf_s.tau_se, 0};
  if (c.var_diff.value > 0.0) {
    const AcfEstimate acf_c = direct_tau(coupled.samples, spacing, acf_cutoff);
    c.tau_couple = {acf_c.tau, acf_c.tau_se, 0};
  }
  return c;
}

inline ErrorRatioReport error_ratio_report(const ChannelSummary& simple,
                                           const ChannelSummary& coupled,
                                           double spacing,
                                           double acf_cutoff = 0.05) {
  return assemble_error_ratio(measure_error_components(simple, coupled, spacing, acf_cutoff));
}

/// Mean of independent replica estimates.
inline Estimate pool(std::span<const Estimate> xs) {
  Estimate out;
  double var = 0.0;
  for (const auto& x : xs) {
    out.value += x.value;
    var += x.se * x.se;
    out.dof += x.dof;
  }
  const auto r = static_cast<double>(xs.size());
  out.value /= r;
  out.se = std::sqrt(var) / r;
  return out;
}

/// Components of the replica-averaged estimators: standard errors of the
/// mean over replicas, averaged variances and correlation times.
inline ErrorComponents pool(std::span<const ErrorComponents> cs) {
  auto collect = [&](auto member) {
    std::vector<Estimate> v;
    for (const auto& c : cs) v.push_back(c.*member);
    return pool(v);
  };
  auto pool_se = [&](auto member) {
    double var = 0.0;
    std::size_t dof = 0;
    for (const auto& c : cs) {
      var += (c.*member).value * (c.*member).value;
      dof += (c.*member).dof;
    }
    return Estimate{std::sqrt(var) / static_cast<double>(cs.size()), 0.0, dof};
  };
  ErrorComponents out;
  out.simple_se = pool_se(&ErrorComponents::simple_se);
  out.coupled_se = pool_se(&ErrorComponents::coupled_se);
  out.var_phi = collect(&ErrorComponents::var_phi);
  out.var_diff = collect(&ErrorComponents::var_diff);
  out.tau = collect(&ErrorComponents::tau);
  out.tau_couple = collect(&ErrorComponents::tau_couple);
  return out;
}

}  // namespace ccv::stats
