#pragma once

// Exact stationary solutions of small SSEP chains by a dense solve of the
// full 2^N-state generator. States are indexed by reading the occupation as
// a binary number with site 1 as the least significant bit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ccv/error.hpp"
#include "ccv/observable.hpp"
#include "ccv/ssep.hpp"

namespace ccv::oracle {

inline constexpr std::size_t kMaxSites = 12;

/// Dense generator: off-diagonal entries are jump rates, the diagonal holds
/// minus the total exit rate so every row sums to zero.
struct GeneratorMatrix {
  Eigen::MatrixXd rates;

  std::size_t states() const { return static_cast<std::size_t>(rates.rows()); }

  /// Builds the generator from off-diagonal rates (the diagonal of
  /// `off_diagonal` is ignored).
  static GeneratorMatrix from_rates(Eigen::MatrixXd off_diagonal) {
    off_diagonal.diagonal().setZero();
    const Eigen::VectorXd exit = off_diagonal.rowwise().sum();
    off_diagonal.diagonal() = -exit;
    return {std::move(off_diagonal)};
  }

  double max_row_sum() const { return rates.rowwise().sum().cwiseAbs().maxCoeff(); }
};

struct ExactStationary {
  std::vector<double> probability;
  double residual = 0.0;  // max |(pi G)_j|
};

inline ssep::State state_from_index(std::size_t index, std::size_t n) {
  ssep::State s = ssep::empty_state(n);
  for (std::size_t i = 0; i < n; ++i) s.occupation[i] = (index >> i) & 1u;
  return s;
}

inline std::size_t index_of(const ssep::State& s) {
  std::size_t index = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.occupation[i]) index |= std::size_t{1} << i;
  return index;
}

namespace detail {

inline void check_size(std::size_t n) {
  if (n < 1 || n > kMaxSites) throw ConfigError("oracle: N must lie in 1..12");
}

// Unlike simulation, a closed reservoir (both rates zero) is allowed here:
// the generator is still well defined.
inline void check_rates(const ssep::Params& p) {
  for (double r : {p.alpha, p.beta, p.gamma, p.delta})
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("oracle: rates must be finite and >= 0");
}

template <class Weight>
GeneratorMatrix assemble(const ssep::Params& p, Weight&& weight) {
  check_rates(p);
  check_size(p.n);
  const std::size_t count = std::size_t{1} << p.n;
  Eigen::MatrixXd off = Eigen::MatrixXd::Zero(count, count);
  for (std::size_t from = 0; from < count; ++from) {
    const ssep::State s = state_from_index(from, p.n);
    for (const auto& [move, rate] : ssep::enumerate_moves(s, p)) {
      ssep::State t = s;
      ssep::apply_move(t, move);
      off(from, index_of(t)) += rate * weight(move);
    }
  }
  return GeneratorMatrix::from_rates(std::move(off));
}

}  // namespace detail

inline GeneratorMatrix build_ssep_generator(const ssep::Params& p) {
  return detail::assemble(p, [](const ssep::Move&) { return 1.0; });
}

/// Generator of the Metropolized Y-chain: R(y'|y) min(Z, 1).
inline GeneratorMatrix build_metropolized_y_generator(const ssep::Params& p,
                                                      const ssep::Profile& q) {
  if (q.size() != p.n) throw ConfigError("oracle: profile length differs from N");
  return detail::assemble(
      p, [&](const ssep::Move& m) { return std::min(ssep::metropolis_ratio(m, q, p), 1.0); });
}

/// Solves pi G = 0 with sum(pi) = 1, replacing the last balance equation by
/// the normalization row.
inline ExactStationary stationary_distribution(const GeneratorMatrix& g) {
  const Eigen::Index n = g.rates.rows();
  Eigen::MatrixXd a = g.rates.transpose();
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (!(lu.rcond() > 1e-13))
    throw ReducibleChainError("oracle: generator is reducible or singular");
  const Eigen::VectorXd pi = lu.solve(rhs);

  ExactStationary out;
  out.probability.assign(pi.data(), pi.data() + n);
  out.residual = (pi.transpose() * g.rates).cwiseAbs().maxCoeff();
  if (pi.minCoeff() < -1e-12 || !(out.residual < 1e-8))
    throw ReducibleChainError("oracle: no unique stationary distribution");
  for (auto& v : out.probability) v = std::max(v, 0.0);
  return out;
}

template <class Fn>
double exact_expectation(const ExactStationary& pi, Fn&& phi_of_index) {
  double sum = 0.0;
  for (std::size_t k = 0; k < pi.probability.size(); ++k)
    sum += phi_of_index(k) * pi.probability[k];
  return sum;
}

/// E[phi] for a site or pair observable of an SSEP chain of `n` sites.
inline double exact_expectation(const ExactStationary& pi, std::size_t n,
                                const Observable& obs) {
  if (obs.first >= n || (obs.second && *obs.second >= n))
    throw ConfigError("oracle: observable site out of range");
  return exact_expectation(pi, [&](std::size_t index) {
    const double a = static_cast<double>((index >> obs.first) & 1u);
    return obs.second ? a * static_cast<double>((index >> *obs.second) & 1u) : a;
  });
}

/// Product-form probabilities of every enumerated state.
inline std::vector<double> product_distribution(const ssep::Profile& q) {
  const std::size_t n = q.size();
  detail::check_size(n);
  std::vector<double> out(std::size_t{1} << n);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = ssep::product_probability(state_from_index(k, n), q);
  return out;
}

/// max over pairs of |q(y) G(y,y') - q(y') G(y',y)|.
inline double detailed_balance_residual(const GeneratorMatrix& g, std::span<const double> q) {
  double worst = 0.0;
  const std::size_t n = g.states();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      worst = std::max(worst, std::abs(q[a] * g.rates(a, b) - q[b] * g.rates(b, a)));
  return worst;
}

}  // namespace ccv::oracle
