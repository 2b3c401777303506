#pragma once

// Kipnis-Marchioro-Presutti energy-redistribution chain between two heat
// baths. Bond b in 0..N rings at rate 1: bond 0 resamples site 1 from the
// left bath, bond N resamples site N from the right bath, and an interior
// bond b splits the pooled energy of sites b and b+1 uniformly.
//
// Sites are stored 0-based: site i of the chain is energy[i - 1].

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ccv/error.hpp"
#include "ccv/mjp.hpp"
#include "ccv/observable.hpp"
#include "ccv/random.hpp"

namespace ccv::kmp {

struct Params {
  std::size_t n = 1;
  double t_left = 1.0;
  double t_right = 1.0;

  double beta_left() const { return 1.0 / t_left; }
  double beta_right() const { return 1.0 / t_right; }

  void validate() const {
    if (n < 1) throw ConfigError("kmp: N must be >= 1");
    if (!(t_left > 0.0) || !(t_right > 0.0) || !std::isfinite(t_left) ||
        !std::isfinite(t_right))
      throw ConfigError("kmp: bath temperatures must be finite and > 0");
  }
};

struct State {
  std::vector<double> energy;

  std::size_t size() const { return energy.size(); }
  friend bool operator==(const State&, const State&) = default;
};

/// Interior bonds carry a split fraction in [0,1]; bath bonds carry the
/// freshly drawn boundary energy.
struct Event {
  std::size_t bond = 0;
  double payload = 0.0;

  friend bool operator==(const Event&, const Event&) = default;
};

inline double temperature_profile(const Params& p, double x) {
  if (!(x > 0.0 && x < 1.0)) throw ConfigError("temperature_profile: x must lie in (0,1)");
  return p.t_left * (1.0 - x) + p.t_right * x;
}

/// Inverse temperatures of the product-of-exponentials distribution.
struct Profile {
  std::vector<double> beta;

  Profile() = default;
  explicit Profile(std::vector<double> values) : beta(std::move(values)) {
    for (double b : beta)
      if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("kmp: beta must be > 0");
  }

  std::size_t size() const { return beta.size(); }
};

/// beta_i = 1 / T(x_i) with x_i = i / (N + 1).
inline Profile local_equilibrium_profile(const Params& p) {
  std::vector<double> beta(p.n);
  for (std::size_t i = 0; i < p.n; ++i)
    beta[i] = 1.0 / temperature_profile(
                        p, static_cast<double>(i + 1) / static_cast<double>(p.n + 1));
  return Profile(std::move(beta));
}

/// Splits `sum` into (u sum, sum - u sum) so that the two parts add back to
/// `sum` exactly in floating point: the larger part is at least sum / 2, so
/// subtracting it from sum is exact.
inline std::pair<double, double> split_energy(double sum, double u) {
  double first = u * sum;
  const double second = sum - first;
  first = sum - second;
  return {first, second};
}

/// Energies after `e`. Interior bonds use split_energy, so the pair sum is
/// preserved bit for bit.
inline void apply_event(State& s, const Event& e) {
  auto& en = s.energy;
  const std::size_t n = en.size();
  if (e.bond == 0) {
    en[0] = e.payload;
  } else if (e.bond == n) {
    en[n - 1] = e.payload;
  } else {
    const auto [first, second] = split_energy(en[e.bond - 1] + en[e.bond], e.payload);
    en[e.bond - 1] = first;
    en[e.bond] = second;
  }
}

class Model {
 public:
  using State = kmp::State;
  using Event = kmp::Event;

  explicit Model(Params p) : params_(p) { params_.validate(); }

  const Params& params() const { return params_; }
  std::size_t size() const { return params_.n; }

  /// All energies equal to the mean bath temperature.
  State initial_state() const {
    return {std::vector<double>(params_.n, 0.5 * (params_.t_left + params_.t_right))};
  }

  double total_exit_rate(const State&) const { return static_cast<double>(params_.n + 1); }
  double event_rate(const State&, const Event& e) const { return e.bond <= params_.n ? 1.0 : 0.0; }

  template <class Engine>
  Event sample_event(const State&, Engine& rng) const {
    const std::size_t bonds = params_.n + 1;
    auto b = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(bonds));
    if (b >= bonds) b = bonds - 1;
    if (b == 0) return {b, exponential(rng, params_.beta_left())};
    if (b == params_.n) return {b, exponential(rng, params_.beta_right())};
    return {b, uniform01(rng)};
  }

  void apply(State& s, const Event& e) const { apply_event(s, e); }

  double site_value(const State& s, std::size_t i) const { return s.energy[i]; }

 private:
  Params params_;
};

/// Metropolis ratio for y -> y' = apply_event(y, e) under the product of
/// exponentials. Interior proposals are symmetric on the conserved-sum
/// segment, so only the density ratio of Q survives; bath proposals add the
/// ratio of bath densities.
inline double metropolis_ratio(const Event& e, const State& y, const State& y_next,
                               const Profile& q, const Params& p) {
  const std::size_t n = p.n;
  if (e.bond == 0)
    return std::exp((p.beta_left() - q.beta[0]) * (y_next.energy[0] - y.energy[0]));
  if (e.bond == n)
    return std::exp((p.beta_right() - q.beta[n - 1]) *
                    (y_next.energy[n - 1] - y.energy[n - 1]));
  const std::size_t i = e.bond - 1;
  const std::size_t j = e.bond;
  const double before = q.beta[i] * y.energy[i] + q.beta[j] * y.energy[j];
  const double after = q.beta[i] * y_next.energy[i] + q.beta[j] * y_next.energy[j];
  return std::exp(before - after);
}

inline std::vector<double> lte_expectations(const Profile& q,
                                            std::span<const Observable> observables) {
  std::vector<double> out;
  out.reserve(observables.size());
  for (const auto& obs : observables) {
    if (obs.first >= q.size() || (obs.second && *obs.second >= q.size()))
      throw ConfigError("kmp: observable site out of range");
    if (obs.second && *obs.second == obs.first)
      throw ConfigError("kmp: products must involve distinct sites");
    double e = 1.0 / q.beta[obs.first];
    if (obs.second) e /= q.beta[*obs.second];
    out.push_back(e);
  }
  return out;
}

/// Shared-randomness coupling: both copies see the same bond and the same
/// payload. Every joint event is shared.
class Coupling {
 public:
  using Model = kmp::Model;

  Coupling(Params p, Profile q) : model_(p), profile_(std::move(q)) {
    if (profile_.size() != p.n) throw ConfigError("kmp: profile length differs from N");
  }
  explicit Coupling(Params p) : Coupling(p, local_equilibrium_profile(p)) {}

  const Model& model() const { return model_; }
  const Profile& profile() const { return profile_; }
  const Params& params() const { return model_.params(); }

  double joint_total_rate(const State& x, const State&) const {
    return model_.total_exit_rate(x);
  }

  template <class Engine>
  JointEvent<Event> sample_joint_event(const State& x, const State&, Engine& rng) const {
    const Event e = model_.sample_event(x, rng);
    return {e, e};
  }

  // Evaluates the ratio on the two touched sites only.
  double acceptance_ratio(const State& y, const Event& e) const {
    const auto& p = params();
    const auto& en = y.energy;
    const std::size_t n = p.n;
    if (e.bond == 0)
      return std::exp((p.beta_left() - profile_.beta[0]) * (e.payload - en[0]));
    if (e.bond == n)
      return std::exp((p.beta_right() - profile_.beta[n - 1]) * (e.payload - en[n - 1]));
    const std::size_t i = e.bond - 1;
    const std::size_t j = e.bond;
    const auto [first, second] = split_energy(en[i] + en[j], e.payload);
    const double before = profile_.beta[i] * en[i] + profile_.beta[j] * en[j];
    const double after = profile_.beta[i] * first + profile_.beta[j] * second;
    return std::exp(before - after);
  }

 private:
  Model model_;
  Profile profile_;
};

}  // namespace ccv::kmp
