#pragma once

// Symmetric simple exclusion process on sites 1..N with particle
// reservoirs at both ends, its local-equilibrium product distribution, and
// the same-move self-coupling Metropolized towards that distribution.
//
// Sites are stored 0-based: site i of the chain is occupation[i - 1].

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "ccv/error.hpp"
#include "ccv/mjp.hpp"
#include "ccv/observable.hpp"
#include "ccv/random.hpp"

namespace ccv::ssep {

struct Params {
  std::size_t n = 1;
  double alpha = 0.0;  // left injection
  double beta = 0.0;   // left removal
  double gamma = 0.0;  // right removal
  double delta = 0.0;  // right injection

  double rho_left() const { return alpha / (alpha + beta); }
  double rho_right() const { return delta / (delta + gamma); }

  void validate() const {
    if (n < 1) throw ConfigError("ssep: N must be >= 1");
    for (double r : {alpha, beta, gamma, delta})
      if (!(r >= 0.0) || !std::isfinite(r))
        throw ConfigError("ssep: rates must be finite and >= 0");
    if (!(alpha + beta > 0.0)) throw ConfigError("ssep: alpha + beta must be > 0");
    if (!(delta + gamma > 0.0)) throw ConfigError("ssep: delta + gamma must be > 0");
  }
};

struct State {
  std::vector<std::uint8_t> occupation;

  std::size_t size() const { return occupation.size(); }
  std::size_t particles() const {
    std::size_t k = 0;
    for (auto s : occupation) k += s;
    return k;
  }
  friend bool operator==(const State&, const State&) = default;
};

inline State empty_state(std::size_t n) { return {std::vector<std::uint8_t>(n, 0)}; }

enum class MoveKind : std::uint8_t { Jump, InjectLeft, RemoveLeft, InjectRight, RemoveRight };

/// A move is identified by its bond and direction, or by its reservoir
/// action, never by particle identity.
struct Move {
  MoveKind kind = MoveKind::Jump;
  std::size_t site = 0;  // source site of a jump
  int direction = 0;     // +1 or -1 for jumps

  static Move jump(std::size_t from, int dir) { return {MoveKind::Jump, from, dir}; }
  static Move inject_left() { return {MoveKind::InjectLeft, 0, 0}; }
  static Move remove_left() { return {MoveKind::RemoveLeft, 0, 0}; }
  static Move inject_right() { return {MoveKind::InjectRight, 0, 0}; }
  static Move remove_right() { return {MoveKind::RemoveRight, 0, 0}; }

  std::size_t target() const {
    return direction > 0 ? site + 1 : site - 1;
  }

  friend bool operator==(const Move&, const Move&) = default;
};

inline constexpr double kJumpRate = 0.5;

inline double density_profile(const Params& p, double x) {
  if (!(x > 0.0 && x < 1.0)) throw ConfigError("density_profile: x must lie in (0,1)");
  return p.rho_left() * (1.0 - x) + p.rho_right() * x;
}

/// Site-wise Bernoulli means of the local-equilibrium product distribution.
struct Profile {
  std::vector<double> rho;

  Profile() = default;
  explicit Profile(std::vector<double> values) : rho(std::move(values)) {
    for (double r : rho)
      if (!(r > 0.0 && r < 1.0))
        throw ConfigError("ssep: degenerate profile (rho must lie in (0,1))");
  }

  std::size_t size() const { return rho.size(); }
  double odds(std::size_t i) const { return rho[i] / (1.0 - rho[i]); }
};

/// rho_i = rho(x_i) with x_i = i / (N + 1), i = 1..N.
inline Profile local_equilibrium_profile(const Params& p) {
  std::vector<double> rho(p.n);
  for (std::size_t i = 0; i < p.n; ++i)
    rho[i] = density_profile(p, static_cast<double>(i + 1) / static_cast<double>(p.n + 1));
  return Profile(std::move(rho));
}

inline double move_rate(const Move& m, const Params& p) {
  switch (m.kind) {
    case MoveKind::Jump: return kJumpRate;
    case MoveKind::InjectLeft: return p.alpha;
    case MoveKind::RemoveLeft: return p.beta;
    case MoveKind::InjectRight: return p.delta;
    case MoveKind::RemoveRight: return p.gamma;
  }
  return 0.0;
}

inline bool is_available(const Move& m, const State& s) {
  const auto& o = s.occupation;
  const std::size_t n = o.size();
  switch (m.kind) {
    case MoveKind::Jump:
      if (m.direction > 0 ? m.site + 1 >= n : m.site == 0) return false;
      return o[m.site] == 1 && o[m.target()] == 0;
    case MoveKind::InjectLeft: return o[0] == 0;
    case MoveKind::RemoveLeft: return o[0] == 1;
    case MoveKind::InjectRight: return o[n - 1] == 0;
    case MoveKind::RemoveRight: return o[n - 1] == 1;
  }
  return false;
}

inline void apply_move(State& s, const Move& m) {
  auto& o = s.occupation;
  switch (m.kind) {
    case MoveKind::Jump:
      o[m.site] = 0;
      o[m.target()] = 1;
      break;
    case MoveKind::InjectLeft: o[0] = 1; break;
    case MoveKind::RemoveLeft: o[0] = 0; break;
    case MoveKind::InjectRight: o.back() = 1; break;
    case MoveKind::RemoveRight: o.back() = 0; break;
  }
}

namespace detail {

// Candidate moves in canonical order: for each bond (b, b+1) the rightward
// then the leftward jump, then the four reservoir actions.
template <class Fn>
void for_each_candidate(std::size_t n, Fn&& fn) {
  for (std::size_t b = 0; b + 1 < n; ++b) {
    fn(Move::jump(b, +1));
    fn(Move::jump(b + 1, -1));
  }
  fn(Move::inject_left());
  fn(Move::remove_left());
  fn(Move::inject_right());
  fn(Move::remove_right());
}

inline double reservoir_rate(const std::vector<std::uint8_t>& o, const Params& p) {
  return (o.front() ? p.beta : p.alpha) + (o.back() ? p.gamma : p.delta);
}

}  // namespace detail

/// All moves available in `s` with positive rate, in canonical order.
inline std::vector<std::pair<Move, double>> enumerate_moves(const State& s,
                                                            const Params& p) {
  std::vector<std::pair<Move, double>> out;
  detail::for_each_candidate(s.size(), [&](const Move& m) {
    const double r = move_rate(m, p);
    if (r > 0.0 && is_available(m, s)) out.emplace_back(m, r);
  });
  return out;
}

class Model {
 public:
  using State = ssep::State;
  using Event = Move;

  explicit Model(Params p) : params_(p) { params_.validate(); }

  const Params& params() const { return params_; }
  std::size_t size() const { return params_.n; }
  State initial_state() const { return empty_state(params_.n); }

  double total_exit_rate(const State& s) const {
    const auto& o = s.occupation;
    std::size_t discordant = 0;
    for (std::size_t b = 0; b + 1 < o.size(); ++b) discordant += o[b] != o[b + 1];
    return kJumpRate * static_cast<double>(discordant) + detail::reservoir_rate(o, params_);
  }

  double event_rate(const State& s, const Move& m) const {
    return is_available(m, s) ? move_rate(m, params_) : 0.0;
  }

  template <class Engine>
  Move sample_event(const State& s, Engine& rng) const {
    const auto& o = s.occupation;
    std::size_t discordant = 0;
    for (std::size_t b = 0; b + 1 < o.size(); ++b) discordant += o[b] != o[b + 1];
    const double jump_total = kJumpRate * static_cast<double>(discordant);
    double u = uniform01(rng) * (jump_total + detail::reservoir_rate(o, params_));
    if (u < jump_total) {
      auto k = static_cast<std::size_t>(u / kJumpRate);
      if (k >= discordant) k = discordant - 1;
      for (std::size_t b = 0;; ++b) {
        if (o[b] != o[b + 1] && k-- == 0)
          return o[b] ? Move::jump(b, +1) : Move::jump(b + 1, -1);
      }
    }
    u -= jump_total;
    const double left = o.front() ? params_.beta : params_.alpha;
    if (u < left || (o.back() ? params_.gamma : params_.delta) <= 0.0)
      return o.front() ? Move::remove_left() : Move::inject_left();
    return o.back() ? Move::remove_right() : Move::inject_right();
  }

  void apply(State& s, const Move& m) const { apply_move(s, m); }

  double site_value(const State& s, std::size_t i) const { return s.occupation[i]; }

 private:
  Params params_;
};

/// Metropolis ratio of a Y-proposal under the product distribution:
/// Z = Q(y') R(y|y') / (Q(y) R(y'|y)).
///
/// A vanishing forward rate (the move is never proposed) yields +infinity;
/// a vanishing reverse rate yields 0.
inline double metropolis_ratio(const Move& m, const Profile& q, const Params& p) {
  const auto ratio = [](double odds, double reverse, double forward) {
    if (!(forward > 0.0)) return std::numeric_limits<double>::infinity();
    return odds * reverse / forward;
  };
  switch (m.kind) {
    case MoveKind::Jump: return q.odds(m.target()) / q.odds(m.site);
    case MoveKind::InjectLeft: return ratio(q.odds(0), p.beta, p.alpha);
    case MoveKind::RemoveLeft: return ratio(1.0 / q.odds(0), p.alpha, p.beta);
    case MoveKind::InjectRight: return ratio(q.odds(p.n - 1), p.gamma, p.delta);
    case MoveKind::RemoveRight: return ratio(1.0 / q.odds(p.n - 1), p.delta, p.gamma);
  }
  return 1.0;
}

/// Probability of `s` under the product distribution.
inline double product_probability(const State& s, const Profile& q) {
  double prob = 1.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    prob *= s.occupation[i] ? q.rho[i] : 1.0 - q.rho[i];
  return prob;
}

inline std::vector<double> lte_expectations(const Profile& q,
                                            std::span<const Observable> observables) {
  std::vector<double> out;
  out.reserve(observables.size());
  for (const auto& obs : observables) {
    if (obs.first >= q.size() || (obs.second && *obs.second >= q.size()))
      throw ConfigError("ssep: observable site out of range");
    double e = q.rho[obs.first];
    if (obs.second && *obs.second != obs.first) e *= q.rho[*obs.second];
    out.push_back(e);
  }
  return out;
}

/// Large-N limit of N Cov(sigma_[xN], sigma_[yN]) for 0 < x < y < 1.
inline double covariance_limit(const Params& p, double x, double y) {
  if (!(x > 0.0 && x < y && y < 1.0))
    throw ConfigError("covariance_limit: requires 0 < x < y < 1");
  const double d = p.rho_right() - p.rho_left();
  return -d * d * x * (1.0 - y);
}

/// Same-move coupling of two SSEP copies: every move available to either
/// copy rings once at its own rate and is applied to each copy that can
/// make it. Y-moves are Metropolized towards the product distribution.
class Coupling {
 public:
  using Model = ssep::Model;

  Coupling(Params p, Profile q) : model_(p), profile_(std::move(q)) {
    if (profile_.size() != p.n) throw ConfigError("ssep: profile length differs from N");
  }
  explicit Coupling(Params p) : Coupling(p, local_equilibrium_profile(p)) {}

  const Model& model() const { return model_; }
  const Profile& profile() const { return profile_; }
  const Params& params() const { return model_.params(); }

  double joint_total_rate(const State& x, const State& y) const {
    return kJumpRate * static_cast<double>(union_jumps(x, y)) + union_reservoir_rate(x, y);
  }

  template <class Engine>
  JointEvent<Move> sample_joint_event(const State& x, const State& y, Engine& rng) const {
    const auto& a = x.occupation;
    const auto& b = y.occupation;
    const std::size_t jumps = union_jumps(x, y);
    const double jump_total = kJumpRate * static_cast<double>(jumps);
    double u = uniform01(rng) * (jump_total + union_reservoir_rate(x, y));
    Move m;
    if (u < jump_total) {
      auto k = static_cast<std::size_t>(u / kJumpRate);
      if (k >= jumps) k = jumps - 1;
      for (std::size_t i = 0;; ++i) {
        const bool right = (a[i] & ~a[i + 1] & 1) | (b[i] & ~b[i + 1] & 1);
        if (right && k-- == 0) { m = Move::jump(i, +1); break; }
        const bool left = (~a[i] & a[i + 1] & 1) | (~b[i] & b[i + 1] & 1);
        if (left && k-- == 0) { m = Move::jump(i + 1, -1); break; }
      }
    } else {
      u -= jump_total;
      const auto& p = params();
      const std::pair<Move, double> reservoir[] = {
          {Move::inject_left(), (!a.front() || !b.front()) ? p.alpha : 0.0},
          {Move::remove_left(), (a.front() || b.front()) ? p.beta : 0.0},
          {Move::inject_right(), (!a.back() || !b.back()) ? p.delta : 0.0},
          {Move::remove_right(), (a.back() || b.back()) ? p.gamma : 0.0}};
      m = reservoir[0].first;
      for (const auto& [move, rate] : reservoir) {
        if (rate <= 0.0) continue;
        m = move;
        if (u < rate) break;
        u -= rate;
      }
    }
    JointEvent<Move> e;
    if (is_available(m, x)) e.x_move = m;
    if (is_available(m, y)) e.y_move = m;
    return e;
  }

  double acceptance_ratio(const State&, const Move& m) const {
    return metropolis_ratio(m, profile_, params());
  }

 private:
  static std::size_t union_jumps(const State& x, const State& y) {
    const auto& a = x.occupation;
    const auto& b = y.occupation;
    std::size_t k = 0;
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
      const unsigned right = (a[i] & ~a[i + 1] & 1) | (b[i] & ~b[i + 1] & 1);
      const unsigned left = (~a[i] & a[i + 1] & 1) | (~b[i] & b[i + 1] & 1);
      k += right + left;
    }
    return k;
  }

  double union_reservoir_rate(const State& x, const State& y) const {
    const auto& a = x.occupation;
    const auto& b = y.occupation;
    const auto& p = params();
    double r = 0.0;
    if (!a.front() || !b.front()) r += p.alpha;
    if (a.front() || b.front()) r += p.beta;
    if (!a.back() || !b.back()) r += p.delta;
    if (a.back() || b.back()) r += p.gamma;
    return r;
  }

  Model model_;
  Profile profile_;
};

/// Every joint event of the coupling at (x, y) with its rate.
inline std::vector<std::pair<JointEvent<Move>, double>> coupled_moves(const State& x,
                                                                      const State& y,
                                                                      const Params& p) {
  std::vector<std::pair<JointEvent<Move>, double>> out;
  detail::for_each_candidate(x.size(), [&](const Move& m) {
    const double r = move_rate(m, p);
    if (!(r > 0.0)) return;
    JointEvent<Move> e;
    if (is_available(m, x)) e.x_move = m;
    if (is_available(m, y)) e.y_move = m;
    if (e.x_move || e.y_move) out.emplace_back(e, r);
  });
  return out;
}

}  // namespace ccv::ssep
