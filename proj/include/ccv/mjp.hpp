#pragma once

// Continuous-time Markov jump processes: single-chain Gillespie stepping,
// the Metropolized coupled chain, and the time-average estimators built on
// top of them.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ccv/error.hpp"
#include "ccv/observable.hpp"
#include "ccv/random.hpp"

namespace ccv {

/// A simulable continuous-time Markov chain.
///
/// total_exit_rate(s) must equal the sum of event_rate(s, e) over every
/// event available in s, and apply(s, e) must be a deterministic function
/// of (s, e). site_value(s, i) exposes the per-site quantity observables
/// are built from.
template <class M>
concept JumpModel = requires(const M& m, typename M::State& s,
                             const typename M::State& cs,
                             const typename M::Event& e, Rng& rng,
                             std::size_t i) {
  { m.size() } -> std::convertible_to<std::size_t>;
  { m.total_exit_rate(cs) } -> std::convertible_to<double>;
  { m.sample_event(cs, rng) } -> std::same_as<typename M::Event>;
  { m.event_rate(cs, e) } -> std::convertible_to<double>;
  { m.site_value(cs, i) } -> std::convertible_to<double>;
  m.apply(s, e);
};

/// One resolved clock ring of the coupled process. An event with both
/// moves present is shared by the two copies.
template <class Event>
struct JointEvent {
  std::optional<Event> x_move;
  std::optional<Event> y_move;

  bool shared() const { return x_move.has_value() && y_move.has_value(); }
};

/// A coupling of a model to itself whose Y-moves are proposals for a
/// chain targeting an approximate stationary distribution Q.
///
/// acceptance_ratio(y, m) returns Z = Q(y') R(y|y') / (Q(y) R(y'|y)) for
/// the proposal y -> y' = apply(y, m). It may be +infinity when the reverse
/// proposal rate vanishes.
template <class C>
concept CouplingModel =
    JumpModel<typename C::Model> &&
    requires(const C& c, const typename C::Model::State& x,
             const typename C::Model::Event& e, Rng& rng) {
      { c.model() } -> std::same_as<const typename C::Model&>;
      { c.joint_total_rate(x, x) } -> std::convertible_to<double>;
      {
        c.sample_joint_event(x, x, rng)
      } -> std::same_as<JointEvent<typename C::Model::Event>>;
      { c.acceptance_ratio(x, e) } -> std::convertible_to<double>;
    };

template <class State>
struct CoupledChainState {
  State x;
  State y;
  double sim_time = 0.0;
  std::uint64_t proposals = 0;
  std::uint64_t rejections = 0;

  double rejection_rate() const {
    return proposals == 0 ? 0.0
                          : static_cast<double>(rejections) /
                                static_cast<double>(proposals);
  }
};

struct EstimatorConfig {
  double alpha = 1.0;
  // Weight each visited state by its mean holding time 1/R instead of the
  // sampled holding time. Only valid for static observables.
  bool use_mean_holding_times = false;
};

/// Running time integrals of a fixed set of channels.
class TimeAverageAccumulator {
 public:
  explicit TimeAverageAccumulator(std::size_t channels = 0)
      : integral_(channels, 0.0), square_integral_(channels, 0.0) {}

  void add(std::span<const double> values, double weight) {
    for (std::size_t k = 0; k < integral_.size(); ++k) {
      integral_[k] += values[k] * weight;
      square_integral_[k] += values[k] * values[k] * weight;
    }
    weight_ += weight;
  }

  void count_jump() { ++jumps_; }

  std::size_t channels() const { return integral_.size(); }
  double weight() const { return weight_; }
  std::uint64_t jumps() const { return jumps_; }
  double integral(std::size_t k) const { return integral_[k]; }

  double estimate(std::size_t k) const { return integral_[k] / weight_; }
  double second_moment(std::size_t k) const {
    return square_integral_[k] / weight_;
  }

 private:
  std::vector<double> integral_;
  std::vector<double> square_integral_;
  double weight_ = 0.0;
  std::uint64_t jumps_ = 0;
};

/// Samples the holding time, reports the pre-jump state to `on_hold`
/// as on_hold(state, holding_time, total_rate), then applies one event.
template <JumpModel M, class Engine, class OnHold>
double advance_single(const M& model, typename M::State& state, Engine& rng,
                      OnHold&& on_hold) {
  const double rate = model.total_exit_rate(state);
  if (!(rate > 0.0)) throw AbsorbingStateError("zero total exit rate");
  const double h = exponential(rng, rate);
  on_hold(std::as_const(state), h, rate);
  const auto event = model.sample_event(state, rng);
  model.apply(state, event);
  return h;
}

template <JumpModel M, class Engine>
double advance_single(const M& model, typename M::State& state, Engine& rng) {
  return advance_single(model, state, rng, [](const auto&, double, double) {});
}

/// One step of the coupled chain. The X-move is applied unconditionally;
/// the Y-move is accepted with probability min(Z, 1). on_hold receives
/// (x, y, holding_time, joint_rate) before the jump.
template <CouplingModel C, class Engine, class OnHold>
void advance_coupled(const C& coupling,
                     CoupledChainState<typename C::Model::State>& cs,
                     Engine& rng, OnHold&& on_hold) {
  const double rate = coupling.joint_total_rate(cs.x, cs.y);
  if (!(rate > 0.0)) throw AbsorbingStateError("zero joint exit rate");
  const double h = exponential(rng, rate);
  on_hold(std::as_const(cs.x), std::as_const(cs.y), h, rate);

  const auto event = coupling.sample_joint_event(cs.x, cs.y, rng);
  const auto& model = coupling.model();
  if (event.y_move) {
    ++cs.proposals;
    const double z = coupling.acceptance_ratio(cs.y, *event.y_move);
    if (z >= 1.0 || uniform01(rng) < z) {
      model.apply(cs.y, *event.y_move);
    } else {
      ++cs.rejections;
    }
  }
  if (event.x_move) model.apply(cs.x, *event.x_move);
  cs.sim_time += h;
}

template <CouplingModel C, class Engine>
void advance_coupled(const C& coupling,
                     CoupledChainState<typename C::Model::State>& cs,
                     Engine& rng) {
  advance_coupled(coupling, cs, rng,
                  [](const auto&, const auto&, double, double) {});
}

// ---------------------------------------------------------------------------
// Estimator runs

struct RunOptions {
  double t_final = 0.0;
  // Fraction of t_final simulated before accumulation starts.
  double burn_in_fraction = 0.1;
  std::size_t batches = 32;
  // Spacing of the uniform time grid on which estimator channels are
  // sampled for autocorrelation analysis; 0 disables sampling.
  double sample_spacing = 0.0;
};

/// Time-average summary of one channel over the accumulation window.
struct ChannelSummary {
  double mean = 0.0;
  double second_moment = 0.0;
  std::vector<double> batch_means;
  std::vector<double> batch_second_moments;
  std::vector<double> samples;

  // Stationary variance of the channel value.
  double variance() const {
    return std::max(0.0, second_moment - mean * mean);
  }
};

struct SimpleRun {
  std::vector<ChannelSummary> phi;  // one per observable
  double window = 0.0;              // accumulated simulated time
  double batch_duration = 0.0;
  double sample_spacing = 0.0;
  std::uint64_t jumps = 0;

  double estimate(std::size_t k) const { return phi[k].mean; }
};

struct CoupledRun {
  // phi(X) - alpha phi(Y) + alpha E_Q[phi], per observable.
  std::vector<ChannelSummary> estimator;
  std::vector<ChannelSummary> x_average;
  std::vector<ChannelSummary> y_average;
  double window = 0.0;
  double batch_duration = 0.0;
  double sample_spacing = 0.0;
  std::uint64_t jumps = 0;
  std::uint64_t proposals = 0;
  std::uint64_t rejections = 0;

  double estimate(std::size_t k) const { return estimator[k].mean; }
  double rejection_rate() const {
    return proposals == 0 ? 0.0
                          : static_cast<double>(rejections) /
                                static_cast<double>(proposals);
  }
};

namespace detail {

inline void validate(const RunOptions& opt, std::size_t observables) {
  if (!(opt.t_final > 0.0) || !std::isfinite(opt.t_final))
    throw ConfigError("t_final must be positive");
  if (!(opt.burn_in_fraction >= 0.0 && opt.burn_in_fraction < 1.0))
    throw ConfigError("burn_in_fraction must lie in [0,1)");
  if (opt.batches < 2) throw ConfigError("batches must be at least 2");
  if (!(opt.sample_spacing >= 0.0))
    throw ConfigError("sample_spacing must be nonnegative");
  if (observables == 0) throw ConfigError("no observables");
}

// Splits holding intervals over equal-duration batches of the window
// [t0, t1) and samples the first `grid_channels` channels on a uniform grid.
class WindowRecorder {
 public:
  WindowRecorder(std::size_t channels, std::size_t grid_channels,
                 const RunOptions& opt)
      : t0_(opt.burn_in_fraction * opt.t_final),
        t1_(opt.t_final),
        batch_duration_((t1_ - t0_) / static_cast<double>(opt.batches)),
        spacing_(opt.sample_spacing),
        batches_(opt.batches, TimeAverageAccumulator(channels)),
        samples_(grid_channels) {
    if (spacing_ > 0.0) {
      const auto n = static_cast<std::size_t>((t1_ - t0_) / spacing_) + 1;
      for (auto& s : samples_) s.reserve(n);
    }
  }

  double start() const { return t0_; }
  double end() const { return t1_; }
  double batch_duration() const { return batch_duration_; }

  // State with channel `values` held over [t, t + h). A non-empty
  // `jump_weight` replaces the elapsed-time weight.
  void hold(double t, double h, std::span<const double> values,
            std::optional<double> jump_weight) {
    sample_grid(t, t + h, values);
    if (jump_weight) {
      if (t >= t0_ && t < t1_) {
        auto& acc = batches_[batch_of(t)];
        acc.add(values, *jump_weight);
        acc.count_jump();
      }
      return;
    }
    double a = std::max(t, t0_);
    const double b = std::min(t + h, t1_);
    if (!(a < b)) return;
    std::size_t k = batch_of(a);
    batches_[k].count_jump();
    while (a < b) {
      const double edge =
          k + 1 == batches_.size()
              ? t1_
              : t0_ + static_cast<double>(k + 1) * batch_duration_;
      const double piece_end = std::min(b, edge);
      if (piece_end > a) batches_[k].add(values, piece_end - a);
      a = piece_end;
      if (k + 1 == batches_.size()) break;
      ++k;
    }
  }

  std::vector<ChannelSummary> summaries(std::size_t first,
                                        std::size_t count) const {
    std::vector<ChannelSummary> out(count);
    double total_weight = 0.0;
    for (const auto& acc : batches_) total_weight += acc.weight();
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t k = first + c;
      auto& s = out[c];
      double integral = 0.0;
      double square = 0.0;
      for (const auto& acc : batches_) {
        integral += acc.integral(k);
        square += acc.second_moment(k) * acc.weight();
        s.batch_means.push_back(acc.estimate(k));
        s.batch_second_moments.push_back(acc.second_moment(k));
      }
      s.mean = integral / total_weight;
      s.second_moment = square / total_weight;
      if (k < samples_.size()) s.samples = samples_[k];
    }
    return out;
  }

  std::uint64_t jumps() const {
    std::uint64_t n = 0;
    for (const auto& acc : batches_) n += acc.jumps();
    return n;
  }

 private:
  std::size_t batch_of(double t) const {
    const auto k = static_cast<std::size_t>((t - t0_) / batch_duration_);
    return std::min(k, batches_.size() - 1);
  }

  void sample_grid(double a, double b, std::span<const double> values) {
    if (spacing_ <= 0.0 || samples_.empty()) return;
    for (;;) {
      const double g = t0_ + static_cast<double>(grid_index_) * spacing_;
      if (g >= b || g >= t1_) return;
      if (g >= a) {
        for (std::size_t k = 0; k < samples_.size(); ++k)
          samples_[k].push_back(values[k]);
      }
      ++grid_index_;
    }
  }

  double t0_;
  double t1_;
  double batch_duration_;
  double spacing_;
  std::vector<TimeAverageAccumulator> batches_;
  std::vector<std::vector<double>> samples_;
  std::size_t grid_index_ = 0;
};

}  // namespace detail

/// Simple estimator: time average of each observable along one trajectory.
template <JumpModel M, class Engine>
SimpleRun run_simple(const M& model, typename M::State state,
                     std::span<const Observable> observables,
                     const RunOptions& options, const EstimatorConfig& config,
                     Engine& rng) {
  detail::validate(options, observables.size());
  if (!std::isfinite(config.alpha)) throw ConfigError("alpha must be finite");
  const std::size_t n = observables.size();
  detail::WindowRecorder recorder(n, n, options);
  std::vector<double> values(n);

  double t = 0.0;
  while (t < recorder.end()) {
    t += advance_single(
        model, state, rng, [&](const auto& s, double h, double rate) {
          for (std::size_t k = 0; k < n; ++k)
            values[k] = evaluate(model, s, observables[k]);
          recorder.hold(t, h, values,
                        config.use_mean_holding_times
                            ? std::optional<double>(1.0 / rate)
                            : std::nullopt);
        });
  }

  SimpleRun run;
  run.phi = recorder.summaries(0, n);
  run.window = recorder.end() - recorder.start();
  run.batch_duration = recorder.batch_duration();
  run.sample_spacing = options.sample_spacing;
  run.jumps = recorder.jumps();
  return run;
}

/// Coupling control variate estimator. `eq_expectations[k]` is E_Q of
/// observables[k] under the coupled chain's Y-marginal target.
template <CouplingModel C, class Engine>
CoupledRun run_coupled(const C& coupling,
                       CoupledChainState<typename C::Model::State> cstate,
                       std::span<const Observable> observables,
                       std::span<const double> eq_expectations,
                       const RunOptions& options,
                       const EstimatorConfig& config, Engine& rng) {
  detail::validate(options, observables.size());
  if (eq_expectations.size() != observables.size())
    throw ConfigError("an E_Q value is required for every observable");
  if (!std::isfinite(config.alpha)) throw ConfigError("alpha must be finite");
  const std::size_t n = observables.size();
  const double alpha = config.alpha;
  const auto& model = coupling.model();

  // Channels: estimator integrand, phi(X), phi(Y).
  detail::WindowRecorder recorder(3 * n, n, options);
  std::vector<double> values(3 * n);
  std::uint64_t window_proposals = 0;
  std::uint64_t window_rejections = 0;

  while (cstate.sim_time < recorder.end()) {
    const double t = cstate.sim_time;
    const bool in_window = t >= recorder.start();
    const auto p = cstate.proposals;
    const auto r = cstate.rejections;
    advance_coupled(
        coupling, cstate, rng,
        [&](const auto& x, const auto& y, double h, double rate) {
          for (std::size_t k = 0; k < n; ++k) {
            const double fx = evaluate(model, x, observables[k]);
            const double fy = evaluate(model, y, observables[k]);
            values[k] = (fx - alpha * fy) + alpha * eq_expectations[k];
            values[n + k] = fx;
            values[2 * n + k] = fy;
          }
          recorder.hold(t, h, values,
                        config.use_mean_holding_times
                            ? std::optional<double>(1.0 / rate)
                            : std::nullopt);
        });
    if (in_window && cstate.sim_time < recorder.end()) {
      window_proposals += cstate.proposals - p;
      window_rejections += cstate.rejections - r;
    }
  }

  CoupledRun run;
  run.estimator = recorder.summaries(0, n);
  run.x_average = recorder.summaries(n, n);
  run.y_average = recorder.summaries(2 * n, n);
  run.window = recorder.end() - recorder.start();
  run.batch_duration = recorder.batch_duration();
  run.sample_spacing = options.sample_spacing;
  run.jumps = recorder.jumps();
  run.proposals = window_proposals;
  run.rejections = window_rejections;
  return run;
}

}  // namespace ccv
