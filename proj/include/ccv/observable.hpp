#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "ccv/error.hpp"

namespace ccv {

/// A site value or the product of two site values. Indices are 0-based.
struct Observable {
  std::size_t first = 0;
  std::optional<std::size_t> second;

  static Observable site(std::size_t i) { return {i, std::nullopt}; }
  static Observable pair(std::size_t i, std::size_t j) { return {i, j}; }

  bool is_pair() const { return second.has_value(); }

  friend bool operator==(const Observable&, const Observable&) = default;
};

// Human-readable label with 1-based site numbers, e.g. "site:50", "pair:10:45".
inline std::string label(const Observable& obs) {
  std::string s = obs.is_pair() ? "pair:" : "site:";
  s += std::to_string(obs.first + 1);
  if (obs.is_pair()) s += ":" + std::to_string(*obs.second + 1);
  return s;
}

/// Maps a fractional position x in (0,1) to the 1-based site [xN],
/// clamped to 1..N. The small offset keeps products such as 0.29 * 100
/// from rounding down a whole site.
inline std::size_t site_index(double x, std::size_t n) {
  if (!(x > 0.0 && x < 1.0)) throw ConfigError("position must lie in (0,1)");
  auto i = static_cast<std::size_t>(std::floor(x * static_cast<double>(n) + 1e-9));
  if (i < 1) i = 1;
  if (i > n) i = n;
  return i;
}

template <class Model>
double evaluate(const Model& model, const typename Model::State& state,
                const Observable& obs) {
  const double v = model.site_value(state, obs.first);
  return obs.second ? v * model.site_value(state, *obs.second) : v;
}

}  // namespace ccv
