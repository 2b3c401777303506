#pragma once

// Experiment runner behind the command-line tool: strict JSON config
// parsing, simple/coupled runs over replicas and system-size sweeps, and
// deterministic JSON/CSV reports.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ccv/error.hpp"
#include "ccv/kmp.hpp"
#include "ccv/mjp.hpp"
#include "ccv/observable.hpp"
#include "ccv/oracle.hpp"
#include "ccv/random.hpp"
#include "ccv/ssep.hpp"
#include "ccv/stats.hpp"

namespace ccv::experiment {

using Json = nlohmann::ordered_json;

enum class ModelKind { Ssep, Kmp };
enum class Estimators { Simple, Coupled, Both };

struct ObservableSpec {
  bool pair = false;
  double x = 0.0;
  double y = 0.0;  // pairs only
};

struct ExperimentConfig {
  ModelKind model = ModelKind::Ssep;
  std::size_t n = 0;
  ssep::Params ssep{0, 2.0, 0.1, 1.0, 0.3};
  kmp::Params kmp{0, 10.0, 100.0};
  double t_final = 0.0;
  double burn_in_fraction = 0.1;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  Estimators estimators = Estimators::Both;
  std::vector<ObservableSpec> observables;
  std::size_t batches = 32;
  std::vector<std::size_t> sweep;
  std::size_t replicas = 1;
  bool use_mean_holding_times = false;
  double acf_spacing = 1.0;
  double acf_cutoff = 0.05;
  std::string output = "ccv_out";

  bool wants_simple() const { return estimators != Estimators::Coupled; }
  bool wants_coupled() const { return estimators != Estimators::Simple; }
};

inline std::string to_string(ModelKind m) { return m == ModelKind::Ssep ? "ssep" : "kmp"; }
inline std::string to_string(Estimators e) {
  switch (e) {
    case Estimators::Simple: return "simple";
    case Estimators::Coupled: return "coupled";
    case Estimators::Both: return "both";
  }
  return "both";
}

/// Site-index form of an observable spec for a chain of `n` sites.
inline Observable resolve(const ObservableSpec& spec, std::size_t n, std::size_t position) {
  const std::size_t i = site_index(spec.x, n);
  if (!spec.pair) return Observable::site(i - 1);
  const std::size_t j = site_index(spec.y, n);
  if (i == j)
    throw ConfigError("observables[" + std::to_string(position) +
                      "]: pair positions map to the same site " + std::to_string(i) +
                      " at N=" + std::to_string(n));
  return Observable::pair(i - 1, j - 1);
}

inline std::vector<Observable> resolve_all(const ExperimentConfig& c, std::size_t n) {
  std::vector<Observable> out;
  for (std::size_t k = 0; k < c.observables.size(); ++k)
    out.push_back(resolve(c.observables[k], n, k));
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key)) throw ConfigError(where + "unknown key '" + key + "'");
}

inline double number(const Json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "'" + key + "' must be a number");
  return v.get<double>();
}

inline std::uint64_t unsigned_integer(const Json& obj, const std::string& key,
                                      const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned())
    throw ConfigError(where + "'" + key + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline bool boolean(const Json& obj, const std::string& key) {
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("'" + key + "' must be a boolean");
  return v.get<bool>();
}

inline std::string string(const Json& obj, const std::string& key) {
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

/// Checks every range constraint, including that pair observables stay
/// distinct at every system size the config will run.
inline void validate(const ExperimentConfig& c) {
  if (!(c.t_final > 0.0) || !std::isfinite(c.t_final)) throw ConfigError("'t_final' must be > 0");
  if (!(c.burn_in_fraction >= 0.0 && c.burn_in_fraction < 1.0))
    throw ConfigError("'burn_in_fraction' must lie in [0,1)");
  if (!std::isfinite(c.alpha)) throw ConfigError("'alpha' must be finite");
  if (c.batches < 2) throw ConfigError("'batches' must be >= 2");
  if (c.replicas < 1) throw ConfigError("'replicas' must be >= 1");
  if (!(c.acf_spacing > 0.0)) throw ConfigError("'acf_spacing' must be > 0");
  if (!(c.acf_cutoff > 0.0 && c.acf_cutoff < 1.0)) throw ConfigError("'acf_cutoff' must lie in (0,1)");
  if (c.observables.empty()) throw ConfigError("'observables' must be a nonempty list");
  if (c.output.empty()) throw ConfigError("'output' must be nonempty");

  std::vector<std::size_t> sizes = c.sweep;
  if (c.n > 0) sizes.push_back(c.n);
  if (sizes.empty()) throw ConfigError("'N' is required");
  for (std::size_t n : sizes) {
    if (n < 1) throw ConfigError("'N' must be >= 1");
    if (c.model == ModelKind::Ssep) {
      auto p = c.ssep;
      p.n = n;
      p.validate();
      if (!(p.rho_left() > 0.0 && p.rho_left() < 1.0 && p.rho_right() > 0.0 &&
            p.rho_right() < 1.0))
        throw ConfigError("'params': reservoir densities must lie strictly in (0,1)");
    } else {
      auto p = c.kmp;
      p.n = n;
      p.validate();
    }
    for (std::size_t k = 0; k < c.observables.size(); ++k) {
      const Observable obs = resolve(c.observables[k], n, k);
      if (c.model == ModelKind::Kmp && obs.is_pair() && obs.first == *obs.second)
        throw ConfigError("observables[" + std::to_string(k) + "]: pair sites must differ");
    }
  }
}

/// Parses a config document. Unknown keys are rejected; omitted keys take
/// the defaults of ExperimentConfig.
inline ExperimentConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(doc,
                         {"model", "N", "params", "t_final", "burn_in_fraction", "seed", "alpha",
                          "estimators", "observables", "batches", "sweep", "replicas",
                          "use_mean_holding_times", "acf_spacing", "acf_cutoff", "output"},
                         "");
  for (const char* key : {"model", "t_final", "seed", "observables"})
    if (!doc.contains(key)) throw ConfigError(std::string("missing required key '") + key + "'");

  ExperimentConfig c;
  const std::string model = detail::string(doc, "model");
  if (model == "ssep") c.model = ModelKind::Ssep;
  else if (model == "kmp") c.model = ModelKind::Kmp;
  else throw ConfigError("'model' must be \"ssep\" or \"kmp\"");

  if (doc.contains("N")) {
    c.n = detail::unsigned_integer(doc, "N", "");
    if (c.n == 0) throw ConfigError("'N' must be >= 1");
  }
  if (doc.contains("params")) {
    const auto& p = doc.at("params");
    if (!p.is_object()) throw ConfigError("'params' must be an object");
    if (c.model == ModelKind::Ssep) {
      detail::reject_unknown(p, {"alpha", "beta", "gamma", "delta"}, "params: ");
      if (p.contains("alpha")) c.ssep.alpha = detail::number(p, "alpha", "params: ");
      if (p.contains("beta")) c.ssep.beta = detail::number(p, "beta", "params: ");
      if (p.contains("gamma")) c.ssep.gamma = detail::number(p, "gamma", "params: ");
      if (p.contains("delta")) c.ssep.delta = detail::number(p, "delta", "params: ");
    } else {
      detail::reject_unknown(p, {"T_L", "T_R"}, "params: ");
      if (p.contains("T_L")) c.kmp.t_left = detail::number(p, "T_L", "params: ");
      if (p.contains("T_R")) c.kmp.t_right = detail::number(p, "T_R", "params: ");
    }
  }
  c.t_final = detail::number(doc, "t_final", "");
  c.seed = detail::unsigned_integer(doc, "seed", "");
  if (doc.contains("burn_in_fraction")) c.burn_in_fraction = detail::number(doc, "burn_in_fraction", "");
  if (doc.contains("alpha")) c.alpha = detail::number(doc, "alpha", "");
  if (doc.contains("estimators")) {
    const std::string e = detail::string(doc, "estimators");
    if (e == "simple") c.estimators = Estimators::Simple;
    else if (e == "coupled") c.estimators = Estimators::Coupled;
    else if (e == "both") c.estimators = Estimators::Both;
    else throw ConfigError("'estimators' must be \"simple\", \"coupled\" or \"both\"");
  }
  const auto& obs = doc.at("observables");
  if (!obs.is_array()) throw ConfigError("'observables' must be a list");
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const std::string where = "observables[" + std::to_string(k) + "]: ";
    const auto& o = obs[k];
    if (!o.is_object()) throw ConfigError(where + "must be an object");
    detail::reject_unknown(o, {"kind", "x", "y"}, where);
    if (!o.contains("kind") || !o.at("kind").is_string())
      throw ConfigError(where + "'kind' must be \"site\" or \"pair\"");
    ObservableSpec spec;
    const std::string kind = o.at("kind").get<std::string>();
    if (kind == "pair") spec.pair = true;
    else if (kind != "site") throw ConfigError(where + "'kind' must be \"site\" or \"pair\"");
    if (!o.contains("x")) throw ConfigError(where + "missing 'x'");
    spec.x = detail::number(o, "x", where);
    if (spec.pair) {
      if (!o.contains("y")) throw ConfigError(where + "missing 'y'");
      spec.y = detail::number(o, "y", where);
    } else if (o.contains("y")) {
      throw ConfigError(where + "'y' only applies to pairs");
    }
    if (!(spec.x > 0.0 && spec.x < 1.0) || (spec.pair && !(spec.y > 0.0 && spec.y < 1.0)))
      throw ConfigError(where + "positions must lie in (0,1)");
    c.observables.push_back(spec);
  }
  if (doc.contains("batches")) c.batches = detail::unsigned_integer(doc, "batches", "");
  if (doc.contains("sweep")) {
    const auto& s = doc.at("sweep");
    if (!s.is_array() || s.empty()) throw ConfigError("'sweep' must be a nonempty list of N values");
    for (const auto& v : s) {
      if (!v.is_number_unsigned() || v.get<std::size_t>() == 0)
        throw ConfigError("'sweep' entries must be positive integers");
      c.sweep.push_back(v.get<std::size_t>());
    }
  }
  if (doc.contains("replicas")) c.replicas = detail::unsigned_integer(doc, "replicas", "");
  if (doc.contains("use_mean_holding_times"))
    c.use_mean_holding_times = detail::boolean(doc, "use_mean_holding_times");
  if (doc.contains("acf_spacing")) c.acf_spacing = detail::number(doc, "acf_spacing", "");
  if (doc.contains("acf_cutoff")) c.acf_cutoff = detail::number(doc, "acf_cutoff", "");
  if (doc.contains("output")) c.output = detail::string(doc, "output");
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Normalized config with every default filled in.
inline Json config_echo(const ExperimentConfig& c) {
  Json j;
  j["model"] = to_string(c.model);
  if (c.n > 0) j["N"] = c.n;
  if (c.model == ModelKind::Ssep)
    j["params"] = {{"alpha", c.ssep.alpha}, {"beta", c.ssep.beta},
                   {"gamma", c.ssep.gamma}, {"delta", c.ssep.delta}};
  else
    j["params"] = {{"T_L", c.kmp.t_left}, {"T_R", c.kmp.t_right}};
  j["t_final"] = c.t_final;
  j["burn_in_fraction"] = c.burn_in_fraction;
  j["seed"] = c.seed;
  j["alpha"] = c.alpha;
  j["estimators"] = to_string(c.estimators);
  Json obs = Json::array();
  for (const auto& o : c.observables) {
    Json e = {{"kind", o.pair ? "pair" : "site"}, {"x", o.x}};
    if (o.pair) e["y"] = o.y;
    obs.push_back(e);
  }
  j["observables"] = obs;
  j["batches"] = c.batches;
  if (!c.sweep.empty()) j["sweep"] = c.sweep;
  j["replicas"] = c.replicas;
  j["use_mean_holding_times"] = c.use_mean_holding_times;
  j["acf_spacing"] = c.acf_spacing;
  j["acf_cutoff"] = c.acf_cutoff;
  return j;
}

// ---------------------------------------------------------------------------
// Running

struct ObservableResult {
  ObservableSpec spec;
  Observable observable;
  double eq_expectation = 0.0;
  std::optional<stats::Estimate> simple;
  std::optional<stats::Estimate> coupled;
  std::optional<stats::Estimate> x_average;
  std::optional<stats::Estimate> y_average;
  std::optional<stats::ErrorComponents> components;
  std::optional<stats::ErrorRatioReport> ratio;
  std::optional<stats::AlphaEstimate> optimal_alpha;
  // Batch means per estimator, for the batch CSV.
  std::vector<double> simple_batches;
  std::vector<double> coupled_batches;
  std::vector<double> x_batches;
  std::vector<double> y_batches;
};

struct RunReport {
  std::size_t n = 0;
  std::size_t replica = 0;
  std::uint64_t seed = 0;
  double batch_duration = 0.0;
  double window_start = 0.0;
  std::vector<ObservableResult> observables;
  std::uint64_t simple_jumps = 0;
  std::uint64_t coupled_jumps = 0;
  std::uint64_t proposals = 0;
  std::uint64_t rejections = 0;
  double wall_seconds = 0.0;

  double rejection_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(rejections) / static_cast<double>(proposals);
  }
};

/// Replica-pooled summary of one system size.
struct PointReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<RunReport> replicas;
  std::vector<ObservableResult> combined;  // batch vectors left empty
  double rejection_rate = 0.0;
};

/// Seed of sweep point `point` (0 for a plain run) and of its replicas;
/// the simple and coupled runs of a replica use streams 0 and 1.
inline std::uint64_t point_seed(std::uint64_t master, std::size_t point) {
  return derive_seed(master, point);
}
inline std::uint64_t replica_seed(std::uint64_t point, std::size_t replica) {
  return derive_seed(point, replica);
}

namespace detail {

inline RunOptions run_options(const ExperimentConfig& c, bool sample) {
  RunOptions o;
  o.t_final = c.t_final;
  o.burn_in_fraction = c.burn_in_fraction;
  o.batches = c.batches;
  o.sample_spacing = sample ? c.acf_spacing : 0.0;
  return o;
}

template <class Coupling>
RunReport run_replica(const ExperimentConfig& c, const Coupling& coupling,
                      const typename Coupling::Model::State& initial,
                      const std::vector<Observable>& observables,
                      const std::vector<double>& eq, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  const bool both = c.wants_simple() && c.wants_coupled();
  const RunOptions opt = run_options(c, both);
  const EstimatorConfig est{c.alpha, c.use_mean_holding_times};

  RunReport report;
  report.n = coupling.model().size();
  report.seed = seed;
  report.window_start = c.burn_in_fraction * c.t_final;
  report.observables.resize(observables.size());
  for (std::size_t k = 0; k < observables.size(); ++k) {
    report.observables[k].spec = c.observables[k];
    report.observables[k].observable = observables[k];
    report.observables[k].eq_expectation = eq[k];
  }

  std::optional<SimpleRun> simple;
  std::optional<CoupledRun> coupled;
  if (c.wants_simple()) {
    Rng rng(derive_seed(seed, 0, 0));
    simple = run_simple(coupling.model(), initial, observables, opt, est, rng);
    report.simple_jumps = simple->jumps;
    report.batch_duration = simple->batch_duration;
  }
  if (c.wants_coupled()) {
    Rng rng(derive_seed(seed, 0, 1));
    CoupledChainState<typename Coupling::Model::State> cs{initial, initial};
    coupled = run_coupled(coupling, cs, observables, eq, opt, est, rng);
    report.coupled_jumps = coupled->jumps;
    report.proposals = coupled->proposals;
    report.rejections = coupled->rejections;
    report.batch_duration = coupled->batch_duration;
  }

  for (std::size_t k = 0; k < observables.size(); ++k) {
    auto& r = report.observables[k];
    if (simple) {
      r.simple = stats::mean_estimate(simple->phi[k]);
      r.simple_batches = simple->phi[k].batch_means;
    }
    if (coupled) {
      r.coupled = stats::mean_estimate(coupled->estimator[k]);
      r.x_average = stats::mean_estimate(coupled->x_average[k]);
      r.y_average = stats::mean_estimate(coupled->y_average[k]);
      r.coupled_batches = coupled->estimator[k].batch_means;
      r.x_batches = coupled->x_average[k].batch_means;
      r.y_batches = coupled->y_average[k].batch_means;
      try {
        r.optimal_alpha = stats::optimal_alpha(r.x_batches, r.y_batches);
      } catch (const std::invalid_argument&) {
      }
    }
    if (simple && coupled) {
      r.components = stats::measure_error_components(simple->phi[k], coupled->estimator[k],
                                                     c.acf_spacing, c.acf_cutoff);
      r.ratio = stats::assemble_error_ratio(*r.components);
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

inline RunReport run_point_replica(const ExperimentConfig& c, std::size_t n,
                                   std::uint64_t seed) {
  const auto observables = resolve_all(c, n);
  if (c.model == ModelKind::Ssep) {
    auto p = c.ssep;
    p.n = n;
    const ssep::Coupling coupling(p);
    const auto eq = ssep::lte_expectations(coupling.profile(), observables);
    return run_replica(c, coupling, coupling.model().initial_state(), observables, eq, seed);
  }
  auto p = c.kmp;
  p.n = n;
  const kmp::Coupling coupling(p);
  const auto eq = kmp::lte_expectations(coupling.profile(), observables);
  return run_replica(c, coupling, coupling.model().initial_state(), observables, eq, seed);
}

inline std::vector<ObservableResult> combine(const std::vector<RunReport>& replicas) {
  std::vector<ObservableResult> out;
  const std::size_t count = replicas.front().observables.size();
  for (std::size_t k = 0; k < count; ++k) {
    const auto& first = replicas.front().observables[k];
    ObservableResult r;
    r.spec = first.spec;
    r.observable = first.observable;
    r.eq_expectation = first.eq_expectation;
    auto pool_field = [&](auto member) -> std::optional<stats::Estimate> {
      std::vector<stats::Estimate> xs;
      for (const auto& rep : replicas)
        if ((rep.observables[k].*member)) xs.push_back(*(rep.observables[k].*member));
      if (xs.empty()) return std::nullopt;
      return stats::pool(xs);
    };
    r.simple = pool_field(&ObservableResult::simple);
    r.coupled = pool_field(&ObservableResult::coupled);
    r.x_average = pool_field(&ObservableResult::x_average);
    r.y_average = pool_field(&ObservableResult::y_average);
    std::vector<stats::ErrorComponents> parts;
    for (const auto& rep : replicas)
      if (rep.observables[k].components) parts.push_back(*rep.observables[k].components);
    if (!parts.empty()) {
      r.components = stats::pool(parts);
      r.ratio = stats::assemble_error_ratio(*r.components);
    }
    std::vector<double> xb, yb;
    for (const auto& rep : replicas) {
      xb.insert(xb.end(), rep.observables[k].x_batches.begin(), rep.observables[k].x_batches.end());
      yb.insert(yb.end(), rep.observables[k].y_batches.begin(), rep.observables[k].y_batches.end());
    }
    if (xb.size() >= 2) {
      try {
        r.optimal_alpha = stats::optimal_alpha(xb, yb);
      } catch (const std::invalid_argument&) {
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Number of worker threads: CCV_THREADS if set, else the hardware count.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("CCV_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `count` independent tasks on a small worker pool; the first
/// exception is rethrown after all workers stop.
template <class Task>
void parallel_for(std::size_t count, Task&& task) {
  const std::size_t workers = std::min(worker_count(), count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

class PointError : public std::runtime_error {
 public:
  PointError(std::size_t n, const std::string& what)
      : std::runtime_error("run at N=" + std::to_string(n) + " failed: " + what), n_(n) {}
  std::size_t n() const { return n_; }

 private:
  std::size_t n_;
};

/// Runs every (system size, replica) task and pools replicas per size.
inline std::vector<PointReport> run_points(const ExperimentConfig& c,
                                           const std::vector<std::size_t>& sizes) {
  validate(c);
  std::vector<PointReport> points(sizes.size());
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    points[p].n = sizes[p];
    points[p].seed = point_seed(c.seed, p);
    points[p].replicas.resize(c.replicas);
  }
  detail::parallel_for(sizes.size() * c.replicas, [&](std::size_t task) {
    const std::size_t p = task / c.replicas;
    const std::size_t r = task % c.replicas;
    const std::uint64_t seed = replica_seed(points[p].seed, r);
    try {
      auto report = detail::run_point_replica(c, sizes[p], seed);
      report.replica = r;
      points[p].replicas[r] = std::move(report);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw PointError(sizes[p], e.what());
    }
  });
  for (auto& point : points) {
    point.combined = detail::combine(point.replicas);
    std::uint64_t prop = 0, rej = 0;
    for (const auto& r : point.replicas) {
      prop += r.proposals;
      rej += r.rejections;
    }
    point.rejection_rate = prop == 0 ? 0.0 : static_cast<double>(rej) / static_cast<double>(prop);
  }
  return points;
}

// ---------------------------------------------------------------------------
// Output

/// JSON text with doubles printed to 17 significant digits; non-finite
/// values become null.
inline void write_json(std::ostream& os, const Json& j, int level = 0) {
  const std::string pad(static_cast<std::size_t>(2 * (level + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(2 * level), ' ');
  if (j.is_object()) {
    if (j.empty()) { os << "{}"; return; }
    os << "{\n";
    bool first = true;
    for (const auto& [key, value] : j.items()) {
      if (!first) os << ",\n";
      first = false;
      os << pad << Json(key).dump() << ": ";
      write_json(os, value, level + 1);
    }
    os << "\n" << close_pad << "}";
  } else if (j.is_array()) {
    if (j.empty()) { os << "[]"; return; }
    os << "[\n";
    for (std::size_t k = 0; k < j.size(); ++k) {
      if (k) os << ",\n";
      os << pad;
      write_json(os, j[k], level + 1);
    }
    os << "\n" << close_pad << "]";
  } else if (j.is_number_float()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) { os << "null"; return; }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  } else {
    os << j.dump();
  }
}

inline std::string csv_number(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline Json to_json(const stats::Estimate& e) {
  return {{"estimate", e.value}, {"se", e.se}};
}

inline Json to_json(const ObservableResult& r) {
  Json j;
  j["label"] = label(r.observable);
  j["kind"] = r.spec.pair ? "pair" : "site";
  j["x"] = r.spec.x;
  if (r.spec.pair) j["y"] = r.spec.y;
  Json sites = Json::array({r.observable.first + 1});
  if (r.observable.second) sites.push_back(*r.observable.second + 1);
  j["sites"] = sites;
  j["eq_expectation"] = r.eq_expectation;
  j["simple"] = r.simple ? to_json(*r.simple) : Json(nullptr);
  if (r.coupled) {
    Json c = to_json(*r.coupled);
    c["x_average"] = r.x_average->value;
    c["x_average_se"] = r.x_average->se;
    c["y_average"] = r.y_average->value;
    c["y_average_se"] = r.y_average->se;
    j["coupled"] = c;
  } else {
    j["coupled"] = nullptr;
  }
  if (r.ratio) {
    const auto& e = *r.ratio;
    j["e_N"] = e.e_n;
    j["e_N_se"] = e.e_n_se;
    j["e_var"] = e.e_var;
    j["e_var_se"] = e.e_var_se;
    j["e_tau"] = e.e_tau;
    j["e_tau_se"] = e.e_tau_se;
    j["var_phi"] = e.parts.var_phi.value;
    j["var_diff"] = e.parts.var_diff.value;
    j["tau"] = e.parts.tau.value;
    j["tau_couple"] = e.parts.tau_couple.value;
  } else {
    for (const char* key : {"e_N", "e_N_se", "e_var", "e_var_se", "e_tau", "e_tau_se"})
      j[key] = nullptr;
  }
  j["optimal_alpha"] = r.optimal_alpha ? Json(r.optimal_alpha->alpha) : Json(nullptr);
  return j;
}

inline Json to_json(const RunReport& r) {
  Json j;
  j["replica"] = r.replica;
  j["seed"] = r.seed;
  j["N"] = r.n;
  j["batch_duration"] = r.batch_duration;
  j["jumps"] = {{"simple", r.simple_jumps}, {"coupled", r.coupled_jumps}};
  j["proposals"] = r.proposals;
  j["rejections"] = r.rejections;
  j["rejection_rate"] = r.rejection_rate();
  Json obs = Json::array();
  for (const auto& o : r.observables) obs.push_back(to_json(o));
  j["observables"] = obs;
  return j;
}

inline Json to_json(const PointReport& p) {
  Json j;
  j["N"] = p.n;
  j["seed"] = p.seed;
  j["rejection_rate"] = p.rejection_rate;
  Json reps = Json::array();
  for (const auto& r : p.replicas) reps.push_back(to_json(r));
  j["replicas"] = reps;
  Json comb = Json::array();
  for (const auto& o : p.combined) comb.push_back(to_json(o));
  j["combined"] = comb;
  return j;
}

/// Long-format batch means of one replica:
/// observable,estimator,batch,batch_start,batch_end,mean
inline std::string batch_csv(const RunReport& r) {
  std::ostringstream os;
  os << "observable,estimator,batch,batch_start,batch_end,mean\n";
  for (const auto& o : r.observables) {
    const auto emit = [&](const char* name, const std::vector<double>& batches) {
      for (std::size_t b = 0; b < batches.size(); ++b) {
        const double start = r.window_start + static_cast<double>(b) * r.batch_duration;
        os << label(o.observable) << ',' << name << ',' << b << ',' << csv_number(start) << ','
           << csv_number(start + r.batch_duration) << ',' << csv_number(batches[b]) << '\n';
      }
    };
    emit("simple", o.simple_batches);
    emit("coupled", o.coupled_batches);
    emit("x", o.x_batches);
    emit("y", o.y_batches);
  }
  return os.str();
}

inline constexpr const char* kSweepColumns =
    "model,N,observable,simple_est,simple_se,coupled_est,coupled_se,e_N,e_N_se,e_var,e_tau,"
    "rejection_rate,seed";

inline std::string sweep_csv(const ExperimentConfig& c, const std::vector<PointReport>& points) {
  std::ostringstream os;
  os << kSweepColumns << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : points) {
    for (const auto& o : p.combined) {
      os << to_string(c.model) << ',' << p.n << ',' << label(o.observable) << ','
         << csv_number(o.simple ? o.simple->value : nan) << ','
         << csv_number(o.simple ? o.simple->se : nan) << ','
         << csv_number(o.coupled ? o.coupled->value : nan) << ','
         << csv_number(o.coupled ? o.coupled->se : nan) << ','
         << csv_number(o.ratio ? o.ratio->e_n : nan) << ','
         << csv_number(o.ratio ? o.ratio->e_n_se : nan) << ','
         << csv_number(o.ratio ? o.ratio->e_var : nan) << ','
         << csv_number(o.ratio ? o.ratio->e_tau : nan) << ',' << csv_number(p.rejection_rate)
         << ',' << p.seed << '\n';
    }
  }
  return os.str();
}

/// Files produced by one invocation, keyed by name relative to the output
/// directory.
struct OutputFiles {
  std::vector<std::pair<std::string, std::string>> files;

  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }
};

inline std::string json_text(const Json& j) {
  std::ostringstream os;
  write_json(os, j);
  os << '\n';
  return os.str();
}

/// Writes every file once all content is ready.
inline void write_outputs(const std::filesystem::path& dir, const OutputFiles& out) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : out.files) {
    std::ofstream f(dir / name, std::ios::binary);
    f << content;
    if (!f) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
  }
}

inline Json timing_json(const std::vector<PointReport>& points) {
  Json t = Json::array();
  for (const auto& p : points)
    for (const auto& r : p.replicas)
      t.push_back({{"N", r.n}, {"replica", r.replica}, {"wall_seconds", r.wall_seconds}});
  return t;
}

/// The `run` command: every replica at the configured N. Produces
/// report.json, batches_r<k>.csv per replica and timing.json (wall times
/// are kept out of the deterministic files).
inline std::pair<PointReport, OutputFiles> run_experiment(const ExperimentConfig& c) {
  if (!c.sweep.empty()) throw ConfigError("'sweep' is only valid with the sweep command");
  if (c.n == 0) throw ConfigError("'N' is required");
  auto points = run_points(c, {c.n});
  OutputFiles out;
  Json report;
  report["config"] = config_echo(c);
  report["result"] = to_json(points.front());
  out.add("report.json", json_text(report));
  for (const auto& r : points.front().replicas)
    out.add("batches_r" + std::to_string(r.replica) + ".csv", batch_csv(r));
  out.add("timing.json", json_text(timing_json(points)));
  return {std::move(points.front()), std::move(out)};
}

/// The `sweep` command: one point per N in the sweep list. Produces
/// sweep.csv, report.json, batches_N<n>_r<k>.csv and timing.json.
inline std::pair<std::vector<PointReport>, OutputFiles> run_sweep(const ExperimentConfig& c) {
  if (c.sweep.empty()) throw ConfigError("'sweep' must list at least one N");
  if (c.estimators != Estimators::Both)
    throw ConfigError("'estimators' must be \"both\" for a sweep");
  auto points = run_points(c, c.sweep);
  OutputFiles out;
  out.add("sweep.csv", sweep_csv(c, points));
  Json report;
  report["config"] = config_echo(c);
  Json pts = Json::array();
  for (const auto& p : points) pts.push_back(to_json(p));
  report["points"] = pts;
  out.add("report.json", json_text(report));
  for (const auto& p : points)
    for (const auto& r : p.replicas)
      out.add("batches_N" + std::to_string(p.n) + "_r" + std::to_string(r.replica) + ".csv",
              batch_csv(r));
  out.add("timing.json", json_text(timing_json(points)));
  return {std::move(points), std::move(out)};
}

/// The `oracle` command: exact stationary values for an SSEP config with
/// N <= 12, alongside the product-distribution values.
inline Json oracle_report(const ExperimentConfig& c) {
  if (c.model != ModelKind::Ssep) throw ConfigError("oracle: only the ssep model is supported");
  if (c.n == 0 || c.n > oracle::kMaxSites) throw ConfigError("oracle: 'N' must lie in 1..12");
  auto p = c.ssep;
  p.n = c.n;
  const auto pi = oracle::stationary_distribution(oracle::build_ssep_generator(p));
  const auto profile = ssep::local_equilibrium_profile(p);
  const auto observables = resolve_all(c, c.n);
  const auto eq = ssep::lte_expectations(profile, observables);

  Json j;
  j["model"] = "ssep";
  j["N"] = c.n;
  j["states"] = pi.probability.size();
  j["residual"] = pi.residual;
  Json means = Json::array();
  for (std::size_t i = 0; i < c.n; ++i)
    means.push_back(oracle::exact_expectation(pi, c.n, Observable::site(i)));
  j["site_means"] = means;
  Json obs = Json::array();
  for (std::size_t k = 0; k < observables.size(); ++k) {
    Json o;
    o["label"] = label(observables[k]);
    o["exact"] = oracle::exact_expectation(pi, c.n, observables[k]);
    o["eq_expectation"] = eq[k];
    if (observables[k].is_pair()) {
      const double a = oracle::exact_expectation(pi, c.n, Observable::site(observables[k].first));
      const double b = oracle::exact_expectation(pi, c.n, Observable::site(*observables[k].second));
      o["covariance"] = o["exact"].get<double>() - a * b;
    }
    obs.push_back(o);
  }
  j["observables"] = obs;
  return j;
}

}  // namespace ccv::experiment
