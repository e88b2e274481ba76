#pragma once

// Euler-Maruyama integration with counter-based increments, Monte Carlo
// aggregation, and the path-level certificates: excursion bounds, integrated
// decrease, exponential rate fits, entry times, attractor distances, and
// reach-set brackets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochstab/model.hpp"
#include "stochstab/rng.hpp"
#include "stochstab/sde.hpp"

namespace stochstab {

using RateFn = std::function<double(const Vector&)>;

struct PathObservables {
  const LyapunovCandidate* v = nullptr;
  RateFn rate;  // integrated by the trapezoid rule when present
};

struct SdePath {
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> controls;          // applied on [t_i, t_{i+1})
  std::vector<double> v_values;          // present when V was supplied
  std::vector<double> running_l_integral;  // trapezoid of l along the path
  bool escaped = false;

  int steps() const { return static_cast<int>(times.size()) - 1; }
};

namespace detail {

inline void record_observables(SdePath& path, const Vector& x,
                               const PathObservables& obs) {
  if (obs.v) path.v_values.push_back(obs.v->value_at(x));
  if (obs.rate) {
    if (path.running_l_integral.empty()) {
      path.running_l_integral.push_back(0.0);
    } else {
      const double prev_l = obs.rate(path.states[path.states.size() - 2]);
      const double cur_l = obs.rate(x);
      path.running_l_integral.push_back(path.running_l_integral.back() +
                                        0.5 * path.dt * (prev_l + cur_l));
    }
  }
}

}  // namespace detail

// Fixed-step Euler-Maruyama on the uniform grid 0, dt, ..., T. Brownian
// increments come from a counter generator keyed by (seed, step, channel),
// so the path is a pure function of its arguments. States exceeding the
// blow-up guard truncate the path and set the escaped flag.
inline SdePath euler_maruyama(const Sde& sde, const Vector& x0, double dt,
                              double horizon, std::uint64_t seed,
                              const PathObservables& obs = {},
                              double blowup_radius = 1e6) {
  if (!(dt > 0.0) || !(horizon >= dt))
    throw PreconditionError("euler_maruyama: need 0 < dt <= horizon");
  const auto steps = static_cast<std::int64_t>(std::llround(horizon / dt));
  const CounterRng rng(seed);
  const double sqrt_dt = std::sqrt(dt);

  SdePath path;
  path.dt = dt;
  path.seed = seed;
  Vector x = x0;
  path.times.push_back(0.0);
  path.states.push_back(x);
  detail::record_observables(path, x, obs);

  for (std::int64_t n = 0; n < steps; ++n) {
    if (sde.control_trace) path.controls.push_back(sde.control_trace(x));
    const Vector f = sde.drift(x);
    const Matrix s = sde.dispersion(x);
    Vector next = x;
    for (int i = 0; i < sde.dim_state; ++i) next[i] += f[i] * dt;
    for (int j = 0; j < sde.dim_noise; ++j) {
      const double db =
          sqrt_dt * rng.normal(static_cast<std::uint64_t>(n),
                               static_cast<std::uint32_t>(j));
      for (int i = 0; i < sde.dim_state; ++i) next[i] += s(i, j) * db;
    }
    x = next;
    path.times.push_back(static_cast<double>(n + 1) * dt);
    path.states.push_back(x);
    detail::record_observables(path, x, obs);
    if (x.norm() > blowup_radius) {
      path.escaped = true;
      break;
    }
  }
  if (sde.control_trace && !path.controls.empty())
    path.controls.push_back(path.controls.back());
  return path;
}

// same scheme with caller-supplied increments, laid out step-major; used by
// convergence probes that couple coarse and fine grids
inline SdePath euler_maruyama_with_increments(const Sde& sde, const Vector& x0,
                                              double dt,
                                              std::span<const double> db,
                                              const PathObservables& obs = {},
                                              double blowup_radius = 1e6) {
  if (!(dt > 0.0)) throw PreconditionError("need dt > 0");
  if (db.size() % sde.dim_noise != 0)
    throw PreconditionError("increment buffer not a whole number of steps");
  const std::size_t steps = db.size() / sde.dim_noise;
  SdePath path;
  path.dt = dt;
  Vector x = x0;
  path.times.push_back(0.0);
  path.states.push_back(x);
  detail::record_observables(path, x, obs);
  for (std::size_t n = 0; n < steps; ++n) {
    const Vector f = sde.drift(x);
    const Matrix s = sde.dispersion(x);
    Vector next = x;
    for (int i = 0; i < sde.dim_state; ++i) next[i] += f[i] * dt;
    for (int j = 0; j < sde.dim_noise; ++j) {
      const double inc = db[n * sde.dim_noise + j];
      for (int i = 0; i < sde.dim_state; ++i) next[i] += s(i, j) * inc;
    }
    x = next;
    path.times.push_back(static_cast<double>(n + 1) * dt);
    path.states.push_back(x);
    detail::record_observables(path, x, obs);
    if (x.norm() > blowup_radius) {
      path.escaped = true;
      break;
    }
  }
  return path;
}

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval for a binomial fraction
inline WilsonInterval wilson_interval(int successes, int trials,
                                      double z = 1.959963984540054) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = trials;
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct PathSummary {
  std::uint64_t seed = 0;
  bool escaped = false;
  double sup_metric = 0.0;    // max of the radial metric along the path
  double final_metric = 0.0;
  double sup_v = std::numeric_limits<double>::quiet_NaN();
  double final_v = std::numeric_limits<double>::quiet_NaN();
  double decrease_violation = std::numeric_limits<double>::quiet_NaN();
  double rate_estimate = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::optional<double>> entry_times;   // one per target
  std::vector<double> tail_distances;               // one per target
  std::vector<double> v_checkpoints;                // V at shared grid times
};

struct MonteCarloReport {
  int path_count = 0;
  double dt = 0.0;
  double horizon = 0.0;
  std::uint64_t master_seed = 0;
  int escaped_count = 0;
  std::vector<PathSummary> paths;
  std::vector<double> checkpoint_times;

  double max_sup_metric() const {
    double m = 0.0;
    for (const auto& p : paths) m = std::max(m, p.sup_metric);
    return m;
  }
  double max_decrease_violation() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : paths)
      if (std::isfinite(p.decrease_violation))
        m = std::max(m, p.decrease_violation);
    return m;
  }
};

struct MetricsSpec {
  const LyapunovCandidate* v = nullptr;
  RateFn rate;
  std::vector<const TargetSet*> targets;
  // metric whose excursions the stability certificate bounds; defaults to |x|
  std::function<double(const Vector&)> radial_metric;
  double blowup_radius = 1e6;
  int checkpoint_count = 64;
};

// V(X_t) + int_0^t lds - V(x0) must stay <= 0 along a decrease-certified
// path; returns the largest violation over the grid
inline double decrease_certificate(const SdePath& path,
                                   const LyapunovCandidate& v,
                                   const RateFn& rate) {
  double worst = -std::numeric_limits<double>::infinity();
  double integral = 0.0;
  double v0 = 0.0;
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    const double vi = path.v_values.size() == path.states.size()
                          ? path.v_values[i]
                          : v.value_at(path.states[i]);
    if (i == 0) {
      v0 = vi;
    } else if (path.running_l_integral.size() == path.states.size()) {
      integral = path.running_l_integral[i];
    } else {
      integral += 0.5 * path.dt *
                  (rate(path.states[i - 1]) + rate(path.states[i]));
    }
    worst = std::max(worst, vi + integral - v0);
  }
  return worst;
}

// least-squares slope of log V(X_t) over the window where V > 1e-12;
// returns the decay rate lambda-hat (positive for decaying V)
inline double exponential_rate_fit(const std::vector<double>& times,
                                   const std::vector<double>& v_values) {
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(v_values[i] > 1e-12)) continue;
    const double y = std::log(v_values[i]);
    st += times[i];
    sy += y;
    stt += times[i] * times[i];
    sty += times[i] * y;
    ++n;
  }
  if (n < 2) return 0.0;
  const double denom = n * stt - st * st;
  if (denom <= 0.0) return 0.0;
  return -(n * sty - st * sy) / denom;
}

inline double exponential_rate_fit(const SdePath& path) {
  return exponential_rate_fit(path.times, path.v_values);
}

// first grid time at which the path sits inside the target
inline std::optional<double> first_entry_time(const SdePath& path,
                                              const TargetSet& target) {
  for (std::size_t i = 0; i < path.states.size(); ++i)
    if (target.contains(path.states[i])) return path.times[i];
  return std::nullopt;
}

// max distance to the target over the last tail_fraction of the grid
inline double attractor_distance(const SdePath& path, const TargetSet& target,
                                 double tail_fraction = 0.1) {
  const std::size_t n = path.states.size();
  const auto start = static_cast<std::size_t>(
      std::floor((1.0 - tail_fraction) * static_cast<double>(n - 1)));
  double worst = 0.0;
  for (std::size_t i = start; i < n; ++i)
    worst = std::max(worst, target.distance(path.states[i]));
  return worst;
}

using PathSink = std::function<void(const SdePath&, int path_index)>;

// Sequential Monte Carlo sweep. Path i uses seed derive_path_seed(master, i)
// regardless of batch size, so reports are reproducible path by path. The
// optional sink sees every path before it is discarded.
inline MonteCarloReport run_monte_carlo(const Sde& sde, const Vector& x0,
                                        double dt, double horizon,
                                        int path_count,
                                        std::uint64_t master_seed,
                                        const MetricsSpec& metrics = {},
                                        const PathSink& sink = nullptr) {
  if (path_count < 1)
    throw PreconditionError("run_monte_carlo: path_count must be >= 1");
  MonteCarloReport report;
  report.path_count = path_count;
  report.dt = dt;
  report.horizon = horizon;
  report.master_seed = master_seed;

  const auto metric = [&metrics](const Vector& x) {
    return metrics.radial_metric ? metrics.radial_metric(x) : x.norm();
  };

  PathObservables obs;
  obs.v = metrics.v;
  obs.rate = metrics.rate;

  const auto total_steps =
      static_cast<std::int64_t>(std::llround(horizon / dt));
  const int ckpt = std::max(1, metrics.checkpoint_count);
  std::vector<std::int64_t> ckpt_idx;
  for (int c = 0; c < ckpt; ++c)
    ckpt_idx.push_back((total_steps * (c + 1)) / ckpt);
  if (metrics.v) {
    for (auto idx : ckpt_idx)
      report.checkpoint_times.push_back(static_cast<double>(idx) * dt);
  }

  for (int i = 0; i < path_count; ++i) {
    const std::uint64_t seed = derive_path_seed(master_seed, i);
    const SdePath path =
        euler_maruyama(sde, x0, dt, horizon, seed, obs, metrics.blowup_radius);
    PathSummary s;
    s.seed = seed;
    s.escaped = path.escaped;
    report.escaped_count += path.escaped ? 1 : 0;
    for (const auto& x : path.states)
      s.sup_metric = std::max(s.sup_metric, metric(x));
    s.final_metric = metric(path.states.back());
    if (metrics.v) {
      s.sup_v = *std::max_element(path.v_values.begin(), path.v_values.end());
      s.final_v = path.v_values.back();
      s.rate_estimate = exponential_rate_fit(path);
      for (auto idx : ckpt_idx) {
        const auto j = std::min<std::size_t>(static_cast<std::size_t>(idx),
                                             path.v_values.size() - 1);
        s.v_checkpoints.push_back(path.v_values[j]);
      }
      if (metrics.rate)
        s.decrease_violation = decrease_certificate(path, *metrics.v,
                                                    metrics.rate);
    }
    for (const auto* t : metrics.targets) {
      s.entry_times.push_back(first_entry_time(path, *t));
      s.tail_distances.push_back(attractor_distance(path, *t));
    }
    if (sink) sink(path, i);
    report.paths.push_back(std::move(s));
  }
  return report;
}

struct StabilityCertificate {
  double bound_value = 0.0;        // bound(|x0|) * (1 + cert_tol)
  int within_bound = 0;
  double fraction_within_bound = 0.0;
  WilsonInterval wilson;
  int converged = 0;
  double fraction_converged = 0.0;
  bool pass = false;
};

// fraction of paths whose excursion stays below the comparison bound and
// whose endpoint entered the convergence ball
inline StabilityCertificate stability_certificate(
    const MonteCarloReport& report,
    const std::function<double(double)>& bound_map, double x0_metric,
    double cert_tol, double convergence_radius, double min_fraction = 1.0) {
  StabilityCertificate cert;
  cert.bound_value = bound_map(x0_metric) * (1.0 + cert_tol);
  for (const auto& p : report.paths) {
    if (!p.escaped && p.sup_metric <= cert.bound_value) ++cert.within_bound;
    if (!p.escaped && p.final_metric <= convergence_radius) ++cert.converged;
  }
  const double n = report.paths.size();
  cert.fraction_within_bound = cert.within_bound / n;
  cert.fraction_converged = cert.converged / n;
  cert.wilson = wilson_interval(cert.within_bound,
                                static_cast<int>(report.paths.size()));
  cert.pass = cert.fraction_within_bound >= min_fraction;
  return cert;
}

struct TargetBoundResult {
  double bound = 0.0;
  int entered = 0;
  int respected = 0;
  double fraction_respected = 0.0;
  bool pass = false;
};

// entry times against the budget (V(x0) - inf_boundary_v) / rate_floor;
// paths that never enter count as violations
inline TargetBoundResult target_bound_check(const MonteCarloReport& report,
                                            int target_index, double v_at_x0,
                                            double inf_boundary_v,
                                            double rate_floor,
                                            double slack = 0.0,
                                            double min_fraction = 1.0) {
  if (!(rate_floor > 0.0))
    throw PreconditionError("target_bound_check: rate floor must be > 0");
  TargetBoundResult res;
  res.bound = (v_at_x0 - inf_boundary_v) / rate_floor;
  for (const auto& p : report.paths) {
    const auto& entry = p.entry_times.at(target_index);
    if (!entry) continue;
    ++res.entered;
    if (*entry <= res.bound + slack) ++res.respected;
  }
  res.fraction_respected =
      static_cast<double>(res.respected) / static_cast<double>(report.paths.size());
  res.pass = res.fraction_respected >= min_fraction;
  return res;
}

struct ReachBracketRow {
  Vector x0;
  bool predicted_inside = false;   // V(x0) <= rate_floor * t + inf_boundary_v
  double entered_fraction = 0.0;   // paths entering the target by time t
  bool consistent = true;          // predicted => observed
};

struct ReachBracketResult {
  std::vector<ReachBracketRow> rows;
  bool implication_holds = true;
};

// The sublevel bracket {V(x0) <= L t + inf_boundary_v} must under-approximate
// the time-t reach set: every predicted state reaches the target by t on
// (almost) all sampled paths.
inline ReachBracketResult reach_set_bracket(
    const Sde& sde, const LyapunovCandidate& v, const TargetSet& target,
    double t, double rate_floor, double inf_boundary_v,
    const std::vector<Vector>& starts, int paths_per_start, double dt,
    std::uint64_t master_seed, double min_fraction = 1.0) {
  ReachBracketResult result;
  for (std::size_t si = 0; si < starts.size(); ++si) {
    ReachBracketRow row;
    row.x0 = starts[si];
    row.predicted_inside =
        v.value_at(starts[si]) <= rate_floor * t + inf_boundary_v;
    int entered = 0;
    for (int p = 0; p < paths_per_start; ++p) {
      const std::uint64_t seed =
          derive_path_seed(master_seed, si * 1000003ull + p);
      const SdePath path = euler_maruyama(sde, starts[si], dt, t, seed);
      if (first_entry_time(path, target)) ++entered;
    }
    row.entered_fraction =
        static_cast<double>(entered) / static_cast<double>(paths_per_start);
    if (row.predicted_inside && row.entered_fraction < min_fraction) {
      row.consistent = false;
      result.implication_holds = false;
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace stochstab
