#pragma once

// Pointwise certificates for control Lyapunov candidates: the constrained
// decrease condition with its orthogonality filter, strict and exponential
// variants, the radial test, boundary viability, and region sweeps.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "stochstab/model.hpp"

namespace stochstab {

struct Tolerances {
  // admissibility: ||sigma^T p|| <= orth_tol * (1 + |p|)
  double orth_tol = 1e-8;
  // pass: decrease margin >= -margin_tol
  double margin_tol = 1e-9;
  // boundary membership slack for viability checks
  double boundary_tol = 1e-6;
};

// no grid control meets the orthogonality filter at this point
struct NoAdmissibleControl : std::runtime_error {
  NoAdmissibleControl(const Vector& x_, double min_residual_)
      : std::runtime_error("no admissible control at x=" +
                          detail::point_to_string(x_) +
                          " (min ||sigma^T p|| = " +
                          std::to_string(min_residual_) + ")"),
        x(x_),
        min_residual(min_residual_) {}
  Vector x;
  double min_residual;
};

enum class VerdictStatus { Pass, Fail, NoAdmissible, DegenerateNormal };

inline const char* to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Pass: return "pass";
    case VerdictStatus::Fail: return "fail";
    case VerdictStatus::NoAdmissible: return "no-admissible-control";
    case VerdictStatus::DegenerateNormal: return "degenerate-normal";
  }
  return "?";
}

// Outcome of one pointwise check. The witness is present only on passes and
// is the first grid control attaining the reported margin; the margin is the
// worst decrease value over all subjet elements tested at the point.
struct PointVerdict {
  Vector point;
  std::string condition;
  VerdictStatus status = VerdictStatus::Fail;
  double margin = std::numeric_limits<double>::quiet_NaN();
  std::optional<int> witness_index;
  std::optional<Vector> witness;
  int admissible_count = 0;
  std::string note;

  bool passed() const { return status == VerdictStatus::Pass; }
};

struct VerificationReport {
  std::string system;
  std::string candidate;
  std::string condition;
  std::string sample_description;
  Tolerances tolerances;
  std::vector<PointVerdict> verdicts;

  int pass_count() const {
    int n = 0;
    for (const auto& v : verdicts) n += v.passed() ? 1 : 0;
    return n;
  }
  int degenerate_count() const {
    int n = 0;
    for (const auto& v : verdicts)
      n += v.status == VerdictStatus::DegenerateNormal ? 1 : 0;
    return n;
  }
  // exact ratio of passing verdicts; degenerate-normal warnings count as
  // non-failing but non-passing
  double pass_fraction() const {
    return verdicts.empty()
               ? 1.0
               : static_cast<double>(pass_count()) /
                     static_cast<double>(verdicts.size());
  }
};

// indices (grid order) of controls whose dispersion columns annihilate p
inline std::vector<int> admissible_controls(const ControlSystem& sys,
                                            const Vector& x, const Vector& p,
                                            double orth_tol) {
  const double scale = orth_tol * (1.0 + detail::norm_seq(p));
  std::vector<int> out;
  const auto& grid = sys.controls.grid();
  for (int idx = 0; idx < static_cast<int>(grid.size()); ++idx) {
    const Matrix s = sys.dispersion_at(x, grid[idx]);
    double worst = 0.0;
    for (int k = 0; k < s.cols(); ++k) {
      double c = 0.0;
      for (int i = 0; i < s.rows(); ++i) c += s(i, k) * p[i];
      worst += c * c;
    }
    if (std::sqrt(worst) <= scale) out.push_back(idx);
  }
  return out;
}

namespace detail {

inline double orth_residual(const ControlSystem& sys, const Vector& x,
                            const Vector& p, const Vector& a) {
  const Matrix s = sys.dispersion_at(x, a);
  double worst = 0.0;
  for (int k = 0; k < s.cols(); ++k) {
    double c = 0.0;
    for (int i = 0; i < s.rows(); ++i) c += s(i, k) * p[i];
    worst += c * c;
  }
  return std::sqrt(worst);
}

// -p.f(x,a) - trace(a(x,a) Y), natural loop order
inline double decrease_value(const ControlSystem& sys, const Vector& x,
                             const Vector& p, const Matrix& y,
                             const Vector& a) {
  const Vector f = sys.drift_at(x, a);
  const Matrix diff = diffusion_matrix(sys, x, a);
  double v = 0.0;
  for (int i = 0; i < p.size(); ++i) v -= p[i] * f[i];
  for (int i = 0; i < diff.rows(); ++i)
    for (int j = 0; j < diff.cols(); ++j) v -= diff(i, j) * y(j, i);
  return v;
}

inline void require_symmetric(const Matrix& y) {
  const double scale = 1.0 + y.cwiseAbs().maxCoeff();
  for (int i = 0; i < y.rows(); ++i)
    for (int j = i + 1; j < y.cols(); ++j)
      if (std::abs(y(i, j) - y(j, i)) > 1e-9 * scale)
        throw PreconditionError("Y must be symmetric");
}

}  // namespace detail

struct HamiltonianValue {
  double value;
  int witness_index;
  Vector witness;
  int admissible_count;
};

// max over admissible controls of the decrease expression; ties keep the
// first grid index
inline HamiltonianValue constrained_hamiltonian(const ControlSystem& sys,
                                                const Vector& x,
                                                const Vector& p,
                                                const Matrix& y,
                                                double orth_tol) {
  detail::require_symmetric(y);
  const auto admissible = admissible_controls(sys, x, p, orth_tol);
  const auto& grid = sys.controls.grid();
  if (admissible.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : grid)
      best = std::min(best, detail::orth_residual(sys, x, p, a));
    throw NoAdmissibleControl(x, best);
  }
  HamiltonianValue hv{-std::numeric_limits<double>::infinity(), -1, Vector(),
                      static_cast<int>(admissible.size())};
  for (int idx : admissible) {
    const double v = detail::decrease_value(sys, x, p, y, grid[idx]);
    if (v > hv.value) {
      hv.value = v;
      hv.witness_index = idx;
      hv.witness = grid[idx];
    }
  }
  return hv;
}

namespace detail {

// worst decrease margin over the candidate's subjet elements at x, with the
// threshold already subtracted; fills the verdict
inline PointVerdict subjet_sweep(const ControlSystem& sys,
                                 const LyapunovCandidate& v, const Vector& x,
                                 double threshold, const char* condition,
                                 const Tolerances& tol) {
  PointVerdict verdict;
  verdict.point = x;
  verdict.condition = condition;
  const auto elements = v.subjet_at(x);
  double worst = std::numeric_limits<double>::infinity();
  std::optional<HamiltonianValue> worst_hv;
  for (const auto& el : elements) {
    HamiltonianValue hv;
    try {
      hv = constrained_hamiltonian(sys, x, el.p, el.y, tol.orth_tol);
    } catch (const NoAdmissibleControl& e) {
      verdict.status = VerdictStatus::NoAdmissible;
      verdict.margin = -std::numeric_limits<double>::infinity();
      verdict.note = e.what();
      return verdict;
    }
    const double margin = hv.value - threshold;
    if (margin < worst) {
      worst = margin;
      worst_hv = hv;
    }
  }
  verdict.margin = worst;
  verdict.admissible_count = worst_hv->admissible_count;
  if (worst >= -tol.margin_tol) {
    verdict.status = VerdictStatus::Pass;
    verdict.witness_index = worst_hv->witness_index;
    verdict.witness = worst_hv->witness;
  } else {
    verdict.status = VerdictStatus::Fail;
  }
  return verdict;
}

inline void require_off_origin(const Vector& x) {
  if (detail::norm_seq(x) == 0.0)
    throw PreconditionError("check requires x != 0");
}

inline void require_in_domain(const LyapunovCandidate& v, const Vector& x) {
  if (detail::norm_seq(x) > v.domain_radius)
    throw PreconditionError("point outside candidate domain");
}

}  // namespace detail

// plain decrease condition: some orthogonal control makes the expression
// nonnegative at every subjet element
inline PointVerdict check_clf_at(const ControlSystem& sys,
                                 const LyapunovCandidate& v, const Vector& x,
                                 const Tolerances& tol = {}) {
  detail::require_off_origin(x);
  detail::require_in_domain(v, x);
  return detail::subjet_sweep(sys, v, x, 0.0, "clf", tol);
}

// strict variant: margin threshold l(x); l must be positive off the origin
inline PointVerdict check_strict_clf_at(
    const ControlSystem& sys, const LyapunovCandidate& v,
    const std::function<double(const Vector&)>& rate, const Vector& x,
    const Tolerances& tol = {}) {
  detail::require_off_origin(x);
  detail::require_in_domain(v, x);
  const double l = rate(x);
  if (!(l > 0.0))
    throw RatePositivityError("rate l(x) must be positive at x=" +
                              detail::point_to_string(x));
  return detail::subjet_sweep(sys, v, x, l, "strict-clf", tol);
}

// exponential variant: threshold lambda * V(x)
inline PointVerdict check_exponential_at(const ControlSystem& sys,
                                         const LyapunovCandidate& v,
                                         double lambda, const Vector& x,
                                         const Tolerances& tol = {}) {
  detail::require_off_origin(x);
  detail::require_in_domain(v, x);
  if (!(lambda > 0.0))
    throw PreconditionError("exponential check requires lambda > 0");
  return detail::subjet_sweep(sys, v, x, lambda * v.value_at(x),
                              "exponential-clf", tol);
}

// Radial test with the smooth V = |x|^2 geometry folded in: controls are
// filtered by sigma^T x = 0 and the minimized expression is
// f.x + trace a; passing means the minimum is <= margin_tol.
inline PointVerdict check_radial_condition(const ControlSystem& sys,
                                           const Vector& x,
                                           const Tolerances& tol = {}) {
  detail::require_off_origin(x);
  PointVerdict verdict;
  verdict.point = x;
  verdict.condition = "radial";
  const auto admissible = admissible_controls(sys, x, x, tol.orth_tol);
  const auto& grid = sys.controls.grid();
  if (admissible.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : grid)
      best = std::min(best, detail::orth_residual(sys, x, x, a));
    verdict.status = VerdictStatus::NoAdmissible;
    verdict.margin = -std::numeric_limits<double>::infinity();
    verdict.note = NoAdmissibleControl(x, best).what();
    return verdict;
  }
  double best = std::numeric_limits<double>::infinity();
  int best_idx = -1;
  for (int idx : admissible) {
    const Vector f = sys.drift_at(x, grid[idx]);
    const Matrix a = diffusion_matrix(sys, x, grid[idx]);
    double val = 0.0;
    for (int i = 0; i < x.size(); ++i) val += f[i] * x[i];
    for (int i = 0; i < a.rows(); ++i) val += a(i, i);
    if (val < best) {
      best = val;
      best_idx = idx;
    }
  }
  verdict.admissible_count = static_cast<int>(admissible.size());
  verdict.margin = -best;  // pass means best <= 0 up to tolerance
  if (best <= tol.margin_tol) {
    verdict.status = VerdictStatus::Pass;
    verdict.witness_index = best_idx;
    verdict.witness = grid[best_idx];
  }
  return verdict;
}

// Viability of the sublevel set K = {V <= mu} tested on boundary points.
// Every normal-cone element must admit some control (no orthogonality
// filter) with f.p + trace(a Y) >= 0; the canonical element is
// (-DV, -D2V), and extra user elements may be supplied per point.
inline VerificationReport check_viability_boundary(
    const ControlSystem& sys, const LyapunovCandidate& v, double mu,
    const std::vector<Vector>& boundary_points,
    const std::vector<std::vector<SubjetElement>>& extra_elements = {},
    const Tolerances& tol = {}) {
  if (!extra_elements.empty() &&
      extra_elements.size() != boundary_points.size())
    throw PreconditionError("extra_elements must match boundary_points");
  VerificationReport report;
  report.condition = "viability-boundary";
  report.tolerances = tol;
  report.candidate = v.name;
  report.system = sys.name;
  const auto& grid = sys.controls.grid();
  for (std::size_t pi = 0; pi < boundary_points.size(); ++pi) {
    const Vector& x = boundary_points[pi];
    if (std::abs(v.value_at(x) - mu) > tol.boundary_tol)
      throw PreconditionError("point not on {V = mu}: " +
                              detail::point_to_string(x));
    PointVerdict verdict;
    verdict.point = x;
    verdict.condition = "viability-boundary";
    std::vector<SubjetElement> elements;
    const Vector dv = v.gradient_at(x);
    const bool degenerate = dv.norm() <= 1e-12 * (1.0 + x.norm());
    if (!degenerate)
      elements.push_back(SubjetElement{-dv, Matrix(-v.hessian_at(x))});
    if (!extra_elements.empty())
      for (const auto& el : extra_elements[pi]) elements.push_back(el);
    if (elements.empty()) {
      verdict.status = VerdictStatus::DegenerateNormal;
      verdict.note = "DV = 0 at boundary point; canonical normal vanishes";
      report.verdicts.push_back(std::move(verdict));
      continue;
    }
    double worst = std::numeric_limits<double>::infinity();
    int worst_witness = -1;
    for (const auto& el : elements) {
      detail::require_symmetric(el.y);
      double best = -std::numeric_limits<double>::infinity();
      int best_idx = -1;
      for (int idx = 0; idx < static_cast<int>(grid.size()); ++idx) {
        const Vector f = sys.drift_at(x, grid[idx]);
        const Matrix a = diffusion_matrix(sys, x, grid[idx]);
        double val = 0.0;
        for (int i = 0; i < el.p.size(); ++i) val += f[i] * el.p[i];
        for (int i = 0; i < a.rows(); ++i)
          for (int j = 0; j < a.cols(); ++j) val += a(i, j) * el.y(j, i);
        if (val > best) {
          best = val;
          best_idx = idx;
        }
      }
      if (best < worst) {
        worst = best;
        worst_witness = best_idx;
      }
    }
    verdict.margin = worst;
    verdict.admissible_count = sys.controls.size();
    if (worst >= -tol.margin_tol) {
      verdict.status = VerdictStatus::Pass;
      verdict.witness_index = worst_witness;
      verdict.witness = grid[worst_witness];
    }
    report.verdicts.push_back(std::move(verdict));
  }
  return report;
}

// decrease test relative to a target set M: same sweep as the strict check
// but positivity of V and l is required off M instead of off the origin
inline PointVerdict check_set_clf_at(
    const ControlSystem& sys, const LyapunovCandidate& v, const TargetSet& m,
    const std::function<double(const Vector&)>& rate, const Vector& x,
    const Tolerances& tol = {}) {
  if (m.contains(x))
    throw PreconditionError("check_set_clf_at requires x outside the target");
  const double l = rate(x);
  if (!(l > 0.0))
    throw RatePositivityError("rate l(x) must be positive off the target");
  if (!(v.value_at(x) > 0.0))
    throw PositivityError("candidate must be positive off the target");
  return detail::subjet_sweep(sys, v, x, l, "set-clf", tol);
}

enum class ConditionKind { Clf, StrictClf, Exponential, Radial, SetClf };

struct RegionSpec {
  ConditionKind condition = ConditionKind::Clf;
  std::function<double(const Vector&)> rate;  // strict / set variants
  double lambda = 0.0;                        // exponential variant
  const TargetSet* target = nullptr;          // set variant
};

struct RegionSampler {
  // annulus r in [r_min, r_max], isotropic directions; or explicit points
  double r_min = 0.0;
  double r_max = 0.0;
  int count = 0;
  std::vector<Vector> points;

  static RegionSampler annulus(double r_min, double r_max, int count) {
    if (!(r_min > 0.0) || !(r_max > r_min) || count < 1)
      throw PreconditionError("annulus sampler: bad parameters");
    RegionSampler s;
    s.r_min = r_min;
    s.r_max = r_max;
    s.count = count;
    return s;
  }

  static RegionSampler explicit_points(std::vector<Vector> pts) {
    RegionSampler s;
    s.points = std::move(pts);
    return s;
  }
};

// deterministic sweep; precondition failures at individual points become
// failing verdicts rather than aborting the sweep
inline VerificationReport verify_region(const ControlSystem& sys,
                                        const LyapunovCandidate& v,
                                        const RegionSpec& spec,
                                        const RegionSampler& sampler,
                                        std::uint64_t seed,
                                        const Tolerances& tol = {}) {
  VerificationReport report;
  report.system = sys.name;
  report.candidate = v.name;
  report.tolerances = tol;
  std::vector<Vector> points = sampler.points;
  if (points.empty()) {
    report.sample_description =
        "annulus[" + std::to_string(sampler.r_min) + ", " +
        std::to_string(sampler.r_max) + "] n=" + std::to_string(sampler.count) +
        " seed=" + std::to_string(seed);
    SampleRng rng(seed);
    while (static_cast<int>(points.size()) < sampler.count) {
      const auto dir = rng.unit_vector(sys.dim_state);
      const double r = rng.uniform(sampler.r_min, sampler.r_max);
      Vector x(sys.dim_state);
      for (int i = 0; i < sys.dim_state; ++i) x[i] = r * dir[i];
      // set-distance conditions need points off the target
      if (spec.condition == ConditionKind::SetClf && spec.target &&
          spec.target->contains(x))
        continue;
      points.push_back(std::move(x));
    }
  } else {
    report.sample_description =
        "explicit n=" + std::to_string(points.size());
  }

  for (const auto& x : points) {
    try {
      switch (spec.condition) {
        case ConditionKind::Clf:
          report.condition = "clf";
          report.verdicts.push_back(check_clf_at(sys, v, x, tol));
          break;
        case ConditionKind::StrictClf:
          report.condition = "strict-clf";
          report.verdicts.push_back(
              check_strict_clf_at(sys, v, spec.rate, x, tol));
          break;
        case ConditionKind::Exponential:
          report.condition = "exponential-clf";
          report.verdicts.push_back(
              check_exponential_at(sys, v, spec.lambda, x, tol));
          break;
        case ConditionKind::Radial:
          report.condition = "radial";
          report.verdicts.push_back(check_radial_condition(sys, x, tol));
          break;
        case ConditionKind::SetClf:
          report.condition = "set-clf";
          report.verdicts.push_back(
              check_set_clf_at(sys, v, *spec.target, spec.rate, x, tol));
          break;
      }
    } catch (const std::exception& e) {
      PointVerdict verdict;
      verdict.point = x;
      verdict.condition = report.condition;
      verdict.status = VerdictStatus::Fail;
      verdict.note = e.what();
      report.verdicts.push_back(std::move(verdict));
    }
  }
  return report;
}

}  // namespace stochstab
