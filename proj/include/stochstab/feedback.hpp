#pragma once

// Universal-formula feedback for control-affine systems
//   dX = [f + sum_i k_i g_i] dt + [sigma + h tau] dB
// with the single-channel closed form, the multi-channel version built on
// phi, diffusion cancellation via h, and synthesis-time probe certificates.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stochstab/model.hpp"
#include "stochstab/rng.hpp"
#include "stochstab/sde.hpp"

namespace stochstab {

using VectorField = std::function<Vector(const Vector&)>;

// sigma.DV != 0 with tau.DV = 0: no h can cancel the uncontrolled noise
struct NoDiffusionCancellation : std::runtime_error {
  explicit NoDiffusionCancellation(const Vector& x_)
      : std::runtime_error("diffusion cannot be cancelled at x=" +
                          detail::point_to_string(x_)),
        x(x_) {}
  Vector x;
};

// the decrease premise g.DV = 0 => gamma < 0 failed at a probe point
struct ClfPremiseViolation : std::runtime_error {
  ClfPremiseViolation(const Vector& x_, double gamma_)
      : std::runtime_error("CLF premise violated at x=" +
                          detail::point_to_string(x_) +
                          " (gamma = " + std::to_string(gamma_) +
                          " with no control authority)"),
        x(x_),
        gamma(gamma_) {}
  Vector x;
  double gamma;
};

// control-affine data; f and sigma must vanish at the origin
struct AffineSystem {
  int dim_state = 0;
  VectorField f;
  std::vector<VectorField> g;
  VectorField sigma;              // single driving channel
  VectorField tau;                // empty means tau == 0
  std::optional<std::vector<std::array<double, 2>>> constraint_box;
  std::string name;

  static AffineSystem create(int dim, VectorField f_, std::vector<VectorField> g_,
                             VectorField sigma_, VectorField tau_ = nullptr,
                             std::optional<std::vector<std::array<double, 2>>>
                                 box = std::nullopt,
                             std::string name_ = "") {
    AffineSystem s;
    s.dim_state = dim;
    s.f = std::move(f_);
    s.g = std::move(g_);
    s.sigma = std::move(sigma_);
    s.tau = std::move(tau_);
    s.constraint_box = std::move(box);
    s.name = std::move(name_);
    const Vector zero = Vector::Zero(dim);
    if (s.f(zero).norm() > 1e-12)
      throw PreconditionError("AffineSystem: f(0) != 0");
    if (s.sigma && s.sigma(zero).norm() > 1e-12)
      throw PreconditionError("AffineSystem: sigma(0) != 0");
    if (s.constraint_box && s.constraint_box->size() != s.g.size())
      throw PreconditionError("AffineSystem: constraint box size mismatch");
    return s;
  }

  int channels() const { return static_cast<int>(g.size()); }
  bool has_tau() const { return static_cast<bool>(tau); }

  Vector sigma_at(const Vector& x) const {
    return sigma ? sigma(x) : Vector(Vector::Zero(dim_state));
  }
  Vector tau_at(const Vector& x) const {
    return tau ? tau(x) : Vector(Vector::Zero(dim_state));
  }
};

// phi(a, b) = (a + sqrt(a^2 + b^2)) / b on {b > 0}, extended by 0 on
// {a < 0, b = 0}; the a < 0 branch uses the subtraction-free form
inline double sontag_phi(double a, double b) {
  if (b < 0.0) throw PreconditionError("sontag_phi: b must be >= 0");
  if (b == 0.0) {
    if (a < 0.0) return 0.0;
    throw std::domain_error("sontag_phi: (a, 0) with a >= 0 is outside S");
  }
  if (a < 0.0) return b / (std::hypot(a, b) - a);
  return (a + std::hypot(a, b)) / b;
}

struct GammaValue {
  double value = 0.0;
  bool used_finite_differences = false;
};

// gamma = f.DV + (1/2) sigma^T D2V sigma + l/2 for the single-channel case
inline GammaValue gamma_single(const AffineSystem& sys,
                               const LyapunovCandidate& v,
                               const std::function<double(const Vector&)>& rate,
                               const Vector& x) {
  if (sys.channels() != 1 || sys.has_tau())
    throw PreconditionError("gamma_single needs one channel and tau == 0");
  GammaValue gv;
  gv.used_finite_differences =
      !v.has_analytic_gradient() || !v.has_analytic_hessian();
  const Vector dv = v.gradient_at(x);
  const Matrix h = v.hessian_at(x);
  const Vector s = sys.sigma_at(x);
  double quad = 0.0;
  for (int i = 0; i < s.size(); ++i)
    for (int j = 0; j < s.size(); ++j) quad += s[i] * h(i, j) * s[j];
  gv.value = detail::dot_seq(sys.f(x), dv) + 0.5 * quad + 0.5 * rate(x);
  return gv;
}

// multiplier cancelling sigma.DV through tau; zero when sigma.DV is already
// zero at the working tolerance
inline double compute_h(const AffineSystem& sys, const LyapunovCandidate& v,
                        const Vector& x, double orth_tol = 1e-8) {
  const Vector dv = v.gradient_at(x);
  const double scale = orth_tol * (1.0 + dv.norm());
  const double sdv = detail::dot_seq(sys.sigma_at(x), dv);
  if (std::abs(sdv) <= scale) return 0.0;
  const double tdv = detail::dot_seq(sys.tau_at(x), dv);
  if (std::abs(tdv) <= scale) throw NoDiffusionCancellation(x);
  return -sdv / tdv;
}

struct ProbePoint {
  Vector x;
  double gamma = 0.0;
  double beta = 0.0;
  double decrease = 0.0;      // closed-loop generator applied to V
  double threshold = 0.0;     // -l/2
  double orth_residual = 0.0; // |(sigma + h tau).DV|
  bool ok = false;
};

struct ProbeReport {
  std::vector<ProbePoint> points;
  bool all_ok = true;
  double max_violation = 0.0;
  double max_orth_residual = 0.0;
  bool used_finite_differences = false;
  double margin_tol = 0.0;
};

struct SaturationRow {
  double radius = 0.0;
  double max_component = 0.0;
  bool within_box = true;
};

// per-radius maxima of |k_i|; diagnostic only, the law is never clipped
struct SaturationReport {
  std::vector<SaturationRow> rows;
  double largest_radius_within_box = 0.0;
  bool any_radius_within_box = false;
};

struct FeedbackLaw {
  int channels = 0;
  std::function<Vector(const Vector&)> k;
  std::function<double(const Vector&)> h;
  std::string formula;
  ProbeReport probe;
};

struct SynthesisOptions {
  int probe_count = 200;
  double probe_r_min = 1e-3;
  double probe_r_max = 1.0;
  std::vector<Vector> extra_probe_points;
  std::uint64_t seed = 0x5EEDF00Dull;
  double margin_tol = 1e-8;
  double orth_tol = 1e-8;
  double origin_radius = 1e-12;
};

namespace detail {

inline double gdv_zero_scale(const Vector& g, const Vector& dv) {
  return 1e-12 * (1.0 + g.norm() * dv.norm());
}

// generator of the closed loop applied to V: (f + sum k_i g_i).DV +
// (1/2) (sigma + h tau)^T D2V (sigma + h tau)
inline double closed_loop_decrease(const AffineSystem& sys,
                                   const LyapunovCandidate& v,
                                   const Vector& x, const Vector& k,
                                   double h) {
  const Vector dv = v.gradient_at(x);
  const Matrix hess = v.hessian_at(x);
  Vector drift = sys.f(x);
  for (int i = 0; i < sys.channels(); ++i) drift += k[i] * sys.g[i](x);
  Vector disp = sys.sigma_at(x);
  if (sys.has_tau()) disp += h * sys.tau_at(x);
  double quad = 0.0;
  for (int i = 0; i < disp.size(); ++i)
    for (int j = 0; j < disp.size(); ++j)
      quad += disp[i] * hess(i, j) * disp[j];
  return dot_seq(drift, dv) + 0.5 * quad;
}

inline std::vector<Vector> probe_points(int dim,
                                        const SynthesisOptions& opts) {
  std::vector<Vector> pts = opts.extra_probe_points;
  SampleRng rng(opts.seed);
  for (int i = 0; i < opts.probe_count; ++i) {
    const auto dir = rng.unit_vector(dim);
    const double r = rng.uniform(opts.probe_r_min, opts.probe_r_max);
    Vector x(dim);
    for (int j = 0; j < dim; ++j) x[j] = r * dir[j];
    pts.push_back(std::move(x));
  }
  return pts;
}

}  // namespace detail

// Single-channel universal formula
//   k = -(gamma + sqrt(gamma^2 + (g.DV)^4)) / (g.DV),  k = 0 on {g.DV = 0};
// the gamma < 0 branch is rewritten subtraction-free. Probes certify the
// decrease <= -l/2 at synthesis time and throw on a premise violation.
inline FeedbackLaw synthesize_single_input(
    const AffineSystem& sys, const LyapunovCandidate& v,
    const std::function<double(const Vector&)>& rate,
    const SynthesisOptions& opts = {}) {
  if (sys.channels() != 1 || sys.has_tau())
    throw PreconditionError(
        "synthesize_single_input needs one channel and tau == 0");
  const double origin_radius = opts.origin_radius;
  auto k_fn = [sys, v, rate, origin_radius](const Vector& x) -> Vector {
    Vector k(1);
    if (x.norm() < origin_radius) {
      k[0] = 0.0;
      return k;
    }
    const Vector dv = v.gradient_at(x);
    const Vector g = sys.g[0](x);
    const double gdv = detail::dot_seq(g, dv);
    if (std::abs(gdv) <= detail::gdv_zero_scale(g, dv)) {
      k[0] = 0.0;
      return k;
    }
    const double gamma = gamma_single(sys, v, rate, x).value;
    const double root = std::hypot(gamma, gdv * gdv);
    k[0] = gamma < 0.0 ? -(gdv * gdv * gdv) / (root - gamma)
                       : -(gamma + root) / gdv;
    return k;
  };

  FeedbackLaw law;
  law.channels = 1;
  law.formula = "universal-single";
  law.k = k_fn;
  law.h = [](const Vector&) { return 0.0; };

  ProbeReport& probe = law.probe;
  probe.margin_tol = opts.margin_tol;
  for (const auto& x : detail::probe_points(sys.dim_state, opts)) {
    const GammaValue gv = gamma_single(sys, v, rate, x);
    probe.used_finite_differences |= gv.used_finite_differences;
    const Vector dv = v.gradient_at(x);
    const Vector g = sys.g[0](x);
    const double gdv = detail::dot_seq(g, dv);
    const bool no_authority = std::abs(gdv) <= detail::gdv_zero_scale(g, dv);
    if (no_authority && gv.value > opts.margin_tol)
      throw ClfPremiseViolation(x, gv.value);
    ProbePoint pp;
    pp.x = x;
    pp.gamma = gv.value;
    pp.beta = gdv * gdv;
    pp.threshold = -0.5 * rate(x);
    const Vector k = k_fn(x);
    pp.decrease = detail::closed_loop_decrease(sys, v, x, k, 0.0);
    pp.ok = pp.decrease <= pp.threshold + opts.margin_tol;
    if (!pp.ok)
      probe.max_violation =
          std::max(probe.max_violation, pp.decrease - pp.threshold);
    probe.all_ok &= pp.ok;
    probe.points.push_back(std::move(pp));
  }
  return law;
}

// Multi-channel law k_i = -phi(gamma, beta) g_i.DV with
// beta = sum_i (g_i.DV)^2 and gamma built from the corrected dispersion
// sigma + h tau. Throws ClfPremiseViolation when beta = 0 meets gamma > 0
// at a probe, and propagates NoDiffusionCancellation from h.
inline FeedbackLaw synthesize_multi_input(
    const AffineSystem& sys, const LyapunovCandidate& v,
    const std::function<double(const Vector&)>& rate,
    const SynthesisOptions& opts = {}) {
  if (sys.channels() < 1)
    throw PreconditionError("synthesize_multi_input needs >= 1 channel");
  const double orth_tol = opts.orth_tol;
  const double origin_radius = opts.origin_radius;

  auto h_fn = [sys, v, orth_tol, origin_radius](const Vector& x) -> double {
    if (x.norm() < origin_radius || !sys.has_tau()) return 0.0;
    return compute_h(sys, v, x, orth_tol);
  };

  struct Parts {
    double gamma;
    double beta;
    std::vector<double> gdv;
    double h;
  };
  auto parts_at = [sys, v, rate, h_fn](const Vector& x) -> Parts {
    Parts p;
    p.h = h_fn(x);
    const Vector dv = v.gradient_at(x);
    const Matrix hess = v.hessian_at(x);
    Vector disp = sys.sigma_at(x);
    if (sys.has_tau()) disp += p.h * sys.tau_at(x);
    double quad = 0.0;
    for (int i = 0; i < disp.size(); ++i)
      for (int j = 0; j < disp.size(); ++j)
        quad += disp[i] * hess(i, j) * disp[j];
    p.gamma = detail::dot_seq(sys.f(x), dv) + 0.5 * quad + 0.5 * rate(x);
    p.beta = 0.0;
    for (int i = 0; i < sys.channels(); ++i) {
      p.gdv.push_back(detail::dot_seq(sys.g[i](x), dv));
      p.beta += p.gdv.back() * p.gdv.back();
    }
    return p;
  };

  auto beta_zero_scale = [v](const Vector& x) {
    const double s = 1e-12 * (1.0 + v.gradient_at(x).norm());
    return s * s;
  };

  auto k_fn = [parts_at, beta_zero_scale, origin_radius,
               channels = sys.channels()](const Vector& x) -> Vector {
    Vector k = Vector::Zero(channels);
    if (x.norm() < origin_radius) return k;
    const Parts p = parts_at(x);
    if (p.beta <= beta_zero_scale(x)) {
      if (p.gamma < 0.0) return k;
      throw std::domain_error("feedback undefined: no authority, gamma >= 0");
    }
    const double phi = sontag_phi(p.gamma, p.beta);
    for (int i = 0; i < channels; ++i) k[i] = -phi * p.gdv[i];
    return k;
  };

  FeedbackLaw law;
  law.channels = sys.channels();
  law.formula = "universal-multi";
  law.k = k_fn;
  law.h = h_fn;

  ProbeReport& probe = law.probe;
  probe.margin_tol = opts.margin_tol;
  probe.used_finite_differences =
      !v.has_analytic_gradient() || !v.has_analytic_hessian();
  for (const auto& x : detail::probe_points(sys.dim_state, opts)) {
    const Parts p = parts_at(x);
    if (p.beta <= beta_zero_scale(x) && p.gamma > opts.margin_tol)
      throw ClfPremiseViolation(x, p.gamma);
    ProbePoint pp;
    pp.x = x;
    pp.gamma = p.gamma;
    pp.beta = p.beta;
    pp.threshold = -0.5 * rate(x);
    const Vector k = k_fn(x);
    pp.decrease = detail::closed_loop_decrease(sys, v, x, k, p.h);
    const Vector dv = v.gradient_at(x);
    Vector disp = sys.sigma_at(x);
    if (sys.has_tau()) disp += p.h * sys.tau_at(x);
    pp.orth_residual = std::abs(detail::dot_seq(disp, dv));
    probe.max_orth_residual =
        std::max(probe.max_orth_residual, pp.orth_residual);
    pp.ok = pp.decrease <= pp.threshold + opts.margin_tol;
    if (!pp.ok)
      probe.max_violation =
          std::max(probe.max_violation, pp.decrease - pp.threshold);
    probe.all_ok &= pp.ok;
    probe.points.push_back(std::move(pp));
  }
  return law;
}

// Component maxima of the law on shrinking annuli r0, r0/2, ..., checked
// against the per-channel box when one is declared.
inline SaturationReport saturation_check(
    const FeedbackLaw& law,
    const std::optional<std::vector<std::array<double, 2>>>& box, int dim,
    double r0 = 1.0, int levels = 12, int probes_per_level = 64,
    std::uint64_t seed = 0x5A7BEEFull) {
  SaturationReport report;
  SampleRng rng(seed);
  for (int lvl = 0; lvl < levels; ++lvl) {
    const double r = r0 / static_cast<double>(1 << lvl);
    SaturationRow row;
    row.radius = r;
    for (int p = 0; p < probes_per_level; ++p) {
      const auto dir = rng.unit_vector(dim);
      const double rr = rng.uniform(0.5 * r, r);
      Vector x(dim);
      for (int i = 0; i < dim; ++i) x[i] = rr * dir[i];
      const Vector k = law.k(x);
      for (int i = 0; i < k.size(); ++i) {
        row.max_component = std::max(row.max_component, std::abs(k[i]));
        if (box) {
          const auto& b = (*box)[i];
          if (k[i] < b[0] || k[i] > b[1]) row.within_box = false;
        }
      }
    }
    report.rows.push_back(row);
  }
  for (const auto& row : report.rows)
    if (row.within_box) {
      report.largest_radius_within_box =
          std::max(report.largest_radius_within_box, row.radius);
      report.any_radius_within_box = true;
    }
  return report;
}

// substitute the law into the affine system; both coefficients vanish at 0
inline Sde closed_loop(const AffineSystem& sys, const FeedbackLaw& law) {
  if (law.channels != sys.channels())
    throw PreconditionError("closed_loop: channel count mismatch");
  Sde sde;
  sde.dim_state = sys.dim_state;
  sde.dim_noise = 1;
  sde.name = sys.name;
  sde.drift = [sys, k = law.k](const Vector& x) {
    Vector out = sys.f(x);
    const Vector kk = k(x);
    for (int i = 0; i < sys.channels(); ++i) out += kk[i] * sys.g[i](x);
    return out;
  };
  sde.dispersion = [sys, h = law.h](const Vector& x) {
    Vector col = sys.sigma_at(x);
    if (sys.has_tau()) col += h(x) * sys.tau_at(x);
    Matrix m(sys.dim_state, 1);
    m.col(0) = col;
    return m;
  };
  sde.control_trace = [k = law.k, h = law.h](const Vector& x) {
    const Vector kk = k(x);
    Vector out(kk.size() + 1);
    out.head(kk.size()) = kk;
    out[kk.size()] = h(x);
    return out;
  };
  return sde;
}

// trivial laws for ablation runs
inline FeedbackLaw zero_law(int channels) {
  FeedbackLaw law;
  law.channels = channels;
  law.formula = "zero";
  law.k = [channels](const Vector&) { return Vector(Vector::Zero(channels)); };
  law.h = [](const Vector&) { return 0.0; };
  return law;
}

inline FeedbackLaw constant_law(const Vector& value) {
  FeedbackLaw law;
  law.channels = static_cast<int>(value.size());
  law.formula = "constant";
  law.k = [value](const Vector&) { return value; };
  law.h = [](const Vector&) { return 0.0; };
  return law;
}

}  // namespace stochstab
