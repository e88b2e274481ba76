#pragma once

// Problem data: controlled SDEs, control grids, Lyapunov candidates,
// comparison-function envelopes, and target sets.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stochstab/rng.hpp"

namespace stochstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// l(x) <= 0 where positivity is required
struct RatePositivityError : PreconditionError {
  using PreconditionError::PreconditionError;
};

// candidate fails V > 0 off the target
struct PositivityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string point_to_string(const Vector& x) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// plain sequential accumulation, kept free of vectorized reordering so that
// independently written loops reproduce the exact same doubles
inline double dot_seq(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_seq(const Vector& a) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

}  // namespace detail

// Compact control set, materialized as a deterministic finite grid. Grid
// order is part of the contract: witnesses report indices into it and ties
// break toward the lowest index.
class ControlSet {
 public:
  // explicit list, kept in the given order
  static ControlSet points(std::vector<Vector> pts) {
    if (pts.empty()) throw PreconditionError("ControlSet: empty point list");
    const auto dim = pts.front().size();
    for (const auto& p : pts)
      if (p.size() != dim)
        throw PreconditionError("ControlSet: mixed point dimensions");
    ControlSet s;
    s.dim_ = static_cast<int>(dim);
    s.grid_ = std::move(pts);
    return s;
  }

  // axis-aligned box discretized per axis; counts of 1 use the midpoint,
  // larger counts space evenly and include both endpoints; the last axis
  // varies fastest
  static ControlSet box(const Vector& lo, const Vector& hi,
                        const std::vector<int>& counts) {
    const int d = static_cast<int>(lo.size());
    if (hi.size() != d || static_cast<int>(counts.size()) != d || d == 0)
      throw PreconditionError("ControlSet: box arguments disagree");
    std::vector<std::vector<double>> axes(d);
    for (int i = 0; i < d; ++i) {
      if (counts[i] < 1) throw PreconditionError("ControlSet: count < 1");
      if (lo[i] > hi[i]) throw PreconditionError("ControlSet: lo > hi");
      if (counts[i] == 1) {
        axes[i].push_back(0.5 * (lo[i] + hi[i]));
      } else {
        for (int k = 0; k < counts[i]; ++k)
          axes[i].push_back(lo[i] +
                            (hi[i] - lo[i]) * static_cast<double>(k) /
                                static_cast<double>(counts[i] - 1));
      }
    }
    ControlSet s;
    s.dim_ = d;
    std::vector<int> idx(d, 0);
    for (;;) {
      Vector p(d);
      for (int i = 0; i < d; ++i) p[i] = axes[i][idx[i]];
      s.grid_.push_back(std::move(p));
      int axis = d - 1;
      while (axis >= 0 && ++idx[axis] == static_cast<int>(axes[axis].size())) {
        idx[axis] = 0;
        --axis;
      }
      if (axis < 0) break;
    }
    return s;
  }

  // concatenated coordinates, left factor slowest
  static ControlSet product(const ControlSet& a, const ControlSet& b) {
    ControlSet s;
    s.dim_ = a.dim_ + b.dim_;
    s.grid_.reserve(a.grid_.size() * b.grid_.size());
    for (const auto& pa : a.grid_)
      for (const auto& pb : b.grid_) {
        Vector p(s.dim_);
        p.head(a.dim_) = pa;
        p.tail(b.dim_) = pb;
        s.grid_.push_back(std::move(p));
      }
    return s;
  }

  const std::vector<Vector>& grid() const { return grid_; }
  int dim() const { return dim_; }
  int size() const { return static_cast<int>(grid_.size()); }

 private:
  ControlSet() = default;
  int dim_ = 0;
  std::vector<Vector> grid_;
};

using DriftFn = std::function<Vector(const Vector&, const Vector&)>;
using DispersionFn = std::function<Matrix(const Vector&, const Vector&)>;

// dX = f(X, a) dt + sigma(X, a) dB with a ranging over a compact grid
struct ControlSystem {
  int dim_state = 0;
  int dim_noise = 0;
  DriftFn drift;
  DispersionFn dispersion;
  ControlSet controls = ControlSet::points({Vector::Zero(1)});
  std::optional<double> lipschitz_hint;
  std::string name;

  Vector drift_at(const Vector& x, const Vector& a) const {
    Vector f = drift(x, a);
    if (f.size() != dim_state || !detail::all_finite(f))
      throw EvaluationError("drift not finite at x=" +
                            detail::point_to_string(x) +
                            ", a=" + detail::point_to_string(a));
    return f;
  }

  Matrix dispersion_at(const Vector& x, const Vector& a) const {
    Matrix s = dispersion(x, a);
    if (s.rows() != dim_state || s.cols() != dim_noise ||
        !detail::all_finite(s))
      throw EvaluationError("dispersion not finite at x=" +
                            detail::point_to_string(x) +
                            ", a=" + detail::point_to_string(a));
    return s;
  }
};

// a(x, alpha) = (1/2) sigma sigma^T, accumulated in natural loop order
inline Matrix diffusion_matrix(const ControlSystem& sys, const Vector& x,
                               const Vector& alpha) {
  const Matrix s = sys.dispersion_at(x, alpha);
  const int n = sys.dim_state;
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < s.cols(); ++k) acc += s(i, k) * s(j, k);
      a(i, j) = 0.5 * acc;
    }
  return a;
}

// first grid control freezing the origin, if any
inline std::optional<Vector> equilibrium_check(const ControlSystem& sys,
                                               double tol = 1e-12) {
  const Vector zero = Vector::Zero(sys.dim_state);
  for (const auto& a : sys.controls.grid()) {
    const Vector f = sys.drift_at(zero, a);
    const Matrix s = sys.dispersion_at(zero, a);
    if (detail::norm_seq(f) <= tol && s.norm() <= tol) return a;
  }
  return std::nullopt;
}

// one element (p, Y) of a second-order subdifferential
struct SubjetElement {
  Vector p;
  Matrix y;
};

using SubjetProvider =
    std::function<std::vector<SubjetElement>(const Vector&)>;

// Scalar candidate function with optional analytic derivatives and an
// optional subjet provider for nonsmooth points. Missing derivatives fall
// back to central finite differences with step fd_step * (1 + |x|).
struct LyapunovCandidate {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;  // may be empty
  std::function<Matrix(const Vector&)> hessian;   // may be empty
  SubjetProvider subjet;                          // may be empty
  double fd_step = 1e-5;
  double domain_radius = std::numeric_limits<double>::infinity();
  std::string name;

  double value_at(const Vector& x) const {
    const double v = value(x);
    if (!std::isfinite(v))
      throw EvaluationError("candidate not finite at x=" +
                            detail::point_to_string(x));
    return v;
  }

  bool has_analytic_gradient() const { return static_cast<bool>(gradient); }
  bool has_analytic_hessian() const { return static_cast<bool>(hessian); }

  Vector gradient_at(const Vector& x) const {
    if (gradient) return gradient(x);
    return fd_gradient(x);
  }

  Matrix hessian_at(const Vector& x) const {
    if (hessian) return hessian(x);
    return fd_hessian(x);
  }

  Vector fd_gradient(const Vector& x) const {
    const int n = static_cast<int>(x.size());
    const double h = fd_step * (1.0 + x.norm());
    Vector g(n);
    Vector e = x;
    for (int i = 0; i < n; ++i) {
      e[i] = x[i] + h;
      const double vp = value_at(e);
      e[i] = x[i] - h;
      const double vm = value_at(e);
      e[i] = x[i];
      g[i] = (vp - vm) / (2.0 * h);
    }
    return g;
  }

  Matrix fd_hessian(const Vector& x) const {
    const int n = static_cast<int>(x.size());
    const double h = fd_step * (1.0 + x.norm());
    Matrix m(n, n);
    const double v0 = value_at(x);
    Vector e = x;
    for (int i = 0; i < n; ++i) {
      e[i] = x[i] + h;
      const double vp = value_at(e);
      e[i] = x[i] - h;
      const double vm = value_at(e);
      e[i] = x[i];
      m(i, i) = (vp - 2.0 * v0 + vm) / (h * h);
    }
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        Vector q = x;
        q[i] += h;
        q[j] += h;
        const double vpp = value_at(q);
        q[j] -= 2.0 * h;
        const double vpm = value_at(q);
        q[i] -= 2.0 * h;
        const double vmm = value_at(q);
        q[j] += 2.0 * h;
        const double vmp = value_at(q);
        m(i, j) = m(j, i) = (vpp - vpm - vmp + vmm) / (4.0 * h * h);
      }
    return m;
  }

  // nonsmooth points advertise subjet elements; smooth points use (DV, D2V)
  std::vector<SubjetElement> subjet_at(const Vector& x) const {
    if (subjet) {
      auto elems = subjet(x);
      if (!elems.empty()) return elems;
    }
    return {SubjetElement{gradient_at(x), hessian_at(x)}};
  }
};

struct DerivativeCheckResult {
  bool ok = true;
  double worst_gradient_error = 0.0;
  double worst_hessian_error = 0.0;
  Vector worst_point;
};

// analytic derivatives vs central differences at random annulus points
inline DerivativeCheckResult derivative_consistency_check(
    const LyapunovCandidate& v, int dim, double r_min, double r_max,
    int samples, std::uint64_t seed, double rel_tol = 1e-4) {
  DerivativeCheckResult res;
  if (!v.has_analytic_gradient() && !v.has_analytic_hessian()) return res;
  SampleRng rng(seed);
  for (int k = 0; k < samples; ++k) {
    const auto dir = rng.unit_vector(dim);
    const double r = rng.uniform(r_min, r_max);
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x[i] = r * dir[i];
    if (v.has_analytic_gradient()) {
      const Vector ga = v.gradient(x);
      const Vector gf = v.fd_gradient(x);
      const double err =
          (ga - gf).norm() / std::max(1.0, std::max(ga.norm(), gf.norm()));
      if (err > res.worst_gradient_error) {
        res.worst_gradient_error = err;
        res.worst_point = x;
      }
    }
    if (v.has_analytic_hessian()) {
      const Matrix ha = v.hessian(x);
      const Matrix hf = v.fd_hessian(x);
      const double err =
          (ha - hf).norm() / std::max(1.0, std::max(ha.norm(), hf.norm()));
      if (err > res.worst_hessian_error) {
        res.worst_hessian_error = err;
        res.worst_point = x;
      }
    }
  }
  res.ok = res.worst_gradient_error <= rel_tol &&
           res.worst_hessian_error <= 30.0 * rel_tol;
  return res;
}

// spot check V(0)=0 and V>0 on random points of the punctured ball;
// returns a violating point if found
inline std::optional<Vector> positive_definiteness_violation(
    const LyapunovCandidate& v, int dim, double radius, int samples,
    std::uint64_t seed) {
  const Vector zero = Vector::Zero(dim);
  if (std::abs(v.value_at(zero)) > 1e-12) return zero;
  SampleRng rng(seed);
  for (int k = 0; k < samples; ++k) {
    const auto dir = rng.unit_vector(dim);
    const double r = radius * std::pow(rng.uniform01(), 2.0) + 1e-9;
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x[i] = r * dir[i];
    if (v.value_at(x) <= 0.0) return x;
  }
  return std::nullopt;
}

// Radial envelopes gamma1 <= V <= gamma2 tabulated on a radius ladder,
// interpolated in log-log space (exact on power laws). The fitted
// rel_slack bounds the interpolation and direction-sampling gap observed
// on a validation set; the sandwich property holds up to that slack.
struct ComparisonPair {
  std::vector<double> radii;
  std::vector<double> gamma1;
  std::vector<double> gamma2;
  double rel_slack = 0.0;

  static double interp_loglog(const std::vector<double>& xs,
                              const std::vector<double>& ys, double x) {
    if (x <= 0.0 || xs.empty()) throw PreconditionError("interp: bad query");
    const double lx = std::log(x);
    std::size_t hi = 1;
    while (hi + 1 < xs.size() && xs[hi] < x) ++hi;
    const double lx0 = std::log(xs[hi - 1]);
    const double lx1 = std::log(xs[hi]);
    const double ly0 = std::log(ys[hi - 1]);
    const double ly1 = std::log(ys[hi]);
    const double t = (lx - lx0) / (lx1 - lx0);
    return std::exp(ly0 + t * (ly1 - ly0));
  }

  double gamma1_at(double r) const { return interp_loglog(radii, gamma1, r); }
  double gamma2_at(double r) const { return interp_loglog(radii, gamma2, r); }

  // inverse of the lower envelope; monotone, so invert the table
  double gamma1_inverse(double v) const {
    return interp_loglog(gamma1, radii, v);
  }

  // radius bound gamma1^{-1}(gamma2(r)) for trajectory excursions
  double bound(double r) const { return gamma1_inverse(gamma2_at(r)); }
};

namespace detail {

inline std::vector<Vector> envelope_directions(int dim, int angular_samples) {
  std::vector<Vector> dirs;
  if (dim == 1) {
    Vector p(1), m(1);
    p[0] = 1.0;
    m[0] = -1.0;
    dirs = {p, m};
  } else if (dim == 2) {
    dirs.reserve(angular_samples);
    for (int k = 0; k < angular_samples; ++k) {
      const double a = 2.0 * std::numbers::pi * k / angular_samples;
      Vector u(2);
      u[0] = std::cos(a);
      u[1] = std::sin(a);
      dirs.push_back(u);
    }
  } else {
    SampleRng rng(0xD12EC7105ull);
    for (int i = 0; i < dim; ++i) {
      Vector u = Vector::Zero(dim);
      u[i] = 1.0;
      dirs.push_back(u);
      dirs.push_back(-u);
    }
    for (int k = 0; k < angular_samples; ++k) {
      const auto d = rng.unit_vector(dim);
      Vector u(dim);
      for (int i = 0; i < dim; ++i) u[i] = d[i];
      dirs.push_back(u);
    }
  }
  return dirs;
}

}  // namespace detail

// Fit monotone comparison envelopes for V over the given radius ladder.
// Throws PositivityError if V fails to be positive on a sampled sphere.
inline ComparisonPair fit_comparison_pair(const LyapunovCandidate& v, int dim,
                                          std::vector<double> radii,
                                          int angular_samples = 360) {
  if (radii.size() < 2) throw PreconditionError("fit: need >= 2 radii");
  for (std::size_t i = 0; i + 1 < radii.size(); ++i)
    if (!(radii[i] > 0.0) || !(radii[i] < radii[i + 1]))
      throw PreconditionError("fit: radii must be positive and increasing");
  const auto dirs = detail::envelope_directions(dim, angular_samples);

  auto sphere_min_max = [&](double r) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& u : dirs) {
      const double val = v.value_at(r * u);
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
    if (!(lo > 0.0))
      throw PositivityError("candidate not positive on sphere r=" +
                            std::to_string(r));
    return std::pair<double, double>{lo, hi};
  };

  ComparisonPair pair;
  pair.radii = std::move(radii);
  for (double r : pair.radii) {
    const auto [lo, hi] = sphere_min_max(r);
    pair.gamma1.push_back(lo);
    pair.gamma2.push_back(hi);
  }
  // rectify so gamma1 is nondecreasing from below and gamma2 from above;
  // class-K∞ envelopes must be monotone
  for (std::size_t i = pair.radii.size() - 1; i-- > 0;)
    pair.gamma1[i] = std::min(pair.gamma1[i], pair.gamma1[i + 1]);
  for (std::size_t i = 1; i < pair.radii.size(); ++i)
    pair.gamma2[i] = std::max(pair.gamma2[i], pair.gamma2[i - 1]);

  // validation pass: midpoint radii and half-step directions measure the
  // interpolation plus direction-sampling gap
  double slack = 0.0;
  auto observe = [&](double r, const Vector& u) {
    const double val = v.value_at(r * u);
    const double g1 = pair.gamma1_at(r);
    const double g2 = pair.gamma2_at(r);
    if (val < g1) slack = std::max(slack, (g1 - val) / std::max(val, 1e-300));
    if (val > g2) slack = std::max(slack, (val - g2) / std::max(g2, 1e-300));
  };
  std::vector<Vector> check_dirs = dirs;
  if (dim == 2) {
    for (int k = 0; k < angular_samples; ++k) {
      const double a = 2.0 * std::numbers::pi * (k + 0.5) / angular_samples;
      Vector u(2);
      u[0] = std::cos(a);
      u[1] = std::sin(a);
      check_dirs.push_back(u);
    }
  } else if (dim > 2) {
    SampleRng rng(0xC3EC4D125ull);
    for (int k = 0; k < angular_samples; ++k) {
      const auto d = rng.unit_vector(dim);
      Vector u(dim);
      for (int i = 0; i < dim; ++i) u[i] = d[i];
      check_dirs.push_back(u);
    }
  }
  for (std::size_t i = 0; i + 1 < pair.radii.size(); ++i) {
    const double rm = std::sqrt(pair.radii[i] * pair.radii[i + 1]);
    for (const auto& u : check_dirs) observe(rm, u);
  }
  for (double r : pair.radii)
    for (const auto& u : check_dirs) observe(r, u);
  pair.rel_slack = 2.0 * slack + 1e-9;
  return pair;
}

// Target sets for stabilization and viability questions. Membership and a
// distance surrogate; for sublevel sets the surrogate is the level gap.
class TargetSet {
 public:
  enum class Kind { Ball, BallComplement, Sublevel, ZeroSet };

  static TargetSet ball(const Vector& center, double radius,
                        std::string name = "ball") {
    if (!(radius > 0.0)) throw PreconditionError("TargetSet: radius <= 0");
    TargetSet t;
    t.kind_ = Kind::Ball;
    t.center_ = center;
    t.radius_ = radius;
    t.name_ = std::move(name);
    return t;
  }

  static TargetSet complement_of_ball(const Vector& center, double radius,
                                      std::string name = "exterior") {
    if (!(radius > 0.0)) throw PreconditionError("TargetSet: radius <= 0");
    TargetSet t;
    t.kind_ = Kind::BallComplement;
    t.center_ = center;
    t.radius_ = radius;
    t.name_ = std::move(name);
    return t;
  }

  static TargetSet sublevel(std::function<double(const Vector&)> fn,
                            double level, std::string name = "sublevel") {
    TargetSet t;
    t.kind_ = Kind::Sublevel;
    t.fn_ = std::move(fn);
    t.level_ = level;
    t.name_ = std::move(name);
    return t;
  }

  // M = {phi = 0}; |phi| doubles as the distance when phi is chosen as a
  // signed distance-like function
  static TargetSet zero_set(std::function<double(const Vector&)> fn,
                            std::string name = "zero-set",
                            double tol = 1e-12) {
    TargetSet t;
    t.kind_ = Kind::ZeroSet;
    t.fn_ = std::move(fn);
    t.zero_tol_ = tol;
    t.name_ = std::move(name);
    return t;
  }

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }

  bool contains(const Vector& x) const {
    switch (kind_) {
      case Kind::Ball:
        return (x - center_).norm() <= radius_;
      case Kind::BallComplement:
        return (x - center_).norm() >= radius_;
      case Kind::Sublevel:
        return fn_(x) <= level_;
      case Kind::ZeroSet:
        return std::abs(fn_(x)) <= zero_tol_;
    }
    return false;
  }

  double distance(const Vector& x) const {
    switch (kind_) {
      case Kind::Ball:
        return std::max(0.0, (x - center_).norm() - radius_);
      case Kind::BallComplement:
        return std::max(0.0, radius_ - (x - center_).norm());
      case Kind::Sublevel:
        return std::max(0.0, fn_(x) - level_);
      case Kind::ZeroSet:
        return std::abs(fn_(x));
    }
    return 0.0;
  }

  // deterministic boundary sample; available for ball-type sets
  std::vector<Vector> boundary_sample(int count, std::uint64_t seed) const {
    if (kind_ != Kind::Ball && kind_ != Kind::BallComplement)
      throw PreconditionError("TargetSet: no boundary sampler for this kind");
    std::vector<Vector> pts;
    const int dim = static_cast<int>(center_.size());
    if (dim == 2) {
      for (int k = 0; k < count; ++k) {
        const double a = 2.0 * std::numbers::pi * k / count;
        Vector x(2);
        x[0] = center_[0] + radius_ * std::cos(a);
        x[1] = center_[1] + radius_ * std::sin(a);
        pts.push_back(x);
      }
    } else {
      SampleRng rng(seed);
      for (int k = 0; k < count; ++k) {
        const auto d = rng.unit_vector(dim);
        Vector x(dim);
        for (int i = 0; i < dim; ++i) x[i] = center_[i] + radius_ * d[i];
        pts.push_back(x);
      }
    }
    return pts;
  }

 private:
  TargetSet() = default;
  Kind kind_ = Kind::Ball;
  Vector center_;
  double radius_ = 0.0;
  double level_ = 0.0;
  double zero_tol_ = 1e-12;
  std::function<double(const Vector&)> fn_;
  std::string name_;
};

}  // namespace stochstab
