#pragma once

// End-to-end runner: verify the candidate, synthesize feedback where asked,
// simulate the closed loop, and evaluate the certificates named by the
// scenario. Artifacts (report.json, path CSVs, plot.py) land in out_dir.
// Timings go to the log stream only; report.json depends on nothing but the
// scenario, so byte-identical inputs give byte-identical reports.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "stochstab/scenario.hpp"
#include "stochstab/simulator.hpp"

namespace stochstab {

struct RunReport {
  json report;
  bool overall_pass = true;
  std::optional<VerificationReport> verification;
  std::optional<FeedbackLaw> law;
  std::optional<MonteCarloReport> mc;
};

namespace pipeline_detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool same_point(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// control chosen by the verifier's own argmax at the first subjet element;
// memoized so drift, dispersion, and the trace share one grid sweep per step
struct WitnessState {
  Vector last_x;
  Vector last_u;
  bool valid = false;
  Vector rest_control;  // at the origin and when nothing is admissible
  long fallback_count = 0;
};

inline Sde witness_policy_sde(const ControlSystem& sys,
                              const LyapunovCandidate& v, double orth_tol) {
  auto st = std::make_shared<WitnessState>();
  if (auto eq = equilibrium_check(sys))
    st->rest_control = *eq;
  else
    st->rest_control = sys.controls.grid().front();

  auto choose = [sys, v, orth_tol, st](const Vector& x) -> Vector {
    if (st->valid && same_point(st->last_x, x)) return st->last_u;
    Vector u;
    if (x.norm() < 1e-12) {
      u = st->rest_control;
    } else {
      const auto elems = v.subjet_at(x);
      const auto& e = elems.front();
      try {
        u = constrained_hamiltonian(sys, x, e.p, e.y, orth_tol).witness;
      } catch (const NoAdmissibleControl&) {
        u = st->rest_control;
        ++st->fallback_count;
      }
    }
    st->last_x = x;
    st->last_u = u;
    st->valid = true;
    return u;
  };

  Sde sde;
  sde.dim_state = sys.dim_state;
  sde.dim_noise = sys.dim_noise;
  sde.name = sys.name;
  sde.drift = [sys, choose](const Vector& x) { return sys.drift(x, choose(x)); };
  sde.dispersion = [sys, choose](const Vector& x) {
    return sys.dispersion(x, choose(x));
  };
  sde.control_trace = choose;
  return sde;
}

inline Sde constant_policy_sde(const ControlSystem& sys, const Vector& u) {
  if (u.size() != sys.controls.dim())
    throw ScenarioError("constant policy: control dimension mismatch");
  Sde sde;
  sde.dim_state = sys.dim_state;
  sde.dim_noise = sys.dim_noise;
  sde.name = sys.name;
  sde.drift = [sys, u](const Vector& x) { return sys.drift(x, u); };
  sde.dispersion = [sys, u](const Vector& x) { return sys.dispersion(x, u); };
  sde.control_trace = [u](const Vector&) { return u; };
  return sde;
}

inline json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

// rows: t, x1..xN, u1..uP, V, int_l
inline void write_csv_rows(std::ostream& out, const SdePath& path, int stride,
                           bool with_header) {
  const std::size_t n = path.states.size();
  const std::size_t dim = static_cast<std::size_t>(path.states.front().size());
  const std::size_t ctrl =
      path.controls.empty() ? 0
                            : static_cast<std::size_t>(path.controls.front().size());
  if (with_header) {
    out << "t";
    for (std::size_t i = 1; i <= dim; ++i) out << ",x" << i;
    for (std::size_t i = 1; i <= ctrl; ++i) out << ",u" << i;
    out << ",V,int_l\n";
  }
  const bool have_v = path.v_values.size() == n;
  const bool have_l = path.running_l_integral.size() == n;
  for (std::size_t i = 0; i < n; ++i) {
    if (stride > 1 && i % static_cast<std::size_t>(stride) != 0 && i + 1 != n)
      continue;
    out << fmt17(path.times[i]);
    for (std::size_t d = 0; d < dim; ++d)
      out << ',' << fmt17(path.states[i][static_cast<int>(d)]);
    for (std::size_t c = 0; c < ctrl; ++c)
      out << ','
          << fmt17(i < path.controls.size()
                       ? path.controls[i][static_cast<int>(c)]
                       : path.controls.back()[static_cast<int>(c)]);
    out << ',' << fmt17(have_v ? path.v_values[i] : 0.0);
    out << ',' << fmt17(have_l ? path.running_l_integral[i] : 0.0);
    out << '\n';
  }
}

constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Plot the path CSVs written next to this script.

Reads paths.csv (blocks separated by '# path ...' comments) or path_*.csv,
then saves plot.png with the candidate value over time and the first two
state coordinates.
"""
import glob
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_blocks(filename):
    blocks = []
    header = None
    rows = []
    with open(filename) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if rows:
                    blocks.append(rows)
                    rows = []
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            rows.append([float(c) for c in cells])
    if rows:
        blocks.append(rows)
    return header, blocks


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    header = None
    blocks = []
    single = os.path.join(here, "paths.csv")
    if os.path.exists(single):
        header, blocks = read_blocks(single)
    else:
        for name in sorted(glob.glob(os.path.join(here, "path_*.csv"))):
            h, b = read_blocks(name)
            header = header or h
            blocks.extend(b)
    if not blocks:
        print("no path CSVs found", file=sys.stderr)
        return 1

    v_col = header.index("V")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for rows in blocks:
        ts = [r[0] for r in rows]
        vs = [r[v_col] for r in rows]
        ax1.plot(ts, vs, lw=0.8, alpha=0.7)
        if len(header) > 2 and header[2] == "x2":
            ax2.plot([r[1] for r in rows], [r[2] for r in rows],
                     lw=0.8, alpha=0.7)
        else:
            ax2.plot(ts, [r[1] for r in rows], lw=0.8, alpha=0.7)
    ax1.set_xlabel("t")
    ax1.set_ylabel("V")
    ax1.set_yscale("symlog", linthresh=1e-8)
    ax2.set_xlabel("x1")
    ax2.set_ylabel("x2" if len(header) > 2 and header[2] == "x2" else "x1")
    fig.tight_layout()
    out = os.path.join(here, "plot.png")
    fig.savefig(out, dpi=130)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
)PY";

inline json verdict_to_json(const PointVerdict& verdict) {
  json j;
  j["point"] = vector_to_json(verdict.point);
  j["status"] = to_string(verdict.status);
  if (std::isfinite(verdict.margin)) j["margin"] = verdict.margin;
  if (!verdict.note.empty()) j["note"] = verdict.note;
  return j;
}

}  // namespace pipeline_detail

inline RunReport run(const Scenario& s, const std::string& out_dir,
                     std::ostream* log = nullptr) {
  namespace pd = pipeline_detail;
  using clock = std::chrono::steady_clock;
  const auto say = [log](const std::string& line) {
    if (log) *log << line << "\n";
  };
  const auto secs = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  RunReport out;
  json& rep = out.report;
  rep["name"] = s.name;
  rep["scenario"] = s.doc;
  bool overall = true;

  // ---- verify -------------------------------------------------------------
  if (s.has_stage("verify") && s.verify.enabled) {
    if (!s.system)
      throw ScenarioError("verify stage needs a sampled-control system");
    const auto t0 = clock::now();
    RegionSpec spec;
    spec.condition = s.verify.condition;
    spec.rate = s.rate;
    spec.lambda = s.lambda;
    if (s.verify.condition == ConditionKind::SetClf) {
      if (s.targets.empty())
        throw ScenarioError("set condition needs a target");
      spec.target = &s.targets.front();
    }
    const auto vr = verify_region(*s.system, s.candidate, spec,
                                  s.verify.sampler, s.verify.seed,
                                  s.verify.tolerances);
    bool pass = vr.pass_fraction() >= s.verify.min_pass_fraction;

    json vj;
    vj["condition"] = vr.condition;
    vj["samples"] = vr.verdicts.size();
    vj["pass_count"] = vr.pass_count();
    vj["degenerate_count"] = vr.degenerate_count();
    vj["pass_fraction"] = vr.pass_fraction();
    vj["min_pass_fraction"] = s.verify.min_pass_fraction;
    double worst = std::numeric_limits<double>::infinity();
    json failures = json::array();
    for (const auto& verdict : vr.verdicts) {
      if (std::isfinite(verdict.margin)) worst = std::min(worst, verdict.margin);
      if (!verdict.passed() && failures.size() < 5)
        failures.push_back(pd::verdict_to_json(verdict));
    }
    if (std::isfinite(worst)) vj["worst_margin"] = worst;
    if (!failures.empty()) vj["failures"] = failures;

    if (s.check_positive_definite) {
      const double radius =
          s.verify.sampler.r_max > 0.0 ? s.verify.sampler.r_max : 2.0;
      const auto bad = positive_definiteness_violation(
          s.candidate, s.system->dim_state, radius, 200, s.verify.seed + 1);
      vj["positive_definite"] = !bad.has_value();
      if (bad) {
        vj["positive_definite_violation"] = pd::vector_to_json(*bad);
        pass = false;
      }
    }
    vj["pass"] = pass;
    rep["verify"] = vj;
    overall = overall && pass;
    out.verification = vr;
    say("[verify] " + std::to_string(vr.pass_count()) + "/" +
        std::to_string(vr.verdicts.size()) + " points pass (" +
        std::string(pass ? "ok" : "FAIL") + ", " +
        std::to_string(secs(t0, clock::now())) + "s)");
  }

  // ---- synthesize ---------------------------------------------------------
  if (s.has_stage("synthesize")) {
    if (!s.affine)
      throw ScenarioError("synthesize stage needs a control-affine system");
    const auto t0 = clock::now();
    SynthesisOptions opts;
    opts.probe_count = s.synthesis.probe_count;
    opts.probe_r_min = s.synthesis.r_min;
    opts.probe_r_max = s.synthesis.r_max;
    opts.seed = s.synthesis.seed;
    opts.margin_tol = s.synthesis.margin_tol;
    opts.orth_tol = s.synthesis.orth_tol;
    FeedbackLaw law =
        (s.affine->channels() == 1 && !s.affine->has_tau())
            ? synthesize_single_input(*s.affine, s.candidate, s.rate, opts)
            : synthesize_multi_input(*s.affine, s.candidate, s.rate, opts);

    json sj;
    sj["channels"] = law.channels;
    sj["formula"] = law.formula;
    sj["probes"] = law.probe.points.size();
    sj["probes_ok"] = law.probe.all_ok;
    sj["max_violation"] = law.probe.max_violation;
    sj["max_orth_residual"] = law.probe.max_orth_residual;
    sj["used_finite_differences"] = law.probe.used_finite_differences;
    if (s.affine->constraint_box) {
      const auto sat = saturation_check(law, s.affine->constraint_box,
                                        s.affine->dim_state,
                                        s.synthesis.r_max);
      sj["largest_radius_within_box"] = sat.largest_radius_within_box;
      sj["any_radius_within_box"] = sat.any_radius_within_box;
    }
    const bool pass = law.probe.all_ok;
    sj["pass"] = pass;
    rep["synthesize"] = sj;
    overall = overall && pass;
    out.law = std::move(law);
    say("[synthesize] " + std::to_string(out.law->probe.points.size()) +
        " probes, max violation " +
        pd::fmt17(out.law->probe.max_violation) + " (" +
        std::string(pass ? "ok" : "FAIL") + ", " +
        std::to_string(secs(t0, clock::now())) + "s)");
  }
  if (s.policy == Policy::Synthesized && !out.law)
    throw ScenarioError("policy 'synthesized' needs the synthesize stage");

  // ---- simulate -----------------------------------------------------------
  std::function<double(const Vector&)> metric;
  if (s.metric == "target-distance") {
    if (s.targets.empty())
      throw ScenarioError("metric 'target-distance' needs a target");
    const TargetSet* t0 = &s.targets.front();
    metric = [t0](const Vector& x) { return t0->distance(x); };
  } else {
    metric = [](const Vector& x) { return x.norm(); };
  }

  if (s.has_stage("simulate")) {
    const auto t0 = clock::now();
    Sde sde;
    switch (s.policy) {
      case Policy::Synthesized:
        sde = closed_loop(*s.affine, *out.law);
        break;
      case Policy::Witness:
        if (!s.system)
          throw ScenarioError("witness policy needs a sampled-control system");
        sde = pd::witness_policy_sde(*s.system, s.candidate,
                                     s.verify.tolerances.orth_tol);
        break;
      case Policy::Zero:
        if (!s.system)
          throw ScenarioError("zero policy needs a sampled-control system");
        sde = pd::constant_policy_sde(
            *s.system, Vector::Zero(s.system->controls.dim()));
        break;
      case Policy::Constant:
        if (!s.system)
          throw ScenarioError("constant policy needs a sampled-control system");
        sde = pd::constant_policy_sde(*s.system, s.constant_control);
        break;
    }
    if (s.simulation.x0.size() != sde.dim_state)
      throw ScenarioError("simulation.x0 has the wrong dimension");

    MetricsSpec ms;
    ms.v = &s.candidate;
    ms.rate = s.rate;
    for (const auto& t : s.targets) ms.targets.push_back(&t);
    ms.radial_metric = metric;
    ms.blowup_radius = s.simulation.blowup_radius;
    ms.checkpoint_count = s.simulation.checkpoints;

    // CSV sink; "long" concatenates blocks into paths.csv, "per-path" writes
    // path_<i>.csv, both with the shared header
    std::shared_ptr<std::ofstream> long_file;
    PathSink sink;
    if (!out_dir.empty() && s.csv.max_paths > 0) {
      std::filesystem::create_directories(out_dir);
      if (s.csv.layout == "per-path") {
        const std::string dir = out_dir;
        const int stride = s.csv.stride;
        const int cap = s.csv.max_paths;
        sink = [dir, stride, cap](const SdePath& path, int i) {
          if (i >= cap) return;
          char name[32];
          std::snprintf(name, sizeof name, "path_%03d.csv", i);
          std::ofstream f(dir + "/" + name);
          pd::write_csv_rows(f, path, stride, true);
        };
      } else {
        long_file = std::make_shared<std::ofstream>(out_dir + "/paths.csv");
        const int stride = s.csv.stride;
        const int cap = s.csv.max_paths;
        sink = [long_file, stride, cap](const SdePath& path, int i) {
          if (i >= cap) return;
          pd::write_csv_rows(*long_file, path, stride, i == 0);
          *long_file << "# path " << i << " seed " << path.seed << "\n";
        };
      }
    }

    out.mc = run_monte_carlo(sde, s.simulation.x0, s.simulation.dt,
                             s.simulation.horizon, s.simulation.paths,
                             s.simulation.master_seed, ms, sink);
    if (long_file) long_file->close();
    const auto& mc = *out.mc;

    json mj;
    mj["paths"] = mc.path_count;
    mj["dt"] = mc.dt;
    mj["horizon"] = mc.horizon;
    mj["master_seed"] = mc.master_seed;
    mj["escaped"] = mc.escaped_count;
    mj["x0_metric"] = metric(s.simulation.x0);
    mj["max_sup_metric"] = mc.max_sup_metric();
    const double worst_violation = mc.max_decrease_violation();
    if (std::isfinite(worst_violation))
      mj["max_decrease_violation"] = worst_violation;
    double final_v = 0.0, rate_mean = 0.0;
    int live = 0;
    for (const auto& p : mc.paths) {
      if (p.escaped) continue;
      final_v += p.final_v;
      rate_mean += p.rate_estimate;
      ++live;
    }
    if (live > 0) {
      mj["mean_final_v"] = final_v / live;
      mj["mean_rate_estimate"] = rate_mean / live;
    }
    rep["simulate"] = mj;
    say("[simulate] " + std::to_string(mc.path_count) + " paths, " +
        std::to_string(mc.escaped_count) + " escaped (" +
        std::to_string(secs(t0, clock::now())) + "s)");
  }

  // ---- certify ------------------------------------------------------------
  if (s.has_stage("certify") && !s.certificates.empty()) {
    if (!out.mc)
      throw ScenarioError("certify stage needs the simulate stage");
    const auto t0 = clock::now();
    const auto& mc = *out.mc;
    json certs = json::array();
    for (const auto& c : s.certificates) {
      const std::string type = c.at("type").get<std::string>();
      json e;
      e["type"] = type;
      bool pass = false;

      if (type == "decrease") {
        const double tol = c.value("tol", 1e-9);
        const double worst = mc.max_decrease_violation();
        pass = worst <= tol;
        e["tol"] = tol;
        e["max_violation"] = worst;
      } else if (type == "stability") {
        const double cert_tol = c.value("cert_tol", 0.05);
        const double conv = c.value("convergence_radius", 0.1);
        const double min_fraction = c.value("min_fraction", 1.0);
        std::function<double(double)> bound_map;
        const json& b = c.at("bound");
        if (b.is_string() && b.get<std::string>() == "fitted") {
          if (!s.comparison.enabled)
            throw ScenarioError(
                "stability: fitted bound needs comparison settings");
          const auto cp = fit_comparison_pair(
              s.candidate, static_cast<int>(s.simulation.x0.size()),
              s.comparison.radii, s.comparison.angular_samples);
          e["bound_slack"] = cp.rel_slack;
          bound_map = [cp](double r) {
            return cp.bound(r) * (1.0 + cp.rel_slack);
          };
        } else {
          const double factor = b.at("factor").get<double>();
          bound_map = [factor](double r) { return factor * r; };
        }
        const auto cert = stability_certificate(
            mc, bound_map, metric(s.simulation.x0), cert_tol, conv,
            min_fraction);
        pass = cert.pass;
        if (c.contains("min_converged_fraction"))
          pass = pass && cert.fraction_converged >=
                             c.at("min_converged_fraction").get<double>();
        e["bound_value"] = cert.bound_value;
        e["fraction_within_bound"] = cert.fraction_within_bound;
        e["wilson_lo"] = cert.wilson.lo;
        e["wilson_hi"] = cert.wilson.hi;
        e["fraction_converged"] = cert.fraction_converged;
      } else if (type == "rate") {
        const double expected = c.at("expected").get<double>();
        const double rel_tol = c.at("rel_tol").get<double>();
        double mean = 0.0;
        int live = 0;
        for (const auto& p : mc.paths)
          if (!p.escaped) {
            mean += p.rate_estimate;
            ++live;
          }
        mean = live > 0 ? mean / live : 0.0;
        pass = std::abs(mean - expected) <= rel_tol * std::abs(expected);
        e["expected"] = expected;
        e["rel_tol"] = rel_tol;
        e["mean_rate"] = mean;
      } else if (type == "entry-bound") {
        const int ti = c.value("target", 0);
        const double rate_floor = c.at("rate_floor").get<double>();
        const double inf_v = c.at("inf_boundary_v").get<double>();
        const double min_fraction = c.value("min_fraction", 1.0);
        double slack = c.value("slack", 0.0);
        if (c.value("slack_dt", false)) slack += mc.dt;
        const auto res = target_bound_check(
            mc, ti, s.candidate.value_at(s.simulation.x0), inf_v, rate_floor,
            slack, min_fraction);
        pass = res.pass;
        e["bound"] = res.bound;
        e["entered"] = res.entered;
        e["respected"] = res.respected;
        e["fraction_respected"] = res.fraction_respected;
      } else if (type == "attractor") {
        const int ti = c.value("target", 0);
        const double threshold = c.at("threshold").get<double>();
        double worst = 0.0;
        for (const auto& p : mc.paths)
          if (!p.escaped)
            worst = std::max(
                worst, p.tail_distances.at(static_cast<std::size_t>(ti)));
        pass = worst <= threshold;
        e["threshold"] = threshold;
        e["max_tail_distance"] = worst;
      } else if (type == "noise-free-v") {
        // sample variance of V across paths at each checkpoint must stay a
        // small multiple of dt relative to the squared mean
        const double factor = c.at("factor").get<double>();
        double worst_ratio = 0.0;
        const std::size_t cols = mc.checkpoint_times.size();
        for (std::size_t k = 0; k < cols; ++k) {
          double mean = 0.0, m2 = 0.0;
          int live = 0;
          for (const auto& p : mc.paths) {
            if (p.escaped || p.v_checkpoints.size() <= k) continue;
            ++live;
            const double d = p.v_checkpoints[k] - mean;
            mean += d / live;
            m2 += d * (p.v_checkpoints[k] - mean);
          }
          if (live < 2 || mean * mean < 1e-24) continue;
          const double var = m2 / (live - 1);
          worst_ratio = std::max(worst_ratio, var / (mean * mean));
        }
        pass = worst_ratio <= factor * mc.dt;
        e["factor"] = factor;
        e["worst_ratio"] = worst_ratio;
        e["budget"] = factor * mc.dt;
      } else {
        throw ScenarioError("unknown certificate type '" + type + "'");
      }

      e["pass"] = pass;
      overall = overall && pass;
      certs.push_back(std::move(e));
    }
    rep["certificates"] = certs;
    say("[certify] " + std::to_string(certs.size()) + " certificates (" +
        std::to_string(secs(t0, clock::now())) + "s)");
  }

  rep["overall_pass"] = overall;
  out.overall_pass = overall;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    {
      std::ofstream f(out_dir + "/report.json");
      f << rep.dump(2) << "\n";
    }
    if (out.mc) {
      std::ofstream f(out_dir + "/plot.py");
      f << pipeline_detail::kPlotScript;
    }
  }
  say(std::string("[result] ") + (overall ? "pass" : "FAIL"));
  return out;
}

}  // namespace stochstab
