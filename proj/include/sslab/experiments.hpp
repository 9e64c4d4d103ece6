#pragma once

// Audits of the a priori estimates on discrete solutions, scaling fits
// over datum families, manufactured-solution convergence studies and the
// named presets used by the CLI and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslab/exponents.hpp"
#include "sslab/field.hpp"
#include "sslab/operator.hpp"
#include "sslab/scheme.hpp"

namespace sslab {

/// The audit does not apply (wrong regime, too few points, ...).
class AuditRefused : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// The audit needs converged states and got an unconverged one.
class UnconvergedState : public AuditRefused {
public:
  using AuditRefused::AuditRefused;
};

struct AuditCheck {
  std::string label;
  double left = 0.0;
  double right = 0.0;
  double slack = 0.0;
  double eps = 0.0;
  bool pass = true;
};

/// One audited inequality family. Every check passes iff slack >= -eps.
struct AuditReport {
  std::string id;
  std::string context;
  double eps_res = 0.0;
  std::vector<AuditCheck> checks;
  /// Fitted or explicit constants, reported with the audit.
  std::vector<std::pair<std::string, double>> constants;
  std::vector<std::string> notes;

  AuditCheck& add(std::string label, double left, double right) { return add(std::move(label), left, right, eps_res); }
  AuditCheck& add(std::string label, double left, double right, double eps) {
    AuditCheck c{std::move(label), left, right, right - left, eps, false};
    c.pass = std::isfinite(c.slack) && c.slack >= -eps;
    checks.push_back(std::move(c));
    return checks.back();
  }

  [[nodiscard]] bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.pass; });
  }
  /// The check with the smallest slack relative to its tolerance.
  [[nodiscard]] const AuditCheck* worst() const {
    const AuditCheck* w = nullptr;
    for (const auto& c : checks)
      if (!w || c.slack + c.eps < w->slack + w->eps) w = &c;
    return w;
  }
};

inline std::string grid_context(const ProblemData& data, int n) {
  std::ostringstream os;
  os << data.params.str() << " grid=" << data.grid.n_cells() << "^" << data.grid.dim() << " n=" << n;
  return os.str();
}

/// eps_res = 10 tol_outer ||f||_{L^1}.
inline double residual_slack(const ProblemData& data, const IterationControl& it) {
  double l1 = 0.0;
  for (double s : data.f.values()) l1 += std::abs(s);
  return 10.0 * it.tol_outer * l1 * data.grid.cell_volume();
}

inline double datum_norm(const ProblemData& data) { return lp_norm(data.f, Exponent(data.params.m)); }

namespace detail {

inline void require_converged(const SchemeState& st) {
  if (!st.converged)
    throw UnconvergedState("state at n=" + std::to_string(st.n) + " did not converge" +
                           (st.message.empty() ? std::string() : ": " + st.message));
}

inline Regime require_regime(const ProblemData& data, std::initializer_list<RegimeTag> any_of, const char* audit) {
  if (data.grid.theory_off())
    throw AuditRefused(std::string(audit) + ": grid dimension " + std::to_string(data.grid.dim()) +
                       " is below 3, the estimates are not claimed there");
  const Regime reg = classify(data.params);
  for (RegimeTag t : any_of)
    if (reg.has(t)) return reg;
  std::string want;
  for (RegimeTag t : any_of) want += (want.empty() ? "" : " or ") + std::string(to_string(t));
  throw AuditRefused(std::string(audit) + " needs regime " + want + "; " + data.params.str() + " is not in it");
}

inline double weighted_sum(const Field& f, const std::function<double(std::size_t)>& g) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += g(i);
  return acc * f.grid().cell_volume();
}

/// Least-squares line through (x, y).
inline std::pair<double, double> ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / k;
    my += y[i] / k;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

inline void require_family(const std::vector<double>& lambdas, std::size_t min_points) {
  if (lambdas.size() < min_points)
    throw AuditRefused("datum family needs at least " + std::to_string(min_points) + " lambda values, got " +
                       std::to_string(lambdas.size()));
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw AuditRefused("lambda values must be > 0");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) throw AuditRefused("lambda values must be strictly increasing");
  }
}

inline double power_integral(const SchemeState& st, double p, bool low_v_only) {
  return weighted_sum(st.u, [&](std::size_t i) {
    return (!low_v_only || st.v[i] <= 1.0) ? std::pow(st.u[i], p) : 0.0;
  });
}

inline std::string family_context(const ProblemData& data, const std::vector<double>& lambdas,
                                  const std::vector<SchemeState>& states) {
  std::ostringstream os;
  os << grid_context(data, states.front().n) << " lambda=" << lambdas.front() << ".." << lambdas.back();
  return os.str();
}

}  // namespace detail

/// Solves the scaled problems lambda * f at fixed n.
inline std::vector<SchemeState> solve_family(const ProblemData& data, const std::vector<double>& lambdas, int n,
                                             const IterationControl& it = {}, int jobs = 1) {
  return parallel_map<SchemeState>(lambdas.size(), jobs,
                                   [&](std::size_t i) { return solve_level(data.scaled(lambdas[i]), n, it); });
}

/// Discrete energy inequalities for u and v, obtained by testing each
/// equation with its own solution.
inline AuditReport audit_energy(const SchemeState& st, const ProblemData& data, const IterationControl& it = {}) {
  detail::require_converged(st);
  AuditReport rep{"energy", grid_context(data, st.n), residual_slack(data, it), {}, {}, {}};
  const Field fn = truncate_datum(data.f, st.n);
  const double alpha = data.coeff.alpha(), gamma = data.gamma(), theta = data.theta(), r = data.r();
  const double shift = 1.0 / st.n;
  const double hu = h1_seminorm(st.u), hv = h1_seminorm(st.v);
  const double rhs_u = detail::weighted_sum(st.u, [&](std::size_t i) { return fn[i] * std::pow(st.u[i], 1.0 - gamma); });
  const double rhs_v = detail::weighted_sum(
      st.u, [&](std::size_t i) { return std::pow(st.u[i], r) * st.v[i] / std::pow(st.v[i] + shift, theta); });
  rep.add("alpha |u|_H1^2 <= sum f_n u^(1-gamma)", alpha * hu * hu, rhs_u);
  rep.add("alpha |v|_H1^2 <= sum u^r v (v+1/n)^-theta", alpha * hv * hv, rhs_v);
  return rep;
}

/// Superlevel estimate: the v-equation source over {u >= h} is controlled
/// by beta/(2h) times the two energies.
inline AuditReport audit_superlevel(const SchemeState& st, const ProblemData& data,
                                    const std::vector<double>& heights = {0.5, 1.0, 2.0},
                                    const IterationControl& it = {}) {
  detail::require_converged(st);
  AuditReport rep{"superlevel", grid_context(data, st.n), residual_slack(data, it), {}, {}, {}};
  const double r = data.r(), theta = data.theta(), shift = 1.0 / st.n, beta = data.coeff.beta();
  Field weight(data.grid);
  for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = std::pow(st.u[i], r) / std::pow(st.v[i] + shift, theta);
  const double hu = h1_seminorm(st.u), hv = h1_seminorm(st.v);
  for (double h : heights) {
    std::ostringstream label;
    label << "h=" << h;
    rep.add(label.str(), superlevel_integral(st.u, weight, h), beta / (2.0 * h) * (hu * hu + hv * hv));
  }
  return rep;
}

/// Residuals of both discrete equations and the sign conditions.
inline AuditReport audit_self_consistency(const SchemeState& st, const ProblemData& data,
                                          double max_residual = 1e-6) {
  AuditReport rep{"self_consistency", grid_context(data, st.n), 0.0, {}, {}, {}};
  if (!st.converged) rep.notes.push_back("level did not converge: " + st.message);
  rep.add("converged", st.converged ? 0.0 : 1.0, 0.0);
  const auto res = equation_residuals(data, st.u, st.v, st.n);
  rep.add("u-equation relative residual", res.u, max_residual);
  rep.add("v-equation relative residual", res.v, max_residual);
  const auto pos = positivity(data, st);
  rep.add("min u >= 0", -st.u.min(), 0.0);
  rep.add("u > 0 where f > 0", pos.u_positive_on_support ? 0.0 : 1.0, 0.0);
  rep.add("v > floor at interior nodes", pos.v_positive ? 0.0 : 1.0, 0.0);
  return rep;
}

/// Bounded regime: ||u_n||_inf <= 1 + C ||f||_{L^m}, C fitted on the
/// smallest n and checked with 5% headroom on all larger n.
inline AuditReport audit_linfty_bound(const std::vector<SchemeState>& states, const ProblemData& data) {
  detail::require_regime(data, {RegimeTag::Bounded}, "audit_linfty_bound");
  if (states.empty()) throw AuditRefused("audit_linfty_bound needs at least one level");
  for (const auto& s : states) detail::require_converged(s);
  AuditReport rep{"linfty_bound", grid_context(data, states.back().n), 0.0, {}, {}, {}};
  const double fm = datum_norm(data);
  const double C = fm > 0.0 ? std::max(0.0, (states.front().u.sup_abs() - 1.0) / fm) : 0.0;
  rep.constants.push_back({"C (fitted at n=" + std::to_string(states.front().n) + ")", C});
  for (std::size_t i = 1; i < states.size(); ++i)
    rep.add("n=" + std::to_string(states[i].n), states[i].u.sup_abs(), 1.05 * (1.0 + C * fm), 0.0);
  if (states.size() == 1) rep.notes.push_back("single level: only the fit point, nothing extrapolated");
  return rep;
}

/// Relative change of ||u_n||_inf over the last doubling of the schedule.
inline AuditReport audit_sup_stabilization(const std::vector<SchemeState>& states, const ProblemData& data,
                                           double max_change = 0.05) {
  if (states.size() < 2) throw AuditRefused("stabilization needs at least two levels");
  const auto& a = states[states.size() - 2];
  const auto& b = states.back();
  if (b.n != 2 * a.n) throw AuditRefused("the last two levels must be a doubling");
  detail::require_converged(a);
  detail::require_converged(b);
  AuditReport rep{"sup_stabilization", grid_context(data, b.n), 0.0, {}, {}, {}};
  const double sb = b.u.sup_abs();
  const double change = sb > 0.0 ? std::abs(sb - a.u.sup_abs()) / sb : 0.0;
  rep.add("|sup u_2n - sup u_n| / sup u_2n", change, max_change, 0.0);
  return rep;
}

/// Level-n certificate ||u_n||_inf <= C n^(1+gamma), C fitted at the first level.
inline AuditReport audit_level_certificate(const std::vector<SchemeState>& states, const ProblemData& data) {
  if (states.empty()) throw AuditRefused("level certificate needs at least one level");
  for (const auto& s : states) detail::require_converged(s);
  AuditReport rep{"level_certificate", grid_context(data, states.back().n), 0.0, {}, {}, {}};
  const double e = 1.0 + data.gamma();
  const double C = states.front().u.sup_abs() / std::pow(states.front().n, e);
  rep.constants.push_back({"C (fitted at n=" + std::to_string(states.front().n) + ")", C});
  for (std::size_t i = 1; i < states.size(); ++i)
    rep.add("n=" + std::to_string(states[i].n), states[i].u.sup_abs(), C * std::pow(states[i].n, e), 0.0);
  return rep;
}

/// ||u_2n - u_n||_{L^2} strictly decreasing over the last `doublings` doublings.
inline AuditReport audit_cauchy_trend(const std::vector<SchemeState>& states, const ProblemData& data,
                                      int doublings = 3) {
  if (static_cast<int>(states.size()) < doublings + 1)
    throw AuditRefused("Cauchy trend needs " + std::to_string(doublings + 1) + " levels");
  const std::size_t first = states.size() - static_cast<std::size_t>(doublings) - 1;
  for (std::size_t i = first; i < states.size(); ++i) {
    detail::require_converged(states[i]);
    if (i > first && states[i].n != 2 * states[i - 1].n) throw AuditRefused("Cauchy trend needs doubling levels");
  }
  AuditReport rep{"cauchy_trend", grid_context(data, states.back().n), 0.0, {}, {}, {}};
  std::vector<double> diffs;
  for (std::size_t i = first + 1; i < states.size(); ++i) diffs.push_back(lp_norm(states[i].u - states[i - 1].u, 2.0));
  for (std::size_t k = 1; k < diffs.size(); ++k) {
    const int n = states[first + k + 1].n;
    auto& c = rep.add("d(" + std::to_string(n / 2) + "," + std::to_string(n) + ") < d(" + std::to_string(n / 4) + "," +
                          std::to_string(n / 2) + ")",
                      diffs[k], diffs[k - 1], 0.0);
    // strict decrease
    c.pass = c.slack > 0.0;
  }
  return rep;
}

struct ScalingFit {
  std::vector<double> lambdas;
  Exponent exponent;
  std::vector<double> norms;
  std::vector<double> energies;
  double slope = 0.0;
  double intercept = 0.0;
  double predicted_slope = 0.0;
  double tolerance = 0.10;
  double energy_slope = 0.0;
  double C = 0.0;
  double C_energy = 0.0;
  AuditReport report;
};

/// Dual-space regime: ||u||_{L^{m**(1+gamma)}} <= C ||f||^{1/(1+gamma)} and
/// ||u||_H1^2 <= C ||f||^{2/(1+gamma)} over f_lambda = lambda f.
inline ScalingFit audit_scaling_law(const ProblemData& data, const std::vector<double>& lambdas,
                                    const std::vector<SchemeState>& states, double headroom = 0.10) {
  const Regime reg = detail::require_regime(data, {RegimeTag::DualSpace}, "audit_scaling_law");
  detail::require_family(lambdas, 4);
  if (states.size() != lambdas.size()) throw AuditRefused("one state per lambda is required");
  for (const auto& s : states) detail::require_converged(s);
  ScalingFit fit;
  fit.lambdas = lambdas;
  fit.exponent = *reg.u_exponent(RegimeTag::DualSpace);
  const double g = data.gamma();
  fit.predicted_slope = 1.0 / (1.0 + g);
  const double f0 = datum_norm(data);
  std::vector<double> lx, ly, le;
  for (std::size_t i = 0; i < states.size(); ++i) {
    fit.norms.push_back(lp_norm(states[i].u, fit.exponent));
    const double h1 = h1_seminorm(states[i].u);
    fit.energies.push_back(h1 * h1);
    lx.push_back(std::log(lambdas[i]));
    ly.push_back(std::log(fit.norms.back()));
    le.push_back(std::log(fit.energies.back()));
  }
  std::tie(fit.slope, fit.intercept) = detail::ols(lx, ly);
  fit.energy_slope = detail::ols(lx, le).first;
  AuditReport& rep = fit.report;
  rep.id = "scaling_law";
  rep.context = detail::family_context(data, lambdas, states);
  rep.add("fitted slope <= 1/(1+gamma) + tolerance", fit.slope, fit.predicted_slope + fit.tolerance, 0.0);
  const double norm0 = lambdas.front() * f0;
  fit.C = fit.norms.front() / std::pow(norm0, 1.0 / (1.0 + g));
  fit.C_energy = fit.energies.front() / std::pow(norm0, 2.0 / (1.0 + g));
  rep.constants.push_back({"C_Lp (fitted at smallest lambda)", fit.C});
  rep.constants.push_back({"C_H1 (fitted at smallest lambda)", fit.C_energy});
  rep.constants.push_back({"energy slope (predicted 2/(1+gamma))", fit.energy_slope});
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    const double fl = lambdas[i] * f0;
    std::ostringstream a, b;
    a << "L^" << fit.exponent.str() << " bound, lambda=" << lambdas[i];
    b << "H1 energy bound, lambda=" << lambdas[i];
    rep.add(a.str(), fit.norms[i], (1.0 + headroom) * fit.C * std::pow(fl, 1.0 / (1.0 + g)), 0.0);
    rep.add(b.str(), fit.energies[i], (1.0 + headroom) * fit.C_energy * std::pow(fl, 2.0 / (1.0 + g)), 0.0);
  }
  return fit;
}

inline ScalingFit audit_scaling_law(const ProblemData& data, const std::vector<double>& lambdas, int n_fixed,
                                    const IterationControl& it = {}, int jobs = 1) {
  detail::require_regime(data, {RegimeTag::DualSpace}, "audit_scaling_law");
  detail::require_family(lambdas, 4);
  return audit_scaling_law(data, lambdas, solve_family(data, lambdas, n_fixed, it, jobs));
}

/// Outside the dual space: the L^r bound (and, for theta = 0, the L^{r+1}
/// bound) with the constants of the proof chain evaluated explicitly.
/// Each link of the chain is reported as its own check.
inline AuditReport audit_outside_dual(const SchemeState& st, const ProblemData& data, const IterationControl& it = {}) {
  const Regime reg =
      detail::require_regime(data, {RegimeTag::OutsideDualLr, RegimeTag::OutsideDualLr1}, "audit_outside_dual");
  detail::require_converged(st);
  AuditReport rep{"outside_dual", grid_context(data, st.n), residual_slack(data, it), {}, {}, {}};
  const Field fn = truncate_datum(data.f, st.n);
  const double r = data.r(), g = data.gamma(), th = data.theta(), shift = 1.0 / st.n;
  const double alpha = data.coeff.alpha(), beta = data.coeff.beta();
  const double omega = data.grid.measure();
  const Exponent mc = holder_conjugate(Exponent(data.params.m));
  const double inv_mc = mc.is_infinite() ? 0.0 : 1.0 / mc.value().to_double();
  const double fm = datum_norm(data);
  const Field& u = st.u;
  const Field& v = st.v;
  const double hu = h1_seminorm(u), hv = h1_seminorm(v);
  const double E = detail::weighted_sum(u, [&](std::size_t i) { return fn[i] * std::pow(u[i], 1.0 - g); });
  const double pairing = weighted_pairing(data.coeff, v, u);
  const double src = detail::weighted_sum(u, [&](std::size_t i) { return std::pow(u[i], r + 1.0) / std::pow(v[i] + shift, th); });
  rep.add("sum u^(r+1)(v+1/n)^-theta <= <A Dv, Du>", src, pairing);
  rep.add("<A Dv, Du> <= beta/2 (|u|^2 + |v|^2)", pairing, 0.5 * beta * (hu * hu + hv * hv));
  rep.add("alpha (|u|^2 + |v|^2) <= sum f_n u^(1-gamma)", alpha * (hu * hu + hv * hv), E);

  if (reg.has(RegimeTag::OutsideDualLr)) {
    const double high = detail::weighted_sum(u, [&](std::size_t i) { return v[i] >= 1.0 ? std::pow(u[i], r) : 0.0; });
    const double low = detail::weighted_sum(u, [&](std::size_t i) { return v[i] < 1.0 ? std::pow(u[i], r) : 0.0; });
    const double low_src = detail::weighted_sum(
        u, [&](std::size_t i) { return v[i] < 1.0 ? std::pow(u[i], r + 1.0) / std::pow(v[i] + shift, th) : 0.0; });
    rep.add("L^r: sum_{v>=1} u^r <= sum f_n u^(1-gamma)", high, E);
    rep.add("L^r: sum_{v<1} u^r <= |Omega| + 2^theta sum_{v<1} u^(r+1)(v+1/n)^-theta", low,
            omega + std::pow(2.0, th) * low_src);
    const double ur = lp_norm(u, r);
    const double holder = std::pow(omega, inv_mc - (1.0 - g) / r);
    rep.add("L^r: Hölder on sum f_n u^(1-gamma)", E, fm * holder * std::pow(ur, 1.0 - g));
    const double C = (1.0 + std::pow(2.0, th) * beta / (2.0 * alpha)) * holder;
    rep.constants.push_back({"C_Lr (explicit)", C});
    rep.add("L^r: ||u||_r^r - C ||f||_m ||u||_r^(1-gamma) <= |Omega|",
            std::pow(ur, r) - C * fm * std::pow(ur, 1.0 - g), omega);
  }
  if (reg.has(RegimeTag::OutsideDualLr1)) {
    const double ur1 = lp_norm(u, r + 1.0);
    const double holder = std::pow(omega, inv_mc - (1.0 - g) / (r + 1.0));
    rep.add("L^(r+1): Hölder on sum f_n u^(1-gamma)", E, fm * holder * std::pow(ur1, 1.0 - g));
    const double C = beta / (2.0 * alpha) * holder;
    rep.constants.push_back({"C_Lr1 (explicit)", C});
    rep.add("L^(r+1): ||u||_(r+1) <= (C ||f||_m)^(1/(r+gamma))", ur1, std::pow(C * fm, 1.0 / (r + g)));
  }
  return rep;
}

/// The {v <= 1} part of int u^(r+1+gamma) against the explicit constant
/// 2^theta (1+gamma)/gamma int f, for every member of the family.
inline AuditReport audit_low_v_split(const ProblemData& data, const std::vector<double>& lambdas,
                                     const std::vector<SchemeState>& states) {
  detail::require_regime(data, {RegimeTag::HigherIntegrability}, "audit_low_v_split");
  detail::require_family(lambdas, 1);
  if (states.size() != lambdas.size()) throw AuditRefused("one state per lambda is required");
  for (const auto& s : states) detail::require_converged(s);
  const double p = data.r() + 1.0 + data.gamma();
  const double C_split = std::pow(2.0, data.theta()) * (1.0 + data.gamma()) / data.gamma();
  const double f1 = integral(data.f);
  AuditReport rep{"low_v_split", detail::family_context(data, lambdas, states), 0.0, {}, {}, {}};
  rep.constants.push_back({"C_split (explicit)", C_split});
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    std::ostringstream lab;
    lab << "int_{v<=1} u^(r+1+gamma) <= C_split int f, lambda=" << lambdas[i];
    rep.add(lab.str(), detail::power_integral(states[i], p, true), C_split * lambdas[i] * f1, 0.0);
  }
  return rep;
}

/// Higher integrability: int u^(r+1+gamma) <= C ||f|| (1 + ||f||^(1/(r-1+gamma)))
/// with C fitted at the smallest lambda, followed by the {v <= 1} split checks.
inline AuditReport audit_higher_integrability(const ProblemData& data, const std::vector<double>& lambdas,
                                              const std::vector<SchemeState>& states, double headroom = 0.10) {
  detail::require_regime(data, {RegimeTag::HigherIntegrability}, "audit_higher_integrability");
  detail::require_family(lambdas, 2);
  if (states.size() != lambdas.size()) throw AuditRefused("one state per lambda is required");
  for (const auto& s : states) detail::require_converged(s);
  const double r = data.r(), g = data.gamma();
  const double p = r + 1.0 + g;
  AuditReport rep{"higher_integrability", detail::family_context(data, lambdas, states), 0.0, {}, {}, {}};
  const double f0 = datum_norm(data);
  const auto shape = [&](double lam) {
    const double fl = lam * f0;
    return fl * (1.0 + std::pow(fl, 1.0 / (r - 1.0 + g)));
  };
  const double C = detail::power_integral(states.front(), p, false) / shape(lambdas.front());
  rep.constants.push_back({"C (fitted at smallest lambda)", C});
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    std::ostringstream lab;
    lab << "int u^(r+1+gamma), lambda=" << lambdas[i];
    rep.add(lab.str(), detail::power_integral(states[i], p, false), (1.0 + headroom) * C * shape(lambdas[i]), 0.0);
  }
  const AuditReport split = audit_low_v_split(data, lambdas, states);
  rep.constants.insert(rep.constants.end(), split.constants.begin(), split.constants.end());
  rep.checks.insert(rep.checks.end(), split.checks.begin(), split.checks.end());
  return rep;
}

inline AuditReport audit_higher_integrability(const ProblemData& data, const std::vector<double>& lambdas, int n_fixed,
                                              const IterationControl& it = {}, int jobs = 1) {
  detail::require_regime(data, {RegimeTag::HigherIntegrability}, "audit_higher_integrability");
  detail::require_family(lambdas, 2);
  return audit_higher_integrability(data, lambdas, solve_family(data, lambdas, n_fixed, it, jobs));
}

/// r = 2 dual-space estimates on v: ||v||_inf <= 1 + C ||f||^{2/(1+gamma)}
/// when m > d/(3+gamma), otherwise ||v||_{L^{s_m}} <= C ||f||^{2/((1+theta)(1+gamma))}.
inline AuditReport audit_v_regularity(const ProblemData& data, const std::vector<double>& lambdas,
                                      const std::vector<SchemeState>& states, double headroom = 0.10) {
  detail::require_regime(data, {RegimeTag::DualSpace}, "audit_v_regularity");
  if (data.params.r != Rational(2)) throw AuditRefused("audit_v_regularity requires r = 2");
  detail::require_family(lambdas, 2);
  if (states.size() != lambdas.size()) throw AuditRefused("one state per lambda is required");
  for (const auto& s : states) detail::require_converged(s);
  const double g = data.gamma(), th = data.theta();
  const double f0 = datum_norm(data);
  Exponent s = s_m(data.params);
  AuditReport rep{"v_regularity", detail::family_context(data, lambdas, states), 0.0, {}, {}, {}};
  if (s.is_any_finite()) {
    s = Exponent(2 * data.params.d);
    rep.notes.push_back("m = d/(3+gamma): every finite exponent applies; auditing p = 2d");
  }
  if (s.is_infinite()) {
    const double e = 2.0 / (1.0 + g);
    const double fl0 = lambdas.front() * f0;
    const double C = std::max(0.0, (states.front().v.sup_abs() - 1.0) / std::pow(fl0, e));
    rep.constants.push_back({"C (fitted at smallest lambda)", C});
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
      std::ostringstream lab;
      lab << "||v||_inf, lambda=" << lambdas[i];
      rep.add(lab.str(), states[i].v.sup_abs(), (1.0 + headroom) * (1.0 + C * std::pow(lambdas[i] * f0, e)), 0.0);
    }
  } else {
    const double e = 2.0 / ((1.0 + th) * (1.0 + g));
    const double C = lp_norm(states.front().v, s) / std::pow(lambdas.front() * f0, e);
    rep.constants.push_back({"C (fitted at smallest lambda)", C});
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
      std::ostringstream lab;
      lab << "||v||_" << s.str() << ", lambda=" << lambdas[i];
      rep.add(lab.str(), lp_norm(states[i].v, s), (1.0 + headroom) * C * std::pow(lambdas[i] * f0, e), 0.0);
    }
  }
  return rep;
}

inline AuditReport audit_v_regularity(const ProblemData& data, const std::vector<double>& lambdas, int n_fixed,
                                      const IterationControl& it = {}, int jobs = 1) {
  detail::require_regime(data, {RegimeTag::DualSpace}, "audit_v_regularity");
  if (data.params.r != Rational(2)) throw AuditRefused("audit_v_regularity requires r = 2");
  detail::require_family(lambdas, 2);
  return audit_v_regularity(data, lambdas, solve_family(data, lambdas, n_fixed, it, jobs));
}

// ---------------------------------------------------------------------------
// Manufactured solutions

struct MmsLevel {
  int n_cells = 0;
  double h = 0.0;
  double err_u = 0.0;
  double err_v = 0.0;
};

struct MmsReport {
  std::string label;
  std::vector<MmsLevel> levels;
  /// Observed sup-norm orders between consecutive grids.
  std::vector<double> orders_u;
  std::vector<double> orders_v;

  [[nodiscard]] double min_order() const {
    double m = std::numeric_limits<double>::infinity();
    for (double o : orders_u) m = std::min(m, o);
    for (double o : orders_v) m = std::min(m, o);
    return m;
  }
};

namespace detail {

inline double sine_product(const Point& x, int d) {
  double p = 1.0;
  for (int k = 0; k < d; ++k) p *= std::sin(std::numbers::pi * x[k]);
  return p;
}

inline void finish_orders(MmsReport& rep, bool with_v) {
  auto order = [](double e0, double e1, double h0, double h1) {
    return (e0 > 0.0 && e1 > 0.0) ? std::log(e0 / e1) / std::log(h0 / h1) : std::numeric_limits<double>::quiet_NaN();
  };
  for (std::size_t i = 1; i < rep.levels.size(); ++i) {
    const auto& a = rep.levels[i - 1];
    const auto& b = rep.levels[i];
    rep.orders_u.push_back(order(a.err_u, b.err_u, a.h, b.h));
    if (with_v) rep.orders_v.push_back(order(a.err_v, b.err_v, a.h, b.h));
  }
}

}  // namespace detail

/// -div(a Du) = s with a(x) = 1 + |x|^2/2 and u* = amplitude prod sin(pi x_k).
inline MmsReport linear_mms(int d, const std::vector<int>& grids, double amplitude = 1.0) {
  MmsReport rep;
  rep.label = "linear d=" + std::to_string(d);
  constexpr double pi = std::numbers::pi;
  for (int nc : grids) {
    const GridSpec g(d, nc);
    auto a = [d](int, const Point& x) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += x[k] * x[k];
      return 1.0 + 0.5 * s;
    };
    const auto coeff = CoefficientField::from_face_function(g, a, 1.0, 1.0 + 0.5 * d);
    const Field exact = Field::sample(g, [&](const Point& x) { return amplitude * detail::sine_product(x, d); });
    const Field src = Field::sample(g, [&](const Point& x) {
      const double ax = a(0, x);
      double s = ax * d * pi * pi * detail::sine_product(x, d);
      for (int k = 0; k < d; ++k) {
        double t = x[k] * pi * std::cos(pi * x[k]);
        for (int j = 0; j < d; ++j)
          if (j != k) t *= std::sin(pi * x[j]);
        s -= t;
      }
      return amplitude * s;
    });
    const auto sol = cg_solve(assemble(coeff, Field(g)), src, 1e-12, 100000);
    rep.levels.push_back({nc, g.h(), (sol.x - exact).sup_abs(), 0.0});
  }
  detail::finish_orders(rep, false);
  return rep;
}

/// Coupled system at fixed regularization n with a = 1,
/// u* = A prod sin(pi x_k), v* = u*/2. The datum is chosen so that the
/// u-equation holds exactly (it is >= 0); the v-equation gets an extra source.
inline MmsReport coupled_mms(int d, const std::vector<int>& grids, const Params& params, int n_reg,
                             const IterationControl& it = {}, double amplitude = 1.0) {
  MmsReport rep;
  rep.label = "coupled d=" + std::to_string(d);
  constexpr double pi = std::numbers::pi;
  const double r = params.r.to_double(), g = params.gamma.to_double(), th = params.theta.to_double();
  const double shift = 1.0 / n_reg;
  for (int nc : grids) {
    const GridSpec grid(d, nc);
    auto us = [&](const Point& x) { return amplitude * detail::sine_product(x, d); };
    auto vs = [&](const Point& x) { return 0.5 * us(x); };
    const Field f = Field::sample(grid, [&](const Point& x) {
      const double u = us(x), v = vs(x);
      return std::pow(u + shift, g) * (d * pi * pi * u + std::pow(v, 1.0 - th) * std::pow(u, r - 1.0));
    });
    if (f.max() > n_reg) throw DomainError("manufactured datum exceeds the truncation level n; raise n_reg");
    Params p = params;
    p.d = d;
    ProblemData data(p, CoefficientField::constant(grid, 1.0), f);
    data.source_v = Field::sample(grid, [&](const Point& x) {
      const double u = us(x), v = vs(x);
      return d * pi * pi * v - std::pow(u, r) / std::pow(v + shift, th);
    });
    const auto st = solve_level(data, n_reg, it);
    if (!st.converged) throw NonConvergence("coupled MMS did not converge on " + std::to_string(nc) + "^" +
                                                std::to_string(d) + ": " + st.message,
                                            std::max(st.residual_u, st.residual_v), st.outer_iters);
    rep.levels.push_back({nc, grid.h(), (st.u - Field::sample(grid, us)).sup_abs(),
                          (st.v - Field::sample(grid, vs)).sup_abs()});
  }
  detail::finish_orders(rep, true);
  return rep;
}

// ---------------------------------------------------------------------------
// Data and presets

struct DatumSpec {
  enum class Kind { Constant, IndicatorBox, File };
  Kind kind = Kind::Constant;
  double value = 1.0;
  std::string path;

  /// "constant:<c>", "box:<c>" (c on the centered half-box [1/4,3/4]^d) or "file:<path>".
  static DatumSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
    DatumSpec s;
    auto number = [&](const std::string& t) {
      if (t.empty()) return 1.0;
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != t.size() || !(x >= 0.0) || !std::isfinite(x))
        throw DomainError("datum value must be a finite number >= 0, got '" + t + "'");
      return x;
    };
    if (head == "constant") {
      s.kind = Kind::Constant;
      s.value = number(tail);
    } else if (head == "box") {
      s.kind = Kind::IndicatorBox;
      s.value = number(tail);
    } else if (head == "file") {
      if (tail.empty()) throw DomainError("datum 'file:' needs a path");
      s.kind = Kind::File;
      s.path = tail;
    } else {
      throw DomainError("unknown datum '" + text + "' (expected constant:<c>, box:<c> or file:<path>)");
    }
    return s;
  }

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::Constant: os << "constant:" << value; break;
      case Kind::IndicatorBox: os << "box:" << value; break;
      case Kind::File: os << "file:" << path; break;
    }
    return os.str();
  }

  [[nodiscard]] Field build(const GridSpec& g) const {
    switch (kind) {
      case Kind::Constant: return Field(g, value);
      case Kind::IndicatorBox:
        return Field::sample(g, [&](const Point& x) {
          for (int k = 0; k < g.dim(); ++k)
            if (x[k] < 0.25 || x[k] > 0.75) return 0.0;
          return value;
        });
      case Kind::File: {
        Field f = load_field(path);
        if (!(f.grid() == g)) throw DomainError("datum file " + path + " does not match the grid");
        return f;
      }
    }
    throw DomainError("bad datum kind");
  }
};

struct Preset {
  std::string name;
  std::string description;
  Params params;
  int n_cells = 16;
  DatumSpec datum;
  /// Regularization levels for the sweep.
  std::vector<int> schedule;
  /// Datum family and its fixed level, for the family audits.
  std::vector<double> lambdas;
  int n_fixed = 16;
  IterationControl it;
  /// Assert sup-norm stabilization over the last doubling of the schedule.
  bool check_stabilization = false;

  [[nodiscard]] ProblemData problem() const {
    const GridSpec g(params.d, n_cells);
    return ProblemData(params, CoefficientField::constant(g, 1.0), datum.build(g));
  }
};

inline Params make_params(int d, Rational r, Rational gamma, Rational theta, Rational m) {
  Params p;
  p.d = d;
  p.r = r;
  p.gamma = gamma;
  p.theta = theta;
  p.m = m;
  return p;
}

inline std::vector<Preset> presets() {
  const Rational half(1, 2);
  std::vector<Preset> out;
  out.push_back({"default-d3", "bounded regime m=2, f=1, r=2, gamma=theta=1/2 on 16^3",
                 make_params(3, 2, half, half, 2), 16, {}, {1, 2, 4, 8, 16, 32}, {}, 16, {}});
  out.push_back({"linfty-d3", "default problem with the schedule extended to n=128 for the sup-norm audits",
                 make_params(3, 2, half, half, 2), 16, {}, {1, 2, 4, 8, 16, 32, 64, 128}, {}, 16, {}, true});
  Preset dual{"dual-space-d3", "m=6/5 (u in L^9), f=16 so that u >> 1/n across the family",
              make_params(3, 2, half, half, Rational(6, 5)), 16, {}, {128, 256, 512, 1024}, {1, 2, 4, 8}, 1024, {}};
  dual.datum.value = 16.0;
  out.push_back(dual);
  out.push_back({"outside-dual-lr-d3", "r=7, theta=1/2, m=14/13: L^r regime",
                 make_params(3, 7, half, half, Rational(14, 13)), 16, {}, {1, 2, 4, 8, 16, 32}, {}, 16, {}});
  out.push_back({"outside-dual-lr1-d3", "r=7, theta=0, m=16/15: L^(r+1) regime",
                 make_params(3, 7, half, 0, Rational(16, 15)), 16, {}, {1, 2, 4, 8, 16, 32}, {}, 16, {}});
  Preset hi{"higher-integrability-d3", "r=3, m=7/5, f=2^20 (reaction-dominated family)",
            make_params(3, 3, half, half, Rational(7, 5)), 16, {}, {1 << 24, 1 << 25, 1 << 26}, {1, 2, 4, 8}, 1 << 26,
            {}};
  hi.datum.value = 1 << 20;
  out.push_back(hi);
  out.push_back({"none-d3", "r=2, m=1: no regime applies", make_params(3, 2, half, half, 1), 16, {}, {1, 2, 4}, {},
                 4, {}});
  return out;
}

inline Preset find_preset(const std::string& name) {
  for (auto& p : presets())
    if (p.name == name) return p;
  std::string names;
  for (auto& p : presets()) names += (names.empty() ? "" : ", ") + p.name;
  throw DomainError("unknown preset '" + name + "' (available: " + names + ")");
}

// ---------------------------------------------------------------------------
// Full battery

struct BatteryResult {
  std::vector<AuditReport> reports;
  /// Audits that were not run, with the reason.
  std::vector<std::string> skipped;
  bool no_audits = false;
  bool unconverged = false;
  SweepResult sweep;

  [[nodiscard]] bool pass() const {
    return std::all_of(reports.begin(), reports.end(), [](const AuditReport& r) { return r.pass(); });
  }
  [[nodiscard]] std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& r : reports)
      if (!r.pass()) out.push_back(r.id + " [" + r.context + "]");
    return out;
  }
};

namespace detail {

/// Runs `fn`; an unconverged input becomes a failing report, a refusal a skip note.
template <class Fn>
void run_audit(BatteryResult& out, const std::string& id, const std::string& context, Fn&& fn) {
  try {
    out.reports.push_back(fn());
  } catch (const UnconvergedState& e) {
    out.unconverged = true;
    AuditReport rep{id, context, 0.0, {}, {}, {e.what()}};
    rep.add("converged", 1.0, 0.0, 0.0);
    out.reports.push_back(std::move(rep));
  } catch (const AuditRefused& e) {
    out.skipped.push_back(id + ": " + e.what());
  }
}

inline bool is_doubling(const std::vector<SchemeState>& states, std::size_t from) {
  for (std::size_t i = from + 1; i < states.size(); ++i)
    if (states[i].n != 2 * states[i - 1].n) return false;
  return true;
}

}  // namespace detail

/// Audits that apply to a single state: residuals and signs, the energy
/// and superlevel inequalities, and the outside-dual chain when in regime.
inline void audit_state(BatteryResult& out, const SchemeState& st, const ProblemData& data,
                        const IterationControl& it) {
  const std::string ctx = grid_context(data, st.n);
  out.reports.push_back(audit_self_consistency(st, data));
  if (!st.converged) out.unconverged = true;
  detail::run_audit(out, "energy", ctx, [&] { return audit_energy(st, data, it); });
  detail::run_audit(out, "superlevel", ctx, [&] { return audit_superlevel(st, data, {0.5, 1.0, 2.0}, it); });
  const Regime reg = classify(data.params);
  if (reg.has(RegimeTag::OutsideDualLr) || reg.has(RegimeTag::OutsideDualLr1))
    detail::run_audit(out, "outside_dual", ctx, [&] { return audit_outside_dual(st, data, it); });
}

/// True when no regime applies or the problem is outside the theory.
inline bool battery_is_empty(const ProblemData& data) {
  return data.theory_off() || classify(data.params).none();
}

/// Every audit applicable to the preset's regime, on its sweep and family.
inline BatteryResult run_battery(const Preset& preset, int jobs = 1) {
  BatteryResult out;
  const ProblemData data = preset.problem();
  if (battery_is_empty(data)) {
    out.no_audits = true;
    return out;
  }
  const Regime reg = classify(data.params);
  const IterationControl& it = preset.it;
  out.sweep = sweep_n(data, preset.schedule, it, jobs);
  const auto& states = out.sweep.states;
  for (const auto& st : states) audit_state(out, st, data, it);
  const std::string ctx = grid_context(data, states.back().n);

  if (reg.has(RegimeTag::Bounded)) {
    detail::run_audit(out, "linfty_bound", ctx, [&] { return audit_linfty_bound(states, data); });
    detail::run_audit(out, "level_certificate", ctx, [&] { return audit_level_certificate(states, data); });
    if (preset.check_stabilization)
      detail::run_audit(out, "sup_stabilization", ctx, [&] { return audit_sup_stabilization(states, data); });
  }
  if (states.size() >= 4 && detail::is_doubling(states, states.size() - 4))
    detail::run_audit(out, "cauchy_trend", ctx, [&] { return audit_cauchy_trend(states, data); });

  const bool dual = reg.has(RegimeTag::DualSpace);
  const bool higher = reg.has(RegimeTag::HigherIntegrability);
  if ((dual || higher) && !preset.lambdas.empty()) {
    const auto family = solve_family(data, preset.lambdas, preset.n_fixed, it, jobs);
    if (dual) {
      detail::run_audit(out, "scaling_law", ctx, [&] { return audit_scaling_law(data, preset.lambdas, family).report; });
      if (data.params.r == Rational(2))
        detail::run_audit(out, "v_regularity", ctx, [&] { return audit_v_regularity(data, preset.lambdas, family); });
    }
    if (higher)
      detail::run_audit(out, "higher_integrability", ctx,
                        [&] { return audit_higher_integrability(data, preset.lambdas, family); });
  } else if (dual || higher) {
    out.skipped.push_back("family audits: the preset has no lambda family");
  }
  return out;
}

/// State audits on an externally supplied (u, v) pair, treated as converged at level n.
inline BatteryResult run_state_battery(const ProblemData& data, const Field& u, const Field& v, int n,
                                       const IterationControl& it = {}) {
  BatteryResult out;
  if (battery_is_empty(data)) {
    out.no_audits = true;
    return out;
  }
  u.check_same(data.f);
  v.check_same(data.f);
  SchemeState st{n, u, v, 0, 0, 0, 0, true, 0.0, 0.0, {}};
  const auto res = equation_residuals(data, u, v, n);
  st.residual_u = res.u;
  st.residual_v = res.v;
  audit_state(out, st, data, it);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const AuditReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"label", c.label}, {"left", c.left}, {"right", c.right}, {"slack", c.slack}, {"eps", c.eps},
                      {"pass", c.pass}});
  nlohmann::json constants = nlohmann::json::object();
  for (const auto& [k, v] : rep.constants) constants[k] = v;
  nlohmann::json j{{"id", rep.id},         {"context", rep.context}, {"eps_res", rep.eps_res},
                   {"pass", rep.pass()},   {"checks", checks},       {"constants", constants},
                   {"notes", rep.notes}};
  if (const auto* w = rep.worst()) {
    j["left"] = w->left;
    j["right"] = w->right;
    j["slack"] = w->slack;
  }
  return j;
}

inline nlohmann::json to_json(const MmsReport& rep) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : rep.levels)
    levels.push_back({{"n_cells", l.n_cells}, {"h", l.h}, {"err_u", l.err_u}, {"err_v", l.err_v}});
  return {{"label", rep.label}, {"levels", levels}, {"orders_u", rep.orders_u}, {"orders_v", rep.orders_v}};
}

inline void write_audit_csv_header(std::ostream& os) { os << "id,check,left,right,slack,eps,pass,context\n"; }

/// One row per check of the report.
inline void write_audit_csv(const AuditReport& rep, std::ostream& os) {
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  char buf[160];
  for (const auto& c : rep.checks) {
    std::snprintf(buf, sizeof buf, "%.10e,%.10e,%.10e,%.3e", c.left, c.right, c.slack, c.eps);
    os << rep.id << ',' << quote(c.label) << ',' << buf << ',' << (c.pass ? 1 : 0) << ',' << quote(rep.context)
       << '\n';
  }
}

}  // namespace sslab
