#pragma once

// Level-n approximation scheme for the doubly singular system
//
//   -div(A Du) + v^(1-theta) u^(r-1) = f_n / (u + 1/n)^gamma
//   -div(A Dv)                       = u^r / (v + 1/n)^theta
//
// with f_n = min(f, n). Each equation is solved by a damped Picard
// iteration on frozen coefficients, and the pair by an outer alternating
// fixed point (v given u, then u given v).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sslab/exponents.hpp"
#include "sslab/field.hpp"
#include "sslab/operator.hpp"

namespace sslab {

struct IterationControl {
  double tol_inner = 1e-8;
  double tol_outer = 1e-7;
  int max_inner = 200;
  int max_outer = 100;
  /// Initial relaxation; see PicardState for when it is halved.
  double omega = 1.0;
  double min_omega = 1.0 / 16.0;
  double cg_tol = 1e-10;
  int cg_max_iter = 20000;
};

/// The Picard iteration for one equation hit its cap.
class SchemeNonConvergence : public std::runtime_error {
public:
  SchemeNonConvergence(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  /// Sup-norm update per iteration.
  [[nodiscard]] const std::vector<double>& trace() const { return trace_; }

private:
  std::vector<double> trace_;
};

/// Parameters, grid, coefficients and the datum f >= 0.
///
/// `source_u` / `source_v` are optional extra right-hand sides used only
/// by manufactured-solution tests; they may have either sign.
struct ProblemData {
  Params params;
  GridSpec grid;
  CoefficientField coeff;
  Field f;
  std::optional<Field> source_u;
  std::optional<Field> source_v;

  ProblemData(Params p, CoefficientField c, Field datum)
      : params(p), grid(datum.grid()), coeff(std::move(c)), f(std::move(datum)) {
    validate();
  }

  void validate() const {
    if (!(coeff.grid() == grid)) throw DomainError("coefficient and datum grids differ");
    if (params.r < Rational(2)) throw DomainError("r must be >= 2");
    if (!(Rational(0) < params.gamma && params.gamma < Rational(1))) throw DomainError("gamma must lie in (0,1)");
    if (!(Rational(0) <= params.theta && params.theta < Rational(1))) throw DomainError("theta must lie in [0,1)");
    if (params.m < Rational(1)) throw DomainError("m must be >= 1");
    if (!grid.theory_off() && params.d != grid.dim())
      throw DomainError("params.d = " + std::to_string(params.d) + " but the grid has d = " +
                        std::to_string(grid.dim()));
    for (std::size_t i = 0; i < f.size(); ++i)
      if (!(f[i] >= 0.0)) throw DomainError("datum f must be nonnegative (node " + std::to_string(i) + ")");
    for (const auto* s : {&source_u, &source_v})
      if (s->has_value() && !((*s)->grid() == grid)) throw DomainError("source lives on a different grid");
  }

  /// d < 3 or f == 0: the estimates of the theory are not claimed.
  [[nodiscard]] bool theory_off() const { return grid.theory_off() || f.is_zero(); }

  [[nodiscard]] double r() const { return params.r.to_double(); }
  [[nodiscard]] double gamma() const { return params.gamma.to_double(); }
  [[nodiscard]] double theta() const { return params.theta.to_double(); }
  [[nodiscard]] double m() const { return params.m.to_double(); }

  /// Same problem with datum scaled by lambda.
  [[nodiscard]] ProblemData scaled(double lambda) const {
    ProblemData out = *this;
    out.f *= lambda;
    return out;
  }
};

/// f_n = min(f, n).
inline Field truncate_datum(const Field& f, int n) {
  if (n < 1) throw DomainError("regularization level n must be >= 1");
  const double cap = n;
  return f.map([cap](double s) { return std::min(s, cap); });
}

struct InnerResult {
  Field solution;
  int iterations = 0;
  int linear_iterations = 0;
  double last_update = 0.0;
  double omega = 1.0;
  std::vector<double> trace;
};

namespace detail {

/// Damping control. omega is halved (down to min_omega) when the update
/// norm grows twice in a row, or when two consecutive steps flip sign
/// without shrinking by at least half (a slowly decaying oscillation).
struct PicardState {
  PicardState(double omega0, double floor) : omega(omega0), min_omega(floor) {}

  double omega;
  double min_omega;
  double prev_update = std::numeric_limits<double>::infinity();
  int increases = 0;
  int flips = 0;
  std::vector<double> prev_delta;

  void observe(double update, const std::vector<double>& delta) {
    bool halve = false;
    if (update > prev_update) {
      if (++increases >= 2) halve = true;
    } else {
      increases = 0;
    }
    if (!prev_delta.empty()) {
      double dot = 0.0, a = 0.0, b = 0.0;
      for (std::size_t i = 0; i < delta.size(); ++i) {
        dot += delta[i] * prev_delta[i];
        a += delta[i] * delta[i];
        b += prev_delta[i] * prev_delta[i];
      }
      const bool flip = dot < -0.5 * std::sqrt(a * b) && update > 0.5 * prev_update;
      flips = flip ? flips + 1 : 0;
      if (flips >= 2) halve = true;
    }
    if (halve && omega > min_omega) {
      omega = std::max(omega / 2.0, min_omega);
      increases = 0;
      flips = 0;
    }
    prev_update = update;
    prev_delta = delta;
  }
};

inline std::shared_ptr<const Stencil> stencil_for(const ProblemData& data) {
  return std::make_shared<const Stencil>(data.coeff);
}

/// Relaxed, projected update; stores the change in `delta` and returns its sup norm.
inline double relax_into(Field& current, const Field& candidate, double omega, std::vector<double>& delta) {
  double upd = 0.0;
  delta.resize(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    const double next = (1.0 - omega) * current[i] + omega * std::max(candidate[i], 0.0);
    delta[i] = next - current[i];
    upd = std::max(upd, std::abs(delta[i]));
    current[i] = next;
  }
  return upd;
}

inline InnerResult solve_u(const ProblemData& data, const std::shared_ptr<const Stencil>& stencil, const Field& v,
                           int n, const IterationControl& it, const Field* initial) {
  const GridSpec& g = data.grid;
  const Field fn = truncate_datum(data.f, n);
  const double r = data.r(), gamma = data.gamma(), theta = data.theta(), shift = 1.0 / n;
  InnerResult res{initial ? *initial : Field(g), 0, 0, 0.0, it.omega, {}};
  Field& u = res.solution;
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::max(u[i], 0.0);
  PicardState ps{it.omega, it.min_omega};
  std::vector<double> delta;
  Field reaction(g), rhs(g);
  while (true) {
    if (res.iterations >= it.max_inner)
      throw SchemeNonConvergence("u-equation Picard iteration did not converge at n=" + std::to_string(n) +
                                     " (last update " + std::to_string(res.last_update) + ")",
                                 res.trace);
    for (std::size_t i = 0; i < u.size(); ++i) {
      reaction[i] = std::pow(v[i], 1.0 - theta) * std::pow(u[i], r - 2.0);
      rhs[i] = fn[i] / std::pow(u[i] + shift, gamma);
      if (data.source_u) rhs[i] += (*data.source_u)[i];
    }
    const LinearSystem sys(stencil, reaction);
    auto lin = cg_solve(sys, rhs, it.cg_tol, it.cg_max_iter, &u);
    res.linear_iterations += lin.iterations;
    const double scale = 1.0 + u.sup_abs();
    const double upd = relax_into(u, lin.x, ps.omega, delta);
    ++res.iterations;
    res.last_update = upd;
    res.trace.push_back(upd);
    if (upd <= it.tol_inner * scale) break;
    ps.observe(upd, delta);
  }
  res.omega = ps.omega;
  return res;
}

inline InnerResult solve_v(const ProblemData& data, const std::shared_ptr<const Stencil>& stencil, const Field& u,
                           int n, const IterationControl& it, const Field* initial) {
  const GridSpec& g = data.grid;
  const double r = data.r(), theta = data.theta(), shift = 1.0 / n;
  InnerResult res{initial ? *initial : Field(g), 0, 0, 0.0, it.omega, {}};
  Field& v = res.solution;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(v[i], 0.0);
  PicardState ps{it.omega, it.min_omega};
  std::vector<double> delta;
  const LinearSystem sys(stencil, Field(g));
  Field rhs(g);
  const Field ur = u.map([r](double s) { return std::pow(s, r); });
  while (true) {
    if (res.iterations >= it.max_inner)
      throw SchemeNonConvergence("v-equation Picard iteration did not converge at n=" + std::to_string(n) +
                                     " (last update " + std::to_string(res.last_update) + ")",
                                 res.trace);
    for (std::size_t i = 0; i < v.size(); ++i) {
      rhs[i] = ur[i] / std::pow(v[i] + shift, theta);
      if (data.source_v) rhs[i] += (*data.source_v)[i];
    }
    auto lin = cg_solve(sys, rhs, it.cg_tol, it.cg_max_iter, &v);
    res.linear_iterations += lin.iterations;
    const double scale = 1.0 + v.sup_abs();
    // theta = 0: the right-hand side does not depend on v, one solve is exact
    const double omega = theta == 0.0 ? 1.0 : ps.omega;
    const double upd = relax_into(v, lin.x, omega, delta);
    ++res.iterations;
    res.last_update = upd;
    res.trace.push_back(upd);
    if (theta == 0.0 || upd <= it.tol_inner * scale) break;
    ps.observe(upd, delta);
  }
  res.omega = ps.omega;
  return res;
}

}  // namespace detail

/// Fixed point of the frozen-coefficient iteration for the u-equation at
/// fixed v >= 0. Starts from `initial` (zero when null).
inline InnerResult solve_u_given_v(const ProblemData& data, const Field& v, int n, const IterationControl& it = {},
                                   const Field* initial = nullptr) {
  if (n < 1) throw DomainError("regularization level n must be >= 1");
  v.check_same(data.f);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!(v[i] >= 0.0)) throw DomainError("v must be nonnegative (node " + std::to_string(i) + ")");
  return detail::solve_u(data, detail::stencil_for(data), v, n, it, initial);
}

/// Fixed point of the lagged-denominator iteration for the v-equation at fixed u >= 0.
inline InnerResult solve_v_given_u(const ProblemData& data, const Field& u, int n, const IterationControl& it = {},
                                   const Field* initial = nullptr) {
  if (n < 1) throw DomainError("regularization level n must be >= 1");
  u.check_same(data.f);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!(u[i] >= 0.0)) throw DomainError("u must be nonnegative (node " + std::to_string(i) + ")");
  return detail::solve_v(data, detail::stencil_for(data), u, n, it, initial);
}

struct SchemeState {
  int n = 1;
  Field u;
  Field v;
  int inner_iters_u = 0;
  int inner_iters_v = 0;
  int outer_iters = 0;
  int linear_iters = 0;
  bool converged = false;
  /// Relative l2 residuals of the two discrete equations at (u, v).
  double residual_u = 0.0;
  double residual_v = 0.0;
  /// Empty on success, otherwise why the level stopped.
  std::string message;
};

struct EquationResiduals {
  double u = 0.0;
  double v = 0.0;
};

/// ||S u + v^(1-theta) u^(r-1) - f_n/(u+1/n)^gamma||_2 / ||rhs||_2 and the
/// analogue for v (absolute when the right-hand side vanishes).
inline EquationResiduals equation_residuals(const ProblemData& data, const Field& u, const Field& v, int n) {
  const auto stencil = detail::stencil_for(data);
  const LinearSystem sys(stencil, Field(data.grid));
  const Field su = apply(sys, u);
  const Field sv = apply(sys, v);
  const Field fn = truncate_datum(data.f, n);
  const double r = data.r(), gamma = data.gamma(), theta = data.theta(), shift = 1.0 / n;
  double ru = 0.0, bu = 0.0, rv = 0.0, bv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double rhs_u = fn[i] / std::pow(u[i] + shift, gamma);
    if (data.source_u) rhs_u += (*data.source_u)[i];
    const double lhs_u = su[i] + std::pow(v[i], 1.0 - theta) * std::pow(u[i], r - 1.0);
    ru += (lhs_u - rhs_u) * (lhs_u - rhs_u);
    bu += rhs_u * rhs_u;
    double rhs_v = std::pow(u[i], r) / std::pow(v[i] + shift, theta);
    if (data.source_v) rhs_v += (*data.source_v)[i];
    rv += (sv[i] - rhs_v) * (sv[i] - rhs_v);
    bv += rhs_v * rhs_v;
  }
  return {bu > 0.0 ? std::sqrt(ru / bu) : std::sqrt(ru), bv > 0.0 ? std::sqrt(rv / bv) : std::sqrt(rv)};
}

/// Outer alternating fixed point at level n, starting from (0, 0).
/// Never throws on non-convergence: the partial state comes back with
/// converged = false and a message.
inline SchemeState solve_level(const ProblemData& data, int n, const IterationControl& it = {}) {
  if (n < 1) throw DomainError("regularization level n must be >= 1");
  const auto stencil = detail::stencil_for(data);
  SchemeState st{n, Field(data.grid), Field(data.grid), 0, 0, 0, 0, false, 0.0, 0.0, {}};
  try {
    for (int outer = 0; outer < it.max_outer; ++outer) {
      auto vr = detail::solve_v(data, stencil, st.u, n, it, &st.v);
      auto ur = detail::solve_u(data, stencil, vr.solution, n, it, &st.u);
      st.inner_iters_v += vr.iterations;
      st.inner_iters_u += ur.iterations;
      st.linear_iters += vr.linear_iterations + ur.linear_iterations;
      double du = 0.0, dv = 0.0;
      for (std::size_t i = 0; i < st.u.size(); ++i) {
        du = std::max(du, std::abs(ur.solution[i] - st.u[i]));
        dv = std::max(dv, std::abs(vr.solution[i] - st.v[i]));
      }
      st.u = std::move(ur.solution);
      st.v = std::move(vr.solution);
      ++st.outer_iters;
      if (du <= it.tol_outer * (1.0 + st.u.sup_abs()) && dv <= it.tol_outer * (1.0 + st.v.sup_abs())) {
        st.converged = true;
        break;
      }
    }
    if (!st.converged) st.message = "outer iteration cap reached at n=" + std::to_string(n);
  } catch (const SchemeNonConvergence& e) {
    st.message = e.what();
  } catch (const NonConvergence& e) {
    st.message = e.what();
  }
  const auto res = equation_residuals(data, st.u, st.v, n);
  st.residual_u = res.u;
  st.residual_v = res.v;
  return st;
}

struct PositivityReport {
  bool u_nonnegative = true;
  /// u > 0 at every node where f > 0 (nodes with f = 0 are exempt).
  bool u_positive_on_support = true;
  /// v > floor at every interior node; vacuous when u == 0.
  bool v_positive = true;
  double v_floor = 0.0;
  double v_min = 0.0;
};

/// Discrete positivity checks; the v floor is 1e-14 ||v||_inf.
inline PositivityReport positivity(const ProblemData& data, const SchemeState& st) {
  PositivityReport rep;
  rep.v_floor = 1e-14 * st.v.sup_abs();
  rep.v_min = st.v.min();
  for (std::size_t i = 0; i < st.u.size(); ++i) {
    if (st.u[i] < 0.0) rep.u_nonnegative = false;
    if (data.f[i] > 0.0 && !(st.u[i] > 0.0)) rep.u_positive_on_support = false;
  }
  if (!st.u.is_zero())
    for (std::size_t i = 0; i < st.v.size(); ++i)
      if (!(st.v[i] > rep.v_floor)) rep.v_positive = false;
  return rep;
}

struct NormEntry {
  std::string label;
  Exponent p;
  double value;
};

struct LevelNorms {
  int n = 0;
  std::vector<NormEntry> u_norms;
  double h1_u = 0.0;
  double h1_v = 0.0;
  double sup_u = 0.0;
  double sup_v = 0.0;
  /// ||u_n - u_prev||_{L^2} against the previous level; NaN at the first.
  double l2_diff_prev = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::vector<SchemeState> states;
  std::vector<LevelNorms> norms;
  [[nodiscard]] bool all_converged() const {
    return std::all_of(states.begin(), states.end(), [](const SchemeState& s) { return s.converged; });
  }
};

/// Evaluates fn(0..count-1) on up to `jobs` threads; result i always
/// lands in slot i, so the output does not depend on scheduling.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, int jobs, Fn&& fn) {
  std::vector<std::optional<T>> slots(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) slots[i] = fn(i);
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Finite regime exponents (and inf) at which u is measured in sweeps.
inline std::vector<Exponent> tracked_exponents(const ProblemData& data) {
  std::vector<Exponent> ps;
  if (!data.grid.theory_off()) {
    try {
      for (const auto& e : classify(data.params).entries)
        if (!e.u_exponent.is_any_finite() && std::find(ps.begin(), ps.end(), e.u_exponent) == ps.end())
          ps.push_back(e.u_exponent);
    } catch (const DomainError&) {
      // invalid theory parameters: nothing to track beyond the defaults
    }
  }
  for (const Exponent& p : {Exponent(2), Exponent::infinity()})
    if (std::find(ps.begin(), ps.end(), p) == ps.end()) ps.push_back(p);
  std::sort(ps.begin(), ps.end());
  return ps;
}

/// Runs solve_level for every n of a strictly increasing schedule. Levels
/// are independent and may run on `jobs` threads.
inline SweepResult sweep_n(const ProblemData& data, const std::vector<int>& schedule, const IterationControl& it = {},
                           int jobs = 1) {
  if (schedule.empty()) throw DomainError("empty schedule");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i] <= schedule[i - 1]) throw DomainError("schedule must be strictly increasing");
  SweepResult out;
  out.states = parallel_map<SchemeState>(schedule.size(), jobs,
                                         [&](std::size_t i) { return solve_level(data, schedule[i], it); });
  const auto exps = tracked_exponents(data);
  for (std::size_t i = 0; i < out.states.size(); ++i) {
    const auto& st = out.states[i];
    LevelNorms ln;
    ln.n = st.n;
    for (const auto& p : exps) ln.u_norms.push_back({"u_L" + p.str(), p, lp_norm(st.u, p)});
    ln.h1_u = h1_seminorm(st.u);
    ln.h1_v = h1_seminorm(st.v);
    ln.sup_u = st.u.sup_abs();
    ln.sup_v = st.v.sup_abs();
    if (i > 0) ln.l2_diff_prev = lp_norm(st.u - out.states[i - 1].u, 2.0);
    out.norms.push_back(std::move(ln));
  }
  return out;
}

/// One CSV row per level; fixed column order and formatting.
inline void write_sweep_csv(const SweepResult& sweep, std::ostream& os) {
  if (sweep.norms.empty()) return;
  os << "n,converged,outer_iters,inner_iters_u,inner_iters_v,linear_iters,residual_u,residual_v,sup_u,sup_v,h1_u,h1_v";
  for (const auto& e : sweep.norms.front().u_norms) os << ',' << e.label;
  os << ",l2_diff_prev\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10e", x);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < sweep.states.size(); ++i) {
    const auto& s = sweep.states[i];
    const auto& ln = sweep.norms[i];
    os << s.n << ',' << (s.converged ? 1 : 0) << ',' << s.outer_iters << ',' << s.inner_iters_u << ','
       << s.inner_iters_v << ',' << s.linear_iters << ',' << num(s.residual_u) << ',' << num(s.residual_v) << ','
       << num(ln.sup_u) << ',' << num(ln.sup_v) << ',' << num(ln.h1_u) << ',' << num(ln.h1_v);
    for (const auto& e : ln.u_norms) os << ',' << num(e.value);
    os << ',' << (std::isnan(ln.l2_diff_prev) ? std::string("nan") : num(ln.l2_diff_prev)) << '\n';
  }
}

}  // namespace sslab
