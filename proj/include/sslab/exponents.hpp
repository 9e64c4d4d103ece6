#pragma once

// Hölder/Sobolev conjugate algebra, the regularity-exponent table and the
// regime classifier. Everything here is exact: regime boundaries such as
// m = d/2 are knife-edge equalities, so no floating point is used.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslab/rational.hpp"

namespace sslab {

/// A theorem's hypotheses are not met by the given parameters.
class RegimeError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// p' = p/(p-1); 1' = inf; inf' = 1.
inline Exponent holder_conjugate(const Exponent& p) {
  if (p.is_infinite()) return Rational(1);
  if (p.is_any_finite()) throw DomainError("Hölder conjugate of the any-finite marker is not a single exponent");
  const Rational& v = p.value();
  if (v < Rational(1)) throw DomainError("Hölder conjugate requires p >= 1, got " + v.str());
  if (v == Rational(1)) return Exponent::infinity();
  return v / (v - 1);
}

/// p* = dp/(d-p) for p < d, the any-finite marker for p = d, inf for p > d.
/// The any-finite marker and inf both map to inf (they contain exponents above d).
inline Exponent sobolev_conjugate(const Exponent& p, int d) {
  if (d < 1) throw DomainError("dimension must be positive");
  if (!p.is_finite()) return Exponent::infinity();
  const Rational& v = p.value();
  if (v < Rational(1)) throw DomainError("Sobolev conjugate requires p >= 1, got " + v.str());
  const Rational dd(d);
  if (v < dd) return dd * v / (dd - v);
  if (v == dd) return Exponent::any_finite();
  return Exponent::infinity();
}

/// m** = (m*)*; equals dm/(d-2m) whenever m < d/2.
inline Exponent double_sobolev(const Exponent& m, int d) {
  return sobolev_conjugate(sobolev_conjugate(m, d), d);
}

/// Parameter tuple (d, r, gamma, theta, m) of the doubly singular system.
struct Params {
  int d = 3;
  Rational r{2};
  Rational gamma{1, 2};
  Rational theta{1, 2};
  Rational m{2};

  /// Throws DomainError naming the first violated standing assumption.
  void validate() const {
    if (d < 3) throw DomainError("d must be >= 3 (got " + std::to_string(d) + ")");
    if (r < Rational(2)) throw DomainError("r must be >= 2 (got " + r.str() + ")");
    if (!(Rational(0) < gamma && gamma < Rational(1)))
      throw DomainError("gamma must lie in (0,1) (got " + gamma.str() + ")");
    if (!(Rational(0) <= theta && theta < Rational(1)))
      throw DomainError("theta must lie in [0,1) (got " + theta.str() + ")");
    if (m < Rational(1)) throw DomainError("m must be >= 1 (got " + m.str() + ")");
  }

  [[nodiscard]] std::string str() const {
    return "d=" + std::to_string(d) + " r=" + r.str() + " gamma=" + gamma.str() + " theta=" + theta.str() +
           " m=" + m.str();
  }
};

/// 2* = 2d/(d-2).
inline Rational two_star(int d) { return Rational(2 * d, d - 2); }

/// Lower end of the dual-space range, (2*/(1-gamma))'.
inline Rational dual_space_threshold(const Params& p) {
  return holder_conjugate(two_star(p.d) / (Rational(1) - p.gamma)).value();
}
/// (r/(1-gamma))', lower end of the L^r regime.
inline Rational lr_threshold(const Params& p) {
  return holder_conjugate(p.r / (Rational(1) - p.gamma)).value();
}
/// ((r+1)/(1-gamma))', lower end of the L^{r+1} regime.
inline Rational lr1_threshold(const Params& p) {
  return holder_conjugate((p.r + 1) / (Rational(1) - p.gamma)).value();
}
/// (r+gamma)', lower end of the higher-integrability regime.
inline Rational higher_integrability_threshold(const Params& p) {
  return holder_conjugate(p.r + p.gamma).value();
}
/// d/(d-2) - gamma, the minimal r for higher integrability.
inline Rational higher_integrability_r_floor(const Params& p) {
  return Rational(p.d, p.d - 2) - p.gamma;
}

enum class RegimeTag { Bounded, Borderline, DualSpace, OutsideDualLr, OutsideDualLr1, HigherIntegrability };

inline const char* to_string(RegimeTag t) {
  switch (t) {
    case RegimeTag::Bounded: return "Bounded";
    case RegimeTag::Borderline: return "Borderline";
    case RegimeTag::DualSpace: return "DualSpace";
    case RegimeTag::OutsideDualLr: return "OutsideDual_Lr";
    case RegimeTag::OutsideDualLr1: return "OutsideDual_Lr1";
    case RegimeTag::HigherIntegrability: return "HigherIntegrability";
  }
  return "?";
}

/// Human-readable statement of what each regime guarantees.
inline const char* describe(RegimeTag t) {
  switch (t) {
    case RegimeTag::Bounded: return "m > d/2: weak solution, u and v bounded";
    case RegimeTag::Borderline: return "m = d/2: weak solution, u in every L^p (p finite), v bounded";
    case RegimeTag::DualSpace:
      return "(2*/(1-gamma))' <= m < d/2: finite-energy solution, u in L^{m**(1+gamma)}";
    case RegimeTag::OutsideDualLr:
      return "(r/(1-gamma))' <= m < (2*/(1-gamma))', r > 2*: finite-energy solution, u in L^r";
    case RegimeTag::OutsideDualLr1:
      return "((r+1)/(1-gamma))' <= m < (2*/(1-gamma))', r > 2*-1, theta = 0: finite-energy solution, u in L^{r+1}";
    case RegimeTag::HigherIntegrability:
      return "(r+gamma)' <= m < d/2, r >= d/(d-2)-gamma: u in L^{r+1+gamma}";
  }
  return "?";
}

struct RegimeEntry {
  RegimeTag tag;
  Exponent u_exponent;
  friend bool operator==(const RegimeEntry&, const RegimeEntry&) = default;
};

/// Set of theorems whose hypotheses hold; empty means no theorem applies.
struct Regime {
  std::vector<RegimeEntry> entries;
  /// Predicted integrability of v; nullopt when no statement is made.
  std::optional<Exponent> v_exponent;

  [[nodiscard]] bool none() const { return entries.empty(); }
  [[nodiscard]] bool has(RegimeTag t) const {
    return std::any_of(entries.begin(), entries.end(), [t](const RegimeEntry& e) { return e.tag == t; });
  }
  [[nodiscard]] std::optional<Exponent> u_exponent(RegimeTag t) const {
    for (const auto& e : entries)
      if (e.tag == t) return e.u_exponent;
    return std::nullopt;
  }
};

/// All applicable (regime, u-exponent) pairs of the p_m table. The
/// higher-integrability entry is not part of the table and is left out.
inline std::vector<RegimeEntry> p_m(const Params& p) {
  p.validate();
  std::vector<RegimeEntry> out;
  const Rational half_d(p.d, 2);
  const Rational dual = dual_space_threshold(p);
  if (p.m > half_d) out.push_back({RegimeTag::Bounded, Exponent::infinity()});
  if (p.m == half_d) out.push_back({RegimeTag::Borderline, Exponent::any_finite()});
  if (dual <= p.m && p.m < half_d) {
    const Exponent mss = double_sobolev(p.m, p.d);
    out.push_back({RegimeTag::DualSpace, mss.value() * (Rational(1) + p.gamma)});
  }
  const Rational ts = two_star(p.d);
  if (lr_threshold(p) <= p.m && p.m < dual && p.r > ts) out.push_back({RegimeTag::OutsideDualLr, p.r});
  if (lr1_threshold(p) <= p.m && p.m < dual && p.r > ts - 1 && p.theta == Rational(0))
    out.push_back({RegimeTag::OutsideDualLr1, p.r + 1});
  return out;
}

/// Integrability exponent of v for r = 2 in the dual-space range.
inline Exponent s_m(const Params& p) {
  p.validate();
  if (p.r != Rational(2)) throw RegimeError("s_m requires r = 2 (got r=" + p.r.str() + ")");
  const Rational dual = dual_space_threshold(p);
  if (p.m < dual)
    throw RegimeError("s_m requires m >= (2*/(1-gamma))' = " + dual.str() + " (got m=" + p.m.str() + ")");
  const Rational half_d(p.d, 2);
  if (p.m >= half_d) throw RegimeError("s_m requires m < d/2 = " + half_d.str() + " (got m=" + p.m.str() + ")");
  const Rational knee = Rational(p.d) / (Rational(3) + p.gamma);
  if (p.m > knee) return Exponent::infinity();
  if (p.m == knee) return Exponent::any_finite();
  const Rational s = double_sobolev(p.m, p.d).value() * (Rational(1) + p.gamma) / 2;
  return double_sobolev(s, p.d).value() * (Rational(1) + p.theta);
}

struct PositivityVerdict {
  bool holds = false;
  /// 1: d in {3,4,5}; 2: d >= 6 and theta > (d-6)/(d-2);
  /// 3: d >= 6, m > (1-theta)d/(2(2-theta+gamma)), theta <= (d-6)/(d-2); 0: none.
  int branch = 0;
};

/// Sufficient conditions for strict positivity of u in the r = 2 dual-space case.
inline PositivityVerdict positivity_condition(const Params& p) {
  p.validate();
  if (p.d >= 3 && p.d <= 5) return {true, 1};
  const Rational cut(p.d - 6, p.d - 2);
  if (p.theta > cut) return {true, 2};
  const Rational bound = (Rational(1) - p.theta) * p.d / (Rational(2) * (Rational(2) - p.theta + p.gamma));
  if (p.m > bound) return {true, 3};
  return {false, 0};
}

/// Deterministic, total regime classification.
inline Regime classify(const Params& p) {
  Regime reg;
  reg.entries = p_m(p);
  if (higher_integrability_threshold(p) <= p.m && p.m < Rational(p.d, 2) && p.r >= higher_integrability_r_floor(p))
    reg.entries.push_back({RegimeTag::HigherIntegrability, p.r + 1 + p.gamma});
  if (reg.has(RegimeTag::Bounded) || reg.has(RegimeTag::Borderline)) {
    reg.v_exponent = Exponent::infinity();
  } else if (reg.has(RegimeTag::DualSpace) && p.r == Rational(2)) {
    reg.v_exponent = s_m(p);
  }
  return reg;
}

}  // namespace sslab
