#pragma once

// Independent exponent evaluator for the tests. Works in boost::rational
// with closed forms (m** = dm/(d-2m), p' = p/(p-1), ...) instead of the
// library's composed conjugates, and returns plain strings so that the
// comparison does not go through any library type. Comparisons are kept
// rational-vs-rational: boost's mixed (int, rational) operators recurse
// forever under C++20 rewritten-candidate lookup.

#include <boost/rational.hpp>

#include <string>
#include <vector>

#include "sslab/exponents.hpp"

namespace oracle {

using Q = boost::rational<long long>;

inline std::string str(const Q& q) {
  if (q.denominator() == 1) return std::to_string(q.numerator());
  return std::to_string(q.numerator()) + "/" + std::to_string(q.denominator());
}

inline Q q(const sslab::Rational& r) { return Q(r.num(), r.den()); }

struct Tuple {
  int d;
  Q r, gamma, theta, m;
};

inline Tuple from(const sslab::Params& p) { return {p.d, q(p.r), q(p.gamma), q(p.theta), q(p.m)}; }

inline sslab::Params to_params(const Tuple& t) {
  sslab::Params p;
  p.d = t.d;
  p.r = sslab::Rational(t.r.numerator(), t.r.denominator());
  p.gamma = sslab::Rational(t.gamma.numerator(), t.gamma.denominator());
  p.theta = sslab::Rational(t.theta.numerator(), t.theta.denominator());
  p.m = sslab::Rational(t.m.numerator(), t.m.denominator());
  return p;
}

/// p' for finite p > 1.
inline Q conj(const Q& p) { return p / (p - 1); }

inline std::string holder(const Q& p) {
  if (p == Q(1)) return "inf";
  return str(p / (p - 1));
}

inline std::string sobolev(const Q& p, int d) {
  if (p < Q(d)) return str(d * p / (d - p));
  if (p == Q(d)) return "any-finite";
  return "inf";
}

inline std::string double_sobolev(const Q& m, int d) {
  if (2 * m < Q(d)) return str(d * m / (d - 2 * m));
  // m = d/2 gives m* = d, whose conjugate is any finite exponent
  if (2 * m == Q(d)) return "any-finite";
  return "inf";
}

/// "Tag:exponent" strings in the classifier's order.
inline std::vector<std::string> p_m(const Tuple& t) {
  std::vector<std::string> out;
  const Q d(t.d);
  const Q two_star = 2 * d / (d - 2);
  const Q dual = conj(two_star / (1 - t.gamma));
  if (t.m > d / 2) out.push_back("Bounded:inf");
  if (t.m == d / 2) out.push_back("Borderline:any-finite");
  if (dual <= t.m && t.m < d / 2) out.push_back("DualSpace:" + str(d * t.m / (d - 2 * t.m) * (1 + t.gamma)));
  if (conj(t.r / (1 - t.gamma)) <= t.m && t.m < dual && t.r > two_star) out.push_back("OutsideDual_Lr:" + str(t.r));
  if (conj((t.r + 1) / (1 - t.gamma)) <= t.m && t.m < dual && t.r > two_star - 1 && t.theta == Q(0))
    out.push_back("OutsideDual_Lr1:" + str(t.r + 1));
  return out;
}

inline std::vector<std::string> regimes(const Tuple& t) {
  auto out = p_m(t);
  const Q d(t.d);
  if (conj(t.r + t.gamma) <= t.m && t.m < d / 2 && t.r >= d / (d - 2) - t.gamma)
    out.push_back("HigherIntegrability:" + str(t.r + 1 + t.gamma));
  return out;
}

/// s_m, or "refused" outside r = 2 and the dual-space range.
inline std::string s_m(const Tuple& t) {
  const Q d(t.d);
  const Q dual = conj(2 * d / (d - 2) / (1 - t.gamma));
  if (t.r != Q(2) || t.m < dual || t.m >= d / 2) return "refused";
  const Q knee = d / (3 + t.gamma);
  if (t.m > knee) return "inf";
  if (t.m == knee) return "any-finite";
  const Q s = d * t.m / (d - 2 * t.m) * (1 + t.gamma) / 2;
  return str(d * s / (d - 2 * s) * (1 + t.theta));
}

inline std::string to_str(const std::vector<sslab::RegimeEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += std::string(sslab::to_string(e.tag)) + ":" + e.u_exponent.str() + ";";
  return out;
}

inline std::string to_str(const std::vector<std::string>& entries) {
  std::string out;
  for (const auto& e : entries) out += e + ";";
  return out;
}

/// Parameter grid spanning every branch. For each base tuple the m-values
/// include all regime boundaries (d/2, d/(3+gamma), the dual-space
/// threshold, the L^r, L^{r+1} and higher-integrability thresholds) plus
/// points on either side of them.
inline std::vector<Tuple> exponent_grid() {
  std::vector<Tuple> out;
  const std::vector<Q> rs{Q(2), Q(5, 2), Q(3), Q(4), Q(6), Q(7), Q(10)};
  const std::vector<Q> gammas{Q(1, 4), Q(1, 2), Q(3, 4)};
  const std::vector<Q> thetas{Q(0), Q(1, 2)};
  for (int d = 3; d <= 8; ++d)
    for (const Q& r : rs)
      for (const Q& g : gammas)
        for (const Q& th : thetas) {
          const Q dd(d);
          const Q two_star = 2 * dd / (dd - 2);
          std::vector<Q> ms{Q(1), Q(6, 5), Q(2), Q(3), Q(5),
                            dd / 2, dd / (3 + g),
                            conj(two_star / (1 - g)),
                            conj(r / (1 - g)),
                            conj((r + 1) / (1 - g)),
                            conj(r + g)};
          const std::size_t edges = ms.size();
          for (std::size_t i = 5; i < edges; ++i) {
            ms.push_back(ms[i] + Q(1, 97));
            if (ms[i] - Q(1, 97) >= Q(1)) ms.push_back(ms[i] - Q(1, 97));
          }
          for (const Q& m : ms)
            if (m >= Q(1)) out.push_back({d, r, g, th, m});
        }
  return out;
}

struct TableRow {
  Tuple t;
  std::string regimes;  // "Tag:exp;..." in classifier order
  std::string v_exponent;  // "none" when no statement
};

/// Hand-worked classification table; the expected strings were derived on
/// paper from the closed forms and cross-checked with the evaluator above.
inline std::vector<TableRow> regime_table() {
  return {
      {{3, Q(2), Q(1, 2), Q(1, 2), Q(2)}, "Bounded:inf;", "inf"},
      {{3, Q(2), Q(1, 2), Q(1, 2), Q(3, 2)}, "Borderline:any-finite;", "inf"},
      {{3, Q(2), Q(1, 2), Q(1, 2), Q(6, 5)}, "DualSpace:9;", "inf"},
      {{3, Q(2), Q(1, 2), Q(1, 2), Q(12, 11)}, "DualSpace:6;", "inf"},
      {{3, Q(2), Q(1, 2), Q(1, 2), Q(1)}, "", "none"},
      {{3, Q(7), Q(1, 2), Q(1, 2), Q(14, 13)}, "OutsideDual_Lr:7;", "none"},
      {{3, Q(7), Q(1, 2), Q(0), Q(16, 15)}, "OutsideDual_Lr1:8;", "none"},
      {{3, Q(7), Q(1, 2), Q(0), Q(14, 13)}, "OutsideDual_Lr:7;OutsideDual_Lr1:8;", "none"},
      {{3, Q(7), Q(1, 2), Q(0), Q(1)}, "", "none"},
      {{3, Q(6), Q(1, 2), Q(0), Q(14, 13)}, "OutsideDual_Lr1:7;", "none"},
      {{3, Q(3), Q(1, 2), Q(1, 2), Q(7, 5)}, "DualSpace:63/2;HigherIntegrability:9/2;", "none"},
      {{3, Q(2), Q(1, 2), Q(1, 2), Q(7, 5)}, "DualSpace:63/2;", "inf"},
      {{4, Q(2), Q(1, 2), Q(1, 2), Q(8, 7)}, "DualSpace:4;", "any-finite"},
      {{6, Q(2), Q(1, 2), Q(1, 2), Q(6, 5)}, "DualSpace:3;", "9/2"},
      {{6, Q(2), Q(1, 2), Q(1, 2), Q(2)}, "DualSpace:9;HigherIntegrability:7/2;", "inf"},
      {{6, Q(2), Q(1, 2), Q(1, 2), Q(3)}, "Borderline:any-finite;", "inf"},
      {{5, Q(2), Q(1, 4), Q(0), Q(4)}, "Bounded:inf;", "inf"},
      {{5, Q(2), Q(1, 4), Q(0), Q(5, 2)}, "Borderline:any-finite;", "inf"},
      {{3, Q(5, 2), Q(1, 4), Q(1, 2), Q(7, 5)}, "DualSpace:105/4;", "none"},
      {{3, Q(10), Q(1, 2), Q(1, 2), Q(10, 9)}, "DualSpace:45/7;HigherIntegrability:23/2;", "none"},
  };
}

}  // namespace oracle
