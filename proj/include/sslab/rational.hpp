#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sslab {

/// Thrown when an exact-arithmetic operation leaves its domain
/// (zero denominator, exponent below 1, overflow).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Exact rational number in lowest terms with a positive denominator.
///
/// Intermediate products are formed in 128-bit integers and checked on
/// the way back down, so overflow is reported instead of wrapping.
class Rational {
public:
  constexpr Rational() = default;
  constexpr Rational(std::int64_t value) : num_(value), den_(1) {}  // NOLINT implicit
  Rational(std::int64_t num, std::int64_t den) { assign(num, den); }

  [[nodiscard]] constexpr std::int64_t num() const { return num_; }
  [[nodiscard]] constexpr std::int64_t den() const { return den_; }

  [[nodiscard]] double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }

  [[nodiscard]] bool is_integer() const { return den_ == 1; }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                     static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return from_wide(static_cast<__int128>(a.num_) * b.den_ - static_cast<__int128>(b.num_) * a.den_,
                     static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw DomainError("rational division by zero");
    return from_wide(static_cast<__int128>(a.num_) * b.den_, static_cast<__int128>(a.den_) * b.num_);
  }
  Rational operator-() const { return Rational(-num_, den_); }

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    const __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
    const __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

  [[nodiscard]] std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

  /// Parses "p", "-p" or "p/q" with integer p, q. Decimal points are
  /// rejected: regime boundaries are exact and must stay exact.
  static Rational parse(std::string_view text) {
    auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
      return s;
    };
    text = trim(text);
    const auto slash = text.find('/');
    const auto num = parse_int(trim(text.substr(0, slash)), text);
    if (slash == std::string_view::npos) return Rational(num);
    const auto den = parse_int(trim(text.substr(slash + 1)), text);
    if (den == 0) throw DomainError("zero denominator in '" + std::string(text) + "'");
    return Rational(num, den);
  }

private:
  void assign(std::int64_t num, std::int64_t den) {
    if (den == 0) throw DomainError("rational with zero denominator");
    *this = from_wide(num, den);
  }

  static Rational from_wide(__int128 num, __int128 den) {
    if (den == 0) throw DomainError("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    __int128 a = num < 0 ? -num : num;
    __int128 b = den;
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      num /= a;
      den /= a;
    }
    constexpr __int128 lim = INT64_MAX;
    if (num > lim || num < -lim || den > lim) throw DomainError("rational overflow");
    Rational r;
    r.num_ = static_cast<std::int64_t>(num);
    r.den_ = static_cast<std::int64_t>(den);
    return r;
  }

  static std::int64_t parse_int(std::string_view s, std::string_view whole) {
    if (s.empty()) throw DomainError("malformed fraction '" + std::string(whole) + "'");
    std::size_t i = 0;
    bool neg = false;
    if (s[0] == '-' || s[0] == '+') {
      neg = s[0] == '-';
      i = 1;
    }
    if (i == s.size()) throw DomainError("malformed fraction '" + std::string(whole) + "'");
    __int128 v = 0;
    for (; i < s.size(); ++i) {
      if (s[i] < '0' || s[i] > '9') throw DomainError("malformed fraction '" + std::string(whole) + "'");
      v = v * 10 + (s[i] - '0');
      if (v > INT64_MAX) throw DomainError("fraction component too large in '" + std::string(whole) + "'");
    }
    return static_cast<std::int64_t>(neg ? -v : v);
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

inline std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

/// Lebesgue/Sobolev exponent: a finite rational, the marker "any finite
/// exponent" (the value p* takes at p = d), or +infinity.
///
/// Ordering: every finite rational < AnyFinite < Infinity.
class Exponent {
public:
  enum class Kind { Finite, AnyFinite, Infinity };

  constexpr Exponent() = default;
  Exponent(Rational value) : kind_(Kind::Finite), value_(value) {}  // NOLINT implicit
  Exponent(std::int64_t value) : kind_(Kind::Finite), value_(value) {}  // NOLINT implicit

  static Exponent infinity() { return Exponent(Kind::Infinity); }
  static Exponent any_finite() { return Exponent(Kind::AnyFinite); }

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] bool is_finite() const { return kind_ == Kind::Finite; }
  [[nodiscard]] bool is_infinite() const { return kind_ == Kind::Infinity; }
  [[nodiscard]] bool is_any_finite() const { return kind_ == Kind::AnyFinite; }

  /// The rational value; only valid for finite exponents.
  [[nodiscard]] const Rational& value() const {
    if (kind_ != Kind::Finite) throw DomainError("exponent " + str() + " has no finite value");
    return value_;
  }

  friend bool operator==(const Exponent& a, const Exponent& b) {
    if (a.kind_ != b.kind_) return false;
    return a.kind_ != Kind::Finite || a.value_ == b.value_;
  }
  friend std::strong_ordering operator<=>(const Exponent& a, const Exponent& b) {
    if (a.kind_ != b.kind_) return static_cast<int>(a.kind_) <=> static_cast<int>(b.kind_);
    if (a.kind_ != Kind::Finite) return std::strong_ordering::equal;
    return a.value_ <=> b.value_;
  }

  [[nodiscard]] std::string str() const {
    switch (kind_) {
      case Kind::Infinity: return "inf";
      case Kind::AnyFinite: return "any-finite";
      case Kind::Finite: break;
    }
    return value_.str();
  }

private:
  explicit Exponent(Kind k) : kind_(k) {}
  Kind kind_ = Kind::Finite;
  Rational value_{1};
};

inline std::ostream& operator<<(std::ostream& os, const Exponent& e) { return os << e.str(); }

}  // namespace sslab
