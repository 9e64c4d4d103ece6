#pragma once

// Uniform tensor-product grids on the unit box, grid functions with
// homogeneous Dirichlet boundary, truncations and discrete norms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslab/rational.hpp"

namespace sslab {

/// Interior nodes of the unit box [0,1]^d with spacing h = 1/(n+1).
/// The boundary nodes are not stored; their values are zero.
class GridSpec {
public:
  static constexpr int kMaxDim = 3;

  GridSpec(int d, int n_cells) : d_(d), n_(n_cells) {
    if (d < 1 || d > kMaxDim)
      throw DomainError("solver grids support d in {1,2,3} (got d=" + std::to_string(d) + ")");
    if (n_cells < 3) throw DomainError("n_cells must be >= 3 (got " + std::to_string(n_cells) + ")");
  }

  [[nodiscard]] int dim() const { return d_; }
  [[nodiscard]] int n_cells() const { return n_; }
  [[nodiscard]] double h() const { return 1.0 / (n_ + 1); }
  /// Quadrature weight h^d.
  [[nodiscard]] double cell_volume() const { return std::pow(h(), d_); }
  [[nodiscard]] std::size_t size() const {
    std::size_t s = 1;
    for (int k = 0; k < d_; ++k) s *= static_cast<std::size_t>(n_);
    return s;
  }
  /// Discrete measure of the box, n^d h^d.
  [[nodiscard]] double measure() const { return static_cast<double>(size()) * cell_volume(); }
  /// Below d = 3 the theory does not apply; such grids only serve convergence tests.
  [[nodiscard]] bool theory_off() const { return d_ < 3; }

  /// Index stride along axis k (axis 0 is the fastest).
  [[nodiscard]] std::size_t stride(int k) const {
    std::size_t s = 1;
    for (int j = 0; j < k; ++j) s *= static_cast<std::size_t>(n_);
    return s;
  }

  /// Multi-index of node i, components in [0, n).
  [[nodiscard]] std::array<int, kMaxDim> coords(std::size_t i) const {
    std::array<int, kMaxDim> c{0, 0, 0};
    for (int k = 0; k < d_; ++k) {
      c[k] = static_cast<int>(i % static_cast<std::size_t>(n_));
      i /= static_cast<std::size_t>(n_);
    }
    return c;
  }

  /// Physical position of node i.
  [[nodiscard]] std::array<double, kMaxDim> position(std::size_t i) const {
    const auto c = coords(i);
    std::array<double, kMaxDim> x{0.0, 0.0, 0.0};
    for (int k = 0; k < d_; ++k) x[k] = (c[k] + 1) * h();
    return x;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

private:
  int d_;
  int n_;
};

using Point = std::array<double, GridSpec::kMaxDim>;

/// Real grid function over the interior nodes, lexicographic order.
class Field {
public:
  explicit Field(const GridSpec& grid, double fill = 0.0) : grid_(grid), values_(grid.size(), fill) {}
  Field(const GridSpec& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw DomainError("field has " + std::to_string(values_.size()) + " values, grid needs " +
                        std::to_string(grid_.size()));
  }

  /// Nodal samples of g.
  static Field sample(const GridSpec& grid, const std::function<double(const Point&)>& g) {
    Field f(grid);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = g(grid.position(i));
    return f;
  }

  [[nodiscard]] const GridSpec& grid() const { return grid_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] std::span<double> values() { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  [[nodiscard]] double max() const { return *std::max_element(values_.begin(), values_.end()); }
  [[nodiscard]] double min() const { return *std::min_element(values_.begin(), values_.end()); }
  [[nodiscard]] double sup_abs() const {
    double s = 0.0;
    for (double v : values_) s = std::max(s, std::abs(v));
    return s;
  }
  [[nodiscard]] bool is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }

  /// Nodewise map into a new field.
  template <class F>
  [[nodiscard]] Field map(F&& fn) const {
    Field out(grid_);
    for (std::size_t i = 0; i < size(); ++i) out[i] = fn(values_[i]);
    return out;
  }

  Field& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }
  friend Field operator*(double c, Field f) { return f *= c; }
  friend Field operator-(const Field& a, const Field& b) {
    a.check_same(b);
    Field out(a.grid_);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
  }
  friend Field operator+(const Field& a, const Field& b) {
    a.check_same(b);
    Field out(a.grid_);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
  }

  void check_same(const Field& other) const {
    if (!(grid_ == other.grid_)) throw DomainError("fields live on different grids");
  }

private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// T_k(s) = max(-k, min(s, k)).
inline Field truncate_Tk(const Field& f, double k) {
  if (!(k >= 0.0)) throw DomainError("truncation level must be >= 0");
  return f.map([k](double s) { return std::max(-k, std::min(s, k)); });
}

/// G_k(s) = (|s| - k)_+ sign(s).
inline Field excess_Gk(const Field& f, double k) {
  if (!(k >= 0.0)) throw DomainError("truncation level must be >= 0");
  return f.map([k](double s) {
    if (s > k) return s - k;
    if (s < -k) return s + k;
    return 0.0;
  });
}

/// (h^d sum |f|^p)^(1/p); max |f| for p = inf.
inline double lp_norm(const Field& f, double p) {
  if (std::isinf(p)) return f.sup_abs();
  if (!(p >= 1.0)) throw DomainError("L^p norm requires p >= 1");
  // scale by the sup to keep large exponents from overflowing
  const double s = f.sup_abs();
  if (s == 0.0) return 0.0;
  double acc = 0.0;
  for (double v : f.values()) acc += std::pow(std::abs(v) / s, p);
  return s * std::pow(acc * f.grid().cell_volume(), 1.0 / p);
}

inline double lp_norm(const Field& f, const Exponent& p) {
  if (p.is_infinite()) return f.sup_abs();
  if (p.is_any_finite()) throw DomainError("L^p norm needs a concrete exponent, not the any-finite marker");
  const Rational& v = p.value();
  if (v < Rational(1)) throw DomainError("L^p norm requires p >= 1, got " + v.str());
  return lp_norm(f, v.to_double());
}

/// h^d sum f over all nodes.
inline double integral(const Field& f) {
  double acc = 0.0;
  for (double v : f.values()) acc += v;
  return acc * f.grid().cell_volume();
}

/// h^d sum a*b.
inline double inner(const Field& a, const Field& b) {
  a.check_same(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc * a.grid().cell_volume();
}

/// Visits every grid face once. Along axis k the faces are indexed by
/// (node multi-index with component k in [0, n]); face i along k sits
/// between node i-1 and node i, where the out-of-range nodes are the
/// boundary. `fn(k, face_index, lo, hi)` receives node indices or -1.
template <class Fn>
void for_each_face(const GridSpec& g, Fn&& fn) {
  const int n = g.n_cells();
  const int d = g.dim();
  for (int k = 0; k < d; ++k) {
    const std::size_t sk = g.stride(k);
    // faces per axis: (n+1) * n^(d-1); enumerate with component k in [0, n]
    std::size_t face = 0;
    std::array<int, GridSpec::kMaxDim> c{0, 0, 0};
    std::array<int, GridSpec::kMaxDim> ext{1, 1, 1};
    for (int j = 0; j < d; ++j) ext[j] = (j == k) ? n + 1 : n;
    const std::size_t total = static_cast<std::size_t>(ext[0]) * ext[1] * ext[2];
    for (std::size_t t = 0; t < total; ++t, ++face) {
      std::size_t rem = t;
      for (int j = 0; j < d; ++j) {
        c[j] = static_cast<int>(rem % static_cast<std::size_t>(ext[j]));
        rem /= static_cast<std::size_t>(ext[j]);
      }
      std::size_t base = 0;
      for (int j = 0; j < d; ++j)
        if (j != k) base += static_cast<std::size_t>(c[j]) * g.stride(j);
      const long lo = c[k] > 0 ? static_cast<long>(base + (c[k] - 1) * sk) : -1;
      const long hi = c[k] < n ? static_cast<long>(base + c[k] * sk) : -1;
      fn(k, face, lo, hi);
    }
  }
}

/// Number of faces normal to one axis: (n+1) n^(d-1).
inline std::size_t faces_per_axis(const GridSpec& g) { return g.size() / g.n_cells() * (g.n_cells() + 1); }

/// Face-based discrete gradient energy: sqrt(sum over faces (jump/h)^2 h^d),
/// including the faces that touch the zero boundary.
inline double h1_seminorm(const Field& f) {
  const double h = f.grid().h();
  double acc = 0.0;
  for_each_face(f.grid(), [&](int, std::size_t, long lo, long hi) {
    const double a = lo >= 0 ? f[static_cast<std::size_t>(lo)] : 0.0;
    const double b = hi >= 0 ? f[static_cast<std::size_t>(hi)] : 0.0;
    const double g = (b - a) / h;
    acc += g * g;
  });
  return std::sqrt(acc * f.grid().cell_volume());
}

/// h^d sum of weight over nodes where field >= level.
inline double superlevel_integral(const Field& field, const Field& weight, double level) {
  field.check_same(weight);
  if (!(level > 0.0)) throw DomainError("superlevel height must be > 0");
  double acc = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field[i] >= level) acc += weight[i];
  return acc * field.grid().cell_volume();
}

/// Text format: header line "d,n_cells", then one value per line.
inline void save_field(const Field& f, std::ostream& os) {
  os << f.grid().dim() << ',' << f.grid().n_cells() << '\n';
  char buf[64];
  for (double v : f.values()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    os << buf;
  }
}

inline Field load_field(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw DomainError("field file is empty");
  const auto comma = header.find(',');
  if (comma == std::string::npos) throw DomainError("field header must be 'd,n_cells', got '" + header + "'");
  int d = 0;
  int n = 0;
  try {
    d = std::stoi(header.substr(0, comma));
    n = std::stoi(header.substr(comma + 1));
  } catch (const std::exception&) {
    throw DomainError("field header must be 'd,n_cells', got '" + header + "'");
  }
  GridSpec g(d, n);
  std::vector<double> vals;
  vals.reserve(g.size());
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      vals.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw DomainError("bad field value '" + line + "'");
    }
  }
  return Field(g, std::move(vals));
}

inline void save_field(const Field& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  save_field(f, os);
  if (!os) throw std::runtime_error("write failed for " + path);
}

inline Field load_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return load_field(is);
}

}  // namespace sslab
