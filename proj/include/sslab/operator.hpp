#pragma once

// Discrete -div(A(x) D .) with homogeneous Dirichlet boundary on the
// (2d+1)-point stencil, A = diag(a_1, ..., a_d) sampled at faces.
// The assembled matrix is a symmetric M-matrix, so nonnegative right-hand
// sides give nonnegative solutions.

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslab/field.hpp"

namespace sslab {

/// Face-sampled diagonal coefficient matrix with ellipticity bounds.
class CoefficientField {
public:
  /// Face arrays are indexed as in for_each_face; one array per axis.
  CoefficientField(const GridSpec& grid, std::vector<std::vector<double>> faces, double alpha, double beta)
      : grid_(grid), faces_(std::move(faces)), alpha_(alpha), beta_(beta) {
    if (!(alpha > 0.0)) throw DomainError("ellipticity bound alpha must be > 0");
    if (!(alpha <= beta)) throw DomainError("ellipticity bounds need alpha <= beta");
    if (static_cast<int>(faces_.size()) != grid.dim()) throw DomainError("need one face array per axis");
    for (const auto& a : faces_)
      if (a.size() != faces_per_axis(grid)) throw DomainError("face array has the wrong length");
  }

  /// a_k == value on every face.
  static CoefficientField constant(const GridSpec& grid, double value) {
    std::vector<std::vector<double>> faces(grid.dim(), std::vector<double>(faces_per_axis(grid), value));
    return CoefficientField(grid, std::move(faces), value, value);
  }

  /// a_k evaluated analytically at face midpoints.
  static CoefficientField from_face_function(const GridSpec& grid,
                                             const std::function<double(int axis, const Point&)>& a, double alpha,
                                             double beta) {
    std::vector<std::vector<double>> faces(grid.dim(), std::vector<double>(faces_per_axis(grid)));
    const double h = grid.h();
    for_each_face(grid, [&](int k, std::size_t face, long lo, long hi) {
      faces[k][face] = a(k, face_midpoint(grid, k, lo, hi, h));
    });
    return CoefficientField(grid, std::move(faces), alpha, beta);
  }

  /// Scalar coefficient sampled at nodes (boundary nodes included),
  /// face value = harmonic mean of the two adjacent samples.
  static CoefficientField from_node_samples(const GridSpec& grid, const std::function<double(const Point&)>& a,
                                            double alpha, double beta) {
    std::vector<std::vector<double>> faces(grid.dim(), std::vector<double>(faces_per_axis(grid)));
    const double h = grid.h();
    for_each_face(grid, [&](int k, std::size_t face, long lo, long hi) {
      Point left = face_midpoint(grid, k, lo, hi, h);
      Point right = left;
      left[k] -= 0.5 * h;
      right[k] += 0.5 * h;
      const double al = a(left);
      const double ar = a(right);
      faces[k][face] = (al > 0.0 && ar > 0.0) ? 2.0 * al * ar / (al + ar) : 0.0;
    });
    return CoefficientField(grid, std::move(faces), alpha, beta);
  }

  [[nodiscard]] const GridSpec& grid() const { return grid_; }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] double beta() const { return beta_; }
  [[nodiscard]] const std::vector<double>& faces(int axis) const { return faces_.at(axis); }
  [[nodiscard]] std::vector<double>& faces(int axis) { return faces_.at(axis); }

  static Point face_midpoint(const GridSpec& grid, int k, long lo, long hi, double h) {
    const long ref = hi >= 0 ? hi : lo;
    Point x = grid.position(static_cast<std::size_t>(ref));
    x[k] += hi >= 0 ? -0.5 * h : 0.5 * h;
    return x;
  }

private:
  GridSpec grid_;
  std::vector<std::vector<double>> faces_;
  double alpha_;
  double beta_;
};

struct EllipticityViolation {
  int axis;
  std::size_t face;
  Point midpoint;
  double value;
};

struct EllipticityReport {
  bool pass = true;
  double min_value = 0.0;
  double max_value = 0.0;
  std::vector<EllipticityViolation> violations;
};

/// Checks alpha <= a_k <= beta on every face and lists offenders.
inline EllipticityReport ellipticity_audit(const CoefficientField& coeff) {
  EllipticityReport rep;
  rep.min_value = std::numeric_limits<double>::infinity();
  rep.max_value = -std::numeric_limits<double>::infinity();
  const auto& g = coeff.grid();
  for_each_face(g, [&](int k, std::size_t face, long lo, long hi) {
    const double a = coeff.faces(k)[face];
    rep.min_value = std::min(rep.min_value, a);
    rep.max_value = std::max(rep.max_value, a);
    if (!(a >= coeff.alpha() && a <= coeff.beta())) {
      rep.pass = false;
      rep.violations.push_back({k, face, CoefficientField::face_midpoint(g, k, lo, hi, g.h()), a});
    }
  });
  return rep;
}

/// Per-node stencil weights a_face/h^2 towards each neighbour; weights
/// towards boundary neighbours enter the diagonal only.
class Stencil {
public:
  explicit Stencil(const CoefficientField& coeff) : grid_(coeff.grid()) {
    const auto& g = grid_;
    const double inv_h2 = 1.0 / (g.h() * g.h());
    const std::size_t n_nodes = g.size();
    lower_.assign(g.dim(), std::vector<double>(n_nodes, 0.0));
    upper_.assign(g.dim(), std::vector<double>(n_nodes, 0.0));
    diag_.assign(n_nodes, 0.0);
    for_each_face(g, [&](int k, std::size_t face, long lo, long hi) {
      const double w = coeff.faces(k)[face];
      if (!(w > 0.0))
        throw DomainError("face coefficient must be > 0 (axis " + std::to_string(k) + ", face " +
                          std::to_string(face) + ")");
      const double a = w * inv_h2;
      if (lo >= 0) {
        upper_[k][static_cast<std::size_t>(lo)] = a;
        diag_[static_cast<std::size_t>(lo)] += a;
      }
      if (hi >= 0) {
        lower_[k][static_cast<std::size_t>(hi)] = a;
        diag_[static_cast<std::size_t>(hi)] += a;
      }
    });
  }

  [[nodiscard]] const GridSpec& grid() const { return grid_; }
  [[nodiscard]] const std::vector<double>& diag() const { return diag_; }
  [[nodiscard]] const std::vector<double>& lower(int k) const { return lower_[k]; }
  [[nodiscard]] const std::vector<double>& upper(int k) const { return upper_[k]; }

private:
  GridSpec grid_;
  std::vector<std::vector<double>> lower_;
  std::vector<std::vector<double>> upper_;
  std::vector<double> diag_;
};

/// Stencil plus a nonnegative diagonal reaction c(x).
class LinearSystem {
public:
  LinearSystem(std::shared_ptr<const Stencil> stencil, Field reaction)
      : stencil_(std::move(stencil)), reaction_(std::move(reaction)) {
    if (!(stencil_->grid() == reaction_.grid())) throw DomainError("reaction lives on a different grid");
    for (std::size_t i = 0; i < reaction_.size(); ++i)
      if (!(reaction_[i] >= 0.0))
        throw DomainError("reaction must be nonnegative (node " + std::to_string(i) + " has " +
                          std::to_string(reaction_[i]) + ")");
  }

  [[nodiscard]] const GridSpec& grid() const { return stencil_->grid(); }
  [[nodiscard]] const Stencil& stencil() const { return *stencil_; }
  [[nodiscard]] const Field& reaction() const { return reaction_; }
  [[nodiscard]] double diagonal(std::size_t i) const { return stencil_->diag()[i] + reaction_[i]; }

  /// Dense matrix entry (i, j); test helper, O(d).
  [[nodiscard]] double entry(std::size_t i, std::size_t j) const {
    if (i == j) return diagonal(i);
    const auto& g = grid();
    for (int k = 0; k < g.dim(); ++k) {
      const std::size_t s = g.stride(k);
      const int ck = g.coords(i)[k];
      if (ck > 0 && j + s == i) return -stencil_->lower(k)[i];
      if (ck < g.n_cells() - 1 && j == i + s) return -stencil_->upper(k)[i];
    }
    return 0.0;
  }

private:
  std::shared_ptr<const Stencil> stencil_;
  Field reaction_;
};

inline LinearSystem assemble(const CoefficientField& coeff, const Field& reaction) {
  return LinearSystem(std::make_shared<const Stencil>(coeff), reaction);
}

/// y = S x without materialising S.
inline void apply(const LinearSystem& sys, std::span<const double> x, std::span<double> y) {
  const auto& g = sys.grid();
  const auto& st = sys.stencil();
  const std::size_t N = g.size();
  const auto n = static_cast<std::size_t>(g.n_cells());
  const auto& react = sys.reaction();
  for (std::size_t i = 0; i < N; ++i) y[i] = (st.diag()[i] + react[i]) * x[i];
  for (int k = 0; k < g.dim(); ++k) {
    const std::size_t s = g.stride(k);
    const auto& lo = st.lower(k);
    const auto& up = st.upper(k);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t ck = (i / s) % n;
      if (ck > 0) y[i] -= lo[i] * x[i - s];
      if (ck + 1 < n) y[i] -= up[i] * x[i + s];
    }
  }
}

inline Field apply(const LinearSystem& sys, const Field& x) {
  if (!(x.grid() == sys.grid())) throw DomainError("apply: field and system grids differ");
  Field y(x.grid());
  apply(sys, x.values(), y.values());
  return y;
}

/// Face-weighted gradient energy sum_faces a (jump/h)^2 h^d.
inline double weighted_energy(const CoefficientField& coeff, const Field& x) {
  const double h = x.grid().h();
  double acc = 0.0;
  for_each_face(x.grid(), [&](int k, std::size_t face, long lo, long hi) {
    const double a = lo >= 0 ? x[static_cast<std::size_t>(lo)] : 0.0;
    const double b = hi >= 0 ? x[static_cast<std::size_t>(hi)] : 0.0;
    const double gr = (b - a) / h;
    acc += coeff.faces(k)[face] * gr * gr;
  });
  return acc * x.grid().cell_volume();
}

/// Face-weighted gradient pairing sum_faces a (jump x/h)(jump y/h) h^d.
inline double weighted_pairing(const CoefficientField& coeff, const Field& x, const Field& y) {
  x.check_same(y);
  const double h = x.grid().h();
  double acc = 0.0;
  for_each_face(x.grid(), [&](int k, std::size_t face, long lo, long hi) {
    const auto at = [&](const Field& f, long i) { return i >= 0 ? f[static_cast<std::size_t>(i)] : 0.0; };
    acc += coeff.faces(k)[face] * (at(x, hi) - at(x, lo)) * (at(y, hi) - at(y, lo)) / (h * h);
  });
  return acc * x.grid().cell_volume();
}

/// CG gave up before reaching the requested residual.
class NonConvergence : public std::runtime_error {
public:
  NonConvergence(const std::string& what, double residual, int iterations)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + " after " +
                           std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}
  [[nodiscard]] double residual() const { return residual_; }
  [[nodiscard]] int iterations() const { return iterations_; }

private:
  double residual_;
  int iterations_;
};

struct CgResult {
  Field x;
  int iterations = 0;
  /// ||S x - b||_2 / ||b||_2 recomputed from the returned x (0 when b = 0).
  double relative_residual = 0.0;
  std::vector<double> residual_history;
};

/// Jacobi-preconditioned conjugate gradient; stops when
/// ||S x - b||_2 <= tol ||b||_2.
inline CgResult cg_solve(const LinearSystem& sys, const Field& rhs, double tol = 1e-10, int max_iter = 10000,
                         const Field* initial = nullptr) {
  if (!(tol > 0.0)) throw DomainError("cg tolerance must be > 0");
  if (!(rhs.grid() == sys.grid())) throw DomainError("cg: rhs and system grids differ");
  const std::size_t N = rhs.size();
  CgResult out{initial ? *initial : Field(rhs.grid()), 0, 0.0, {}};
  auto& x = out.x;
  double bnorm = 0.0;
  for (double v : rhs.values()) bnorm += v * v;
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0.0) {
    x = Field(rhs.grid());
    return out;
  }
  std::vector<double> r(N), z(N), p(N), q(N), inv_diag(N);
  for (std::size_t i = 0; i < N; ++i) inv_diag[i] = 1.0 / sys.diagonal(i);

  const auto residual = [&] {
    apply(sys, x.values(), q);
    double rr = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      r[i] = rhs[i] - q[i];
      rr += r[i] * r[i];
    }
    return std::sqrt(rr);
  };

  double rnorm = residual();
  out.residual_history.push_back(rnorm / bnorm);
  // Outer loop restarts from the true residual if the recursive one drifted.
  while (rnorm > tol * bnorm) {
    double rho = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      z[i] = inv_diag[i] * r[i];
      p[i] = z[i];
      rho += r[i] * z[i];
    }
    while (rnorm > tol * bnorm) {
      if (out.iterations >= max_iter) throw NonConvergence("cg_solve: iteration cap reached", rnorm / bnorm, out.iterations);
      apply(sys, p, q);
      double pq = 0.0;
      for (std::size_t i = 0; i < N; ++i) pq += p[i] * q[i];
      const double step = rho / pq;
      double rr = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        x[i] += step * p[i];
        r[i] -= step * q[i];
        rr += r[i] * r[i];
      }
      rnorm = std::sqrt(rr);
      ++out.iterations;
      out.residual_history.push_back(rnorm / bnorm);
      double rho_next = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        z[i] = inv_diag[i] * r[i];
        rho_next += r[i] * z[i];
      }
      const double beta = rho_next / rho;
      rho = rho_next;
      for (std::size_t i = 0; i < N; ++i) p[i] = z[i] + beta * p[i];
    }
    rnorm = residual();
  }
  out.relative_residual = rnorm / bnorm;
  return out;
}

}  // namespace sslab
