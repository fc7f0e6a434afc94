#pragma once

// Discrete Riemannian geometry on the slab grid: metric fields, Christoffel
// symbols, Ricci and scalar curvature, the modified Schouten tensor A^t,
// eigenvalues relative to g and boundary mean curvature.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "yamabe/errors.hpp"
#include "yamabe/grid.hpp"
#include "yamabe/linalg.hpp"

namespace yamabe {

using TensorField = std::vector<SmallMat>;

/// Symmetric positive-definite 2-tensor per node. Construction validates
/// symmetry and definiteness and caches the Cholesky factor and inverse.
class MetricField {
 public:
  MetricField() = default;

  MetricField(const GridManifold& grid, TensorField g) : grid_(grid), g_(std::move(g)) {
    if (g_.size() != grid_.size()) throw SpecError("MetricField: one tensor per node required");
    const int n = grid_.dim();
    chol_.resize(g_.size());
    inv_.resize(g_.size());
    for (std::size_t p = 0; p < g_.size(); ++p) {
      const SmallMat& m = g_[p];
      if (m.rows() != n || m.cols() != n) throw SpecError("MetricField: tensor of wrong size");
      if (!m.allFinite()) throw DefinitenessError("metric has non-finite entries at node " + std::to_string(p), p);
      if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + max_abs_entry(m))) {
        throw DefinitenessError("metric is not symmetric at node " + std::to_string(p), p);
      }
      auto l = cholesky_lower(m);
      if (!l) throw DefinitenessError("metric is not positive definite at node " + std::to_string(p), p);
      chol_[p] = *l;
      SmallMat linv = l->triangularView<Eigen::Lower>().solve(SmallMat::Identity(n, n));
      inv_[p] = linv.transpose() * linv;
    }
  }

  const GridManifold& grid() const { return grid_; }
  std::size_t size() const { return g_.size(); }
  int dim() const { return grid_.dim(); }
  const SmallMat& operator[](std::size_t p) const { return g_[p]; }
  const SmallMat& inverse(std::size_t p) const { return inv_[p]; }
  const SmallMat& cholesky(std::size_t p) const { return chol_[p]; }
  const TensorField& tensors() const { return g_; }

  ScalarField component(int i, int j) const {
    ScalarField c(static_cast<Eigen::Index>(g_.size()));
    for (std::size_t p = 0; p < g_.size(); ++p) c[static_cast<Eigen::Index>(p)] = g_[p](i, j);
    return c;
  }

  /// e^{2v} g.
  MetricField conformal(const ScalarField& v) const {
    TensorField out(g_.size());
    for (std::size_t p = 0; p < g_.size(); ++p) out[p] = std::exp(2.0 * v[static_cast<Eigen::Index>(p)]) * g_[p];
    return MetricField(grid_, std::move(out));
  }

 private:
  GridManifold grid_;
  TensorField g_;
  TensorField chol_;
  TensorField inv_;
};

// ---------------------------------------------------------------------------
// Bundled backgrounds

inline ScalarField sample(const GridManifold& grid, const std::function<double(const SmallVec&)>& fn) {
  ScalarField f(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t p = 0; p < grid.size(); ++p) f[static_cast<Eigen::Index>(p)] = fn(grid.position(p));
  return f;
}

/// e^{2u} delta for nodal samples u.
inline MetricField conformally_flat_metric(const GridManifold& grid, const ScalarField& u) {
  const int n = grid.dim();
  TensorField g(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    g[p] = std::exp(2.0 * u[static_cast<Eigen::Index>(p)]) * SmallMat::Identity(n, n);
  }
  return MetricField(grid, std::move(g));
}

inline MetricField flat_metric(const GridManifold& grid) {
  return conformally_flat_metric(grid, ScalarField::Zero(static_cast<Eigen::Index>(grid.size())));
}

/// Conformal exponent of the hyperbolic slab (y_n + 1)^{-2} delta.
inline double hyperbolic_slab_exponent(const SmallVec& x) { return -std::log(x[x.size() - 1] + 1.0); }

/// (y_n + 1)^{-2} delta: constant sectional curvature -1, Ric = -(n-1) g.
inline MetricField hyperbolic_slab_metric(const GridManifold& grid) {
  return conformally_flat_metric(grid, sample(grid, hyperbolic_slab_exponent));
}

/// dy^2 + sum_i e^{2 a_i y} dx_i^2 with rates a = alpha (1, -1, 1, -1, ...)
/// and a zero last rate when the count is odd, so the rates sum to zero.
/// Both sheets are minimal, R = -sum a_i^2 < 0, and for n = 3 the metric is
/// not conformally flat.
inline MetricField sol_slab_metric(const GridManifold& grid, double alpha) {
  const int n = grid.dim();
  const int m = n - 1;
  SmallVec rates = SmallVec::Zero(m);
  for (int i = 0; i < m - m % 2; ++i) rates[i] = (i % 2 == 0 ? alpha : -alpha);
  TensorField g(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double y = grid.coordinate(p, m);
    SmallMat e = SmallMat::Identity(n, n);
    for (int i = 0; i < m; ++i) e(i, i) = std::exp(2.0 * rates[i] * y);
    g[p] = e;
  }
  return MetricField(grid, std::move(g));
}

// ---------------------------------------------------------------------------
// Curvature

/// Gamma^l_{ij} per node, stored as upper[l](i, j).
struct Christoffel {
  std::array<SmallMat, kMaxDim> upper;
};
using ChristoffelField = std::vector<Christoffel>;

/// Nodal first and second partial derivatives of the independent metric
/// components, one scalar field per (derivative, component) pair.
class MetricDerivatives {
 public:
  MetricDerivatives(const MetricField& g, const FiniteDifference& fd, bool with_second) : n_(g.dim()) {
    int c = 0;
    for (int i = 0; i < n_; ++i) {
      for (int j = i; j < n_; ++j) component_[i][j] = component_[j][i] = c++;
    }
    components_ = c;
    first_.resize(static_cast<std::size_t>(n_ * components_));
    if (with_second) second_.resize(static_cast<std::size_t>(n_ * n_ * components_));
    for (int i = 0; i < n_; ++i) {
      for (int j = i; j < n_; ++j) {
        const ScalarField gij = g.component(i, j);
        const int cc = component_[i][j];
        for (int a = 0; a < n_; ++a) {
          first_[static_cast<std::size_t>(a * components_ + cc)] = fd.d1(a) * gij;
          if (!with_second) continue;
          for (int b = a; b < n_; ++b) {
            second_[static_cast<std::size_t>((a * n_ + b) * components_ + cc)] = fd.d2(a, b) * gij;
          }
        }
      }
    }
  }

  /// d_a g_ij at node p.
  double d1(int a, int i, int j, std::size_t p) const {
    return first_[static_cast<std::size_t>(a * components_ + component_[i][j])][static_cast<Eigen::Index>(p)];
  }

  /// d_a d_b g_ij at node p.
  double d2(int a, int b, int i, int j, std::size_t p) const {
    if (a > b) std::swap(a, b);
    return second_[static_cast<std::size_t>((a * n_ + b) * components_ + component_[i][j])][static_cast<Eigen::Index>(p)];
  }

  /// d_a g at node p as a matrix.
  SmallMat first(int a, std::size_t p) const {
    SmallMat m(n_, n_);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) m(i, j) = d1(a, i, j, p);
    }
    return m;
  }

 private:
  int n_;
  int components_ = 0;
  int component_[kMaxDim][kMaxDim]{};
  std::vector<ScalarField> first_;
  std::vector<ScalarField> second_;
};

inline MetricDerivatives metric_derivatives(const MetricField& g, const FiniteDifference& fd, bool with_second) {
  return MetricDerivatives(g, fd, with_second);
}

namespace detail {

/// Christoffel symbols of the first kind, lower[m](i,j) = Gamma_{m,ij}.
inline std::array<SmallMat, kMaxDim> christoffel_first_kind(const MetricDerivatives& d, std::size_t p, int n) {
  std::array<SmallMat, kMaxDim> lower;
  for (int m = 0; m < n; ++m) {
    lower[m] = SmallMat(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        lower[m](i, j) = 0.5 * (d.d1(i, j, m, p) + d.d1(j, i, m, p) - d.d1(m, i, j, p));
      }
    }
  }
  return lower;
}

inline Christoffel raise(const std::array<SmallMat, kMaxDim>& lower, const SmallMat& ginv, int n) {
  Christoffel c;
  for (int l = 0; l < n; ++l) {
    c.upper[l] = SmallMat::Zero(n, n);
    for (int m = 0; m < n; ++m) c.upper[l] += ginv(l, m) * lower[m];
  }
  return c;
}

}  // namespace detail

/// Gamma^l_{ij} = 1/2 g^{lm} (d_i g_jm + d_j g_im - d_m g_ij).
inline ChristoffelField christoffels(const MetricField& g, const FiniteDifference& fd) {
  const int n = g.dim();
  const auto d = metric_derivatives(g, fd, false);
  ChristoffelField out(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    out[p] = detail::raise(detail::christoffel_first_kind(d, p, n), g.inverse(p), n);
  }
  return out;
}

inline ChristoffelField christoffels(const MetricField& g) { return christoffels(g, FiniteDifference(g.grid())); }

struct RicciScalar {
  TensorField ricci;
  ScalarField scalar;
};

/// Ricci tensor and scalar curvature. Derivatives of the Christoffel symbols
/// are expanded in first and second metric derivatives so every node,
/// boundary sheets included, is second-order accurate.
inline RicciScalar ricci_scalar(const MetricField& g, const FiniteDifference& fd) {
  const int n = g.dim();
  const std::size_t N = g.size();
  const auto d = metric_derivatives(g, fd, true);
  RicciScalar out{TensorField(N), ScalarField(static_cast<Eigen::Index>(N))};
  for (std::size_t p = 0; p < N; ++p) {
    const SmallMat& ginv = g.inverse(p);
    const auto lower = detail::christoffel_first_kind(d, p, n);
    const Christoffel gam = detail::raise(lower, ginv, n);

    // dgam[k].upper[l](i,j) = d_k Gamma^l_{ij}
    std::array<Christoffel, kMaxDim> dgam;
    for (int k = 0; k < n; ++k) {
      const SmallMat dginv = -ginv * d.first(k, p) * ginv;
      for (int l = 0; l < n; ++l) dgam[k].upper[l] = SmallMat::Zero(n, n);
      for (int m = 0; m < n; ++m) {
        SmallMat dlow(n, n);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            dlow(i, j) = 0.5 * (d.d2(k, i, j, m, p) + d.d2(k, j, i, m, p) - d.d2(k, m, i, j, p));
          }
        }
        for (int l = 0; l < n; ++l) dgam[k].upper[l] += dginv(l, m) * lower[m] + ginv(l, m) * dlow;
      }
    }

    SmallMat ric = SmallMat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double r = 0.0;
        for (int l = 0; l < n; ++l) {
          r += dgam[l].upper[l](i, j) - dgam[j].upper[l](i, l);
          for (int m = 0; m < n; ++m) {
            r += gam.upper[l](l, m) * gam.upper[m](i, j) - gam.upper[l](j, m) * gam.upper[m](i, l);
          }
        }
        ric(i, j) = r;
      }
    }
    ric = symmetrize(ric);
    out.ricci[p] = ric;
    out.scalar[static_cast<Eigen::Index>(p)] = (ginv.cwiseProduct(ric)).sum();
  }
  return out;
}

inline RicciScalar ricci_scalar(const MetricField& g) { return ricci_scalar(g, FiniteDifference(g.grid())); }

inline void require_t_below_one(double t) {
  if (!(t < 1.0)) {
    throw ParameterError("modified Schouten tensor requires t < 1 (got t=" + std::to_string(t) + ")");
  }
}

/// A^t = (Ric - t R/(2(n-1)) g) / (n-2) at one node.
inline SmallMat schouten_t(const SmallMat& ricci, double scalar, const SmallMat& g, double t) {
  require_t_below_one(t);
  const double n = static_cast<double>(g.rows());
  return (ricci - (t * scalar / (2.0 * (n - 1.0))) * g) / (n - 2.0);
}

inline TensorField schouten_t(const TensorField& ricci, const ScalarField& scalar, const MetricField& g,
                              double t) {
  require_t_below_one(t);
  TensorField out(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) out[p] = schouten_t(ricci[p], scalar[static_cast<Eigen::Index>(p)], g[p], t);
  return out;
}

/// Eigenvalues of g^{-1} a, ascending.
inline EigenVector relative_eigenvalues(const SmallMat& a, const SmallMat& g) {
  auto l = cholesky_lower(g);
  if (!l) throw DefinitenessError("relative_eigenvalues: metric not positive definite", 0);
  return pencil_eigen(a, *l).values;
}

inline std::vector<EigenVector> rel_eigenvalues(const TensorField& a, const MetricField& g) {
  std::vector<EigenVector> out(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) out[p] = pencil_eigen(a[p], g.cholesky(p)).values;
  return out;
}

/// Christoffels, Ricci, scalar curvature and A^t of one metric.
struct CurvatureBundle {
  ChristoffelField christoffel;
  TensorField ricci;
  ScalarField scalar;
  TensorField schouten_t;
  double t = 0.0;
};

inline CurvatureBundle curvature(const MetricField& g, const FiniteDifference& fd, double t) {
  require_t_below_one(t);
  CurvatureBundle b;
  b.christoffel = christoffels(g, fd);
  auto rs = ricci_scalar(g, fd);
  b.ricci = std::move(rs.ricci);
  b.scalar = std::move(rs.scalar);
  b.schouten_t = schouten_t(b.ricci, b.scalar, g, t);
  b.t = t;
  return b;
}

// ---------------------------------------------------------------------------
// Boundary geometry

/// Outward unit normal vector nu^m on `sheet` at node p (as a field over the
/// level sets of y_n).
inline SmallVec unit_normal(const MetricField& g, std::size_t p, Sheet sheet) {
  const int n = g.dim();
  const SmallMat& ginv = g.inverse(p);
  return outward_sign(sheet) * ginv.col(n - 1) / std::sqrt(ginv(n - 1, n - 1));
}

/// Mean curvature (1/(n-1)) tr g(nabla nu, .) of the y_n level set through p
/// with respect to the normal oriented outward from `sheet`.
inline double level_set_mean_curvature(const MetricField& g, const Christoffel& gamma, std::size_t p,
                                       Sheet sheet) {
  const int n = g.dim();
  const int t = n - 1;
  const SmallMat induced_inv = g[p].topLeftCorner(t, t).inverse();
  const double nu_lower = outward_sign(sheet) / std::sqrt(g.inverse(p)(n - 1, n - 1));
  // g(nabla_i nu, d_j) = -Gamma^m_{ij} nu_m with nu_m = sign delta_{mn} / |dy_n|
  double tr = 0.0;
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) tr += induced_inv(i, j) * gamma.upper[n - 1](i, j);
  }
  return -nu_lower * tr / t;
}

inline BoundaryPair boundary_mean_curvature(const MetricField& g, const ChristoffelField& gamma) {
  const auto& grid = g.grid();
  BoundaryPair out;
  for (Sheet s : kSheets) {
    BoundaryField b{s, Eigen::VectorXd(static_cast<Eigen::Index>(grid.sheet_size()))};
    for (std::size_t k = 0; k < grid.sheet_size(); ++k) {
      const std::size_t p = grid.sheet_node(s, k);
      b.values[static_cast<Eigen::Index>(k)] = level_set_mean_curvature(g, gamma[p], p, s);
    }
    out[static_cast<int>(s)] = std::move(b);
  }
  return out;
}

inline BoundaryPair boundary_mean_curvature(const MetricField& g) {
  return boundary_mean_curvature(g, christoffels(g));
}

/// Depth over which boundary data are extended into M.
inline constexpr double kExtensionDepth = 0.25;

/// C^2 quintic smoothstep on [0,1].
inline double smoothstep5(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
}

/// Collar profile: 1 on the sheet, flat there, 0 beyond kExtensionDepth.
inline double collar_cutoff(double depth) { return 1.0 - smoothstep5(depth / kExtensionDepth); }

inline double depth_from(const GridManifold& grid, std::size_t p, Sheet s) {
  const double y = grid.coordinate(p, grid.normal_axis());
  return s == Sheet::Lower ? y : 1.0 - y;
}

/// psi(y') chi(depth): equals psi on its sheet, vanishes beyond depth 1/4.
inline ScalarField extend_boundary_field(const BoundaryField& field, const GridManifold& grid) {
  if (static_cast<std::size_t>(field.values.size()) != grid.sheet_size()) {
    throw SpecError("extend_boundary_field: field does not cover its sheet");
  }
  ScalarField out = ScalarField::Zero(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double d = depth_from(grid, p, field.sheet);
    if (d >= kExtensionDepth) continue;
    out[static_cast<Eigen::Index>(p)] = field.values[static_cast<Eigen::Index>(grid.sheet_position(p))] * collar_cutoff(d);
  }
  return out;
}

/// Sum of the extensions of both sheets (supports are disjoint).
inline ScalarField extend_boundary_pair(const BoundaryPair& fields, const GridManifold& grid) {
  return extend_boundary_field(fields[0], grid) + extend_boundary_field(fields[1], grid);
}

/// Extension of h_g by evaluating the mean-curvature trace formula on the
/// y_n level sets of each collar, blended with the collar cutoff.
inline ScalarField extend_mean_curvature_trace(const MetricField& g, const ChristoffelField& gamma) {
  const auto& grid = g.grid();
  ScalarField out = ScalarField::Zero(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    for (Sheet s : kSheets) {
      const double d = depth_from(grid, p, s);
      if (d >= kExtensionDepth) continue;
      out[static_cast<Eigen::Index>(p)] += level_set_mean_curvature(g, gamma[p], p, s) * collar_cutoff(d);
    }
  }
  return out;
}

}  // namespace yamabe
