#pragma once

// Conformal calculus for g~ = e^{2v} g: the deformation tensor W, the
// transformed A^t and boundary mean curvature, the residual of the governing
// equation, and the metric gauges used by the a-priori bounds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "yamabe/geometry.hpp"
#include "yamabe/problem.hpp"
#include "yamabe/symfunc.hpp"

namespace yamabe {

/// Background metric with everything the conformal formulas reuse.
struct Background {
  MetricField g;
  double t = 0.0;
  FiniteDifference fd;
  CurvatureBundle curv;
  BoundaryPair h;

  Background(const MetricField& metric, double t_param)
      : g(metric), t(t_param), fd(metric.grid()), curv(curvature(metric, fd, t_param)),
        h(boundary_mean_curvature(metric, curv.christoffel)) {}
};

/// Coordinate gradient and Hessian of a scalar field.
struct ScalarDerivatives {
  std::vector<ScalarField> first;   ///< [a] = d_a v
  std::vector<ScalarField> second;  ///< [a*n+b] = d_a d_b v

  ScalarDerivatives(const ScalarField& v, const FiniteDifference& fd)
      : first(fd.gradient(v)), second(fd.second(v)) {}

  SmallVec gradient(std::size_t p, int n) const {
    SmallVec d(n);
    for (int a = 0; a < n; ++a) d[a] = first[static_cast<std::size_t>(a)][static_cast<Eigen::Index>(p)];
    return d;
  }

  SmallMat hessian(std::size_t p, int n) const {
    SmallMat h(n, n);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) h(a, b) = second[static_cast<std::size_t>(a * n + b)][static_cast<Eigen::Index>(p)];
    }
    return h;
  }
};

/// Coefficients of the Laplacian and gradient-square terms in W.
struct DeformationCoefficients {
  double laplacian;
  double gradient;
};

inline DeformationCoefficients deformation_coefficients(int n, double t) {
  return {(1.0 - t) / (n - 2.0), (2.0 - t) / 2.0};
}

/// Covariant Hessian d_a d_b v - Gamma^l_ab d_l v at one node.
inline SmallMat covariant_hessian(const SmallMat& hess, const SmallVec& grad, const Christoffel& gamma) {
  const int n = static_cast<int>(grad.size());
  SmallMat out = hess;
  for (int l = 0; l < n; ++l) out -= grad[l] * gamma.upper[l];
  return out;
}

/// W at one node from the coordinate derivatives of v.
inline SmallMat deformation_at(const SmallMat& hess, const SmallVec& grad, const Christoffel& gamma,
                               const SmallMat& g, const SmallMat& ginv, double t) {
  const auto c = deformation_coefficients(static_cast<int>(grad.size()), t);
  const SmallMat cov = covariant_hessian(hess, grad, gamma);
  const double lap = ginv.cwiseProduct(cov).sum();
  const double grad2 = grad.dot(ginv * grad);
  return symmetrize(cov + (c.laplacian * lap + c.gradient * grad2) * g - grad * grad.transpose());
}

/// W = nabla^2 v + ((1-t)/(n-2)) (Delta v) g + ((2-t)/2) |dv|^2 g - dv (x) dv.
inline TensorField deformation_tensor(const ScalarField& v, const Background& bg) {
  const int n = bg.g.dim();
  const ScalarDerivatives d(v, bg.fd);
  TensorField w(bg.g.size());
  for (std::size_t p = 0; p < w.size(); ++p) {
    w[p] = deformation_at(d.hessian(p, n), d.gradient(p, n), bg.curv.christoffel[p], bg.g[p], bg.g.inverse(p), bg.t);
  }
  return w;
}

inline TensorField deformation_tensor(const ScalarField& v, const MetricField& g, double t) {
  return deformation_tensor(v, Background(g, t));
}

struct PushforwardSchouten {
  TensorField schouten;               ///< A^t of e^{2v} g
  std::vector<EigenVector> lambda;    ///< its eigenvalues relative to e^{2v} g
};

/// A^t of e^{2v} g is A^t_g - W as a (0,2) tensor; relative to e^{2v} g its
/// eigenvalues are e^{-2v} times those of A^t_g - W relative to g.
inline PushforwardSchouten pushforward_schouten(const ScalarField& v, const Background& bg) {
  const TensorField w = deformation_tensor(v, bg);
  PushforwardSchouten out{TensorField(w.size()), std::vector<EigenVector>(w.size())};
  for (std::size_t p = 0; p < w.size(); ++p) {
    out.schouten[p] = bg.curv.schouten_t[p] - w[p];
    out.lambda[p] = std::exp(-2.0 * v[static_cast<Eigen::Index>(p)]) *
                    pencil_eigen(out.schouten[p], bg.g.cholesky(p)).values;
  }
  return out;
}

inline PushforwardSchouten pushforward_schouten(const ScalarField& v, const MetricField& g, double t) {
  return pushforward_schouten(v, Background(g, t));
}

/// nu^m d_m v on each sheet with the outward unit normal of g.
inline BoundaryPair normal_derivative(const ScalarField& v, const MetricField& g, const FiniteDifference& fd) {
  const auto& grid = g.grid();
  const int n = grid.dim();
  const auto grad = fd.gradient(v);
  BoundaryPair out;
  for (Sheet s : kSheets) {
    BoundaryField b{s, Eigen::VectorXd(static_cast<Eigen::Index>(grid.sheet_size()))};
    for (std::size_t k = 0; k < grid.sheet_size(); ++k) {
      const std::size_t p = grid.sheet_node(s, k);
      const SmallVec nu = unit_normal(g, p, s);
      double dv = 0.0;
      for (int m = 0; m < n; ++m) dv += nu[m] * grad[static_cast<std::size_t>(m)][static_cast<Eigen::Index>(p)];
      b.values[static_cast<Eigen::Index>(k)] = dv;
    }
    out[static_cast<int>(s)] = std::move(b);
  }
  return out;
}

/// h of e^{2v} g from h_g: (h_g + v_nu) e^{-v}.
inline BoundaryPair pushforward_mean_curvature(const ScalarField& v, const Background& bg) {
  const auto& grid = bg.g.grid();
  BoundaryPair out = normal_derivative(v, bg.g, bg.fd);
  for (Sheet s : kSheets) {
    auto& b = out[static_cast<int>(s)];
    for (std::size_t k = 0; k < grid.sheet_size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const double vb = v[static_cast<Eigen::Index>(grid.sheet_node(s, k))];
      b.values[i] = (bg.h[static_cast<int>(s)].values[i] + b.values[i]) * std::exp(-vb);
    }
  }
  return out;
}

inline BoundaryPair pushforward_mean_curvature(const ScalarField& v, const MetricField& g) {
  return pushforward_mean_curvature(v, Background(g, 0.0));
}

// ---------------------------------------------------------------------------
// Distance-to-boundary surrogate

/// Depth to which the surrogate equals the scaled coordinate depth, and the
/// depth by which it reaches its cap. The exact zone spans every boundary
/// stencil on grids of 16 cells or more.
inline constexpr double kSurrogateExactDepth = 0.1875;
inline constexpr double kSurrogateCapDepth = 0.5;

/// 1 up to kSurrogateExactDepth, 0 beyond kSurrogateCapDepth, C^2 in between.
inline double surrogate_blend(double d) {
  return 1.0 - smoothstep5((d - kSurrogateExactDepth) / (kSurrogateCapDepth - kSurrogateExactDepth));
}

/// C^2 profile: identity up to kSurrogateExactDepth, constant beyond
/// kSurrogateCapDepth, slope surrogate_blend in between.
inline double surrogate_profile(double d) {
  constexpr double a = kSurrogateExactDepth;
  constexpr double span = kSurrogateCapDepth - kSurrogateExactDepth;
  if (d <= a) return d;
  if (d >= kSurrogateCapDepth) return a + 0.5 * span;
  const double x = (d - a) / span;
  const double integral = x * x * x * x * (2.5 - 3.0 * x + x * x);
  return a + span * (x - integral);
}

/// Sheet whose collar holds node p (the nearer one).
inline Sheet nearer_sheet(const GridManifold& grid, std::size_t p) {
  return 2 * grid.normal_index(p) <= grid.points(grid.normal_axis()) - 1 ? Sheet::Lower : Sheet::Upper;
}

/// Smooth w >= 0 with w = 0 and w_nu = -1 on both sheets: the coordinate
/// depth rescaled by the normal length of g at the foot point, blended back to
/// the unscaled profile before the cap.
inline ScalarField distance_surrogate(const MetricField& g) {
  const auto& grid = g.grid();
  const int n = grid.dim();
  ScalarField w(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Sheet s = nearer_sheet(grid, p);
    const double d = depth_from(grid, p, s);
    const std::size_t foot = grid.sheet_node(s, grid.sheet_position(p));
    const double scale = 1.0 / std::sqrt(g.inverse(foot)(n - 1, n - 1));
    w[static_cast<Eigen::Index>(p)] = surrogate_profile(d) * (1.0 + surrogate_blend(d) * (scale - 1.0));
  }
  return w;
}

/// Boundary values carried unchanged along the normal through the exact zone
/// of the surrogate and blended to zero by its cap depth.
inline ScalarField gauge_extension(const BoundaryPair& fields, const GridManifold& grid) {
  ScalarField out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Sheet s = nearer_sheet(grid, p);
    const double value = fields[static_cast<int>(s)].values[static_cast<Eigen::Index>(grid.sheet_position(p))];
    out[static_cast<Eigen::Index>(p)] = value * surrogate_blend(depth_from(grid, p, s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gauges

struct MeanCurvatureGauge {
  MetricField g1;
  ScalarField v0;
};

/// v0 = h_bar w with h_bar the collar extension of h_g; e^{2 v0} g has
/// vanishing boundary mean curvature.
inline MeanCurvatureGauge zero_mean_curvature_gauge(const MetricField& g) {
  const auto h = boundary_mean_curvature(g);
  const ScalarField hbar = gauge_extension(h, g.grid());
  ScalarField v0 = hbar.cwiseProduct(distance_surrogate(g));
  return {g.conformal(v0), std::move(v0)};
}

/// Largest relative eigenvalue of a tensor field with respect to g over the
/// nodes where `mask` holds.
inline double max_relative_eigenvalue(const TensorField& a, const MetricField& g, const std::vector<bool>& mask) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!mask[p]) continue;
    worst = std::max(worst, pencil_eigen(a[p], g.cholesky(p)).values.maxCoeff());
  }
  return worst;
}

/// Nodes within g-distance `depth` of the boundary according to w.
inline std::vector<bool> collar_mask(const ScalarField& w, double depth) {
  std::vector<bool> m(static_cast<std::size_t>(w.size()));
  for (Eigen::Index p = 0; p < w.size(); ++p) m[static_cast<std::size_t>(p)] = w[p] <= depth + 1e-12;
  return m;
}

inline constexpr double kPinchCollarDepth = 0.125;

/// g2 = e^{2 A w1^2} g1 with w1 the distance surrogate of g1.
inline MetricField ricci_pinch_gauge(const MetricField& g1, double a) {
  if (!(a >= 0.0)) throw ParameterError("ricci_pinch_gauge: A must be non-negative");
  const ScalarField w1 = distance_surrogate(g1);
  return g1.conformal(a * w1.cwiseProduct(w1));
}

/// Largest eigenvalue of Ric_{g2} relative to g1 on the collar.
inline double pinch_diagnostic(const MetricField& g2, const MetricField& g1) {
  const auto ric = ricci_scalar(g2).ricci;
  return max_relative_eigenvalue(ric, g1, collar_mask(distance_surrogate(g1), kPinchCollarDepth));
}

struct PinchChoice {
  double ricci_bound = 0.0;  ///< C1: sup of Ric_{g1} eigenvalues on the collar, floored at 0
  double a = 0.0;            ///< constant actually used
  double diagnostic = 0.0;   ///< sup of Ric_{g2} eigenvalues relative to g1 on the collar
  int raises = 0;            ///< increments applied after the initial choice
  MetricField g2;
};

/// A = C1/2 + 1/2 + margin, raised in steps of 1/2 until the collar Ricci
/// eigenvalues of g2 are at most -1 (discretisation can leave the first
/// choice marginally short).
inline PinchChoice choose_pinch_constant(const MetricField& g1, double margin = 0.25, int max_raises = 40) {
  PinchChoice c;
  const auto ric1 = ricci_scalar(g1).ricci;
  const auto collar = collar_mask(distance_surrogate(g1), kPinchCollarDepth);
  c.ricci_bound = std::max(0.0, max_relative_eigenvalue(ric1, g1, collar));
  c.a = 0.5 * c.ricci_bound + 0.5 + margin;
  for (;;) {
    c.g2 = ricci_pinch_gauge(g1, c.a);
    c.diagnostic = pinch_diagnostic(c.g2, g1);
    if (c.diagnostic <= -1.0 || c.raises >= max_raises) break;
    c.a += 0.5;
    ++c.raises;
  }
  return c;
}

/// f(-lambda(A^t)) of e^{2v} g at every node from the pushforward formula;
/// NaN where the argument leaves the cone.
inline ScalarField conformal_cone_values(const ScalarField& v, const Background& bg, const ConePair& cone,
                                         ScalarField* margins = nullptr) {
  const auto push = pushforward_schouten(v, bg);
  ScalarField out(static_cast<Eigen::Index>(bg.g.size()));
  if (margins) margins->resize(out.size());
  for (std::size_t p = 0; p < bg.g.size(); ++p) {
    const SmallVec l = -push.lambda[p];
    const auto m = cone_contains(l, cone);
    const auto i = static_cast<Eigen::Index>(p);
    if (margins) (*margins)[i] = m.margin;
    out[i] = normalized_margin(l, cone.k) > kConeBoundaryTolerance ? f_eval(l, cone)
                                                                 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct EpsilonGauge {
  double epsilon0 = 0.0;
  bool admissible = false;  ///< false when no epsilon0 > 0 satisfies the constraints
  double reference_min = 0.0;  ///< min f(-lambda(A^t_g))
  double gauged_min = 0.0;     ///< min f(-lambda(A^t)) of the gauged metric
  ScalarField w;               ///< distance surrogate of g
};

/// Largest epsilon0 <= 0.5 (bisection) for which e^{2 epsilon0 w} g keeps
/// -lambda(A^t) in the cone at every node with f at least half the minimum
/// of f(-lambda(A^t_g)).
inline EpsilonGauge epsilon0_gauge(const Background& bg, const ConePair& cone, double upper = 0.5,
                                   int iterations = 50) {
  EpsilonGauge out;
  out.w = distance_surrogate(bg.g);
  const ScalarField base = conformal_cone_values(ScalarField::Zero(out.w.size()), bg, cone);
  if (!base.allFinite()) return out;
  out.reference_min = base.minCoeff();
  auto ok = [&](double eps, double* fmin) {
    const ScalarField f = conformal_cone_values(eps * out.w, bg, cone);
    if (!f.allFinite()) return false;
    *fmin = f.minCoeff();
    return *fmin >= 0.5 * out.reference_min;
  };
  double fmin = 0.0;
  if (ok(upper, &fmin)) {
    out.epsilon0 = upper;
    out.admissible = true;
    out.gauged_min = fmin;
    return out;
  }
  double lo = 0.0, hi = upper;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (ok(mid, &fmin)) {
      lo = mid;
      out.gauged_min = fmin;
    } else {
      hi = mid;
    }
  }
  out.epsilon0 = lo;
  out.admissible = lo > 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Residual of the governing equation

struct ConformalResidual {
  ScalarField interior;     ///< f(lambda_g(W - A^t)) - phi e^{2v}; NaN outside the cone
  BoundaryPair boundary;    ///< h_g + v_nu - psi e^v
  ScalarField cone_margin;  ///< cone_contains margin of lambda_g(W - A^t)
};

inline ConformalResidual residual(const ScalarField& v, const ProblemSpec& spec, const Background& bg) {
  const TensorField w = deformation_tensor(v, bg);
  const std::size_t N = bg.g.size();
  ConformalResidual r;
  r.interior.resize(static_cast<Eigen::Index>(N));
  r.cone_margin.resize(static_cast<Eigen::Index>(N));
  for (std::size_t p = 0; p < N; ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    const SmallVec l = pencil_eigen(w[p] - bg.curv.schouten_t[p], bg.g.cholesky(p)).values;
    r.cone_margin[i] = cone_contains(l, spec.cone).margin;
    r.interior[i] = normalized_margin(l, spec.cone.k) > kConeBoundaryTolerance
                        ? f_eval(l, spec.cone) - spec.phi[i] * std::exp(2.0 * v[i])
                        : std::numeric_limits<double>::quiet_NaN();
  }
  r.boundary = normal_derivative(v, bg.g, bg.fd);
  for (Sheet s : kSheets) {
    auto& b = r.boundary[static_cast<int>(s)];
    for (std::size_t k = 0; k < spec.grid.sheet_size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const double vb = v[static_cast<Eigen::Index>(spec.grid.sheet_node(s, k))];
      b.values[i] += bg.h[static_cast<int>(s)].values[i] - spec.psi[static_cast<int>(s)].values[i] * std::exp(vb);
    }
  }
  return r;
}

inline ConformalResidual residual(const ScalarField& v, const ProblemSpec& spec) {
  return residual(v, spec, Background(spec.g, spec.t));
}

}  // namespace yamabe
