#pragma once

// Tubular-neighbourhood normal coordinates near a boundary sheet: geodesic
// normal coordinates on the sheet followed by inward normal geodesics, with
// the metric interpolated multilinearly between grid nodes.
//
// Geodesics are integrated cell by cell: every RK4 step uses the polynomial
// of a single cell, and a step that would leave the cell is shortened to end
// on the face, so the right-hand side is smooth within each step.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "yamabe/geometry.hpp"

namespace yamabe {

// ---------------------------------------------------------------------------
// Metric interpolation

/// Multilinear interpolant of nodal metrics on a box grid with periodic and
/// bounded axes. Node i of axis a sits at i * spacing[a].
class MultilinearMetric {
 public:
  struct Sample {
    SmallMat g;
    std::array<SmallMat, kMaxDim> dg;  ///< partial derivative along each axis
  };
  using Cell = std::array<int, kMaxDim>;

  MultilinearMetric(std::vector<int> points, std::vector<double> spacing, std::vector<bool> periodic,
                    std::vector<SmallMat> nodes)
      : points_(std::move(points)), spacing_(std::move(spacing)), periodic_(std::move(periodic)),
        nodes_(std::move(nodes)) {
    dim_ = static_cast<int>(points_.size());
    strides_.assign(points_.size(), 1);
    for (int a = dim_ - 2; a >= 0; --a) strides_[static_cast<std::size_t>(a)] = strides_[static_cast<std::size_t>(a) + 1] * static_cast<std::size_t>(points_[static_cast<std::size_t>(a) + 1]);
  }

  /// Full metric of the slab.
  static MultilinearMetric ambient(const MetricField& g) {
    const auto& grid = g.grid();
    std::vector<bool> periodic(static_cast<std::size_t>(grid.dim()), true);
    periodic.back() = false;
    return MultilinearMetric(grid.shape(), grid.spacing(), periodic, g.tensors());
  }

  /// Induced metric of a boundary sheet in its tangential coordinates.
  static MultilinearMetric sheet(const MetricField& g, Sheet s) {
    const auto& grid = g.grid();
    const int m = grid.dim() - 1;
    std::vector<SmallMat> nodes(grid.sheet_size());
    for (std::size_t k = 0; k < grid.sheet_size(); ++k) nodes[k] = g[grid.sheet_node(s, k)].topLeftCorner(m, m);
    std::vector<int> pts(grid.shape().begin(), grid.shape().end() - 1);
    std::vector<double> sp(grid.spacing().begin(), grid.spacing().end() - 1);
    return MultilinearMetric(std::move(pts), std::move(sp), std::vector<bool>(static_cast<std::size_t>(m), true),
                             std::move(nodes));
  }

  int dim() const { return dim_; }
  double spacing(int a) const { return spacing_[static_cast<std::size_t>(a)]; }
  bool periodic(int a) const { return periodic_[static_cast<std::size_t>(a)]; }
  /// Upper end of a bounded axis.
  double extent(int a) const { return spacing(a) * (points_[static_cast<std::size_t>(a)] - 1); }
  double min_spacing() const { return *std::min_element(spacing_.begin(), spacing_.end()); }

  /// Cell containing x; on a face the cell ahead along `dir` is chosen.
  Cell locate(const SmallVec& x, const SmallVec& dir) const {
    Cell c{};
    for (int a = 0; a < dim_; ++a) {
      const double s = x[a] / spacing(a);
      const double r = std::round(s);
      int i = static_cast<int>(std::floor(s));
      if (std::abs(s - r) < kFaceTolerance) i = static_cast<int>(r) - (dir[a] < 0.0 ? 1 : 0);
      if (!periodic(a)) i = std::clamp(i, 0, points_[static_cast<std::size_t>(a)] - 2);
      c[static_cast<std::size_t>(a)] = i;
    }
    return c;
  }

  /// Local coordinate of x along axis a inside cell c (0 and 1 on the faces).
  double local(const SmallVec& x, const Cell& c, int a) const {
    return x[a] / spacing(a) - c[static_cast<std::size_t>(a)];
  }

  bool in_cell(const SmallVec& x, const Cell& c) const {
    for (int a = 0; a < dim_; ++a) {
      const double xi = local(x, c, a);
      if (xi < -kFaceTolerance || xi > 1.0 + kFaceTolerance) return false;
    }
    return true;
  }

  /// The polynomial of cell c evaluated at x (x may lie outside c).
  Sample eval(const SmallVec& x, const Cell& c) const {
    Sample out;
    out.g = SmallMat::Zero(dim_, dim_);
    for (int a = 0; a < dim_; ++a) out.dg[static_cast<std::size_t>(a)] = SmallMat::Zero(dim_, dim_);
    std::array<double, kMaxDim> xi{};
    for (int a = 0; a < dim_; ++a) xi[static_cast<std::size_t>(a)] = local(x, c, a);
    for (int corner = 0; corner < (1 << dim_); ++corner) {
      std::size_t node = 0;
      std::array<double, kMaxDim> w{}, dw{};
      for (int a = 0; a < dim_; ++a) {
        const bool up = (corner >> a) & 1;
        const auto sa = static_cast<std::size_t>(a);
        int idx = c[sa] + (up ? 1 : 0);
        if (periodic(a)) idx = ((idx % points_[sa]) + points_[sa]) % points_[sa];
        node += static_cast<std::size_t>(idx) * strides_[sa];
        w[sa] = up ? xi[sa] : 1.0 - xi[sa];
        dw[sa] = (up ? 1.0 : -1.0) / spacing(a);
      }
      double weight = 1.0;
      for (int a = 0; a < dim_; ++a) weight *= w[static_cast<std::size_t>(a)];
      out.g += weight * nodes_[node];
      for (int a = 0; a < dim_; ++a) {
        double d = dw[static_cast<std::size_t>(a)];
        for (int b = 0; b < dim_; ++b) {
          if (b != a) d *= w[static_cast<std::size_t>(b)];
        }
        out.dg[static_cast<std::size_t>(a)] += d * nodes_[node];
      }
    }
    return out;
  }

  Sample eval(const SmallVec& x) const { return eval(x, locate(x, SmallVec::Zero(dim_))); }
  SmallMat metric(const SmallVec& x) const { return eval(x).g; }

  static constexpr double kFaceTolerance = 1e-11;

 private:
  int dim_ = 0;
  std::vector<int> points_;
  std::vector<double> spacing_;
  std::vector<bool> periodic_;
  std::vector<SmallMat> nodes_;
  std::vector<std::size_t> strides_;
};

// ---------------------------------------------------------------------------
// Geodesics

struct GeodesicPath {
  std::vector<double> parameters;
  std::vector<SmallVec> points;
  std::vector<SmallVec> velocities;
};

inline double speed(const MultilinearMetric& m, const SmallVec& x, const SmallVec& v) {
  return std::sqrt(v.dot(m.metric(x) * v));
}

namespace detail {

/// Acceleration -Gamma(v, v) of the cell polynomial.
inline SmallVec geodesic_acceleration(const MultilinearMetric& m, const SmallVec& x, const SmallVec& v,
                                      const MultilinearMetric::Cell& c) {
  const int n = m.dim();
  const auto s = m.eval(x, c);
  SmallMat dv = SmallMat::Zero(n, n);  // sum_i v^i d_i g
  SmallVec dvv(n);                     // d_m g(v, v)
  for (int a = 0; a < n; ++a) {
    dv += v[a] * s.dg[static_cast<std::size_t>(a)];
    dvv[a] = v.dot(s.dg[static_cast<std::size_t>(a)] * v);
  }
  return -s.g.llt().solve(dv * v - 0.5 * dvv);
}

inline void rk4(const MultilinearMetric& m, const MultilinearMetric::Cell& c, SmallVec& x, SmallVec& v, double dt) {
  const SmallVec k1x = v, k1v = geodesic_acceleration(m, x, v, c);
  const SmallVec x2 = x + 0.5 * dt * k1x, v2 = v + 0.5 * dt * k1v;
  const SmallVec k2v = geodesic_acceleration(m, x2, v2, c);
  const SmallVec x3 = x + 0.5 * dt * v2, v3 = v + 0.5 * dt * k2v;
  const SmallVec k3v = geodesic_acceleration(m, x3, v3, c);
  const SmallVec x4 = x + dt * v3, v4 = v + dt * k3v;
  const SmallVec k4v = geodesic_acceleration(m, x4, v4, c);
  x += dt / 6.0 * (k1x + 2.0 * v2 + 2.0 * v3 + v4);
  v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
}

/// True when x sits on a bounded end of the domain and v points out of it.
inline bool leaving_domain(const MultilinearMetric& m, const SmallVec& x, const SmallVec& v) {
  for (int a = 0; a < m.dim(); ++a) {
    if (m.periodic(a)) continue;
    const double tol = MultilinearMetric::kFaceTolerance * m.spacing(a);
    if ((x[a] <= tol && v[a] < 0.0) || (x[a] >= m.extent(a) - tol && v[a] > 0.0)) return true;
  }
  return false;
}

/// Advance by dt, splitting at cell faces.
inline void advance(const MultilinearMetric& m, SmallVec& x, SmallVec& v, double dt, double t0) {
  double left = dt;
  int guard = 0;
  while (left > 0.0) {
    if (++guard > 100000) throw Error("shoot_geodesic: stalled at a cell face");
    if (leaving_domain(m, x, v)) throw OutOfDomain("shoot_geodesic: path leaves the domain", t0 + dt - left);
    const auto c = m.locate(x, v);
    SmallVec xt = x, vt = v;
    rk4(m, c, xt, vt, left);
    if (m.in_cell(xt, c)) {
      x = xt;
      v = vt;
      return;
    }
    // largest sub-step that stays in the cell: the path meets a face there
    double lo = 0.0, hi = left;
    for (int it = 0; it < 60 && hi - lo > 1e-15 * dt; ++it) {
      const double mid = 0.5 * (lo + hi);
      xt = x;
      vt = v;
      rk4(m, c, xt, vt, mid);
      (m.in_cell(xt, c) ? lo : hi) = mid;
    }
    if (lo <= 0.0) lo = hi;  // already on the face, step across
    rk4(m, c, x, v, lo);
    left -= lo;
  }
}

}  // namespace detail

/// RK4 integration of the geodesic equation from `start` with initial
/// velocity `direction` (g-unit) over [0, length] in `steps` equal steps.
inline GeodesicPath shoot_geodesic(const MultilinearMetric& m, const SmallVec& start, const SmallVec& direction,
                                   double length, int steps) {
  if (steps < 1) throw ParameterError("shoot_geodesic: steps must be positive");
  if (!(length >= 0.0)) throw ParameterError("shoot_geodesic: length must be non-negative");
  if (std::abs(speed(m, start, direction) - 1.0) > 1e-8) throw ParameterError("shoot_geodesic: direction is not g-unit");
  GeodesicPath path;
  SmallVec x = start, v = direction;
  const double dt = length / steps;
  path.parameters.push_back(0.0);
  path.points.push_back(x);
  path.velocities.push_back(v);
  for (int i = 0; i < steps; ++i) {
    detail::advance(m, x, v, dt, i * dt);
    path.parameters.push_back((i + 1) * dt);
    path.points.push_back(x);
    path.velocities.push_back(v);
  }
  return path;
}

inline GeodesicPath shoot_geodesic(const MetricField& g, const SmallVec& start, const SmallVec& direction,
                                   double length, int steps) {
  return shoot_geodesic(MultilinearMetric::ambient(g), start, direction, length, steps);
}

// ---------------------------------------------------------------------------
// Charts

struct ChartSample {
  SmallVec chart;     ///< (y_1, ..., y_n), y_n >= 0
  SmallVec position;  ///< ambient slab coordinates (tangential axes unwrapped)
  SmallMat metric;    ///< g(d/dy_i, d/dy_j)
};

inline constexpr double kMaxChartRadius = 0.125;

/// Normal coordinates about a boundary point y0.
class FermiChart {
 public:
  FermiChart(const MetricField& g, Sheet sheet, const SmallVec& base, double radius)
      : ambient_(std::make_shared<MultilinearMetric>(MultilinearMetric::ambient(g))),
        boundary_(std::make_shared<MultilinearMetric>(MultilinearMetric::sheet(g, sheet))),
        sheet_(sheet), base_(base), radius_(radius), n_(g.grid().dim()), thickness_(1.0) {
    const int m = n_ - 1;
    if (base_.size() != m) throw DomainError("FermiChart: base point needs n - 1 tangential coordinates");
    // orthonormal frame of the sheet metric at the base by Gram-Schmidt
    const SmallMat gb = boundary_->metric(base_);
    frame_ = SmallMat::Identity(m, m);
    for (int i = 0; i < m; ++i) {
      SmallVec e = frame_.col(i);
      for (int j = 0; j < i; ++j) e -= frame_.col(j).dot(gb * e) * frame_.col(j);
      frame_.col(i) = e / std::sqrt(e.dot(gb * e));
    }
  }

  Sheet sheet() const { return sheet_; }
  const SmallVec& base() const { return base_; }
  double radius() const { return radius_; }
  int dim() const { return n_; }
  const SmallMat& frame() const { return frame_; }
  const MultilinearMetric& ambient() const { return *ambient_; }
  const MultilinearMetric& boundary() const { return *boundary_; }
  double step_length() const { return ambient_->min_spacing() / 8.0; }

  /// Ambient point of the sheet over tangential coordinates q.
  SmallVec lift(const SmallVec& q) const {
    SmallVec x(n_);
    x.head(n_ - 1) = q;
    x[n_ - 1] = sheet_ == Sheet::Lower ? 0.0 : thickness_;
    return x;
  }

  /// Foot point on the sheet: exp of sum_i y_i e_i within the sheet metric.
  SmallVec foot(const SmallVec& tangential) const {
    const SmallVec u = frame_ * tangential;
    const double len = tangential.norm();
    if (len == 0.0) return base_;
    const int steps = std::max(4, static_cast<int>(std::ceil(len / step_length())));
    return shoot_geodesic(*boundary_, base_, u / len, len, steps).points.back();
  }

  /// Inward unit normal -nu at an ambient point of the sheet.
  SmallVec inward_normal(const SmallVec& x) const {
    const SmallMat ginv = ambient_->metric(x).inverse();
    const SmallVec nu = outward_sign(sheet_) * ginv.col(n_ - 1) / std::sqrt(ginv(n_ - 1, n_ - 1));
    return -nu;
  }

  /// Ambient position of chart point y.
  SmallVec to_ambient(const SmallVec& y) const {
    if (y[n_ - 1] < 0.0) throw ChartError("FermiChart: negative normal coordinate");
    const SmallVec x0 = lift(foot(y.head(n_ - 1)));
    const double depth = y[n_ - 1];
    if (depth == 0.0) return x0;
    const int steps = std::max(4, static_cast<int>(std::ceil(depth / step_length())));
    return shoot_geodesic(*ambient_, x0, inward_normal(x0), depth, steps).points.back();
  }

  /// Columns d/dy_j at y by second-order differences of step `delta`,
  /// one-sided in y_n when y_n < delta and on every axis when `forward`
  /// (the chart is only piecewise smooth across cell faces).
  SmallMat jacobian(const SmallVec& y, double delta, bool forward = false) const {
    SmallMat j(n_, n_);
    for (int a = 0; a < n_; ++a) {
      SmallVec e = SmallVec::Zero(n_);
      e[a] = delta;
      if (forward || (a == n_ - 1 && y[a] < delta)) {
        j.col(a) = (-3.0 * to_ambient(y) + 4.0 * to_ambient(y + e) - to_ambient(y + 2.0 * e)) / (2.0 * delta);
      } else {
        j.col(a) = (to_ambient(y + e) - to_ambient(y - e)) / (2.0 * delta);
      }
    }
    return j;
  }

  /// Chart coordinates of an ambient point by damped Gauss-Newton on
  /// to_ambient(y) = x with y_n >= 0 enforced by projection.
  SmallVec locate(const SmallVec& x, const SmallVec& guess, double tol = 1e-10, int max_iter = 100) const {
    SmallVec y = guess;
    y[n_ - 1] = std::max(0.0, y[n_ - 1]);
    SmallVec r = to_ambient(y) - x;
    for (int it = 0; it < max_iter; ++it) {
      if (r.norm() <= tol) return y;
      const SmallMat j = jacobian(y, 1e-6);
      const SmallVec step = -j.partialPivLu().solve(r);
      double alpha = 1.0;
      for (int h = 0; h < 30; ++h, alpha *= 0.5) {
        SmallVec trial = y + alpha * step;
        trial[n_ - 1] = std::max(0.0, trial[n_ - 1]);
        const SmallVec rt = to_ambient(trial) - x;
        if (rt.norm() < r.norm()) {
          y = trial;
          r = rt;
          break;
        }
      }
    }
    if (r.norm() <= tol) return y;
    throw ChartError("FermiChart: foot-point search did not converge (residual " + std::to_string(r.norm()) + ")");
  }

  std::vector<ChartSample> samples;

 private:
  std::shared_ptr<MultilinearMetric> ambient_;
  std::shared_ptr<MultilinearMetric> boundary_;
  Sheet sheet_;
  SmallVec base_;
  double radius_;
  int n_;
  double thickness_;
  SmallMat frame_;
};

/// Chart about the base point (tangential coordinates) of a sheet with
/// radius min(kMaxChartRadius, radius). Samples fill the half ball on a
/// lattice of the grid's normal spacing; their chart metric uses
/// differences of the same step.
inline FermiChart build_chart(const MetricField& g, Sheet sheet, const SmallVec& base,
                              double radius = kMaxChartRadius) {
  if (!(radius > 0.0)) throw ParameterError("build_chart: radius must be positive");
  FermiChart chart(g, sheet, base, std::min(kMaxChartRadius, radius));
  const int n = g.grid().dim();
  const double delta = g.grid().h(n - 1);
  const int reach = static_cast<int>(std::floor(chart.radius() / delta + 1e-12));
  std::array<int, kMaxDim> idx{};
  for (int a = 0; a < n - 1; ++a) idx[static_cast<std::size_t>(a)] = -reach;
  idx[static_cast<std::size_t>(n - 1)] = 0;
  while (true) {
    SmallVec y(n);
    for (int a = 0; a < n; ++a) y[a] = idx[static_cast<std::size_t>(a)] * delta;
    if (y.norm() <= chart.radius() + 1e-12) {
      const SmallVec x = chart.to_ambient(y);
      const SmallMat j = chart.jacobian(y, delta);
      chart.samples.push_back({y, x, j.transpose() * chart.ambient().metric(x) * j});
    }
    int a = 0;
    for (; a < n; ++a) {
      auto& i = idx[static_cast<std::size_t>(a)];
      if (++i <= reach) break;
      i = a == n - 1 ? 0 : -reach;
    }
    if (a == n) break;
  }
  return chart;
}

inline FermiChart build_chart(const MetricField& g, Sheet sheet, std::size_t sheet_index,
                              double radius = kMaxChartRadius) {
  const auto& grid = g.grid();
  const SmallVec x = grid.position(grid.sheet_node(sheet, sheet_index));
  return build_chart(g, sheet, SmallVec(x.head(grid.dim() - 1)), radius);
}

struct ChartReport {
  double radius = 0.0;
  std::size_t samples = 0;
  double orthogonality_defect = 0.0;  ///< max_j |g(d/dy_j, d/dy_n)|, j < n
  double normal_deviation = 0.0;      ///< max |d/dy_n - grad y_n|_g, and |d/dy_n + nu| on the sheet
  double base_metric_defect = 0.0;    ///< max |g(d/dy_i, d/dy_j) - delta_ij| at the base (step 1e-5)
  double eikonal_defect = 0.0;        ///< max ||grad y_n|_g - 1|
  /// max |y_n - g-length of the coordinate normal segment to the sheet|;
  /// that segment is the normal geodesic when the metric depends on y_n only
  double distance_gap = 0.0;
  std::size_t containment_checked = 0;
  std::size_t containment_violations = 0;
};

inline void to_json(nlohmann::json& j, const ChartReport& r) {
  j = nlohmann::json{{"radius", r.radius},
                     {"samples", r.samples},
                     {"orthogonality_defect", r.orthogonality_defect},
                     {"normal_deviation", r.normal_deviation},
                     {"base_metric_defect", r.base_metric_defect},
                     {"eikonal_defect", r.eikonal_defect},
                     {"distance_gap", r.distance_gap},
                     {"containment_checked", r.containment_checked},
                     {"containment_violations", r.containment_violations}};
}

/// g-length of the coordinate segment from a to b (Gauss-Legendre per piece).
inline double segment_length(const MultilinearMetric& m, const SmallVec& a, const SmallVec& b, int pieces = 32) {
  static constexpr std::array<double, 3> nodes{-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr std::array<double, 3> weights{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const SmallVec d = b - a;
  double len = 0.0;
  for (int p = 0; p < pieces; ++p) {
    for (int q = 0; q < 3; ++q) {
      const double s = (p + 0.5 * (1.0 + nodes[static_cast<std::size_t>(q)])) / pieces;
      len += weights[static_cast<std::size_t>(q)] * 0.5 / pieces * std::sqrt(d.dot(m.metric(a + s * d) * d));
    }
  }
  return len;
}

/// Health of a chart. Containment: `containment_samples` random chart points
/// with |y| < radius/16, y_n >= 0 must lie within g-distance radius/8 of the
/// base; the g-length of the straight coordinate segment bounds the distance.
inline ChartReport validate_chart(const FermiChart& chart, std::uint64_t seed = 1,
                                  std::size_t containment_samples = 500) {
  const int n = chart.dim();
  const auto& m = chart.ambient();
  ChartReport rep;
  rep.radius = chart.radius();
  rep.samples = chart.samples.size();
  for (const auto& s : chart.samples) {
    const SmallMat& gc = s.metric;
    for (int j = 0; j < n - 1; ++j) rep.orthogonality_defect = std::max(rep.orthogonality_defect, std::abs(gc(j, n - 1)));
    // in chart components d/dy_n = e_n and grad y_n = G^{-1} e_n
    const SmallMat ginv = gc.llt().solve(SmallMat::Identity(n, n));
    const double grad_norm = std::sqrt(ginv(n - 1, n - 1));
    rep.eikonal_defect = std::max(rep.eikonal_defect, std::abs(grad_norm - 1.0));
    const SmallVec diff = SmallVec::Unit(n, n - 1) - ginv.col(n - 1) / grad_norm;
    rep.normal_deviation = std::max(rep.normal_deviation, std::sqrt(std::max(0.0, diff.dot(gc * diff))));
    SmallVec bottom = s.position;
    bottom[n - 1] = chart.sheet() == Sheet::Lower ? 0.0 : m.extent(n - 1);
    rep.distance_gap = std::max(rep.distance_gap, std::abs(s.chart[n - 1] - segment_length(m, bottom, s.position)));
  }
  {
    const SmallVec origin = SmallVec::Zero(n);
    const SmallMat jac = chart.jacobian(origin, 1e-5, true);
    const SmallMat gb = jac.transpose() * m.metric(chart.lift(chart.base())) * jac;
    rep.base_metric_defect = (gb - SmallMat::Identity(n, n)).cwiseAbs().maxCoeff();
  }
  // d/dy_n = -nu at the foot points
  for (const auto& s : chart.samples) {
    if (s.chart[n - 1] != 0.0) continue;
    const SmallMat jac = chart.jacobian(s.chart, 1e-5, true);
    const SmallVec dev = jac.col(n - 1) - chart.inward_normal(s.position);
    rep.normal_deviation = std::max(rep.normal_deviation, std::sqrt(dev.dot(m.metric(s.position) * dev)));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  const double inner = chart.radius() / 16.0;
  const SmallVec base = chart.lift(chart.base());
  for (std::size_t i = 0; i < containment_samples; ++i) {
    SmallVec y(n);
    for (int a = 0; a < n; ++a) y[a] = gauss(rng);
    y[n - 1] = std::abs(y[n - 1]);
    y *= inner * std::pow(unif(rng), 1.0 / n) / y.norm();
    const SmallVec x = chart.to_ambient(y);
    ++rep.containment_checked;
    if (!(segment_length(m, base, x) < chart.radius() / 8.0)) ++rep.containment_violations;
  }
  return rep;
}

}  // namespace yamabe
