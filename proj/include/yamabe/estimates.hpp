#pragma once

// Computable counterparts of the a priori theory: C0 windows from the
// constructive maximum-principle arguments, uniqueness probes, derivative
// monitors and refinement studies.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "yamabe/pde.hpp"

namespace yamabe {

inline constexpr double kWindowSlack = 0.05;

struct C0Window {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double epsilon0 = 0.0;
  bool boundary_branch = false;  ///< the psi branch entered the lower bound
};

namespace detail {

/// Extremes over interior nodes, where the equation holds; non-finite values
/// (outside the cone) are skipped.
inline double interior_max(const GridManifold& grid, const ScalarField& f) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double x = f[static_cast<Eigen::Index>(p)];
    if (!grid.on_boundary(p) && std::isfinite(x)) m = std::max(m, x);
  }
  return m;
}

inline double interior_min(const GridManifold& grid, const ScalarField& f) {
  return -interior_max(grid, -f);
}

inline double sup_abs_psi(const BoundaryPair& psi) {
  return std::max(psi[0].values.cwiseAbs().maxCoeff(), psi[1].values.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Upper: g0 = e^{2 v0} g with zero boundary mean curvature; at the maximum
/// of v - v0, e^{2(v - v0)} phi <= f(-lambda_{g0}(A^t_{g0})). Extremes of f
/// and phi are taken over interior nodes.
/// Lower: e^{2 eps0 w} g keeps f at least half its minimum; at the minimum
/// either the interior inequality or the boundary condition binds. The
/// boundary branch is dropped when psi vanishes identically.
inline C0Window c0_bound_window(const ProblemSpec& spec) {
  spec.validate();
  const double inf_phi = detail::interior_min(spec.grid, spec.phi);
  const double sup_phi = detail::interior_max(spec.grid, spec.phi);
  C0Window win;
  const auto gauge = zero_mean_curvature_gauge(spec.g);
  const Background bg(spec.g, spec.t);
  const double sup_f = detail::interior_max(spec.grid, conformal_cone_values(gauge.v0, bg, spec.cone));
  if (std::isfinite(sup_f)) win.upper = gauge.v0.maxCoeff() + 0.5 * std::log(sup_f / inf_phi);
  const auto eps = epsilon0_gauge(bg, spec.cone);
  win.epsilon0 = eps.epsilon0;
  if (eps.admissible) {
    double lower = 0.5 * std::log(0.5 * eps.reference_min / sup_phi);
    const double psi_sup = detail::sup_abs_psi(spec.psi);
    if (psi_sup > 0.0) {
      const double boundary = std::log(eps.epsilon0 / psi_sup) - eps.epsilon0;
      if (boundary < lower) {
        lower = boundary;
        win.boundary_branch = true;
      }
    }
    win.lower = (eps.epsilon0 * eps.w).minCoeff() + lower;
  }
  return win;
}

struct BoundsReport {
  double c0_upper = 0.0;
  double c0_lower = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
  double sup_grad = 0.0;          ///< sup |grad v|_g
  double sup_hess = 0.0;          ///< sup |nabla^2 v|_g
  double sup_vnn_boundary = 0.0;  ///< sup |nabla^2 v(nu, nu)| on the sheets
  double trace_min = 0.0;         ///< min over interior nodes of tr_g(W - A^t)
  bool finite = true;
  bool within_window = false;
};

inline void to_json(nlohmann::json& j, const BoundsReport& r) {
  j = nlohmann::json{{"c0_upper", r.c0_upper},
                     {"c0_lower", r.c0_lower},
                     {"v_min", r.v_min},
                     {"v_max", r.v_max},
                     {"sup_grad", r.sup_grad},
                     {"sup_hess", r.sup_hess},
                     {"sup_vnn_boundary", r.sup_vnn_boundary},
                     {"trace_min", r.trace_min},
                     {"finite", r.finite},
                     {"within_window", r.within_window}};
}

inline BoundsReport estimate_monitor(const ScalarField& v, const ProblemSpec& spec, const C0Window& win,
                                     double slack = kWindowSlack) {
  const Background bg(spec.g, spec.t);
  const auto& grid = spec.grid;
  const int n = grid.dim();
  const ScalarDerivatives d(v, bg.fd);
  const TensorField w = deformation_tensor(v, bg);
  BoundsReport r;
  r.c0_upper = win.upper;
  r.c0_lower = win.lower;
  r.v_min = v.minCoeff();
  r.v_max = v.maxCoeff();
  r.trace_min = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const SmallMat& ginv = bg.g.inverse(p);
    const SmallVec grad = d.gradient(p, n);
    const SmallMat hess = covariant_hessian(d.hessian(p, n), grad, bg.curv.christoffel[p]);
    r.sup_grad = std::max(r.sup_grad, std::sqrt(grad.dot(ginv * grad)));
    const SmallMat mixed = ginv * hess;
    r.sup_hess = std::max(r.sup_hess, std::sqrt(std::max(0.0, (mixed * mixed).trace())));
    if (grid.on_boundary(p)) {
      const SmallVec nu = unit_normal(bg.g, p, grid.sheet_of(p));
      r.sup_vnn_boundary = std::max(r.sup_vnn_boundary, std::abs(nu.dot(hess * nu)));
    } else {
      r.trace_min = std::min(r.trace_min, ginv.cwiseProduct(w[p] - bg.curv.schouten_t[p]).sum());
    }
  }
  r.finite = v.allFinite() && std::isfinite(r.sup_grad) && std::isfinite(r.sup_hess) &&
             std::isfinite(r.sup_vnn_boundary) && std::isfinite(r.trace_min);
  r.within_window = r.finite && win.lower - slack <= r.v_min && r.v_max <= win.upper + slack;
  return r;
}

inline BoundsReport estimate_monitor(const ScalarField& v, const ProblemSpec& spec) {
  return estimate_monitor(v, spec, c0_bound_window(spec));
}

/// Largest pairwise sup-norm gap between continuation runs from each seed.
inline double uniqueness_probe(const ProblemSpec& spec, const std::vector<ScalarField>& seeds) {
  if (seeds.size() < 2) throw ParameterError("uniqueness_probe: at least two seeds required");
  const HomotopyProblem prob(spec);
  std::vector<ScalarField> solutions;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    try {
      solutions.push_back(continue_homotopy(prob, seeds[i]).solution);
    } catch (const Error& e) {
      throw ProbeInconclusive("uniqueness_probe: run " + std::to_string(i) + " failed: " + e.what());
    }
  }
  double gap = 0.0;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    for (std::size_t j = i + 1; j < solutions.size(); ++j) {
      gap = std::max(gap, (solutions[i] - solutions[j]).cwiseAbs().maxCoeff());
    }
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Refinement studies

struct RefinementCase {
  ProblemSpec spec;
  std::optional<ScalarField> truth;
  std::optional<ScalarField> v_init;
};

struct RefinementLevel {
  int cells = 0;
  double h = 0.0;
  bool solved = false;
  std::string failure;
  double error = std::numeric_limits<double>::quiet_NaN();  ///< sup |v - truth| when a truth exists
  double residual = std::numeric_limits<double>::quiet_NaN();
  BoundsReport monitors;
};

struct MonitorRatios {
  double sup_grad = 0.0, sup_hess = 0.0, sup_vnn_boundary = 0.0, trace_min = 0.0;
};

struct RefinementTable {
  std::vector<RefinementLevel> levels;
  std::vector<double> error_orders;     ///< log2 of successive error ratios
  std::vector<MonitorRatios> monitor_ratios;  ///< fine / coarse per successive pair
};

inline void to_json(nlohmann::json& j, const RefinementLevel& l) {
  j = nlohmann::json{{"cells", l.cells}, {"h", l.h}, {"solved", l.solved}};
  if (l.solved) j["monitors"] = l.monitors;
  if (!l.failure.empty()) j["failure"] = l.failure;
  if (std::isfinite(l.error)) j["error"] = l.error;
  if (std::isfinite(l.residual)) j["residual"] = l.residual;
}

inline void to_json(nlohmann::json& j, const MonitorRatios& r) {
  j = nlohmann::json{{"sup_grad", r.sup_grad},
                     {"sup_hess", r.sup_hess},
                     {"sup_vnn_boundary", r.sup_vnn_boundary},
                     {"trace_min", r.trace_min}};
}

inline void to_json(nlohmann::json& j, const RefinementTable& t) {
  j = nlohmann::json{{"levels", t.levels}, {"error_orders", t.error_orders}, {"monitor_ratios", t.monitor_ratios}};
}

using CaseFactory = std::function<RefinementCase(int cells)>;

/// Solve on cells = base_cells * 2^l for l < levels. A failed level is kept
/// with its failure message and no ratios are formed across it.
inline RefinementTable refinement_study(const CaseFactory& make_case, int base_cells, int levels) {
  if (levels < 1) throw ParameterError("refinement_study: at least one level required");
  RefinementTable table;
  for (int l = 0; l < levels; ++l) {
    RefinementLevel lev;
    lev.cells = base_cells << l;
    try {
      const RefinementCase c = make_case(lev.cells);
      lev.h = c.spec.grid.h(c.spec.grid.dim() - 1);
      const HomotopyProblem prob(c.spec);
      const ScalarField init = c.v_init ? *c.v_init : ScalarField::Zero(static_cast<Eigen::Index>(c.spec.grid.size()));
      const auto res = continue_homotopy(prob, init);
      lev.solved = true;
      lev.residual = res.trace.back().residual_norm;
      lev.monitors = estimate_monitor(res.solution, c.spec);
      if (c.truth) lev.error = (res.solution - *c.truth).cwiseAbs().maxCoeff();
    } catch (const Error& e) {
      lev.failure = e.what();
    }
    table.levels.push_back(std::move(lev));
  }
  for (std::size_t i = 1; i < table.levels.size(); ++i) {
    const auto& a = table.levels[i - 1];
    const auto& b = table.levels[i];
    if (!a.solved || !b.solved) continue;
    if (std::isfinite(a.error) && std::isfinite(b.error)) table.error_orders.push_back(std::log2(a.error / b.error));
    table.monitor_ratios.push_back({b.monitors.sup_grad / a.monitors.sup_grad, b.monitors.sup_hess / a.monitors.sup_hess,
                                    b.monitors.sup_vnn_boundary / a.monitors.sup_vnn_boundary,
                                    b.monitors.trace_min / a.monitors.trace_min});
  }
  return table;
}

}  // namespace yamabe
