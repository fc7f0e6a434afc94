#pragma once

// Problems with a known solution v*: phi and psi are chosen so that v* solves
// the boundary-value problem on the given background.

#include <functional>

#include "yamabe/conformal.hpp"
#include "yamabe/problem.hpp"

namespace yamabe {

enum class ManufacturedMode {
  /// Data from the curvature of e^{2v*} g recomputed on the grid: v* solves
  /// the discrete problem up to O(h^2).
  DirectCurvature,
  /// Data from the solver's own transformation formulas: v* solves the
  /// discrete problem exactly.
  Consistent,
};

struct ManufacturedProblem {
  ProblemSpec spec;
  ScalarField truth;
};

/// phi = f(-lambda(A^t)) and psi = h of e^{2v*} g.
inline ManufacturedProblem manufactured_problem(const MetricField& g, const ConePair& cone, double t,
                                                const ScalarField& truth,
                                                ManufacturedMode mode = ManufacturedMode::DirectCurvature) {
  const auto& grid = g.grid();
  const Background bg(g, t);
  ManufacturedProblem out;
  out.truth = truth;
  out.spec.grid = grid;
  out.spec.g = g;
  out.spec.cone = cone;
  out.spec.t = t;
  const ScalarField consistent_phi = conformal_cone_values(truth, bg, cone);
  if (mode == ManufacturedMode::Consistent) {
    out.spec.phi = consistent_phi;
    out.spec.psi = pushforward_mean_curvature(truth, bg);
  } else {
    const MetricField gt = g.conformal(truth);
    const FiniteDifference fd(grid);
    const auto curv = curvature(gt, fd, t);
    out.spec.phi.resize(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const SmallVec l = -relative_eigenvalues(curv.schouten_t[p], gt[p]);
      const auto i = static_cast<Eigen::Index>(p);
      out.spec.phi[i] = normalized_margin(l, cone.k) > kConeBoundaryTolerance ? f_eval(l, cone) : consistent_phi[i];
    }
    out.spec.psi = boundary_mean_curvature(gt, curv.christoffel);
  }
  // phi at boundary nodes never enters an equation; keep it positive for validation
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    if (grid.on_boundary(p) && !(out.spec.phi[i] > 0.0)) out.spec.phi[i] = 1.0;
  }
  return out;
}

inline ManufacturedProblem manufactured_problem(const MetricField& g, const ConePair& cone, double t,
                                                const std::function<double(const SmallVec&)>& truth,
                                                ManufacturedMode mode = ManufacturedMode::DirectCurvature) {
  return manufactured_problem(g, cone, t, sample(g.grid(), truth), mode);
}

}  // namespace yamabe
