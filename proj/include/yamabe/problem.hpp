#pragma once

// Problem description shared by the residual, the solver and the monitors.

#include <cmath>
#include <string>
#include <vector>

#include "yamabe/errors.hpp"
#include "yamabe/geometry.hpp"
#include "yamabe/symfunc.hpp"

namespace yamabe {

/// Uniform schedule 0, 1/(steps-1), ..., 1.
inline std::vector<double> uniform_schedule(int steps) {
  if (steps < 2) throw SpecError("homotopy schedule needs at least two points");
  std::vector<double> s(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) s[static_cast<std::size_t>(i)] = static_cast<double>(i) / (steps - 1);
  return s;
}

/// f(lambda_g(W - A^t)) = phi e^{2v} in M, v_nu + h_g = psi e^v on the
/// boundary, for the conformal factor v of e^{2v} g.
struct ProblemSpec {
  GridManifold grid;
  MetricField g;
  ConePair cone;
  double t = 0.0;
  ScalarField phi;
  BoundaryPair psi;
  double tol_newton = 1e-10;
  double tol_path = 1e-3;  ///< smallest accepted homotopy step
  int max_newton = 30;
  std::vector<double> homotopy_schedule = uniform_schedule(11);

  void validate() const {
    cone.validate();
    require_t_below_one(t);
    if (cone.n != grid.dim()) throw SpecError("cone dimension differs from manifold dimension");
    if (!(g.grid() == grid)) throw SpecError("metric lives on a different grid");
    if (static_cast<std::size_t>(phi.size()) != grid.size()) throw SpecError("phi must have one value per node");
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      if (!std::isfinite(phi[i]) || !(phi[i] > 0.0)) {
        throw SpecError("phi must be strictly positive (node " + std::to_string(i) + ")");
      }
    }
    for (Sheet s : kSheets) {
      const auto& b = psi[static_cast<int>(s)];
      if (b.sheet != s || static_cast<std::size_t>(b.values.size()) != grid.sheet_size()) {
        throw SpecError(std::string("psi missing on the ") + sheet_name(s) + " sheet");
      }
      if (!b.values.allFinite()) throw SpecError("psi has non-finite values");
    }
    if (!(tol_newton > 0.0)) throw SpecError("tol_newton must be positive");
    if (!(tol_path > 0.0)) throw SpecError("tol_path must be positive");
    if (max_newton < 1) throw SpecError("max_newton must be at least 1");
    if (homotopy_schedule.empty() || !(homotopy_schedule.front() >= 0.0) || homotopy_schedule.back() != 1.0) {
      throw SpecError("homotopy schedule must lie in [0, 1] and end at 1");
    }
    for (std::size_t i = 1; i < homotopy_schedule.size(); ++i) {
      if (!(homotopy_schedule[i] > homotopy_schedule[i - 1])) {
        throw SpecError("homotopy schedule must be strictly increasing");
      }
    }
  }
};

}  // namespace yamabe
