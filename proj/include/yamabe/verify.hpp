#pragma once

// Property suites behind `yamabe verify`: each returns a machine-readable
// report with one entry per check.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "yamabe/config.hpp"
#include "yamabe/estimates.hpp"
#include "yamabe/fermi.hpp"

namespace yamabe {

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"hypotheses", "conformal", "fermi", "uniqueness", "refinement"};
  return names;
}

struct SuiteReport {
  std::string suite;
  bool passed = true;
  nlohmann::json checks = nlohmann::json::array();

  void check(const std::string& name, bool ok, nlohmann::json detail = {}) {
    detail["name"] = name;
    detail["passed"] = ok;
    checks.push_back(std::move(detail));
    passed = passed && ok;
  }
};

inline void to_json(nlohmann::json& j, const SuiteReport& r) {
  j = nlohmann::json{{"suite", r.suite}, {"passed", r.passed}, {"checks", r.checks}};
}

/// Smooth field periodic in the tangential axes: a few products of a
/// tangential Fourier mode and a normal cosine, amplitude ~amp.
inline ScalarField smooth_perturbation(const GridManifold& grid, std::uint64_t seed, double amp, int modes = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> axis(0, grid.dim() - 2);
  struct Mode {
    double a, phase, shift;
    int axis, m;
  };
  std::vector<Mode> ms;
  for (int i = 0; i < modes; ++i) {
    ms.push_back({amp * u(rng), std::numbers::pi * u(rng), std::numbers::pi * u(rng), axis(rng), i == 0 ? 1 : i % 2});
  }
  const double offset = amp * u(rng);
  return sample(grid, [&](const SmallVec& x) {
    const double y = x[x.size() - 1];
    double v = offset;
    for (const auto& md : ms) {
      v += md.a * std::sin(2.0 * std::numbers::pi * x[md.axis] + md.phase) * std::cos(std::numbers::pi * md.m * y + md.shift);
    }
    return v;
  });
}

// ---------------------------------------------------------------------------
// Two-path identities

inline double max_abs(const BoundaryPair& b) {
  return std::max(b[0].values.cwiseAbs().maxCoeff(), b[1].values.cwiseAbs().maxCoeff());
}

/// Sup over nodes of the gap between the eigenvalues of A^t of e^{2v} g from
/// its own curvature and from the pushforward formula.
inline double schouten_two_path_gap(const MetricField& g, const ScalarField& v, double t) {
  const auto& grid = g.grid();
  const auto push = pushforward_schouten(v, g, t);
  const auto gt = g.conformal(v);
  const auto direct = rel_eigenvalues(curvature(gt, FiniteDifference(grid), t).schouten_t, gt);
  double gap = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) gap = std::max(gap, (direct[p] - push.lambda[p]).cwiseAbs().maxCoeff());
  return gap;
}

/// Sup over both sheets of the gap between h of e^{2v} g and (h + v_nu) e^{-v}.
inline double mean_curvature_two_path_gap(const MetricField& g, const ScalarField& v) {
  BoundaryPair direct = boundary_mean_curvature(g.conformal(v));
  const BoundaryPair law = pushforward_mean_curvature(v, g);
  for (int s = 0; s < 2; ++s) direct[s].values -= law[s].values;
  return max_abs(direct);
}

/// Observed order of a refinement pair is at least second order, less 0.3.
inline bool second_order(double coarse, double fine) { return std::log2(coarse / fine) >= 1.7; }

// ---------------------------------------------------------------------------
// Suites

inline SuiteReport verify_hypotheses(const RunConfig& c, std::uint64_t seed) {
  SuiteReport r{"hypotheses"};
  for (int k = 1; k <= c.dim(); ++k) {
    const auto rep = check_hypotheses(ConePair{k, c.dim()}, 200, seed);
    r.check("k=" + std::to_string(k), rep.passed(), {{"report", rep}});
  }
  return r;
}

inline void require_analytic(const RunConfig& c, const std::string& suite) {
  if (!c.background.analytic()) {
    throw SpecError("suite '" + suite + "' refines the background and needs an analytic metric");
  }
}

/// Grid with every axis coarsened by 2^levels_down.
inline GridManifold coarsened_grid(const RunConfig& c, int levels_down) {
  std::vector<int> shape = c.shape;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    const bool normal = a + 1 == shape.size();
    const int cells = normal ? shape[a] - 1 : shape[a];
    if (cells % (1 << levels_down) != 0) throw SpecError("grid cannot be coarsened " + std::to_string(levels_down) + " times");
    shape[a] = (cells >> levels_down) + (normal ? 1 : 0);
  }
  return GridManifold(shape);
}

inline GridManifold refined_grid(const RunConfig& c) {
  std::vector<int> shape = c.shape;
  for (std::size_t a = 0; a < shape.size(); ++a) shape[a] = a + 1 == shape.size() ? 2 * (shape[a] - 1) + 1 : 2 * shape[a];
  return GridManifold(shape);
}

/// Two-path identities for five smooth factors on the configured grid and
/// its refinement.
inline SuiteReport verify_conformal(const RunConfig& c, std::uint64_t seed) {
  require_analytic(c, "conformal");
  SuiteReport r{"conformal"};
  const GridManifold coarse = config_grid(c), fine = refined_grid(c);
  const MetricField gc = build_background(c.background, coarse), gf = build_background(c.background, fine);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const ScalarField vc = smooth_perturbation(coarse, seed + i, 0.1), vf = smooth_perturbation(fine, seed + i, 0.1);
    const double ec = schouten_two_path_gap(gc, vc, c.t), ef = schouten_two_path_gap(gf, vf, c.t);
    r.check("schouten seed " + std::to_string(seed + i), second_order(ec, ef),
            {{"coarse", ec}, {"fine", ef}, {"order", std::log2(ec / ef)}});
    const double hc = mean_curvature_two_path_gap(gc, vc), hf = mean_curvature_two_path_gap(gf, vf);
    r.check("mean curvature seed " + std::to_string(seed + i), second_order(hc, hf),
            {{"coarse", hc}, {"fine", hf}, {"order", std::log2(hc / hf)}});
  }
  return r;
}

/// Charts at two base points on each sheet. Orthogonality and eikonal
/// defects must be O(h^2) (1e-10 on the flat slab); the distance property is
/// asserted for backgrounds depending on the normal coordinate only.
inline SuiteReport verify_fermi(const RunConfig& c, std::uint64_t seed) {
  SuiteReport r{"fermi"};
  const auto grid = config_grid(c);
  const auto g = build_background(c.background, grid);
  const double h = grid.h(grid.normal_axis());
  const bool flat = c.background.kind == BackgroundKind::Flat && c.background.gauge == GaugeKind::None;
  const double tol = flat ? 1e-10 : h * h;
  for (Sheet s : kSheets) {
    for (std::size_t base : {std::size_t{0}, grid.sheet_size() / 2 + grid.points(0) / 2}) {
      const auto rep = validate_chart(build_chart(g, s, base), seed);
      const std::string at = std::string(sheet_name(s)) + " sheet node " + std::to_string(base);
      r.check("orthogonality " + at, rep.orthogonality_defect <= tol, {{"value", rep.orthogonality_defect}, {"limit", tol}});
      r.check("eikonal " + at, rep.eikonal_defect <= tol, {{"value", rep.eikonal_defect}, {"limit", tol}});
      r.check("containment " + at, rep.containment_violations == 0,
              {{"violations", rep.containment_violations}, {"samples", rep.containment_checked}});
      if (c.background.analytic()) {
        r.check("distance " + at, rep.distance_gap <= 1e-6, {{"value", rep.distance_gap}, {"limit", 1e-6}});
      }
    }
  }
  return r;
}

inline std::vector<ScalarField> uniqueness_seeds(const RunConfig& c, const GridManifold& grid, std::uint64_t seed) {
  std::vector<ScalarField> out;
  for (std::uint64_t s : c.solver.seeds) {
    out.push_back(s == 0 ? ScalarField::Zero(static_cast<Eigen::Index>(grid.size()))
                         : ScalarField(smooth_perturbation(grid, s + seed, c.solver.seed_amplitude)));
  }
  return out;
}

inline SuiteReport verify_uniqueness(const RunConfig& c, std::uint64_t seed) {
  SuiteReport r{"uniqueness"};
  const auto spec = build_spec(c);
  try {
    const double gap = uniqueness_probe(spec, uniqueness_seeds(c, spec.grid, seed));
    r.check("gap", gap <= 1e-8, {{"value", gap}, {"limit", 1e-8}});
  } catch (const ProbeInconclusive& e) {
    r.check("gap", false, {{"error", e.what()}});
  }
  return r;
}

/// Refinement towards the configured grid, which is the finest level.
inline SuiteReport verify_refinement(const RunConfig& c, int levels) {
  require_analytic(c, "refinement");
  if (levels < 2) throw SpecError("refinement needs at least two levels");
  SuiteReport r{"refinement"};
  std::vector<GridManifold> grids;
  for (int l = levels - 1; l >= 0; --l) grids.push_back(coarsened_grid(c, l));
  int level = 0;
  const auto table = refinement_study([&](int) { return RefinementCase{build_spec(c, grids[static_cast<std::size_t>(level++)]), {}, {}}; },
                                      grids.front().points(0), levels);
  for (const auto& l : table.levels) {
    r.check("level " + std::to_string(l.cells) + " solved",
            l.solved && l.monitors.within_window, nlohmann::json(l));
  }
  if (!table.monitor_ratios.empty()) {
    const auto& last = table.monitor_ratios.back();
    const bool bounded = last.sup_grad <= 1.05 && last.sup_hess <= 1.05 && last.sup_vnn_boundary <= 1.05 &&
                         last.trace_min >= 0.95;
    r.check("finest monitors within 5%", bounded, nlohmann::json(last));
  }
  return r;
}

inline SuiteReport run_suite(const RunConfig& c, const std::string& suite, std::uint64_t seed, int levels) {
  if (suite == "hypotheses") return verify_hypotheses(c, seed);
  if (suite == "conformal") return verify_conformal(c, seed);
  if (suite == "fermi") return verify_fermi(c, seed);
  if (suite == "uniqueness") return verify_uniqueness(c, seed);
  if (suite == "refinement") return verify_refinement(c, levels);
  throw SpecError("unknown suite '" + suite + "'");
}

}  // namespace yamabe
