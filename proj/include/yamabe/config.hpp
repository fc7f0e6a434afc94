#pragma once

// Run configuration: a single JSON document describing the manifold, the
// background metric, the problem data, the solver settings and the outputs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "yamabe/conformal.hpp"
#include "yamabe/io.hpp"
#include "yamabe/problem.hpp"

namespace yamabe {

enum class BackgroundKind { Flat, HyperbolicSlab, SolSlab, ConformalCustom };

enum class GaugeKind { None, ZeroMeanCurvature, RicciPinch };

struct BackgroundConfig {
  BackgroundKind kind = BackgroundKind::Flat;
  double alpha = 1.0;            ///< Sol slab rate
  std::vector<double> u;         ///< custom conformal factor over flat, one value per node
  GaugeKind gauge = GaugeKind::None;

  bool analytic() const { return kind != BackgroundKind::ConformalCustom; }
};

/// A scalar datum: a constant, per-node values, or (for psi) a multiple of
/// the background boundary mean curvature.
struct DataConfig {
  enum class Kind { Constant, Values, MeanCurvature } kind = Kind::Constant;
  double value = 0.0;  ///< constant, or the mean-curvature multiple
  std::vector<double> values;
};

struct SolverConfig {
  std::vector<double> schedule = uniform_schedule(11);
  double tol_newton = 1e-10;
  double tol_path = 1e-3;
  int max_newton = 30;
  std::vector<std::uint64_t> seeds{0, 1};  ///< uniqueness starts: 0 is v = 0, others smooth noise
  double seed_amplitude = 0.3;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json"};
};

struct RunConfig {
  std::vector<int> shape;  ///< nodes per axis, normal axis last
  BackgroundConfig background;
  int k = 1;
  double t = 0.0;
  DataConfig phi;
  DataConfig psi;
  SolverConfig solver;
  OutputConfig outputs;

  int dim() const { return static_cast<int>(shape.size()); }
  int cells() const { return shape.front(); }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SpecError(where + ": missing '" + key + "'");
  return j.at(key);
}

inline std::vector<double> load_values(const nlohmann::json& j, const std::filesystem::path& base, const std::string& what) {
  if (j.contains("values")) return j.at("values").get<std::vector<double>>();
  if (j.contains("file")) {
    const auto table = read_field_csv(base / j.at("file").get<std::string>());
    return table.values;
  }
  throw SpecError(what + ": expected 'values' or 'file'");
}

inline DataConfig parse_data(const nlohmann::json& j, const std::filesystem::path& base, const std::string& what,
                             bool allow_mean_curvature) {
  DataConfig d;
  if (j.is_number()) {
    d.value = j.get<double>();
    return d;
  }
  if (!j.is_object()) throw SpecError(what + ": expected a number or an object");
  if (j.contains("constant")) {
    d.value = j.at("constant").get<double>();
  } else if (j.contains("mean_curvature")) {
    if (!allow_mean_curvature) throw SpecError(what + ": 'mean_curvature' is only defined for psi");
    d.kind = DataConfig::Kind::MeanCurvature;
    d.value = j.at("mean_curvature").get<double>();
  } else {
    d.kind = DataConfig::Kind::Values;
    d.values = load_values(j, base, what);
  }
  return d;
}

}  // namespace detail

/// Parse and check a configuration; relative file references resolve
/// against `base`. Every problem is reported as SpecError.
inline RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base = ".") {
  RunConfig c;
  try {
    const auto& m = detail::require(j, "manifold", "config");
    const int n = detail::get_or(m, "n", 3);
    if (m.contains("shape")) {
      c.shape = m.at("shape").get<std::vector<int>>();
      if (static_cast<int>(c.shape.size()) != n) throw SpecError("manifold: shape must have n entries");
    } else {
      const int cells = detail::require(m, "cells", "manifold").get<int>();
      c.shape.assign(static_cast<std::size_t>(n), cells);
      c.shape.back() = cells + 1;
    }

    const auto& b = detail::require(j, "background", "config");
    const auto metric = detail::require(b, "metric", "background").get<std::string>();
    if (metric == "flat") {
      c.background.kind = BackgroundKind::Flat;
    } else if (metric == "hyperbolic_slab") {
      c.background.kind = BackgroundKind::HyperbolicSlab;
    } else if (metric == "sol_slab") {
      c.background.kind = BackgroundKind::SolSlab;
      c.background.alpha = detail::get_or(b, "alpha", 1.0);
    } else if (metric == "conformal_custom") {
      c.background.kind = BackgroundKind::ConformalCustom;
      c.background.u = detail::load_values(b.contains("u") ? b.at("u") : b, base, "background.u");
    } else {
      throw SpecError("background: unknown metric '" + metric + "'");
    }
    const auto gauge = detail::get_or<std::string>(b, "gauge", "none");
    if (gauge == "none") {
      c.background.gauge = GaugeKind::None;
    } else if (gauge == "zero_mean_curvature") {
      c.background.gauge = GaugeKind::ZeroMeanCurvature;
    } else if (gauge == "ricci_pinch") {
      c.background.gauge = GaugeKind::RicciPinch;
    } else {
      throw SpecError("background: unknown gauge '" + gauge + "'");
    }

    const auto& p = detail::require(j, "problem", "config");
    c.k = detail::require(p, "k", "problem").get<int>();
    c.t = detail::get_or(p, "t", 0.0);
    c.phi = detail::parse_data(detail::require(p, "phi", "problem"), base, "problem.phi", false);
    c.psi = detail::parse_data(detail::require(p, "psi", "problem"), base, "problem.psi", true);

    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      if (s.contains("schedule")) {
        const auto& sch = s.at("schedule");
        c.solver.schedule = sch.is_array() ? sch.get<std::vector<double>>() : uniform_schedule(sch.at("steps").get<int>());
      }
      c.solver.tol_newton = detail::get_or(s, "tol_newton", c.solver.tol_newton);
      c.solver.tol_path = detail::get_or(s, "tol_path", c.solver.tol_path);
      c.solver.max_newton = detail::get_or(s, "max_newton", c.solver.max_newton);
      c.solver.seeds = detail::get_or(s, "seeds", c.solver.seeds);
      c.solver.seed_amplitude = detail::get_or(s, "seed_amplitude", c.solver.seed_amplitude);
    }
    if (j.contains("outputs")) {
      const auto& o = j.at("outputs");
      c.outputs.directory = detail::get_or(o, "directory", c.outputs.directory);
      c.outputs.formats = detail::get_or(o, "formats", c.outputs.formats);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("config: ") + e.what());
  }

  if (c.dim() < 3) throw SpecError("manifold: n must be at least 3");
  if (c.k < 1 || c.k > c.dim()) throw SpecError("problem: k must satisfy 1 <= k <= n");
  if (!(c.t < 1.0)) throw SpecError("problem: t < 1 is required (got " + std::to_string(c.t) + ")");
  if (c.solver.seeds.size() < 2) throw SpecError("solver: at least two seeds are required");
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(j, path.parent_path());
}

/// The background family evaluated on an arbitrary grid (analytic kinds only
/// for grids other than the configured one).
inline MetricField build_background(const BackgroundConfig& b, const GridManifold& grid) {
  MetricField g = [&] {
    switch (b.kind) {
      case BackgroundKind::Flat:
        return flat_metric(grid);
      case BackgroundKind::HyperbolicSlab:
        return hyperbolic_slab_metric(grid);
      case BackgroundKind::SolSlab:
        return sol_slab_metric(grid, b.alpha);
      case BackgroundKind::ConformalCustom:
        if (b.u.size() != grid.size()) {
          throw SpecError("background.u has " + std::to_string(b.u.size()) + " values for " +
                          std::to_string(grid.size()) + " nodes");
        }
        return conformally_flat_metric(grid, Eigen::Map<const ScalarField>(b.u.data(), static_cast<Eigen::Index>(b.u.size())));
    }
    throw SpecError("background: unknown kind");
  }();
  if (b.gauge == GaugeKind::None) return g;
  MetricField g1 = zero_mean_curvature_gauge(g).g1;
  if (b.gauge == GaugeKind::ZeroMeanCurvature) return g1;
  return choose_pinch_constant(g1).g2;
}

inline ScalarField node_data(const DataConfig& d, const GridManifold& grid, const std::string& what) {
  if (d.kind == DataConfig::Kind::Values) {
    if (d.values.size() != grid.size()) throw SpecError(what + ": expected one value per node");
    return Eigen::Map<const ScalarField>(d.values.data(), static_cast<Eigen::Index>(d.values.size()));
  }
  return ScalarField::Constant(static_cast<Eigen::Index>(grid.size()), d.value);
}

inline BoundaryPair boundary_data(const DataConfig& d, const MetricField& g, const std::string& what) {
  const auto& grid = g.grid();
  if (d.kind == DataConfig::Kind::Constant) return boundary_constant(grid, d.value);
  if (d.kind == DataConfig::Kind::MeanCurvature) {
    BoundaryPair h = boundary_mean_curvature(g);
    for (auto& s : h) s.values *= d.value;
    return h;
  }
  const ScalarField all = node_data(d, grid, what);
  return {restrict_to_sheet(grid, all, Sheet::Lower), restrict_to_sheet(grid, all, Sheet::Upper)};
}

inline GridManifold config_grid(const RunConfig& c) { return GridManifold(c.shape); }

/// The grid with `cells` cells per axis, for refinement of analytic backgrounds.
inline GridManifold config_grid(const RunConfig& c, int cells) { return GridManifold::uniform(c.dim(), cells); }

inline ProblemSpec build_spec(const RunConfig& c, const GridManifold& grid) {
  ProblemSpec spec;
  spec.grid = grid;
  spec.g = build_background(c.background, grid);
  spec.cone = ConePair{c.k, c.dim()};
  spec.t = c.t;
  spec.phi = node_data(c.phi, grid, "problem.phi");
  spec.psi = boundary_data(c.psi, spec.g, "problem.psi");
  spec.tol_newton = c.solver.tol_newton;
  spec.tol_path = c.solver.tol_path;
  spec.max_newton = c.solver.max_newton;
  spec.homotopy_schedule = c.solver.schedule;
  spec.validate();
  return spec;
}

inline ProblemSpec build_spec(const RunConfig& c) { return build_spec(c, config_grid(c)); }

}  // namespace yamabe
