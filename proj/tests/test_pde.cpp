#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "yamabe/manufactured.hpp"
#include "yamabe/pde.hpp"

using namespace yamabe;

namespace {

ScalarField zeros(const GridManifold& grid) { return ScalarField::Zero(static_cast<Eigen::Index>(grid.size())); }

ProblemSpec make_spec(const MetricField& g, int k, double t, double phi, double psi) {
  ProblemSpec spec;
  spec.grid = g.grid();
  spec.g = g;
  spec.cone = ConePair{k, 3};
  spec.t = t;
  spec.phi = ScalarField::Constant(static_cast<Eigen::Index>(spec.grid.size()), phi);
  spec.psi = boundary_constant(spec.grid, psi);
  return spec;
}

/// phi = 1, psi = h_g / sqrt 6: v = ln(6) / 2 solves the k = 1, t = 0 problem.
ProblemSpec constant_solution_spec(int cells) {
  const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, cells));
  auto spec = make_spec(g, 1, 0.0, 1.0, 0.0);
  spec.psi = boundary_mean_curvature(g);
  for (auto& b : spec.psi) b.values /= std::sqrt(6.0);
  return spec;
}

ScalarField noise(const GridManifold& grid, std::uint64_t seed, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  ScalarField out(static_cast<Eigen::Index>(grid.size()));
  for (auto& x : out) x = u(rng);
  return out;
}

double sup_error(const ScalarField& a, const ScalarField& b) { return (a - b).cwiseAbs().maxCoeff(); }

double interior_max(const GridManifold& grid, const ScalarField& f) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (!grid.on_boundary(p)) m = std::max(m, f[static_cast<Eigen::Index>(p)]);
  }
  return m;
}

}  // namespace

TEST(HomotopyResidual, EndpointMatchesGoverningResidual) {
  const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, 8));
  auto spec = make_spec(g, 2, 0.3, 1.5, -0.4);
  const auto& grid = spec.grid;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ScalarField v = oracle::SmoothField(seed, 0.005).sample(grid);
    const auto hr = homotopy_residual(v, 1.0, spec);
    const auto cr = residual(v, spec);
    ASSERT_TRUE(hr.feasible());
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const auto i = static_cast<Eigen::Index>(p);
      if (grid.on_boundary(p)) {
        const auto& b = cr.boundary[static_cast<int>(grid.sheet_of(p))];
        EXPECT_NEAR(hr.values[i], b.values[static_cast<Eigen::Index>(grid.sheet_position(p))], 1e-12);
      } else {
        EXPECT_NEAR(hr.values[i], cr.interior[i], 1e-12);
      }
    }
  }
}

TEST(HomotopyResidual, StartEquationUsesTheTrace) {
  // On the hyperbolic slab with t = 2/3, -A^t = g, so at s = 0 and v = 0 the
  // argument is 3 g and f = sqrt(sigma_2(3, 3, 3)) = 3 sqrt 3.
  const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, 16));
  const auto spec = make_spec(g, 2, 2.0 / 3.0, 1.0, 0.0);
  const auto r = homotopy_residual(zeros(spec.grid), 0.0, spec);
  ASSERT_TRUE(r.feasible());
  for (std::size_t p = 0; p < spec.grid.size(); ++p) {
    if (spec.grid.on_boundary(p)) continue;
    EXPECT_NEAR(r.values[static_cast<Eigen::Index>(p)], 3.0 * std::sqrt(3.0) - 1.0, 0.05);
  }
}

TEST(HomotopyResidual, RejectsParameterOutsideUnitInterval) {
  const auto spec = make_spec(flat_metric(GridManifold::uniform(3, 8)), 1, 0.0, 1.0, 0.0);
  EXPECT_THROW(homotopy_residual(zeros(spec.grid), 1.5, spec), ParameterError);
  EXPECT_THROW(homotopy_residual(zeros(spec.grid), -0.1, spec), ParameterError);
}

TEST(HomotopyResidual, FlagsConeExit) {
  const auto spec = make_spec(hyperbolic_slab_metric(GridManifold::uniform(3, 8)), 2, 0.0, 1.0, 0.0);
  const ScalarField v = oracle::SmoothField(4, 3.0).sample(spec.grid);
  const auto r = homotopy_residual(v, 1.0, spec);
  EXPECT_FALSE(r.feasible());
  for (std::size_t p : r.outside) EXPECT_TRUE(std::isnan(r.values[static_cast<Eigen::Index>(p)]));
  EXPECT_THROW(linearize(v, 1.0, spec), ConeViolation);
}

TEST(Linearize, MatchesFiniteDifferences) {
  const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, 8));
  for (int k : {1, 2, 3}) {
    auto spec = make_spec(g, k, 0.3, 1.2, -0.5);
    const HomotopyProblem prob(spec);
    const ScalarField v = oracle::SmoothField(10 + static_cast<std::uint64_t>(k), 0.005).sample(spec.grid);
    for (double s : {0.0, 0.5, 1.0}) {
      const SparseMatrix j = prob.jacobian(v, s);
      for (std::uint64_t dir = 0; dir < 20; ++dir) {
        const ScalarField u = noise(spec.grid, 100 + dir, 1.0);
        const double eps = 1e-6;
        const ScalarField fd =
            (prob.residual(v + eps * u, s).values - prob.residual(v - eps * u, s).values) / (2.0 * eps);
        const ScalarField ju = j * u;
        EXPECT_LE((fd - ju).norm(), 1e-5 * ju.norm()) << "k=" << k << " s=" << s << " dir=" << dir;
      }
    }
  }
}

TEST(Linearize, BoundaryRowIsNeumannWithoutPsi) {
  const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, 8));
  const auto spec = make_spec(g, 1, 0.0, 1.0, 0.0);
  const ScalarField v = oracle::SmoothField(5, 0.005).sample(spec.grid);
  const SparseMatrix j = linearize(v, 0.7, spec);
  const ScalarField ones = ScalarField::Ones(static_cast<Eigen::Index>(spec.grid.size()));
  const ScalarField j1 = j * ones;
  const ScalarField y = sample(spec.grid, [](const SmallVec& x) { return x[2]; });
  const ScalarField jy = j * y;
  const Background bg(g, 0.0);
  const auto yn = normal_derivative(y, g, bg.fd);
  for (std::size_t p = 0; p < spec.grid.size(); ++p) {
    if (!spec.grid.on_boundary(p)) continue;
    const auto i = static_cast<Eigen::Index>(p);
    EXPECT_NEAR(j1[i], 0.0, 1e-10);
    const auto& b = yn[static_cast<int>(spec.grid.sheet_of(p))];
    EXPECT_NEAR(jy[i], b.values[static_cast<Eigen::Index>(spec.grid.sheet_position(p))], 1e-10);
  }
}

TEST(Newton, RecoversManufacturedSolution) {
  const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, 10));
  for (int k : {1, 2}) {
    const ScalarField truth = oracle::SmoothField(7, 0.01).sample(g.grid());
    const auto mp = manufactured_problem(g, ConePair{k, 3}, 0.0, truth, ManufacturedMode::Consistent);
    const auto from_truth = newton_solve(mp.spec, 1.0, truth);
    EXPECT_LE(from_truth.newton_iters, 1);
    EXPECT_LE(from_truth.residual_norm, 1e-10);
    const ScalarField shifted = truth.array() + 0.1;
    const auto st = newton_solve(mp.spec, 1.0, shifted);
    EXPECT_LE(st.newton_iters, 8) << "k=" << k;
    EXPECT_LE(st.residual_norm, 1e-10);
    EXPECT_LE(sup_error(st.v, truth), 1e-8);
    EXPECT_GT(st.min_cone_margin, 0.0);
  }
}

TEST(Newton, QuadraticTail) {
  const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, 10));
  const ScalarField truth = oracle::SmoothField(7, 0.01).sample(g.grid());
  const auto mp = manufactured_problem(g, ConePair{2, 3}, 0.0, truth, ManufacturedMode::Consistent);
  const auto st = newton_solve(mp.spec, 1.0, ScalarField(truth.array() + 0.1));
  const auto& h = st.history;
  ASSERT_GE(h.size(), 3u);
  const std::size_t last = h.size() - 1;
  // once the iteration is in the asymptotic regime the error squares
  const double scale = h[last - 1] / (h[last - 2] * h[last - 2]);
  EXPECT_LE(h[last], 2.0 * scale * h[last - 1] * h[last - 1] + 1e-11);
}

TEST(Newton, ConstantSolutionFamilyOnHyperbolicSlab) {
  // ln(6)/2 + ln((1 + y) / (y + b)) solves the same continuous problem for
  // every b > 0 (the metrics are 6 (y + b)^{-2} delta), so the discrete
  // solution may settle on any member; it must lie on the family to O(h^2).
  const double c = 0.5 * std::log(6.0);
  std::vector<double> fit;
  for (int cells : {8, 12}) {
    const auto spec = constant_solution_spec(cells);
    const auto& grid = spec.grid;
    const auto r = homotopy_residual(ScalarField::Constant(static_cast<Eigen::Index>(grid.size()), c), 1.0, spec);
    EXPECT_LT(r.sup_norm(), 40.0 / (cells * cells));
    const auto st = newton_solve(spec, 1.0, zeros(grid));
    EXPECT_LE(st.residual_norm, 1e-10);
    const double b = std::exp(c - st.v[0]);
    double err = 0.0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const double y = grid.coordinate(p, 2);
      err = std::max(err, std::abs(st.v[static_cast<Eigen::Index>(p)] - c - std::log((1.0 + y) / (y + b))));
    }
    fit.push_back(err);
  }
  EXPECT_GT(oracle::order(fit[0], fit[1]) / std::log2(12.0 / 8.0), 1.7);
}

TEST(Newton, NoStartOnConformallyFlatSlabWithMinimalTarget) {
  // At s = 0 the boundary condition asks for a minimal boundary and the
  // interior for constant negative scalar curvature; metrics conformal to the
  // flat slab admit neither, so the iteration must fail rather than converge.
  const auto spec = make_spec(hyperbolic_slab_metric(GridManifold::uniform(3, 8)), 1, 0.0, 1.0, 0.0);
  EXPECT_THROW(newton_solve(spec, 0.0, zeros(spec.grid)), Error);
}

TEST(Continuation, ReachesOneOnSolSlab) {
  auto spec = make_spec(sol_slab_metric(GridManifold::uniform(3, 10), 1.0), 1, 0.0, 1.0, 0.0);
  const auto res = continue_homotopy(spec);
  ASSERT_FALSE(res.trace.empty());
  EXPECT_EQ(res.trace.front().s, 0.0);
  EXPECT_EQ(res.trace.back().s, 1.0);
  const HomotopyProblem prob(spec);
  for (const auto& st : res.trace) {
    EXPECT_LE(st.residual_norm, spec.tol_newton);
    EXPECT_GT(st.min_cone_margin, 0.0);
    // trace positivity: sigma_1 of the argument
    const TensorField w = deformation_tensor(st.v, prob.background());
    for (std::size_t p = 0; p < spec.grid.size(); ++p) {
      if (spec.grid.on_boundary(p)) continue;
      const SmallMat x = prob.argument(w[p], p, st.s);
      EXPECT_GT(prob.background().g.inverse(p).cwiseProduct(x).sum(), 0.0);
    }
  }
  for (std::size_t i = 1; i < res.trace.size(); ++i) EXPECT_GT(res.trace[i].s, res.trace[i - 1].s);
  EXPECT_LE(interior_max(spec.grid, residual(res.solution, spec).interior.cwiseAbs()), 1e-9);
}

TEST(Continuation, SecondConeWithNegativeBoundaryData) {
  auto spec = make_spec(sol_slab_metric(GridManifold::uniform(3, 8), 2.0), 2, -1.0, 1.0, -0.5);
  const auto res = continue_homotopy(spec);
  EXPECT_EQ(res.trace.back().s, 1.0);
  EXPECT_GT(-interior_max(spec.grid, -residual(res.solution, spec).cone_margin), 0.0);
  for (const auto& st : res.trace) EXPECT_GT(st.min_cone_margin, 0.0);
}

TEST(Continuation, EndpointIndependentOfSchedule) {
  const auto g = sol_slab_metric(GridManifold::uniform(3, 8), 1.0);
  const ScalarField truth = oracle::SmoothField(3, 0.01).sample(g.grid());
  auto mp = manufactured_problem(g, ConePair{1, 3}, 0.0, truth, ManufacturedMode::Consistent);
  mp.spec.homotopy_schedule = {0.0, 1.0};
  const auto coarse = continue_homotopy(mp.spec);
  mp.spec.homotopy_schedule = {0.0, 0.5, 1.0};
  const auto fine = continue_homotopy(mp.spec);
  EXPECT_LE(sup_error(coarse.solution, fine.solution), 1e-9);
  EXPECT_LE(sup_error(fine.solution, truth), 1e-8);
}

TEST(Continuation, IndependentStartsAgree) {
  for (int k : {1, 2}) {
    for (double t : {0.0, 0.5}) {
      const auto g = hyperbolic_slab_metric(GridManifold::uniform(3, 8));
      const ScalarField truth = oracle::SmoothField(20 + static_cast<std::uint64_t>(k), 0.01).sample(g.grid());
      auto mp = manufactured_problem(g, ConePair{k, 3}, t, truth, ManufacturedMode::Consistent);
      const auto a = newton_solve(mp.spec, 1.0, zeros(mp.spec.grid));
      const auto b = newton_solve(mp.spec, 1.0, 0.3 * noise(mp.spec.grid, 99, 1.0));
      EXPECT_LE(sup_error(a.v, b.v), 1e-8) << "k=" << k << " t=" << t;
    }
  }
  const auto spec = make_spec(sol_slab_metric(GridManifold::uniform(3, 8), 1.0), 1, 0.5, 1.0, -0.5);
  const auto a = continue_homotopy(spec, zeros(spec.grid));
  const auto b = continue_homotopy(spec, 0.3 * noise(spec.grid, 7, 1.0));
  EXPECT_LE(sup_error(a.solution, b.solution), 1e-8);
}

TEST(Continuation, OnePointScheduleSolvesDirectly) {
  auto spec = constant_solution_spec(8);
  spec.homotopy_schedule = {1.0};
  const auto res = continue_homotopy(spec);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_LE(res.trace.back().residual_norm, 1e-10);
}

TEST(ProblemSpec, RejectsBadSchedules) {
  auto spec = make_spec(flat_metric(GridManifold::uniform(3, 8)), 1, 0.0, 1.0, 0.0);
  spec.homotopy_schedule = {0.0, 0.5};
  EXPECT_THROW(spec.validate(), SpecError);
  spec.homotopy_schedule = {0.0, 0.6, 0.4, 1.0};
  EXPECT_THROW(spec.validate(), SpecError);
  spec.homotopy_schedule = {};
  EXPECT_THROW(spec.validate(), SpecError);
}
