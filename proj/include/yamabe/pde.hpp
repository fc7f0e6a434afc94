#pragma once

// Homotopy residual, its analytic linearisation, cone-guarded damped Newton
// and continuation in s from the quasilinear trace equation (s = 0) to the
// fully nonlinear problem (s = 1).
//
//   interior:  f(lambda_g(X)) - (s phi + 1 - s) e^{2v},
//              X = s Wbar + (1 - s) tr_g(Wbar) g,  Wbar = W_g^v - A^t_g
//   boundary:  v_nu + h_g - s e^v psi

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "yamabe/conformal.hpp"
#include "yamabe/problem.hpp"

namespace yamabe {

/// One state of the continuation path.
struct HomotopyState {
  double s = 0.0;
  ScalarField v;
  int newton_iters = 0;
  double residual_norm = std::numeric_limits<double>::infinity();  ///< sup norm
  double min_cone_margin = -std::numeric_limits<double>::infinity();  ///< over equation nodes
  std::vector<double> history;  ///< sup-norm residual after each iterate, starting with the initial guess
};

inline void to_json(nlohmann::json& j, const HomotopyState& st) {
  j = nlohmann::json{{"s", st.s},
                     {"residual_norm", st.residual_norm},
                     {"newton_iters", st.newton_iters},
                     {"min_cone_margin", st.min_cone_margin}};
}

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, HomotopyState best) : Error(what), best_(std::move(best)) {}
  const HomotopyState& best() const noexcept { return best_; }

 private:
  HomotopyState best_;
};

class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, std::vector<std::size_t> nodes) : Error(what), nodes_(std::move(nodes)) {}
  const std::vector<std::size_t>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<std::size_t> nodes_;
};

class ContinuationFailure : public Error {
 public:
  ContinuationFailure(const std::string& what, std::vector<HomotopyState> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<HomotopyState>& trace() const noexcept { return trace_; }

 private:
  std::vector<HomotopyState> trace_;
};

/// Residual of the homotopy equation. Boundary rows are stored at the
/// boundary nodes so the whole residual is one nodal vector.
struct HomotopyResidual {
  ScalarField values;       ///< NaN at interior nodes whose argument left the cone
  ScalarField cone_margin;  ///< min_j sigma_j of lambda_g(X); meaningful at interior nodes
  std::vector<std::size_t> outside;  ///< interior nodes outside the cone

  bool feasible() const { return outside.empty(); }
  double sup_norm() const { return feasible() ? values.cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity(); }
  double min_margin(const GridManifold& grid) const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < grid.size(); ++p) {
      if (!grid.on_boundary(p)) m = std::min(m, cone_margin[static_cast<Eigen::Index>(p)]);
    }
    return m;
  }
};

/// Validated problem with the background geometry precomputed once.
class HomotopyProblem {
 public:
  explicit HomotopyProblem(ProblemSpec spec) : spec_(std::move(spec)), bg_((spec_.validate(), spec_.g), spec_.t) {}

  const ProblemSpec& spec() const { return spec_; }
  const Background& background() const { return bg_; }
  const GridManifold& grid() const { return spec_.grid; }

  /// X = s Wbar + (1 - s) tr_g(Wbar) g at node p.
  SmallMat argument(const SmallMat& w, std::size_t p, double s) const {
    const SmallMat wbar = w - bg_.curv.schouten_t[p];
    const double tr = bg_.g.inverse(p).cwiseProduct(wbar).sum();
    return s * wbar + (1.0 - s) * tr * bg_.g[p];
  }

  double weight(std::size_t p, double s) const {
    return s * spec_.phi[static_cast<Eigen::Index>(p)] + 1.0 - s;
  }

  HomotopyResidual residual(const ScalarField& v, double s) const {
    check_s(s);
    const auto& grid = spec_.grid;
    const std::size_t N = grid.size();
    HomotopyResidual r;
    r.values = ScalarField::Zero(static_cast<Eigen::Index>(N));
    r.cone_margin = ScalarField::Zero(static_cast<Eigen::Index>(N));
    const TensorField w = deformation_tensor(v, bg_);
    for (std::size_t p = 0; p < N; ++p) {
      if (grid.on_boundary(p)) continue;
      const auto i = static_cast<Eigen::Index>(p);
      const SmallVec l = pencil_eigen(argument(w[p], p, s), bg_.g.cholesky(p)).values;
      r.cone_margin[i] = cone_contains(l, spec_.cone).margin;
      if (normalized_margin(l, spec_.cone.k) > kConeBoundaryTolerance) {
        r.values[i] = f_eval(l, spec_.cone) - weight(p, s) * std::exp(2.0 * v[i]);
      } else {
        r.values[i] = std::numeric_limits<double>::quiet_NaN();
        r.outside.push_back(p);
      }
    }
    const auto vn = normal_derivative(v, bg_.g, bg_.fd);
    for (Sheet sh : kSheets) {
      const int si = static_cast<int>(sh);
      for (std::size_t k = 0; k < grid.sheet_size(); ++k) {
        const std::size_t p = grid.sheet_node(sh, k);
        const auto i = static_cast<Eigen::Index>(k);
        r.values[static_cast<Eigen::Index>(p)] =
            vn[si].values[i] + bg_.h[si].values[i] - s * std::exp(v[static_cast<Eigen::Index>(p)]) * spec_.psi[si].values[i];
      }
    }
    return r;
  }

  /// Exact derivative of the discrete residual with respect to the nodal values of v.
  SparseMatrix jacobian(const ScalarField& v, double s) const {
    check_s(s);
    const auto& grid = spec_.grid;
    const int n = grid.dim();
    const std::size_t N = grid.size();
    const auto& fd = bg_.fd;
    const ScalarDerivatives d(v, fd);
    const auto c = deformation_coefficients(n, spec_.t);
    Triplets trip;
    trip.reserve(N * 40);
    auto add_row = [&](const SparseMatrix& m, std::size_t p, double coef) {
      if (coef == 0.0) return;
      for (SparseMatrix::InnerIterator it(m, static_cast<Eigen::Index>(p)); it; ++it) {
        trip.emplace_back(static_cast<int>(p), static_cast<int>(it.col()), coef * it.value());
      }
    };
    for (std::size_t p = 0; p < N; ++p) {
      const auto i = static_cast<Eigen::Index>(p);
      if (grid.on_boundary(p)) {
        const Sheet sh = grid.sheet_of(p);
        const SmallVec nu = unit_normal(bg_.g, p, sh);
        for (int m = 0; m < n; ++m) add_row(fd.d1(m), p, nu[m]);
        const double psi = spec_.psi[static_cast<int>(sh)].values[static_cast<Eigen::Index>(grid.sheet_position(p))];
        trip.emplace_back(static_cast<int>(p), static_cast<int>(p), -s * std::exp(v[i]) * psi);
        continue;
      }
      const SmallMat& gp = bg_.g[p];
      const SmallMat& ginv = bg_.g.inverse(p);
      const SmallVec grad = d.gradient(p, n);
      const Christoffel& gamma = bg_.curv.christoffel[p];
      const SmallMat w = deformation_at(d.hessian(p, n), grad, gamma, gp, ginv, spec_.t);
      const PencilEigen pe = pencil_eigen(argument(w, p, s), bg_.g.cholesky(p));
      if (!(normalized_margin(pe.values, spec_.cone.k) > kConeBoundaryTolerance)) {
        throw ConeViolation("linearize: argument outside the cone at node " + std::to_string(p),
                            cone_contains(pe.values, spec_.cone).margin, {p});
      }
      const FDerivatives fdv = f_grad_hess(pe.values, spec_.cone);
      // dF/dX for the symmetric spectral function
      const SmallMat dfdx = pe.l_inv.transpose() * pe.vectors * fdv.gradient.asDiagonal() * pe.vectors.transpose() * pe.l_inv;
      const SmallMat mcoef = s * dfdx + (1.0 - s) * dfdx.cwiseProduct(gp).sum() * ginv;
      const double mtrace = mcoef.cwiseProduct(gp).sum();
      const SmallMat second = mcoef + c.laplacian * mtrace * ginv;
      SmallVec first = SmallVec::Zero(n);
      for (int l = 0; l < n; ++l) first[l] = -second.cwiseProduct(gamma.upper[l]).sum();
      first += 2.0 * c.gradient * mtrace * (ginv * grad) - 2.0 * (mcoef * grad);
      for (int a = 0; a < n; ++a) {
        add_row(fd.d2(a, a), p, second(a, a));
        for (int b = a + 1; b < n; ++b) add_row(fd.d2(a, b), p, second(a, b) + second(b, a));
        add_row(fd.d1(a), p, first[a]);
      }
      trip.emplace_back(static_cast<int>(p), static_cast<int>(p), -2.0 * weight(p, s) * std::exp(2.0 * v[i]));
    }
    SparseMatrix j(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    j.setFromTriplets(trip.begin(), trip.end());
    return j;
  }

 private:
  static void check_s(double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw ParameterError("homotopy parameter s must lie in [0, 1]");
  }

  ProblemSpec spec_;
  Background bg_;
};

inline HomotopyResidual homotopy_residual(const ScalarField& v, double s, const ProblemSpec& spec) {
  return HomotopyProblem(spec).residual(v, s);
}

inline SparseMatrix linearize(const ScalarField& v, double s, const ProblemSpec& spec) {
  return HomotopyProblem(spec).jacobian(v, s);
}

namespace detail {

inline constexpr Eigen::Index kDirectSolveLimit = 4000;

inline ScalarField direct_solve(const Eigen::SparseMatrix<double>& a, const ScalarField& rhs) {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NonConvergence("linear solve: factorization failed", {});
  ScalarField x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw NonConvergence("linear solve failed", {});
  return x;
}

/// Sparse LU on small systems; ILUT-preconditioned BiCGSTAB on large ones,
/// falling back to LU when the Krylov solve stalls.
inline ScalarField sparse_solve(const SparseMatrix& a, const ScalarField& rhs) {
  Eigen::SparseMatrix<double> col(a);
  col.makeCompressed();
  if (col.rows() <= kDirectSolveLimit || !rhs.allFinite()) return direct_solve(col, rhs);
  Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> krylov;
  krylov.preconditioner().setDroptol(1e-4);
  krylov.preconditioner().setFillfactor(10);
  krylov.setTolerance(1e-12);
  krylov.setMaxIterations(500);
  krylov.compute(col);
  if (krylov.info() == Eigen::Success) {
    ScalarField x = krylov.solve(rhs);
    if (krylov.info() == Eigen::Success && x.allFinite()) return x;
  }
  return direct_solve(col, rhs);
}

inline HomotopyState make_state(const HomotopyProblem& prob, double s, const ScalarField& v,
                                const HomotopyResidual& r, int iters, std::vector<double> history) {
  return {s, v, iters, r.sup_norm(), r.min_margin(prob.grid()), std::move(history)};
}

}  // namespace detail

inline constexpr double kArmijo = 1e-4;
inline constexpr int kMaxHalvings = 40;

/// Damped Newton for the s-equation. Each step is halved until every
/// interior argument stays in the cone and the l2 residual satisfies the
/// Armijo condition; convergence is judged in the sup norm.
inline HomotopyState newton_solve(const HomotopyProblem& prob, double s, ScalarField v0) {
  const auto& spec = prob.spec();
  HomotopyResidual r = prob.residual(v0, s);
  // pre-damp an infeasible start toward v = 0
  for (int i = 0; i < 12 && !r.feasible(); ++i) {
    v0 *= i < 11 ? 0.5 : 0.0;
    r = prob.residual(v0, s);
  }
  if (!r.feasible()) throw Infeasible("newton_solve: no feasible starting point", r.outside);
  ScalarField v = std::move(v0);
  std::vector<double> history{r.sup_norm()};
  for (int it = 0; it < spec.max_newton; ++it) {
    if (r.sup_norm() <= spec.tol_newton) return detail::make_state(prob, s, v, r, it, std::move(history));
    ScalarField step;
    try {
      step = detail::sparse_solve(prob.jacobian(v, s), -r.values);
    } catch (const NonConvergence& e) {
      throw NonConvergence(e.what(), detail::make_state(prob, s, v, r, it, history));
    }
    const double norm2 = r.values.squaredNorm();
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, alpha *= 0.5) {
      ScalarField trial = v + alpha * step;
      HomotopyResidual rt = prob.residual(trial, s);
      if (!rt.feasible()) continue;
      if (rt.values.squaredNorm() <= (1.0 - 2.0 * kArmijo * alpha) * norm2 || rt.sup_norm() <= spec.tol_newton) {
        v = std::move(trial);
        r = std::move(rt);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw NonConvergence("newton_solve: line search failed at s = " + std::to_string(s),
                           detail::make_state(prob, s, v, r, it, history));
    }
    history.push_back(r.sup_norm());
  }
  if (r.sup_norm() <= spec.tol_newton) return detail::make_state(prob, s, v, r, spec.max_newton, std::move(history));
  throw NonConvergence("newton_solve: max_newton exceeded at s = " + std::to_string(s),
                       detail::make_state(prob, s, v, r, spec.max_newton, std::move(history)));
}

inline HomotopyState newton_solve(const ProblemSpec& spec, double s, const ScalarField& v0) {
  return newton_solve(HomotopyProblem(spec), s, v0);
}

/// Pseudo-transient continuation for the s = 0 equation: implicit Euler on
/// v_tau = F(v) in the interior with the boundary rows kept algebraic and the
/// pseudo time step grown as the residual falls. Stops once Newton can take over.
inline ScalarField pseudo_transient(const HomotopyProblem& prob, double s, ScalarField v, double target = 1e-3,
                                    int max_steps = 400) {
  const auto& grid = prob.grid();
  HomotopyResidual r = prob.residual(v, s);
  if (!r.feasible()) throw Infeasible("pseudo_transient: infeasible start", r.outside);
  double dtau = 1e-2;
  SparseMatrix mass(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(grid.size()));
  {
    Triplets t;
    for (std::size_t p = 0; p < grid.size(); ++p) {
      if (!grid.on_boundary(p)) t.emplace_back(static_cast<int>(p), static_cast<int>(p), 1.0);
    }
    mass.setFromTriplets(t.begin(), t.end());
  }
  for (int k = 0; k < max_steps && r.sup_norm() > target; ++k) {
    const SparseMatrix a = prob.jacobian(v, s) - mass / dtau;
    const ScalarField step = detail::sparse_solve(a, -r.values);
    double alpha = 1.0;
    HomotopyResidual rt;
    ScalarField trial;
    for (int h = 0; h < kMaxHalvings; ++h, alpha *= 0.5) {
      trial = v + alpha * step;
      rt = prob.residual(trial, s);
      if (rt.feasible()) break;
    }
    if (!rt.feasible()) {
      dtau *= 0.25;
      continue;
    }
    const double ratio = r.sup_norm() / rt.sup_norm();
    dtau = std::clamp(dtau * ratio, 1e-6, 1e12);
    v = std::move(trial);
    r = std::move(rt);
  }
  return v;
}

struct ContinuationResult {
  ScalarField solution;
  std::vector<HomotopyState> trace;
};

/// Solve the first scheduled s (normally 0) from v_init, then march to s = 1
/// warm-starting each step; a failed step is bisected down to spec.tol_path.
inline ContinuationResult continue_homotopy(const HomotopyProblem& prob, const ScalarField& v_init) {
  const auto& spec = prob.spec();
  ContinuationResult out;
  const double s0 = spec.homotopy_schedule.front();
  HomotopyState state;
  try {
    state = newton_solve(prob, s0, v_init);
  } catch (const Error&) {
    try {
      state = newton_solve(prob, s0, pseudo_transient(prob, s0, v_init));
    } catch (const Error& e) {
      throw ContinuationFailure("continue_homotopy: start solve at s = " + std::to_string(s0) + " failed: " + e.what(),
                                out.trace);
    }
  }
  out.trace.push_back(state);
  std::vector<double> targets(spec.homotopy_schedule.rbegin(), spec.homotopy_schedule.rend());
  targets.pop_back();  // start done
  while (!targets.empty()) {
    const double s = targets.back();
    try {
      state = newton_solve(prob, s, state.v);
      out.trace.push_back(state);
      targets.pop_back();
    } catch (const Error& e) {
      const double prev = out.trace.back().s;
      const double mid = 0.5 * (prev + s);
      if (mid - prev < spec.tol_path) {
        throw ContinuationFailure("continue_homotopy: step below tol_path at s = " + std::to_string(prev) + ": " +
                                      e.what(),
                                  out.trace);
      }
      targets.push_back(mid);
      state = out.trace.back();
    }
  }
  out.solution = state.v;
  return out;
}

inline ContinuationResult continue_homotopy(const ProblemSpec& spec, const ScalarField& v_init) {
  return continue_homotopy(HomotopyProblem(spec), v_init);
}

inline ContinuationResult continue_homotopy(const ProblemSpec& spec) {
  return continue_homotopy(spec, ScalarField::Zero(static_cast<Eigen::Index>(spec.grid.size())));
}

}  // namespace yamabe
