#pragma once

// Elementary symmetric functions, Garding cones and the admissible
// curvature function f = sigma_k^{1/k} together with its derivatives.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "yamabe/errors.hpp"
#include "yamabe/linalg.hpp"

namespace yamabe {

/// f_eval refuses points whose scale-free cone margin does not exceed this value.
inline constexpr double kConeBoundaryTolerance = 1e-12;

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

namespace detail {

/// sigma_j for j = 0..n (index = order); entries beyond n are zero.
inline std::array<double, kMaxDim + 1> sigmas(const SmallVec& lambda) {
  const int n = static_cast<int>(lambda.size());
  std::array<double, kMaxDim + 1> acc{};
  acc[0] = 1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j >= 1; --j) acc[j] += lambda[i] * acc[j - 1];
  }
  return acc;
}

/// sigma_j of lambda with the listed entries removed; j may be 0 or negative.
inline double sigma_without(const SmallVec& lambda, int j, int skip_a, int skip_b = -1) {
  if (j < 0) return 0.0;
  if (j == 0) return 1.0;
  std::array<double, kMaxDim + 1> acc{};
  acc[0] = 1.0;
  for (int i = 0; i < lambda.size(); ++i) {
    if (i == skip_a || i == skip_b) continue;
    for (int m = j; m >= 1; --m) acc[m] += lambda[i] * acc[m - 1];
  }
  return acc[j];
}

}  // namespace detail

/// k-th elementary symmetric polynomial.
inline double sigma_k(const SmallVec& lambda, int k) {
  const int n = static_cast<int>(lambda.size());
  if (k < 1 || k > n) {
    throw DomainError("sigma_k: order k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(n) + "]");
  }
  return detail::sigmas(lambda)[k];
}

/// (f, Gamma) pair of the sigma_k^{1/k} family plus hypothesis metadata.
struct ConePair {
  int k = 1;
  int n = 3;
  /// Constant of the level-set hypothesis; defaults to the Maclaurin bound
  /// min(n / C(n,k)^{1/k}, C(n,k)^{1/k}) when left non-positive.
  double epsilon_bar = 0.0;
  int sample_budget = 200;
  std::string family = "sigma_k_root";

  void validate() const {
    if (n < 3 || n > kMaxDim) {
      throw DomainError("ConePair: dimension n=" + std::to_string(n) + " outside [3, " +
                        std::to_string(kMaxDim) + "]");
    }
    if (k < 1 || k > n) {
      throw DomainError("ConePair: order k=" + std::to_string(k) + " outside [1, n]");
    }
  }

  double effective_epsilon_bar() const {
    if (epsilon_bar > 0.0) return epsilon_bar;
    const double c = std::pow(binomial(n, k), 1.0 / k);
    return std::min(n / c, c);
  }
};

struct ConeMembership {
  bool inside = false;
  double margin = 0.0;  ///< min_{j<=k} sigma_j, signed
};

inline ConeMembership cone_contains(const SmallVec& lambda, const ConePair& cone) {
  if (cone.k < 1 || cone.k > lambda.size()) {
    throw DomainError("cone_contains: order k outside [1, n]");
  }
  const auto s = detail::sigmas(lambda);
  double margin = s[1];
  for (int j = 2; j <= cone.k; ++j) margin = std::min(margin, s[j]);
  return {margin > 0.0, margin};
}

/// min_j sigma_j(lambda / |lambda|_inf): the cone margin of the point
/// rescaled to unit sup norm, so the boundary test does not depend on scale.
inline double normalized_margin(const SmallVec& lambda, int k) {
  const double scale = lambda.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return 0.0;
  const auto s = detail::sigmas(lambda / scale);
  double margin = s[1];
  for (int j = 2; j <= k; ++j) margin = std::min(margin, s[j]);
  return margin;
}

inline double f_eval(const SmallVec& lambda, const ConePair& cone) {
  const auto m = cone_contains(lambda, cone);
  if (!(normalized_margin(lambda, cone.k) > kConeBoundaryTolerance)) {
    throw ConeViolation("f_eval: eigenvalues outside Gamma_" + std::to_string(cone.k), m.margin);
  }
  return std::pow(sigma_k(lambda, cone.k), 1.0 / cone.k);
}

struct FDerivatives {
  double value = 0.0;
  SmallVec gradient;
  SmallMat hessian;
  /// Set when the cone margin is below the conditioning tolerance.
  bool near_boundary = false;
};

/// Analytic gradient and Hessian of sigma_k^{1/k}.
inline FDerivatives f_grad_hess(const SmallVec& lambda, const ConePair& cone,
                                double conditioning_tolerance = 1e-8) {
  const int n = static_cast<int>(lambda.size());
  const int k = cone.k;
  const auto m = cone_contains(lambda, cone);
  const double normalized = normalized_margin(lambda, k);
  if (!(normalized > kConeBoundaryTolerance)) {
    throw ConeViolation("f_grad_hess: eigenvalues outside Gamma_" + std::to_string(k), m.margin);
  }
  const double sk = sigma_k(lambda, k);
  FDerivatives out;
  out.value = std::pow(sk, 1.0 / k);
  out.near_boundary = normalized < conditioning_tolerance;

  SmallVec ds(n);
  SmallMat d2s = SmallMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    ds[i] = detail::sigma_without(lambda, k - 1, i);
    for (int j = i + 1; j < n; ++j) {
      d2s(i, j) = d2s(j, i) = detail::sigma_without(lambda, k - 2, i, j);
    }
  }
  // f = s^{1/k}:  f' = f/(k s) ds,  f'' = f/(k s) [d2s + (1/k - 1) ds ds^T / s]
  const double c = out.value / (k * sk);
  out.gradient = c * ds;
  out.hessian = c * (d2s + (1.0 / k - 1.0) * (ds * ds.transpose()) / sk);
  return out;
}

// ---------------------------------------------------------------------------
// Pluggable admissible pairs

/// An admissible (f, Gamma) pair. The solver only talks to this interface.
class ConeFunction {
 public:
  virtual ~ConeFunction() = default;
  virtual std::string name() const = 0;
  virtual int dimension() const = 0;
  virtual ConeMembership contains(const SmallVec& lambda) const = 0;
  virtual double value(const SmallVec& lambda) const = 0;
  virtual FDerivatives derivatives(const SmallVec& lambda) const = 0;
};

class SigmaRootFunction final : public ConeFunction {
 public:
  explicit SigmaRootFunction(ConePair cone) : cone_(std::move(cone)) { cone_.validate(); }

  std::string name() const override { return "sigma_" + std::to_string(cone_.k) + "^(1/k)"; }
  int dimension() const override { return cone_.n; }
  ConeMembership contains(const SmallVec& lambda) const override {
    return cone_contains(lambda, cone_);
  }
  double value(const SmallVec& lambda) const override { return f_eval(lambda, cone_); }
  FDerivatives derivatives(const SmallVec& lambda) const override {
    return f_grad_hess(lambda, cone_);
  }
  const ConePair& cone() const { return cone_; }

 private:
  ConePair cone_;
};

using ConeFunctionFactory = std::function<std::shared_ptr<const ConeFunction>(const ConePair&)>;

namespace detail {
struct ConeRegistry {
  std::mutex mutex;
  std::map<std::string, ConeFunctionFactory> factories{
      {"sigma_k_root", [](const ConePair& c) -> std::shared_ptr<const ConeFunction> {
         return std::make_shared<SigmaRootFunction>(c);
       }}};
};
inline ConeRegistry& cone_registry() {
  static ConeRegistry registry;
  return registry;
}
}  // namespace detail

/// Registers an additional admissible family under `family`.
inline void register_cone_family(const std::string& family, ConeFunctionFactory factory) {
  auto& reg = detail::cone_registry();
  std::lock_guard lock(reg.mutex);
  reg.factories[family] = std::move(factory);
}

inline std::shared_ptr<const ConeFunction> make_cone_function(const ConePair& cone) {
  auto& reg = detail::cone_registry();
  std::lock_guard lock(reg.mutex);
  auto it = reg.factories.find(cone.family);
  if (it == reg.factories.end()) throw DomainError("unknown cone family '" + cone.family + "'");
  return it->second(cone);
}

// ---------------------------------------------------------------------------
// Hypothesis checks on random samples

struct ViolationStat {
  double worst = 0.0;  ///< worst observed value of the checked quantity
  int count = 0;       ///< samples beyond tolerance
};

struct HypothesisReport {
  int samples = 0;
  std::uint64_t seed = 0;
  double certified_epsilon_bar = 0.0;
  double configured_epsilon_bar = 0.0;
  ViolationStat homogeneity;   ///< relative |f(s l) - s f(l)|
  ViolationStat concavity;     ///< max Hessian eigenvalue / scale
  ViolationStat monotonicity;  ///< -min gradient entry
  ViolationStat f3_upper;      ///< f - sigma_1 / eps on the level set {f = 1}
  ViolationStat f3_trace;      ///< eps - sum f_i on the level set
  ViolationStat symmetry;      ///< relative change of f under permutations
  ViolationStat nesting;       ///< samples of Gamma_k outside Gamma_1

  int total_violations() const {
    return homogeneity.count + concavity.count + monotonicity.count + f3_upper.count +
           f3_trace.count + symmetry.count + nesting.count;
  }
  bool passed() const { return total_violations() == 0; }
};

inline void to_json(nlohmann::json& j, const ViolationStat& v) {
  j = nlohmann::json{{"worst", v.worst}, {"count", v.count}};
}

inline void to_json(nlohmann::json& j, const HypothesisReport& r) {
  j = nlohmann::json{
      {"samples", r.samples},
      {"seed", r.seed},
      {"certified_epsilon_bar", r.certified_epsilon_bar},
      {"configured_epsilon_bar", r.configured_epsilon_bar},
      {"passed", r.passed()},
      {"violations",
       {{"homogeneity", r.homogeneity},
        {"concavity", r.concavity},
        {"monotonicity", r.monotonicity},
        {"f3_upper", r.f3_upper},
        {"f3_trace", r.f3_trace},
        {"symmetry", r.symmetry},
        {"nesting", r.nesting},
        {"total", r.total_violations()}}}};
}

/// Rejection sampler for the open cone of `cone` from the box [-1, 2]^n.
class ConeSampler {
 public:
  ConeSampler(const ConePair& cone, std::uint64_t seed) : cone_(cone), rng_(seed) {}

  SmallVec next() {
    std::uniform_real_distribution<double> box(-1.0, 2.0);
    for (int attempt = 0; attempt < 100000; ++attempt) {
      SmallVec l(cone_.n);
      for (int i = 0; i < cone_.n; ++i) l[i] = box(rng_);
      if (cone_contains(l, cone_).margin > 1e-6) return l;
    }
    throw DomainError("ConeSampler: rejection sampling did not find a cone point");
  }

 private:
  ConePair cone_;
  std::mt19937_64 rng_;
};

inline HypothesisReport check_hypotheses(const ConePair& cone, int samples, std::uint64_t seed) {
  if (samples < 1) throw DomainError("check_hypotheses: samples must be >= 1");
  cone.validate();
  const auto fn = make_cone_function(cone);
  const int n = cone.n;
  HypothesisReport rep;
  rep.samples = samples;
  rep.seed = seed;
  rep.configured_epsilon_bar = cone.effective_epsilon_bar();
  rep.certified_epsilon_bar = std::numeric_limits<double>::infinity();

  constexpr double kHomogeneityTol = 1e-12;
  constexpr double kConcavityTol = 1e-8;
  constexpr double kSymmetryTol = 1e-12;
  const double eps = rep.configured_epsilon_bar;

  auto record = [](ViolationStat& stat, double value, double tol) {
    stat.worst = std::max(stat.worst, value);
    if (value > tol) ++stat.count;
  };

  ConeSampler sampler(cone, seed);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::mt19937_64 perm_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (int s = 0; s < samples; ++s) {
    const SmallVec l = sampler.next();
    const FDerivatives d = fn->derivatives(l);
    const double f = d.value;

    for (double scale : {1e-6, 1.0, 1e6}) {
      const double fs = fn->value(scale * l);
      record(rep.homogeneity, std::abs(fs - scale * f) / (scale * f), kHomogeneityTol);
    }

    Eigen::SelfAdjointEigenSolver<SmallMat> es(d.hessian);
    const double hscale = std::max(d.hessian.norm(), f / l.squaredNorm());
    record(rep.concavity, es.eigenvalues().maxCoeff() / hscale, kConcavityTol);

    record(rep.monotonicity, -d.gradient.minCoeff(), 0.0);

    // Level set {f = 1}: degree-0 homogeneity of the gradient makes the
    // normalized point carry the same sum f_i.
    const SmallVec unit = l / f;
    const double s1 = unit.sum();
    const double trace = d.gradient.sum();
    record(rep.f3_upper, 1.0 - s1 / eps, 1e-12);
    record(rep.f3_trace, eps - trace, 1e-12);
    rep.certified_epsilon_bar = std::min({rep.certified_epsilon_bar, s1, trace});

    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), perm_rng);
    SmallVec p(n);
    for (int i = 0; i < n; ++i) p[i] = l[perm[static_cast<std::size_t>(i)]];
    record(rep.symmetry, std::abs(fn->value(p) - f) / f, kSymmetryTol);

    record(rep.nesting, l.sum() > 0.0 ? 0.0 : 1.0, 0.0);
  }
  return rep;
}

}  // namespace yamabe
