#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>

namespace yamabe {

/// Largest supported manifold dimension. Small per-node objects use
/// fixed-capacity storage so field loops never touch the heap.
inline constexpr int kMaxDim = 5;

using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using SmallMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

/// Per-node eigenvalue vector (sorted ascending when produced by rel_eigenvalues).
using EigenVector = SmallVec;

inline SmallMat symmetrize(const SmallMat& a) { return 0.5 * (a + a.transpose()); }

/// Lower Cholesky factor of a symmetric matrix, or nullopt if it is not
/// numerically positive definite.
inline std::optional<SmallMat> cholesky_lower(const SmallMat& g) {
  Eigen::LLT<SmallMat> llt(g);
  if (llt.info() != Eigen::Success) return std::nullopt;
  SmallMat l = llt.matrixL();
  for (int i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) return std::nullopt;
  }
  return l;
}

/// Spectral decomposition of the pencil (a, g) with g = L L^T:
/// g^{-1} a = L^{-T} Q diag(values) Q^T L^T.
struct PencilEigen {
  SmallVec values;   ///< ascending
  SmallMat vectors;  ///< columns of Q, orthonormal eigenvectors of L^{-1} a L^{-T}
  SmallMat l_inv;    ///< L^{-1}
};

inline PencilEigen pencil_eigen(const SmallMat& a, const SmallMat& l) {
  const int n = static_cast<int>(a.rows());
  SmallMat l_inv = l.triangularView<Eigen::Lower>().solve(SmallMat::Identity(n, n));
  SmallMat whitened = symmetrize(l_inv * a * l_inv.transpose());
  Eigen::SelfAdjointEigenSolver<SmallMat> es(whitened);
  return {es.eigenvalues(), es.eigenvectors(), l_inv};
}

inline double max_abs_entry(const SmallMat& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace yamabe
