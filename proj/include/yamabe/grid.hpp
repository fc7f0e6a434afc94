#pragma once

// Structured grid over M = T^{n-1} x [0,1] and its finite-difference operators.
//
// Axes 0..n-2 are periodic with period `period`; axis n-1 is the normal
// coordinate y_n in [0,1], node-centred with nodes at both boundary sheets.

#include <Eigen/Sparse>
#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "yamabe/errors.hpp"
#include "yamabe/linalg.hpp"

namespace yamabe {

using ScalarField = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplets = std::vector<Eigen::Triplet<double>>;

enum class Sheet { Lower = 0, Upper = 1 };

inline constexpr std::array<Sheet, 2> kSheets{Sheet::Lower, Sheet::Upper};

/// Sign of the outward normal along +y_n on a sheet.
inline double outward_sign(Sheet s) { return s == Sheet::Lower ? -1.0 : 1.0; }

inline const char* sheet_name(Sheet s) { return s == Sheet::Lower ? "lower" : "upper"; }

class GridManifold {
 public:
  GridManifold() = default;

  /// n-dimensional slab with `points` nodes per axis.
  static GridManifold slab(int n, int points, double period = 1.0) {
    return GridManifold(std::vector<int>(static_cast<std::size_t>(n), points), period);
  }

  /// Spacing 1/cells on every axis: `cells` periodic nodes tangentially and
  /// cells + 1 nodes across, so doubling `cells` halves every mesh width.
  static GridManifold uniform(int n, int cells) {
    std::vector<int> shape(static_cast<std::size_t>(n), cells);
    shape.back() = cells + 1;
    return GridManifold(std::move(shape));
  }

  GridManifold(std::vector<int> shape, double period = 1.0)
      : shape_(std::move(shape)), period_(period) {
    n_ = static_cast<int>(shape_.size());
    if (n_ < 3 || n_ > kMaxDim) {
      throw DomainError("GridManifold: dimension " + std::to_string(n_) + " outside [3, " +
                        std::to_string(kMaxDim) + "]");
    }
    if (!(period_ > 0.0)) throw DomainError("GridManifold: period must be positive");
    size_ = 1;
    for (int a = 0; a < n_; ++a) {
      if (shape_[static_cast<std::size_t>(a)] < 8) {
        throw DomainError("GridManifold: at least 8 nodes per axis required");
      }
      size_ *= static_cast<std::size_t>(shape_[static_cast<std::size_t>(a)]);
    }
    spacing_.resize(static_cast<std::size_t>(n_));
    for (int a = 0; a < n_ - 1; ++a) spacing_[static_cast<std::size_t>(a)] = period_ / shape_[static_cast<std::size_t>(a)];
    spacing_.back() = 1.0 / (shape_.back() - 1);
    strides_.assign(static_cast<std::size_t>(n_), 1);
    for (int a = n_ - 2; a >= 0; --a) {
      strides_[static_cast<std::size_t>(a)] =
          strides_[static_cast<std::size_t>(a) + 1] * static_cast<std::size_t>(shape_[static_cast<std::size_t>(a) + 1]);
    }
  }

  int dim() const { return n_; }
  int normal_axis() const { return n_ - 1; }
  bool periodic(int axis) const { return axis < n_ - 1; }
  std::size_t size() const { return size_; }
  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& spacing() const { return spacing_; }
  int points(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  double h(int axis) const { return spacing_[static_cast<std::size_t>(axis)]; }
  double period() const { return period_; }

  std::size_t index(const std::array<int, kMaxDim>& multi) const {
    std::size_t idx = 0;
    for (int a = 0; a < n_; ++a) idx += static_cast<std::size_t>(multi[static_cast<std::size_t>(a)]) * strides_[static_cast<std::size_t>(a)];
    return idx;
  }

  std::array<int, kMaxDim> multi_index(std::size_t node) const {
    std::array<int, kMaxDim> m{};
    for (int a = 0; a < n_; ++a) {
      m[static_cast<std::size_t>(a)] = static_cast<int>(node / strides_[static_cast<std::size_t>(a)]);
      node %= strides_[static_cast<std::size_t>(a)];
    }
    return m;
  }

  int axis_index(std::size_t node, int axis) const {
    return static_cast<int>((node / strides_[static_cast<std::size_t>(axis)]) %
                            static_cast<std::size_t>(shape_[static_cast<std::size_t>(axis)]));
  }

  /// Node reached by moving `offset` steps along `axis` (periodic wrap on
  /// tangential axes; no wrap on the normal axis, caller keeps it in range).
  std::size_t shift(std::size_t node, int axis, int offset) const {
    const int i = axis_index(node, axis);
    const int np = points(axis);
    int j = i + offset;
    if (periodic(axis)) j = ((j % np) + np) % np;
    return node + static_cast<std::size_t>(static_cast<long>(j - i) * static_cast<long>(strides_[static_cast<std::size_t>(axis)]));
  }

  double coordinate(std::size_t node, int axis) const { return axis_index(node, axis) * h(axis); }

  SmallVec position(std::size_t node) const {
    SmallVec x(n_);
    for (int a = 0; a < n_; ++a) x[a] = coordinate(node, a);
    return x;
  }

  int normal_index(std::size_t node) const { return axis_index(node, n_ - 1); }
  bool on_boundary(std::size_t node) const {
    const int j = normal_index(node);
    return j == 0 || j == shape_.back() - 1;
  }
  Sheet sheet_of(std::size_t node) const {
    return normal_index(node) == 0 ? Sheet::Lower : Sheet::Upper;
  }

  /// Number of nodes on one boundary sheet.
  std::size_t sheet_size() const { return size_ / static_cast<std::size_t>(shape_.back()); }

  /// Node of the k-th point of a sheet (sheet nodes ordered by tangential index).
  std::size_t sheet_node(Sheet s, std::size_t k) const {
    const std::size_t j = s == Sheet::Lower ? 0 : static_cast<std::size_t>(shape_.back() - 1);
    return k * static_cast<std::size_t>(shape_.back()) + j;
  }

  /// Inverse of sheet_node for a node lying on a sheet.
  std::size_t sheet_position(std::size_t node) const {
    return node / static_cast<std::size_t>(shape_.back());
  }

  /// Distance to the nearer sheet in the y_n coordinate.
  double normal_depth(std::size_t node) const {
    const double y = coordinate(node, n_ - 1);
    return std::min(y, 1.0 - y);
  }

  bool operator==(const GridManifold& o) const {
    return shape_ == o.shape_ && period_ == o.period_;
  }

 private:
  int n_ = 0;
  std::vector<int> shape_;
  std::vector<double> spacing_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
  double period_ = 1.0;
};

/// Values on the nodes of one boundary sheet.
struct BoundaryField {
  Sheet sheet = Sheet::Lower;
  Eigen::VectorXd values;

  static BoundaryField constant(const GridManifold& grid, Sheet s, double c) {
    return {s, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.sheet_size()), c)};
  }
};

using BoundaryPair = std::array<BoundaryField, 2>;

inline BoundaryPair boundary_constant(const GridManifold& grid, double c) {
  return {BoundaryField::constant(grid, Sheet::Lower, c), BoundaryField::constant(grid, Sheet::Upper, c)};
}

/// Restriction of a nodal field to a sheet.
inline BoundaryField restrict_to_sheet(const GridManifold& grid, const ScalarField& f, Sheet s) {
  BoundaryField b{s, Eigen::VectorXd(static_cast<Eigen::Index>(grid.sheet_size()))};
  for (std::size_t k = 0; k < grid.sheet_size(); ++k) b.values[static_cast<Eigen::Index>(k)] = f[static_cast<Eigen::Index>(grid.sheet_node(s, k))];
  return b;
}

/// Finite-difference operators as sparse matrices acting on nodal vectors.
/// Second-order centred differences in the interior and along periodic axes.
/// On the boundary sheets first and pure second derivatives use second-order
/// one-sided stencils.
class FiniteDifference {
 public:
  explicit FiniteDifference(const GridManifold& grid) : grid_(grid) {
    const int n = grid.dim();
    first_.resize(static_cast<std::size_t>(n));
    second_.resize(static_cast<std::size_t>(n * n));
    for (int a = 0; a < n; ++a) first_[static_cast<std::size_t>(a)] = build_first(a);
    for (int a = 0; a < n; ++a) {
      for (int b = a; b < n; ++b) {
        SparseMatrix m = a == b ? build_pure_second(a) : SparseMatrix(first_[static_cast<std::size_t>(a)] * first_[static_cast<std::size_t>(b)]);
        m.prune(0.0);
        second_[static_cast<std::size_t>(a * n + b)] = m;
        if (a != b) second_[static_cast<std::size_t>(b * n + a)] = m;
      }
    }
  }

  const GridManifold& grid() const { return grid_; }
  const SparseMatrix& d1(int a) const { return first_[static_cast<std::size_t>(a)]; }
  const SparseMatrix& d2(int a, int b) const { return second_[static_cast<std::size_t>(a * grid_.dim() + b)]; }

  /// Gradient components at every node: result[a] = d_a f.
  std::vector<ScalarField> gradient(const ScalarField& f) const {
    std::vector<ScalarField> out(static_cast<std::size_t>(grid_.dim()));
    for (int a = 0; a < grid_.dim(); ++a) out[static_cast<std::size_t>(a)] = d1(a) * f;
    return out;
  }

  /// Second partials at every node: result[a*n+b] = d_a d_b f.
  std::vector<ScalarField> second(const ScalarField& f) const {
    const int n = grid_.dim();
    std::vector<ScalarField> out(static_cast<std::size_t>(n * n));
    for (int a = 0; a < n; ++a) {
      for (int b = a; b < n; ++b) {
        out[static_cast<std::size_t>(a * n + b)] = d2(a, b) * f;
        out[static_cast<std::size_t>(b * n + a)] = out[static_cast<std::size_t>(a * n + b)];
      }
    }
    return out;
  }

 private:
  SparseMatrix build_first(int a) const {
    const std::size_t N = grid_.size();
    const double h = grid_.h(a);
    const int np = grid_.points(a);
    Triplets t;
    t.reserve(3 * N);
    for (std::size_t p = 0; p < N; ++p) {
      const int i = grid_.axis_index(p, a);
      const auto row = static_cast<int>(p);
      auto add = [&](int off, double w) { t.emplace_back(row, static_cast<int>(grid_.shift(p, a, off)), w / h); };
      if (grid_.periodic(a) || (i > 0 && i < np - 1)) {
        add(-1, -0.5);
        add(1, 0.5);
      } else if (i == 0) {
        add(0, -1.5);
        add(1, 2.0);
        add(2, -0.5);
      } else {
        add(0, 1.5);
        add(-1, -2.0);
        add(-2, 0.5);
      }
    }
    SparseMatrix m(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  SparseMatrix build_pure_second(int a) const {
    const std::size_t N = grid_.size();
    const double h2 = grid_.h(a) * grid_.h(a);
    const int np = grid_.points(a);
    Triplets t;
    t.reserve(4 * N);
    for (std::size_t p = 0; p < N; ++p) {
      const int i = grid_.axis_index(p, a);
      const auto row = static_cast<int>(p);
      auto add = [&](int off, double w) { t.emplace_back(row, static_cast<int>(grid_.shift(p, a, off)), w / h2); };
      if (grid_.periodic(a) || (i > 0 && i < np - 1)) {
        add(-1, 1.0);
        add(0, -2.0);
        add(1, 1.0);
      } else {
        const int dir = i == 0 ? 1 : -1;
        add(0, 2.0);
        add(dir, -5.0);
        add(2 * dir, 4.0);
        add(3 * dir, -1.0);
      }
    }
    SparseMatrix m(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  GridManifold grid_;
  std::vector<SparseMatrix> first_;
  std::vector<SparseMatrix> second_;
};

}  // namespace yamabe
