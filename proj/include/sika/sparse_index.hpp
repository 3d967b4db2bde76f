#pragma once

// Tensorized sparse indexing.
//
// For an input x in [0, 1] at most one interior function per level is nonzero:
// the one centred on the odd dyadic point closest to x. Its within-level index
// is t = floor((ceil(x 2^l) + 1) / 2), i.e. m = 2t - 1, so the whole activation
// pattern of a (B x D) batch is computed with elementwise integer arithmetic.
//
// Tensors with a (batch, feature, slot) shape are stored as row-major matrices
// with one row per (b, d) pair, row index b * D + d.

#include <sika/dyadic_grid.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace sika {

using IndexMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per (b, d, level) within-level index t in [1, 2^{l-1}].
struct IndexTensor {
  Eigen::Index batch = 0;
  Eigen::Index features = 0;
  int levels = 0;
  IndexMatrix t; // (batch * features) x levels; column l - 1 holds level l

  std::int64_t at(Eigen::Index b, Eigen::Index d, int l) const {
    return t(b * features + d, l - 1);
  }
};

/// Activated grid positions and basis values, L + 2 slots per (b, d).
/// Slots 0 and 1 are the boundary functions; slot l + 1 is the level-l function.
struct SparseActivation {
  Eigen::Index batch = 0;
  Eigen::Index features = 0;
  int level = 0;
  IndexMatrix indices;  // (batch * features) x (level + 2)
  RowMatrixXd values;   // (batch * features) x (level + 2)

  Eigen::Index slots() const { return level + 2; }
};

/// Throws DomainError unless every entry is in [0, 1].
void check_unit_interval(const Eigen::Ref<const Eigen::MatrixXd> &X);

IndexTensor tsi_indices(const Eigen::Ref<const Eigen::MatrixXd> &X, int level);

IndexMatrix assemble_global_indices(const IndexTensor &t);

SparseActivation sparse_features(const Eigen::Ref<const Eigen::MatrixXd> &X,
                                 const DyadicGrid &grid, double theta);

inline constexpr Eigen::Index kDenseFeatureCap = Eigen::Index{1} << 27;

/// Full feature rows, (batch * features) x M. For oracles and the dense benchmark path.
RowMatrixXd dense_features(const Eigen::Ref<const Eigen::MatrixXd> &X, const DyadicGrid &grid,
                           double theta, Eigen::Index max_entries = kDenseFeatureCap);

/// Scatter a sparse activation back into dense rows.
RowMatrixXd scatter(const SparseActivation &activation, Eigen::Index grid_size);

/// Rows of W (layout: feature-major, row d * M + position) selected by the activation indices.
/// Output row ((b * D + d) * (L + 2) + k) holds W.row(d * M + indices(b * D + d, k)).
Eigen::MatrixXd gather_weights(const Eigen::Ref<const Eigen::MatrixXd> &W,
                               const IndexMatrix &indices, Eigen::Index features,
                               Eigen::Index grid_size);

/// Writes gathered rows back into a W-shaped matrix (later writes win on repeated rows).
void scatter_weights(const Eigen::Ref<const Eigen::MatrixXd> &gathered, const IndexMatrix &indices,
                     Eigen::Index features, Eigen::Index grid_size, Eigen::Ref<Eigen::MatrixXd> W);

/// Per level, the odd m minimizing |x - m 2^-l|, ties toward the smaller m. Test oracle.
std::vector<long long> brute_force_indices(double x, int level);

} // namespace sika
