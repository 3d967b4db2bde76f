#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace sika {

inline constexpr int kMaxLevel = 20;

struct LevelIndex {
  int level; // 0 for the boundary block
  long long m;

  bool operator==(const LevelIndex &) const = default;
};

/// Inducing points {k 2^-L : k = 0..2^L} stored in dyadic order:
///   [0, 1 | 1/2 | 1/4, 3/4 | 1/8, 3/8, 5/8, 7/8 | ...]
/// Block l >= 1 holds the odd multiples m 2^-l in increasing m and starts at
/// position 2^{l-1} + 1. Positions are 0-based throughout.
class DyadicGrid {
public:
  explicit DyadicGrid(int level);

  int level() const { return level_; }
  Eigen::Index size() const { return points_.size(); }
  const Eigen::VectorXd &points() const { return points_; }

  /// offsets()[l] is the first position of block l; offsets()[0] == 0.
  const std::vector<Eigen::Index> &offsets() const { return offsets_; }

  /// Flat position of psi_{l,m}: (2^{l-1} + 1) + (m - 1) / 2.
  Eigen::Index position(int l, long long m) const;

  /// Inverse of position(). Positions 0 and 1 map to {0, 0} and {0, 1}.
  LevelIndex level_index(Eigen::Index position) const;

  bool operator==(const DyadicGrid &other) const { return level_ == other.level_; }

private:
  int level_;
  Eigen::VectorXd points_;
  std::vector<Eigen::Index> offsets_;
};

DyadicGrid build_grid(int level);

inline Eigen::Index grid_size(int level) { return (Eigen::Index{1} << level) + 1; }

} // namespace sika
