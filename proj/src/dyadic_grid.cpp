#include <sika/dyadic_grid.hpp>
#include <sika/errors.hpp>

#include <cmath>
#include <string>

namespace sika {

DyadicGrid::DyadicGrid(int level) : level_(level) {
  if (level < 1 || level > kMaxLevel) {
    throw ParameterError("dyadic level must be in [1, " + std::to_string(kMaxLevel) + "], got " +
                         std::to_string(level));
  }
  points_.resize(grid_size(level));
  points_(0) = 0.0;
  points_(1) = 1.0;
  offsets_.assign(static_cast<std::size_t>(level) + 1, 0);
  Eigen::Index pos = 2;
  for (int l = 1; l <= level; ++l) {
    offsets_[static_cast<std::size_t>(l)] = pos;
    for (long long m = 1; m < (1LL << l); m += 2) {
      points_(pos++) = std::ldexp(static_cast<double>(m), -l);
    }
  }
}

Eigen::Index DyadicGrid::position(int l, long long m) const {
  if (l < 1 || l > level_ || m < 1 || m >= (1LL << l) || m % 2 == 0) {
    throw ParameterError("invalid (l, m) = (" + std::to_string(l) + ", " + std::to_string(m) +
                         ") for a level-" + std::to_string(level_) + " grid");
  }
  return ((Eigen::Index{1} << (l - 1)) + 1) + (m - 1) / 2;
}

LevelIndex DyadicGrid::level_index(Eigen::Index position) const {
  if (position < 0 || position >= size()) {
    throw ParameterError("grid position " + std::to_string(position) + " out of range");
  }
  if (position < 2) {
    return {0, static_cast<long long>(position)};
  }
  // block l covers [2^{l-1} + 1, 2^l]
  int l = 1;
  while ((Eigen::Index{1} << l) < position) {
    ++l;
  }
  const Eigen::Index within = position - ((Eigen::Index{1} << (l - 1)) + 1);
  return {l, 2 * within + 1};
}

DyadicGrid build_grid(int level) { return DyadicGrid(level); }

} // namespace sika
