#include <sika/sparse_index.hpp>

#include <sika/errors.hpp>
#include <sika/kernel_basis.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace sika {

void check_unit_interval(const Eigen::Ref<const Eigen::MatrixXd> &X) {
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double x = X(i, j);
      if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError("input (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") = " + std::to_string(x) + " is outside [0, 1]; normalize first");
      }
    }
  }
}

namespace {

std::int64_t level_index_of(double x, int l) {
  const auto c = static_cast<std::int64_t>(std::ceil(std::ldexp(x, l)));
  const std::int64_t t = (c + 1) / 2;
  const std::int64_t t_max = std::int64_t{1} << (l - 1);
  // x = 0 gives t = 0; every interior function vanishes there, so any valid slot will do
  return t < 1 ? 1 : (t > t_max ? t_max : t);
}

} // namespace

IndexTensor tsi_indices(const Eigen::Ref<const Eigen::MatrixXd> &X, int level) {
  if (level < 1 || level > kMaxLevel) {
    throw ParameterError("dyadic level must be in [1, " + std::to_string(kMaxLevel) + "]");
  }
  check_unit_interval(X);
  IndexTensor out;
  out.batch = X.rows();
  out.features = X.cols();
  out.levels = level;
  out.t.resize(X.rows() * X.cols(), level);
  for (Eigen::Index b = 0; b < X.rows(); ++b) {
    for (Eigen::Index d = 0; d < X.cols(); ++d) {
      for (int l = 1; l <= level; ++l) {
        out.t(b * X.cols() + d, l - 1) = level_index_of(X(b, d), l);
      }
    }
  }
  return out;
}

IndexMatrix assemble_global_indices(const IndexTensor &t) {
  IndexMatrix J(t.t.rows(), t.levels + 2);
  for (Eigen::Index row = 0; row < t.t.rows(); ++row) {
    J(row, 0) = 0;
    J(row, 1) = 1;
    for (int l = 1; l <= t.levels; ++l) {
      J(row, l + 1) = ((std::int64_t{1} << (l - 1)) + 1) + (t.t(row, l - 1) - 1);
    }
  }
  return J;
}

SparseActivation sparse_features(const Eigen::Ref<const Eigen::MatrixXd> &X,
                                 const DyadicGrid &grid, double theta) {
  check_theta(theta);
  const int L = grid.level();
  const IndexTensor t = tsi_indices(X, L);

  std::vector<double> scales(static_cast<std::size_t>(L) + 1);
  for (int l = 1; l <= L; ++l) {
    scales[static_cast<std::size_t>(l)] = interior_scale(l, theta);
  }

  SparseActivation out;
  out.batch = X.rows();
  out.features = X.cols();
  out.level = L;
  out.indices = assemble_global_indices(t);
  out.values.resize(out.indices.rows(), L + 2);
  for (Eigen::Index b = 0; b < X.rows(); ++b) {
    for (Eigen::Index d = 0; d < X.cols(); ++d) {
      const Eigen::Index row = b * X.cols() + d;
      const double x = X(b, d);
      const auto boundary = eval_boundary_basis(x, theta);
      out.values(row, 0) = boundary.psi01;
      out.values(row, 1) = boundary.psi02;
      for (int l = 1; l <= L; ++l) {
        const long long m = 2 * t.t(row, l - 1) - 1;
        out.values(row, l + 1) = interior_value(scales[static_cast<std::size_t>(l)],
                                                interior_support<double>(l, m), x, theta);
      }
    }
  }
  return out;
}

RowMatrixXd dense_features(const Eigen::Ref<const Eigen::MatrixXd> &X, const DyadicGrid &grid,
                           double theta, Eigen::Index max_entries) {
  check_theta(theta);
  check_unit_interval(X);
  const Eigen::Index M = grid.size();
  const Eigen::Index rows = X.rows() * X.cols();
  if (rows > 0 && M > max_entries / rows) {
    throw ParameterError("dense feature tensor of " + std::to_string(rows) + " x " +
                         std::to_string(M) + " exceeds the configured cap");
  }

  std::vector<double> scales(static_cast<std::size_t>(M), 0.0);
  std::vector<InteriorSupport<double>> supports(static_cast<std::size_t>(M));
  for (Eigen::Index k = 2; k < M; ++k) {
    const auto [l, m] = grid.level_index(k);
    scales[static_cast<std::size_t>(k)] = interior_scale(l, theta);
    supports[static_cast<std::size_t>(k)] = interior_support<double>(l, m);
  }

  RowMatrixXd phi(rows, M);
  for (Eigen::Index b = 0; b < X.rows(); ++b) {
    for (Eigen::Index d = 0; d < X.cols(); ++d) {
      const Eigen::Index row = b * X.cols() + d;
      const double x = X(b, d);
      const auto boundary = eval_boundary_basis(x, theta);
      phi(row, 0) = boundary.psi01;
      phi(row, 1) = boundary.psi02;
      for (Eigen::Index k = 2; k < M; ++k) {
        phi(row, k) = interior_value(scales[static_cast<std::size_t>(k)],
                                     supports[static_cast<std::size_t>(k)], x, theta);
      }
    }
  }
  return phi;
}

RowMatrixXd scatter(const SparseActivation &activation, Eigen::Index grid_size) {
  RowMatrixXd dense = RowMatrixXd::Zero(activation.values.rows(), grid_size);
  for (Eigen::Index row = 0; row < activation.values.rows(); ++row) {
    for (Eigen::Index k = 0; k < activation.slots(); ++k) {
      dense(row, activation.indices(row, k)) = activation.values(row, k);
    }
  }
  return dense;
}

namespace {

void check_layout(Eigen::Index w_rows, const IndexMatrix &indices, Eigen::Index features,
                  Eigen::Index grid_size) {
  if (features <= 0 || w_rows != features * grid_size) {
    throw ParameterError("weight rows (" + std::to_string(w_rows) +
                         ") do not match features * grid size (" +
                         std::to_string(features * grid_size) + ")");
  }
  if (indices.rows() % features != 0) {
    throw ParameterError("index rows are not a multiple of the feature count");
  }
  if (indices.size() > 0 && (indices.minCoeff() < 0 || indices.maxCoeff() >= grid_size)) {
    throw ParameterError("activation index outside [0, grid size)");
  }
}

} // namespace

Eigen::MatrixXd gather_weights(const Eigen::Ref<const Eigen::MatrixXd> &W,
                               const IndexMatrix &indices, Eigen::Index features,
                               Eigen::Index grid_size) {
  check_layout(W.rows(), indices, features, grid_size);
  const Eigen::Index slots = indices.cols();
  Eigen::MatrixXd gathered(indices.rows() * slots, W.cols());
  for (Eigen::Index row = 0; row < indices.rows(); ++row) {
    const Eigen::Index d = row % features;
    for (Eigen::Index k = 0; k < slots; ++k) {
      gathered.row(row * slots + k) = W.row(d * grid_size + indices(row, k));
    }
  }
  return gathered;
}

void scatter_weights(const Eigen::Ref<const Eigen::MatrixXd> &gathered, const IndexMatrix &indices,
                     Eigen::Index features, Eigen::Index grid_size,
                     Eigen::Ref<Eigen::MatrixXd> W) {
  check_layout(W.rows(), indices, features, grid_size);
  const Eigen::Index slots = indices.cols();
  if (gathered.rows() != indices.rows() * slots || gathered.cols() != W.cols()) {
    throw ParameterError("gathered block shape does not match the index tensor");
  }
  for (Eigen::Index row = 0; row < indices.rows(); ++row) {
    const Eigen::Index d = row % features;
    for (Eigen::Index k = 0; k < slots; ++k) {
      W.row(d * grid_size + indices(row, k)) = gathered.row(row * slots + k);
    }
  }
}

std::vector<long long> brute_force_indices(double x, int level) {
  std::vector<long long> best(static_cast<std::size_t>(level));
  for (int l = 1; l <= level; ++l) {
    double best_distance = std::numeric_limits<double>::infinity();
    for (long long m = 1; m < (1LL << l); m += 2) {
      const double distance = std::abs(x - std::ldexp(static_cast<double>(m), -l));
      if (distance < best_distance) {
        best_distance = distance;
        best[static_cast<std::size_t>(l - 1)] = m;
      }
    }
  }
  return best;
}

} // namespace sika
