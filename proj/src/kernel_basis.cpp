#include <sika/kernel_basis.hpp>

namespace sika {

NystromApproximation::NystromApproximation(const DyadicGrid &grid, double theta)
    : points_(grid.points()), theta_(theta) {
  check_theta(theta);
  const Eigen::Index n = points_.size();
  kernel_matrix_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kernel_matrix_(i, j) = std::exp(-theta * std::abs(points_(i) - points_(j)));
    }
  }
  factor_.compute(kernel_matrix_);
  if (factor_.info() != Eigen::Success) {
    throw NumericalError("inducing kernel matrix K(U, U) is not positive definite");
  }
}

Eigen::VectorXd NystromApproximation::cross(double x) const {
  return (-theta_ * (points_.array() - x).abs()).exp().matrix();
}

double NystromApproximation::operator()(double x, double y) const {
  return cross(x).dot(factor_.solve(cross(y)));
}

Eigen::VectorXd
NystromApproximation::interpolation_weights(const Eigen::VectorXd &values_at_grid) const {
  if (values_at_grid.size() != points_.size()) {
    throw ParameterError("interpolation values must have one entry per grid point");
  }
  return factor_.solve(values_at_grid);
}

double nystrom_kernel(double x, double y, const DyadicGrid &grid, double theta) {
  return NystromApproximation(grid, theta)(x, y);
}

Eigen::MatrixXd closed_form_basis_at_grid(const DyadicGrid &grid, double theta) {
  const Eigen::Index n = grid.size();
  Eigen::MatrixXd values(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = grid.points()(i);
    const auto boundary = eval_boundary_basis(u, theta);
    values(i, 0) = boundary.psi01;
    values(i, 1) = boundary.psi02;
    for (Eigen::Index k = 2; k < n; ++k) {
      const auto [l, m] = grid.level_index(k);
      values(i, k) = eval_interior_basis(l, m, u, theta);
    }
  }
  return values;
}

std::vector<KernelExpansion<double>> closed_form_expansions(const DyadicGrid &grid,
                                                            double theta) {
  const NystromApproximation nystrom(grid, theta);
  const Eigen::MatrixXd values = closed_form_basis_at_grid(grid, theta);
  const std::vector<double> anchors(grid.points().data(),
                                    grid.points().data() + grid.points().size());
  std::vector<KernelExpansion<double>> basis;
  basis.reserve(static_cast<std::size_t>(grid.size()));
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    const Eigen::VectorXd weights = nystrom.interpolation_weights(values.col(k));
    basis.push_back({anchors, std::vector<double>(weights.data(), weights.data() + weights.size())});
  }
  return basis;
}

} // namespace sika
