#pragma once

// Laplace-kernel orthonormal basis on [0, 1].
//
// The interior functions psi_{l,m} are piecewise-sinh tents supported on
// [(m-1) 2^-l, (m+1) 2^-l]; together with the two boundary functions psi_01 and
// psi_02 they form an orthonormal basis (in the RKHS of the Laplace kernel) of
// span{K(., u) : u in the level-L dyadic grid}.
//
// The general Gauss-Markov "template" construction (three-point kernel
// combinations vanishing outside [a, c]) is kept alongside as an independent
// route to the same functions; the test suites compare the two.

#include <sika/dyadic_grid.hpp>
#include <sika/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sika {

inline constexpr double kMaxTheta = 100.0;
inline constexpr double kMaxConditionNumber = 1e12;

template <typename Scalar> void check_theta(Scalar theta) {
  if (!std::isfinite(static_cast<double>(theta)) || !(theta > Scalar(0)) ||
      theta > Scalar(kMaxTheta)) {
    throw ParameterError("theta must be finite and in (0, " + std::to_string(kMaxTheta) +
                         "], got " + std::to_string(static_cast<double>(theta)));
  }
}

template <typename Scalar> Scalar laplace_kernel(Scalar x, Scalar y, Scalar theta) {
  check_theta(theta);
  using std::abs;
  using std::exp;
  return exp(-theta * abs(x - y));
}

template <typename Scalar = double> struct LaplaceKernel {
  Scalar theta;

  explicit LaplaceKernel(Scalar theta_) : theta(theta_) { check_theta(theta); }

  Scalar operator()(Scalar x, Scalar y) const {
    using std::abs;
    using std::exp;
    return exp(-theta * abs(x - y));
  }
};

/// Covariance of a Gauss-Markov process written as K(x, y) = p(min(x, y)) q(max(x, y)).
template <typename Scalar = double> struct GaussMarkovFactorization {
  std::function<Scalar(Scalar)> p;
  std::function<Scalar(Scalar)> q;

  Scalar operator()(Scalar x, Scalar y) const {
    return p(std::min(x, y)) * q(std::max(x, y));
  }
};

template <typename Scalar = double>
GaussMarkovFactorization<Scalar> laplace_factorization(Scalar theta) {
  check_theta(theta);
  using std::exp;
  return {[theta](Scalar t) { return exp(theta * t); },
          [theta](Scalar t) { return exp(-theta * t); }};
}

// ---------------------------------------------------------------------------
// Closed-form basis functions

template <typename Scalar> struct BoundaryValues {
  Scalar psi01;
  Scalar psi02;
};

template <typename Scalar> BoundaryValues<Scalar> eval_boundary_basis(Scalar x, Scalar theta) {
  check_theta(theta);
  if (!(x >= Scalar(0) && x <= Scalar(1))) {
    throw DomainError("boundary basis input must lie in [0, 1], got " +
                      std::to_string(static_cast<double>(x)));
  }
  using std::exp;
  using std::sqrt;
  const Scalar left = exp(-theta * x);
  const Scalar right = exp(-theta * (Scalar(1) - x));
  const Scalar tail = exp(-theta);
  return {(left + right) / sqrt(Scalar(2) * (Scalar(1) + tail)),
          (left - right) / sqrt(Scalar(2) * (Scalar(1) - tail))};
}

/// d/dx of the two boundary functions.
template <typename Scalar>
BoundaryValues<Scalar> boundary_derivative(Scalar x, Scalar theta) {
  check_theta(theta);
  using std::exp;
  using std::sqrt;
  const Scalar left = exp(-theta * x);
  const Scalar right = exp(-theta * (Scalar(1) - x));
  const Scalar tail = exp(-theta);
  return {theta * (right - left) / sqrt(Scalar(2) * (Scalar(1) + tail)),
          -theta * (left + right) / sqrt(Scalar(2) * (Scalar(1) - tail))};
}

inline void check_level_index(int l, long long m) {
  if (l < 1 || l > kMaxLevel) {
    throw ParameterError("basis level must be in [1, " + std::to_string(kMaxLevel) + "], got " +
                         std::to_string(l));
  }
  const long long count = 1LL << l;
  if (m < 1 || m > count - 1 || m % 2 == 0) {
    throw ParameterError("basis index m must be odd in [1, 2^l - 1]; got l=" + std::to_string(l) +
                         ", m=" + std::to_string(m));
  }
}

template <typename Scalar> struct InteriorSupport {
  Scalar lo;
  Scalar peak;
  Scalar hi;
};

template <typename Scalar> InteriorSupport<Scalar> interior_support(int l, long long m) {
  using std::ldexp;
  return {ldexp(Scalar(m - 1), -l), ldexp(Scalar(m), -l), ldexp(Scalar(m + 1), -l)};
}

/// Normalizing constant sqrt(2 / sinh(2^{1-l} theta)) shared by every function of level l.
template <typename Scalar> Scalar interior_scale(int l, Scalar theta) {
  using std::ldexp;
  using std::sinh;
  using std::sqrt;
  return sqrt(Scalar(2) / sinh(ldexp(theta, 1 - l)));
}

// Unchecked evaluation. Every caller (scalar API, sparse and dense feature maps)
// goes through this so the three agree bit for bit.
template <typename Scalar>
Scalar interior_value(Scalar scale, const InteriorSupport<Scalar> &s, Scalar x, Scalar theta) {
  using std::sinh;
  if (x < s.lo || x > s.hi) {
    return Scalar(0);
  }
  return x <= s.peak ? scale * sinh(theta * (x - s.lo)) : scale * sinh(theta * (s.hi - x));
}

template <typename Scalar>
Scalar interior_slope(Scalar scale, const InteriorSupport<Scalar> &s, Scalar x, Scalar theta) {
  using std::cosh;
  // right-hand derivative: the closed interval [lo, hi) carries the nonzero slope
  if (x < s.lo || x >= s.hi) {
    return Scalar(0);
  }
  return x < s.peak ? theta * scale * cosh(theta * (x - s.lo))
                    : -theta * scale * cosh(theta * (s.hi - x));
}

template <typename Scalar> Scalar eval_interior_basis(int l, long long m, Scalar x, Scalar theta) {
  check_theta(theta);
  check_level_index(l, m);
  return interior_value(interior_scale(l, theta), interior_support<Scalar>(l, m), x, theta);
}

/// Right-hand derivative of psi_{l,m} at x.
template <typename Scalar> Scalar basis_derivative(int l, long long m, Scalar x, Scalar theta) {
  check_theta(theta);
  check_level_index(l, m);
  return interior_slope(interior_scale(l, theta), interior_support<Scalar>(l, m), x, theta);
}

// ---------------------------------------------------------------------------
// Template basis for general Gauss-Markov kernels

template <typename Scalar = double> struct TemplateCoefficients {
  Scalar a, b, c;
  Scalar A, B, C;
};

/// Solves K3 (AB, B^2, BC)^T = e2 for the unique unit-norm function
/// A K(., a) + B K(., b) + C K(., c) vanishing outside [a, c], with B > 0.
/// The 3x3 inverse column is formed from cofactors.
template <typename Scalar, typename Kernel>
TemplateCoefficients<Scalar> template_coefficients(Scalar a, Scalar b, Scalar c,
                                                   const Kernel &kernel) {
  if (!(Scalar(0) <= a && a < b && b < c && c <= Scalar(1))) {
    throw ParameterError("template anchors must satisfy 0 <= a < b < c <= 1");
  }
  const Scalar k11 = kernel(a, a), k12 = kernel(a, b), k13 = kernel(a, c);
  const Scalar k22 = kernel(b, b), k23 = kernel(b, c), k33 = kernel(c, c);

  Eigen::Matrix<Scalar, 3, 3> k3;
  k3 << k11, k12, k13, k12, k22, k23, k13, k23, k33;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> eig;
  eig.computeDirect(k3, Eigen::EigenvaluesOnly);
  const Scalar lambda_min = eig.eigenvalues()(0);
  const Scalar lambda_max = eig.eigenvalues()(2);
  if (!(lambda_min > Scalar(0)) || lambda_max / lambda_min > Scalar(kMaxConditionNumber)) {
    throw NumericalError("template kernel matrix is singular or ill-conditioned (cond > 1e12)");
  }

  const Scalar det = k11 * (k22 * k33 - k23 * k23) - k12 * (k12 * k33 - k23 * k13) +
                     k13 * (k12 * k23 - k22 * k13);
  const Scalar inv12 = -(k12 * k33 - k13 * k23) / det;
  const Scalar inv22 = (k11 * k33 - k13 * k13) / det;
  const Scalar inv32 = -(k11 * k23 - k12 * k13) / det;
  if (!(inv22 > Scalar(0))) {
    throw NumericalError("template kernel matrix is not positive definite");
  }
  using std::sqrt;
  const Scalar B = sqrt(inv22);
  return {a, b, c, inv12 / B, B, inv32 / B};
}

template <typename Scalar, typename Kernel>
Scalar eval_template_basis(const TemplateCoefficients<Scalar> &coeffs, Scalar x,
                           const Kernel &kernel) {
  return coeffs.A * kernel(x, coeffs.a) + coeffs.B * kernel(x, coeffs.b) +
         coeffs.C * kernel(x, coeffs.c);
}

/// Template function phi_{b - 2^-l, b, b + 2^-l} with b = m 2^-l; equals psi_{l,m}.
template <typename Scalar, typename Kernel>
TemplateCoefficients<Scalar> dyadic_template(int l, long long m, const Kernel &kernel) {
  check_level_index(l, m);
  const auto s = interior_support<Scalar>(l, m);
  return template_coefficients(s.lo, s.peak, s.hi, kernel);
}

// ---------------------------------------------------------------------------
// RKHS inner products

/// f = sum_i coefficients[i] K(., anchors[i]).
template <typename Scalar = double> struct KernelExpansion {
  std::vector<Scalar> anchors;
  std::vector<Scalar> coefficients;
};

template <typename Scalar>
KernelExpansion<Scalar> to_expansion(const TemplateCoefficients<Scalar> &t) {
  return {{t.a, t.b, t.c}, {t.A, t.B, t.C}};
}

/// psi_01 and psi_02 as combinations of K(., 0) and K(., 1).
template <typename Scalar> std::pair<KernelExpansion<Scalar>, KernelExpansion<Scalar>>
boundary_expansions(Scalar theta) {
  check_theta(theta);
  using std::exp;
  using std::sqrt;
  const Scalar tail = exp(-theta);
  const Scalar even = Scalar(1) / sqrt(Scalar(2) * (Scalar(1) + tail));
  const Scalar odd = Scalar(1) / sqrt(Scalar(2) * (Scalar(1) - tail));
  return {{{Scalar(0), Scalar(1)}, {even, even}}, {{Scalar(0), Scalar(1)}, {odd, -odd}}};
}

/// Gram matrix <f_i, f_j> = c_i^T K(anchors, anchors) c_j over the union of anchor points.
template <typename Scalar, typename Kernel>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
rkhs_gram(std::span<const KernelExpansion<Scalar>> basis, const Kernel &kernel) {
  std::map<Scalar, Eigen::Index> anchor_slot;
  for (const auto &f : basis) {
    if (f.anchors.size() != f.coefficients.size()) {
      throw ParameterError("kernel expansion has mismatched anchor/coefficient counts");
    }
    for (Scalar a : f.anchors) {
      anchor_slot.emplace(a, 0);
    }
  }
  std::vector<Scalar> anchors;
  anchors.reserve(anchor_slot.size());
  for (auto &[value, slot] : anchor_slot) {
    slot = static_cast<Eigen::Index>(anchors.size());
    anchors.push_back(value);
  }

  const auto n = static_cast<Eigen::Index>(anchors.size());
  const auto count = static_cast<Eigen::Index>(basis.size());
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix coeffs = Matrix::Zero(n, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    const auto &f = basis[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < f.anchors.size(); ++i) {
      coeffs(anchor_slot.at(f.anchors[i]), j) += f.coefficients[i];
    }
  }
  Matrix gram_kernel(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      gram_kernel(i, j) = kernel(anchors[static_cast<std::size_t>(i)],
                                 anchors[static_cast<std::size_t>(j)]);
    }
  }
  return coeffs.transpose() * gram_kernel * coeffs;
}

/// Boundary pair followed by every psi_{l,m} built from template coefficients, in dyadic order.
template <typename Scalar, typename Kernel>
std::vector<KernelExpansion<Scalar>> template_basis_expansions(int level, Scalar theta,
                                                               const Kernel &kernel) {
  auto [even, odd] = boundary_expansions(theta);
  std::vector<KernelExpansion<Scalar>> basis{even, odd};
  for (int l = 1; l <= level; ++l) {
    for (long long m = 1; m < (1LL << l); m += 2) {
      basis.push_back(to_expansion(dyadic_template<Scalar>(l, m, kernel)));
    }
  }
  return basis;
}

// ---------------------------------------------------------------------------
// Nystrom route: K(x, U) K(U, U)^{-1} K(U, y) by a dense solve.

class NystromApproximation {
public:
  NystromApproximation(const DyadicGrid &grid, double theta);

  double operator()(double x, double y) const;

  /// Coefficients alpha with f = K(., U) alpha interpolating the given values at the grid points.
  Eigen::VectorXd interpolation_weights(const Eigen::VectorXd &values_at_grid) const;

  const Eigen::MatrixXd &kernel_matrix() const { return kernel_matrix_; }

private:
  Eigen::VectorXd cross(double x) const;

  Eigen::VectorXd points_;
  double theta_;
  Eigen::MatrixXd kernel_matrix_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
};

double nystrom_kernel(double x, double y, const DyadicGrid &grid, double theta);

/// Every closed-form basis function of the grid (dyadic order), evaluated at every grid point.
/// Column k holds phi_k(U).
Eigen::MatrixXd closed_form_basis_at_grid(const DyadicGrid &grid, double theta);

/// The closed-form basis written as kernel expansions over the grid, obtained by interpolating
/// each function at the grid points.
std::vector<KernelExpansion<double>> closed_form_expansions(const DyadicGrid &grid, double theta);

} // namespace sika
