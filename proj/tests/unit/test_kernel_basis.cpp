#include <sika/errors.hpp>
#include <sika/kernel_basis.hpp>
#include <sika/sparse_index.hpp>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace sika;

// Reference values below were computed with 40-digit mpmath arithmetic.

TEST_CASE("laplace kernel and its Gauss-Markov factorization agree") {
  const auto pq = laplace_factorization(1.7);
  const LaplaceKernel<double> k(1.7);
  for (double x : {0.0, 0.2, 0.9}) {
    for (double y : {0.0, 0.45, 1.0}) {
      CHECK(pq(x, y) == doctest::Approx(k(x, y)).epsilon(1e-14));
    }
  }
  CHECK(laplace_kernel(0.3, 0.3, 2.0) == 1.0);
  CHECK_THROWS_AS(LaplaceKernel<double>(0.0), ParameterError);
  CHECK_THROWS_AS(LaplaceKernel<double>(-1.0), ParameterError);
  CHECK_THROWS_AS(LaplaceKernel<double>(kMaxTheta * 2), ParameterError);
  CHECK_THROWS_AS(LaplaceKernel<double>(std::nan("")), ParameterError);
}

TEST_CASE("boundary basis values") {
  const auto v = eval_boundary_basis(0.0, 1.0);
  CHECK(v.psi01 == doctest::Approx(0.8270064815862818).epsilon(1e-14));
  CHECK(v.psi02 == doctest::Approx(0.5621923864784001).epsilon(1e-14));
  // reflection symmetry about 1/2
  const auto a = eval_boundary_basis(0.2, 0.7);
  const auto b = eval_boundary_basis(0.8, 0.7);
  CHECK(a.psi01 == doctest::Approx(b.psi01).epsilon(1e-15));
  CHECK(a.psi02 == doctest::Approx(-b.psi02).epsilon(1e-15));
  CHECK_THROWS_AS(eval_boundary_basis(-0.01, 1.0), DomainError);
  CHECK_THROWS_AS(eval_boundary_basis(1.01, 1.0), DomainError);
}

TEST_CASE("interior basis values and support") {
  CHECK(eval_interior_basis(1, 1, 0.5, 1.0) == doctest::Approx(0.6797919955839505).epsilon(1e-14));
  CHECK(eval_interior_basis(3, 3, 0.3, 2.0) == doctest::Approx(0.19623659541367992).epsilon(1e-14));
  CHECK(eval_interior_basis(3, 3, 0.25, 2.0) == 0.0);
  CHECK(eval_interior_basis(3, 3, 0.5, 2.0) == 0.0);
  CHECK(eval_interior_basis(3, 3, 0.9, 2.0) == 0.0);
  CHECK_THROWS_AS(eval_interior_basis(3, 4, 0.3, 2.0), ParameterError);
  CHECK_THROWS_AS(eval_interior_basis(3, 9, 0.3, 2.0), ParameterError);
}

TEST_CASE("right-hand derivative at the peak") {
  CHECK(basis_derivative(2, 1, 0.25, 1.5) ==
        doctest::Approx(-2.5057230702554793).epsilon(1e-13));
  // left of the peak the slope is positive and mirrors the right slope
  const double left = basis_derivative(2, 1, 0.25 - 1e-12, 1.5);
  CHECK(left == doctest::Approx(2.5057230702554793).epsilon(1e-9));
  // finite differences away from breakpoints
  const double h = 1e-6;
  for (double x : {0.05, 0.3, 0.41}) {
    const double fd =
        (eval_interior_basis(2, 1, x + h, 1.5) - eval_interior_basis(2, 1, x - h, 1.5)) / (2 * h);
    CHECK(basis_derivative(2, 1, x, 1.5) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("template coefficients") {
  const LaplaceKernel<double> k(1.0);
  const auto t = template_coefficients(0.25, 0.5, 0.75, k);
  CHECK(t.B == doctest::Approx(2.020640533364011).epsilon(1e-13));
  CHECK(t.A == doctest::Approx(-0.9795495779527812).epsilon(1e-13));
  CHECK(t.C == doctest::Approx(t.A).epsilon(1e-14));
  // vanishes outside [a, c]
  CHECK(std::abs(eval_template_basis(t, 0.1, k)) < 1e-14);
  CHECK(std::abs(eval_template_basis(t, 0.9, k)) < 1e-14);
  CHECK_THROWS_AS(template_coefficients(0.5, 0.25, 0.75, k), ParameterError);
  // nearly coincident anchors make K3 singular
  CHECK_THROWS_AS(template_coefficients(0.5, 0.5 + 1e-13, 0.5 + 2e-13, k), NumericalError);
}

TEST_CASE("closed form equals the template construction") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const int l = 1 + static_cast<int>(rng() % 7);
    const long long m = 2 * static_cast<long long>(rng() % (1ULL << (l - 1))) + 1;
    const double x = unit(rng);
    const double theta = 0.1 + 4.9 * unit(rng);
    const LaplaceKernel<double> k(theta);
    const auto t = dyadic_template<double>(l, m, k);
    CHECK(std::abs(eval_interior_basis(l, m, x, theta) - eval_template_basis(t, x, k)) < 1e-9);
  }
}

TEST_CASE("basis is orthonormal in the RKHS") {
  for (double theta : {0.5, 2.0}) {
    const LaplaceKernel<double> k(theta);
    const auto basis = template_basis_expansions(4, theta, k);
    const auto G = rkhs_gram<double>(basis, k);
    CHECK(G.rows() == 17);
    CHECK((G - Eigen::MatrixXd::Identity(17, 17)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("closed-form route reproduces the template route") {
  const DyadicGrid grid(3);
  const LaplaceKernel<double> k(1.2);
  const auto closed = closed_form_expansions(grid, 1.2);
  const auto G = rkhs_gram<double>(closed, k);
  CHECK((G - Eigen::MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-10);
  // the interpolated functions match the closed form off the grid too
  for (std::size_t j = 0; j < closed.size(); ++j) {
    double value = 0.0;
    for (std::size_t i = 0; i < closed[j].anchors.size(); ++i) {
      value += closed[j].coefficients[i] * k(0.3, closed[j].anchors[i]);
    }
    const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 0.3);
    CHECK(value == doctest::Approx(dense_features(x, grid, 1.2)(0, static_cast<Eigen::Index>(j)))
                       .epsilon(1e-10));
  }
}

TEST_CASE("Nystrom approximation matches the feature inner product") {
  const DyadicGrid g2(2);
  CHECK(nystrom_kernel(0.1, 0.8, g2, 2.0) == doctest::Approx(0.24659696394160648).epsilon(1e-13));
  const DyadicGrid g5(5);
  CHECK(nystrom_kernel(0.3, 0.3, g5, 1.0) == doctest::Approx(0.9850011717620961).epsilon(1e-13));
  const NystromApproximation n(g5, 1.0);
  CHECK(n(0.25, 0.625) == doctest::Approx(std::exp(-0.375)).epsilon(1e-12));
}

TEST_CASE("templates instantiate for long double") {
  const LaplaceKernel<long double> k(1.0L);
  const auto t = template_coefficients<long double>(0.25L, 0.5L, 0.75L, k);
  CHECK(static_cast<double>(t.B) == doctest::Approx(2.020640533364011).epsilon(1e-15));
  const long double v = eval_interior_basis<long double>(1, 1, 0.5L, 1.0L);
  CHECK(static_cast<double>(v) == doctest::Approx(0.6797919955839505).epsilon(1e-15));
}
