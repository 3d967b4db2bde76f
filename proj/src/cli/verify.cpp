#include <sika/cli.hpp>

#include <sika/errors.hpp>
#include <sika/kernel_basis.hpp>
#include <sika/sparse_index.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <random>

namespace sika::cli {

namespace {

double max_abs(const Eigen::MatrixXd &m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

long long random_odd(int l, Rng &rng) {
  std::uniform_int_distribution<long long> pick(0, (1LL << (l - 1)) - 1);
  return 2 * pick(rng) + 1;
}

SuiteResult gram_identity(bool flip_theta_sign) {
  SuiteResult r{"gram-identity", true, 0.0, 1e-8, ""};
  for (int L = 1; L <= 6; ++L) {
    for (double theta : {0.5, 1.0, 2.0}) {
      const double t = flip_theta_sign ? -theta : theta;
      const LaplaceKernel<double> kernel(t);
      const auto templates = template_basis_expansions(L, t, kernel);
      const auto closed = closed_form_expansions(DyadicGrid(L), t);
      const auto M = static_cast<Eigen::Index>(templates.size());
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(M, M);
      const double e1 = max_abs(rkhs_gram<double>(templates, kernel) - I);
      const double e2 = max_abs(rkhs_gram<double>(closed, kernel) - I);
      r.worst = std::max({r.worst, e1, e2});
    }
  }
  return r;
}

SuiteResult template_oracle(int trials, Rng &rng) {
  SuiteResult r{"template-oracle", true, 0.0, 1e-9, ""};
  std::uniform_int_distribution<int> level(1, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0), theta_dist(0.1, 5.0);
  for (int i = 0; i < trials; ++i) {
    const int l = level(rng);
    const long long m = random_odd(l, rng);
    const double x = unit(rng);
    const double theta = theta_dist(rng);
    const LaplaceKernel<double> kernel(theta);
    const auto coeffs = dyadic_template<double>(l, m, kernel);
    const double err =
        std::abs(eval_interior_basis(l, m, x, theta) - eval_template_basis(coeffs, x, kernel));
    r.worst = std::max(r.worst, err);
  }
  return r;
}

SuiteResult nystrom(int trials, Rng &rng) {
  SuiteResult r{"nystrom", true, 0.0, 1e-8, ""};
  double grid_worst = 0.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0), theta_dist(0.2, 4.0);
  for (int L = 1; L <= 6; ++L) {
    const DyadicGrid grid(L);
    const double theta = theta_dist(rng);
    const NystromApproximation approx(grid, theta);
    for (int i = 0; i < std::max(1, trials / 6); ++i) {
      Eigen::MatrixXd xy(2, 1);
      xy << unit(rng), unit(rng);
      const RowMatrixXd phi = dense_features(xy, grid, theta);
      const double err = std::abs(phi.row(0).dot(phi.row(1)) - approx(xy(0, 0), xy(1, 0)));
      r.worst = std::max(r.worst, err);
    }
    // at inducing points the approximation reproduces the kernel itself
    const auto &U = grid.points();
    for (Eigen::Index i = 0; i < U.size(); ++i) {
      for (Eigen::Index j = 0; j < U.size(); ++j) {
        grid_worst = std::max(grid_worst,
                              std::abs(approx(U(i), U(j)) - laplace_kernel(U(i), U(j), theta)));
      }
    }
  }
  if (grid_worst > 1e-10) {
    r.passed = false;
    r.detail = "kernel mismatch at inducing points: " + std::to_string(grid_worst);
  }
  return r;
}

SuiteResult tsi_vs_brute_force(int trials, Rng &rng) {
  SuiteResult r{"tsi-brute-force", true, 0.0, 0.0, ""};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long mismatches = 0;
  for (int i = 0; i < trials * 10; ++i) {
    const double x = unit(rng);
    const int L = 12;
    Eigen::MatrixXd X(1, 1);
    X << x;
    const IndexTensor t = tsi_indices(X, L);
    const auto brute = brute_force_indices(x, L);
    for (int l = 1; l <= L; ++l) {
      const long long m_brute = brute[static_cast<std::size_t>(l - 1)];
      const long long m_tsi = 2 * t.at(0, 0, l) - 1;
      if (m_tsi != m_brute && eval_interior_basis(l, m_brute, x, 1.0) != 0.0) {
        ++mismatches;
      }
    }
  }
  for (int L : {1, 4, 8}) {
    const DyadicGrid grid(L);
    Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(16, 3, [&] { return unit(rng); });
    const RowMatrixXd scattered = scatter(sparse_features(X, grid, 1.3), grid.size());
    const RowMatrixXd dense = dense_features(X, grid, 1.3);
    if (scattered != dense) {
      ++mismatches;
      r.detail = "scattered sparse activations differ from dense at L=" + std::to_string(L);
    }
  }
  r.worst = static_cast<double>(mismatches);
  return r;
}

SuiteResult dense_vs_sparse(Rng &rng) {
  SuiteResult r{"dense-vs-sparse", true, 0.0, 1e-12, ""};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int L : {1, 3, 6}) {
    const VariationalLayer layer = init_layer({4, 3, L, 0.8}, rng);
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(9, 4, [&] { return unit(rng); });
    for (ForwardMode mode : {ForwardMode::mean, ForwardMode::sample, ForwardMode::flipout}) {
      const LayerNoise noise = draw_noise(layer, X.rows(), mode, rng);
      const Eigen::MatrixXd a = forward_sparse(layer, X, noise);
      const Eigen::MatrixXd b = forward_dense(layer, X, noise);
      r.worst = std::max(r.worst, max_abs(a - b) / std::max(1.0, max_abs(b)));
    }
  }
  return r;
}

SuiteResult gradients(Rng &rng) {
  SuiteResult r{"gradients", true, 0.0, 1e-3, ""};
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  for (int trial = 0; trial < 3; ++trial) {
    ModelSpec spec;
    spec.layers = {{2, 3, 3, 1.0}, {3, 1, 2, 1.5}};
    const Model model = init_model(spec, rng);
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(5, 2, [&] { return unit(rng); });
    const Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(5, [&] { return unit(rng); });
    std::vector<ModelNoise> noises;
    for (int s = 0; s < 2; ++s) {
      noises.push_back(
          draw_model_noise(model, X.rows(), trial == 0 ? ForwardMode::sample : ForwardMode::flipout, rng));
    }
    r.worst = std::max(r.worst, elbo_gradient_error(model, X, y, noises, 0.1));
  }
  return r;
}

SuiteResult guarded(const std::string &name, double tolerance, const std::function<SuiteResult()> &fn) {
  try {
    SuiteResult r = fn();
    r.passed = r.passed && r.worst <= r.tolerance && std::isfinite(r.worst);
    return r;
  } catch (const std::exception &e) {
    return {name, false, std::numeric_limits<double>::infinity(), tolerance,
            std::string("threw: ") + e.what()};
  }
}

} // namespace

double elbo_gradient_error(const Model &model, const Eigen::MatrixXd &X, const Eigen::VectorXd &y,
                           const std::vector<ModelNoise> &noises, double kl_scale, double step,
                           double floor) {
  ElboTerms terms = elbo_minibatch(model, X, y, noises, kl_scale);
  const auto analytic = gradient_views(terms.grads, model);
  auto rel = [floor](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
  };

  double worst = 0.0;
  Model work = model;
  const auto params = parameter_views(work);
  for (std::size_t v = 0; v < params.size(); ++v) {
    for (Eigen::Index i = 0; i < params[v].size; ++i) {
      double &p = params[v].data[i];
      const double saved = p;
      p = saved + step;
      const double up = elbo_minibatch(work, X, y, noises, kl_scale).loss;
      p = saved - step;
      const double down = elbo_minibatch(work, X, y, noises, kl_scale).loss;
      p = saved;
      worst = std::max(worst, rel(analytic[v].data[i], (up - down) / (2.0 * step)));
    }
  }
  Eigen::MatrixXd Xp = X;
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double saved = Xp.data()[i];
    Xp.data()[i] = saved + step;
    const double up = elbo_minibatch(model, Xp, y, noises, kl_scale).loss;
    Xp.data()[i] = saved - step;
    const double down = elbo_minibatch(model, Xp, y, noises, kl_scale).loss;
    Xp.data()[i] = saved;
    worst = std::max(worst, rel(terms.grads.input.data()[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

std::vector<SuiteResult> run_verify(const VerifyOptions &options) {
  Rng rng(options.seed);
  std::vector<SuiteResult> results;
  results.push_back(guarded("gram-identity", 1e-8,
                            [&] { return gram_identity(options.flip_theta_sign); }));
  results.push_back(guarded("template-oracle", 1e-9, [&] { return template_oracle(options.trials, rng); }));
  results.push_back(guarded("nystrom", 1e-8, [&] { return nystrom(options.trials, rng); }));
  results.push_back(guarded("tsi-brute-force", 0.0, [&] { return tsi_vs_brute_force(options.trials, rng); }));
  results.push_back(guarded("dense-vs-sparse", 1e-12, [&] { return dense_vs_sparse(rng); }));
  results.push_back(guarded("gradients", 1e-3, [&] { return gradients(rng); }));
  return results;
}

int cmd_verify(const VerifyOptions &options, std::ostream &log) {
  const auto results = run_verify(options);
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %-6s %12s %12s\n", "suite", "status", "worst", "tolerance");
  log << line;
  bool ok = true;
  for (const auto &r : results) {
    std::snprintf(line, sizeof line, "%-18s %-6s %12.3e %12.3e", r.name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.worst, r.tolerance);
    log << line;
    if (!r.detail.empty() && !r.passed) {
      log << "  " << r.detail;
    }
    log << '\n';
    ok = ok && r.passed;
  }
  if (!ok) {
    for (const auto &r : results) {
      if (!r.passed) {
        log << "failed invariant: " << r.name << '\n';
      }
    }
  }
  return ok ? 0 : 1;
}

} // namespace sika::cli
