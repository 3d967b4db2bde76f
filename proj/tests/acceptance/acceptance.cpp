// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <sika/cli.hpp>
#include <sika/errors.hpp>
#include <sika/eval_metrics.hpp>
#include <sika/kernel_basis.hpp>
#include <sika/sparse_index.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace sika;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char *format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

double max_abs(const Eigen::MatrixXd &m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

long long random_odd(int l, Rng &rng) {
  std::uniform_int_distribution<long long> pick(0, (1LL << (l - 1)) - 1);
  return 2 * pick(rng) + 1;
}

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("sika_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome orthonormality() {
  double worst = 0.0;
  for (int L = 1; L <= 6; ++L) {
    for (double theta : {0.5, 1.0, 2.0}) {
      const LaplaceKernel<double> kernel(theta);
      const auto templates = template_basis_expansions(L, theta, kernel);
      const auto closed = closed_form_expansions(DyadicGrid(L), theta);
      const auto M = static_cast<Eigen::Index>(closed.size());
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(M, M);
      worst = std::max({worst, max_abs(rkhs_gram<double>(templates, kernel) - I),
                        max_abs(rkhs_gram<double>(closed, kernel) - I)});
    }
  }
  return {worst < 1e-8, fmt("max |Gram - I| = %.3e (tol 1e-8)", worst)};
}

Outcome closed_form_vs_templates() {
  Rng rng(101);
  std::uniform_int_distribution<int> level(1, 10);
  std::uniform_real_distribution<double> unit(0.0, 1.0), theta_dist(0.05, 10.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int l = level(rng);
    const long long m = random_odd(l, rng);
    const double theta = theta_dist(rng);
    // half the draws land inside the support, where the function is nonzero
    const auto s = interior_support<double>(l, m);
    const double x = i % 2 == 0 ? unit(rng) : s.lo + (s.hi - s.lo) * unit(rng);
    const LaplaceKernel<double> kernel(theta);
    const double a = std::ldexp(static_cast<double>(m - 1), -l);
    const double b = std::ldexp(static_cast<double>(m), -l);
    const double c = std::ldexp(static_cast<double>(m + 1), -l);
    const auto coeffs = template_coefficients(a, b, c, kernel);
    worst = std::max(worst, std::abs(eval_interior_basis(l, m, x, theta) -
                                     eval_template_basis(coeffs, x, kernel)));
  }
  return {worst < 1e-9, fmt("max abs difference = %.3e over 1000 draws (tol 1e-9)", worst)};
}

Outcome nystrom_reproduction() {
  Rng rng(202);
  std::uniform_int_distribution<int> level(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::vector<double> thetas{0.5, 1.0, 2.0, 5.0};
  std::uniform_int_distribution<std::size_t> pick_theta(0, thetas.size() - 1);
  std::map<std::pair<int, double>, NystromApproximation> cache;
  auto approx_for = [&](int L, double theta) -> const NystromApproximation & {
    auto it = cache.find({L, theta});
    if (it == cache.end()) {
      it = cache.emplace(std::make_pair(L, theta), NystromApproximation(DyadicGrid(L), theta)).first;
    }
    return it->second;
  };

  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int L = level(rng);
    const double theta = thetas[pick_theta(rng)];
    const DyadicGrid grid(L);
    Eigen::MatrixXd xy(2, 1);
    xy << unit(rng), unit(rng);
    const RowMatrixXd phi = dense_features(xy, grid, theta);
    worst = std::max(worst, std::abs(phi.row(0).dot(phi.row(1)) - approx_for(L, theta)(xy(0, 0), xy(1, 0))));
  }

  double grid_worst = 0.0;
  for (int L = 1; L <= 6; ++L) {
    for (double theta : thetas) {
      const DyadicGrid grid(L);
      const RowMatrixXd phi = dense_features(grid.points(), grid, theta);
      const Eigen::MatrixXd expansion = phi * phi.transpose();
      const auto &U = grid.points();
      for (Eigen::Index i = 0; i < U.size(); ++i) {
        for (Eigen::Index j = 0; j < U.size(); ++j) {
          const double k = laplace_kernel(U(i), U(j), theta);
          grid_worst = std::max({grid_worst, std::abs(expansion(i, j) - k),
                                 std::abs(approx_for(L, theta)(U(i), U(j)) - k)});
        }
      }
    }
  }
  return {worst < 1e-8 && grid_worst < 1e-10,
          fmt("random pairs %.3e (tol 1e-8), inducing points %.3e (tol 1e-10)", worst, grid_worst)};
}

Outcome tsi_correctness() {
  Rng rng(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kLevel = 12;
  long mismatches = 0;
  Eigen::MatrixXd X(100000, 1);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X(i, 0) = unit(rng);
  }
  // exact grid points and the interval ends are the tie cases
  for (Eigen::Index i = 0; i < 64; ++i) {
    X(i, 0) = std::ldexp(static_cast<double>(i), -6);
  }
  X(64, 0) = 1.0;

  const IndexTensor t = tsi_indices(X, kLevel);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double x = X(i, 0);
    const auto brute = brute_force_indices(x, kLevel);
    for (int l = 1; l <= kLevel; ++l) {
      const long long m_tsi = 2 * t.at(i, 0, l) - 1;
      const long long m_brute = brute[static_cast<std::size_t>(l - 1)];
      // either choice is correct when the nearest center's function vanishes at x
      if (m_tsi != m_brute && eval_interior_basis(l, m_brute, x, 1.0) != 0.0) {
        ++mismatches;
      }
    }
  }

  long bitwise_failures = 0;
  for (int L = 1; L <= kLevel; ++L) {
    const DyadicGrid grid(L);
    const auto rows = Eigen::seqN(static_cast<Eigen::Index>(L) * 1000, 2000);
    const Eigen::MatrixXd Xs = X(rows, Eigen::all);
    for (double theta : {0.5, 2.0}) {
      if (scatter(sparse_features(Xs, grid, theta), grid.size()) != dense_features(Xs, grid, theta)) {
        ++bitwise_failures;
      }
    }
  }
  return {mismatches == 0 && bitwise_failures == 0,
          fmt("%.0f index mismatches over 1e5 x and L<=12; %.0f non-bitwise scatter comparisons",
              static_cast<double>(mismatches), static_cast<double>(bitwise_failures))};
}

Outcome sparsity() {
  Rng rng(404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool ok = true;
  std::string detail;
  for (int L : {7, 10}) {
    const VariationalLayer layer = init_layer({3, 2, L, 1.0}, rng);
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(4, 3, [&] { return unit(rng); });
    const SparseActivation a = sparse_features(X, layer.grid, layer.theta);
    const LayerNoise noise = draw_noise(layer, X.rows(), ForwardMode::sample, rng);
    OpCounter sparse_ops, dense_ops;
    forward_sparse(layer, X, noise, nullptr, {1, &sparse_ops});
    forward_dense(layer, X, noise, {1, &dense_ops});
    const double ratio = static_cast<double>(dense_ops.multiply_adds) /
                         static_cast<double>(sparse_ops.multiply_adds);
    const double analytic = static_cast<double>(layer.grid_size()) / (L + 2);
    const double floor = L == 7 ? 10.0 : 80.0;
    ok = ok && a.slots() == L + 2 && ratio >= floor && ratio >= 0.95 * analytic;
    detail += fmt("L=%.0f: slots %.0f, madd ratio %.2f (analytic %.2f); ", L,
                  static_cast<double>(a.slots()), ratio, analytic);
  }
  detail += "floors 10 at L=7, 80 at L=10";
  return {ok, detail};
}

Outcome scaling_shape() {
  cli::BenchOptions o;
  o.levels = {5, 10};
  o.batch = 128;
  o.dims = 128;
  o.samples = 10;
  o.threads = 1;
  const auto rows = cli::run_bench(o);
  std::map<std::pair<std::string, int>, double> median;
  for (const auto &r : rows) {
    median[{r.path, r.level}] = r.median_ms;
  }
  const double sparse = median[{"sparse", 10}] / median[{"sparse", 5}];
  const double dense = median[{"dense", 10}] / median[{"dense", 5}];
  return {sparse < 4.0 && dense >= 16.0,
          fmt("sparse t(10)/t(5) = %.2f (need < 4), dense t(10)/t(5) = %.2f (need >= 16)", sparse,
              dense)};
}

Outcome gradient_checks() {
  Rng rng(707);
  std::uniform_real_distribution<double> unit(0.05, 0.95), theta_dist(0.5, 3.0);
  std::uniform_int_distribution<int> level(1, 5), width(1, 4), batch(2, 6);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelSpec spec;
    const Eigen::Index in = width(rng), hidden = width(rng);
    spec.layers = {{in, hidden, level(rng), theta_dist(rng)}, {hidden, 1, level(rng), theta_dist(rng)}};
    spec.squash = trial % 2 == 0 ? Squash::sigmoid : Squash::scaled_tanh;
    const Model model = init_model(spec, rng);
    const Eigen::Index n = batch(rng);
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(n, in, [&] { return unit(rng); });
    const Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(n, [&] { return unit(rng); });
    std::vector<ModelNoise> noises;
    const ForwardMode mode = trial % 3 == 0 ? ForwardMode::flipout : ForwardMode::sample;
    for (int s = 0; s < 2; ++s) {
      noises.push_back(draw_model_noise(model, n, mode, rng));
    }
    worst = std::max(worst, cli::elbo_gradient_error(model, X, y, noises, 0.05));
  }
  return {worst < 1e-3, fmt("worst relative error %.3e over 20 configurations (tol 1e-3)", worst)};
}

Outcome variational_sanity() {
  Rng rng(808);
  ModelSpec spec;
  spec.layers = {{2, 1, 4, 1.0}};
  Model model = init_model(spec, rng);
  for (auto &layer : model.layers) {
    layer.weight_mean.setZero();
    layer.bias_mean.setZero();
    layer.weight_rho.setConstant(inverse_softplus(1.0));
    layer.bias_rho.setConstant(inverse_softplus(1.0));
  }
  const double kl_prior = kl_mean_field(model);

  // any single departure from the prior must give a strictly positive KL
  double smallest_off_prior = std::numeric_limits<double>::infinity();
  for (double delta : {1e-3, -1e-3, 0.5}) {
    Model moved = model;
    moved.layers[0].weight_mean(3, 0) += delta;
    smallest_off_prior = std::min(smallest_off_prior, kl_mean_field(moved));
    moved = model;
    moved.layers[0].bias_rho(0) += delta;
    smallest_off_prior = std::min(smallest_off_prior, kl_mean_field(moved));
  }
  const bool kl_ok = std::abs(kl_prior) < 1e-12 && smallest_off_prior > 1e-12;

  // a single layer is linear-Gaussian in its weights
  auto &layer = model.layers[0];
  layer.weight_mean = Eigen::MatrixXd::NullaryExpr(layer.weight_mean.rows(), 1,
                                                   [&] { return std::normal_distribution<>(0, 1)(rng); });
  layer.weight_rho = Eigen::MatrixXd::NullaryExpr(layer.weight_rho.rows(), 1, [&] {
    return inverse_softplus(std::uniform_real_distribution<>(0.2, 1.0)(rng));
  });
  layer.bias_rho.setConstant(inverse_softplus(0.3));
  Eigen::MatrixXd x(1, 2);
  x << 0.3, 0.71;
  const RowMatrixXd phi = dense_features(x, layer.grid, layer.theta);
  double analytic = std::pow(softplus(layer.bias_rho(0)), 2);
  for (Eigen::Index d = 0; d < 2; ++d) {
    for (Eigen::Index p = 0; p < layer.grid_size(); ++p) {
      analytic += std::pow(phi(d, p) * softplus(layer.weight_rho(d * layer.grid_size() + p, 0)), 2);
    }
  }
  double worst = 0.0;
  for (ForwardMode mode : {ForwardMode::sample, ForwardMode::flipout}) {
    const PredictiveSummary s = predict(model, x, 10000, rng, mode);
    const double function_variance = s.variance(0) - model.noise_variance();
    worst = std::max(worst, std::abs(function_variance / analytic - 1.0));
  }
  return {kl_ok && worst < 0.05,
          fmt("KL at prior %.1e, min KL off prior %.2e; variance relative error %.3f (tol 0.05)",
              kl_prior, smallest_off_prior, worst)};
}

cli::RunConfig recipe_config(const fs::path &data, const fs::path &out) {
  cli::RunConfig config = cli::load_run_config(fs::path(SIKA_SOURCE_DIR) / "configs" / "se_gp_1d.json");
  config.train_csv = data / "train.csv";
  config.test_csv = data / "test.csv";
  config.out = out;
  config.train.threads = 1;
  return config;
}

fs::path synth_data(const fs::path &root) {
  cli::SynthOptions s;
  s.out = root / "data";
  std::ostringstream log;
  cli::cmd_synth(s, log);
  return s.out;
}

Outcome end_to_end() {
  const fs::path root = scratch("e2e");
  const fs::path data = synth_data(root);
  const cli::RunConfig config = recipe_config(data, root / "run");
  std::ostringstream log;
  cli::cmd_train(config, log);

  const SavedModel saved = load_model(root / "run" / "model.json");
  const Dataset test = load_csv(data / "test.csv", "y", Task::regression);
  Rng rng(config.train.seed + 1);
  const PredictiveSummary s =
      predict(saved.model, saved.normalizer.apply(test.X), config.train.test_samples, rng);

  std::vector<double> id_err, id_std, ood_std;
  for (Eigen::Index i = 0; i < test.X.rows(); ++i) {
    const double sd = std::sqrt(s.variance(i));
    if (std::abs(test.X(i, 0)) <= 3.0) {
      id_err.push_back(s.mean(i) - test.y(i));
      id_std.push_back(sd);
    } else {
      ood_std.push_back(sd);
    }
  }
  double sq = 0.0;
  for (double e : id_err) sq += e * e;
  const double id_rmse = std::sqrt(sq / static_cast<double>(id_err.size()));
  auto mean_of = [](const std::vector<double> &v) {
    double t = 0.0;
    for (double a : v) t += a;
    return t / static_cast<double>(v.size());
  };
  const double sd_in = mean_of(id_std), sd_out = mean_of(ood_std);
  return {id_rmse < 0.3 && sd_out > sd_in,
          fmt("ID RMSE %.4f (need < 0.3); mean std OOD %.4f vs ID %.4f", id_rmse, sd_out, sd_in)};
}

Outcome determinism() {
  const fs::path root = scratch("determinism");
  const fs::path data = synth_data(root);
  std::ostringstream log;
  for (const char *run : {"a", "b"}) {
    cli::RunConfig config = recipe_config(data, root / run);
    config.train.epochs = 10;
    cli::cmd_train(config, log);
  }
  const bool history = read_bytes(root / "a" / "history.csv") == read_bytes(root / "b" / "history.csv");
  const bool model = read_bytes(root / "a" / "model.json") == read_bytes(root / "b" / "model.json");
  const bool nonempty = !read_bytes(root / "a" / "model.json").empty();
  return {history && model && nonempty,
          std::string("history.csv ") + (history ? "identical" : "differs") + ", model.json " +
              (model ? "identical" : "differs")};
}

} // namespace

int main(int argc, char **argv) {
  const std::vector<Criterion> criteria{
      {1, "orthonormality", 10, orthonormality},
      {2, "closed form vs templates", 5, closed_form_vs_templates},
      {3, "nystrom reproduction", 30, nystrom_reproduction},
      {4, "tsi correctness", 30, tsi_correctness},
      {5, "sparsity and op counts", 5, sparsity},
      {6, "scaling shape", 120, scaling_shape},
      {7, "gradient checks", 60, gradient_checks},
      {8, "variational sanity", 60, variational_sanity},
      {9, "end-to-end 1d regression", 300, end_to_end},
      {10, "training determinism", 120, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    selected.insert(std::atoi(argv[i]));
  }

  int failures = 0;
  for (const auto &c : criteria) {
    if (!selected.empty() && selected.count(c.id) == 0) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = seconds < c.budget_seconds;
    const bool passed = o.passed && in_budget;
    failures += passed ? 0 : 1;
    std::printf("%s criterion %d (%s): %s; %.1f s (budget %.0f s)\n", passed ? "PASS" : "FAIL", c.id,
                c.name.c_str(), o.detail.c_str(), seconds, c.budget_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
