#include <sika/cli.hpp>

#include <sika/errors.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace sika::cli {

namespace {

std::string xy_csv(const Eigen::VectorXd &x, const Eigen::VectorXd &y) {
  std::ostringstream out;
  out << "x,y\n";
  char buf[96];
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", x(i), y(i));
    out << buf;
  }
  return out.str();
}

} // namespace

int cmd_synth(const SynthOptions &o, std::ostream &log) {
  const auto start = std::chrono::steady_clock::now();
  if (o.kind != "se_gp_1d") {
    throw ParameterError("synth: unknown kind '" + o.kind + "' (available: se_gp_1d)");
  }
  if (o.train_size < 1 || o.test_size < 1 || !(o.train_limit > 0.0) ||
      !(o.test_limit >= o.train_limit)) {
    throw ParameterError("synth: sizes must be positive and 0 < train_limit <= test_limit");
  }

  Rng rng(o.seed);
  std::uniform_real_distribution<double> train_x(-o.train_limit, o.train_limit);
  std::uniform_real_distribution<double> test_x(-o.test_limit, o.test_limit);
  Eigen::VectorXd x(o.train_size + o.test_size);
  for (Eigen::Index i = 0; i < o.train_size; ++i) {
    x(i) = train_x(rng);
  }
  for (Eigen::Index i = 0; i < o.test_size; ++i) {
    x(o.train_size + i) = test_x(rng);
  }
  // one joint draw so the test function continues the training function
  const Dataset all = sample_se_gp(x, o.lengthscale, o.noise_std, rng);

  const Eigen::VectorXd x_train = all.X.col(0).head(o.train_size);
  const Eigen::VectorXd y_train = all.y.head(o.train_size);
  const Eigen::VectorXd x_test = all.X.col(0).tail(o.test_size);
  const Eigen::VectorXd y_test = all.y.tail(o.test_size);

  std::vector<Eigen::Index> ood_rows;
  for (Eigen::Index i = 0; i < o.test_size; ++i) {
    if (std::abs(x_test(i)) > o.train_limit) {
      ood_rows.push_back(i);
    }
  }

  const nlohmann::json params = {{"kind", o.kind},
                                 {"train_size", o.train_size},
                                 {"test_size", o.test_size},
                                 {"train_limit", o.train_limit},
                                 {"test_limit", o.test_limit},
                                 {"lengthscale", o.lengthscale},
                                 {"noise_std", o.noise_std},
                                 {"seed", o.seed}};
  const nlohmann::json meta = {{"params", params},
                               {"train_file", "train.csv"},
                               {"test_file", "test.csv"},
                               {"ood_rule", "abs(x) > id_boundary"},
                               {"id_boundary", o.train_limit},
                               {"ood_count", ood_rows.size()},
                               {"ood_rows", ood_rows}};

  std::filesystem::create_directories(o.out);
  write_file_atomic(o.out / "train.csv", xy_csv(x_train, y_train));
  write_file_atomic(o.out / "test.csv", xy_csv(x_test, y_test));
  write_file_atomic(o.out / "metadata.json", meta.dump(2) + "\n");
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_run_metadata(o.out, "synth", params, wall);
  log << "wrote " << o.train_size << " train and " << o.test_size << " test rows ("
      << ood_rows.size() << " out of distribution) to " << o.out.string() << '\n';
  return 0;
}

} // namespace sika::cli
