// Command-line front end: verify | bench | train | predict | synth.

#include <sika/cli.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv) {
  CLI::App app{"Sparse dyadic-basis Gaussian process layers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sika::cli::kVersion);

  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", out, "Output directory or file");
  };

  sika::cli::VerifyOptions verify;
  auto *verify_cmd = app.add_subcommand("verify", "Run the numerical invariant suites");
  add_common(verify_cmd);
  verify_cmd->add_option("--trials", verify.trials, "Random draws per randomized suite");
  verify_cmd->add_flag("--inject-theta-fault", verify.flip_theta_sign,
                       "Debug hook: flip the sign of theta in the Gram suite");

  sika::cli::BenchOptions bench;
  auto *bench_cmd = app.add_subcommand("bench", "Time dense vs sparse forward passes");
  add_common(bench_cmd);
  bench_cmd->add_option("--levels", bench.levels, "Dyadic levels")->delimiter(',');
  bench_cmd->add_option("--batch", bench.batch, "Batch size B");
  bench_cmd->add_option("--dims", bench.dims, "Input dimension D");
  bench_cmd->add_option("--out-dim", bench.out_dim, "Output dimension");
  bench_cmd->add_option("--samples", bench.samples, "Monte Carlo samples S per run");
  bench_cmd->add_option("--warmup", bench.warmup, "Discarded warm-up runs");
  bench_cmd->add_option("--repeats", bench.repeats, "Timed runs");
  bench_cmd->add_option("--theta", bench.theta, "Kernel rate");

  std::string config_path;
  auto *train_cmd = app.add_subcommand("train", "Train a model from a JSON run config");
  add_common(train_cmd);
  train_cmd->add_option("--config", config_path, "Run config (JSON)")->required();

  sika::cli::PredictOptions predict;
  std::string model_path, data_path;
  auto *predict_cmd = app.add_subcommand("predict", "Posterior predictive on a CSV file");
  add_common(predict_cmd);
  predict_cmd->add_option("--model", model_path, "Saved model")->required();
  predict_cmd->add_option("--data", data_path, "Input CSV")->required();
  predict_cmd->add_option("--target", predict.target, "Target column used for metrics");
  predict_cmd->add_option("--samples", predict.samples, "Posterior samples S*");
  predict_cmd->add_option("--ece-bins", predict.ece_bins, "Calibration bins");

  sika::cli::SynthOptions synth;
  auto *synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth_cmd);
  synth_cmd->add_option("kind", synth.kind, "Dataset kind (se_gp_1d)");
  synth_cmd->add_option("--train-size", synth.train_size);
  synth_cmd->add_option("--test-size", synth.test_size);
  synth_cmd->add_option("--train-limit", synth.train_limit);
  synth_cmd->add_option("--test-limit", synth.test_limit);
  synth_cmd->add_option("--lengthscale", synth.lengthscale);
  synth_cmd->add_option("--noise-std", synth.noise_std);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify_cmd) {
      verify.seed = seed.value_or(0);
      return sika::cli::cmd_verify(verify, std::cout);
    }
    if (*bench_cmd) {
      bench.seed = seed.value_or(0);
      bench.threads = threads.value_or(1);
      std::optional<std::filesystem::path> csv;
      if (out) {
        csv = std::filesystem::path(*out);
      }
      return sika::cli::cmd_bench(bench, csv, std::cout);
    }
    if (*train_cmd) {
      sika::cli::Overrides overrides{seed, threads, {}};
      if (out) {
        overrides.out = std::filesystem::path(*out);
      }
      return sika::cli::cmd_train(sika::cli::load_run_config(config_path, overrides), std::cout);
    }
    if (*predict_cmd) {
      predict.model = model_path;
      predict.data = data_path;
      predict.out_csv = out.value_or("predictions.csv");
      predict.seed = seed.value_or(0);
      predict.threads = threads.value_or(1);
      return sika::cli::cmd_predict(predict, std::cout);
    }
    if (*synth_cmd) {
      synth.seed = seed.value_or(0);
      synth.out = out.value_or("data");
      return sika::cli::cmd_synth(synth, std::cout);
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
