#pragma once

// Subcommands behind the `sika` executable. Each returns a process exit code and writes its
// human-readable report to `log`.

#include <sika/data_io.hpp>
#include <sika/vi_engine.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sika::cli {

// ---------------------------------------------------------------------------------------------
// verify

struct VerifyOptions {
  std::uint64_t seed = 0;
  int trials = 200;              // random draws per randomized suite
  bool flip_theta_sign = false;  // fault hook: runs the Gram suite with -theta
};

struct SuiteResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;     // largest observed error
  double tolerance = 0.0;
  std::string detail;
};

std::vector<SuiteResult> run_verify(const VerifyOptions &options);
int cmd_verify(const VerifyOptions &options, std::ostream &log);

/// Largest relative error |a - n| / max(|a|, |n|, floor) between the analytic ELBO gradient and
/// central differences, over every parameter and input of `model`, with the noise held fixed.
double elbo_gradient_error(const Model &model, const Eigen::MatrixXd &X, const Eigen::VectorXd &y,
                           const std::vector<ModelNoise> &noises, double kl_scale,
                           double step = 1e-6, double floor = 1e-6);

// ---------------------------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::vector<int> levels{5, 6, 7, 8, 9, 10};
  Eigen::Index batch = 128;
  Eigen::Index dims = 128;
  Eigen::Index out_dim = 1;
  int samples = 10;
  int warmup = 3;
  int repeats = 11;
  int threads = 1;
  double theta = 1.0;
  std::uint64_t seed = 0;
};

struct BenchRow {
  int level = 0;
  std::string path; // "dense" or "sparse"
  Eigen::Index batch = 0;
  Eigen::Index dims = 0;
  int samples = 0;
  double median_ms = 0.0;
  std::uint64_t madd_count = 0; // per timed run (all samples)
};

inline constexpr const char *kBenchHeader = "level,path,batch,dims,samples,median_ms,madd_count";

std::vector<BenchRow> run_bench(const BenchOptions &options);
std::string bench_csv(const std::vector<BenchRow> &rows);
int cmd_bench(const BenchOptions &options, const std::optional<std::filesystem::path> &out_csv,
              std::ostream &log);

// ---------------------------------------------------------------------------------------------
// train

struct HiddenLayerConfig {
  Eigen::Index out_dim = 10;
  int level = 6;
  double theta = 1.0;
};

/// Everything `train` needs; parsed from a JSON document whose unknown keys are rejected.
/// Relative paths are resolved against the directory of the config file.
struct RunConfig {
  std::filesystem::path train_csv;
  std::filesystem::path test_csv; // optional held-out split
  std::string target = "y";
  Task task = Task::regression;
  std::optional<std::pair<double, double>> input_bounds; // fixed normalization domain

  std::vector<HiddenLayerConfig> hidden;  // all layers but the last
  int output_level = 6;
  double output_theta = 1.0;
  Squash squash = Squash::sigmoid;
  double noise_variance = 0.1;

  TrainConfig train;
  std::filesystem::path out = "run";

  nlohmann::json to_json() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::filesystem::path> out;
};

RunConfig parse_run_config(const nlohmann::json &doc, const std::filesystem::path &base_dir);
RunConfig load_run_config(const std::filesystem::path &path, const Overrides &overrides = {});

/// Per-epoch history columns; wall time is kept out so reruns are byte-identical.
inline constexpr const char *kHistoryHeader = "epoch,loss,nll,kl,beta,heldout_metric";
inline constexpr const char *kTimingHeader = "epoch,wall_seconds";

int cmd_train(const RunConfig &config, std::ostream &log);

// ---------------------------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::filesystem::path out_csv;
  std::string target = "y"; // used for metrics when present in the data
  int samples = 20;
  std::uint64_t seed = 0;
  int threads = 1;
  int ece_bins = 15;
};

int cmd_predict(const PredictOptions &options, std::ostream &log);

// ---------------------------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string kind = "se_gp_1d";
  Eigen::Index train_size = 2000;
  Eigen::Index test_size = 500;
  double train_limit = 3.0; // train x ~ U[-train_limit, train_limit]
  double test_limit = 5.0;  // test x ~ U[-test_limit, test_limit]
  double lengthscale = 1.0;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  std::filesystem::path out = "data";
};

int cmd_synth(const SynthOptions &options, std::ostream &log);

/// Writes run_<command>.json (command, effective config, version, wall time) into `dir`.
void write_run_metadata(const std::filesystem::path &dir, const std::string &command,
                        const nlohmann::json &config, double wall_seconds);

inline constexpr const char *kVersion = "0.1.0";

} // namespace sika::cli
