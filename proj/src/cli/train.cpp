#include <sika/cli.hpp>

#include <sika/errors.hpp>
#include <sika/eval_metrics.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace sika::cli {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ModelSpec build_spec(const RunConfig &c, Eigen::Index in_dim, Eigen::Index out_dim) {
  ModelSpec spec;
  spec.squash = c.squash;
  spec.likelihood = c.task == Task::regression ? LikelihoodKind::gaussian : LikelihoodKind::categorical;
  spec.noise_variance = c.noise_variance;
  Eigen::Index width = in_dim;
  for (const auto &h : c.hidden) {
    spec.layers.push_back({width, h.out_dim, h.level, h.theta});
    width = h.out_dim;
  }
  spec.layers.push_back({width, out_dim, c.output_level, c.output_theta});
  spec.validate();
  return spec;
}

/// Re-expresses labels of `data` in the numbering of `names` (the training label set).
void align_labels(Dataset &data, const std::vector<std::string> &names, const std::string &what) {
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    const std::string &label = data.label_names[static_cast<std::size_t>(data.y(i))];
    const auto it = std::find(names.begin(), names.end(), label);
    if (it == names.end()) {
      throw ParseError(what + ": label '" + label + "' does not occur in the training data");
    }
    data.y(i) = static_cast<double>(it - names.begin());
  }
  data.label_names = names;
}

} // namespace

int cmd_train(const RunConfig &c, std::ostream &log) {
  const auto start = std::chrono::steady_clock::now();

  // Everything that can fail on bad input happens before the output directory is touched.
  Dataset train_data = load_csv(c.train_csv, c.target, c.task);
  if (train_data.X.cols() == 0) {
    throw ParseError(c.train_csv.string() + ": no feature columns");
  }
  std::optional<Dataset> test_data;
  if (!c.test_csv.empty()) {
    test_data = load_csv(c.test_csv, c.target, c.task);
    if (test_data->X.cols() != train_data.X.cols()) {
      throw ParseError("test data has " + std::to_string(test_data->X.cols()) +
                       " features, training data has " + std::to_string(train_data.X.cols()));
    }
    if (c.task == Task::classification) {
      align_labels(*test_data, train_data.label_names, c.test_csv.string());
    }
  }
  Eigen::Index out_dim = 1;
  if (c.task == Task::classification) {
    out_dim = static_cast<Eigen::Index>(train_data.label_names.size());
    if (out_dim < 2) {
      throw ParseError("classification needs at least two distinct labels");
    }
  }
  const ModelSpec spec = build_spec(c, train_data.X.cols(), out_dim);
  const Normalizer normalizer =
      c.input_bounds ? Normalizer::from_bounds(train_data.X.cols(), c.input_bounds->first,
                                               c.input_bounds->second)
                     : Normalizer::fit(train_data.X);
  std::int64_t clamped = 0;
  const Eigen::MatrixXd X = normalizer.apply(train_data.X, &clamped);
  Eigen::MatrixXd X_test;
  if (test_data) {
    X_test = normalizer.apply(test_data->X, &clamped);
  }
  if (clamped > 0) {
    log << "warning: " << clamped << " input entries were clamped into the normalization range\n";
  }

  std::filesystem::create_directories(c.out);
  write_file_atomic(c.out / "config.json", c.to_json().dump(2) + "\n");

  Rng init_rng(c.train.seed);
  Model model = init_model(spec, init_rng);
  const ForwardOptions options{c.train.threads, nullptr};
  auto on_epoch = [&](const Model &m, EpochRecord &record) {
    record.metric = std::nan("");
    if (test_data) {
      // evaluation draws come from their own stream so they never perturb training
      Rng eval_rng(c.train.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(record.epoch));
      const auto pred = predict(m, X_test, std::max(2, c.train.test_samples), eval_rng,
                                ForwardMode::sample, false, options);
      record.metric = c.task == Task::regression ? rmse(test_data->y, pred.mean)
                                                 : accuracy(pred.class_probs, test_data->y);
    }
    log << "epoch " << record.epoch << " loss " << record.loss << " kl " << record.kl;
    if (test_data) {
      log << (c.task == Task::regression ? " heldout_rmse " : " heldout_acc ") << record.metric;
    }
    log << '\n';
  };
  const TrainHistory history = train(model, X, train_data.y, c.train, on_epoch);

  std::ostringstream hist, timing;
  hist << kHistoryHeader << '\n';
  timing << kTimingHeader << '\n';
  for (const auto &e : history.epochs) {
    hist << e.epoch << ',' << fmt(e.loss) << ',' << fmt(e.nll) << ',' << fmt(e.kl) << ','
         << fmt(e.beta) << ',' << fmt(e.metric) << '\n';
    timing << e.epoch << ',' << fmt(e.wall_ms / 1000.0) << '\n';
  }
  save_model(model, normalizer, c.out / "model.json", train_data.label_names);
  write_file_atomic(c.out / "history.csv", hist.str());
  write_file_atomic(c.out / "timing.csv", timing.str());

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_run_metadata(c.out, "train", c.to_json(), wall);
  log << "wrote " << (c.out / "model.json").string() << " and " << (c.out / "history.csv").string()
      << '\n';
  return 0;
}

} // namespace sika::cli
