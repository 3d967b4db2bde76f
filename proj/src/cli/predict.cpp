#include <sika/cli.hpp>

#include <sika/errors.hpp>
#include <sika/eval_metrics.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace sika::cli {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool header_has(const std::filesystem::path &path, const std::string &column) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') {
      continue;
    }
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t\r");
      const auto last = cell.find_last_not_of(" \t\r");
      if (first != std::string::npos && cell.substr(first, last - first + 1) == column) {
        return true;
      }
    }
    return false;
  }
  return false;
}

} // namespace

int cmd_predict(const PredictOptions &o, std::ostream &log) {
  const auto start = std::chrono::steady_clock::now();
  if (o.samples < 2) {
    throw ParameterError("predict: at least two samples are required");
  }
  const SavedModel saved = load_model(o.model);
  const Model &model = saved.model;
  const bool regression = model.spec.likelihood == LikelihoodKind::gaussian;
  const Task task = regression ? Task::regression : Task::classification;

  const bool has_target = !o.target.empty() && header_has(o.data, o.target);
  Dataset data = load_csv(o.data, has_target ? o.target : "", task);
  if (data.X.cols() != saved.normalizer.dims()) {
    throw ParameterError(o.data.string() + " has " + std::to_string(data.X.cols()) +
                         " feature columns but the model was trained on " +
                         std::to_string(saved.normalizer.dims()));
  }
  if (has_target && !regression) {
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
      const std::string &label = data.label_names[static_cast<std::size_t>(data.y(i))];
      const auto it = std::find(saved.label_names.begin(), saved.label_names.end(), label);
      if (it == saved.label_names.end()) {
        throw ParseError(o.data.string() + ": label '" + label + "' is unknown to the model");
      }
      data.y(i) = static_cast<double>(it - saved.label_names.begin());
    }
  }

  std::int64_t clamped = 0;
  const Eigen::MatrixXd X = saved.normalizer.apply(data.X, &clamped);
  if (clamped > 0) {
    log << "warning: " << clamped << " input entries were clamped into the normalization range\n";
  }

  Rng rng(o.seed);
  const ForwardOptions options{o.threads, nullptr};
  const auto pred = predict(model, X, o.samples, rng, ForwardMode::sample, !regression, options);

  std::ostringstream out;
  if (regression) {
    out << "mean,variance" << (has_target ? ",target" : "") << '\n';
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      out << fmt(pred.mean(i)) << ',' << fmt(pred.variance(i));
      if (has_target) {
        out << ',' << fmt(data.y(i));
      }
      out << '\n';
    }
    if (has_target) {
      out << "# metrics\n";
      out << "# rmse," << fmt(rmse(data.y, pred.mean)) << '\n';
      out << "# nlpd," << fmt(nlpd(data.y, pred.mean, pred.variance)) << '\n';
    }
  } else {
    const Eigen::Index C = model.out_dim();
    for (Eigen::Index c = 0; c < C; ++c) {
      const std::string name = static_cast<std::size_t>(c) < saved.label_names.size()
                                   ? saved.label_names[static_cast<std::size_t>(c)]
                                   : std::to_string(c);
      out << "prob_" << name << ',';
    }
    out << "entropy,mutual_information" << (has_target ? ",target" : "") << '\n';

    std::vector<Eigen::MatrixXd> per_draw;
    per_draw.reserve(pred.samples.size());
    for (const auto &logits : pred.samples) {
      per_draw.push_back(softmax(logits));
    }
    Eigen::VectorXd confidence(X.rows());
    std::vector<bool> correct(static_cast<std::size_t>(X.rows()));
    Eigen::MatrixXd draws(static_cast<Eigen::Index>(per_draw.size()), C);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Eigen::VectorXd p = pred.class_probs.row(i).transpose();
      for (std::size_t t = 0; t < per_draw.size(); ++t) {
        draws.row(static_cast<Eigen::Index>(t)) = per_draw[t].row(i);
      }
      for (Eigen::Index c = 0; c < C; ++c) {
        out << fmt(p(c)) << ',';
      }
      out << fmt(predictive_entropy(p)) << ',' << fmt(mutual_information(draws));
      Eigen::Index best = 0;
      confidence(i) = p.maxCoeff(&best);
      if (has_target) {
        out << ',' << saved.label_names[static_cast<std::size_t>(data.y(i))];
        correct[static_cast<std::size_t>(i)] = static_cast<double>(best) == data.y(i);
      }
      out << '\n';
    }
    if (has_target) {
      out << "# metrics\n";
      out << "# accuracy," << fmt(accuracy(pred.class_probs, data.y)) << '\n';
      out << "# nll," << fmt(classification_nll(pred.class_probs, data.y)) << '\n';
      out << "# ece," << fmt(ece(confidence, correct, CalibrationConfig{o.ece_bins})) << '\n';
    }
  }

  if (o.out_csv.has_parent_path()) {
    std::filesystem::create_directories(o.out_csv.parent_path());
  }
  write_file_atomic(o.out_csv, out.str());
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_run_metadata(o.out_csv.has_parent_path() ? o.out_csv.parent_path() : ".", "predict",
                     {{"model", o.model.string()},
                      {"data", o.data.string()},
                      {"out", o.out_csv.string()},
                      {"target", o.target},
                      {"samples", o.samples},
                      {"seed", o.seed},
                      {"threads", o.threads},
                      {"ece_bins", o.ece_bins}},
                     wall);
  log << "wrote " << X.rows() << " predictions to " << o.out_csv.string() << '\n';
  return 0;
}

} // namespace sika::cli
