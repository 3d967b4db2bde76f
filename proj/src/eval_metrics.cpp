#include <sika/eval_metrics.hpp>

#include <sika/errors.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace sika {

namespace {

void check_same_length(Eigen::Index a, Eigen::Index b, const char *what) {
  if (a != b) {
    throw ParameterError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
  }
  if (a == 0) {
    throw ParameterError(std::string(what) + ": empty input");
  }
}

} // namespace

double rmse(const Eigen::Ref<const Eigen::VectorXd> &y,
            const Eigen::Ref<const Eigen::VectorXd> &pred_mean) {
  check_same_length(y.size(), pred_mean.size(), "rmse");
  return std::sqrt((y - pred_mean).squaredNorm() / static_cast<double>(y.size()));
}

double nlpd(const Eigen::Ref<const Eigen::VectorXd> &y,
            const Eigen::Ref<const Eigen::VectorXd> &pred_mean,
            const Eigen::Ref<const Eigen::VectorXd> &pred_var) {
  check_same_length(y.size(), pred_mean.size(), "nlpd");
  check_same_length(y.size(), pred_var.size(), "nlpd");
  double total = 0.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double v = pred_var(t);
    if (!(v > 0.0)) {
      throw ParameterError("nlpd: predictive variance must be positive");
    }
    const double r = y(t) - pred_mean(t);
    total += r * r / (2.0 * v) + 0.5 * std::log(2.0 * std::numbers::pi * v);
  }
  return total / static_cast<double>(y.size());
}

double ece(const Eigen::Ref<const Eigen::VectorXd> &confidences, const std::vector<bool> &correct,
           const CalibrationConfig &config) {
  check_same_length(confidences.size(), static_cast<Eigen::Index>(correct.size()), "ece");
  if (config.num_bins < 1) {
    throw ParameterError("ece: need at least one bin");
  }
  const auto bins = static_cast<std::size_t>(config.num_bins);
  std::vector<double> conf_sum(bins, 0.0), hits(bins, 0.0), count(bins, 0.0);
  for (Eigen::Index i = 0; i < confidences.size(); ++i) {
    const double c = confidences(i);
    if (!(c >= 0.0 && c <= 1.0)) {
      throw ParameterError("ece: confidences must lie in [0, 1]");
    }
    const auto raw = static_cast<long>(std::ceil(c * config.num_bins)) - 1;
    const auto bin = static_cast<std::size_t>(std::clamp(raw, 0L, static_cast<long>(bins) - 1));
    conf_sum[bin] += c;
    hits[bin] += correct[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    count[bin] += 1.0;
  }
  const double n = static_cast<double>(confidences.size());
  double total = 0.0;
  for (std::size_t m = 0; m < bins; ++m) {
    if (count[m] > 0.0) {
      total += count[m] / n * std::abs(hits[m] / count[m] - conf_sum[m] / count[m]);
    }
  }
  return total;
}

double accuracy(const Eigen::Ref<const Eigen::MatrixXd> &class_probs,
                const Eigen::Ref<const Eigen::VectorXd> &labels) {
  check_same_length(class_probs.rows(), labels.size(), "accuracy");
  double hits = 0.0;
  for (Eigen::Index i = 0; i < class_probs.rows(); ++i) {
    Eigen::Index best = 0;
    class_probs.row(i).maxCoeff(&best);
    hits += static_cast<double>(best) == labels(i) ? 1.0 : 0.0;
  }
  return hits / static_cast<double>(labels.size());
}

double classification_nll(const Eigen::Ref<const Eigen::MatrixXd> &class_probs,
                          const Eigen::Ref<const Eigen::VectorXd> &labels) {
  check_same_length(class_probs.rows(), labels.size(), "classification_nll");
  double total = 0.0;
  for (Eigen::Index i = 0; i < class_probs.rows(); ++i) {
    const auto c = static_cast<Eigen::Index>(labels(i));
    if (c < 0 || c >= class_probs.cols()) {
      throw ParameterError("classification_nll: label out of range");
    }
    total -= std::log(std::max(class_probs(i, c), 1e-300));
  }
  return total / static_cast<double>(labels.size());
}

double predictive_entropy(const Eigen::Ref<const Eigen::VectorXd> &probs) {
  if (probs.size() == 0 || probs.minCoeff() < 0.0 || std::abs(probs.sum() - 1.0) > 1e-6) {
    throw ParameterError("predictive_entropy: input is not a probability vector");
  }
  double h = 0.0;
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    if (probs(c) > 0.0) {
      h -= probs(c) * std::log(probs(c));
    }
  }
  return h;
}

double mutual_information(const Eigen::Ref<const Eigen::MatrixXd> &per_draw_probs) {
  if (per_draw_probs.rows() < 2) {
    throw ParameterError("mutual_information: at least two draws are required");
  }
  const Eigen::VectorXd mean = per_draw_probs.colwise().mean().transpose();
  double expected = 0.0;
  for (Eigen::Index t = 0; t < per_draw_probs.rows(); ++t) {
    expected += predictive_entropy(per_draw_probs.row(t).transpose());
  }
  expected /= static_cast<double>(per_draw_probs.rows());
  return std::max(0.0, predictive_entropy(mean) - expected);
}

} // namespace sika
