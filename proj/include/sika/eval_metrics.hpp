#pragma once

// Accuracy and uncertainty metrics. Logarithms are natural (nats).

#include <Eigen/Core>

#include <vector>

namespace sika {

double rmse(const Eigen::Ref<const Eigen::VectorXd> &y,
            const Eigen::Ref<const Eigen::VectorXd> &pred_mean);

/// Mean Gaussian negative log predictive density.
double nlpd(const Eigen::Ref<const Eigen::VectorXd> &y,
            const Eigen::Ref<const Eigen::VectorXd> &pred_mean,
            const Eigen::Ref<const Eigen::VectorXd> &pred_var);

struct CalibrationConfig {
  int num_bins = 15;
};

/// Expected calibration error over equal-width bins on [0, 1]: bin 0 is [0, 1/M], bin m > 0 is
/// (m/M, (m+1)/M]. Empty bins contribute nothing.
double ece(const Eigen::Ref<const Eigen::VectorXd> &confidences, const std::vector<bool> &correct,
           const CalibrationConfig &config = {});

/// Fraction of rows whose arg-max class equals the label.
double accuracy(const Eigen::Ref<const Eigen::MatrixXd> &class_probs,
                const Eigen::Ref<const Eigen::VectorXd> &labels);

/// Mean -log p(label) under the given class probabilities.
double classification_nll(const Eigen::Ref<const Eigen::MatrixXd> &class_probs,
                          const Eigen::Ref<const Eigen::VectorXd> &labels);

/// H(p) = -sum_c p_c log p_c with 0 log 0 = 0.
double predictive_entropy(const Eigen::Ref<const Eigen::VectorXd> &probs);

/// H(mean_t p_t) - mean_t H(p_t) for draws stored one per row, clamped at 0.
double mutual_information(const Eigen::Ref<const Eigen::MatrixXd> &per_draw_probs);

} // namespace sika
