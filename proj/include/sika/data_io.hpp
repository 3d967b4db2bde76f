#pragma once

// Datasets, input normalization, synthetic SE-GP data and model persistence.

#include <sika/model.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sika {

enum class Task { regression, classification };

std::string to_string(Task task);
Task parse_task(const std::string &name);

/// Per-feature min-max map onto [0, 1]. Values outside [lo, hi] are clamped.
struct Normalizer {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Eigen::Index dims() const { return lo.size(); }

  /// Column-wise min and max of X_train.
  static Normalizer fit(const Eigen::Ref<const Eigen::MatrixXd> &X_train);

  /// Fixed bounds shared by every feature, e.g. a known input domain.
  static Normalizer from_bounds(Eigen::Index dims, double lo, double hi);

  /// Maps X into [0, 1]; a constant feature maps to 0.5. Adds the number of clamped entries to
  /// *clamped when given.
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd> &X,
                        std::int64_t *clamped = nullptr) const;

  bool operator==(const Normalizer &) const = default;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y; // regression targets or 0-based class labels
  Task task = Task::regression;
  std::vector<std::string> feature_names;
  std::string target_name;
  std::vector<std::string> label_names; // label k <-> label_names[k] (classification only)
};

/// Squared-exponential kernel exp(-(x - x')^2 / lengthscale^2).
Eigen::MatrixXd se_covariance(const Eigen::Ref<const Eigen::VectorXd> &x, double lengthscale);

/// One zero-mean GP draw at grid_x plus i.i.d. N(0, noise_std^2) noise. The covariance is
/// factorized with diagonal jitter 1e-8, raised to 1e-6 then 1e-4 on failure.
Dataset sample_se_gp(const Eigen::Ref<const Eigen::VectorXd> &grid_x, double lengthscale,
                     double noise_std, Rng &rng);

/// Reads a comma-separated file with a header row. Lines starting with '#' are skipped.
/// Every column except target_column is a numeric feature; an empty target_column reads
/// features only and leaves y empty.
Dataset load_csv(const std::filesystem::path &path, const std::string &target_column, Task task);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path &path, const std::string &contents);

inline constexpr int kModelFormatVersion = 1;

struct SavedModel {
  Model model;
  Normalizer normalizer;
  std::vector<std::string> label_names;
};

std::string serialize_model(const Model &model, const Normalizer &normalizer,
                            const std::vector<std::string> &label_names = {});
SavedModel deserialize_model(const std::string &text);

void save_model(const Model &model, const Normalizer &normalizer,
                const std::filesystem::path &path,
                const std::vector<std::string> &label_names = {});
SavedModel load_model(const std::filesystem::path &path);

} // namespace sika
