#pragma once

// Sparsely activated Bayesian layer
//
//   f(x) = sum_d phi(x_d) W_d + b,   W ~ N(m_W, diag(sigma_W^2)),  b ~ N(m_b, diag(sigma_b^2)),
//
// with sigma = softplus(rho). Weights are stored feature-major: row d * M + p of
// weight_mean / weight_rho belongs to grid position p of input feature d.
//
// The sparse path touches only the L + 2 activated rows per (example, feature);
// the dense path multiplies the full M-wide feature rows and serves as the
// oracle. Both accept pre-drawn noise so they can be compared sample for sample.

#include <sika/dyadic_grid.hpp>
#include <sika/sparse_index.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace sika {

using Rng = std::mt19937_64;

enum class ForwardMode { mean, sample, flipout };

struct LayerSpec {
  Eigen::Index in_dim = 1;
  Eigen::Index out_dim = 1;
  int level = 7;
  double theta = 1.0;

  bool operator==(const LayerSpec &) const = default;
};

inline constexpr double kInitScale = 0.1;

struct VariationalLayer {
  Eigen::Index in_dim = 0;
  Eigen::Index out_dim = 0;
  DyadicGrid grid{1};
  double theta = 1.0;
  Eigen::MatrixXd weight_mean; // (in_dim * M) x out_dim
  Eigen::MatrixXd weight_rho;
  Eigen::VectorXd bias_mean;   // out_dim
  Eigen::VectorXd bias_rho;

  Eigen::Index grid_size() const { return grid.size(); }
  LayerSpec spec() const { return {in_dim, out_dim, grid.level(), theta}; }

  /// Throws ParameterError if any parameter shape disagrees with (in_dim, out_dim, M).
  void check_shapes() const;
};

double softplus(double rho);
double inverse_softplus(double sigma);
double sigmoid(double z);

/// Means ~ N(0, 0.1^2) i.i.d., rho = softplus^{-1}(0.1) everywhere.
VariationalLayer init_layer(const LayerSpec &spec, Rng &rng);

/// Pre-drawn randomness for one forward pass.
///
/// sample:  weight is (batch * in_dim * (L + 2)) x out_dim, one row per activated slot;
///          row (b * D + d) * (L + 2) + k perturbs slot k of example b, feature d.
/// flipout: weight is (in_dim * M) x out_dim and shared by the whole batch; signs is a
///          (batch * in_dim) x (L + 2) Rademacher matrix multiplying the activations.
/// bias is batch x out_dim for both stochastic modes. Mean mode carries no noise.
struct LayerNoise {
  ForwardMode mode = ForwardMode::mean;
  Eigen::MatrixXd weight;
  Eigen::MatrixXd bias;
  RowMatrixXd signs;
};

LayerNoise draw_noise(const VariationalLayer &layer, Eigen::Index batch, ForwardMode mode,
                      Rng &rng);

struct OpCounter {
  std::uint64_t multiply_adds = 0;
};

struct ForwardOptions {
  int threads = 1;
  OpCounter *counter = nullptr; // counts feature-weight multiply-adds when set
};

/// State saved by a forward pass for backward().
struct LayerCache {
  Eigen::MatrixXd input;
  SparseActivation activation;
  LayerNoise noise;
  bool valid = false;
};

Eigen::MatrixXd forward_sparse(const VariationalLayer &layer,
                               const Eigen::Ref<const Eigen::MatrixXd> &X,
                               const LayerNoise &noise, LayerCache *cache = nullptr,
                               const ForwardOptions &options = {});

Eigen::MatrixXd forward_sparse(const VariationalLayer &layer,
                               const Eigen::Ref<const Eigen::MatrixXd> &X, ForwardMode mode,
                               Rng &rng, LayerCache *cache = nullptr,
                               const ForwardOptions &options = {});

/// Dense oracle sharing the noise layout of forward_sparse.
Eigen::MatrixXd forward_dense(const VariationalLayer &layer,
                              const Eigen::Ref<const Eigen::MatrixXd> &X, const LayerNoise &noise,
                              const ForwardOptions &options = {});

/// Dense baseline drawing its own noise: sample mode draws one perturbation of all in_dim * M
/// weight rows for the whole batch; flipout adds full-width per-example sign rows.
Eigen::MatrixXd forward_dense(const VariationalLayer &layer,
                              const Eigen::Ref<const Eigen::MatrixXd> &X, ForwardMode mode,
                              Rng &rng, const ForwardOptions &options = {});

struct LayerGradients {
  Eigen::MatrixXd weight_mean;
  Eigen::MatrixXd weight_rho;
  Eigen::VectorXd bias_mean;
  Eigen::VectorXd bias_rho;
  Eigen::MatrixXd input; // batch x in_dim

  static LayerGradients zeros_like(const VariationalLayer &layer, Eigen::Index batch);
};

/// Gradients of sum_{b,o} upstream(b, o) * f(X)(b, o) for the cached pass. Input gradients are
/// right-hand derivatives with the slot noise held fixed (one-sided from inside at x = 1).
LayerGradients backward(const VariationalLayer &layer, const LayerCache &cache,
                        const Eigen::Ref<const Eigen::MatrixXd> &upstream);

} // namespace sika
