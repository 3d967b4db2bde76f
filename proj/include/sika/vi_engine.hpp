#pragma once

// Mean-field variational inference for SIKA models: KL to the N(0, I) prior, Monte Carlo
// ELBO on minibatches, AdamW updates, the training loop and posterior predictive sampling.

#include <sika/model.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sika {

struct TrainConfig {
  int epochs = 100;
  Eigen::Index batch_size = 512;
  int train_samples = 10;
  int test_samples = 20;
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  double kl_warmup_fraction = 0.0; // beta ramps 0 -> 1 over this fraction of all steps
  double grad_clip_norm = 0.0;     // <= 0 disables clipping
  ForwardMode sampling = ForwardMode::flipout;
  std::uint64_t seed = 0;
  int threads = 1; // forward-pass workers; results do not depend on this

  void validate() const;
};

/// sum over every weight and bias entry of 1/2 (sigma^2 + mu^2 - 1 - ln sigma^2).
double kl_mean_field(const VariationalLayer &layer);
double kl_mean_field(const Model &model);

/// Adds scale * dKL/dparams to grads.
void add_kl_gradient(const Model &model, double scale, ModelGradients &grads);

/// Row-wise numerically stable softmax.
Eigen::MatrixXd softmax(const Eigen::Ref<const Eigen::MatrixXd> &logits);

/// log p(label | logits) per row; labels are stored as integral doubles.
Eigen::VectorXd softmax_likelihood(const Eigen::Ref<const Eigen::MatrixXd> &logits,
                                   const Eigen::Ref<const Eigen::VectorXd> &labels);

struct ElboTerms {
  double loss = 0.0; // nll + kl_scale * kl
  double nll = 0.0;  // -(1/S) sum_s log p(y | X, W_s), summed over the batch
  double kl = 0.0;   // unscaled KL(q || p)
  double kl_scale = 0.0;
  ModelGradients grads;
};

/// Minibatch objective with S fresh noise draws in the given mode.
ElboTerms elbo_minibatch(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                         const Eigen::Ref<const Eigen::VectorXd> &y, int samples, Rng &rng,
                         double kl_scale, ForwardMode mode = ForwardMode::sample,
                         const ForwardOptions &options = {});

/// Same objective with the Monte Carlo draws supplied by the caller (one per sample).
ElboTerms elbo_minibatch(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                         const Eigen::Ref<const Eigen::VectorXd> &y,
                         std::span<const ModelNoise> noises, double kl_scale,
                         const ForwardOptions &options = {});

struct AdamConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::ArrayXd> first;
  std::vector<Eigen::ArrayXd> second;
  long step = 0;
};

/// AdamW: decoupled weight decay on views flagged `decay`, then the bias-corrected Adam update.
void adam_step(std::span<const ParamView> params, std::span<const ParamView> grads,
               AdamState &state, const AdamConfig &config);

/// Rescales the gradients in place so their global L2 norm is at most max_norm.
double clip_gradients(std::span<const ParamView> grads, double max_norm);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double nll = 0.0;
  double kl = 0.0;   // kl_mean_field of the model at the end of the epoch
  double beta = 1.0; // KL warm-up weight at the last step of the epoch
  double wall_ms = 0.0;
  double metric = 0.0; // filled by the epoch callback (e.g. held-out RMSE)
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const Model &, EpochRecord &)>;

/// Runs config.epochs passes of shuffled minibatch ELBO + AdamW. Deterministic given the seed.
TrainHistory train(Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                   const Eigen::Ref<const Eigen::VectorXd> &y, const TrainConfig &config,
                   const EpochCallback &on_epoch = {});

struct PredictiveSummary {
  Eigen::VectorXd mean;     // regression only
  Eigen::VectorXd variance; // regression: sample variance + observation noise
  std::vector<Eigen::MatrixXd> samples; // raw outputs per draw (N x out), when requested
  Eigen::MatrixXd class_probs;          // classification: mean of per-draw softmax
};

PredictiveSummary predict(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                          int samples, Rng &rng, ForwardMode mode = ForwardMode::sample,
                          bool keep_samples = false, const ForwardOptions &options = {});

} // namespace sika
