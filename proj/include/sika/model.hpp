#pragma once

// Stacks of SIKA layers: f = f_H o s o f_{H-1} o ... o s o f_1, where s squashes hidden
// outputs back into [0, 1] before they reach the next layer's basis.

#include <sika/sika_layer.hpp>

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace sika {

enum class Squash { sigmoid, scaled_tanh };
enum class LikelihoodKind { gaussian, categorical };

std::string to_string(Squash squash);
std::string to_string(LikelihoodKind kind);
std::string to_string(ForwardMode mode);
Squash parse_squash(const std::string &name);
LikelihoodKind parse_likelihood(const std::string &name);
ForwardMode parse_forward_mode(const std::string &name);

struct ModelSpec {
  std::vector<LayerSpec> layers;
  Squash squash = Squash::sigmoid;
  LikelihoodKind likelihood = LikelihoodKind::gaussian;
  double noise_variance = 0.1; // initial Gaussian observation noise

  /// Adjacent layers must chain; categorical models need at least two outputs.
  void validate() const;
};

struct Model {
  ModelSpec spec;
  std::vector<VariationalLayer> layers;
  double noise_rho = 0.0; // observation noise variance = softplus(noise_rho)

  double noise_variance() const { return softplus(noise_rho); }
  Eigen::Index in_dim() const { return layers.front().in_dim; }
  Eigen::Index out_dim() const { return layers.back().out_dim; }
};

Model init_model(const ModelSpec &spec, Rng &rng);

double squash(Squash kind, double z);
double squash_derivative(Squash kind, double z);

struct ModelNoise {
  std::vector<LayerNoise> layers;
};

ModelNoise draw_model_noise(const Model &model, Eigen::Index batch, ForwardMode mode, Rng &rng);

struct ModelCache {
  std::vector<LayerCache> layers;
  std::vector<Eigen::MatrixXd> pre_squash; // raw output of every layer but the last
  bool valid = false;
};

Eigen::MatrixXd forward_model(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                              const ModelNoise &noise, ModelCache *cache = nullptr,
                              const ForwardOptions &options = {});

Eigen::MatrixXd forward_model(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                              ForwardMode mode, Rng &rng, ModelCache *cache = nullptr,
                              const ForwardOptions &options = {});

struct ModelGradients {
  std::vector<LayerGradients> layers;
  double noise_rho = 0.0;
  Eigen::MatrixXd input;

  static ModelGradients zeros_like(const Model &model, Eigen::Index batch);
  ModelGradients &operator+=(const ModelGradients &other);
  ModelGradients &operator*=(double scale);
};

ModelGradients backward_model(const Model &model, const ModelCache &cache,
                              const Eigen::Ref<const Eigen::MatrixXd> &upstream);

/// Flat view of one parameter tensor.
struct ParamView {
  double *data;
  Eigen::Index size;
  bool decay; // variational means take weight decay; rho tensors do not
};

/// Every trainable tensor in a fixed order: per layer (weight_mean, weight_rho, bias_mean,
/// bias_rho), then the observation noise for Gaussian likelihoods.
std::vector<ParamView> parameter_views(Model &model);
std::vector<ParamView> gradient_views(ModelGradients &grads, const Model &model);

} // namespace sika
