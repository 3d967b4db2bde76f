#include <sika/model.hpp>

#include <sika/errors.hpp>

#include <cmath>

namespace sika {

std::string to_string(Squash squash) {
  return squash == Squash::sigmoid ? "sigmoid" : "scaled_tanh";
}

std::string to_string(LikelihoodKind kind) {
  return kind == LikelihoodKind::gaussian ? "gaussian" : "categorical";
}

std::string to_string(ForwardMode mode) {
  switch (mode) {
  case ForwardMode::mean:
    return "mean";
  case ForwardMode::sample:
    return "sample";
  case ForwardMode::flipout:
    return "flipout";
  }
  return "unknown";
}

Squash parse_squash(const std::string &name) {
  if (name == "sigmoid") return Squash::sigmoid;
  if (name == "scaled_tanh") return Squash::scaled_tanh;
  throw ParameterError("unknown squash '" + name + "' (expected sigmoid | scaled_tanh)");
}

LikelihoodKind parse_likelihood(const std::string &name) {
  if (name == "gaussian") return LikelihoodKind::gaussian;
  if (name == "categorical") return LikelihoodKind::categorical;
  throw ParameterError("unknown likelihood '" + name + "' (expected gaussian | categorical)");
}

ForwardMode parse_forward_mode(const std::string &name) {
  if (name == "mean") return ForwardMode::mean;
  if (name == "sample") return ForwardMode::sample;
  if (name == "flipout") return ForwardMode::flipout;
  throw ParameterError("unknown forward mode '" + name + "' (expected mean | sample | flipout)");
}

void ModelSpec::validate() const {
  if (layers.empty()) {
    throw ParameterError("model needs at least one layer");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto &l = layers[i];
    if (l.in_dim < 1 || l.out_dim < 1 || l.level < 1 || l.level > kMaxLevel) {
      throw ParameterError("layer " + std::to_string(i) + " has invalid dimensions or level");
    }
    if (i > 0 && layers[i - 1].out_dim != l.in_dim) {
      throw ParameterError("layer " + std::to_string(i) + " input dim " +
                           std::to_string(l.in_dim) + " does not match previous output dim " +
                           std::to_string(layers[i - 1].out_dim));
    }
  }
  if (likelihood == LikelihoodKind::categorical && layers.back().out_dim < 2) {
    throw ParameterError("categorical likelihood needs at least two output classes");
  }
  if (likelihood == LikelihoodKind::gaussian && layers.back().out_dim != 1) {
    throw ParameterError("gaussian likelihood expects a single output");
  }
  if (!(noise_variance > 0.0)) {
    throw ParameterError("initial noise variance must be positive");
  }
}

Model init_model(const ModelSpec &spec, Rng &rng) {
  spec.validate();
  Model model;
  model.spec = spec;
  for (const auto &layer : spec.layers) {
    model.layers.push_back(init_layer(layer, rng));
  }
  model.noise_rho = inverse_softplus(spec.noise_variance);
  return model;
}

double squash(Squash kind, double z) {
  return kind == Squash::sigmoid ? sigmoid(z) : 0.5 * (1.0 + std::tanh(z));
}

double squash_derivative(Squash kind, double z) {
  if (kind == Squash::sigmoid) {
    const double s = sigmoid(z);
    return s * (1.0 - s);
  }
  const double t = std::tanh(z);
  return 0.5 * (1.0 - t * t);
}

ModelNoise draw_model_noise(const Model &model, Eigen::Index batch, ForwardMode mode, Rng &rng) {
  ModelNoise noise;
  for (const auto &layer : model.layers) {
    noise.layers.push_back(draw_noise(layer, batch, mode, rng));
  }
  return noise;
}

Eigen::MatrixXd forward_model(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                              const ModelNoise &noise, ModelCache *cache,
                              const ForwardOptions &options) {
  if (noise.layers.size() != model.layers.size()) {
    throw ParameterError("model noise has one entry per layer");
  }
  if (cache != nullptr) {
    cache->layers.assign(model.layers.size(), LayerCache{});
    cache->pre_squash.clear();
    cache->valid = false;
  }
  Eigen::MatrixXd h = X;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerCache *layer_cache = cache != nullptr ? &cache->layers[i] : nullptr;
    Eigen::MatrixXd out = forward_sparse(model.layers[i], h, noise.layers[i], layer_cache, options);
    if (i + 1 == model.layers.size()) {
      h = std::move(out);
      break;
    }
    h = out.unaryExpr([kind = model.spec.squash](double z) { return squash(kind, z); });
    if (cache != nullptr) {
      cache->pre_squash.push_back(std::move(out));
    }
  }
  if (cache != nullptr) {
    cache->valid = true;
  }
  return h;
}

Eigen::MatrixXd forward_model(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                              ForwardMode mode, Rng &rng, ModelCache *cache,
                              const ForwardOptions &options) {
  return forward_model(model, X, draw_model_noise(model, X.rows(), mode, rng), cache, options);
}

ModelGradients ModelGradients::zeros_like(const Model &model, Eigen::Index batch) {
  ModelGradients g;
  for (const auto &layer : model.layers) {
    g.layers.push_back(LayerGradients::zeros_like(layer, batch));
  }
  g.input = Eigen::MatrixXd::Zero(batch, model.in_dim());
  return g;
}

ModelGradients &ModelGradients::operator+=(const ModelGradients &other) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight_mean += other.layers[i].weight_mean;
    layers[i].weight_rho += other.layers[i].weight_rho;
    layers[i].bias_mean += other.layers[i].bias_mean;
    layers[i].bias_rho += other.layers[i].bias_rho;
  }
  noise_rho += other.noise_rho;
  if (input.size() == other.input.size()) {
    input += other.input;
  }
  return *this;
}

ModelGradients &ModelGradients::operator*=(double scale) {
  for (auto &g : layers) {
    g.weight_mean *= scale;
    g.weight_rho *= scale;
    g.bias_mean *= scale;
    g.bias_rho *= scale;
  }
  noise_rho *= scale;
  input *= scale;
  return *this;
}

ModelGradients backward_model(const Model &model, const ModelCache &cache,
                              const Eigen::Ref<const Eigen::MatrixXd> &upstream) {
  if (!cache.valid || cache.layers.size() != model.layers.size()) {
    throw StateError("backward_model called without a cached forward pass");
  }
  ModelGradients grads;
  grads.layers.resize(model.layers.size());
  Eigen::MatrixXd g = upstream;
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    grads.layers[i] = backward(model.layers[i], cache.layers[i], g);
    if (i == 0) {
      grads.input = grads.layers[i].input;
      break;
    }
    const Eigen::MatrixXd &pre = cache.pre_squash[i - 1];
    g = grads.layers[i].input.cwiseProduct(pre.unaryExpr(
        [kind = model.spec.squash](double z) { return squash_derivative(kind, z); }));
  }
  return grads;
}

std::vector<ParamView> parameter_views(Model &model) {
  std::vector<ParamView> views;
  for (auto &layer : model.layers) {
    views.push_back({layer.weight_mean.data(), layer.weight_mean.size(), true});
    views.push_back({layer.weight_rho.data(), layer.weight_rho.size(), false});
    views.push_back({layer.bias_mean.data(), layer.bias_mean.size(), true});
    views.push_back({layer.bias_rho.data(), layer.bias_rho.size(), false});
  }
  if (model.spec.likelihood == LikelihoodKind::gaussian) {
    views.push_back({&model.noise_rho, 1, false});
  }
  return views;
}

std::vector<ParamView> gradient_views(ModelGradients &grads, const Model &model) {
  std::vector<ParamView> views;
  for (auto &g : grads.layers) {
    views.push_back({g.weight_mean.data(), g.weight_mean.size(), true});
    views.push_back({g.weight_rho.data(), g.weight_rho.size(), false});
    views.push_back({g.bias_mean.data(), g.bias_mean.size(), true});
    views.push_back({g.bias_rho.data(), g.bias_rho.size(), false});
  }
  if (model.spec.likelihood == LikelihoodKind::gaussian) {
    views.push_back({&grads.noise_rho, 1, false});
  }
  return views;
}

} // namespace sika
