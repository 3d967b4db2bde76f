#include <sika/vi_engine.hpp>

#include <sika/errors.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace sika {

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (train_samples < 1) throw ParameterError("train_samples must be >= 1");
  if (test_samples < 1) throw ParameterError("test_samples must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ParameterError("weight_decay must be non-negative");
  if (!(kl_warmup_fraction >= 0.0 && kl_warmup_fraction <= 1.0))
    throw ParameterError("kl_warmup_fraction must be in [0, 1]");
  if (threads < 1) throw ParameterError("threads must be >= 1");
}

namespace {

double kl_block(const Eigen::Ref<const Eigen::MatrixXd> &mean,
                const Eigen::Ref<const Eigen::MatrixXd> &rho) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double s = softplus(rho.data()[i]);
    const double mu = mean.data()[i];
    total += 0.5 * (s * s + mu * mu - 1.0 - 2.0 * std::log(s));
  }
  return total;
}

void kl_block_gradient(const Eigen::Ref<const Eigen::MatrixXd> &mean,
                       const Eigen::Ref<const Eigen::MatrixXd> &rho, double scale,
                       Eigen::Ref<Eigen::MatrixXd> grad_mean, Eigen::Ref<Eigen::MatrixXd> grad_rho) {
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double r = rho.data()[i];
    const double s = softplus(r);
    grad_mean.data()[i] += scale * mean.data()[i];
    grad_rho.data()[i] += scale * (s - 1.0 / s) * sigmoid(r);
  }
}

} // namespace

double kl_mean_field(const VariationalLayer &layer) {
  return kl_block(layer.weight_mean, layer.weight_rho) +
         kl_block(layer.bias_mean, layer.bias_rho);
}

double kl_mean_field(const Model &model) {
  double total = 0.0;
  for (const auto &layer : model.layers) {
    total += kl_mean_field(layer);
  }
  return total;
}

void add_kl_gradient(const Model &model, double scale, ModelGradients &grads) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto &layer = model.layers[i];
    auto &g = grads.layers[i];
    kl_block_gradient(layer.weight_mean, layer.weight_rho, scale, g.weight_mean, g.weight_rho);
    kl_block_gradient(layer.bias_mean, layer.bias_rho, scale, g.bias_mean, g.bias_rho);
  }
}

Eigen::MatrixXd softmax(const Eigen::Ref<const Eigen::MatrixXd> &logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - top).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

namespace {

Eigen::Index checked_label(double value, Eigen::Index classes) {
  const double rounded = std::round(value);
  if (rounded != value || rounded < 0 || rounded >= static_cast<double>(classes)) {
    throw ParameterError("label " + std::to_string(value) + " is not a class index in [0, " +
                         std::to_string(classes) + ")");
  }
  return static_cast<Eigen::Index>(rounded);
}

} // namespace

Eigen::VectorXd softmax_likelihood(const Eigen::Ref<const Eigen::MatrixXd> &logits,
                                   const Eigen::Ref<const Eigen::VectorXd> &labels) {
  if (logits.cols() < 2) {
    throw ParameterError("softmax likelihood needs at least two classes");
  }
  if (labels.size() != logits.rows()) {
    throw ParameterError("one label per logits row is required");
  }
  Eigen::VectorXd out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::Index c = checked_label(labels(i), logits.cols());
    const double top = logits.row(i).maxCoeff();
    const double log_norm = top + std::log((logits.row(i).array() - top).exp().sum());
    out(i) = logits(i, c) - log_norm;
  }
  return out;
}

ElboTerms elbo_minibatch(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                         const Eigen::Ref<const Eigen::VectorXd> &y,
                         std::span<const ModelNoise> noises, double kl_scale,
                         const ForwardOptions &options) {
  if (X.rows() == 0) {
    throw ParameterError("minibatch is empty");
  }
  if (y.size() != X.rows()) {
    throw ParameterError("minibatch targets and inputs disagree in length");
  }
  if (noises.empty()) {
    throw ParameterError("at least one Monte Carlo sample is required");
  }
  const double S = static_cast<double>(noises.size());
  const bool gaussian = model.spec.likelihood == LikelihoodKind::gaussian;
  const double noise_var = model.noise_variance();

  ElboTerms terms;
  terms.kl_scale = kl_scale;
  terms.grads = ModelGradients::zeros_like(model, X.rows());
  ModelCache cache;
  for (const auto &noise : noises) {
    const Eigen::MatrixXd f = forward_model(model, X, noise, &cache, options);
    Eigen::MatrixXd upstream(f.rows(), f.cols());
    double nll = 0.0;
    double grad_noise_var = 0.0;
    if (gaussian) {
      const double half_log = 0.5 * std::log(2.0 * std::numbers::pi * noise_var);
      for (Eigen::Index b = 0; b < f.rows(); ++b) {
        const double r = f(b, 0) - y(b);
        nll += half_log + r * r / (2.0 * noise_var);
        upstream(b, 0) = r / noise_var;
        grad_noise_var += 0.5 / noise_var - r * r / (2.0 * noise_var * noise_var);
      }
    } else {
      nll = -softmax_likelihood(f, y).sum();
      upstream = softmax(f);
      for (Eigen::Index b = 0; b < f.rows(); ++b) {
        upstream(b, static_cast<Eigen::Index>(y(b))) -= 1.0;
      }
    }
    terms.nll += nll / S;
    ModelGradients g = backward_model(model, cache, upstream);
    g.noise_rho = gaussian ? grad_noise_var * sigmoid(model.noise_rho) : 0.0;
    g *= 1.0 / S;
    terms.grads += g;
  }
  terms.kl = kl_mean_field(model);
  if (!std::isfinite(terms.nll)) {
    throw NumericalError("non-finite expected negative log-likelihood term in ELBO");
  }
  if (!std::isfinite(terms.kl)) {
    throw NumericalError("non-finite KL term in ELBO");
  }
  terms.loss = terms.nll + kl_scale * terms.kl;
  add_kl_gradient(model, kl_scale, terms.grads);
  return terms;
}

ElboTerms elbo_minibatch(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                         const Eigen::Ref<const Eigen::VectorXd> &y, int samples, Rng &rng,
                         double kl_scale, ForwardMode mode, const ForwardOptions &options) {
  if (samples < 1) {
    throw ParameterError("at least one Monte Carlo sample is required");
  }
  std::vector<ModelNoise> noises;
  noises.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    noises.push_back(draw_model_noise(model, X.rows(), mode, rng));
  }
  return elbo_minibatch(model, X, y, noises, kl_scale, options);
}

void adam_step(std::span<const ParamView> params, std::span<const ParamView> grads,
               AdamState &state, const AdamConfig &config) {
  if (params.size() != grads.size()) {
    throw ParameterError("parameter and gradient lists differ in length");
  }
  if (state.first.empty()) {
    for (const auto &p : params) {
      state.first.push_back(Eigen::ArrayXd::Zero(p.size));
      state.second.push_back(Eigen::ArrayXd::Zero(p.size));
    }
  }
  if (state.first.size() != params.size()) {
    throw StateError("Adam state was initialized for a different parameter list");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size) {
      throw ParameterError("parameter and gradient tensors differ in size");
    }
    Eigen::Map<Eigen::ArrayXd> p(params[i].data, params[i].size);
    Eigen::Map<const Eigen::ArrayXd> g(grads[i].data, grads[i].size);
    auto &m = state.first[i];
    auto &v = state.second[i];
    if (params[i].decay && config.weight_decay > 0.0) {
      p *= 1.0 - config.learning_rate * config.weight_decay;
    }
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.square();
    p -= config.learning_rate * (m / c1) / ((v / c2).sqrt() + config.eps);
  }
}

double clip_gradients(std::span<const ParamView> grads, double max_norm) {
  double sq = 0.0;
  for (const auto &g : grads) {
    sq += Eigen::Map<const Eigen::ArrayXd>(g.data, g.size).square().sum();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    for (const auto &g : grads) {
      Eigen::Map<Eigen::ArrayXd>(g.data, g.size) *= max_norm / norm;
    }
  }
  return norm;
}

TrainHistory train(Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                   const Eigen::Ref<const Eigen::VectorXd> &y, const TrainConfig &config,
                   const EpochCallback &on_epoch) {
  config.validate();
  if (X.rows() == 0 || y.size() != X.rows()) {
    throw ParameterError("training data must be nonempty with one target per row");
  }
  if (X.cols() != model.in_dim()) {
    throw ParameterError("training data has " + std::to_string(X.cols()) +
                         " features, model expects " + std::to_string(model.in_dim()));
  }
  const Eigen::Index N = X.rows();
  const Eigen::Index batch = std::min(config.batch_size, N);
  const Eigen::Index steps_per_epoch = (N + batch - 1) / batch;
  const double total_steps = static_cast<double>(steps_per_epoch) * config.epochs;
  const double warmup_steps = config.kl_warmup_fraction * total_steps;

  Rng rng(config.seed);
  AdamState adam;
  const AdamConfig adam_config{config.learning_rate, config.weight_decay};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainHistory history;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord record;
    record.epoch = epoch;
    for (Eigen::Index first = 0; first < N; first += batch) {
      const Eigen::Index count = std::min(batch, N - first);
      Eigen::MatrixXd xb(count, X.cols());
      Eigen::VectorXd yb(count);
      for (Eigen::Index i = 0; i < count; ++i) {
        const Eigen::Index src = order[static_cast<std::size_t>(first + i)];
        xb.row(i) = X.row(src);
        yb(i) = y(src);
      }
      const double beta =
          warmup_steps > 0.0 ? std::min(1.0, static_cast<double>(step) / warmup_steps) : 1.0;
      const double kl_scale = beta * static_cast<double>(count) / static_cast<double>(N);
      ElboTerms terms;
      try {
        terms = elbo_minibatch(model, xb, yb, config.train_samples, rng, kl_scale, config.sampling,
                               ForwardOptions{config.threads, nullptr});
      } catch (const NumericalError &e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ": " + e.what());
      }
      auto grads = gradient_views(terms.grads, model);
      if (config.grad_clip_norm > 0.0) {
        clip_gradients(grads, config.grad_clip_norm);
      }
      adam_step(parameter_views(model), grads, adam, adam_config);
      record.loss += terms.loss;
      record.nll += terms.nll;
      record.beta = beta;
      ++step;
    }
    record.kl = kl_mean_field(model);
    if (!std::isfinite(record.loss) || !std::isfinite(record.kl)) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    }
    record.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) {
      on_epoch(model, record);
    }
    history.epochs.push_back(record);
  }
  return history;
}

PredictiveSummary predict(const Model &model, const Eigen::Ref<const Eigen::MatrixXd> &X,
                          int samples, Rng &rng, ForwardMode mode, bool keep_samples,
                          const ForwardOptions &options) {
  const bool gaussian = model.spec.likelihood == LikelihoodKind::gaussian;
  if (samples < 1 || (gaussian && samples < 2)) {
    throw ParameterError("predictive variance needs at least two samples");
  }
  const Eigen::Index N = X.rows();
  PredictiveSummary summary;
  if (!gaussian) {
    summary.class_probs = Eigen::MatrixXd::Zero(N, model.out_dim());
  }
  // Welford's update keeps the variance accurate when the spread is tiny relative to the mean.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(N);
  for (int s = 0; s < samples; ++s) {
    Eigen::MatrixXd f = forward_model(model, X, mode, rng, nullptr, options);
    if (gaussian) {
      const Eigen::VectorXd delta = f.col(0) - mean;
      mean += delta / static_cast<double>(s + 1);
      m2 += delta.cwiseProduct(f.col(0) - mean);
    } else {
      summary.class_probs += softmax(f);
    }
    if (keep_samples) {
      summary.samples.push_back(std::move(f));
    }
  }
  if (gaussian) {
    summary.mean = mean;
    summary.variance =
        (m2 / static_cast<double>(samples - 1)).array() + model.noise_variance();
  } else {
    summary.class_probs /= static_cast<double>(samples);
  }
  return summary;
}

} // namespace sika
