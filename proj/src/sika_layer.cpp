#include <sika/sika_layer.hpp>

#include <sika/errors.hpp>
#include <sika/kernel_basis.hpp>
#include <sika/parallel.hpp>

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

namespace sika {

double softplus(double rho) {
  return rho > 0.0 ? rho + std::log1p(std::exp(-rho)) : std::log1p(std::exp(rho));
}

double inverse_softplus(double sigma) {
  if (!(sigma > 0.0)) {
    throw ParameterError("inverse_softplus requires a positive argument");
  }
  return sigma > 30.0 ? sigma + std::log(-std::expm1(-sigma)) : std::log(std::expm1(sigma));
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void VariationalLayer::check_shapes() const {
  const Eigen::Index rows = in_dim * grid.size();
  if (in_dim < 1 || out_dim < 1 || weight_mean.rows() != rows || weight_mean.cols() != out_dim ||
      weight_rho.rows() != rows || weight_rho.cols() != out_dim || bias_mean.size() != out_dim ||
      bias_rho.size() != out_dim) {
    throw ParameterError("variational layer parameters do not match (in_dim * M, out_dim) = (" +
                         std::to_string(rows) + ", " + std::to_string(out_dim) + ")");
  }
}

VariationalLayer init_layer(const LayerSpec &spec, Rng &rng) {
  if (spec.in_dim < 1 || spec.out_dim < 1) {
    throw ParameterError("layer dimensions must be positive");
  }
  check_theta(spec.theta);
  VariationalLayer layer;
  layer.in_dim = spec.in_dim;
  layer.out_dim = spec.out_dim;
  layer.grid = DyadicGrid(spec.level);
  layer.theta = spec.theta;

  std::normal_distribution<double> normal(0.0, kInitScale);
  const Eigen::Index rows = spec.in_dim * layer.grid.size();
  layer.weight_mean.resize(rows, spec.out_dim);
  for (Eigen::Index j = 0; j < spec.out_dim; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      layer.weight_mean(i, j) = normal(rng);
    }
  }
  layer.bias_mean.resize(spec.out_dim);
  for (Eigen::Index j = 0; j < spec.out_dim; ++j) {
    layer.bias_mean(j) = normal(rng);
  }
  const double rho = inverse_softplus(kInitScale);
  layer.weight_rho = Eigen::MatrixXd::Constant(rows, spec.out_dim, rho);
  layer.bias_rho = Eigen::VectorXd::Constant(spec.out_dim, rho);
  return layer;
}

namespace {

void fill_normal(Eigen::MatrixXd &m, Rng &rng) {
  std::normal_distribution<double> normal;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m(i, j) = normal(rng);
    }
  }
}

void check_input(const VariationalLayer &layer, const Eigen::Ref<const Eigen::MatrixXd> &X) {
  layer.check_shapes();
  if (X.cols() != layer.in_dim) {
    throw ParameterError("input has " + std::to_string(X.cols()) + " columns, layer expects " +
                         std::to_string(layer.in_dim));
  }
}

void check_noise(const VariationalLayer &layer, const LayerNoise &noise, Eigen::Index batch) {
  const Eigen::Index slots = layer.grid.level() + 2;
  switch (noise.mode) {
  case ForwardMode::mean:
    return;
  case ForwardMode::sample:
    if (noise.weight.rows() != batch * layer.in_dim * slots || noise.weight.cols() != layer.out_dim)
      throw ParameterError("sample noise has the wrong shape for this batch");
    break;
  case ForwardMode::flipout:
    if (noise.weight.rows() != layer.in_dim * layer.grid_size() ||
        noise.weight.cols() != layer.out_dim || noise.signs.rows() != batch * layer.in_dim ||
        noise.signs.cols() != slots)
      throw ParameterError("flipout noise has the wrong shape for this batch");
    break;
  }
  if (noise.bias.rows() != batch || noise.bias.cols() != layer.out_dim) {
    throw ParameterError("bias noise has the wrong shape for this batch");
  }
}

// Standardized perturbation applied to slot k of (b, d) for output o.
inline double slot_noise(const LayerNoise &noise, Eigen::Index row, Eigen::Index k,
                         Eigen::Index slots, Eigen::Index weight_row, Eigen::Index o) {
  switch (noise.mode) {
  case ForwardMode::sample:
    return noise.weight(row * slots + k, o);
  case ForwardMode::flipout:
    return noise.signs(row, k) * noise.weight(weight_row, o);
  case ForwardMode::mean:
    break;
  }
  return 0.0;
}

void add_madds(OpCounter *counter, std::uint64_t n) {
  if (counter != nullptr) {
    std::atomic_ref<std::uint64_t>(counter->multiply_adds).fetch_add(n, std::memory_order_relaxed);
  }
}

} // namespace

LayerNoise draw_noise(const VariationalLayer &layer, Eigen::Index batch, ForwardMode mode,
                      Rng &rng) {
  LayerNoise noise;
  noise.mode = mode;
  if (mode == ForwardMode::mean) {
    return noise;
  }
  const Eigen::Index slots = layer.grid.level() + 2;
  if (mode == ForwardMode::sample) {
    noise.weight.resize(batch * layer.in_dim * slots, layer.out_dim);
  } else {
    noise.weight.resize(layer.in_dim * layer.grid_size(), layer.out_dim);
  }
  fill_normal(noise.weight, rng);
  noise.bias.resize(batch, layer.out_dim);
  fill_normal(noise.bias, rng);
  if (mode == ForwardMode::flipout) {
    std::bernoulli_distribution coin(0.5);
    noise.signs.resize(batch * layer.in_dim, slots);
    for (Eigen::Index i = 0; i < noise.signs.rows(); ++i) {
      for (Eigen::Index k = 0; k < slots; ++k) {
        noise.signs(i, k) = coin(rng) ? 1.0 : -1.0;
      }
    }
  }
  return noise;
}

Eigen::MatrixXd forward_sparse(const VariationalLayer &layer,
                               const Eigen::Ref<const Eigen::MatrixXd> &X,
                               const LayerNoise &noise, LayerCache *cache,
                               const ForwardOptions &options) {
  check_input(layer, X);
  check_noise(layer, noise, X.rows());
  SparseActivation activation = sparse_features(X, layer.grid, layer.theta);

  const Eigen::Index D = layer.in_dim;
  const Eigen::Index M = layer.grid_size();
  const Eigen::Index slots = activation.slots();
  const Eigen::Index out = layer.out_dim;
  const bool stochastic = noise.mode != ForwardMode::mean;

  Eigen::MatrixXd y(X.rows(), out);
  parallel_for(X.rows(), options.threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    std::uint64_t madds = 0;
    for (Eigen::Index b = begin; b < end; ++b) {
      for (Eigen::Index o = 0; o < out; ++o) {
        double acc = layer.bias_mean(o);
        if (stochastic) {
          acc += softplus(layer.bias_rho(o)) * noise.bias(b, o);
        }
        for (Eigen::Index d = 0; d < D; ++d) {
          const Eigen::Index row = b * D + d;
          for (Eigen::Index k = 0; k < slots; ++k) {
            const Eigen::Index w_row = d * M + activation.indices(row, k);
            double w = layer.weight_mean(w_row, o);
            if (stochastic) {
              w += softplus(layer.weight_rho(w_row, o)) *
                   slot_noise(noise, row, k, slots, w_row, o);
            }
            acc += activation.values(row, k) * w;
          }
        }
        madds += static_cast<std::uint64_t>(D * slots);
        y(b, o) = acc;
      }
    }
    add_madds(options.counter, madds);
  });

  if (cache != nullptr) {
    cache->input = X;
    cache->activation = std::move(activation);
    cache->noise = noise;
    cache->valid = true;
  }
  return y;
}

Eigen::MatrixXd forward_sparse(const VariationalLayer &layer,
                               const Eigen::Ref<const Eigen::MatrixXd> &X, ForwardMode mode,
                               Rng &rng, LayerCache *cache, const ForwardOptions &options) {
  check_input(layer, X);
  const LayerNoise noise = draw_noise(layer, X.rows(), mode, rng);
  return forward_sparse(layer, X, noise, cache, options);
}

Eigen::MatrixXd forward_dense(const VariationalLayer &layer,
                              const Eigen::Ref<const Eigen::MatrixXd> &X, const LayerNoise &noise,
                              const ForwardOptions &options) {
  check_input(layer, X);
  check_noise(layer, noise, X.rows());
  const RowMatrixXd phi = dense_features(X, layer.grid, layer.theta);
  // the activation pattern only routes the slot-aligned noise onto grid positions
  const SparseActivation activation = sparse_features(X, layer.grid, layer.theta);

  const Eigen::Index D = layer.in_dim;
  const Eigen::Index M = layer.grid_size();
  const Eigen::Index slots = activation.slots();
  const Eigen::Index out = layer.out_dim;
  const bool stochastic = noise.mode != ForwardMode::mean;
  Eigen::MatrixXd sigma = layer.weight_rho.unaryExpr([](double r) { return softplus(r); });

  Eigen::MatrixXd y(X.rows(), out);
  parallel_for(X.rows(), options.threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    std::vector<Eigen::Index> slot_of(static_cast<std::size_t>(M));
    std::uint64_t madds = 0;
    for (Eigen::Index b = begin; b < end; ++b) {
      for (Eigen::Index o = 0; o < out; ++o) {
        double acc = layer.bias_mean(o);
        if (stochastic) {
          acc += softplus(layer.bias_rho(o)) * noise.bias(b, o);
        }
        for (Eigen::Index d = 0; d < D; ++d) {
          const Eigen::Index row = b * D + d;
          if (stochastic) {
            std::fill(slot_of.begin(), slot_of.end(), Eigen::Index{-1});
            for (Eigen::Index k = 0; k < slots; ++k) {
              slot_of[static_cast<std::size_t>(activation.indices(row, k))] = k;
            }
          }
          for (Eigen::Index p = 0; p < M; ++p) {
            const Eigen::Index w_row = d * M + p;
            double w = layer.weight_mean(w_row, o);
            if (stochastic) {
              const Eigen::Index k = slot_of[static_cast<std::size_t>(p)];
              if (k >= 0) {
                w += sigma(w_row, o) * slot_noise(noise, row, k, slots, w_row, o);
              }
            }
            acc += phi(row, p) * w;
          }
        }
        madds += static_cast<std::uint64_t>(D * M);
        y(b, o) = acc;
      }
    }
    add_madds(options.counter, madds);
  });
  return y;
}

Eigen::MatrixXd forward_dense(const VariationalLayer &layer,
                              const Eigen::Ref<const Eigen::MatrixXd> &X, ForwardMode mode,
                              Rng &rng, const ForwardOptions &options) {
  check_input(layer, X);
  if (mode == ForwardMode::mean) {
    return forward_dense(layer, X, LayerNoise{}, options);
  }
  const RowMatrixXd phi = dense_features(X, layer.grid, layer.theta);
  const Eigen::Index D = layer.in_dim;
  const Eigen::Index M = layer.grid_size();
  const Eigen::Index rows = D * M;
  const Eigen::Index out = layer.out_dim;
  const Eigen::Index batch = X.rows();

  // Noise is drawn serially so results do not depend on the thread count.
  Eigen::MatrixXd eps(rows, out);
  fill_normal(eps, rng);
  Eigen::MatrixXd bias_noise(batch, out);
  fill_normal(bias_noise, rng);
  RowMatrixXd signs;
  if (mode == ForwardMode::flipout) {
    signs.resize(batch, rows);
    std::uint64_t bits = 0;
    for (Eigen::Index i = 0; i < signs.size(); ++i) {
      if (i % 64 == 0) {
        bits = rng();
      }
      signs.data()[i] = (bits >> (i % 64)) & 1 ? 1.0 : -1.0;
    }
  }
  const Eigen::MatrixXd sigma = layer.weight_rho.unaryExpr([](double r) { return softplus(r); });
  // sample mode: a single weight draw shared by the batch; flipout decorrelates it per example
  const Eigen::MatrixXd perturbation = sigma.cwiseProduct(eps);
  const Eigen::MatrixXd W = layer.weight_mean + perturbation;

  Eigen::MatrixXd y(batch, out);
  parallel_for(batch, options.threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    std::uint64_t madds = 0;
    for (Eigen::Index b = begin; b < end; ++b) {
      for (Eigen::Index o = 0; o < out; ++o) {
        double acc = layer.bias_mean(o) + softplus(layer.bias_rho(o)) * bias_noise(b, o);
        for (Eigen::Index d = 0; d < D; ++d) {
          const Eigen::Index row = b * D + d;
          for (Eigen::Index p = 0; p < M; ++p) {
            const Eigen::Index w_row = d * M + p;
            const double w = mode == ForwardMode::sample
                                 ? W(w_row, o)
                                 : layer.weight_mean(w_row, o) +
                                       signs(b, w_row) * perturbation(w_row, o);
            acc += phi(row, p) * w;
          }
        }
        madds += static_cast<std::uint64_t>(D * M);
        y(b, o) = acc;
      }
    }
    add_madds(options.counter, madds);
  });
  return y;
}

LayerGradients LayerGradients::zeros_like(const VariationalLayer &layer, Eigen::Index batch) {
  return {Eigen::MatrixXd::Zero(layer.weight_mean.rows(), layer.out_dim),
          Eigen::MatrixXd::Zero(layer.weight_rho.rows(), layer.out_dim),
          Eigen::VectorXd::Zero(layer.out_dim), Eigen::VectorXd::Zero(layer.out_dim),
          Eigen::MatrixXd::Zero(batch, layer.in_dim)};
}

LayerGradients backward(const VariationalLayer &layer, const LayerCache &cache,
                        const Eigen::Ref<const Eigen::MatrixXd> &upstream) {
  if (!cache.valid) {
    throw StateError("backward called without a cached forward pass");
  }
  const Eigen::Index batch = cache.input.rows();
  if (upstream.rows() != batch || upstream.cols() != layer.out_dim) {
    throw ParameterError("upstream gradient shape does not match the cached forward output");
  }
  const Eigen::Index D = layer.in_dim;
  const Eigen::Index M = layer.grid_size();
  const int L = layer.grid.level();
  const Eigen::Index slots = L + 2;
  const Eigen::Index out = layer.out_dim;
  const LayerNoise &noise = cache.noise;
  const bool stochastic = noise.mode != ForwardMode::mean;
  const auto &act = cache.activation;

  std::vector<double> scales(static_cast<std::size_t>(L) + 1);
  for (int l = 1; l <= L; ++l) {
    scales[static_cast<std::size_t>(l)] = interior_scale(l, layer.theta);
  }

  LayerGradients grad = LayerGradients::zeros_like(layer, batch);
  std::vector<double> slope(static_cast<std::size_t>(slots));
  std::vector<Eigen::Index> slope_pos(static_cast<std::size_t>(slots));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index d = 0; d < D; ++d) {
      const Eigen::Index row = b * D + d;
      const double x = cache.input(b, d);
      const auto boundary = boundary_derivative(x, layer.theta);
      slope[0] = boundary.psi01;
      slope[1] = boundary.psi02;
      slope_pos[0] = act.indices(row, 0);
      slope_pos[1] = act.indices(row, 1);
      for (int l = 1; l <= L; ++l) {
        const auto k = static_cast<std::size_t>(l + 1);
        const double scale = scales[static_cast<std::size_t>(l)];
        const Eigen::Index pos = act.indices(row, l + 1);
        const Eigen::Index offset = layer.grid.offsets()[static_cast<std::size_t>(l)];
        const long long m = 2 * (pos - offset) + 1;
        const auto support = interior_support<double>(l, m);
        slope[k] = interior_slope(scale, support, x, layer.theta);
        slope_pos[k] = pos;
        if (x >= support.hi) {
          // x sits on the right end of the active support: the slope to the right belongs to
          // the neighbouring function, and at x = 1 only the inside slope exists
          if (m + 2 < (1LL << l)) {
            slope[k] = interior_slope(scale, interior_support<double>(l, m + 2), x, layer.theta);
            slope_pos[k] = pos + 1;
          } else {
            slope[k] = -layer.theta * scale;
          }
        }
      }

      double dx = 0.0;
      for (Eigen::Index k = 0; k < slots; ++k) {
        const Eigen::Index w_row = d * M + act.indices(row, k);
        const Eigen::Index s_row = d * M + slope_pos[static_cast<std::size_t>(k)];
        const double v = act.values(row, k);
        for (Eigen::Index o = 0; o < out; ++o) {
          const double g = upstream(b, o);
          grad.weight_mean(w_row, o) += v * g;
          double w = layer.weight_mean(s_row, o);
          if (stochastic) {
            const double rho = layer.weight_rho(w_row, o);
            const double e = slot_noise(noise, row, k, slots, w_row, o);
            grad.weight_rho(w_row, o) += v * e * g * sigmoid(rho);
            w += softplus(layer.weight_rho(s_row, o)) * slot_noise(noise, row, k, slots, s_row, o);
          }
          dx += slope[static_cast<std::size_t>(k)] * w * g;
        }
      }
      grad.input(b, d) = dx;
    }
    for (Eigen::Index o = 0; o < out; ++o) {
      grad.bias_mean(o) += upstream(b, o);
      if (stochastic) {
        grad.bias_rho(o) += upstream(b, o) * noise.bias(b, o) * sigmoid(layer.bias_rho(o));
      }
    }
  }
  return grad;
}

} // namespace sika
