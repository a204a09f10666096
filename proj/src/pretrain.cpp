#include "t3vf/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace t3vf {

void PretrainHyper::validate() const {
  if (epochs < 0) throw ConfigError("pretrain.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("pretrain.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("pretrain.learning_rate must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("pretrain.lambda must be >= 0");
}

Adam::Adam(const ModelParams& like, double learning_rate)
    : lr_(learning_rate), m_(ModelParams::zeros(like.dims)), v_(ModelParams::zeros(like.dims)) {}

void Adam::step(ModelParams& params, const ModelParams& grad) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  auto p = params.fields();
  const auto g = grad.fields();
  auto m = m_.fields();
  auto v = v_.fields();
  for (std::size_t f = 0; f < ModelParams::kNumFields; ++f) {
    for (Eigen::Index i = 0; i < p[f].size(); ++i) {
      const double gi = g[f].data[i];
      m[f].data[i] = kBeta1 * m[f].data[i] + (1.0 - kBeta1) * gi;
      v[f].data[i] = kBeta2 * v[f].data[i] + (1.0 - kBeta2) * gi * gi;
      const double m_hat = m[f].data[i] / c1;
      const double v_hat = v[f].data[i] / c2;
      p[f].data[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kEps);
    }
  }
}

ModelParams pretrain(std::span<const TrainSample> data, const ModelDims& dims,
                     const PretrainHyper& hyper, PretrainLog* log) {
  if (data.empty()) throw UsageError("pretrain requires a nonempty dataset");
  hyper.validate();
  ModelParams params = ModelParams::init(dims, hyper.seed);
  Adam adam(params, hyper.learning_rate);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(hyper.seed, 0x5u));
  std::vector<TrainSample> batch;
  batch.reserve(hyper.batch_size);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      double batch_loss = 0.0;
      const ModelParams g = grad_all(params, batch, hyper.lambda, &batch_loss);
      adam.step(params, g);
      loss_sum += batch_loss;
      ++batches;
    }
    if (log) log->epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return params;
}

}  // namespace t3vf
