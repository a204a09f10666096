#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "t3vf/model.hpp"

namespace t3vf {

struct PretrainHyper {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double lambda = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainLog {
  std::vector<double> epoch_loss;  // mean minibatch training loss per epoch
};

/// Adam over every parameter block (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  Adam(const ModelParams& like, double learning_rate);
  void step(ModelParams& params, const ModelParams& grad);

 private:
  double lr_;
  long long t_ = 0;
  ModelParams m_;
  ModelParams v_;
};

/// Minimizes the image + lambda * action objective. Deterministic in
/// (data, dims, hyper). Throws UsageError on an empty dataset.
ModelParams pretrain(std::span<const TrainSample> data, const ModelDims& dims,
                     const PretrainHyper& hyper, PretrainLog* log = nullptr);

}  // namespace t3vf
