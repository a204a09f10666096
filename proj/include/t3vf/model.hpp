#pragma once

// Toy visual-foresight policy.
//
//   h      = tanh(W1 [image; instruction; q] + b1)        split as (h_inst, h_img, h_act)
//   h_dep  = tanh(W_dep [h_img; h_act] + b_dep)            action rep conditioned on h_img
//   o_hat  = sigmoid(W_img [h_inst; h_img] + d_res .* image + b_img)
//   a ~ N(mu, s^2 I),  mu = W_act h_dep + b_act,  s = softplus(w_s . h_dep + b_s)
//
// q (the query tokens) is the only block touched at test time.

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "t3vf/common.hpp"
#include "t3vf/env.hpp"

namespace t3vf {

struct ModelDims {
  int obs = 256;
  int instr = 8;
  int query = 16;
  int inst = 16;
  int img = 24;
  int act = 24;
  int dep = 24;
  int action = 2;

  int hidden() const { return inst + img + act; }
  int input() const { return obs + instr + query; }
  void validate() const;

  static ModelDims for_env(const EpisodeConfig& env);
  bool operator==(const ModelDims&) const = default;
};

/// Flat view over one named parameter block (column-major storage).
struct FieldView {
  std::string_view name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  bool scalar;

  Eigen::Index size() const { return rows * cols; }
};

struct ModelParams {
  ModelDims dims;
  Mat W1;
  Vec b1;
  Mat W_dep;
  Vec b_dep;
  Mat W_img;
  Vec d_res;
  Vec b_img;
  Mat W_act;
  Vec b_act;
  Vec w_s;
  double b_s = 0.0;
  Vec q;

  static constexpr std::size_t kNumFields = 12;

  static ModelParams zeros(const ModelDims& dims);
  /// Weights uniform in [-0.1, 0.1] from seed; q starts at zero.
  static ModelParams init(const ModelDims& dims, std::uint64_t seed);

  std::array<FieldView, kNumFields> fields();
  std::array<FieldView, kNumFields> fields() const {
    return const_cast<ModelParams*>(this)->fields();
  }

  /// Exact (bitwise on values) equality of every field.
  bool operator==(const ModelParams& other) const;
  /// Equality of every field except q.
  bool equal_except_query(const ModelParams& other) const;
};

struct Features {
  Vec h_inst;
  Vec h_img;
  Vec h_act;
  Vec h_dep;
};

struct ActionDistribution {
  Vec2 mean;
  double scale;
};

struct ActionSamples {
  std::vector<Vec2> samples;
  Vec2 mean;
  double scale;
};

struct TrainSample {
  Observation obs;
  Vec2 expert;
  Vec future_image;
};

struct LossParts {
  double img = 0.0;
  double act = 0.0;
  double total(double lambda) const { return img + lambda * act; }
};

Features forward(const ModelParams& params, const Observation& obs);

Vec predict_image(const ModelParams& params, const Features& features, const Observation& obs);

ActionDistribution action_distribution(const ModelParams& params, const Features& features);

/// One backbone forward feeds all K samples.
ActionSamples sample_actions(const ModelParams& params, const Features& features, int num_samples,
                             Rng& rng);

LossParts loss_parts(const ModelParams& params, const TrainSample& sample);
double loss_train(const ModelParams& params, const TrainSample& sample, double lambda);

/// Batch-mean image loss; the test-time objective.
double loss_img_batch(const ModelParams& params, std::span<const Observation> inputs,
                      std::span<const Vec> targets);

/// Gradient of the batch-mean training loss w.r.t. every parameter block.
/// If loss_out is given it receives the batch-mean loss at params.
ModelParams grad_all(const ModelParams& params, std::span<const TrainSample> batch, double lambda,
                     double* loss_out = nullptr);

/// Gradient of the batch-mean image loss w.r.t. q only.
Vec grad_q_img(const ModelParams& params, std::span<const Observation> inputs,
               std::span<const Vec> targets);

double softplus(double x);
double sigmoid(double x);

}  // namespace t3vf
