#include "t3vf/model.hpp"

#include <cmath>

namespace t3vf {

namespace {

Vec tanh_of(const Vec& z) { return z.array().tanh().matrix(); }

Vec sigmoid_of(const Vec& z) {
  Vec out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = sigmoid(z[i]);
  return out;
}

Vec stack_input(const ModelParams& p, const Observation& obs) {
  const auto& d = p.dims;
  if (obs.image.size() != d.obs || obs.instruction.size() != d.instr) {
    throw UsageError("observation size does not match model dims");
  }
  Vec x(d.input());
  x << obs.image, obs.instruction, p.q;
  return x;
}

// Column-per-sample forward pass shared by the gradient routines.
struct BatchForward {
  Mat x;      // input x B
  Mat h;      // hidden x B
  Mat h_dep;  // dep x B
  Mat o_hat;  // obs x B
  Mat mu;     // action x B
  Vec v;      // scale pre-activation, B
  Vec s;      // scale, B
};

template <typename ObsAt>
BatchForward batch_forward(const ModelParams& p, Eigen::Index n, ObsAt obs_at, bool with_action) {
  const auto& d = p.dims;
  BatchForward f;
  f.x.resize(d.input(), n);
  for (Eigen::Index b = 0; b < n; ++b) f.x.col(b) = stack_input(p, obs_at(b));
  f.h = ((p.W1 * f.x).colwise() + p.b1).array().tanh().matrix();

  Mat head_in = f.h.topRows(d.inst + d.img);
  Mat u = (p.W_img * head_in).colwise() + p.b_img;
  u += (f.x.topRows(d.obs).array().colwise() * p.d_res.array()).matrix();
  f.o_hat = u.unaryExpr([](double z) { return sigmoid(z); });

  if (with_action) {
    Mat dep_in = f.h.bottomRows(d.img + d.act);
    f.h_dep = ((p.W_dep * dep_in).colwise() + p.b_dep).array().tanh().matrix();
    f.mu = (p.W_act * f.h_dep).colwise() + p.b_act;
    f.v = (f.h_dep.transpose() * p.w_s).array() + p.b_s;
    f.s = f.v.unaryExpr([](double z) { return softplus(z); });
  }
  return f;
}

// d(mean image loss)/d(pre-sigmoid), already divided by batch size.
Mat image_head_delta(const BatchForward& f, Eigen::Index n, const auto& target_at, int obs_dim) {
  Mat du(f.o_hat.rows(), n);
  const double scale = 2.0 / (static_cast<double>(obs_dim) * static_cast<double>(n));
  for (Eigen::Index b = 0; b < n; ++b) {
    const Vec& target = target_at(b);
    if (target.size() != obs_dim) throw UsageError("target image size does not match model dims");
    du.col(b) = (scale * (f.o_hat.col(b) - target)).cwiseProduct(
        f.o_hat.col(b).cwiseProduct((1.0 - f.o_hat.col(b).array()).matrix()));
  }
  return du;
}

}  // namespace

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void ModelDims::validate() const {
  if (obs < 1 || instr < 1 || query < 1 || inst < 1 || img < 1 || act < 1 || dep < 1 || action != 2) {
    throw ConfigError("model dims must be positive and action must be 2");
  }
}

ModelDims ModelDims::for_env(const EpisodeConfig& env) {
  ModelDims d;
  d.obs = env.image_size();
  d.instr = env.num_goal_ids;
  return d;
}

ModelParams ModelParams::zeros(const ModelDims& d) {
  d.validate();
  ModelParams p;
  p.dims = d;
  p.W1 = Mat::Zero(d.hidden(), d.input());
  p.b1 = Vec::Zero(d.hidden());
  p.W_dep = Mat::Zero(d.dep, d.img + d.act);
  p.b_dep = Vec::Zero(d.dep);
  p.W_img = Mat::Zero(d.obs, d.inst + d.img);
  p.d_res = Vec::Zero(d.obs);
  p.b_img = Vec::Zero(d.obs);
  p.W_act = Mat::Zero(d.action, d.dep);
  p.b_act = Vec::Zero(d.action);
  p.w_s = Vec::Zero(d.dep);
  p.b_s = 0.0;
  p.q = Vec::Zero(d.query);
  return p;
}

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = zeros(dims);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& f : p.fields()) {
    if (f.name == "q") continue;
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data[i] = u(rng);
  }
  return p;
}

std::array<FieldView, ModelParams::kNumFields> ModelParams::fields() {
  auto mat = [](std::string_view name, Mat& m) { return FieldView{name, m.data(), m.rows(), m.cols(), false}; };
  auto vec = [](std::string_view name, Vec& v) { return FieldView{name, v.data(), v.size(), 1, false}; };
  return {mat("W1", W1),       vec("b1", b1),       mat("W_dep", W_dep), vec("b_dep", b_dep),
          mat("W_img", W_img), vec("d_res", d_res), vec("b_img", b_img), mat("W_act", W_act),
          vec("b_act", b_act), vec("w_s", w_s),     FieldView{"b_s", &b_s, 1, 1, true},
          vec("q", q)};
}

namespace {
bool same_field(const FieldView& a, const FieldView& b) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.data[i] != b.data[i]) return false;
  }
  return true;
}
}  // namespace

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(dims == other.dims)) return false;
  const auto a = fields();
  const auto b = other.fields();
  for (std::size_t i = 0; i < kNumFields; ++i) {
    if (!same_field(a[i], b[i])) return false;
  }
  return true;
}

bool ModelParams::equal_except_query(const ModelParams& other) const {
  if (!(dims == other.dims)) return false;
  const auto a = fields();
  const auto b = other.fields();
  for (std::size_t i = 0; i < kNumFields; ++i) {
    if (a[i].name == "q") continue;
    if (!same_field(a[i], b[i])) return false;
  }
  return true;
}

Features forward(const ModelParams& p, const Observation& obs) {
  const auto& d = p.dims;
  const Vec h = tanh_of(p.W1 * stack_input(p, obs) + p.b1);
  Features f;
  f.h_inst = h.segment(0, d.inst);
  f.h_img = h.segment(d.inst, d.img);
  f.h_act = h.segment(d.inst + d.img, d.act);
  Vec dep_in(d.img + d.act);
  dep_in << f.h_img, f.h_act;
  f.h_dep = tanh_of(p.W_dep * dep_in + p.b_dep);
  return f;
}

Vec predict_image(const ModelParams& p, const Features& f, const Observation& obs) {
  Vec head_in(p.dims.inst + p.dims.img);
  head_in << f.h_inst, f.h_img;
  return sigmoid_of(p.W_img * head_in + p.d_res.cwiseProduct(obs.image) + p.b_img);
}

ActionDistribution action_distribution(const ModelParams& p, const Features& f) {
  return {p.W_act * f.h_dep + p.b_act, softplus(p.w_s.dot(f.h_dep) + p.b_s)};
}

ActionSamples sample_actions(const ModelParams& p, const Features& f, int num_samples, Rng& rng) {
  if (num_samples < 1) throw UsageError("sample_actions requires K >= 1");
  const auto dist = action_distribution(p, f);
  ActionSamples out{{}, dist.mean, dist.scale};
  out.samples.reserve(num_samples);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < num_samples; ++k) {
    const double x = gauss(rng);
    const double y = gauss(rng);
    out.samples.push_back(dist.mean + dist.scale * Vec2(x, y));
  }
  return out;
}

LossParts loss_parts(const ModelParams& p, const TrainSample& sample) {
  const Features f = forward(p, sample.obs);
  const Vec o_hat = predict_image(p, f, sample.obs);
  const auto dist = action_distribution(p, f);
  LossParts out;
  out.img = (o_hat - sample.future_image).squaredNorm() / static_cast<double>(o_hat.size());
  out.act = (sample.expert - dist.mean).squaredNorm() / (2.0 * dist.scale * dist.scale) +
            2.0 * std::log(dist.scale);
  return out;
}

double loss_train(const ModelParams& p, const TrainSample& sample, double lambda) {
  return loss_parts(p, sample).total(lambda);
}

double loss_img_batch(const ModelParams& p, std::span<const Observation> inputs,
                      std::span<const Vec> targets) {
  if (inputs.empty() || inputs.size() != targets.size()) {
    throw UsageError("loss_img_batch requires equal, nonempty inputs and targets");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Vec o_hat = predict_image(p, forward(p, inputs[i]), inputs[i]);
    total += (o_hat - targets[i]).squaredNorm() / static_cast<double>(o_hat.size());
  }
  return total / static_cast<double>(inputs.size());
}

ModelParams grad_all(const ModelParams& p, std::span<const TrainSample> batch, double lambda,
                     double* loss_out) {
  if (batch.empty()) throw UsageError("grad_all requires a nonempty batch");
  const auto& d = p.dims;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);

  const BatchForward f = batch_forward(p, n, [&](Eigen::Index b) -> const Observation& { return batch[b].obs; }, true);
  ModelParams g = ModelParams::zeros(d);
  Mat dh = Mat::Zero(d.hidden(), n);

  // Image head.
  const Mat du = image_head_delta(f, n, [&](Eigen::Index b) -> const Vec& { return batch[b].future_image; }, d.obs);
  g.W_img = du * f.h.topRows(d.inst + d.img).transpose();
  g.d_res = (du.array() * f.x.topRows(d.obs).array()).rowwise().sum().matrix();
  g.b_img = du.rowwise().sum();
  dh.topRows(d.inst + d.img) += p.W_img.transpose() * du;

  // Action head: Gaussian NLL with state-dependent scale.
  Mat dmu(d.action, n);
  Vec dv(n);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const Vec2 r = f.mu.col(b) - batch[b].expert;
    const double s = f.s[b];
    if (loss_out) {
      loss += (f.o_hat.col(b) - batch[b].future_image).squaredNorm() / static_cast<double>(d.obs) +
              lambda * (r.squaredNorm() / (2.0 * s * s) + 2.0 * std::log(s));
    }
    dmu.col(b) = lambda * inv_n * r / (s * s);
    const double ds = lambda * inv_n * (-r.squaredNorm() / (s * s * s) + 2.0 / s);
    dv[b] = ds * sigmoid(f.v[b]);
  }
  if (loss_out) *loss_out = loss * inv_n;
  g.W_act = dmu * f.h_dep.transpose();
  g.b_act = dmu.rowwise().sum();
  g.w_s = f.h_dep * dv;
  g.b_s = dv.sum();

  Mat dh_dep = p.W_act.transpose() * dmu + p.w_s * dv.transpose();
  Mat dz_dep = dh_dep.array() * (1.0 - f.h_dep.array().square());
  g.W_dep = dz_dep * f.h.bottomRows(d.img + d.act).transpose();
  g.b_dep = dz_dep.rowwise().sum();
  dh.bottomRows(d.img + d.act) += p.W_dep.transpose() * dz_dep;

  // Backbone.
  Mat dz1 = dh.array() * (1.0 - f.h.array().square());
  g.W1 = dz1 * f.x.transpose();
  g.b1 = dz1.rowwise().sum();
  g.q = p.W1.rightCols(d.query).transpose() * g.b1;
  return g;
}

Vec grad_q_img(const ModelParams& p, std::span<const Observation> inputs, std::span<const Vec> targets) {
  if (inputs.empty() || inputs.size() != targets.size()) {
    throw UsageError("grad_q_img requires equal, nonempty inputs and targets");
  }
  const auto& d = p.dims;
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const BatchForward f = batch_forward(p, n, [&](Eigen::Index b) -> const Observation& { return inputs[b]; }, false);
  const Mat du = image_head_delta(f, n, [&](Eigen::Index b) -> const Vec& { return targets[b]; }, d.obs);

  // Only h_inst and h_img feed the image head.
  const int rows = d.inst + d.img;
  Mat dz = (p.W_img.transpose() * du).array() * (1.0 - f.h.topRows(rows).array().square());
  return p.W1.block(0, d.obs + d.instr, rows, d.query).transpose() * dz.rowwise().sum();
}

}  // namespace t3vf
