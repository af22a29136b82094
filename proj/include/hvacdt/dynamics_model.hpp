#pragma once

// Learned thermal dynamics: a tanh MLP regressor f(s, d, a) -> s' trained on
// logged transitions with mini-batch Adam on MSE plus L2 weight decay.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvacdt/rng.hpp"
#include "hvacdt/types.hpp"

namespace hvacdt {

inline constexpr std::size_t kModelInputDim = kFeatureCount + 2;

/// [zone_temp, outdoor_temp, outdoor_rh, wind_speed, solar_rad, occupant_count, heat_sp, cool_sp]
using ModelInput = std::array<double, kModelInputDim>;

inline ModelInput make_model_input(const FeatureVector& x, const SetpointAction& a) {
  ModelInput in{};
  std::copy(x.begin(), x.end(), in.begin());
  in[kFeatureCount] = a.heat_sp();
  in[kFeatureCount + 1] = a.cool_sp();
  return in;
}

inline ModelInput make_model_input(const ZoneState& s, const DisturbanceVector& d, const SetpointAction& a) {
  return make_model_input(make_features(s.zone_temp, d), a);
}

/// Anything that maps (s, d, a) to a next zone temperature.
template <class M>
concept TransitionModel = requires(const M& m, const ModelInput& x) {
  { m.predict(x) } -> std::convertible_to<double>;
};

/// Batched prediction; uses the model's own batch path when it has one.
template <TransitionModel M>
void predict_batch(const M& model, std::span<const ModelInput> in, std::span<double> out) {
  if (in.size() != out.size()) throw PreconditionError("predict_batch: size mismatch");
  if constexpr (requires { model.predict_batch(in, out); }) {
    model.predict_batch(in, out);
  } else {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = model.predict(in[i]);
  }
}

template <TransitionModel M>
ZoneState predict(const M& model, const ZoneState& s, const DisturbanceVector& d, const SetpointAction& a) {
  return {static_cast<double>(model.predict(make_model_input(s, d, a)))};
}

struct TransitionRecord {
  ZoneState s;
  DisturbanceVector d;
  SetpointAction a;
  ZoneState s_next;

  ModelInput input() const { return make_model_input(s, d, a); }
};

// Normalization ------------------------------------------------------------

/// Per-feature z-score. Zero-variance features keep std = 1.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  static Normalizer fit(const Eigen::MatrixXd& cols) {
    Normalizer n;
    const auto count = static_cast<double>(cols.cols());
    n.mean = cols.rowwise().mean();
    n.std = ((cols.colwise() - n.mean).array().square().rowwise().sum() / count).sqrt().matrix();
    for (Eigen::Index i = 0; i < n.std.size(); ++i) {
      if (!(n.std[i] > 1e-12)) n.std[i] = 1.0;
    }
    return n;
  }

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const {
    return ((x.colwise() - mean).array().colwise() / std.array()).matrix();
  }
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& z) const {
    return ((z.array().colwise() * std.array()).matrix().colwise() + mean);
  }
};

// MLP ----------------------------------------------------------------------

/// Fully connected net with tanh hidden layers and a linear output layer.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;

  /// Xavier-uniform weights from `seed`, zero biases.
  Mlp(std::vector<int> dims, std::uint64_t seed) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw PreconditionError("Mlp needs at least input and output dims");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int fan_in = dims_[l], fan_out = dims_[l + 1];
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      Eigen::MatrixXd w(fan_out, fan_in);
      for (int r = 0; r < fan_out; ++r) {
        for (int c = 0; c < fan_in; ++c) w(r, c) = u(rng);
      }
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXd::Zero(fan_out));
    }
  }

  const std::vector<int>& dims() const noexcept { return dims_; }
  std::size_t layer_count() const noexcept { return weights_.size(); }
  std::vector<Eigen::MatrixXd>& weights() noexcept { return weights_; }
  std::vector<Eigen::VectorXd>& biases() noexcept { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const noexcept { return biases_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = weights_[l].lazyProduct(a);  // per-column result independent of batch size
      z.colwise() += biases_[l];
      a = (l + 1 < weights_.size()) ? Eigen::MatrixXd(z.array().tanh().matrix()) : std::move(z);
    }
    return a;
  }

  struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
  };

  /// Mean squared error over the batch and its exact gradient.
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target, Gradients& g) const {
    const auto n_layers = weights_.size();
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(n_layers + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < n_layers; ++l) {
      Eigen::MatrixXd z = weights_[l] * acts.back();
      z.colwise() += biases_[l];
      acts.push_back(l + 1 < n_layers ? Eigen::MatrixXd(z.array().tanh().matrix()) : std::move(z));
    }
    const auto count = static_cast<double>(x.cols() * target.rows());
    const Eigen::MatrixXd diff = acts.back() - target;
    const double loss = diff.squaredNorm() / count;

    g.dw.resize(n_layers);
    g.db.resize(n_layers);
    Eigen::MatrixXd delta = (2.0 / count) * diff;
    for (std::size_t l = n_layers; l-- > 0;) {
      g.dw[l] = delta * acts[l].transpose();
      g.db[l] = delta.rowwise().sum();
      if (l > 0) {
        delta = (weights_[l].transpose() * delta).array() * (1.0 - acts[l].array().square());
      }
    }
    return loss;
  }

  /// All parameters in layer order, each weight matrix row-major then its bias.
  std::vector<double> flat_params() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) out.push_back(weights_[l](r, c));
      }
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) out.push_back(biases_[l][r]);
    }
    return out;
  }

  void set_flat_params(std::span<const double> p) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = p[k++];
      }
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l][r] = p[k++];
    }
    if (k != p.size()) throw PreconditionError("set_flat_params: wrong parameter count");
  }

  static std::vector<double> flatten(const Gradients& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.dw.size(); ++l) {
      for (Eigen::Index r = 0; r < g.dw[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < g.dw[l].cols(); ++c) out.push_back(g.dw[l](r, c));
      }
      for (Eigen::Index r = 0; r < g.db[l].size(); ++r) out.push_back(g.db[l][r]);
    }
    return out;
  }

 private:
  std::vector<int> dims_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(const Mlp& net, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      mw_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
      vw_.push_back(mw_.back());
      mb_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
      vb_.push_back(mb_.back());
    }
  }

  void step(Mlp& net, Mlp::Gradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      update(net.weights()[l], g.dw[l], mw_[l], vw_[l], c1, c2);
      update(net.biases()[l], g.db[l], mb_[l], vb_[l], c1, c2);
    }
  }

 private:
  template <class P, class G, class S>
  void update(P& p, G& grad, S& m, S& v, double c1, double c2) const {
    grad += wd_ * p;
    m = b1_ * m + (1.0 - b1_) * grad;
    v = b2_ * v + (1.0 - b2_) * grad.cwiseProduct(grad);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

// Dynamics model -----------------------------------------------------------

struct TrainConfig {
  int epochs = 150;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  int batch_size = 64;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs <= 0 || learning_rate <= 0 || weight_decay < 0 || batch_size <= 0 || hidden.empty()) {
      throw PreconditionError("TrainConfig values must be positive");
    }
    for (int h : hidden) {
      if (h <= 0) throw PreconditionError("hidden layer sizes must be positive");
    }
  }
};

class DynamicsModel {
 public:
  DynamicsModel() = default;
  DynamicsModel(Mlp net, Normalizer in, Normalizer out, TrainConfig cfg)
      : net_(std::move(net)), in_(std::move(in)), out_(std::move(out)), cfg_(std::move(cfg)) {}

  double predict(const ModelInput& x) const {
    double y = 0.0;
    predict_batch(std::span<const ModelInput>(&x, 1), std::span<double>(&y, 1));
    return y;
  }

  void predict_batch(std::span<const ModelInput> in, std::span<double> out) const {
    const auto n = static_cast<Eigen::Index>(in.size());
    if (n == 0) return;
    const Eigen::Map<const Eigen::Matrix<double, kModelInputDim, Eigen::Dynamic>> raw(in.front().data(),
                                                                                     kModelInputDim, n);
    const Eigen::MatrixXd y = out_.denormalize(net_.forward(in_.normalize(raw)));
    std::copy(y.data(), y.data() + n, out.begin());
  }

  const Mlp& net() const noexcept { return net_; }
  const Normalizer& input_normalizer() const noexcept { return in_; }
  const Normalizer& output_normalizer() const noexcept { return out_; }
  const TrainConfig& train_config() const noexcept { return cfg_; }

  /// Per-epoch mean training loss in normalized units.
  std::vector<double> loss_history;
  /// Final full-data training MSE in °C².
  double final_train_mse = 0.0;
  /// Set when every target was identical (output std forced to 1).
  bool degenerate_targets = false;

 private:
  Mlp net_;
  Normalizer in_, out_;
  TrainConfig cfg_;
};

inline Eigen::MatrixXd inputs_matrix(std::span<const TransitionRecord> data) {
  Eigen::MatrixXd x(kModelInputDim, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto in = data[i].input();
    for (std::size_t f = 0; f < kModelInputDim; ++f) x(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)) = in[f];
  }
  return x;
}

inline DynamicsModel fit_dynamics(std::span<const TransitionRecord> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() < 2 * static_cast<std::size_t>(cfg.batch_size)) {
    throw PreconditionError("fit_dynamics: need at least 2 * batch_size records, got " +
                            std::to_string(data.size()));
  }
  const auto n = static_cast<Eigen::Index>(data.size());
  const Eigen::MatrixXd x_raw = inputs_matrix(data);
  Eigen::MatrixXd y_raw(1, n);
  for (Eigen::Index i = 0; i < n; ++i) y_raw(0, i) = data[static_cast<std::size_t>(i)].s_next.zone_temp;
  if (!x_raw.allFinite() || !y_raw.allFinite()) throw PreconditionError("fit_dynamics: non-finite record");

  const bool degenerate = (y_raw.maxCoeff() - y_raw.minCoeff()) <= 1e-9;
  Normalizer in_norm = Normalizer::fit(x_raw);
  Normalizer out_norm = Normalizer::fit(y_raw);
  if (degenerate) out_norm.std.setOnes();
  const Eigen::MatrixXd x = in_norm.normalize(x_raw);
  const Eigen::MatrixXd y = out_norm.normalize(y_raw);

  std::vector<int> dims{static_cast<int>(kModelInputDim)};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  Mlp net(dims, cfg.seed);
  Adam opt(net, cfg.learning_rate, cfg.weight_decay);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<double> history;
  Mlp::Gradients grads;
  Eigen::MatrixXd xb, yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, n - start);
      xb.resize(x.rows(), m);
      yb.resize(1, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        xb.col(j) = x.col(order[static_cast<std::size_t>(start + j)]);
        yb(0, j) = y(0, order[static_cast<std::size_t>(start + j)]);
      }
      epoch_loss += net.loss_and_gradient(xb, yb, grads);
      ++batches;
      opt.step(net, grads);
    }
    history.push_back(epoch_loss / batches);
  }

  DynamicsModel model(std::move(net), std::move(in_norm), std::move(out_norm), cfg);
  model.loss_history = std::move(history);
  model.degenerate_targets = degenerate;
  const Eigen::MatrixXd pred = model.output_normalizer().denormalize(model.net().forward(x));
  model.final_train_mse = (pred - y_raw).squaredNorm() / static_cast<double>(n);
  return model;
}

/// Root-mean-square next-temperature error in °C.
template <TransitionModel M>
double evaluate_model(const M& model, std::span<const TransitionRecord> data) {
  if (data.empty()) throw PreconditionError("evaluate_model: empty data");
  std::vector<ModelInput> in;
  in.reserve(data.size());
  for (const auto& r : data) in.push_back(r.input());
  std::vector<double> out(data.size());
  predict_batch(model, std::span<const ModelInput>(in), std::span<double>(out));
  double sse = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double e = out[i] - data[i].s_next.zone_temp;
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(data.size()));
}

// Persistence --------------------------------------------------------------

namespace detail {
inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
inline Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace detail

inline nlohmann::json to_json(const DynamicsModel& m) {
  nlohmann::json j;
  j["format"] = "hvacdt-dynamics";
  j["version"] = 1;
  j["activation"] = "tanh";
  j["layer_dims"] = m.net().dims();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < m.net().layer_count(); ++l) {
    const auto& w = m.net().weights()[l];
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) row_major.push_back(w(r, c));
    }
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"weights", row_major},
                      {"bias", detail::to_vec(m.net().biases()[l])}});
  }
  j["input_normalizer"] = {{"mean", detail::to_vec(m.input_normalizer().mean)},
                           {"std", detail::to_vec(m.input_normalizer().std)}};
  j["output_normalizer"] = {{"mean", detail::to_vec(m.output_normalizer().mean)},
                            {"std", detail::to_vec(m.output_normalizer().std)}};
  const auto& cfg = m.train_config();
  j["train_config"] = {{"epochs", cfg.epochs},           {"learning_rate", cfg.learning_rate},
                       {"weight_decay", cfg.weight_decay}, {"batch_size", cfg.batch_size},
                       {"hidden", cfg.hidden},             {"seed", cfg.seed}};
  j["seed"] = cfg.seed;
  j["final_train_mse"] = m.final_train_mse;
  j["degenerate_targets"] = m.degenerate_targets;
  return j;
}

inline DynamicsModel dynamics_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "hvacdt-dynamics") throw ParseError("not a dynamics model document");
    TrainConfig cfg;
    const auto& tc = j.at("train_config");
    cfg.epochs = tc.at("epochs");
    cfg.learning_rate = tc.at("learning_rate");
    cfg.weight_decay = tc.at("weight_decay");
    cfg.batch_size = tc.at("batch_size");
    cfg.hidden = tc.at("hidden").get<std::vector<int>>();
    cfg.seed = tc.at("seed");

    const auto dims = j.at("layer_dims").get<std::vector<int>>();
    Mlp net(dims, 0);
    const auto& layers = j.at("layers");
    if (layers.size() != net.layer_count()) throw ParseError("layer count does not match layer_dims");
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      auto& w = net.weights()[l];
      const auto vals = layers[l].at("weights").get<std::vector<double>>();
      if (layers[l].at("rows") != w.rows() || layers[l].at("cols") != w.cols() ||
          vals.size() != static_cast<std::size_t>(w.size())) {
        throw ParseError("layer " + std::to_string(l) + " shape mismatch");
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = vals[k++];
      }
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      if (bias.size() != static_cast<std::size_t>(w.rows())) throw ParseError("bias shape mismatch");
      net.biases()[l] = detail::from_vec(bias);
    }
    Normalizer in{detail::from_vec(j.at("input_normalizer").at("mean").get<std::vector<double>>()),
                  detail::from_vec(j.at("input_normalizer").at("std").get<std::vector<double>>())};
    Normalizer out{detail::from_vec(j.at("output_normalizer").at("mean").get<std::vector<double>>()),
                   detail::from_vec(j.at("output_normalizer").at("std").get<std::vector<double>>())};
    if (in.mean.size() != static_cast<Eigen::Index>(kModelInputDim) || in.std.size() != in.mean.size() ||
        out.mean.size() != 1 || out.std.size() != 1 || dims.front() != static_cast<int>(kModelInputDim) ||
        dims.back() != 1) {
      throw ParseError("normalizer or layer dimensions do not match the 8-input/1-output layout");
    }
    DynamicsModel m(std::move(net), std::move(in), std::move(out), cfg);
    m.final_train_mse = j.value("final_train_mse", 0.0);
    m.degenerate_targets = j.value("degenerate_targets", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dynamics model JSON: ") + e.what());
  }
}

}  // namespace hvacdt
