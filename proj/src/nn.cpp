#include "ssnt/nn.hpp"

#include <cmath>

#include "ssnt/error.hpp"

namespace ssnt {

LstmLayer LstmLayer::create(ParameterSet& params, const std::string& prefix, std::size_t input,
                            std::size_t hidden) {
  LstmLayer layer;
  layer.w = &params.add(prefix + ".w", {4 * hidden, input + hidden});
  layer.b = &params.add(prefix + ".b", {4 * hidden});
  return layer;
}

LstmLayer LstmLayer::bind(ParameterSet& params, const std::string& prefix) {
  return {&params.get(prefix + ".w"), &params.get(prefix + ".b")};
}

LstmState LstmLayer::step(const LstmState& prev, std::span<const double> x) const {
  const std::size_t h = hidden();
  LstmState next = LstmState::zeros(h);
  std::vector<double> gates(4 * h);
  kernels::lstm_cell(w->value, b->value, x, prev.h, prev.c, next.h, next.c, gates);
  return next;
}

LstmNodes LstmLayer::step(Graph& g, LstmNodes prev, NodeId x) const {
  const std::size_t h = hidden();
  NodeId both = g.lstm(x, prev.h, prev.c, *w, *b);
  return {g.slice(both, 0, h), g.slice(both, h, h)};
}

LstmNodes LstmLayer::zero_state(Graph& g) const {
  const std::size_t h = hidden();
  return {g.constant(std::vector<double>(h, 0.0)), g.constant(std::vector<double>(h, 0.0))};
}

namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
}

}  // namespace

NodeId dropout(Graph& g, NodeId v, double rate, Rng& rng, bool training) {
  check_rate(rate);
  if (!training || rate == 0.0) return v;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(g.size(v));
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return g.mul(v, g.constant(std::move(mask)));
}

std::vector<double> dropout(std::span<const double> v, double rate, Rng& rng, bool training) {
  check_rate(rate);
  std::vector<double> out(v.begin(), v.end());
  if (!training || rate == 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& x : out) x = rng.uniform() < rate ? 0.0 : x * keep_scale;
  return out;
}

void init_parameters(ParameterSet& params, Rng& rng, double scale) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (double& v : params[k].value.data()) v = rng.uniform(-scale, scale);
  }
}

void set_forget_bias(LstmLayer layer, double value) {
  const std::size_t h = layer.hidden();
  for (std::size_t k = h; k < 2 * h; ++k) layer.b->value[k] = value;
}

double clip_gradient_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (double g : params[k].gradient.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (double& g : params[k].gradient.data()) g *= s;
    }
  }
  return norm;
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(params), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  for (std::size_t k = 0; k < params_.size(); ++k) {
    m_.emplace_back(params_[k].value.shape(), 0.0);
    v_.emplace_back(params_[k].value.shape(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = params_[k];
    auto value = p.value.data();
    auto grad = p.gradient.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    p.zero_gradient();
  }
}

}  // namespace ssnt
