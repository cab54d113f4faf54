#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ssnt/graph.hpp"
#include "ssnt/tensor.hpp"

namespace ssnt {

// Value-level LSTM state (no tape).
struct LstmState {
  std::vector<double> h;
  std::vector<double> c;

  static LstmState zeros(std::size_t hidden) {
    return {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0)};
  }
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

// Tape-level LSTM state.
struct LstmNodes {
  NodeId h;
  NodeId c;
};

// One LSTM layer: weights 4H x (in + H), bias 4H, gate order i, f, g, o.
struct LstmLayer {
  Parameter* w = nullptr;
  Parameter* b = nullptr;

  static LstmLayer create(ParameterSet& params, const std::string& prefix, std::size_t input,
                          std::size_t hidden);
  static LstmLayer bind(ParameterSet& params, const std::string& prefix);

  std::size_t hidden() const { return b->value.size() / 4; }
  std::size_t input() const { return w->value.cols() - hidden(); }

  LstmState step(const LstmState& prev, std::span<const double> x) const;
  LstmNodes step(Graph& g, LstmNodes prev, NodeId x) const;
  LstmNodes zero_state(Graph& g) const;
};

// Inverted dropout. In training mode entries are zeroed with probability
// `rate` and survivors scaled by 1/(1-rate); otherwise the input is returned
// unchanged and no random numbers are drawn.
NodeId dropout(Graph& g, NodeId v, double rate, Rng& rng, bool training);
std::vector<double> dropout(std::span<const double> v, double rate, Rng& rng, bool training);

// Uniform init in [-scale, scale], drawn in parameter creation order.
void init_parameters(ParameterSet& params, Rng& rng, double scale = 0.08);
void set_forget_bias(LstmLayer layer, double value = 1.0);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradient_norm(ParameterSet& params, double max_norm);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  // One bias-corrected update from the current gradients; clears them.
  void step();

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  ParameterSet& params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_ = 0;
};

}  // namespace ssnt
