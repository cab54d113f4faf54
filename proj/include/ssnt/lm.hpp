#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ssnt/corpus.hpp"
#include "ssnt/graph.hpp"
#include "ssnt/nn.hpp"
#include "ssnt/ssnt_model.hpp"

namespace ssnt {

struct LmConfig {
  std::size_t vocab = 0;
  std::size_t embed = 128;
  std::size_t hidden = 1024;
  std::size_t layers = 2;
};

// State after a prefix, together with the next-token log distribution so
// scoring a candidate is a table read.
struct LmState {
  std::vector<LstmState> layers;
  std::vector<double> next_log_probs;
  std::size_t consumed = 0;  // tokens consumed after START

  friend bool operator==(const LmState&, const LmState&) = default;
};

class LanguageModel {
 public:
  explicit LanguageModel(LmConfig config);
  LanguageModel(LmConfig config, Rng& init_rng);

  LanguageModel(const LanguageModel&) = delete;
  LanguageModel& operator=(const LanguageModel&) = delete;

  const LmConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t vocab_size() const { return config_.vocab; }

  // State conditioned on START only.
  LmState start() const;
  // log p(token | prefix) and the state for the extended prefix.
  std::pair<double, LmState> score_next(const LmState& state, TokenId token) const;
  LmState advance(const LmState& state, TokenId token) const;
  // sum_j log p(y_j | y_1^{j-1}), EOS included if present.
  double sequence_log_prob(std::span<const TokenId> y) const;

  // -sum_j log p(y_j | y_1^{j-1}); y must end with EOS.
  NodeId nll(Graph& g, std::span<const TokenId> y, const DropoutSpec& dropout = {});

 private:
  void check_token(TokenId t) const;
  LmState consume(const LmState& prev, TokenId token) const;

  LmConfig config_;
  ParameterSet params_;
  Parameter* embed_ = nullptr;
  std::vector<LstmLayer> layers_;
  Parameter* out_w_ = nullptr;
  Parameter* out_b_ = nullptr;
};

}  // namespace ssnt
