#include "ssnt/lm.hpp"

#include <string>

#include "ssnt/error.hpp"

namespace ssnt {

LanguageModel::LanguageModel(LmConfig config) : config_(config) {
  if (config_.vocab < kReservedCount) throw ConfigError("LM vocabulary lacks reserved tokens");
  if (config_.layers == 0 || config_.hidden == 0 || config_.embed == 0) {
    throw ConfigError("LM sizes must be positive");
  }
  embed_ = &params_.add("embed", {config_.vocab, config_.embed});
  std::size_t in = config_.embed;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    layers_.push_back(LstmLayer::create(params_, "lstm" + std::to_string(l), in, config_.hidden));
    in = config_.hidden;
  }
  out_w_ = &params_.add("out.w", {config_.vocab, config_.hidden});
  out_b_ = &params_.add("out.b", {config_.vocab});
}

LanguageModel::LanguageModel(LmConfig config, Rng& init_rng) : LanguageModel(config) {
  init_parameters(params_, init_rng);
  for (const auto& layer : layers_) set_forget_bias(layer);
}

void LanguageModel::check_token(TokenId t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab) {
    throw DataError("LM token id " + std::to_string(t) + " outside vocabulary of size " +
                    std::to_string(config_.vocab));
  }
}

LmState LanguageModel::consume(const LmState& prev, TokenId token) const {
  const std::size_t width = embed_->value.cols();
  std::span<const double> x =
      embed_->value.data().subspan(static_cast<std::size_t>(token) * width, width);
  LmState next;
  next.consumed = prev.consumed;
  std::vector<double> carry;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    next.layers.push_back(layers_[l].step(prev.layers[l], l == 0 ? x : std::span<const double>(carry)));
    carry = next.layers.back().h;
  }
  std::vector<double> logits(config_.vocab, 0.0);
  kernels::matvec_accumulate(out_w_->value, carry, 0, logits);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] = logits[k] + out_b_->value[k];
  next.next_log_probs.resize(config_.vocab);
  kernels::log_softmax(logits, next.next_log_probs);
  return next;
}

LmState LanguageModel::start() const {
  LmState zero;
  for (std::size_t l = 0; l < layers_.size(); ++l) zero.layers.push_back(LstmState::zeros(config_.hidden));
  return consume(zero, kStart);
}

LmState LanguageModel::advance(const LmState& state, TokenId token) const {
  check_token(token);
  LmState next = consume(state, token);
  next.consumed = state.consumed + 1;
  return next;
}

std::pair<double, LmState> LanguageModel::score_next(const LmState& state, TokenId token) const {
  check_token(token);
  return {state.next_log_probs[static_cast<std::size_t>(token)], advance(state, token)};
}

double LanguageModel::sequence_log_prob(std::span<const TokenId> y) const {
  LmState st = start();
  double total = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    check_token(y[j]);
    total += st.next_log_probs[static_cast<std::size_t>(y[j])];
    if (j + 1 < y.size()) st = advance(st, y[j]);
  }
  return total;
}

NodeId LanguageModel::nll(Graph& g, std::span<const TokenId> y, const DropoutSpec& dropout) {
  if (y.empty() || y.back() != kEos) throw DataError("LM sequences must end with EOS");
  if (dropout.training && dropout.rate > 0.0 && dropout.rng == nullptr) {
    throw ContractError("training dropout needs an rng");
  }
  auto drop = [&](NodeId v) {
    if (!dropout.training || dropout.rate == 0.0) return v;
    return ssnt::dropout(g, v, dropout.rate, *dropout.rng, true);
  };
  std::vector<LstmNodes> states;
  for (const auto& layer : layers_) states.push_back(layer.zero_state(g));

  auto consume_node = [&](TokenId t) {
    check_token(t);
    NodeId x = g.lookup(*embed_, static_cast<std::size_t>(t));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      states[l] = layers_[l].step(g, states[l], drop(x));
      x = states[l].h;
    }
    NodeId top = drop(x);
    return g.add(g.matvec(*out_w_, top), g.param(*out_b_));
  };

  std::vector<NodeId> terms;
  NodeId logits = consume_node(kStart);
  for (std::size_t j = 0; j < y.size(); ++j) {
    check_token(y[j]);
    terms.push_back(g.log_softmax_pick(logits, static_cast<std::size_t>(y[j])));
    if (j + 1 < y.size()) logits = consume_node(y[j]);
  }
  return g.neg(g.sum(terms));
}

}  // namespace ssnt
