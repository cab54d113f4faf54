#include "ssnt/ssnt_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssnt/error.hpp"

namespace ssnt {

double ForwardChart::any_end() const {
  std::vector<double> last;
  for (std::size_t i = 1; i <= input_length; ++i) last.push_back(at(i, output_length));
  return kernels::log_sum_exp(last);
}

SsntModel::SsntModel(SsntConfig config) : config_(config) { create_parameters(); }

SsntModel::SsntModel(SsntConfig config, Rng& init_rng) : config_(config) {
  create_parameters();
  init_parameters(params_, init_rng);
  set_forget_bias(encoder_);
  if (config_.bidirectional) set_forget_bias(encoder_backward_);
  set_forget_bias(decoder_);
}

void SsntModel::create_parameters() {
  const std::size_t H = config_.hidden, E = config_.embed;
  if (config_.input_vocab < kReservedCount || config_.output_vocab < kReservedCount) {
    throw ConfigError("vocabularies must hold at least the reserved tokens");
  }
  if (H == 0 || E == 0) throw ConfigError("hidden and embedding sizes must be positive");
  if (config_.bidirectional && H % 2 != 0) {
    throw ConfigError("bidirectional encoder needs an even hidden size");
  }
  src_embed_ = &params_.add("src_embed", {config_.input_vocab, E});
  if (config_.bidirectional) {
    encoder_ = LstmLayer::create(params_, "enc_fwd", E, H / 2);
    encoder_backward_ = LstmLayer::create(params_, "enc_bwd", E, H / 2);
  } else {
    encoder_ = LstmLayer::create(params_, "enc", E, H);
  }
  tgt_embed_ = &params_.add("tgt_embed", {config_.output_vocab, E});
  decoder_ = LstmLayer::create(params_, "dec", E, H);
  word_w_ = &params_.add("word.w", {config_.output_vocab, 2 * H});
  word_b_ = &params_.add("word.b", {config_.output_vocab});
  emit_w_ = &params_.add("emit.w", {H, 2 * H});
  emit_b_ = &params_.add("emit.b", {H});
  emit_out_w_ = &params_.add("emit_out.w", {1, H});
  emit_out_b_ = &params_.add("emit_out.b", {1});
}

void SsntModel::check_input_token(TokenId t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= config_.input_vocab) {
    throw DataError("input token id " + std::to_string(t) + " outside vocabulary of size " +
                    std::to_string(config_.input_vocab));
  }
}

void SsntModel::check_output_token(TokenId t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= config_.output_vocab) {
    throw DataError("output token id " + std::to_string(t) + " outside vocabulary of size " +
                    std::to_string(config_.output_vocab));
  }
}

namespace {

std::span<const double> row_of(const Parameter& table, TokenId t) {
  const std::size_t width = table.value.cols();
  return table.value.data().subspan(static_cast<std::size_t>(t) * width, width);
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

EncoderStates SsntModel::encoder_start() const {
  if (config_.bidirectional) {
    throw ContractError("a bidirectional encoder cannot be extended one token at a time");
  }
  EncoderStates states;
  states.states.push_back(
      encoder_.step(LstmState::zeros(encoder_.hidden()), row_of(*src_embed_, kStart)));
  return states;
}

void SsntModel::encode_input_prefix(EncoderStates& states, TokenId next) const {
  if (config_.bidirectional) {
    throw ContractError("a bidirectional encoder cannot be extended one token at a time");
  }
  check_input_token(next);
  states.states.push_back(encoder_.step(states.states.back(), row_of(*src_embed_, next)));
}

EncoderStates SsntModel::encode_input(std::span<const TokenId> x) const {
  if (!config_.bidirectional) {
    EncoderStates states = encoder_start();
    for (TokenId t : x) encode_input_prefix(states, t);
    return states;
  }
  const std::size_t half = encoder_.hidden();
  std::vector<LstmState> fwd, bwd(x.size() + 1);
  fwd.push_back(encoder_.step(LstmState::zeros(half), row_of(*src_embed_, kStart)));
  for (TokenId t : x) {
    check_input_token(t);
    fwd.push_back(encoder_.step(fwd.back(), row_of(*src_embed_, t)));
  }
  LstmState back = encoder_backward_.step(LstmState::zeros(half), row_of(*src_embed_, kStart));
  for (std::size_t i = x.size(); i >= 1; --i) {
    back = encoder_backward_.step(back, row_of(*src_embed_, x[i - 1]));
    bwd[i] = back;
  }
  bwd[0] = back;
  EncoderStates states;
  for (std::size_t i = 0; i <= x.size(); ++i) {
    states.states.push_back({concat(fwd[i].h, bwd[i].h), concat(fwd[i].c, bwd[i].c)});
  }
  return states;
}

InputEncoding SsntModel::encode_and_project(std::span<const TokenId> x) const {
  InputEncoding enc;
  enc.encoder = encode_input(x);
  enc.projections.resize(x.size() + 1);
  for (std::size_t i = 1; i <= x.size(); ++i) enc.projections[i] = project_input(enc.encoder.h(i));
  return enc;
}

LstmState SsntModel::decoder_start() const {
  return decoder_.step(LstmState::zeros(config_.hidden), row_of(*tgt_embed_, kStart));
}

LstmState SsntModel::decoder_step(const LstmState& s, TokenId y) const {
  check_output_token(y);
  return decoder_.step(s, row_of(*tgt_embed_, y));
}

InputProjection SsntModel::project_input(std::span<const double> h) const {
  InputProjection p;
  p.word.assign(config_.output_vocab, 0.0);
  kernels::matvec_accumulate(word_w_->value, h, 0, p.word);
  for (std::size_t k = 0; k < p.word.size(); ++k) p.word[k] = p.word[k] + word_b_->value[k];
  p.emit.assign(config_.hidden, 0.0);
  kernels::matvec_accumulate(emit_w_->value, h, 0, p.emit);
  for (std::size_t k = 0; k < p.emit.size(); ++k) p.emit[k] = p.emit[k] + emit_b_->value[k];
  return p;
}

OutputProjection SsntModel::project_output(std::span<const double> s) const {
  OutputProjection p;
  p.word.assign(config_.output_vocab, 0.0);
  kernels::matvec_accumulate(word_w_->value, s, config_.hidden, p.word);
  p.emit.assign(config_.hidden, 0.0);
  kernels::matvec_accumulate(emit_w_->value, s, config_.hidden, p.emit);
  return p;
}

double SsntModel::emit_logit(const InputProjection& h, const OutputProjection& s) const {
  std::vector<double> hidden(config_.hidden);
  for (std::size_t k = 0; k < hidden.size(); ++k) hidden[k] = std::tanh(h.emit[k] + s.emit[k]);
  double out[1] = {0.0};
  kernels::matvec_accumulate(emit_out_w_->value, hidden, 0, out);
  return out[0] + emit_out_b_->value[0];
}

void SsntModel::word_log_probs(const InputProjection& h, const OutputProjection& s,
                               std::span<double> out) const {
  std::vector<double> logits(config_.output_vocab);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] = h.word[k] + s.word[k];
  kernels::log_softmax(logits, out);
}

double SsntModel::emit_probability(std::span<const double> h, std::span<const double> s) const {
  return kernels::sigmoid(emit_logit(project_input(h), project_output(s)));
}

std::vector<double> SsntModel::word_distribution(std::span<const double> h,
                                                 std::span<const double> s) const {
  std::vector<double> logp(config_.output_vocab);
  word_log_probs(project_input(h), project_output(s), logp);
  for (double& v : logp) v = std::exp(v);
  return logp;
}

ForwardChart SsntModel::forward_chart(std::span<const TokenId> x, std::span<const TokenId> y,
                                      bool force_final_emit) const {
  if (x.empty() || y.empty()) throw DataError("forward chart needs non-empty x and y");
  const std::size_t I = x.size(), J = y.size();
  InputEncoding input = encode_and_project(x);
  ForwardChart chart;
  chart.input_length = I;
  chart.output_length = J;
  chart.log_alpha.assign((I + 1) * (J + 1), kNegInf);

  LstmState s = decoder_start();
  std::vector<double> logp(config_.output_vocab);
  std::vector<double> log_emit(I + 1), log_shift(I + 1), log_word(I + 1), B(I + 1);
  for (std::size_t j = 1; j <= J; ++j) {
    check_output_token(y[j - 1]);
    if (j > 1) s = decoder_step(s, y[j - 2]);
    OutputProjection sp = project_output(s.h);
    for (std::size_t i = 1; i <= I; ++i) {
      const double logit = emit_logit(input.projections[i], sp);
      log_emit[i] = kernels::log_sigmoid(logit);
      log_shift[i] = kernels::log_sigmoid(-logit);
      word_log_probs(input.projections[i], sp, logp);
      log_word[i] = logp[static_cast<std::size_t>(y[j - 1])];
    }
    for (std::size_t i = 1; i <= I; ++i) {
      if (j == 1) {
        B[i] = i == 1 ? 0.0 : B[i - 1] + log_shift[i - 1];
      } else if (i == 1) {
        B[i] = chart.at(1, j - 1);
      } else {
        const double terms[2] = {chart.at(i, j - 1), B[i - 1] + log_shift[i - 1]};
        B[i] = kernels::log_sum_exp(terms);
      }
      const bool forced = force_final_emit && i == I;
      const double a = forced ? B[i] + log_word[i] : (B[i] + log_emit[i]) + log_word[i];
      chart.at(i, j) = a < kLogFloor ? kNegInf : a;
    }
  }
  return chart;
}

std::vector<NodeId> SsntModel::encode_nodes(Graph& g, std::span<const TokenId> x,
                                            const DropoutSpec& dropout) {
  auto embed = [&](TokenId t) {
    NodeId e = g.lookup(*src_embed_, static_cast<std::size_t>(t));
    if (!dropout.training || dropout.rate == 0.0) return e;
    return ssnt::dropout(g, e, dropout.rate, *dropout.rng, true);
  };
  for (TokenId t : x) check_input_token(t);
  std::vector<NodeId> out(x.size() + 1);
  if (!config_.bidirectional) {
    LstmNodes st = encoder_.step(g, encoder_.zero_state(g), embed(kStart));
    out[0] = st.h;
    for (std::size_t i = 1; i <= x.size(); ++i) {
      st = encoder_.step(g, st, embed(x[i - 1]));
      out[i] = st.h;
    }
    return out;
  }
  std::vector<NodeId> fwd(x.size() + 1), bwd(x.size() + 1);
  LstmNodes st = encoder_.step(g, encoder_.zero_state(g), embed(kStart));
  fwd[0] = st.h;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    st = encoder_.step(g, st, embed(x[i - 1]));
    fwd[i] = st.h;
  }
  LstmNodes bt = encoder_backward_.step(g, encoder_backward_.zero_state(g), embed(kStart));
  for (std::size_t i = x.size(); i >= 1; --i) {
    bt = encoder_backward_.step(g, bt, embed(x[i - 1]));
    bwd[i] = bt.h;
  }
  bwd[0] = bt.h;
  for (std::size_t i = 0; i <= x.size(); ++i) {
    const NodeId parts[2] = {fwd[i], bwd[i]};
    out[i] = g.concat(parts);
  }
  return out;
}

NodeId SsntModel::sequence_nll(Graph& g, std::span<const TokenId> x, std::span<const TokenId> y,
                               const DropoutSpec& dropout, bool full_consumption) {
  if (x.empty() || y.empty()) throw DataError("sequence_nll needs non-empty x and y");
  if (dropout.training && dropout.rate > 0.0 && dropout.rng == nullptr) {
    throw ContractError("training dropout needs an rng");
  }
  const std::size_t I = x.size(), J = y.size(), H = config_.hidden;
  auto drop = [&](NodeId v) {
    if (!dropout.training || dropout.rate == 0.0) return v;
    return ssnt::dropout(g, v, dropout.rate, *dropout.rng, true);
  };

  std::vector<NodeId> enc = encode_nodes(g, x, dropout);
  std::vector<NodeId> in_word(I + 1), in_emit(I + 1);
  for (std::size_t i = 1; i <= I; ++i) {
    NodeId h = drop(enc[i]);
    in_word[i] = g.add(g.matvec(*word_w_, h, 0), g.param(*word_b_));
    in_emit[i] = g.add(g.matvec(*emit_w_, h, 0), g.param(*emit_b_));
  }

  auto embed = [&](TokenId t) {
    check_output_token(t);
    return drop(g.lookup(*tgt_embed_, static_cast<std::size_t>(t)));
  };
  LstmNodes s = decoder_.step(g, decoder_.zero_state(g), embed(kStart));

  std::vector<NodeId> prev_alpha(I + 1), alpha(I + 1), B(I + 1), log_shift(I + 1);
  for (std::size_t j = 1; j <= J; ++j) {
    if (j > 1) s = decoder_.step(g, s, embed(y[j - 2]));
    check_output_token(y[j - 1]);
    NodeId sd = drop(s.h);
    NodeId out_word = g.matvec(*word_w_, sd, H);
    NodeId out_emit = g.matvec(*emit_w_, sd, H);
    for (std::size_t i = 1; i <= I; ++i) {
      const bool forced = i == I;
      NodeId logit = 0;
      if (!forced) {
        NodeId hidden = g.tanh(g.add(in_emit[i], out_emit));
        logit = g.add(g.matvec(*emit_out_w_, hidden), g.param(*emit_out_b_));
      }
      if (i < I) log_shift[i] = g.log_sigmoid(g.neg(logit));

      if (j == 1) {
        B[i] = i == 1 ? g.scalar(0.0) : g.add(B[i - 1], log_shift[i - 1]);
      } else if (i == 1) {
        B[i] = prev_alpha[1];
      } else {
        const NodeId terms[2] = {prev_alpha[i], g.add(B[i - 1], log_shift[i - 1])};
        B[i] = g.log_sum_exp(terms);
      }
      NodeId word = g.log_softmax_pick(g.add(in_word[i], out_word),
                                       static_cast<std::size_t>(y[j - 1]));
      alpha[i] = forced ? g.add(B[i], word) : g.add(g.add(B[i], g.log_sigmoid(logit)), word);
    }
    std::swap(prev_alpha, alpha);
  }
  if (full_consumption) return g.neg(prev_alpha[I]);
  std::vector<NodeId> ends(prev_alpha.begin() + 1, prev_alpha.end());
  return g.neg(g.log_sum_exp(ends));
}

double alignment_transition(std::size_t z_prev, std::size_t i, std::span<const double> emit_probs,
                            bool force_final_emit) {
  const std::size_t I = emit_probs.size();
  if (z_prev < 1 || i < 1 || z_prev > I || i > I) {
    throw DataError("alignment positions must lie in [1, " + std::to_string(I) + "]");
  }
  if (i < z_prev) return 0.0;
  auto emit = [&](std::size_t k) {
    return force_final_emit && k == I ? 1.0 : emit_probs[k - 1];
  };
  double p = 1.0;
  for (std::size_t k = z_prev; k < i; ++k) p *= 1.0 - emit(k);
  return p * emit(i);
}

ExtensionTable extension_table(const SsntModel& model, const InputEncoding& input,
                               const OutputProjection& s, std::size_t from) {
  const std::size_t I = input.length();
  if (from < 1 || from > I) throw DataError("extension start outside the input");
  ExtensionTable t;
  t.from = from;
  t.log_transition.assign(I + 1, kNegInf);
  t.log_word.assign(I + 1, {});
  double shifted = 0.0;
  for (std::size_t i = from; i <= I; ++i) {
    const double logit = model.emit_logit(input.projections[i], s);
    t.log_transition[i] = i == I ? shifted : shifted + kernels::log_sigmoid(logit);
    shifted += kernels::log_sigmoid(-logit);
    t.log_word[i].resize(model.config().output_vocab);
    model.word_log_probs(input.projections[i], s, t.log_word[i]);
  }
  return t;
}

std::vector<Extension> direct_next_scores(const SsntModel& model, const InputEncoding& input,
                                          const OutputProjection& s, std::size_t from,
                                          double base, std::size_t k) {
  ExtensionTable t = extension_table(model, input, s, from);
  std::vector<Extension> all;
  for (std::size_t i = from; i <= input.length(); ++i) {
    for (std::size_t y = 0; y < t.log_word[i].size(); ++y) {
      all.push_back({static_cast<TokenId>(y), i, base + t.log_transition[i] + t.log_word[i][y]});
    }
  }
  auto better = [](const Extension& a, const Extension& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.token != b.token) return a.token < b.token;
    return a.position < b.position;
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    better);
  all.resize(keep);
  return all;
}

}  // namespace ssnt
