#include "ssnt/channel.hpp"

#include "ssnt/error.hpp"

namespace ssnt {

ChannelScorer::ChannelScorer(const SsntModel& channel, std::span<const TokenId> x)
    : model_(channel), x_(x.begin(), x.end()) {
  const std::size_t R = rows();
  out_.resize(R + 1);
  LstmState s = model_.decoder_start();
  for (std::size_t r = 1; r <= R; ++r) {
    if (r > 1) s = model_.decoder_step(s, x_[r - 2]);
    out_[r] = model_.project_output(s.h);
  }
  auto root = std::make_shared<Column>();
  root->index = 0;
  root->encoder = model_.encoder_start().states[0];
  root->prefix.assign(R + 1, kNegInf);
  root->prefix[0] = 0.0;
  root_ = std::move(root);
}

ChannelScorer::ColumnPtr ChannelScorer::extend(const ColumnPtr& prev, TokenId y) const {
  const std::size_t R = rows();
  EncoderStates st;
  st.states.push_back(prev->encoder);
  model_.encode_input_prefix(st, y);

  auto col = std::make_shared<Column>();
  col->prev = prev;
  col->index = prev->index + 1;
  col->encoder = st.states.back();
  col->projection = model_.project_input(col->encoder.h);
  col->log_emit.assign(R + 1, kNegInf);
  col->log_shift.assign(R + 1, kNegInf);
  col->log_word.assign(R + 1, kNegInf);
  col->partial.assign(R + 1, kNegInf);
  col->beta.assign(R + 1, kNegInf);
  col->prefix.assign(R + 1, kNegInf);

  const bool first = col->index == 1;
  col->beta[0] = first ? 0.0 : kNegInf;
  col->prefix[0] = 0.0;
  std::vector<double> logp(model_.config().output_vocab);
  for (std::size_t r = 1; r <= R; ++r) {
    const double logit = model_.emit_logit(col->projection, out_[r]);
    col->log_emit[r] = kernels::log_sigmoid(logit);
    col->log_shift[r] = kernels::log_sigmoid(-logit);
    model_.word_log_probs(col->projection, out_[r], logp);
    const TokenId target = r <= x_.size() ? x_[r - 1] : kEos;
    col->log_word[r] = logp[static_cast<std::size_t>(target)];

    if (r == 1) {
      col->partial[r] = first ? 0.0 : prev->partial[1] + prev->log_shift[1];
    } else if (first) {
      col->partial[r] = col->beta[r - 1];
    } else {
      const double terms[2] = {col->beta[r - 1], prev->partial[r] + prev->log_shift[r]};
      col->partial[r] = kernels::log_sum_exp(terms);
    }
    col->beta[r] = (col->partial[r] + col->log_emit[r]) + col->log_word[r];
    if (first) {
      col->prefix[r] = col->beta[r];
    } else {
      const double terms[2] = {prev->prefix[r], col->beta[r]};
      col->prefix[r] = kernels::log_sum_exp(terms);
    }
  }
  return col;
}

double ChannelScorer::prefix_score(const ColumnPtr& col, std::size_t r) const {
  if (r > rows()) throw DataError("channel prefix longer than the observed input");
  return col->prefix[r];
}

double ChannelScorer::exact_score(const ColumnPtr& col) const {
  if (col->index == 0) return kNegInf;
  const std::size_t R = rows();
  const bool first = col->index == 1;
  const Column* prev = col->prev.get();
  double beta_prev_row = first ? 0.0 : kNegInf;
  double beta = kNegInf;
  for (std::size_t r = 1; r <= R; ++r) {
    double partial;
    if (r == 1) {
      partial = first ? 0.0 : prev->partial[1] + prev->log_shift[1];
    } else if (first) {
      partial = beta_prev_row;
    } else {
      const double terms[2] = {beta_prev_row, prev->partial[r] + prev->log_shift[r]};
      partial = kernels::log_sum_exp(terms);
    }
    beta = partial + col->log_word[r];
    beta_prev_row = beta;
  }
  return beta < kLogFloor ? kNegInf : beta;
}

double channel_prefix_score(const SsntModel& channel, std::span<const TokenId> y_prefix,
                            std::span<const TokenId> x_prefix) {
  if (x_prefix.empty()) return 0.0;
  ChannelScorer scorer(channel, x_prefix);
  auto col = scorer.root();
  for (TokenId y : y_prefix) col = scorer.extend(col, y);
  return scorer.prefix_score(col, x_prefix.size());
}

double channel_exact_score(const SsntModel& channel, std::span<const TokenId> y,
                           std::span<const TokenId> x) {
  ChannelScorer scorer(channel, x);
  auto col = scorer.root();
  for (TokenId t : y) col = scorer.extend(col, t);
  return scorer.exact_score(col);
}

}  // namespace ssnt
