#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "ssnt/corpus.hpp"
#include "ssnt/graph.hpp"
#include "ssnt/nn.hpp"
#include "ssnt/tensor.hpp"

namespace ssnt {

struct SsntConfig {
  std::size_t input_vocab = 0;
  std::size_t output_vocab = 0;
  std::size_t embed = 128;
  std::size_t hidden = 256;
  // Direct role only: encoder state is [forward; backward] with H/2 each.
  bool bidirectional = false;
};

// Training-time dropout applied to LSTM inputs (embeddings) and to the
// LSTM outputs consumed by the scorers.
struct DropoutSpec {
  double rate = 0.0;
  Rng* rng = nullptr;
  bool training = false;
};

// Input-side half of both scorers: W[:, :H] h + b for the word softmax and
// the emit MLP.
struct InputProjection {
  std::vector<double> word;
  std::vector<double> emit;
};

// Output-prefix half: W[:, H:] s.
struct OutputProjection {
  std::vector<double> word;
  std::vector<double> emit;
};

// h_0 .. h_I for an input prefix; states[0] is the encoder after START.
struct EncoderStates {
  std::vector<LstmState> states;

  std::size_t length() const { return states.size() - 1; }
  const std::vector<double>& h(std::size_t i) const { return states[i].h; }
};

// log alpha(i, j) for 1 <= i <= I, 1 <= j <= J; row 0 and column 0 are
// unused and hold -inf.
struct ForwardChart {
  std::size_t input_length = 0;
  std::size_t output_length = 0;
  std::vector<double> log_alpha;

  double at(std::size_t i, std::size_t j) const { return log_alpha[i * (output_length + 1) + j]; }
  double& at(std::size_t i, std::size_t j) { return log_alpha[i * (output_length + 1) + j]; }
  // Full-consumption marginal log alpha(I, J).
  double corner() const { return at(input_length, output_length); }
  // log sum_i alpha(i, J): paths may end at any input position.
  double any_end() const;
};

// Encoded input with per-position projections, reused across hypotheses.
struct InputEncoding {
  EncoderStates encoder;
  std::vector<InputProjection> projections;  // index 1..I; [0] unused

  std::size_t length() const { return encoder.length(); }
};

class SsntModel {
 public:
  // Parameters are allocated and zero.
  explicit SsntModel(SsntConfig config);
  // Parameters drawn uniformly from [-0.08, 0.08], forget biases 1.
  SsntModel(SsntConfig config, Rng& init_rng);

  SsntModel(const SsntModel&) = delete;
  SsntModel& operator=(const SsntModel&) = delete;

  const SsntConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t hidden() const { return config_.hidden; }

  // --- value path -------------------------------------------------------
  EncoderStates encoder_start() const;
  // Appends h_{i+1}; earlier states are untouched. Unidirectional only.
  void encode_input_prefix(EncoderStates& states, TokenId next) const;
  EncoderStates encode_input(std::span<const TokenId> x) const;
  InputEncoding encode_and_project(std::span<const TokenId> x) const;

  // s_1: the output-prefix LSTM after consuming START.
  LstmState decoder_start() const;
  // s_{j+1} from s_j and y_j.
  LstmState decoder_step(const LstmState& s, TokenId y) const;

  InputProjection project_input(std::span<const double> h) const;
  OutputProjection project_output(std::span<const double> s) const;

  // MLP score inside the sigmoid of p(EMIT).
  double emit_logit(const InputProjection& h, const OutputProjection& s) const;
  void word_log_probs(const InputProjection& h, const OutputProjection& s,
                      std::span<double> out) const;

  double emit_probability(std::span<const double> h, std::span<const double> s) const;
  std::vector<double> word_distribution(std::span<const double> h,
                                        std::span<const double> s) const;

  // With force_final_emit the emit probability at i = I is 1, so no mass
  // shifts past the end of x.
  ForwardChart forward_chart(std::span<const TokenId> x, std::span<const TokenId> y,
                             bool force_final_emit = true) const;

  // --- tape path --------------------------------------------------------
  // -log alpha(|x|, |y|), or -log sum_i alpha(i, |y|) over the same chart
  // when full_consumption is false. y must include its EOS.
  NodeId sequence_nll(Graph& g, std::span<const TokenId> x, std::span<const TokenId> y,
                      const DropoutSpec& dropout = {}, bool full_consumption = true);

 private:
  void create_parameters();
  void check_input_token(TokenId t) const;
  void check_output_token(TokenId t) const;
  std::vector<NodeId> encode_nodes(Graph& g, std::span<const TokenId> x,
                                   const DropoutSpec& dropout);

  SsntConfig config_;
  ParameterSet params_;
  Parameter* src_embed_ = nullptr;
  Parameter* tgt_embed_ = nullptr;
  LstmLayer encoder_;
  LstmLayer encoder_backward_;
  LstmLayer decoder_;
  Parameter* word_w_ = nullptr;
  Parameter* word_b_ = nullptr;
  Parameter* emit_w_ = nullptr;
  Parameter* emit_b_ = nullptr;
  Parameter* emit_out_w_ = nullptr;
  Parameter* emit_out_b_ = nullptr;
};

// p(z_j = i | z_{j-1} = z_prev) from the emit probabilities of one output
// step. Positions are 1-based; emit_probs[k] is p(EMIT) at position k+1.
double alignment_transition(std::size_t z_prev, std::size_t i, std::span<const double> emit_probs,
                            bool force_final_emit = true);

// Log transition and word probabilities for extending a hypothesis whose
// last alignment is k, given s_j's projection. Entries for positions < k
// are left -inf.
struct ExtensionTable {
  std::size_t from = 1;
  std::vector<double> log_transition;           // index i in [0, I]
  std::vector<std::vector<double>> log_word;    // index i, then token
};

ExtensionTable extension_table(const SsntModel& model, const InputEncoding& input,
                               const OutputProjection& s, std::size_t from);

struct Extension {
  TokenId token = 0;
  std::size_t position = 0;
  double score = 0.0;
};

// The global top-k extensions (i, y) with i >= from, scored as
// base + log q(z_j = i | z_{j-1} = from) + log q(y | ...). Ordered by score,
// then token id, then position.
std::vector<Extension> direct_next_scores(const SsntModel& model, const InputEncoding& input,
                                          const OutputProjection& s, std::size_t from,
                                          double base, std::size_t k);

}  // namespace ssnt
