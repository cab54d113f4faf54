#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssnt/channel.hpp"
#include "ssnt/corpus.hpp"
#include "ssnt/lm.hpp"
#include "ssnt/ssnt_model.hpp"

namespace ssnt {

// Weights of the combined objective
//   direct * log q(y, z | x) + channel * log p(x | y) + lm * log p(y)
//   + length * |y|.
struct Lambda {
  double direct = 1.0;
  double channel = 1.0;
  double lm = 1.0;
  double length = 0.0;

  friend bool operator==(const Lambda&, const Lambda&) = default;
};

Lambda parse_lambda(const std::string& text);  // "l1,l2,l3,l4"
std::string format_lambda(const Lambda& lambda);

struct DecodeConfig {
  std::size_t k1 = 20;
  std::size_t k2 = 10;
  std::size_t jmax = 0;  // 0 selects default_jmax(|x|)

  void validate() const;
};

std::size_t default_jmax(std::size_t input_length);

// A weight of exactly zero drops its term (so an impossible component does
// not poison a score it is not meant to influence); otherwise -inf absorbs.
double combined_objective(double direct_lp, double channel_lp, double lm_lp, std::size_t length,
                          const Lambda& lambda);

// Models taking part in a decode. channel and lm may be null, which forces
// their weights to zero.
struct DecoderModels {
  const SsntModel* direct = nullptr;
  const SsntModel* channel = nullptr;
  const LanguageModel* lm = nullptr;
};

// Effective weights after zeroing absent models.
Lambda effective_lambda(const DecoderModels& models, Lambda lambda);

struct HypothesisState;

struct BeamEntry {
  double score = 0.0;  // combined objective
  double direct_lp = 0.0;
  double channel_lp = 0.0;
  double lm_lp = 0.0;
  TokenId token = kPad;
  std::size_t bp_position = 0;  // predecessor cell (bp_position, j-1); 0 at j = 1
  std::size_t bp_slot = 0;
  bool terminal = false;  // ends in EOS at i = I
  std::shared_ptr<HypothesisState> state;
};

// Q / bp / W lattice: cell (i, j) holds at most K2 entries sorted best first.
class BeamChart {
 public:
  BeamChart() = default;
  BeamChart(std::size_t input_length, std::size_t jmax);

  std::size_t input_length() const { return input_length_; }
  std::size_t jmax() const { return jmax_; }
  std::vector<BeamEntry>& cell(std::size_t i, std::size_t j);
  const std::vector<BeamEntry>& cell(std::size_t i, std::size_t j) const;

 private:
  std::size_t input_length_ = 0;
  std::size_t jmax_ = 0;
  std::vector<std::vector<BeamEntry>> cells_;
};

// Tokens from column 1 to the entry at (i, j, slot), following backpointers.
std::vector<TokenId> backtrace(const BeamChart& chart, std::size_t i, std::size_t j,
                               std::size_t slot);
// Input positions z_1..z_j visited by the same chain.
std::vector<std::size_t> backtrace_alignment(const BeamChart& chart, std::size_t i, std::size_t j,
                                             std::size_t slot);

struct DecodeStats {
  std::size_t expansions = 0;      // predecessor hypotheses whose extension table was built
  std::size_t direct_scores = 0;   // (predecessor, target cell, token) proposals scored
  std::size_t rescored = 0;        // proposals rescored by the combined objective
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // EOS stripped
  double score = kNegInf;
  bool terminal = false;        // false: truncated at jmax
  std::size_t end_column = 0;   // j of the returned entry (EOS included)
  std::size_t end_slot = 0;
  BeamChart chart;
  DecodeStats stats;
};

DecodeResult noisy_channel_decode(std::span<const TokenId> x, const DecoderModels& models,
                                  const Lambda& lambda, const DecodeConfig& config);

// Lattice beam search with the direct model alone; each cell keeps the best
// `beam` extensions by Viterbi path score.
DecodeResult direct_beam_search(std::span<const TokenId> x, const SsntModel& direct,
                                std::size_t beam, std::size_t jmax = 0);

// Decodes every input, spreading inputs over `workers` threads. Output order
// matches input order.
std::vector<DecodeResult> decode_all(const std::vector<std::vector<TokenId>>& inputs,
                                     const DecoderModels& models, const Lambda& lambda,
                                     const DecodeConfig& config, std::size_t workers = 1);

enum class DevMetric { kExactMatch, kRougeL };

struct GridSearchResult {
  Lambda best;
  double best_score = -1.0;
  std::vector<double> scores;  // one per grid point, in grid order
};

// Decodes the dev inputs under every grid point and returns the point with
// the highest metric; ties go to the earlier point.
GridSearchResult grid_search_lambda(const std::vector<std::vector<TokenId>>& dev_inputs,
                                    const std::vector<std::vector<std::string>>& dev_refs,
                                    const Vocabulary& output_vocab, const DecoderModels& models,
                                    const std::vector<Lambda>& grid, const DecodeConfig& config,
                                    DevMetric metric, std::size_t workers = 1);

}  // namespace ssnt
