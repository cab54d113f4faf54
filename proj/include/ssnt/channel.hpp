#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "ssnt/ssnt_model.hpp"

namespace ssnt {

// Incremental scorer for log p(x_1^r | y_1^c) under a model trained in the
// channel role (reads y, emits x). The observed x is fixed per instance, so
// its prefix encodings are computed once; each hypothesis owns a chain of
// columns, one per y token read, and extending by one token costs O(|x|)
// scorer evaluations without touching earlier columns.
//
// Rows r = 1..|x| are the tokens of x and row |x|+1 is EOS.
class ChannelScorer {
 public:
  struct Column {
    std::shared_ptr<const Column> prev;
    std::size_t index = 0;  // number of y tokens read
    LstmState encoder;
    InputProjection projection;
    // Per row r in [0, |x|+1]; entry 0 is unused except in `beta`.
    std::vector<double> log_emit;
    std::vector<double> log_shift;
    std::vector<double> log_word;
    std::vector<double> partial;  // B(r, c): mass arriving at column c for row r
    std::vector<double> beta;     // log beta(r, c)
    std::vector<double> prefix;   // log sum_{c' <= c} beta(r, c')
  };
  using ColumnPtr = std::shared_ptr<const Column>;

  ChannelScorer(const SsntModel& channel, std::span<const TokenId> x);

  std::size_t rows() const { return x_.size() + 1; }
  std::span<const TokenId> observed() const { return x_; }

  // The empty y prefix.
  ColumnPtr root() const { return root_; }
  ColumnPtr extend(const ColumnPtr& prev, TokenId y) const;

  // log sum_{c <= |y_prefix|} beta(r, c): the first r tokens of x are emitted
  // while reading at most y_prefix. r = 0 gives 0.
  double prefix_score(const ColumnPtr& col, std::size_t r) const;
  // log p(x, EOS | y) with the last column treated as the end of y, i.e. the
  // full-consumption corner cell. -inf for an empty y.
  double exact_score(const ColumnPtr& col) const;

 private:
  const SsntModel& model_;
  std::vector<TokenId> x_;
  std::vector<OutputProjection> out_;  // index 1..rows()
  ColumnPtr root_;
};

// Convenience wrapper: builds the scorer and reads y_prefix in full.
double channel_prefix_score(const SsntModel& channel, std::span<const TokenId> y_prefix,
                            std::span<const TokenId> x_prefix);
double channel_exact_score(const SsntModel& channel, std::span<const TokenId> y,
                           std::span<const TokenId> x);

}  // namespace ssnt
