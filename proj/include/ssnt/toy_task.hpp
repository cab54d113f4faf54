#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssnt/corpus.hpp"
#include "ssnt/tensor.hpp"

namespace ssnt {

// Synthetic monotone transduction. The first `vocab - suffixes` symbols form
// the body alphabet and the rest the suffix alphabet. An input is a body
// drawn from a sparse bigram source followed by one suffix symbol that
// depends on the last body symbol. The output copies the body and rewrites
// the suffix symbol by one of two permutations of the suffix alphabet, chosen
// by the parity of the body symbol before it.
struct ToyTaskOptions {
  std::size_t vocab = 12;
  std::size_t min_length = 3;
  std::size_t max_length = 8;
  std::size_t suffixes = 4;
  std::size_t successors = 3;  // out-degree of the bigram source
  std::uint64_t task_seed = 1;
};

class ToyTask {
 public:
  explicit ToyTask(ToyTaskOptions options);

  const ToyTaskOptions& options() const { return options_; }
  const std::string& symbol(std::size_t k) const { return symbols_[k]; }

  std::vector<std::string> sample_input(Rng& rng) const;
  std::vector<std::string> rewrite(const std::vector<std::string>& input) const;

  ParallelText sample_pairs(std::size_t n, Rng& rng) const;
  std::vector<std::vector<std::string>> sample_outputs(std::size_t n, Rng& rng) const;

 private:
  std::size_t draw(const std::vector<std::size_t>& support, const std::vector<double>& weights,
                   Rng& rng) const;
  std::size_t index_of(const std::string& s) const;

  ToyTaskOptions options_;
  std::vector<std::string> symbols_;
  std::vector<double> start_weights_;
  std::vector<std::vector<std::size_t>> next_;
  std::vector<std::vector<double>> next_weights_;
  std::vector<std::vector<std::size_t>> final_;
  std::vector<std::vector<double>> final_weights_;
  std::vector<std::size_t> rewrite_even_;
  std::vector<std::size_t> rewrite_odd_;
};

// Writes `lines` joined by spaces, one per line.
void write_lines(const std::string& path, const std::vector<std::vector<std::string>>& lines);

}  // namespace ssnt
