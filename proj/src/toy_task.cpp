#include "ssnt/toy_task.hpp"

#include <numeric>

#include "ssnt/checkpoint.hpp"
#include "ssnt/error.hpp"

namespace ssnt {

ToyTask::ToyTask(ToyTaskOptions options) : options_(options) {
  const std::size_t V = options_.vocab;
  if (V < 3 || V > 26) throw ConfigError("toy vocabulary must have 3 to 26 symbols");
  if (options_.suffixes < 1 || options_.suffixes >= V) {
    throw ConfigError("toy suffix alphabet needs between 1 and vocab - 1 symbols");
  }
  const std::size_t body = V - options_.suffixes;
  if (options_.min_length < 2 || options_.min_length > options_.max_length) {
    throw ConfigError("toy lengths need 2 <= min_length <= max_length");
  }
  if (options_.successors < 1 || options_.successors > body) {
    throw ConfigError("toy successor count must lie in [1, body alphabet size]");
  }
  for (std::size_t k = 0; k < V; ++k) symbols_.push_back(std::string(1, static_cast<char>('a' + k)));

  Rng rng(options_.task_seed);
  auto sparse_row = [&](std::size_t offset, std::size_t n, std::size_t keep,
                        std::vector<std::vector<std::size_t>>& support,
                        std::vector<std::vector<double>>& weights) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), offset);
    rng.shuffle(all);
    all.resize(keep);
    std::vector<double> w;
    for (std::size_t s = 0; s < all.size(); ++s) w.push_back(rng.uniform(0.2, 1.0));
    support.push_back(all);
    weights.push_back(w);
  };
  for (std::size_t k = 0; k < body; ++k) start_weights_.push_back(rng.uniform(0.5, 1.5));
  const std::size_t final_keep = std::min(options_.successors, options_.suffixes);
  for (std::size_t k = 0; k < body; ++k) {
    sparse_row(0, body, options_.successors, next_, next_weights_);
    sparse_row(body, options_.suffixes, final_keep, final_, final_weights_);
  }
  rewrite_even_.resize(options_.suffixes);
  rewrite_odd_.resize(options_.suffixes);
  std::iota(rewrite_even_.begin(), rewrite_even_.end(), body);
  std::iota(rewrite_odd_.begin(), rewrite_odd_.end(), body);
  rng.shuffle(rewrite_even_);
  rng.shuffle(rewrite_odd_);
}

std::size_t ToyTask::draw(const std::vector<std::size_t>& support, const std::vector<double>& weights,
                          Rng& rng) const {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t k = 0; k < support.size(); ++k) {
    if (u < weights[k]) return support[k];
    u -= weights[k];
  }
  return support.back();
}

std::size_t ToyTask::index_of(const std::string& s) const {
  for (std::size_t k = 0; k < symbols_.size(); ++k) {
    if (symbols_[k] == s) return k;
  }
  throw DataError("'" + s + "' is not a toy symbol");
}

std::vector<std::string> ToyTask::sample_input(Rng& rng) const {
  const std::size_t len =
      options_.min_length + rng.below(options_.max_length - options_.min_length + 1);
  std::vector<std::size_t> all(start_weights_.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::string> out;
  std::size_t cur = draw(all, start_weights_, rng);
  out.push_back(symbols_[cur]);
  while (out.size() + 1 < len) {
    cur = draw(next_[cur], next_weights_[cur], rng);
    out.push_back(symbols_[cur]);
  }
  out.push_back(symbols_[draw(final_[cur], final_weights_[cur], rng)]);
  return out;
}

std::vector<std::string> ToyTask::rewrite(const std::vector<std::string>& input) const {
  if (input.size() < 2) throw DataError("toy inputs have at least two symbols");
  const std::size_t body = options_.vocab - options_.suffixes;
  const std::size_t before = index_of(input[input.size() - 2]);
  const std::size_t last = index_of(input.back());
  if (before >= body || last < body) throw DataError("toy input does not end in body then suffix symbol");
  std::vector<std::string> out = input;
  out.back() = symbols_[before % 2 == 0 ? rewrite_even_[last - body] : rewrite_odd_[last - body]];
  return out;
}

ParallelText ToyTask::sample_pairs(std::size_t n, Rng& rng) const {
  ParallelText t;
  for (std::size_t k = 0; k < n; ++k) {
    auto x = sample_input(rng);
    t.target.push_back(rewrite(x));
    t.source.push_back(std::move(x));
  }
  return t;
}

std::vector<std::vector<std::string>> ToyTask::sample_outputs(std::size_t n, Rng& rng) const {
  std::vector<std::vector<std::string>> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(rewrite(sample_input(rng)));
  return out;
}

void write_lines(const std::string& path, const std::vector<std::vector<std::string>>& lines) {
  std::string text;
  for (const auto& line : lines) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (k > 0) text += ' ';
      text += line[k];
    }
    text += '\n';
  }
  write_file_atomic(path, text);
}

}  // namespace ssnt
