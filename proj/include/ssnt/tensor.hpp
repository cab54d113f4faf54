#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ssnt {

// Dense row-major tensor of doubles. Models here only need rank 1 and 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  // Throws NumericError naming `what` if any entry is NaN or infinite.
  void check_finite(const std::string& what) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor gradient;

  Parameter(std::string n, Tensor v);
  void zero_gradient() { gradient.fill(0.0); }
};

// Owns a model's parameters in creation order. Addresses are stable.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t k) { return *params_[k]; }
  const Parameter& operator[](std::size_t k) const { return *params_[k]; }

  void zero_gradients();
  std::size_t scalar_count() const;

  // Value copy of every tensor, for best-epoch snapshots.
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Seeded generator. Draw sequences are fully determined by the seed and do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 42) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t k = items.size(); k > 1; --k) {
      std::size_t r = below(k);
      std::swap(items[k - 1], items[r]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

namespace kernels {

// out += W[:, col_offset : col_offset + x.size()] * x
void matvec_accumulate(const Tensor& w, std::span<const double> x, std::size_t col_offset,
                       std::span<double> out);

double sigmoid(double s);
// log(sigmoid(s)) without overflow for large |s|.
double log_sigmoid(double s);
double log_add_exp(double a, double b);
double log_sum_exp(std::span<const double> v);
void log_softmax(std::span<const double> v, std::span<double> out);
void softmax(std::span<const double> v, std::span<double> out);

// LSTM cell with gate order (input, forget, candidate, output) stacked in
// the rows of `w` (4H x (E+H)) and `b` (4H). `gates` receives the 4H
// post-activation gate values.
void lstm_cell(const Tensor& w, const Tensor& b, std::span<const double> x,
               std::span<const double> h_prev, std::span<const double> c_prev,
               std::span<double> h, std::span<double> c, std::span<double> gates);

}  // namespace kernels

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// log-probabilities below this are treated as impossible.
constexpr double kLogFloor = -745.0;

}  // namespace ssnt
