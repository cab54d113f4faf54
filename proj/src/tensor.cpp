#include "ssnt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssnt/error.hpp"

namespace ssnt {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " +
                         std::to_string(shape_product(shape_)));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite()) throw NumericError("non-finite value in " + what);
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), gradient(value.shape(), 0.0) {}

Parameter& ParameterSet::add(const std::string& name, std::vector<std::size_t> shape) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Parameter>(name, Tensor(std::move(shape))));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterSet::get(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ConfigError("unknown parameter: " + name);
  return *p;
}

const Parameter& ParameterSet::get(const std::string& name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw ConfigError("unknown parameter: " + name);
  return *p;
}

void ParameterSet::zero_gradients() {
  for (auto& p : params_) p->zero_gradient();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Tensor> ParameterSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw DimensionError("snapshot size mismatch");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k].shape() != params_[k]->value.shape()) {
      throw DimensionError("snapshot shape mismatch for " + params_[k]->name);
    }
    params_[k]->value = values[k];
  }
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ContractError("Rng::below(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

namespace kernels {

void matvec_accumulate(const Tensor& w, std::span<const double> x, std::size_t col_offset,
                       std::span<double> out) {
  const std::size_t cols = w.cols();
  if (w.rank() != 2 || col_offset + x.size() > cols || out.size() != w.rows()) {
    throw DimensionError("matvec: W is " + std::to_string(w.rows()) + "x" +
                         std::to_string(cols) + ", x has " + std::to_string(x.size()) +
                         " entries at column " + std::to_string(col_offset) + ", out has " +
                         std::to_string(out.size()));
  }
  const double* row = w.data().data() + col_offset;
  for (std::size_t r = 0; r < out.size(); ++r, row += cols) {
    double acc = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double log_sigmoid(double s) {
  if (s >= 0.0) return -std::log1p(std::exp(-s));
  return s - std::log1p(std::exp(s));
}

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void log_softmax(std::span<const double> v, std::span<double> out) {
  double m = kNegInf;
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("softmax input is not finite");
    m = std::max(m, x);
  }
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  const double lse = m + std::log(s);
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] - lse;
}

void softmax(std::span<const double> v, std::span<double> out) {
  double m = kNegInf;
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("softmax input is not finite");
    m = std::max(m, x);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out[k] = std::exp(v[k] - m);
    s += out[k];
  }
  for (double& o : out) o /= s;
}

void lstm_cell(const Tensor& w, const Tensor& b, std::span<const double> x,
               std::span<const double> h_prev, std::span<const double> c_prev,
               std::span<double> h, std::span<double> c, std::span<double> gates) {
  const std::size_t hidden = h_prev.size();
  if (w.rows() != 4 * hidden || w.cols() != x.size() + hidden || b.size() != 4 * hidden ||
      gates.size() != 4 * hidden || c_prev.size() != hidden) {
    throw DimensionError("lstm_cell: weight " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " does not fit input " +
                         std::to_string(x.size()) + " and hidden " + std::to_string(hidden));
  }
  std::copy(b.data().begin(), b.data().end(), gates.begin());
  matvec_accumulate(w, x, 0, gates);
  matvec_accumulate(w, h_prev, x.size(), gates);
  for (std::size_t k = 0; k < hidden; ++k) {
    const double i = sigmoid(gates[k]);
    const double f = sigmoid(gates[hidden + k]);
    const double g = std::tanh(gates[2 * hidden + k]);
    const double o = sigmoid(gates[3 * hidden + k]);
    gates[k] = i;
    gates[hidden + k] = f;
    gates[2 * hidden + k] = g;
    gates[3 * hidden + k] = o;
    c[k] = f * c_prev[k] + i * g;
    h[k] = o * std::tanh(c[k]);
  }
}

}  // namespace kernels
}  // namespace ssnt
