#include "ssnt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssnt/error.hpp"

namespace ssnt {

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

std::span<const double> Graph::value(NodeId id) const {
  const Node& n = node(id);
  if (n.op == Op::kParam) return n.p0->value.data();
  return n.value;
}

double Graph::scalar_value(NodeId id) const {
  auto v = value(id);
  if (v.size() != 1) throw ContractError("node is not a scalar");
  return v[0];
}

void Graph::check_same_size(NodeId a, NodeId b, const char* op) const {
  if (size(a) != size(b)) {
    throw DimensionError(std::string(op) + ": operand sizes " + std::to_string(size(a)) +
                         " and " + std::to_string(size(b)) + " differ");
  }
}

NodeId Graph::constant(std::vector<double> values) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(values);
  return push(std::move(n));
}

NodeId Graph::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  Node n;
  n.op = Op::kParam;
  n.needs_grad = true;
  n.p0 = &p;
  NodeId id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return id;
}

NodeId Graph::lookup(Parameter& table, std::size_t row) {
  if (table.value.rank() != 2 || row >= table.value.rows()) {
    throw DimensionError("lookup: row " + std::to_string(row) + " outside table " + table.name);
  }
  const std::size_t width = table.value.cols();
  Node n;
  n.op = Op::kLookup;
  n.needs_grad = true;
  n.p0 = &table;
  n.aux = row;
  auto src = table.value.data().subspan(row * width, width);
  n.value.assign(src.begin(), src.end());
  return push(std::move(n));
}

NodeId Graph::matvec(Parameter& w, NodeId x, std::size_t col_offset) {
  Node n;
  n.op = Op::kMatVec;
  n.needs_grad = true;
  n.p0 = &w;
  n.a = x;
  n.aux = col_offset;
  n.value.assign(w.value.rows(), 0.0);
  kernels::matvec_accumulate(w.value, value(x), col_offset, n.value);
  return push(std::move(n));
}

NodeId Graph::affine(Parameter& w, NodeId x, Parameter& b) {
  if (w.value.cols() != size(x)) {
    throw DimensionError("affine: W has " + std::to_string(w.value.cols()) +
                         " columns but x has " + std::to_string(size(x)) + " entries");
  }
  NodeId wx = matvec(w, x);
  return add(wx, param(b));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_same_size(a, b, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  auto va = value(a), vb = value(b);
  n.value.resize(va.size());
  for (std::size_t k = 0; k < va.size(); ++k) n.value[k] = va[k] + vb[k];
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  check_same_size(a, b, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  auto va = value(a), vb = value(b);
  n.value.resize(va.size());
  for (std::size_t k = 0; k < va.size(); ++k) n.value[k] = va[k] - vb[k];
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_same_size(a, b, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  auto va = value(a), vb = value(b);
  n.value.resize(va.size());
  for (std::size_t k = 0; k < va.size(); ++k) n.value[k] = va[k] * vb[k];
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double k) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.k = k;
  n.needs_grad = node(a).needs_grad;
  auto va = value(a);
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = k * va[i];
  return push(std::move(n));
}

NodeId Graph::sum(std::span<const NodeId> parts) {
  if (parts.empty()) throw ContractError("sum of no nodes");
  Node n;
  n.op = Op::kSum;
  n.inputs.assign(parts.begin(), parts.end());
  n.value.assign(size(parts[0]), 0.0);
  for (NodeId p : parts) {
    check_same_size(parts[0], p, "sum");
    n.needs_grad = n.needs_grad || node(p).needs_grad;
    auto v = value(p);
    for (std::size_t k = 0; k < v.size(); ++k) n.value[k] += v[k];
  }
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.needs_grad = node(a).needs_grad;
  auto va = value(a);
  n.value.resize(va.size());
  for (std::size_t k = 0; k < va.size(); ++k) n.value[k] = std::tanh(va[k]);
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a;
  n.needs_grad = node(a).needs_grad;
  auto va = value(a);
  n.value.resize(va.size());
  for (std::size_t k = 0; k < va.size(); ++k) n.value[k] = kernels::sigmoid(va[k]);
  return push(std::move(n));
}

NodeId Graph::log_sigmoid(NodeId a) {
  Node n;
  n.op = Op::kLogSigmoid;
  n.a = a;
  n.needs_grad = node(a).needs_grad;
  auto va = value(a);
  n.value.resize(va.size());
  for (std::size_t k = 0; k < va.size(); ++k) n.value[k] = kernels::log_sigmoid(va[k]);
  return push(std::move(n));
}

NodeId Graph::dot(NodeId a, NodeId b) {
  check_same_size(a, b, "dot");
  Node n;
  n.op = Op::kDot;
  n.a = a;
  n.b = b;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  auto va = value(a), vb = value(b);
  double s = 0.0;
  for (std::size_t k = 0; k < va.size(); ++k) s += va[k] * vb[k];
  n.value = {s};
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId v) {
  Node n;
  n.op = Op::kSoftmax;
  n.a = v;
  n.needs_grad = node(v).needs_grad;
  n.value.resize(size(v));
  kernels::softmax(value(v), n.value);
  return push(std::move(n));
}

NodeId Graph::log_softmax(NodeId v) {
  Node n;
  n.op = Op::kLogSoftmax;
  n.a = v;
  n.needs_grad = node(v).needs_grad;
  n.value.resize(size(v));
  kernels::log_softmax(value(v), n.value);
  return push(std::move(n));
}

NodeId Graph::pick(NodeId v, std::size_t index) {
  if (index >= size(v)) throw DimensionError("pick index out of range");
  Node n;
  n.op = Op::kPick;
  n.a = v;
  n.aux = index;
  n.needs_grad = node(v).needs_grad;
  n.value = {value(v)[index]};
  return push(std::move(n));
}

NodeId Graph::log_softmax_pick(NodeId v, std::size_t index) {
  if (index >= size(v)) throw DimensionError("log_softmax_pick index out of range");
  Node n;
  n.op = Op::kLogSoftmaxPick;
  n.a = v;
  n.aux = index;
  n.needs_grad = node(v).needs_grad;
  std::vector<double> logp(size(v));
  kernels::log_softmax(value(v), logp);
  n.value = {logp[index]};
  if (n.needs_grad) {
    n.saved.resize(logp.size());
    for (std::size_t k = 0; k < logp.size(); ++k) n.saved[k] = std::exp(logp[k]);
  }
  return push(std::move(n));
}

NodeId Graph::log_sum_exp(std::span<const NodeId> scalars) {
  if (scalars.empty()) throw ContractError("log_sum_exp of no nodes");
  Node n;
  n.op = Op::kLogSumExp;
  n.inputs.assign(scalars.begin(), scalars.end());
  std::vector<double> xs;
  xs.reserve(scalars.size());
  for (NodeId s : scalars) {
    if (size(s) != 1) throw DimensionError("log_sum_exp expects scalar nodes");
    n.needs_grad = n.needs_grad || node(s).needs_grad;
    xs.push_back(value(s)[0]);
  }
  n.value = {kernels::log_sum_exp(xs)};
  return push(std::move(n));
}

NodeId Graph::concat(std::span<const NodeId> parts) {
  Node n;
  n.op = Op::kConcat;
  n.inputs.assign(parts.begin(), parts.end());
  for (NodeId p : parts) {
    n.needs_grad = n.needs_grad || node(p).needs_grad;
    auto v = value(p);
    n.value.insert(n.value.end(), v.begin(), v.end());
  }
  return push(std::move(n));
}

NodeId Graph::slice(NodeId a, std::size_t offset, std::size_t length) {
  if (offset + length > size(a)) throw DimensionError("slice out of range");
  Node n;
  n.op = Op::kSlice;
  n.a = a;
  n.aux = offset;
  n.needs_grad = node(a).needs_grad;
  auto v = value(a).subspan(offset, length);
  n.value.assign(v.begin(), v.end());
  return push(std::move(n));
}

NodeId Graph::lstm(NodeId x, NodeId h, NodeId c, Parameter& w, Parameter& b) {
  const std::size_t hidden = size(h);
  if (size(c) != hidden) throw DimensionError("lstm: h and c sizes differ");
  Node n;
  n.op = Op::kLstm;
  n.a = x;
  n.b = h;
  n.c = c;
  n.p0 = &w;
  n.p1 = &b;
  n.needs_grad = true;
  n.value.resize(2 * hidden);
  n.saved.resize(4 * hidden);
  std::span<double> out(n.value);
  kernels::lstm_cell(w.value, b.value, value(x), value(h), value(c), out.subspan(0, hidden),
                     out.subspan(hidden, hidden), n.saved);
  return push(std::move(n));
}

std::vector<double>& Graph::grad_of(std::vector<std::vector<double>>& grads, NodeId id) {
  auto& g = grads[id];
  if (g.empty()) g.assign(size(id), 0.0);
  return g;
}

void Graph::backward(NodeId loss) {
  if (size(loss) != 1) throw ContractError("backward requires a scalar loss node");
  if (!std::isfinite(scalar_value(loss))) {
    throw NumericError("loss is not finite: " + std::to_string(scalar_value(loss)));
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss] = {1.0};

  for (std::size_t idx = loss + 1; idx-- > 0;) {
    const NodeId id = static_cast<NodeId>(idx);
    Node& n = nodes_[id];
    if (!n.needs_grad || grads[id].empty()) continue;
    const std::vector<double>& g = grads[id];
    auto wants = [&](NodeId in) { return nodes_[in].needs_grad; };

    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kParam: {
        auto pg = n.p0->gradient.data();
        for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
        break;
      }
      case Op::kLookup: {
        const std::size_t width = n.p0->value.cols();
        auto pg = n.p0->gradient.data().subspan(n.aux * width, width);
        for (std::size_t k = 0; k < width; ++k) pg[k] += g[k];
        break;
      }
      case Op::kMatVec: {
        const Tensor& w = n.p0->value;
        const std::size_t cols = w.cols();
        auto x = value(n.a);
        auto wg = n.p0->gradient.data();
        for (std::size_t r = 0; r < g.size(); ++r) {
          if (g[r] == 0.0) continue;
          double* row = wg.data() + r * cols + n.aux;
          for (std::size_t c = 0; c < x.size(); ++c) row[c] += g[r] * x[c];
        }
        if (wants(n.a)) {
          auto& gx = grad_of(grads, n.a);
          const double* wd = w.data().data();
          for (std::size_t r = 0; r < g.size(); ++r) {
            const double* row = wd + r * cols + n.aux;
            for (std::size_t c = 0; c < gx.size(); ++c) gx[c] += row[c] * g[r];
          }
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const double sign = n.op == Op::kSub ? -1.0 : 1.0;
        if (wants(n.a)) {
          auto& ga = grad_of(grads, n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (wants(n.b)) {
          auto& gb = grad_of(grads, n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += sign * g[k];
        }
        break;
      }
      case Op::kMul: {
        auto va = value(n.a), vb = value(n.b);
        if (wants(n.a)) {
          auto& ga = grad_of(grads, n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * vb[k];
        }
        if (wants(n.b)) {
          auto& gb = grad_of(grads, n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * va[k];
        }
        break;
      }
      case Op::kScale: {
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.k * g[k];
        break;
      }
      case Op::kSum: {
        for (NodeId in : n.inputs) {
          if (!wants(in)) continue;
          auto& gi = grad_of(grads, in);
          for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
        }
        break;
      }
      case Op::kTanh: {
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * (1.0 - n.value[k] * n.value[k]);
        break;
      }
      case Op::kSigmoid: {
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * n.value[k] * (1.0 - n.value[k]);
        break;
      }
      case Op::kLogSigmoid: {
        auto va = value(n.a);
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * kernels::sigmoid(-va[k]);
        break;
      }
      case Op::kDot: {
        auto va = value(n.a), vb = value(n.b);
        if (wants(n.a)) {
          auto& ga = grad_of(grads, n.a);
          for (std::size_t k = 0; k < va.size(); ++k) ga[k] += g[0] * vb[k];
        }
        if (wants(n.b)) {
          auto& gb = grad_of(grads, n.b);
          for (std::size_t k = 0; k < va.size(); ++k) gb[k] += g[0] * va[k];
        }
        break;
      }
      case Op::kSoftmax: {
        double dotgy = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) dotgy += g[k] * n.value[k];
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.value[k] * (g[k] - dotgy);
        break;
      }
      case Op::kLogSoftmax: {
        double gsum = 0.0;
        for (double x : g) gsum += x;
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] - std::exp(n.value[k]) * gsum;
        break;
      }
      case Op::kPick: {
        grad_of(grads, n.a)[n.aux] += g[0];
        break;
      }
      case Op::kLogSoftmaxPick: {
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] -= g[0] * n.saved[k];
        ga[n.aux] += g[0];
        break;
      }
      case Op::kLogSumExp: {
        const double y = n.value[0];
        for (NodeId in : n.inputs) {
          if (!wants(in)) continue;
          const double x = value(in)[0];
          if (x == kNegInf) continue;
          grad_of(grads, in)[0] += g[0] * std::exp(x - y);
        }
        break;
      }
      case Op::kConcat: {
        std::size_t off = 0;
        for (NodeId in : n.inputs) {
          const std::size_t len = size(in);
          if (wants(in)) {
            auto& gi = grad_of(grads, in);
            for (std::size_t k = 0; k < len; ++k) gi[k] += g[off + k];
          }
          off += len;
        }
        break;
      }
      case Op::kSlice: {
        auto& ga = grad_of(grads, n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[n.aux + k] += g[k];
        break;
      }
      case Op::kLstm: {
        const std::size_t hidden = g.size() / 2;
        auto x = value(n.a);
        auto h_prev = value(n.b);
        auto c_prev = value(n.c);
        const std::size_t in_dim = x.size();
        const std::vector<double>& gates = n.saved;
        std::vector<double> da(4 * hidden);
        for (std::size_t k = 0; k < hidden; ++k) {
          const double i = gates[k], f = gates[hidden + k], cand = gates[2 * hidden + k],
                       o = gates[3 * hidden + k];
          const double tc = std::tanh(n.value[hidden + k]);
          const double dh = g[k];
          const double dc = g[hidden + k] + dh * o * (1.0 - tc * tc);
          da[k] = dc * cand * i * (1.0 - i);
          da[hidden + k] = dc * c_prev[k] * f * (1.0 - f);
          da[2 * hidden + k] = dc * i * (1.0 - cand * cand);
          da[3 * hidden + k] = dh * tc * o * (1.0 - o);
          if (wants(n.c)) grad_of(grads, n.c)[k] += dc * f;
        }
        const std::size_t cols = in_dim + hidden;
        auto wg = n.p0->gradient.data();
        auto bg = n.p1->gradient.data();
        for (std::size_t r = 0; r < 4 * hidden; ++r) {
          bg[r] += da[r];
          double* row = wg.data() + r * cols;
          for (std::size_t c = 0; c < in_dim; ++c) row[c] += da[r] * x[c];
          for (std::size_t c = 0; c < hidden; ++c) row[in_dim + c] += da[r] * h_prev[c];
        }
        const double* wd = n.p0->value.data().data();
        if (wants(n.a)) {
          auto& gx = grad_of(grads, n.a);
          for (std::size_t r = 0; r < 4 * hidden; ++r) {
            const double* row = wd + r * cols;
            for (std::size_t c = 0; c < in_dim; ++c) gx[c] += row[c] * da[r];
          }
        }
        if (wants(n.b)) {
          auto& gh = grad_of(grads, n.b);
          for (std::size_t r = 0; r < 4 * hidden; ++r) {
            const double* row = wd + r * cols + in_dim;
            for (std::size_t c = 0; c < hidden; ++c) gh[c] += row[c] * da[r];
          }
        }
        break;
      }
    }
    grads[id].clear();
    grads[id].shrink_to_fit();
  }
}

}  // namespace ssnt
