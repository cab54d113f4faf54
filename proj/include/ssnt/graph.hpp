#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "ssnt/tensor.hpp"

namespace ssnt {

using NodeId = std::uint32_t;

// Eager reverse-mode tape. Every op computes its value immediately and is
// appended after its inputs, so the node list is already topologically
// ordered. backward() walks it in reverse and accumulates parameter
// gradients directly into Parameter::gradient.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  NodeId constant(std::vector<double> values);
  NodeId scalar(double v) { return constant({v}); }
  // One node per parameter per graph; repeated calls return the same id.
  NodeId param(Parameter& p);
  // Row `row` of a rank-2 parameter (embedding lookup).
  NodeId lookup(Parameter& table, std::size_t row);

  // W[:, col_offset : col_offset + |x|] * x for a parameter matrix W.
  NodeId matvec(Parameter& w, NodeId x, std::size_t col_offset = 0);
  NodeId affine(Parameter& w, NodeId x, Parameter& b);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double k);
  NodeId neg(NodeId a) { return scale(a, -1.0); }
  NodeId sum(std::span<const NodeId> parts);

  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId log_sigmoid(NodeId a);
  NodeId dot(NodeId a, NodeId b);

  NodeId softmax(NodeId v);
  NodeId log_softmax(NodeId v);
  NodeId pick(NodeId v, std::size_t index);
  // log_softmax(v)[index] without materialising the full vector.
  NodeId log_softmax_pick(NodeId v, std::size_t index);
  // log sum_k exp(s_k) over scalar nodes.
  NodeId log_sum_exp(std::span<const NodeId> scalars);

  NodeId concat(std::span<const NodeId> parts);
  NodeId slice(NodeId a, std::size_t offset, std::size_t length);

  // Fused LSTM cell; the result holds [h'; c'] (2H values).
  NodeId lstm(NodeId x, NodeId h, NodeId c, Parameter& w, Parameter& b);

  std::span<const double> value(NodeId id) const;
  double scalar_value(NodeId id) const;
  std::size_t size(NodeId id) const { return value(id).size(); }
  std::size_t node_count() const { return nodes_.size(); }

  // Accumulates d(loss)/d(parameter) into every parameter reached from
  // `loss`. The loss must be a finite scalar.
  void backward(NodeId loss);

 private:
  enum class Op : std::uint8_t {
    kConstant,
    kParam,
    kLookup,
    kMatVec,
    kAdd,
    kSub,
    kMul,
    kScale,
    kSum,
    kTanh,
    kSigmoid,
    kLogSigmoid,
    kDot,
    kSoftmax,
    kLogSoftmax,
    kPick,
    kLogSoftmaxPick,
    kLogSumExp,
    kConcat,
    kSlice,
    kLstm,
  };

  struct Node {
    Op op = Op::kConstant;
    bool needs_grad = false;
    NodeId a = 0, b = 0, c = 0;
    Parameter* p0 = nullptr;
    Parameter* p1 = nullptr;
    std::size_t aux = 0;
    double k = 0.0;
    std::vector<double> value;
    std::vector<double> saved;
    std::vector<NodeId> inputs;
  };

  NodeId push(Node node);
  Node& node(NodeId id) { return nodes_[id]; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  void check_same_size(NodeId a, NodeId b, const char* op) const;
  std::vector<double>& grad_of(std::vector<std::vector<double>>& grads, NodeId id);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
};

}  // namespace ssnt
