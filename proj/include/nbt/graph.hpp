#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nbt/tensor.hpp"

namespace nbt::num {

/// A learned tensor. `id` indexes the owning parameter list and the matching
/// slot of a Gradients buffer.
struct Parameter {
  std::string name;
  Tensor value;
  std::size_t id = 0;
};

/// One gradient tensor per parameter, shaped like the parameter.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::span<const Parameter> params);

  Tensor& operator[](std::size_t id) { return grads_.at(id); }
  const Tensor& operator[](std::size_t id) const { return grads_.at(id); }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const Gradients& other);
  void scale(double factor);
  double l2_norm() const;

 private:
  std::vector<Tensor> grads_;
};

enum class Op {
  kConst,
  kParam,
  kLookup,
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kTanh,
  kSigmoid,
  kRelu,
  kSoftmax,
  kLog,
  kSum,
  kDot,
  kConcat,
  kSlice,
  kWeightedSum,
};

const char* op_name(Op op);

struct Var {
  std::size_t id = 0;
};

/// Define-by-run reverse-mode tape. Every builder method evaluates its node
/// immediately, so values are available as soon as a node exists; node ids are
/// a topological order. Shape errors and non-finite results throw with the
/// offending node named. Parameters are referenced, not copied, and must
/// outlive the graph.
class Graph {
 public:
  Var constant(Tensor value);
  Var param(const Parameter& p);
  Var lookup(const Parameter& table, std::size_t row);

  /// (m x k)(k) -> (m) or (m x k)(k x n) -> (m x n).
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var softmax(Var a);
  /// log(max(x, 1e-12)); gradient is zero where the clamp is active.
  Var log(Var a);
  Var sum(Var a);
  Var dot(Var a, Var b);
  Var concat(std::span<const Var> parts);
  Var slice(Var a, std::size_t offset, std::size_t length);
  /// sum_i weights[i] * rows[i]
  Var weighted_sum(Var weights, std::span<const Var> rows);

  const Tensor& value(Var v) const;
  /// Value of a root node; the tape is evaluated eagerly in topological order.
  const Tensor& forward(Var root) const { return value(root); }
  double scalar(Var v) const;

  /// Accumulates d(root)/d(param) into `grads`. The root must hold one value.
  void backward(Var root, Gradients& grads) const;

  std::size_t size() const { return nodes_.size(); }

  static constexpr double kLogClamp = 1e-12;

 private:
  struct Node {
    Op op = Op::kConst;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Parameter* param = nullptr;
    std::size_t index = 0;  // lookup row or slice offset
    double factor = 0.0;
  };

  Var push(Node node);
  [[noreturn]] void shape_error(Op op, const std::string& detail) const;
  const Tensor& input_value(const Node& n, std::size_t k) const;

  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients against central differences for every
/// element of `params`. Relative error is |g - g'| / max(1e-8, |g| + |g'|).
/// `params` are perturbed in place and restored.
GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, std::span<Parameter> params,
                           double eps = 1e-5);

}  // namespace nbt::num
