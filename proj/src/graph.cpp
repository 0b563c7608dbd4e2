#include "nbt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nbt::num {

Gradients::Gradients(std::span<const Parameter> params) {
  std::size_t n = 0;
  for (const auto& p : params) n = std::max(n, p.id + 1);
  grads_.resize(n);
  for (const auto& p : params) grads_[p.id] = Tensor::zeros_like(p.value);
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void Gradients::add(const Gradients& other) {
  if (other.grads_.size() != grads_.size()) throw std::invalid_argument("gradient size mismatch");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto dst = grads_[i].data();
    auto src = other.grads_[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) {
    for (double& v : g.data()) v *= factor;
  }
}

double Gradients::l2_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) {
    for (double v : g.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kParam: return "param";
    case Op::kLookup: return "lookup";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kRelu: return "relu";
    case Op::kSoftmax: return "softmax";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kDot: return "dot";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kWeightedSum: return "weighted_sum";
  }
  return "?";
}

void Graph::shape_error(Op op, const std::string& detail) const {
  std::ostringstream msg;
  msg << "graph node #" << nodes_.size() << " (" << op_name(op) << "): " << detail;
  throw std::invalid_argument(msg.str());
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.op == Op::kParam ? n.param->value : n.value;
}

double Graph::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw std::invalid_argument("scalar(): node is not scalar");
  return t[0];
}

const Tensor& Graph::input_value(const Node& n, std::size_t k) const {
  return value(Var{n.inputs[k]});
}

Var Graph::push(Node node) {
  if (node.op != Op::kParam && !node.value.all_finite()) {
    std::ostringstream msg;
    msg << "graph node #" << nodes_.size() << " (" << op_name(node.op)
        << "): non-finite value";
    throw std::domain_error(msg.str());
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::param(const Parameter& p) {
  if (auto it = param_nodes_.find(p.id); it != param_nodes_.end() &&
                                         nodes_[it->second].param == &p) {
    return Var{it->second};
  }
  Node n;
  n.op = Op::kParam;
  n.param = &p;
  Var v = push(std::move(n));
  param_nodes_[p.id] = v.id;
  return v;
}

Var Graph::lookup(const Parameter& table, std::size_t row) {
  if (table.value.rank() != 2 || row >= table.value.rows()) {
    shape_error(Op::kLookup, "row " + std::to_string(row) + " outside table " +
                                 table.value.shape_string() + " of '" + table.name + "'");
  }
  const std::size_t cols = table.value.cols();
  std::vector<double> vals(table.value.data().begin() + static_cast<std::ptrdiff_t>(row * cols),
                           table.value.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * cols));
  Node n;
  n.op = Op::kLookup;
  n.param = &table;
  n.index = row;
  n.value = Tensor::vector(std::move(vals));
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || A.cols() != B.rows()) {
    shape_error(Op::kMatmul, "shape mismatch " + A.shape_string() + " x " + B.shape_string());
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out = B.rank() == 1 ? Tensor({m}) : Tensor({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  }
  Node node;
  node.op = Op::kMatmul;
  node.inputs = {a.id, b.id};
  node.value = std::move(out);
  return push(std::move(node));
}

Var Graph::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) shape_error(Op::kAdd, A.shape_string() + " + " + B.shape_string());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  Node node;
  node.op = Op::kAdd;
  node.inputs = {a.id, b.id};
  node.value = std::move(out);
  return push(std::move(node));
}

Var Graph::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) shape_error(Op::kMul, A.shape_string() + " * " + B.shape_string());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  Node node;
  node.op = Op::kMul;
  node.inputs = {a.id, b.id};
  node.value = std::move(out);
  return push(std::move(node));
}

Var Graph::scale(Var a, double factor) {
  Tensor out = value(a);
  for (double& v : out.data()) v *= factor;
  Node node;
  node.op = Op::kScale;
  node.inputs = {a.id};
  node.factor = factor;
  node.value = std::move(out);
  return push(std::move(node));
}

namespace {

template <typename F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out = in;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace

Var Graph::tanh(Var a) {
  Node node;
  node.op = Op::kTanh;
  node.inputs = {a.id};
  node.value = map_values(value(a), [](double x) { return std::tanh(x); });
  return push(std::move(node));
}

Var Graph::sigmoid(Var a) {
  Node node;
  node.op = Op::kSigmoid;
  node.inputs = {a.id};
  node.value = map_values(value(a), [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return push(std::move(node));
}

Var Graph::relu(Var a) {
  Node node;
  node.op = Op::kRelu;
  node.inputs = {a.id};
  node.value = map_values(value(a), [](double x) { return x > 0.0 ? x : 0.0; });
  return push(std::move(node));
}

Var Graph::softmax(Var a) {
  const Tensor& in = value(a);
  if (in.rank() != 1 || in.size() == 0) {
    shape_error(Op::kSoftmax, "expects a non-empty vector, got " + in.shape_string());
  }
  const double mx = *std::max_element(in.data().begin(), in.data().end());
  Tensor out = in;
  double total = 0.0;
  for (double& v : out.data()) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : out.data()) v /= total;
  Node node;
  node.op = Op::kSoftmax;
  node.inputs = {a.id};
  node.value = std::move(out);
  return push(std::move(node));
}

Var Graph::log(Var a) {
  Node node;
  node.op = Op::kLog;
  node.inputs = {a.id};
  node.value = map_values(value(a), [](double x) { return std::log(std::max(x, kLogClamp)); });
  return push(std::move(node));
}

Var Graph::sum(Var a) {
  double total = 0.0;
  for (double v : value(a).data()) total += v;
  Node node;
  node.op = Op::kSum;
  node.inputs = {a.id};
  node.value = Tensor::vector({total});
  return push(std::move(node));
}

Var Graph::dot(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 1 || !A.same_shape(B)) {
    shape_error(Op::kDot, A.shape_string() + " . " + B.shape_string());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) total += A[i] * B[i];
  Node node;
  node.op = Op::kDot;
  node.inputs = {a.id, b.id};
  node.value = Tensor::vector({total});
  return push(std::move(node));
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) shape_error(Op::kConcat, "no inputs");
  std::vector<double> vals;
  Node node;
  node.op = Op::kConcat;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (t.rank() != 1) shape_error(Op::kConcat, "input " + t.shape_string() + " is not a vector");
    vals.insert(vals.end(), t.data().begin(), t.data().end());
    node.inputs.push_back(p.id);
  }
  node.value = Tensor::vector(std::move(vals));
  return push(std::move(node));
}

Var Graph::slice(Var a, std::size_t offset, std::size_t length) {
  const Tensor& in = value(a);
  if (in.rank() != 1 || length == 0 || offset + length > in.size()) {
    shape_error(Op::kSlice, "range [" + std::to_string(offset) + ", " +
                                std::to_string(offset + length) + ") outside " +
                                in.shape_string());
  }
  std::vector<double> vals(in.data().begin() + static_cast<std::ptrdiff_t>(offset),
                           in.data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  Node node;
  node.op = Op::kSlice;
  node.inputs = {a.id};
  node.index = offset;
  node.value = Tensor::vector(std::move(vals));
  return push(std::move(node));
}

Var Graph::weighted_sum(Var weights, std::span<const Var> rows) {
  const Tensor& w = value(weights);
  if (w.rank() != 1 || w.size() != rows.size() || rows.empty()) {
    shape_error(Op::kWeightedSum, "weights " + w.shape_string() + " for " +
                                      std::to_string(rows.size()) + " rows");
  }
  Node node;
  node.op = Op::kWeightedSum;
  node.inputs.push_back(weights.id);
  Tensor out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& r = value(rows[i]);
    if (i == 0) {
      if (r.rank() != 1) shape_error(Op::kWeightedSum, "row " + r.shape_string() + " is not a vector");
      out = Tensor::zeros_like(r);
    } else if (!r.same_shape(out)) {
      shape_error(Op::kWeightedSum, "row shapes differ: " + r.shape_string() + " vs " +
                                        out.shape_string());
    }
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[i] * r[j];
    node.inputs.push_back(rows[i].id);
  }
  node.value = std::move(out);
  return push(std::move(node));
}

void Graph::backward(Var root, Gradients& grads) const {
  if (root.id >= nodes_.size()) throw std::invalid_argument("backward: unknown root");
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward: root node #" + std::to_string(root.id) + " (" +
                                op_name(nodes_[root.id].op) + ") is not scalar, shape " +
                                value(root).shape_string());
  }
  std::vector<Tensor> adj(root.id + 1);
  adj[root.id] = Tensor::zeros_like(value(root));
  adj[root.id][0] = 1.0;

  auto acc = [&](std::size_t id) -> Tensor& {
    if (adj[id].size() == 0) adj[id] = Tensor::zeros_like(value(Var{id}));
    return adj[id];
  };

  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (adj[i].size() == 0) continue;
    const Node& n = nodes_[i];
    const Tensor& g = adj[i];
    const Tensor& out = n.op == Op::kParam ? n.param->value : n.value;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam: {
        Tensor& dst = grads[n.param->id];
        for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
        break;
      }
      case Op::kLookup: {
        Tensor& dst = grads[n.param->id];
        const std::size_t cols = g.size();
        for (std::size_t j = 0; j < cols; ++j) dst[n.index * cols + j] += g[j];
        break;
      }
      case Op::kMatmul: {
        const Tensor& A = input_value(n, 0);
        const Tensor& B = input_value(n, 1);
        const std::size_t m = A.rows(), k = A.cols(), cols = B.cols();
        Tensor& dA = acc(n.inputs[0]);
        Tensor& dB = acc(n.inputs[1]);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t p = 0; p < k; ++p) {
            double ga = 0.0;
            const double arp = A.at(r, p);
            for (std::size_t c = 0; c < cols; ++c) {
              const double gv = g[r * cols + c];
              ga += gv * B[p * cols + c];
              dB[p * cols + c] += arp * gv;
            }
            dA[r * k + p] += ga;
          }
        }
        break;
      }
      case Op::kAdd: {
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j];
        Tensor& db = acc(n.inputs[1]);
        for (std::size_t j = 0; j < g.size(); ++j) db[j] += g[j];
        break;
      }
      case Op::kMul: {
        const Tensor& a = input_value(n, 0);
        const Tensor& b = input_value(n, 1);
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j] * b[j];
        Tensor& db = acc(n.inputs[1]);
        for (std::size_t j = 0; j < g.size(); ++j) db[j] += g[j] * a[j];
        break;
      }
      case Op::kScale: {
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j] * n.factor;
        break;
      }
      case Op::kTanh: {
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j] * (1.0 - out[j] * out[j]);
        break;
      }
      case Op::kSigmoid: {
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j] * out[j] * (1.0 - out[j]);
        break;
      }
      case Op::kRelu: {
        const Tensor& a = input_value(n, 0);
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += a[j] > 0.0 ? g[j] : 0.0;
        break;
      }
      case Op::kSoftmax: {
        double inner = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) inner += g[j] * out[j];
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += out[j] * (g[j] - inner);
        break;
      }
      case Op::kLog: {
        const Tensor& a = input_value(n, 0);
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (a[j] > kLogClamp) da[j] += g[j] / a[j];
        }
        break;
      }
      case Op::kSum: {
        Tensor& da = acc(n.inputs[0]);
        for (double& v : da.data()) v += g[0];
        break;
      }
      case Op::kDot: {
        const Tensor& a = input_value(n, 0);
        const Tensor& b = input_value(n, 1);
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < a.size(); ++j) da[j] += g[0] * b[j];
        Tensor& db = acc(n.inputs[1]);
        for (std::size_t j = 0; j < b.size(); ++j) db[j] += g[0] * a[j];
        break;
      }
      case Op::kConcat: {
        std::size_t offset = 0;
        for (std::size_t id : n.inputs) {
          Tensor& da = acc(id);
          for (std::size_t j = 0; j < da.size(); ++j) da[j] += g[offset + j];
          offset += da.size();
        }
        break;
      }
      case Op::kSlice: {
        Tensor& da = acc(n.inputs[0]);
        for (std::size_t j = 0; j < g.size(); ++j) da[n.index + j] += g[j];
        break;
      }
      case Op::kWeightedSum: {
        const Tensor& w = input_value(n, 0);
        for (std::size_t r = 1; r < n.inputs.size(); ++r) {
          const Tensor& row = input_value(n, r);
          double gw = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) gw += g[j] * row[j];
          acc(n.inputs[0])[r - 1] += gw;
          Tensor& drow = acc(n.inputs[r]);
          for (std::size_t j = 0; j < g.size(); ++j) drow[j] += g[j] * w[r - 1];
        }
        break;
      }
    }
  }
}

GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, std::span<Parameter> params,
                           double eps) {
  Gradients analytic(params);
  {
    Graph g;
    Var root = loss(g);
    g.backward(root, analytic);
  }
  auto evaluate = [&]() {
    Graph g;
    Var root = loss(g);
    return g.scalar(root);
  };

  GradCheckReport report;
  for (auto& p : params) {
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double saved = p.value[j];
      p.value[j] = saved + eps;
      const double up = evaluate();
      p.value[j] = saved - eps;
      const double down = evaluate();
      p.value[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = analytic[p.id][j];
      const double rel =
          std::abs(exact - numeric) / std::max(1e-8, std::abs(exact) + std::abs(numeric));
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p.name;
        report.worst_index = j;
        report.analytic = exact;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace nbt::num
