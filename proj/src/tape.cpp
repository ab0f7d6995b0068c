#include "mmdcal/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>

#include "mmdcal/errors.hpp"

namespace mmdcal {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::atomic<std::uint64_t> next_tape_id{1};

void require_same_shape(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::kShapeMismatch, std::string(op_name(kind)) + ": " + shape_string(a.shape()) +
                                          " vs " + shape_string(b.shape()));
  }
}

void require_arity(OpKind kind, std::span<const Tensor> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw Error(Errc::kShapeMismatch, std::string(op_name(kind)) + " takes " + std::to_string(n) +
                                          " inputs, got " + std::to_string(inputs.size()));
  }
}

// Row vector length for broadcast_row: accepts {n} or {1, n}.
std::size_t row_length(const Tensor& row) {
  const auto& s = row.shape();
  if (s.size() == 1) return s[0];
  if (s.size() == 2 && s[0] == 1) return s[1];
  throw Error(Errc::kShapeMismatch, "broadcast_row: row must be [n] or [1,n], got " + shape_string(s));
}

}  // namespace

std::string_view op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kExp: return "exp";
    case OpKind::kRelu: return "relu";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquare: return "square";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kBroadcastRow: return "broadcast_row";
    case OpKind::kColumn: return "column";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

Tape::Tape(Mode mode) : mode_(mode), id_(next_tape_id.fetch_add(1)) {}

bool Tape::owns(const Tensor& t) const { return t.impl().tape_id == id_; }

Tensor Tape::finish(OpKind kind, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
                    double scalar, std::string name, CustomBackward custom_backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(Errc::kNonFinite, std::string(op_name(kind)) + (name.empty() ? "" : " " + name) +
                                        " produced a non-finite value");
    }
  }
  const bool needs_grad =
      mode_ == Mode::kRecord &&
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor out = Tensor::from(std::move(shape), std::move(values), needs_grad);
  if (needs_grad) {
    out.impl().tape_id = id_;
    out.impl().node = nodes_.size();
    nodes_.push_back(Node{kind, std::move(name), std::move(inputs), out, scalar, std::move(custom_backward)});
  }
  return out;
}

Tensor Tape::forward_primitive(OpKind kind, std::span<const Tensor> inputs, double scalar) {
  switch (kind) {
    case OpKind::kMatmul: {
      require_arity(kind, inputs, 2);
      const auto& a = inputs[0];
      const auto& b = inputs[1];
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw Error(Errc::kShapeMismatch,
                    "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
      }
      const auto m = a.rows(), k = a.cols(), n = b.cols();
      std::vector<double> out(m * n);
      MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
      return finish(kind, {a, b}, {m, n}, std::move(out), scalar);
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      require_arity(kind, inputs, 2);
      require_same_shape(kind, inputs[0], inputs[1]);
      auto x = inputs[0].data();
      auto y = inputs[1].data();
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = kind == OpKind::kAdd ? x[i] + y[i] : kind == OpKind::kSub ? x[i] - y[i] : x[i] * y[i];
      }
      return finish(kind, {inputs[0], inputs[1]}, inputs[0].shape(), std::move(out), scalar);
    }
    case OpKind::kExp:
    case OpKind::kRelu:
    case OpKind::kSquare:
    case OpKind::kScalarMul: {
      require_arity(kind, inputs, 1);
      auto x = inputs[0].data();
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        switch (kind) {
          case OpKind::kExp: out[i] = std::exp(x[i]); break;
          case OpKind::kRelu: out[i] = x[i] > 0.0 ? x[i] : 0.0; break;
          case OpKind::kSquare: out[i] = x[i] * x[i]; break;
          default: out[i] = scalar * x[i]; break;
        }
      }
      return finish(kind, {inputs[0]}, inputs[0].shape(), std::move(out), scalar);
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      require_arity(kind, inputs, 1);
      auto x = inputs[0].data();
      if (x.empty()) throw Error(Errc::kShapeMismatch, std::string(op_name(kind)) + " of empty tensor");
      double acc = 0.0;
      for (double v : x) acc += v;
      if (kind == OpKind::kMean) acc /= static_cast<double>(x.size());
      return finish(kind, {inputs[0]}, {}, {acc}, scalar);
    }
    case OpKind::kBroadcastRow: {
      require_arity(kind, inputs, 2);
      const auto& m = inputs[0];
      const auto& r = inputs[1];
      if (m.rank() != 2 || row_length(r) != m.cols()) {
        throw Error(Errc::kShapeMismatch,
                    "broadcast_row: " + shape_string(m.shape()) + " + " + shape_string(r.shape()));
      }
      const auto rows = m.rows(), cols = m.cols();
      auto x = m.data();
      auto b = r.data();
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[i * cols + j] + b[j];
      return finish(kind, {m, r}, m.shape(), std::move(out), scalar);
    }
    case OpKind::kColumn: {
      require_arity(kind, inputs, 1);
      const auto& m = inputs[0];
      const auto j = static_cast<std::size_t>(scalar);
      if (m.rank() != 2 || j >= m.cols() || scalar < 0.0) {
        throw Error(Errc::kShapeMismatch, "column " + std::to_string(j) + " of " + shape_string(m.shape()));
      }
      const auto rows = m.rows(), cols = m.cols();
      std::vector<double> out(rows);
      for (std::size_t i = 0; i < rows; ++i) out[i] = m.data()[i * cols + j];
      return finish(kind, {m}, {rows}, std::move(out), scalar);
    }
    case OpKind::kCustom:
      throw std::invalid_argument("custom ops are recorded through Tape::custom");
  }
  throw std::invalid_argument("unknown op kind");
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return forward_primitive(OpKind::kMatmul, in);
}
Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return forward_primitive(OpKind::kAdd, in);
}
Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return forward_primitive(OpKind::kSub, in);
}
Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return forward_primitive(OpKind::kMul, in);
}
Tensor Tape::exp(const Tensor& a) { return forward_primitive(OpKind::kExp, {&a, 1}); }
Tensor Tape::relu(const Tensor& a) { return forward_primitive(OpKind::kRelu, {&a, 1}); }
Tensor Tape::sum(const Tensor& a) { return forward_primitive(OpKind::kSum, {&a, 1}); }
Tensor Tape::mean(const Tensor& a) { return forward_primitive(OpKind::kMean, {&a, 1}); }
Tensor Tape::square(const Tensor& a) { return forward_primitive(OpKind::kSquare, {&a, 1}); }
Tensor Tape::scalar_mul(const Tensor& a, double factor) {
  return forward_primitive(OpKind::kScalarMul, {&a, 1}, factor);
}
Tensor Tape::broadcast_row(const Tensor& matrix, const Tensor& row) {
  const Tensor in[] = {matrix, row};
  return forward_primitive(OpKind::kBroadcastRow, in);
}
Tensor Tape::column(const Tensor& matrix, std::size_t j) {
  return forward_primitive(OpKind::kColumn, {&matrix, 1}, static_cast<double>(j));
}

Tensor Tape::custom(std::string name, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
                    CustomBackward backward) {
  return finish(OpKind::kCustom, std::move(inputs), std::move(shape), std::move(values), 0.0, std::move(name),
                std::move(backward));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw Error(Errc::kNotScalar, "backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!owns(loss)) {
    // A leaf used directly as the loss: d loss / d loss = 1.
    if (loss.requires_grad()) {
      Tensor leaf = loss;
      leaf.mutable_grad()[0] += 1.0;
    }
    return;
  }

  std::vector<std::vector<double>> node_grad(nodes_.size());
  node_grad[loss.impl().node] = {1.0};
  std::vector<Tensor> touched_leaves;

  // Gradient buffer for input t, or nullptr when t does not take gradients.
  auto buffer_for = [&](Tensor& t) -> std::vector<double>* {
    if (!t.requires_grad()) return nullptr;
    if (owns(t)) {
      auto& g = node_grad[t.impl().node];
      if (g.empty()) g.assign(t.numel(), 0.0);
      return &g;
    }
    auto& g = t.impl().grad;
    if (g.empty()) g.assign(t.numel(), 0.0);
    touched_leaves.push_back(t);
    return &g;
  };

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    if (node_grad[idx].empty()) continue;
    Node& node = nodes_[idx];
    const std::vector<double> g = std::move(node_grad[idx]);
    node_grad[idx].clear();
    auto out = node.output.data();

    switch (node.kind) {
      case OpKind::kMatmul: {
        auto& a = node.inputs[0];
        auto& b = node.inputs[1];
        const auto m = a.rows(), k = a.cols(), n = b.cols();
        ConstMap dc(g.data(), m, n);
        if (auto* ga = buffer_for(a)) MutMap(ga->data(), m, k).noalias() += dc * ConstMap(b.data().data(), k, n).transpose();
        if (auto* gb = buffer_for(b)) MutMap(gb->data(), k, n).noalias() += ConstMap(a.data().data(), m, k).transpose() * dc;
        break;
      }
      case OpKind::kAdd:
      case OpKind::kSub: {
        const double sign = node.kind == OpKind::kAdd ? 1.0 : -1.0;
        if (auto* ga = buffer_for(node.inputs[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (auto* gb = buffer_for(node.inputs[1]))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += sign * g[i];
        break;
      }
      case OpKind::kMul: {
        auto x = node.inputs[0].data();
        auto y = node.inputs[1].data();
        if (auto* ga = buffer_for(node.inputs[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
        if (auto* gb = buffer_for(node.inputs[1]))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
        break;
      }
      case OpKind::kExp:
        if (auto* ga = buffer_for(node.inputs[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * out[i];
        break;
      case OpKind::kRelu: {
        auto x = node.inputs[0].data();
        if (auto* ga = buffer_for(node.inputs[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += x[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case OpKind::kSquare: {
        auto x = node.inputs[0].data();
        if (auto* ga = buffer_for(node.inputs[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += 2.0 * x[i] * g[i];
        break;
      }
      case OpKind::kScalarMul:
        if (auto* ga = buffer_for(node.inputs[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += node.scalar * g[i];
        break;
      case OpKind::kSum:
      case OpKind::kMean: {
        auto& a = node.inputs[0];
        const double each = node.kind == OpKind::kSum ? g[0] : g[0] / static_cast<double>(a.numel());
        if (auto* ga = buffer_for(a))
          for (auto& v : *ga) v += each;
        break;
      }
      case OpKind::kBroadcastRow: {
        const auto cols = node.inputs[0].cols();
        if (auto* gm = buffer_for(node.inputs[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*gm)[i] += g[i];
        if (auto* gr = buffer_for(node.inputs[1]))
          for (std::size_t i = 0; i < g.size(); ++i) (*gr)[i % cols] += g[i];
        break;
      }
      case OpKind::kColumn: {
        auto& m = node.inputs[0];
        const auto cols = m.cols();
        const auto j = static_cast<std::size_t>(node.scalar);
        if (auto* gm = buffer_for(m))
          for (std::size_t i = 0; i < g.size(); ++i) (*gm)[i * cols + j] += g[i];
        break;
      }
      case OpKind::kCustom: {
        std::vector<std::vector<double>> in_grads(node.inputs.size());
        for (std::size_t i = 0; i < node.inputs.size(); ++i) in_grads[i].assign(node.inputs[i].numel(), 0.0);
        node.custom_backward(g, in_grads);
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
          if (auto* gi = buffer_for(node.inputs[i]))
            for (std::size_t e = 0; e < gi->size(); ++e) (*gi)[e] += in_grads[i][e];
        }
        break;
      }
    }
  }

  for (const auto& leaf : touched_leaves) {
    for (double v : leaf.grad()) {
      if (!std::isfinite(v)) throw Error(Errc::kNonFinite, "backward produced a non-finite gradient");
    }
  }
}

}  // namespace mmdcal
