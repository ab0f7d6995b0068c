#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmdcal/tensor.hpp"

namespace mmdcal {

enum class OpKind {
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kExp,
  kRelu,
  kSum,
  kMean,
  kSquare,
  kScalarMul,
  kBroadcastRow,
  kColumn,
  kCustom,
};

std::string_view op_name(OpKind kind) noexcept;

/// Define-by-run reverse-mode tape.
///
/// Every op checks shapes, computes its output eagerly and, when any input
/// requires a gradient, appends a node. Nodes are appended in evaluation order,
/// so the tape is topologically sorted by construction. A tape is confined to
/// one thread; build a new one per forward pass.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  /// Receives the output gradient and one zero-initialised buffer per input;
  /// must add (not assign) the input gradients.
  using CustomBackward =
      std::function<void(std::span<const double> out_grad, std::span<std::vector<double>> in_grads)>;

  explicit Tape(Mode mode = Mode::kRecord);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Generic entry point. `scalar` is the factor for kScalarMul and the column
  /// index for kColumn; other kinds ignore it.
  Tensor forward_primitive(OpKind kind, std::span<const Tensor> inputs, double scalar = 0.0);

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor exp(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor square(const Tensor& a);
  Tensor scalar_mul(const Tensor& a, double factor);
  /// matrix (m x n) + row (n or 1 x n), row added to every matrix row.
  Tensor broadcast_row(const Tensor& matrix, const Tensor& row);
  /// Column j of an (m x n) matrix as a length-m vector.
  Tensor column(const Tensor& matrix, std::size_t j);

  /// Records an op whose forward values were computed by the caller.
  Tensor custom(std::string name, std::vector<Tensor> inputs, Shape shape,
                std::vector<double> values, CustomBackward backward);

  /// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
  /// gradient. Intermediate gradients live only for the duration of the call,
  /// so calling backward twice accumulates leaf gradients twice.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return mode_ == Mode::kRecord; }

 private:
  struct Node {
    OpKind kind;
    std::string name;
    std::vector<Tensor> inputs;
    Tensor output;
    double scalar = 0.0;
    CustomBackward custom_backward;
  };

  Tensor finish(OpKind kind, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
                double scalar, std::string name = {}, CustomBackward custom_backward = {});
  bool owns(const Tensor& t) const;

  Mode mode_;
  std::uint64_t id_;
  std::vector<Node> nodes_;
};

}  // namespace mmdcal
