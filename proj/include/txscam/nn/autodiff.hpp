#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "txscam/nn/matrix.hpp"

namespace txscam::nn {

/// Trainable tensor. `decay` marks weight matrices that take part in the L2
/// penalty and decoupled weight decay (biases do not).
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;

  Param() = default;
  Param(std::string n, Matrix v, bool d = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), decay(d) {}
  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Per-position validity flags (1 = real, 0 = padding / masked).
using ValidMask = std::vector<std::uint8_t>;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records forward operations; backward() replays them in exact reverse order
/// and accumulates into Param::grad. A tape built with record=false only
/// evaluates (inference and finite-difference probes).
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m);
  Var param(Param& p);

  /// `loss` must be 1x1. Parameter gradients are added to Param::grad.
  void backward(Var loss);

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of a node, zero-allocated on first use.
  Matrix& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  using Backward = std::function<void(Tape&, std::size_t self)>;
  Var push(Matrix value, bool needs_grad, Backward back);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    Param* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// ---------------------------------------------------------------------------
// Differentiable operations. Shapes are checked; violations throw ShapeMismatch.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// a (r x c) + bias (1 x c) broadcast over rows.
Var add_row(Var a, Var bias);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);

Var leaky_relu(Var a, double slope = 0.01);
Var elu(Var a, double alpha = 1.0);
Var sigmoid(Var a);

/// Row-wise softmax stabilized by the row max. When `valid_cols` is non-empty,
/// invalid columns get probability exactly 0.
Var softmax_rows(Var a, std::span<const std::uint8_t> valid_cols = {});

Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var concat_cols(Var a, Var b);
Var stack_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);

Var sum(Var a);
Var sum_squares(Var a);

/// Sliding-window unfold along rows for a centred 1-D convolution with
/// zero padding: out(t, k*C + c) = a(t + k - kernel/2, c).
Var unfold_rows(Var a, std::size_t kernel);

/// Column-wise max over the rows flagged valid; output is 1 x cols.
Var masked_max_rows(Var a, std::span<const std::uint8_t> valid_rows);

/// Scaled dot-product attention on `blocks` independent sequences of length
/// `len` stacked along the rows of q, k, v (each blocks*len x d). Columns are
/// split into `heads` equal groups. Scores are multiplied by `scale`, entries
/// at invalid key positions (and future positions when `causal`) are filled
/// with -1e9 before the softmax. If `weights_out` is non-null it receives the
/// blocks*heads attention matrices (len x len each).
Var block_attention(Var q, Var k, Var v, std::size_t blocks, std::size_t len, std::size_t heads,
                    std::span<const std::uint8_t> valid, bool causal, double scale,
                    std::vector<Matrix>* weights_out = nullptr);

/// -log softmax(logits)[label]; logits is 1 x C.
Var cross_entropy(Var logits, std::size_t label);

/// Fill value applied to masked attention scores.
inline constexpr double kMaskFill = -1e9;

}  // namespace txscam::nn
