#ifndef OPC_TAPE_HPP_
#define OPC_TAPE_HPP_

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "opc/tensor.hpp"

namespace opc {

class Tape;

// A tensor value, optionally tracked on a tape. Untracked Vars are
// constants: building math out of them never records anything.
class Var {
 public:
  Var() = default;
  Var(Tensor value)  // NOLINT: implicit constant
      : value_(std::make_shared<Tensor>(std::move(value))) {}

  const Tensor& value() const { return *value_; }
  std::shared_ptr<const Tensor> value_ptr() const { return value_; }
  double scalar() const { return value_->scalar_value(); }
  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  friend Var detach(const Var& a);
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

inline Var scalar_var(double v) { return Var(Tensor::scalar(v)); }

// Leaf id -> gradient tensor of the leaf's shape.
class Gradient {
 public:
  const Tensor& at(const Var& leaf) const;
  bool all_finite() const;

 private:
  friend class Tape;
  std::unordered_map<int, Tensor> by_node_;
};

// Reverse-mode tape. Single-owner, single-threaded; nodes are recorded
// eagerly (values computed at op creation) and visited exactly once in
// reverse order during backward. Parallelism belongs across tapes, with
// worker tapes grafted in via custom().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);

  // Accumulates gradients to the parents of the node being differentiated.
  class GradSink {
   public:
    void add(std::size_t parent_index, Tensor grad);

   private:
    friend class Tape;
    GradSink(Tape& tape, int node) : tape_(tape), node_(node) {}
    Tape& tape_;
    int node_;
  };

  using BackwardFn = std::function<void(const Tensor& out_grad, GradSink& sink)>;

  // Records a node with an externally supplied backward. This is how a
  // subgraph evaluated on a worker tape joins the loss tape: the closure
  // runs the worker's backward_vjp and forwards the leaf gradient here.
  Var custom(const char* op, std::vector<Var> parents, Tensor value, BackwardFn backward);

  // loss must be a scalar produced on this tape. Leaves disconnected from
  // the loss get zero gradients. NaN gradients abort, naming the node.
  Gradient backward(const Var& loss, std::span<const Var> leaves);

  // General vector-Jacobian product: seeds `output` with `cotangent`.
  Gradient backward_vjp(const Var& output, const Tensor& cotangent,
                        std::span<const Var> leaves);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class GradSink;
  struct Node {
    const char* op;
    std::vector<int> parents;  // -1 for untracked inputs
    std::shared_ptr<const Tensor> value;
    BackwardFn backward;  // empty for leaves
  };

  Var append(const char* op, std::vector<int> parents, Tensor value, BackwardFn backward);
  void accumulate(int node, Tensor grad);

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;  // live only during backward
};

// ---- op set ----
// Elementwise binary ops broadcast per standard trailing-dimension rules.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);

// [m,k]x[k,n] -> [m,n]; also [k]x[k,n] -> [n] and [m,k]x[k] -> [m].
Var matmul(const Var& a, const Var& b);

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var elu(const Var& a);  // alpha = 1
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);                 // all elements -> scalar
Var row_sum(const Var& a);             // [r,c] -> [r]
Var max_all(const Var& a);             // subgradient to first argmax
Var mean(const Var& a);

// c + ln(sum exp(v - c)) with c = max(v); returns -inf iff all inputs are -inf.
Var logsumexp(const Var& a);
// Per-column logsumexp of a [r,c] matrix -> [c].
Var logsumexp_cols(const Var& a);
// Per-row logsumexp of a [r,c] matrix -> [r].
Var logsumexp_rows(const Var& a);

Var gather(const Var& a, std::vector<std::size_t> indices);
// offsets has j+1 ascending entries; out[j] = sum of a[offsets[j]..offsets[j+1])
Var segment_sum(const Var& a, std::vector<std::size_t> offsets);

Var slice(const Var& a, std::size_t offset, std::size_t len);  // 1-d
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var stack_rows(std::span<const Var> rows);  // r vectors [c] -> [r,c]

Var detach(const Var& a);  // freeze: same value, no tape

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator-(const Var& a, double b);
Var operator*(const Var& a, double b);
Var operator/(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(double a, const Var& b);
Var operator*(double a, const Var& b);

}  // namespace opc

#endif  // OPC_TAPE_HPP_
