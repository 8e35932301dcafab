#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "url/numeric/parameter.hpp"
#include "url/numeric/tensor.hpp"
#include "url/rng.hpp"

namespace url::numeric {

class Tape;

// Handle to a node on a tape. Cheap to copy; owns nothing.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Tensor& grad() const;
};

// Reverse-mode autodiff tape. Every op appends a node holding its output
// value and a closure that pushes gradient to its parents, so creation order
// is already a topological order and backward() is a single reverse sweep.
//
// Gradients of Parameter leaves are *accumulated* into Parameter::grad
// (micro-batch accumulation falls out of simply not zeroing between passes).
// Non-trainable parameters are skipped entirely, which both enforces the
// frozen-weights contract and avoids wasted matmuls in LoRA-only training.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf without gradient (data, masks, frozen constants).
  Var constant(Tensor value);
  // Leaf with gradient but no Parameter binding (gradient-check probes).
  Var input(Tensor value);
  // Parameter leaf; one node per distinct Parameter per tape.
  Var leaf(Parameter& p);

  // Generic op node; `parents` establishes needs_grad propagation. `op` names
  // the operation in error messages.
  Var make_op(const char* op, Tensor value, std::span<const Var> parents,
              BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse creation order and
  // accumulates into trainable Parameter::grad buffers. The loss must be a
  // single-element tensor. Node-local gradients reset on every call;
  // parameter gradients do not (call Parameter::zero_grad for that).
  void backward(Var loss);

  const Tensor& value(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }
  // Gradient buffer of a node, allocated (zeros) on first touch.
  Tensor& ensure_grad(int32_t id);
  // After backward(): the node's gradient, or a zeros tensor if untouched.
  const Tensor& grad(int32_t id) const;
  bool wants_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by a backward sweep
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Tensor value, bool needs_grad, BackwardFn backward, Parameter* param);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int32_t> param_ids_;
  std::vector<std::pair<Parameter*, int32_t>> param_leaves_;
  mutable Tensor zero_grad_stub_;
};

// ---- ops --------------------------------------------------------------------
// All ops validate shapes (ShapeError) and reject non-finite outputs
// (NumericError), so a NaN can never propagate silently.

// C = A * B, or A * B^T when transpose_b. Rank-2 operands only.
Var matmul(Var a, Var b, bool transpose_b = false);
Var add(Var a, Var b);            // same shape
Var mul(Var a, Var b);            // elementwise, same shape
Var scale(Var a, double c);
Var gelu(Var x);
Var softmax_rows(Var x);
Var causal_softmax(Var x);        // [t x t] scores
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Inverted dropout; draws one uniform per element from `rng` at build time.
// p == 0 returns x unchanged (no node).
Var dropout(Var x, double p, RngStream& rng);
// rows of `table` selected by id; backward scatter-adds.
Var gather_rows(Var table, std::vector<int> ids);
Var stack_rows(std::span<const Var> parts);
Var concat_rows(Var a, Var b);
Var slice_cols(Var x, int64_t c0, int64_t c1);
Var concat_cols(std::span<const Var> parts);
// Mean of rows [r0, r1) -> [1 x cols].
Var mean_rows(Var x, int64_t r0, int64_t r1);
// Rows scaled to unit L2 norm; zero or non-finite norms raise NumericError.
Var l2_normalize_rows(Var x);
Var sum(Var x);                   // -> [1]
// Mean of -log softmax(logits[r])[targets[r]] over rows with mask[r] != 0.
// Requires at least one masked row; masked targets must be valid columns.
Var cross_entropy(Var logits, std::vector<int> targets,
                  std::vector<unsigned char> mask);

}  // namespace url::numeric
