#include "url/numeric/graph.hpp"

#include <cmath>
#include <string>

#include "url/errors.hpp"
#include "url/numeric/kernels.hpp"

namespace url::numeric {

namespace ker = kernels;

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

// ---- tape -------------------------------------------------------------------

Var Tape::push(Tensor value, bool needs_grad, BackwardFn backward,
               Parameter* param) {
  Node node;
  node.value = std::move(value);
  node.backward = std::move(backward);
  node.param = param;
  node.needs_grad = needs_grad;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite values");
  return push(std::move(value), false, nullptr, nullptr);
}

Var Tape::input(Tensor value) {
  if (!value.all_finite()) throw NumericError("input: non-finite values");
  return push(std::move(value), true, nullptr, nullptr);
}

Var Tape::leaf(Parameter& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return Var{this, it->second};
  if (!p.value().all_finite()) {
    throw NumericError("parameter '" + p.name() + "' has non-finite values");
  }
  Var v = push(p.value(), p.trainable(), nullptr, &p);
  param_ids_.emplace(&p, v.id);
  param_leaves_.emplace_back(&p, v.id);
  return v;
}

Var Tape::make_op(const char* op, Tensor value, std::span<const Var> parents,
                  BackwardFn backward) {
  bool needs_grad = false;
  for (const Var& parent : parents) {
    if (parent.tape != this) {
      throw ShapeError(std::string(op) + ": operands live on different tapes");
    }
    needs_grad = needs_grad || nodes_[static_cast<size_t>(parent.id)].needs_grad;
  }
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": produced non-finite values");
  }
  return push(std::move(value), needs_grad,
              needs_grad ? std::move(backward) : nullptr, nullptr);
}

Tensor& Tape::ensure_grad(int32_t id) {
  Node& node = nodes_[static_cast<size_t>(id)];
  if (node.grad.empty()) node.grad = Tensor::zeros(node.value.shape());
  return node.grad;
}

const Tensor& Tape::grad(int32_t id) const {
  const Node& node = nodes_[static_cast<size_t>(id)];
  if (!node.grad.empty()) return node.grad;
  zero_grad_stub_ = Tensor::zeros(node.value.shape());
  return zero_grad_stub_;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ShapeError("backward: loss lives on another tape");
  Node& loss_node = nodes_[static_cast<size_t>(loss.id)];
  if (loss_node.value.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     loss_node.value.shape_str());
  }
  for (Node& node : nodes_) node.grad = Tensor{};
  ensure_grad(loss.id).values()[0] = 1.0;

  for (int32_t id = loss.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<size_t>(id)];
    if (!node.needs_grad || node.grad.empty() || !node.backward) continue;
    node.backward(*this, node.grad);
  }

  for (auto& [param, id] : param_leaves_) {
    if (!param->trainable()) continue;
    const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
    if (g.empty()) continue;
    auto& acc = param->grad().values();
    const auto& src = g.values();
    for (size_t i = 0; i < src.size(); ++i) acc[i] += src[i];
  }
}

// ---- op helpers ---------------------------------------------------------------

namespace {

const Tensor& val(const Var& v) { return v.tape->value(v.id); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     t.shape_str());
  }
}

}  // namespace

// ---- ops ----------------------------------------------------------------------

Var matmul(Var a, Var b, bool transpose_b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_rank2(ta, "matmul");
  require_rank2(tb, "matmul");
  int64_t m = ta.dim(0), k = ta.dim(1);
  int64_t n = transpose_b ? tb.dim(0) : tb.dim(1);
  int64_t k_b = transpose_b ? tb.dim(1) : tb.dim(0);
  if (k != k_b) {
    throw ShapeError("matmul: inner dimensions disagree, " + ta.shape_str() +
                     (transpose_b ? " vs transposed " : " vs ") + tb.shape_str());
  }
  Tensor out({m, n});
  if (transpose_b) {
    ker::matmul_nt(ta.data(), tb.data(), out.data(), m, k, n, false);
  } else {
    ker::matmul_nn(ta.data(), tb.data(), out.data(), m, k, n, false);
  }
  Var parents[] = {a, b};
  return a.tape->make_op(
      "matmul", std::move(out), parents,
      [a_id = a.id, b_id = b.id, m, k, n, transpose_b](Tape& t, const Tensor& dc) {
        if (t.wants_grad(a_id)) {
          double* da = t.ensure_grad(a_id).data();
          const double* bp = t.value(b_id).data();
          if (transpose_b) {
            ker::matmul_nn(dc.data(), bp, da, m, n, k, true);
          } else {
            ker::matmul_nt(dc.data(), bp, da, m, n, k, true);
          }
        }
        if (t.wants_grad(b_id)) {
          double* db = t.ensure_grad(b_id).data();
          const double* ap = t.value(a_id).data();
          if (transpose_b) {
            ker::matmul_tn(dc.data(), ap, db, n, m, k, true);
          } else {
            ker::matmul_tn(ap, dc.data(), db, k, m, n, true);
          }
        }
      });
}

Var add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "add");
  Tensor out(ta.shape(), ta.values());
  auto& ov = out.values();
  const auto& bv = tb.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  Var parents[] = {a, b};
  return a.tape->make_op(
      "add", std::move(out), parents,
      [a_id = a.id, b_id = b.id](Tape& t, const Tensor& d) {
        for (int32_t pid : {a_id, b_id}) {
          if (!t.wants_grad(pid)) continue;
          auto& g = t.ensure_grad(pid).values();
          const auto& dv = d.values();
          for (size_t i = 0; i < dv.size(); ++i) g[i] += dv[i];
        }
      });
}

Var mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "mul");
  Tensor out(ta.shape(), ta.values());
  auto& ov = out.values();
  const auto& bv = tb.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  Var parents[] = {a, b};
  return a.tape->make_op(
      "mul", std::move(out), parents,
      [a_id = a.id, b_id = b.id](Tape& t, const Tensor& d) {
        const auto& dv = d.values();
        if (t.wants_grad(a_id)) {
          auto& g = t.ensure_grad(a_id).values();
          const auto& other = t.value(b_id).values();
          for (size_t i = 0; i < dv.size(); ++i) g[i] += dv[i] * other[i];
        }
        if (t.wants_grad(b_id)) {
          auto& g = t.ensure_grad(b_id).values();
          const auto& other = t.value(a_id).values();
          for (size_t i = 0; i < dv.size(); ++i) g[i] += dv[i] * other[i];
        }
      });
}

Var scale(Var a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: factor is not finite");
  Tensor out(val(a).shape(), val(a).values());
  for (double& v : out.values()) v *= c;
  Var parents[] = {a};
  return a.tape->make_op(
      "scale", std::move(out), parents,
      [a_id = a.id, c](Tape& t, const Tensor& d) {
        if (!t.wants_grad(a_id)) return;
        auto& g = t.ensure_grad(a_id).values();
        const auto& dv = d.values();
        for (size_t i = 0; i < dv.size(); ++i) g[i] += c * dv[i];
      });
}

Var gelu(Var x) {
  const Tensor& tx = val(x);
  Tensor out(tx.shape());
  ker::gelu_forward(tx.data(), out.data(), tx.numel());
  Var parents[] = {x};
  return x.tape->make_op(
      "gelu", std::move(out), parents,
      [x_id = x.id](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        const Tensor& tx = t.value(x_id);
        ker::gelu_backward(tx.data(), d.data(), t.ensure_grad(x_id).data(),
                           tx.numel());
      });
}

Var softmax_rows(Var x) {
  const Tensor& tx = val(x);
  require_rank2(tx, "softmax_rows");
  Tensor out(tx.shape());
  ker::softmax_rows(tx.data(), out.data(), tx.dim(0), tx.dim(1));
  // The backward pass reads this op's own output; its id is the next slot.
  int32_t self_id = static_cast<int32_t>(x.tape->size());
  Var parents[] = {x};
  return x.tape->make_op(
      "softmax_rows", std::move(out), parents,
      [x_id = x.id, self_id](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        const Tensor& y = t.value(self_id);
        ker::softmax_rows_backward(y.data(), d.data(),
                                   t.ensure_grad(x_id).data(), y.dim(0),
                                   y.dim(1));
      });
}

Var causal_softmax(Var x) {
  const Tensor& tx = val(x);
  require_rank2(tx, "causal_softmax");
  if (tx.dim(0) != tx.dim(1)) {
    throw ShapeError("causal_softmax: scores must be square, got " +
                     tx.shape_str());
  }
  Tensor out(tx.shape());
  ker::causal_softmax(tx.data(), out.data(), tx.dim(0));
  int32_t self_id = static_cast<int32_t>(x.tape->size());
  Var parents[] = {x};
  return x.tape->make_op(
      "causal_softmax", std::move(out), parents,
      [x_id = x.id, self_id](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        const Tensor& y = t.value(self_id);
        ker::causal_softmax_backward(y.data(), d.data(),
                                     t.ensure_grad(x_id).data(), y.dim(0));
      });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& tx = val(x);
  require_rank2(tx, "layer_norm");
  int64_t rows = tx.dim(0), cols = tx.dim(1);
  if (val(gamma).numel() != cols || val(beta).numel() != cols) {
    throw ShapeError("layer_norm: gamma/beta must have " +
                     std::to_string(cols) + " elements");
  }
  Tensor out(tx.shape());
  std::vector<double> mean(static_cast<size_t>(rows));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  ker::layernorm_rows(tx.data(), val(gamma).data(), val(beta).data(),
                      out.data(), mean.data(), inv_std.data(), rows, cols, eps);
  Var parents[] = {x, gamma, beta};
  return x.tape->make_op(
      "layer_norm", std::move(out), parents,
      [x_id = x.id, g_id = gamma.id, b_id = beta.id, mean = std::move(mean),
       inv_std = std::move(inv_std), rows, cols](Tape& t, const Tensor& d) {
        const Tensor& tx = t.value(x_id);
        if (t.wants_grad(x_id)) {
          ker::layernorm_backward_input(tx.data(), t.value(g_id).data(),
                                        mean.data(), inv_std.data(), d.data(),
                                        t.ensure_grad(x_id).data(), rows, cols);
        }
        if (t.wants_grad(g_id) || t.wants_grad(b_id)) {
          // dgamma and dbeta come out of one kernel; route unwanted halves
          // into scratch so frozen affine params stay grad-free.
          Tensor scratch_g, scratch_b;
          double* dg;
          double* db;
          if (t.wants_grad(g_id)) {
            dg = t.ensure_grad(g_id).data();
          } else {
            scratch_g = Tensor::zeros({cols});
            dg = scratch_g.data();
          }
          if (t.wants_grad(b_id)) {
            db = t.ensure_grad(b_id).data();
          } else {
            scratch_b = Tensor::zeros({cols});
            db = scratch_b.data();
          }
          ker::layernorm_backward_params(tx.data(), mean.data(),
                                         inv_std.data(), d.data(), dg, db,
                                         rows, cols);
        }
      });
}

Var dropout(Var x, double p, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw NumericError("dropout: rate must be in [0, 1), got " +
                       std::to_string(p));
  }
  if (p == 0.0) return x;
  const Tensor& tx = val(x);
  double keep_scale = 1.0 / (1.0 - p);
  Tensor mask(tx.shape());
  for (double& m : mask.values()) {
    m = rng.next_uniform() >= p ? keep_scale : 0.0;
  }
  Tensor out(tx.shape(), tx.values());
  {
    auto& ov = out.values();
    const auto& mv = mask.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] *= mv[i];
  }
  Var parents[] = {x};
  return x.tape->make_op(
      "dropout", std::move(out), parents,
      [x_id = x.id, mask = std::move(mask)](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        auto& g = t.ensure_grad(x_id).values();
        const auto& dv = d.values();
        const auto& mv = mask.values();
        for (size_t i = 0; i < dv.size(); ++i) g[i] += dv[i] * mv[i];
      });
}

Var gather_rows(Var table, std::vector<int> ids) {
  const Tensor& tt = val(table);
  require_rank2(tt, "gather_rows");
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  int64_t rows = tt.dim(0), cols = tt.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= rows) {
      throw ShapeError("gather_rows: id " + std::to_string(id) +
                       " outside table with " + std::to_string(rows) + " rows");
    }
  }
  Tensor out({static_cast<int64_t>(ids.size()), cols});
  for (size_t r = 0; r < ids.size(); ++r) {
    const double* src = tt.data() + static_cast<int64_t>(ids[r]) * cols;
    double* dst = out.data() + static_cast<int64_t>(r) * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j] = src[j];
  }
  Var parents[] = {table};
  return table.tape->make_op(
      "gather_rows", std::move(out), parents,
      [t_id = table.id, ids = std::move(ids), cols](Tape& t, const Tensor& d) {
        if (!t.wants_grad(t_id)) return;
        double* g = t.ensure_grad(t_id).data();
        // Serial scatter-add: repeated ids must accumulate deterministically.
        for (size_t r = 0; r < ids.size(); ++r) {
          const double* src = d.data() + static_cast<int64_t>(r) * cols;
          double* dst = g + static_cast<int64_t>(ids[r]) * cols;
          for (int64_t j = 0; j < cols; ++j) dst[j] += src[j];
        }
      });
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack_rows: no operands");
  int64_t cols = val(parts[0]).cols();
  int64_t rows = 0;
  for (const Var& part : parts) {
    require_rank2(val(part), "stack_rows");
    if (val(part).dim(1) != cols) {
      throw ShapeError("stack_rows: column counts disagree");
    }
    rows += val(part).dim(0);
  }
  Tensor out({rows, cols});
  std::vector<int32_t> ids;
  std::vector<int64_t> offsets;
  int64_t at = 0;
  for (const Var& part : parts) {
    const Tensor& tp = val(part);
    std::copy(tp.values().begin(), tp.values().end(), out.data() + at);
    ids.push_back(part.id);
    offsets.push_back(at);
    at += tp.numel();
  }
  return parts[0].tape->make_op(
      "stack_rows", std::move(out), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t,
                                                           const Tensor& d) {
        for (size_t i = 0; i < ids.size(); ++i) {
          if (!t.wants_grad(ids[i])) continue;
          auto& g = t.ensure_grad(ids[i]).values();
          const double* src = d.data() + offsets[i];
          for (size_t j = 0; j < g.size(); ++j) g[j] += src[j];
        }
      });
}

Var concat_rows(Var a, Var b) {
  Var parts[] = {a, b};
  return stack_rows(parts);
}

Var slice_cols(Var x, int64_t c0, int64_t c1) {
  const Tensor& tx = val(x);
  require_rank2(tx, "slice_cols");
  int64_t rows = tx.dim(0), cols = tx.dim(1);
  if (c0 < 0 || c1 <= c0 || c1 > cols) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") for " + tx.shape_str());
  }
  int64_t width = c1 - c0;
  Tensor out({rows, width});
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = tx.data() + r * cols + c0;
    double* dst = out.data() + r * width;
    for (int64_t j = 0; j < width; ++j) dst[j] = src[j];
  }
  Var parents[] = {x};
  return x.tape->make_op(
      "slice_cols", std::move(out), parents,
      [x_id = x.id, c0, width, cols, rows](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        double* g = t.ensure_grad(x_id).data();
        for (int64_t r = 0; r < rows; ++r) {
          const double* src = d.data() + r * width;
          double* dst = g + r * cols + c0;
          for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  int64_t rows = val(parts[0]).rows();
  int64_t cols = 0;
  for (const Var& part : parts) {
    require_rank2(val(part), "concat_cols");
    if (val(part).dim(0) != rows) {
      throw ShapeError("concat_cols: row counts disagree");
    }
    cols += val(part).dim(1);
  }
  Tensor out({rows, cols});
  std::vector<int32_t> ids;
  std::vector<int64_t> col_offsets;
  std::vector<int64_t> widths;
  int64_t at = 0;
  for (const Var& part : parts) {
    const Tensor& tp = val(part);
    int64_t width = tp.dim(1);
    for (int64_t r = 0; r < rows; ++r) {
      const double* src = tp.data() + r * width;
      double* dst = out.data() + r * cols + at;
      for (int64_t j = 0; j < width; ++j) dst[j] = src[j];
    }
    ids.push_back(part.id);
    col_offsets.push_back(at);
    widths.push_back(width);
    at += width;
  }
  return parts[0].tape->make_op(
      "concat_cols", std::move(out), parts,
      [ids = std::move(ids), col_offsets = std::move(col_offsets),
       widths = std::move(widths), rows, cols](Tape& t, const Tensor& d) {
        for (size_t i = 0; i < ids.size(); ++i) {
          if (!t.wants_grad(ids[i])) continue;
          double* g = t.ensure_grad(ids[i]).data();
          for (int64_t r = 0; r < rows; ++r) {
            const double* src = d.data() + r * cols + col_offsets[i];
            double* dst = g + r * widths[i];
            for (int64_t j = 0; j < widths[i]; ++j) dst[j] += src[j];
          }
        }
      });
}

Var mean_rows(Var x, int64_t r0, int64_t r1) {
  const Tensor& tx = val(x);
  require_rank2(tx, "mean_rows");
  int64_t rows = tx.dim(0), cols = tx.dim(1);
  if (r0 < 0 || r1 <= r0 || r1 > rows) {
    throw ShapeError("mean_rows: bad row range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") for " + tx.shape_str());
  }
  double inv_count = 1.0 / static_cast<double>(r1 - r0);
  Tensor out({1, cols});
  for (int64_t r = r0; r < r1; ++r) {
    const double* src = tx.data() + r * cols;
    for (int64_t j = 0; j < cols; ++j) out.data()[j] += src[j];
  }
  for (int64_t j = 0; j < cols; ++j) out.data()[j] *= inv_count;
  Var parents[] = {x};
  return x.tape->make_op(
      "mean_rows", std::move(out), parents,
      [x_id = x.id, r0, r1, cols, inv_count](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        double* g = t.ensure_grad(x_id).data();
        for (int64_t r = r0; r < r1; ++r) {
          double* dst = g + r * cols;
          for (int64_t j = 0; j < cols; ++j) dst[j] += d.data()[j] * inv_count;
        }
      });
}

Var l2_normalize_rows(Var x) {
  const Tensor& tx = val(x);
  require_rank2(tx, "l2_normalize_rows");
  int64_t rows = tx.dim(0), cols = tx.dim(1);
  std::vector<double> norms(static_cast<size_t>(rows));
  Tensor out(tx.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = tx.data() + r * cols;
    double sq = 0.0;
    for (int64_t j = 0; j < cols; ++j) sq += src[j] * src[j];
    double norm = std::sqrt(sq);
    if (norm == 0.0 || !std::isfinite(norm)) {
      throw NumericError("l2_normalize_rows: row " + std::to_string(r) +
                         " has zero or non-finite norm");
    }
    norms[static_cast<size_t>(r)] = norm;
    double* dst = out.data() + r * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j] = src[j] / norm;
  }
  int32_t self_id = static_cast<int32_t>(x.tape->size());
  Var parents[] = {x};
  return x.tape->make_op(
      "l2_normalize_rows", std::move(out), parents,
      [x_id = x.id, self_id, norms = std::move(norms), rows,
       cols](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        const Tensor& y = t.value(self_id);
        double* g = t.ensure_grad(x_id).data();
        for (int64_t r = 0; r < rows; ++r) {
          const double* yr = y.data() + r * cols;
          const double* dr = d.data() + r * cols;
          double dot = 0.0;
          for (int64_t j = 0; j < cols; ++j) dot += dr[j] * yr[j];
          double inv_norm = 1.0 / norms[static_cast<size_t>(r)];
          double* gr = g + r * cols;
          for (int64_t j = 0; j < cols; ++j) {
            gr[j] += (dr[j] - yr[j] * dot) * inv_norm;
          }
        }
      });
}

Var sum(Var x) {
  const Tensor& tx = val(x);
  double total = 0.0;
  for (double v : tx.values()) total += v;
  Var parents[] = {x};
  return x.tape->make_op(
      "sum", Tensor::scalar(total), parents,
      [x_id = x.id](Tape& t, const Tensor& d) {
        if (!t.wants_grad(x_id)) return;
        double upstream = d.values()[0];
        for (double& g : t.ensure_grad(x_id).values()) g += upstream;
      });
}

Var cross_entropy(Var logits, std::vector<int> targets,
                  std::vector<unsigned char> mask) {
  const Tensor& tl = val(logits);
  require_rank2(tl, "cross_entropy");
  int64_t rows = tl.dim(0), cols = tl.dim(1);
  if (static_cast<int64_t>(targets.size()) != rows ||
      static_cast<int64_t>(mask.size()) != rows) {
    throw ShapeError("cross_entropy: need one target and one mask flag per "
                     "logit row, got " + std::to_string(targets.size()) +
                     " targets / " + std::to_string(mask.size()) +
                     " flags for " + std::to_string(rows) + " rows");
  }
  int64_t n_masked = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    ++n_masked;
    int tgt = targets[static_cast<size_t>(r)];
    if (tgt < 0 || tgt >= cols) {
      throw ShapeError("cross_entropy: target " + std::to_string(tgt) +
                       " outside " + std::to_string(cols) + " classes");
    }
  }
  if (n_masked == 0) {
    throw ShapeError("cross_entropy: every position is masked out");
  }
  std::vector<double> row_lse(static_cast<size_t>(rows));
  double loss = ker::cross_entropy_forward(tl.data(), targets.data(),
                                           mask.data(), row_lse.data(), rows,
                                           cols);
  Var parents[] = {logits};
  return logits.tape->make_op(
      "cross_entropy", Tensor::scalar(loss), parents,
      [l_id = logits.id, targets = std::move(targets), mask = std::move(mask),
       row_lse = std::move(row_lse), n_masked, rows,
       cols](Tape& t, const Tensor& d) {
        if (!t.wants_grad(l_id)) return;
        ker::cross_entropy_backward(t.value(l_id).data(), targets.data(),
                                    mask.data(), row_lse.data(), d.values()[0],
                                    n_masked, t.ensure_grad(l_id).data(), rows,
                                    cols);
      });
}

}  // namespace url::numeric
