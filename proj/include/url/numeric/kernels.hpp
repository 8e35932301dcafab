#pragma once

#include <cstdint>

namespace url::numeric::kernels {

// Dense double-precision kernels behind the autodiff ops. Each kernel has two
// lanes with identical arithmetic:
//
//   serial::  - plain loops, the reference implementation
//   par::     - OpenMP `parallel for` over *independent* output rows/columns
//
// The parallel lanes never split an accumulation chain across threads (no
// OpenMP reductions), so both lanes produce bit-identical results for any
// thread count. Tests compare the lanes element-for-element; the top-level
// wrappers dispatch on problem size.
//
// All matrices are row-major. `accumulate` selects C += ... versus C = ...

enum class Lane { kAuto, kSerial, kParallel };

// Process-wide lane override (tests and the benchmark force a lane; the
// default kAuto dispatches by output size).
void set_lane(Lane lane);
Lane lane();
bool parallel_available();

namespace serial {

// C[m x n] (+)= A[m x k] * B[k x n]
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
// C[m x n] (+)= A[m x k] * B[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
// C[m x n] (+)= A[k x m]^T * B[k x n]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);

void gelu_forward(const double* x, double* y, int64_t n);
// dx += dgelu(x) * dy
void gelu_backward(const double* x, const double* dy, double* dx, int64_t n);

// Row-wise softmax with max subtraction.
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
// dx += (dy - sum_j dy_j y_j) * y, per row. `y` is the forward output.
void softmax_rows_backward(const double* y, const double* dy, double* dx, int64_t rows, int64_t cols);

// Causal softmax over a [t x t] score matrix: row r is a softmax over columns
// 0..r and exactly 0.0 beyond, so position r can never attend to r+1...
void causal_softmax(const double* x, double* y, int64_t t);
void causal_softmax_backward(const double* y, const double* dy, double* dx, int64_t t);

// Row-wise layer norm: y = (x - mean) / sqrt(var + eps) * gamma + beta.
// mean/inv_std are per-row scratch saved for the backward pass.
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* y, double* mean, double* inv_std,
                    int64_t rows, int64_t cols, double eps);
// dx += ..., parallel over rows.
void layernorm_backward_input(const double* x, const double* gamma,
                              const double* mean, const double* inv_std,
                              const double* dy, double* dx,
                              int64_t rows, int64_t cols);
// dgamma/dbeta +=, parallel over columns (each column sums rows in order).
void layernorm_backward_params(const double* x, const double* mean,
                               const double* inv_std, const double* dy,
                               double* dgamma, double* dbeta,
                               int64_t rows, int64_t cols);

// Masked token cross-entropy over logit rows. For each row r with
// mask[r] != 0, adds -log softmax(logits[r])[targets[r]]; returns the sum
// divided by the number of masked rows. row_lse (size rows) is scratch saved
// for the backward pass (log-sum-exp of each masked row).
double cross_entropy_forward(const double* logits, const int* targets,
                             const unsigned char* mask, double* row_lse,
                             int64_t rows, int64_t cols);
// dlogits += (softmax - onehot) * upstream / n_masked on masked rows.
void cross_entropy_backward(const double* logits, const int* targets,
                            const unsigned char* mask, const double* row_lse,
                            double upstream, int64_t n_masked, double* dlogits,
                            int64_t rows, int64_t cols);

}  // namespace serial

namespace par {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void gelu_forward(const double* x, double* y, int64_t n);
void gelu_backward(const double* x, const double* dy, double* dx, int64_t n);
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx, int64_t rows, int64_t cols);
void causal_softmax(const double* x, double* y, int64_t t);
void causal_softmax_backward(const double* y, const double* dy, double* dx, int64_t t);
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* y, double* mean, double* inv_std,
                    int64_t rows, int64_t cols, double eps);
void layernorm_backward_input(const double* x, const double* gamma,
                              const double* mean, const double* inv_std,
                              const double* dy, double* dx,
                              int64_t rows, int64_t cols);
void layernorm_backward_params(const double* x, const double* mean,
                               const double* inv_std, const double* dy,
                               double* dgamma, double* dbeta,
                               int64_t rows, int64_t cols);
double cross_entropy_forward(const double* logits, const int* targets,
                             const unsigned char* mask, double* row_lse,
                             int64_t rows, int64_t cols);
void cross_entropy_backward(const double* logits, const int* targets,
                            const unsigned char* mask, const double* row_lse,
                            double upstream, int64_t n_masked, double* dlogits,
                            int64_t rows, int64_t cols);

}  // namespace par

// Dispatching wrappers: pick par:: when the lane override (or, under kAuto,
// the output size) says it is worth it, serial:: otherwise.
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void gelu_forward(const double* x, double* y, int64_t n);
void gelu_backward(const double* x, const double* dy, double* dx, int64_t n);
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx, int64_t rows, int64_t cols);
void causal_softmax(const double* x, double* y, int64_t t);
void causal_softmax_backward(const double* y, const double* dy, double* dx, int64_t t);
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* y, double* mean, double* inv_std,
                    int64_t rows, int64_t cols, double eps);
void layernorm_backward_input(const double* x, const double* gamma,
                              const double* mean, const double* inv_std,
                              const double* dy, double* dx,
                              int64_t rows, int64_t cols);
void layernorm_backward_params(const double* x, const double* mean,
                               const double* inv_std, const double* dy,
                               double* dgamma, double* dbeta,
                               int64_t rows, int64_t cols);
double cross_entropy_forward(const double* logits, const int* targets,
                             const unsigned char* mask, double* row_lse,
                             int64_t rows, int64_t cols);
void cross_entropy_backward(const double* logits, const int* targets,
                            const unsigned char* mask, const double* row_lse,
                            double upstream, int64_t n_masked, double* dlogits,
                            int64_t rows, int64_t cols);

}  // namespace url::numeric::kernels
