#include "url/numeric/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace url::numeric::kernels {

namespace {

Lane g_lane = Lane::kAuto;

// Minimum number of inner multiply-adds (or elements) before kAuto picks the
// parallel lane; below this thread startup costs more than it saves.
constexpr int64_t kParallelWork = 16384;

bool use_par(int64_t work) {
  switch (g_lane) {
    case Lane::kSerial: return false;
    case Lane::kParallel: return parallel_available();
    case Lane::kAuto: return parallel_available() && work >= kParallelWork;
  }
  return false;
}

// ---- per-row bodies shared by both lanes -----------------------------------
// Each helper computes one independent output row (or column) with a fixed
// serial accumulation order, so the lanes differ only in who loops over rows.

inline void mm_row_nn(const double* a_row, const double* b, double* c_row,
                      int64_t k, int64_t n, bool accumulate) {
  if (!accumulate) {
    for (int64_t j = 0; j < n; ++j) c_row[j] = 0.0;
  }
  for (int64_t p = 0; p < k; ++p) {
    double ap = a_row[p];
    const double* b_row = b + p * n;
    for (int64_t j = 0; j < n; ++j) c_row[j] += ap * b_row[j];
  }
}

inline void mm_row_nt(const double* a_row, const double* b, double* c_row,
                      int64_t k, int64_t n, bool accumulate) {
  for (int64_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (int64_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = accumulate ? c_row[j] + acc : acc;
  }
}

// Row i of C = A^T B, where A is [k x m]: c[j] = sum_p a[p*m + i] * b[p*n + j].
inline void mm_row_tn(const double* a_col, const double* b, double* c_row,
                      int64_t k, int64_t m, int64_t n, bool accumulate) {
  if (!accumulate) {
    for (int64_t j = 0; j < n; ++j) c_row[j] = 0.0;
  }
  for (int64_t p = 0; p < k; ++p) {
    double ap = a_col[p * m];
    const double* b_row = b + p * n;
    for (int64_t j = 0; j < n; ++j) c_row[j] += ap * b_row[j];
  }
}

inline double gelu_one(double x) {
  // tanh-approximation GELU; smooth everywhere, which keeps finite-difference
  // gradient checks clean.
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad_one(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
  double t = std::tanh(u);
  double du = kSqrt2OverPi * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// Softmax over x[0..w) into y[0..w); zero-fills y[w..cols).
inline void softmax_row(const double* x, double* y, int64_t w, int64_t cols) {
  double mx = x[0];
  for (int64_t j = 1; j < w; ++j) mx = x[j] > mx ? x[j] : mx;
  double denom = 0.0;
  for (int64_t j = 0; j < w; ++j) {
    y[j] = std::exp(x[j] - mx);
    denom += y[j];
  }
  for (int64_t j = 0; j < w; ++j) y[j] /= denom;
  for (int64_t j = w; j < cols; ++j) y[j] = 0.0;
}

// dx[0..w) += (dy - sum dy*y) * y
inline void softmax_row_backward(const double* y, const double* dy, double* dx,
                                 int64_t w) {
  double dot = 0.0;
  for (int64_t j = 0; j < w; ++j) dot += dy[j] * y[j];
  for (int64_t j = 0; j < w; ++j) dx[j] += (dy[j] - dot) * y[j];
}

inline void layernorm_row(const double* x, const double* gamma,
                          const double* beta, double* y, double* mean_out,
                          double* inv_std_out, int64_t n, double eps) {
  double sum = 0.0;
  for (int64_t j = 0; j < n; ++j) sum += x[j];
  double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    double d = x[j] - mean;
    sq += d * d;
  }
  double inv_std = 1.0 / std::sqrt(sq / static_cast<double>(n) + eps);
  for (int64_t j = 0; j < n; ++j) {
    y[j] = (x[j] - mean) * inv_std * gamma[j] + beta[j];
  }
  *mean_out = mean;
  *inv_std_out = inv_std;
}

inline void layernorm_row_backward_input(const double* x, const double* gamma,
                                         double mean, double inv_std,
                                         const double* dy, double* dx,
                                         int64_t n) {
  double s1 = 0.0, s2 = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    double xhat = (x[j] - mean) * inv_std;
    double dxhat = dy[j] * gamma[j];
    s1 += dxhat;
    s2 += dxhat * xhat;
  }
  double inv_n = 1.0 / static_cast<double>(n);
  for (int64_t j = 0; j < n; ++j) {
    double xhat = (x[j] - mean) * inv_std;
    double dxhat = dy[j] * gamma[j];
    dx[j] += inv_std * (dxhat - s1 * inv_n - xhat * s2 * inv_n);
  }
}

// One column of dgamma/dbeta: sums rows in ascending order.
inline void layernorm_col_backward_params(const double* x, const double* mean,
                                          const double* inv_std,
                                          const double* dy, double* dgamma_j,
                                          double* dbeta_j, int64_t rows,
                                          int64_t cols, int64_t j) {
  double dg = 0.0, db = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    double xhat = (x[r * cols + j] - mean[r]) * inv_std[r];
    dg += dy[r * cols + j] * xhat;
    db += dy[r * cols + j];
  }
  *dgamma_j += dg;
  *dbeta_j += db;
}

// Returns this row's loss term (lse - logit[target]); stores lse.
inline double ce_row_forward(const double* row, int target, double* lse_out,
                             int64_t cols) {
  double mx = row[0];
  for (int64_t j = 1; j < cols; ++j) mx = row[j] > mx ? row[j] : mx;
  double denom = 0.0;
  for (int64_t j = 0; j < cols; ++j) denom += std::exp(row[j] - mx);
  double lse = mx + std::log(denom);
  *lse_out = lse;
  return lse - row[target];
}

inline void ce_row_backward(const double* row, int target, double lse,
                            double coeff, double* drow, int64_t cols) {
  for (int64_t j = 0; j < cols; ++j) {
    double p = std::exp(row[j] - lse);
    drow[j] += (p - (j == target ? 1.0 : 0.0)) * coeff;
  }
}

}  // namespace

void set_lane(Lane lane) { g_lane = lane; }
Lane lane() { return g_lane; }

bool parallel_available() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

// ---- serial lane ------------------------------------------------------------

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    mm_row_nn(a + i * k, b, c + i * n, k, n, accumulate);
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    mm_row_nt(a + i * k, b, c + i * n, k, n, accumulate);
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    mm_row_tn(a + i, b, c + i * n, k, m, n, accumulate);
  }
}

void gelu_forward(const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] += gelu_grad_one(x[i]) * dy[i];
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    softmax_row(x + r * cols, y + r * cols, cols, cols);
  }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    softmax_row_backward(y + r * cols, dy + r * cols, dx + r * cols, cols);
  }
}

void causal_softmax(const double* x, double* y, int64_t t) {
  for (int64_t r = 0; r < t; ++r) {
    softmax_row(x + r * t, y + r * t, r + 1, t);
  }
}

void causal_softmax_backward(const double* y, const double* dy, double* dx,
                             int64_t t) {
  for (int64_t r = 0; r < t; ++r) {
    softmax_row_backward(y + r * t, dy + r * t, dx + r * t, r + 1);
  }
}

void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* y, double* mean, double* inv_std, int64_t rows,
                    int64_t cols, double eps) {
  for (int64_t r = 0; r < rows; ++r) {
    layernorm_row(x + r * cols, gamma, beta, y + r * cols, mean + r,
                  inv_std + r, cols, eps);
  }
}

void layernorm_backward_input(const double* x, const double* gamma,
                              const double* mean, const double* inv_std,
                              const double* dy, double* dx, int64_t rows,
                              int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    layernorm_row_backward_input(x + r * cols, gamma, mean[r], inv_std[r],
                                 dy + r * cols, dx + r * cols, cols);
  }
}

void layernorm_backward_params(const double* x, const double* mean,
                               const double* inv_std, const double* dy,
                               double* dgamma, double* dbeta, int64_t rows,
                               int64_t cols) {
  for (int64_t j = 0; j < cols; ++j) {
    layernorm_col_backward_params(x, mean, inv_std, dy, dgamma + j, dbeta + j,
                                  rows, cols, j);
  }
}

double cross_entropy_forward(const double* logits, const int* targets,
                             const unsigned char* mask, double* row_lse,
                             int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    row_lse[r] = 0.0;
    if (mask[r]) {
      ce_row_forward(logits + r * cols, targets[r], row_lse + r, cols);
    }
  }
  double total = 0.0;
  int64_t n_masked = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    total += row_lse[r] - logits[r * cols + targets[r]];
    ++n_masked;
  }
  return n_masked > 0 ? total / static_cast<double>(n_masked) : 0.0;
}

void cross_entropy_backward(const double* logits, const int* targets,
                            const unsigned char* mask, const double* row_lse,
                            double upstream, int64_t n_masked, double* dlogits,
                            int64_t rows, int64_t cols) {
  double coeff = upstream / static_cast<double>(n_masked);
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    ce_row_backward(logits + r * cols, targets[r], row_lse[r], coeff,
                    dlogits + r * cols, cols);
  }
}

}  // namespace serial

// ---- parallel lane ----------------------------------------------------------
// Same per-row helpers, OpenMP spreading the independent rows (or, for the
// layer-norm parameter grads, the independent columns) across threads.

namespace par {

void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    mm_row_nn(a + i * k, b, c + i * n, k, n, accumulate);
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    mm_row_nt(a + i * k, b, c + i * n, k, n, accumulate);
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    mm_row_tn(a + i, b, c + i * n, k, m, n, accumulate);
  }
}

void gelu_forward(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dx[i] += gelu_grad_one(x[i]) * dy[i];
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    softmax_row(x + r * cols, y + r * cols, cols, cols);
  }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    softmax_row_backward(y + r * cols, dy + r * cols, dx + r * cols, cols);
  }
}

void causal_softmax(const double* x, double* y, int64_t t) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < t; ++r) {
    softmax_row(x + r * t, y + r * t, r + 1, t);
  }
}

void causal_softmax_backward(const double* y, const double* dy, double* dx,
                             int64_t t) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < t; ++r) {
    softmax_row_backward(y + r * t, dy + r * t, dx + r * t, r + 1);
  }
}

void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* y, double* mean, double* inv_std, int64_t rows,
                    int64_t cols, double eps) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    layernorm_row(x + r * cols, gamma, beta, y + r * cols, mean + r,
                  inv_std + r, cols, eps);
  }
}

void layernorm_backward_input(const double* x, const double* gamma,
                              const double* mean, const double* inv_std,
                              const double* dy, double* dx, int64_t rows,
                              int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    layernorm_row_backward_input(x + r * cols, gamma, mean[r], inv_std[r],
                                 dy + r * cols, dx + r * cols, cols);
  }
}

void layernorm_backward_params(const double* x, const double* mean,
                               const double* inv_std, const double* dy,
                               double* dgamma, double* dbeta, int64_t rows,
                               int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < cols; ++j) {
    layernorm_col_backward_params(x, mean, inv_std, dy, dgamma + j, dbeta + j,
                                  rows, cols, j);
  }
}

double cross_entropy_forward(const double* logits, const int* targets,
                             const unsigned char* mask, double* row_lse,
                             int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    row_lse[r] = 0.0;
    if (mask[r]) {
      ce_row_forward(logits + r * cols, targets[r], row_lse + r, cols);
    }
  }
  // Scalar reduction stays serial, in row order, so the sum is bit-stable.
  double total = 0.0;
  int64_t n_masked = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    total += row_lse[r] - logits[r * cols + targets[r]];
    ++n_masked;
  }
  return n_masked > 0 ? total / static_cast<double>(n_masked) : 0.0;
}

void cross_entropy_backward(const double* logits, const int* targets,
                            const unsigned char* mask, const double* row_lse,
                            double upstream, int64_t n_masked, double* dlogits,
                            int64_t rows, int64_t cols) {
  double coeff = upstream / static_cast<double>(n_masked);
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    ce_row_backward(logits + r * cols, targets[r], row_lse[r], coeff,
                    dlogits + r * cols, cols);
  }
}

}  // namespace par

// ---- dispatch ----------------------------------------------------------------

void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
  if (use_par(m * k * n)) par::matmul_nn(a, b, c, m, k, n, accumulate);
  else serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
  if (use_par(m * k * n)) par::matmul_nt(a, b, c, m, k, n, accumulate);
  else serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n, bool accumulate) {
  if (use_par(m * k * n)) par::matmul_tn(a, b, c, m, k, n, accumulate);
  else serial::matmul_tn(a, b, c, m, k, n, accumulate);
}

void gelu_forward(const double* x, double* y, int64_t n) {
  if (use_par(n)) par::gelu_forward(x, y, n);
  else serial::gelu_forward(x, y, n);
}

void gelu_backward(const double* x, const double* dy, double* dx, int64_t n) {
  if (use_par(n)) par::gelu_backward(x, dy, dx, n);
  else serial::gelu_backward(x, dy, dx, n);
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
  if (use_par(rows * cols)) par::softmax_rows(x, y, rows, cols);
  else serial::softmax_rows(x, y, rows, cols);
}

void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           int64_t rows, int64_t cols) {
  if (use_par(rows * cols)) par::softmax_rows_backward(y, dy, dx, rows, cols);
  else serial::softmax_rows_backward(y, dy, dx, rows, cols);
}

void causal_softmax(const double* x, double* y, int64_t t) {
  if (use_par(t * t)) par::causal_softmax(x, y, t);
  else serial::causal_softmax(x, y, t);
}

void causal_softmax_backward(const double* y, const double* dy, double* dx,
                             int64_t t) {
  if (use_par(t * t)) par::causal_softmax_backward(y, dy, dx, t);
  else serial::causal_softmax_backward(y, dy, dx, t);
}

void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* y, double* mean, double* inv_std, int64_t rows,
                    int64_t cols, double eps) {
  if (use_par(rows * cols)) {
    par::layernorm_rows(x, gamma, beta, y, mean, inv_std, rows, cols, eps);
  } else {
    serial::layernorm_rows(x, gamma, beta, y, mean, inv_std, rows, cols, eps);
  }
}

void layernorm_backward_input(const double* x, const double* gamma,
                              const double* mean, const double* inv_std,
                              const double* dy, double* dx, int64_t rows,
                              int64_t cols) {
  if (use_par(rows * cols)) {
    par::layernorm_backward_input(x, gamma, mean, inv_std, dy, dx, rows, cols);
  } else {
    serial::layernorm_backward_input(x, gamma, mean, inv_std, dy, dx, rows, cols);
  }
}

void layernorm_backward_params(const double* x, const double* mean,
                               const double* inv_std, const double* dy,
                               double* dgamma, double* dbeta, int64_t rows,
                               int64_t cols) {
  if (use_par(rows * cols)) {
    par::layernorm_backward_params(x, mean, inv_std, dy, dgamma, dbeta, rows, cols);
  } else {
    serial::layernorm_backward_params(x, mean, inv_std, dy, dgamma, dbeta, rows, cols);
  }
}

double cross_entropy_forward(const double* logits, const int* targets,
                             const unsigned char* mask, double* row_lse,
                             int64_t rows, int64_t cols) {
  if (use_par(rows * cols)) {
    return par::cross_entropy_forward(logits, targets, mask, row_lse, rows, cols);
  }
  return serial::cross_entropy_forward(logits, targets, mask, row_lse, rows, cols);
}

void cross_entropy_backward(const double* logits, const int* targets,
                            const unsigned char* mask, const double* row_lse,
                            double upstream, int64_t n_masked, double* dlogits,
                            int64_t rows, int64_t cols) {
  if (use_par(rows * cols)) {
    par::cross_entropy_backward(logits, targets, mask, row_lse, upstream,
                                n_masked, dlogits, rows, cols);
  } else {
    serial::cross_entropy_backward(logits, targets, mask, row_lse, upstream,
                                   n_masked, dlogits, rows, cols);
  }
}

}  // namespace url::numeric::kernels
