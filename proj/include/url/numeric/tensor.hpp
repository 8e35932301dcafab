#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace url::numeric {

// Dense row-major tensor of 64-bit doubles. Everything in the pipeline is
// double on purpose: at desk scale the extra bytes are irrelevant, and wide
// accumulators keep gradient checks and cross-run determinism clean.
//
// Invariants (checked at construction / mutation):
//   - every dimension is positive; a default-constructed tensor is empty
//   - values.size() == product(shape) at all times
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  // [1 x n] row vector; convenient for embeddings and logit rows.
  static Tensor row(std::vector<double> values);

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(values_.size()); }
  bool empty() const { return values_.empty(); }

  // 2-D accessors; rows()/cols() also accept rank-1 as a single row.
  int64_t rows() const;
  int64_t cols() const;
  double& at(int64_t r, int64_t c) { return values_[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return values_[static_cast<size_t>(r * cols() + c)]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double item() const;  // single-element tensors only

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);

  // "[2 x 3]" style, for error messages.
  std::string shape_str() const;
  static std::string shape_str(const std::vector<int64_t>& shape);

 private:
  std::vector<int64_t> shape_;
  std::vector<double> values_;
};

// Throws ShapeError mentioning `who` unless the two shapes match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* who);

}  // namespace url::numeric
