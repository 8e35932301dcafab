#pragma once

#include <string>
#include <utility>

#include "url/numeric/tensor.hpp"

namespace url::numeric {

// A named, trainable weight. The gradient buffer always mirrors the value's
// shape and starts at zero; backward passes *accumulate* into it, so two
// backward calls without a zero_grad() in between double the gradient.
// Non-trainable parameters still participate in forward passes but never
// receive gradient.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool trainable = true)
      : name_(std::move(name)),
        grad_(Tensor::zeros(value.shape())),
        value_(std::move(value)),
        trainable_(trainable) {}

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor& grad() { return grad_; }
  const Tensor& grad() const { return grad_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool trainable) { trainable_ = trainable; }
  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor grad_;
  Tensor value_;
  bool trainable_;
};

}  // namespace url::numeric
