#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "url/numeric/parameter.hpp"

namespace url::numeric {

// Linear warmup to `base`, then linear decay toward zero over the remaining
// steps. `t` is the 0-indexed optimizer step about to be applied:
//   warmup:  base * (t + 1) / warmup_steps          for t <  warmup_steps
//   decay:   base * (total - t) / (total - warmup)  for t >= warmup_steps
struct LrSchedule {
  double base = 1e-4;
  double warmup_ratio = 0.08;
  int64_t total_steps = 1;

  int64_t warmup_steps() const;
  double lr_at(int64_t t) const;
};

enum class StepStatus {
  kApplied,
  kSkippedAllZero,  // every gradient was exactly zero: warned no-op
};

// Scales all trainable gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm. Non-finite gradients raise NumericError rather
// than polluting the weights.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

// AdamW with decoupled weight decay. Moment buffers are allocated per
// parameter at construction; step() consumes the accumulated gradients and
// zeroes them afterwards.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, LrSchedule schedule,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 0.01);

  // Applies one update using lr_at(step_count). If every gradient is exactly
  // zero the parameters (and moments) are left untouched, but the step still
  // counts against the schedule so callers notice the wasted step.
  StepStatus step();

  int64_t step_count() const { return step_count_; }
  double last_lr() const { return last_lr_; }
  const LrSchedule& schedule() const { return schedule_; }
  std::span<Parameter* const> params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  LrSchedule schedule_;
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t step_count_ = 0;
  double last_lr_ = 0.0;
};

}  // namespace url::numeric
