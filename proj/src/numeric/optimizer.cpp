#include "url/numeric/optimizer.hpp"

#include <cmath>

#include "url/errors.hpp"

namespace url::numeric {

int64_t LrSchedule::warmup_steps() const {
  if (total_steps <= 0) throw NumericError("lr schedule: total_steps must be positive");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0) {
    throw NumericError("lr schedule: warmup_ratio must be in [0, 1]");
  }
  return static_cast<int64_t>(
      std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

double LrSchedule::lr_at(int64_t t) const {
  int64_t warmup = warmup_steps();
  if (t < warmup) {
    return base * static_cast<double>(t + 1) / static_cast<double>(warmup);
  }
  int64_t decay_span = total_steps - warmup;
  if (decay_span <= 0) return base;
  double remaining = static_cast<double>(total_steps - t);
  if (remaining < 0.0) remaining = 0.0;
  return base * remaining / static_cast<double>(decay_span);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->trainable()) continue;
    for (double g : p->grad().values()) sq += g * g;
  }
  if (!std::isfinite(sq)) {
    throw NumericError("gradient clip: non-finite gradient norm");
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double factor = max_norm / norm;
    for (Parameter* p : params) {
      if (!p->trainable()) continue;
      for (double& g : p->grad().values()) g *= factor;
    }
  }
  return norm;
}

AdamW::AdamW(std::vector<Parameter*> params, LrSchedule schedule, double beta1,
             double beta2, double eps, double weight_decay)
    : params_(std::move(params)),
      schedule_(schedule),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value().shape()));
    v_.push_back(Tensor::zeros(p->value().shape()));
  }
}

StepStatus AdamW::step() {
  bool any_grad = false;
  for (const Parameter* p : params_) {
    if (!p->trainable()) continue;
    for (double g : p->grad().values()) {
      if (g != 0.0) {
        any_grad = true;
        break;
      }
    }
    if (any_grad) break;
  }

  double lr = schedule_.lr_at(step_count_);
  last_lr_ = lr;
  ++step_count_;
  if (!any_grad) return StepStatus::kSkippedAllZero;

  // Bias correction uses the 1-indexed count of applied-or-skipped steps;
  // matching the schedule index keeps warmup and correction aligned.
  double t = static_cast<double>(step_count_);
  double bc1 = 1.0 - std::pow(beta1_, t);
  double bc2 = 1.0 - std::pow(beta2_, t);

  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    if (!p->trainable()) continue;
    auto& w = p->value().values();
    auto& g = p->grad().values();
    auto& m = m_[i].values();
    auto& v = v_[i].values();
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      double m_hat = m[j] / bc1;
      double v_hat = v[j] / bc2;
      // Decoupled decay: applied to the weight directly, not through the
      // moment estimates.
      w[j] -= lr * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * w[j]);
    }
    if (!p->value().all_finite()) {
      throw NumericError("optimizer step produced non-finite weights in '" +
                         p->name() + "'");
    }
    p->zero_grad();
  }
  return StepStatus::kApplied;
}

}  // namespace url::numeric
