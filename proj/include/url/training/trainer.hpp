#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "url/model/transformer.hpp"
#include "url/training/losses.hpp"

namespace url::training {

struct StepRecord {
  int64_t step = 0;  // 1-based optimizer step number
  double l1 = 0.0;   // mean over the step's accumulation window
  double l2 = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<LossBreakdown> micro_batches;  // every micro-batch, in order
  int64_t planned_steps = 0;
};

// Micro-batches per full run: epochs * ceil(n / batch).
int64_t planned_micro_batches(int64_t n_examples, int64_t epochs,
                              int64_t batch_size);

// Optimizer steps per run: one per full accumulation window, with any
// trailing partial window flushed into the final step (never dropped, never
// an extra step). 1000 examples x 2 epochs at batch 2, accumulation 16 gives
// exactly 62.
int64_t planned_optimizer_steps(int64_t n_examples, int64_t epochs,
                                int64_t batch_size, int64_t grad_accum);

// LoRA-only multi-view training: shuffles per epoch with a seeded stream,
// accumulates gradients over grad_accum micro-batches, clips, and steps AdamW
// under the warmup/decay schedule. Only the adapter matrices and the prefix
// projection move. Deterministic for a fixed config.
TrainReport train(model::TransformerLM& model,
                  std::span<const TrainExample> corpus,
                  const TrainConfig& cfg);

// One line per optimizer step after '#' config-echo header lines; fixed
// formatting so identical runs produce identical bytes.
void write_train_report(const std::string& path, const TrainReport& report,
                        const TrainConfig& cfg);
std::string format_train_report(const TrainReport& report,
                                const TrainConfig& cfg);

}  // namespace url::training
