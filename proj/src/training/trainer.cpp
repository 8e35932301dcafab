#include "url/training/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "url/errors.hpp"
#include "url/io/atomic_file.hpp"
#include "url/numeric/optimizer.hpp"
#include "url/rng.hpp"

namespace url::training {

int64_t planned_micro_batches(int64_t n_examples, int64_t epochs,
                              int64_t batch_size) {
  const int64_t per_epoch = (n_examples + batch_size - 1) / batch_size;
  return epochs * per_epoch;
}

int64_t planned_optimizer_steps(int64_t n_examples, int64_t epochs,
                                int64_t batch_size, int64_t grad_accum) {
  return std::max<int64_t>(
      1, planned_micro_batches(n_examples, epochs, batch_size) / grad_accum);
}

TrainReport train(model::TransformerLM& model,
                  std::span<const TrainExample> corpus,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw DataError("training corpus is empty");
  for (const auto& ex : corpus) ex.validate();

  model.set_trainable_set(/*lora_only=*/true);
  auto trainable = model.trainable_parameters(/*lora_only=*/true);
  for (auto* p : trainable) p->zero_grad();

  const auto n = static_cast<int64_t>(corpus.size());
  const int64_t total_micro =
      planned_micro_batches(n, cfg.epochs, cfg.batch_size);
  const int64_t planned =
      planned_optimizer_steps(n, cfg.epochs, cfg.batch_size, cfg.grad_accum);

  numeric::LrSchedule schedule{cfg.learning_rate, cfg.warmup_ratio, planned};
  numeric::AdamW optimizer(trainable, schedule);
  RngStream shuffle_rng(cfg.seed, "train-shuffle");
  RngStream dropout_rng(cfg.seed, "train-dropout");

  TrainReport report;
  report.planned_steps = planned;
  report.micro_batches.reserve(static_cast<size_t>(total_micro));

  const double inv_accum = 1.0 / static_cast<double>(cfg.grad_accum);
  int64_t micro_done = 0;
  double win_l1 = 0.0, win_l2 = 0.0, win_total = 0.0;
  int64_t win_count = 0;

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream epoch_rng = shuffle_rng.child(static_cast<uint64_t>(epoch));
    epoch_rng.shuffle(order);
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      const int64_t stop = std::min(n, start + cfg.batch_size);
      std::vector<TrainExample> batch;
      batch.reserve(static_cast<size_t>(stop - start));
      for (int64_t b = start; b < stop; ++b) {
        batch.push_back(corpus[static_cast<size_t>(order[static_cast<size_t>(b)])]);
      }

      numeric::Tape tape;
      auto loss = total_loss_var(tape, model, batch, cfg, &dropout_rng);
      tape.backward(numeric::scale(loss.total, inv_accum));

      report.micro_batches.push_back(loss.values);
      win_l1 += loss.values.l1;
      win_l2 += loss.values.l2;
      win_total += loss.values.total;
      ++win_count;
      ++micro_done;

      const int64_t steps_done = optimizer.step_count();
      // One step per full window; the final step waits for the very last
      // micro-batch so a trailing partial window is flushed with it.
      const bool flush = (steps_done + 1 == planned)
                             ? (micro_done == total_micro)
                             : (micro_done % cfg.grad_accum == 0);
      if (!flush) continue;

      if (cfg.max_grad_norm > 0.0) {
        numeric::clip_global_norm(trainable, cfg.max_grad_norm);
      }
      optimizer.step();
      const double inv_win = 1.0 / static_cast<double>(win_count);
      report.steps.push_back(StepRecord{optimizer.step_count(),
                                        win_l1 * inv_win, win_l2 * inv_win,
                                        win_total * inv_win,
                                        optimizer.last_lr()});
      win_l1 = win_l2 = win_total = 0.0;
      win_count = 0;
    }
  }
  return report;
}

std::string format_train_report(const TrainReport& report,
                                const TrainConfig& cfg) {
  std::string out = "# multi-view training report\n";
  const auto j = cfg.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    out += "# " + it.key() + " = " + it.value().dump() + "\n";
  }
  out += "# planned_steps = " + std::to_string(report.planned_steps) + "\n";
  out += "step, l1, l2, total, learning rate\n";
  char buf[160];
  for (const auto& s : report.steps) {
    std::snprintf(buf, sizeof(buf), "%lld, %.17g, %.17g, %.17g, %.17g\n",
                  static_cast<long long>(s.step), s.l1, s.l2, s.total, s.lr);
    out += buf;
  }
  return out;
}

void write_train_report(const std::string& path, const TrainReport& report,
                        const TrainConfig& cfg) {
  io::write_file_atomic(path, format_train_report(report, cfg));
}

}  // namespace url::training
