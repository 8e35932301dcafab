#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "url/compression/embedder.hpp"
#include "url/model/transformer.hpp"
#include "url/numeric/graph.hpp"

namespace url::training {

// One linked pair plus everything needed to embed and to generate both ways.
// Instructions and generation prompts arrive fully rendered; the trainer does
// not re-derive wording.
struct TrainExample {
  std::string id;
  std::string domain;
  std::string claim;
  std::string positive;                // the linked reference text
  std::vector<std::string> negatives;  // irrelevant reference texts
  std::string claim_instruction;       // rendered claim-side instruction
  std::string reference_instruction;   // rendered reference-side instruction
  std::string c2r_prompt;  // claim embedding -> reference generation prompt
  std::string r2c_prompt;  // reference embedding -> claim generation prompt

  void validate() const;
  nlohmann::json to_json() const;
  static TrainExample from_json(const nlohmann::json& j);
};

struct TrainConfig {
  double alpha = 0.2;          // weight of the generative view
  double tau = 0.8;            // contrastive temperature
  double learning_rate = 1e-4;
  int64_t epochs = 2;
  int64_t batch_size = 2;
  int64_t grad_accum = 16;
  double warmup_ratio = 0.08;
  int64_t negatives_per_example = 3;  // cap on stored negatives actually used
  bool in_batch_negatives = true;
  double max_grad_norm = 1.0;  // 0 disables clipping
  uint64_t seed = 42;
  std::string suffix = "The embedding is:";  // pooled prompt tail

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// The two views and their blend for one batch.
struct LossBreakdown {
  double l1 = 0.0;     // generative, bidirectional mean
  double l2 = 0.0;     // contrastive, bidirectional mean
  double total = 0.0;  // alpha*l1 + (1-alpha)*l2
};

LossBreakdown make_breakdown(double l1, double l2, double alpha);

// Teacher-forced reconstruction: the source embedding is projected into the
// prefix slot, followed by the generation prompt; cross-entropy covers the
// target tokens plus the closing EOS only. Overlong targets lose their tail;
// an empty target is an error.
numeric::Var generative_loss_var(numeric::Tape& tape,
                                 model::TransformerLM& model,
                                 numeric::Var source_embedding,
                                 const std::string& gen_prompt,
                                 const std::string& target,
                                 const model::ForwardOptions& opts = {});

double generative_loss(model::TransformerLM& model,
                       const compression::Embedding& source,
                       const std::string& gen_prompt,
                       const std::string& target);

// InfoNCE over cosine similarities at temperature tau: the positive against
// the given negatives. With no negatives the loss is exactly zero.
numeric::Var contrastive_loss_var(numeric::Tape& tape, numeric::Var anchor,
                                  numeric::Var positive,
                                  std::span<const numeric::Var> negatives,
                                  double tau);

double contrastive_loss(const compression::Embedding& anchor,
                        const compression::Embedding& positive,
                        std::span<const compression::Embedding> negatives,
                        double tau);

struct BatchLossVars {
  numeric::Var total;
  numeric::Var l1;
  numeric::Var l2;
  LossBreakdown values;
};

// Builds the full multi-view loss graph for one batch: fresh embeddings for
// every side, both generation directions, both contrastive anchors. Pass a
// dropout rng to run in training mode (adapter dropout active).
BatchLossVars total_loss_var(numeric::Tape& tape, model::TransformerLM& model,
                             std::span<const TrainExample> batch,
                             const TrainConfig& cfg,
                             RngStream* dropout_rng = nullptr);

LossBreakdown total_loss(model::TransformerLM& model,
                         std::span<const TrainExample> batch,
                         const TrainConfig& cfg);

}  // namespace url::training
