#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "url/compression/instruction.hpp"
#include "url/corpus/corpus.hpp"
#include "url/eval/trec.hpp"
#include "url/model/config.hpp"
#include "url/training/losses.hpp"

namespace url::cli {

// Which text the embedding-instruction channel carries: the per-domain task
// wording, one generic wording shared by every domain, or nothing at all.
enum class InstructionArm { kTaskAware, kFixed, kNone };

std::string instruction_arm_name(InstructionArm arm);
InstructionArm instruction_arm_from_name(const std::string& name);

// Everything one comparison run needs. The defaults are sized so the whole
// five-arm matrix finishes in minutes on a single core while still training
// far enough for the arms to separate.
struct AblationConfig {
  corpus::SyntheticSpec synthetic;
  model::ModelConfig model;
  model::LoraConfig lora;
  training::TrainConfig train;
  int64_t k = 10;
  uint64_t seed = 42;

  AblationConfig();

  void validate() const;
  nlohmann::json to_json() const;
  static AblationConfig from_json(const nlohmann::json& j);
};

struct ArmResult {
  std::string name;
  InstructionArm instructions = InstructionArm::kTaskAware;
  bool trained = true;
  double alpha = 0.0;            // generative-view weight actually used
  int64_t optimizer_steps = 0;   // 0 for the untrained arm
  double l1_contribution = 0.0;  // alpha * mean per-step l1; exact 0 if alpha=0
  double ndcg = 0.0;             // mean NDCG@k over evaluation claims
  double map = 0.0;              // mean MAP@k
  double seconds = 0.0;          // wall time; reporting only, never persisted
  eval::Run run;                 // ranked output, for artifact dumps

  nlohmann::json to_json() const;  // deterministic fields only
};

struct AblationReport {
  AblationConfig config;
  std::vector<ArmResult> arms;
  double total_seconds = 0.0;

  const ArmResult& arm(const std::string& name) const;  // DataError if absent
  nlohmann::json to_json() const;  // deterministic: timings excluded
  std::string to_text(bool with_timing) const;
};

// Rewrites the instruction fields of training examples for one arm. The
// generation prompts are untouched: they belong to the reconstruction view,
// not to the embedding input.
std::vector<training::TrainExample> apply_instruction_arm(
    std::vector<training::TrainExample> examples, InstructionArm arm);

// The rendered instruction each domain embeds with under one arm.
std::vector<compression::RenderedInstruction> arm_instructions(
    InstructionArm arm,
    std::span<const compression::DomainInstructionSet> sets,
    compression::Role role);

// Runs all five arms — full, no-instruction, fixed-instruction, untrained,
// contrastive-only — over one seeded synthetic corpus with a shared model
// initialization, and scores each arm's linking output against the corpus
// qrels.
AblationReport run_ablation(const AblationConfig& cfg);

}  // namespace url::cli
