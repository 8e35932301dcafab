#include "url/cli/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <string>
#include <utility>

#include "url/errors.hpp"
#include "url/linking/linking.hpp"
#include "url/model/transformer.hpp"
#include "url/training/trainer.hpp"

namespace url::cli {

using compression::DomainInstructionSet;
using compression::RenderedInstruction;
using compression::Role;
using compression::SuffixSpec;
using training::TrainExample;

std::string instruction_arm_name(InstructionArm arm) {
  switch (arm) {
    case InstructionArm::kTaskAware: return "task";
    case InstructionArm::kFixed: return "fixed";
    case InstructionArm::kNone: return "none";
  }
  throw DataError("unknown instruction arm");
}

InstructionArm instruction_arm_from_name(const std::string& name) {
  if (name == "task") return InstructionArm::kTaskAware;
  if (name == "fixed") return InstructionArm::kFixed;
  if (name == "none") return InstructionArm::kNone;
  throw DataError("unknown instruction arm '" + name +
                  "' (expected task, fixed, or none)");
}

AblationConfig::AblationConfig() {
  // Desk-scale dims: small enough that five arms finish in minutes on one
  // core, large enough that training separates them decisively.
  //
  // The corpus is sized so training covers the token inventory: 24 texts of
  // 3 tokens per domain over a 32-token vocabulary leaves ~10% of eval
  // tokens unseen; at the 64-token default the unseen share exceeds half
  // and caps every trained arm alike.
  synthetic.vocab_size = 32;
  synthetic.train_per_domain = 24;
  synthetic.eval_per_domain = 8;
  model.d_model = 32;
  model.n_layers = 1;
  model.n_heads = 4;
  model.d_ff = 64;
  model.max_seq_len = 192;
  lora.rank = 16;
  train.learning_rate = 5e-3;
  train.epochs = 10;
  train.batch_size = 2;
  train.grad_accum = 1;
}

void AblationConfig::validate() const {
  synthetic.validate();
  model.validate();
  lora.validate();
  train.validate();
  if (k < 1) throw DataError("ablation needs k >= 1, got " + std::to_string(k));
}

nlohmann::json AblationConfig::to_json() const {
  return nlohmann::json{{"version", 1},
                        {"seed", seed},
                        {"k", k},
                        {"synthetic", synthetic.to_json()},
                        {"model", model.to_json()},
                        {"lora", lora.to_json()},
                        {"train", train.to_json()}};
}

AblationConfig AblationConfig::from_json(const nlohmann::json& j) {
  AblationConfig cfg;
  std::set<std::string> known{"version", "seed",  "k",    "synthetic",
                              "model",   "lora", "train"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw DataError("unknown ablation config key '" + key + "'");
    }
  }
  try {
    if (j.contains("version") && j.at("version").get<int64_t>() != 1) {
      throw DataError("unsupported ablation config version");
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("k")) cfg.k = j.at("k").get<int64_t>();
    if (j.contains("synthetic")) {
      cfg.synthetic = corpus::SyntheticSpec::from_json(j.at("synthetic"));
    }
    if (j.contains("model")) {
      cfg.model = model::ModelConfig::from_json(j.at("model"));
    }
    if (j.contains("lora")) {
      cfg.lora = model::LoraConfig::from_json(j.at("lora"));
    }
    if (j.contains("train")) {
      cfg.train = training::TrainConfig::from_json(j.at("train"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad ablation config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json ArmResult::to_json() const {
  return nlohmann::json{{"name", name},
                        {"instructions", instruction_arm_name(instructions)},
                        {"trained", trained},
                        {"alpha", alpha},
                        {"optimizer_steps", optimizer_steps},
                        {"l1_contribution", l1_contribution},
                        {"ndcg", ndcg},
                        {"map", map}};
}

const ArmResult& AblationReport::arm(const std::string& name) const {
  for (const ArmResult& a : arms) {
    if (a.name == name) return a;
  }
  throw DataError("no ablation arm named '" + name + "'");
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json arm_list = nlohmann::json::array();
  for (const ArmResult& a : arms) arm_list.push_back(a.to_json());
  return nlohmann::json{{"version", 1},
                        {"config", config.to_json()},
                        {"arms", arm_list}};
}

std::string AblationReport::to_text(bool with_timing) const {
  const std::string kc = std::to_string(config.k);
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %-6s %6s %6s %9s %9s %9s\n",
                "arm", "instr", "steps", "alpha", "l1-part",
                ("NDCG@" + kc).c_str(), ("MAP@" + kc).c_str());
  out += line;
  out += std::string(69, '-') + "\n";
  for (const ArmResult& a : arms) {
    std::snprintf(line, sizeof(line),
                  "%-18s %-6s %6lld %6.2f %9.5f %9.5f %9.5f\n", a.name.c_str(),
                  instruction_arm_name(a.instructions).c_str(),
                  static_cast<long long>(a.optimizer_steps), a.alpha,
                  a.l1_contribution, a.ndcg, a.map);
    out += line;
  }
  if (with_timing) {
    out += "\n";
    for (const ArmResult& a : arms) {
      std::snprintf(line, sizeof(line), "%-18s %8.1fs\n", a.name.c_str(),
                    a.seconds);
      out += line;
    }
    std::snprintf(line, sizeof(line), "%-18s %8.1fs\n", "total",
                  total_seconds);
    out += line;
  }
  return out;
}

std::vector<TrainExample> apply_instruction_arm(
    std::vector<TrainExample> examples, InstructionArm arm) {
  if (arm == InstructionArm::kTaskAware) return examples;
  std::string claim_text, ref_text;
  if (arm == InstructionArm::kFixed) {
    const DomainInstructionSet generic = compression::generic_domain();
    claim_text = generic.rendered(Role::kClaim).text;
    ref_text = generic.rendered(Role::kReference).text;
  }
  for (TrainExample& ex : examples) {
    ex.claim_instruction = claim_text;
    ex.reference_instruction = ref_text;
  }
  return examples;
}

std::vector<RenderedInstruction> arm_instructions(
    InstructionArm arm, std::span<const DomainInstructionSet> sets,
    Role role) {
  std::vector<RenderedInstruction> out;
  out.reserve(sets.size());
  const DomainInstructionSet generic = compression::generic_domain();
  for (const DomainInstructionSet& s : sets) {
    switch (arm) {
      case InstructionArm::kTaskAware:
        out.push_back(s.rendered(role));
        break;
      case InstructionArm::kFixed:
        out.push_back(
            RenderedInstruction{role, s.domain, generic.rendered(role).text});
        break;
      case InstructionArm::kNone:
        out.push_back(RenderedInstruction{role, s.domain, ""});
        break;
    }
  }
  return out;
}

namespace {

struct ArmSpec {
  const char* name;
  bool trained;
  bool force_contrastive_only;  // drops the generative view (alpha = 0)
  InstructionArm instructions;
};

}  // namespace

AblationReport run_ablation(const AblationConfig& cfg) {
  cfg.validate();
  const corpus::SyntheticCorpus data =
      corpus::generate_synthetic(cfg.synthetic, cfg.seed);
  const auto sets = corpus::synthetic_instruction_sets(cfg.synthetic);
  const SuffixSpec suffix{cfg.train.suffix};

  constexpr ArmSpec kArms[] = {
      {"full", true, false, InstructionArm::kTaskAware},
      {"no-instruction", true, false, InstructionArm::kNone},
      {"fixed-instruction", true, false, InstructionArm::kFixed},
      {"untrained", false, false, InstructionArm::kTaskAware},
      {"contrastive-only", true, true, InstructionArm::kTaskAware},
  };

  AblationReport report;
  report.config = cfg;
  for (const ArmSpec& spec : kArms) {
    const auto t0 = std::chrono::steady_clock::now();

    training::TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    if (spec.force_contrastive_only) tcfg.alpha = 0.0;

    ArmResult arm;
    arm.name = spec.name;
    arm.instructions = spec.instructions;
    arm.trained = spec.trained;
    arm.alpha = tcfg.alpha;

    // Every arm starts from the same seeded initialization; only the
    // training recipe and the instruction channel differ.
    model::TransformerLM lm(cfg.model, cfg.lora, cfg.seed);
    if (spec.trained) {
      const auto examples =
          apply_instruction_arm(data.train, spec.instructions);
      const training::TrainReport trained = training::train(lm, examples, tcfg);
      arm.optimizer_steps = static_cast<int64_t>(trained.steps.size());
      double l1_sum = 0.0;
      for (const auto& s : trained.steps) l1_sum += s.l1;
      arm.l1_contribution =
          trained.steps.empty()
              ? 0.0
              : tcfg.alpha * (l1_sum / static_cast<double>(
                                           trained.steps.size()));
    }

    const linking::ReferenceIndex index = linking::build_index(
        lm, data.eval_references,
        arm_instructions(spec.instructions, sets, Role::kReference), suffix);
    arm.run = linking::batch_link(
        lm, index, data.eval_claims,
        arm_instructions(spec.instructions, sets, Role::kClaim), cfg.k,
        suffix);
    arm.ndcg = eval::ndcg_at_k(arm.run, data.qrels, cfg.k).mean;
    arm.map = eval::map_at_k(arm.run, data.qrels, cfg.k).mean;

    arm.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    report.total_seconds += arm.seconds;
    report.arms.push_back(std::move(arm));
  }
  return report;
}

}  // namespace url::cli
