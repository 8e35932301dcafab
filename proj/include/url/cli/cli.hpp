#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "url/cli/ablation.hpp"
#include "url/compression/instruction.hpp"
#include "url/corpus/corpus.hpp"
#include "url/model/config.hpp"
#include "url/training/losses.hpp"

namespace url::cli {

// Every file a subcommand reads or writes; empty means "not set" and either
// falls back to a default output name or, for inputs, is a usage error.
struct Paths {
  std::string qa;            // question-answer pairs (jsonl), transform input
  std::string train;         // training examples (jsonl)
  std::string records;       // generic corpus records (jsonl), embed input
  std::string claims;        // claim records (jsonl)
  std::string references;    // reference records (jsonl)
  std::string qrels;         // relevance judgments (TREC text)
  std::string checkpoint;    // model checkpoint to write (train) or read
  std::string init_from;     // checkpoint to resume training from
  std::string index;         // reference index file
  std::string run;           // ranked output (TREC text)
  std::string report;        // report file for the subcommand
  std::string embeddings;    // embedding vectors (text)
  std::string instructions;  // instruction-set file (json array)
  std::string out_dir;       // output directory (synth, ablate)

  nlohmann::json to_json() const;  // non-empty entries only
  static Paths from_json(const nlohmann::json& j);
};

// One versioned document driving every subcommand. Flags override file
// values; the REFLINK_SEED environment variable overrides the seed last.
struct RunConfig {
  uint64_t seed = 42;
  model::ModelConfig model;
  model::LoraConfig lora;
  training::TrainConfig train;
  corpus::SyntheticSpec synthetic;
  AblationConfig ablation;
  int64_t k = 10;                        // link depth
  std::vector<int64_t> ks{10, 20};       // eval cutoffs
  InstructionArm instruction_arm = InstructionArm::kTaskAware;
  compression::InstructionStyle style = compression::InstructionStyle::kFull;
  std::string tag = "reflink";           // run tag for link output
  Paths paths;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

// Parses and executes one invocation (args exclude the program name).
// Returns the process exit code: 0 ok, 1 usage, 2 data error, 3 numeric
// failure. All human output goes to `out`, errors to `err`.
int run(std::span<const std::string> args, std::ostream& out,
        std::ostream& err);

}  // namespace url::cli
