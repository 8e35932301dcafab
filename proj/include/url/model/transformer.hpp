#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "url/model/config.hpp"
#include "url/numeric/graph.hpp"
#include "url/numeric/parameter.hpp"
#include "url/rng.hpp"

namespace url::model {

struct ForwardOptions {
  bool use_adapters = true;   // false reproduces the bare base model
  bool train = false;         // enables LoRA dropout (needs dropout_rng)
  bool with_logits = true;    // skip the vocab projection when only H is used
  RngStream* dropout_rng = nullptr;
};

struct ForwardResult {
  numeric::Var hidden;  // [P x d_model] final-layer-norm output
  numeric::Var logits;  // [P x vocab] when requested, invalid otherwise
};

// Decoder-only pre-LN transformer over the byte vocabulary, with LoRA
// adapters on every attention block's query and value projections, learned
// positional embeddings, tied input/output embeddings, and a trainable
// prefix projection that injects an embedding vector into position 0.
//
// Parameters live in a fixed registry order (construction order), which
// checkpoints and fingerprints rely on. Forward passes only read parameters;
// concurrent inference on separate tapes is safe as long as nobody trains.
class TransformerLM {
 public:
  TransformerLM(ModelConfig cfg, LoraConfig lora, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const LoraConfig& lora_config() const { return lora_; }

  // Builds the computation graph for `tokens` (and optional [1 x d_model]
  // prefix vector occupying position 0) on `tape`. Sequence length including
  // the prefix slot must fit max_seq_len.
  ForwardResult forward(numeric::Tape& tape, std::span<const int> tokens,
                        std::optional<numeric::Var> prefix_slot = std::nullopt,
                        const ForwardOptions& opts = {});

  // Registry order (stable): all parameters / the trainable selection.
  // lora_only=true selects the LoRA A/B matrices plus the prefix projection.
  std::vector<numeric::Parameter*> parameters();
  std::vector<numeric::Parameter*> trainable_parameters(bool lora_only);

  // Marks exactly the lora_only selection trainable (or everything when
  // lora_only=false); backward passes then skip the frozen base weights.
  void set_trainable_set(bool lora_only);

  numeric::Parameter& prefix_projection() { return *prefix_proj_; }
  numeric::Parameter& param(const std::string& name);

  // FNV-1a over config + every parameter byte in registry order; changes
  // whenever any weight changes. Used to stamp index files.
  uint64_t fingerprint() const;

 private:
  struct LayerParams {
    numeric::Parameter* ln1_gamma;
    numeric::Parameter* ln1_beta;
    numeric::Parameter* wq;
    numeric::Parameter* wk;
    numeric::Parameter* wv;
    numeric::Parameter* wo;
    numeric::Parameter* lora_q_a;
    numeric::Parameter* lora_q_b;
    numeric::Parameter* lora_v_a;
    numeric::Parameter* lora_v_b;
    numeric::Parameter* ln2_gamma;
    numeric::Parameter* ln2_beta;
    numeric::Parameter* ffn_w1;
    numeric::Parameter* ffn_w2;
  };

  numeric::Parameter* add_param(const std::string& name, numeric::Tensor value);
  numeric::Var lora_linear(numeric::Tape& tape, numeric::Var x,
                           numeric::Parameter& w, numeric::Parameter& a,
                           numeric::Parameter& b, const ForwardOptions& opts);

  ModelConfig cfg_;
  LoraConfig lora_;
  std::vector<std::unique_ptr<numeric::Parameter>> params_;
  numeric::Parameter* wte_ = nullptr;
  numeric::Parameter* wpe_ = nullptr;
  std::vector<LayerParams> layers_;
  numeric::Parameter* final_gamma_ = nullptr;
  numeric::Parameter* final_beta_ = nullptr;
  numeric::Parameter* prefix_proj_ = nullptr;
};

// Binary checkpoint: config JSON + named parameter arrays in registry order.
// load(save(m)) reproduces every byte; save(load(path)) equals the original
// file bytes.
void save_checkpoint(TransformerLM& model, const std::string& path);
TransformerLM load_checkpoint(const std::string& path);

}  // namespace url::model
