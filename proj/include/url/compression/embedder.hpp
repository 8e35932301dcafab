#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "url/compression/instruction.hpp"
#include "url/model/transformer.hpp"
#include "url/numeric/graph.hpp"

namespace url::compression {

// The fixed prompt tail whose hidden states get pooled into the embedding.
struct SuffixSpec {
  std::string text = "The embedding is:";

  void validate() const;  // must tokenize to at least one position
};

// One tokenized prompt: BOS, sentence bytes, instruction bytes, suffix bytes,
// EOS. The suffix span is recorded so pooling reads exactly those positions.
struct AssembledPrompt {
  std::string id;
  Role role = Role::kClaim;
  std::string domain;
  std::vector<int> tokens;
  int64_t suffix_start = 0;  // [suffix_start, suffix_end) indexes tokens
  int64_t suffix_end = 0;    // == tokens.size() - 1 (the EOS slot)
};

// Unit-normalized task-instructed representation of one text.
struct Embedding {
  std::string id;
  Role role = Role::kClaim;
  std::string domain;
  std::vector<double> vec;  // length d_model, L2 norm 1 within 1e-9
};

// Tokenizes and lays out one prompt within `max_len` total positions. The
// sentence tail is truncated first; the instruction and suffix always survive
// intact. DataError when instruction+suffix alone exceed the budget.
AssembledPrompt assemble(const std::string& id, const std::string& sentence,
                         const RenderedInstruction& instruction,
                         const SuffixSpec& suffix, int64_t max_len);

// Graph-building embed: pooled (per model config) suffix hidden states,
// L2-normalized, as a [1 x d_model] node. Used directly by training.
numeric::Var embed_var(numeric::Tape& tape, model::TransformerLM& model,
                       const AssembledPrompt& prompt,
                       const model::ForwardOptions& opts = {});

// Inference embed on a private tape.
Embedding embed(model::TransformerLM& model, const AssembledPrompt& prompt);

// Per-item embed; an item failure is rethrown with the item index and id.
std::vector<Embedding> embed_batch(model::TransformerLM& model,
                                   std::span<const AssembledPrompt> prompts);

// One record per line: id, role, domain, then the vector in decimal with
// enough digits that reading reproduces every double exactly.
void write_embeddings(const std::string& path,
                      std::span<const Embedding> embeddings);
std::vector<Embedding> read_embeddings(const std::string& path);

}  // namespace url::compression
