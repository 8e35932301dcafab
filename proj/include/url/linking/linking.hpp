#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "url/compression/embedder.hpp"
#include "url/compression/instruction.hpp"
#include "url/corpus/corpus.hpp"
#include "url/eval/trec.hpp"
#include "url/model/transformer.hpp"
#include "url/numeric/tensor.hpp"

namespace url::linking {

// Immutable stack of reference embeddings plus the identity of the model
// that produced them. Queries are exact brute-force cosine scans; at this
// scale nothing faster is needed.
struct ReferenceIndex {
  std::vector<std::string> ids;    // row i of `embeddings` belongs to ids[i]
  numeric::Tensor embeddings;      // [n x d], every row unit-norm
  std::string domain;              // single domain label, or "mixed"
  uint64_t fingerprint = 0;        // TransformerLM::fingerprint() at build

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
  void validate() const;  // unique ids, matching counts, unit rows (1e-9)
};

struct LinkResult {
  std::string reference_id;
  double score = 0.0;  // cosine, in [-1, 1]
  int64_t rank = 0;    // 1-based, consecutive
};

// Embeds every reference under its domain's reference-role instruction and
// stacks the rows in input order. Duplicate ids and non-reference records
// are rejected.
ReferenceIndex build_index(
    model::TransformerLM& model,
    std::span<const corpus::CorpusRecord> references,
    std::span<const compression::DomainInstructionSet> instructions,
    const compression::SuffixSpec& suffix = {});

// Same, with instructions already rendered (one per domain). An entry whose
// text is empty embeds the bare sentence; this is what the
// instruction-ablation arms pass.
ReferenceIndex build_index(
    model::TransformerLM& model,
    std::span<const corpus::CorpusRecord> references,
    std::span<const compression::RenderedInstruction> rendered,
    const compression::SuffixSpec& suffix = {});

// Top-k by cosine against a unit-norm claim embedding; ties broken by
// ascending reference id. An empty index yields an empty result.
std::vector<LinkResult> query(const ReferenceIndex& index,
                              const compression::Embedding& claim, int64_t k);

// Embeds each claim under its domain's claim-role instruction, queries, and
// collects everything into a TREC-style run. Failures are rethrown with the
// claim id attached.
eval::Run batch_link(
    model::TransformerLM& model, const ReferenceIndex& index,
    std::span<const corpus::CorpusRecord> claims,
    std::span<const compression::DomainInstructionSet> instructions,
    int64_t k, const compression::SuffixSpec& suffix = {});

eval::Run batch_link(
    model::TransformerLM& model, const ReferenceIndex& index,
    std::span<const corpus::CorpusRecord> claims,
    std::span<const compression::RenderedInstruction> rendered, int64_t k,
    const compression::SuffixSpec& suffix = {});

// Binary index file: header (magic, version, n, d, fingerprint, domain),
// the ids, then the raw row-major matrix. Byte-exact round-trip.
void save_index(const ReferenceIndex& index, const std::string& path);
ReferenceIndex load_index(const std::string& path);

}  // namespace url::linking
