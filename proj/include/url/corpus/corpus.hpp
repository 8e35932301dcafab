#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "url/compression/instruction.hpp"
#include "url/errors.hpp"
#include "url/eval/trec.hpp"
#include "url/io/atomic_file.hpp"
#include "url/training/losses.hpp"

namespace url::corpus {

// One question-answer pair; the transformation turns the question into a
// claim and the answer into its linked reference.
struct QAPair {
  std::string question;
  std::string answer;
  std::string domain;

  void validate() const;
  nlohmann::json to_json() const;
  static QAPair from_json(const nlohmann::json& j);
};

// One evaluation-corpus text: either a claim to link from or a reference to
// link to.
struct CorpusRecord {
  std::string id;
  std::string text;
  compression::Role role = compression::Role::kClaim;
  std::string domain;

  void validate() const;
  nlohmann::json to_json() const;
  static CorpusRecord from_json(const nlohmann::json& j);
};

// Teacher-forcing prompts asking the model to reconstruct the counterpart
// text from a compressed embedding, instantiated per domain.
std::string generation_prompt_c2r(const std::string& domain);
std::string generation_prompt_r2c(const std::string& domain);

// QA -> linked-pair transformation: claim = question, positive = answer,
// negatives drawn uniformly (seeded, without replacement) from other pairs'
// answers, never the example's own answer text. Every pair's domain must
// appear in `instructions`.
std::vector<training::TrainExample> transform_qa(
    std::span<const QAPair> pairs,
    std::span<const compression::DomainInstructionSet> instructions,
    int64_t n_neg, uint64_t seed);

// Recipe for the seeded synthetic multi-domain corpus. Every domain applies
// its own bijective keyed token substitution to turn a claim into its linked
// reference, so the same claim text links to a different reference in every
// domain and the instruction is the only way to tell the domains apart.
struct SyntheticSpec {
  int64_t n_domains = 4;
  int64_t train_per_domain = 12;
  int64_t eval_per_domain = 4;
  int64_t tokens_per_text = 3;
  int64_t vocab_size = 64;
  int64_t negatives_per_example = 3;
  compression::InstructionStyle style = compression::InstructionStyle::kCompact;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

struct SyntheticCorpus {
  std::vector<training::TrainExample> train;
  std::vector<CorpusRecord> eval_claims;
  std::vector<CorpusRecord> eval_references;
  eval::Qrels qrels;
};

// The instruction sets the synthetic corpus is rendered with: the builtin
// domains (restyled per the spec) plus generated ones beyond the builtins.
std::vector<compression::DomainInstructionSet> synthetic_instruction_sets(
    const SyntheticSpec& spec);

// The per-domain substitution rules, token -> token, in domain order. Exposed
// so tests can verify every linked pair against the rule directly.
std::vector<std::map<std::string, std::string>> synthetic_rules(
    const SyntheticSpec& spec, uint64_t seed);

// The first n distinct pseudo-words of the synthetic vocabulary.
std::vector<std::string> synthetic_vocabulary(int64_t n);

// Deterministic corpus generation: disjoint train/eval items, every eval
// claim linked to exactly one reference (rel=1), all claim and reference
// texts globally distinct.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

// JSONL: one record per line, nlohmann-escaped, so embedded newlines survive.
// Record must provide to_json()/from_json().
template <typename Record>
std::vector<Record> read_jsonl(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<Record> out;
  size_t start = 0;
  size_t line_no = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(Record::from_json(nlohmann::json::parse(line)));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename Record>
void write_jsonl(const std::string& path, std::span<const Record> records) {
  std::string text;
  for (const Record& r : records) {
    text += r.to_json().dump();
    text += '\n';
  }
  io::write_file_atomic(path, text);
}

}  // namespace url::corpus
