#include "url/compression/embedder.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "url/errors.hpp"
#include "url/io/atomic_file.hpp"
#include "url/model/tokenizer.hpp"

namespace url::compression {

void SuffixSpec::validate() const {
  if (model::encode_bytes(text).empty()) {
    throw DataError("suffix must tokenize to at least one position");
  }
}

AssembledPrompt assemble(const std::string& id, const std::string& sentence,
                         const RenderedInstruction& instruction,
                         const SuffixSpec& suffix, int64_t max_len) {
  suffix.validate();
  // The instruction block carries its separators: a newline so "Above text"
  // refers to the sentence, and a trailing space gluing it to the suffix.
  const std::string instruction_block =
      "\n" + (instruction.text.empty() ? std::string()
                                       : instruction.text + " ");
  const auto instr_ids = model::encode_bytes(instruction_block);
  const auto suffix_ids = model::encode_bytes(suffix.text);

  const int64_t overhead =
      2 + static_cast<int64_t>(instr_ids.size() + suffix_ids.size());
  if (overhead > max_len) {
    throw DataError(
        "prompt budget too small: instruction and suffix need " +
        std::to_string(overhead) + " positions, max_len is " +
        std::to_string(max_len) + " (the sentence would vanish)");
  }

  auto sentence_ids = model::encode_bytes(sentence);
  const auto budget = static_cast<size_t>(max_len - overhead);
  if (sentence_ids.size() > budget) sentence_ids.resize(budget);

  AssembledPrompt out;
  out.id = id;
  out.role = instruction.role;
  out.domain = instruction.domain;
  out.tokens.reserve(static_cast<size_t>(overhead) + sentence_ids.size());
  out.tokens.push_back(model::kBos);
  out.tokens.insert(out.tokens.end(), sentence_ids.begin(), sentence_ids.end());
  out.tokens.insert(out.tokens.end(), instr_ids.begin(), instr_ids.end());
  out.suffix_start = static_cast<int64_t>(out.tokens.size());
  out.tokens.insert(out.tokens.end(), suffix_ids.begin(), suffix_ids.end());
  out.suffix_end = static_cast<int64_t>(out.tokens.size());
  out.tokens.push_back(model::kEos);
  return out;
}

numeric::Var embed_var(numeric::Tape& tape, model::TransformerLM& model,
                       const AssembledPrompt& prompt,
                       const model::ForwardOptions& opts) {
  if (prompt.suffix_start >= prompt.suffix_end ||
      prompt.suffix_end != static_cast<int64_t>(prompt.tokens.size()) - 1) {
    throw DataError("prompt '" + prompt.id + "' has a malformed suffix span");
  }
  model::ForwardOptions fwd = opts;
  fwd.with_logits = false;
  auto out = model.forward(tape, prompt.tokens, std::nullopt, fwd);
  numeric::Var pooled =
      model.config().pooling == model::Pooling::kMean
          ? numeric::mean_rows(out.hidden, prompt.suffix_start,
                               prompt.suffix_end)
          : numeric::mean_rows(out.hidden, prompt.suffix_end - 1,
                               prompt.suffix_end);
  return numeric::l2_normalize_rows(pooled);
}

Embedding embed(model::TransformerLM& model, const AssembledPrompt& prompt) {
  numeric::Tape tape;
  numeric::Var e = embed_var(tape, model, prompt);
  return Embedding{prompt.id, prompt.role, prompt.domain, e.value().values()};
}

std::vector<Embedding> embed_batch(model::TransformerLM& model,
                                   std::span<const AssembledPrompt> prompts) {
  std::vector<Embedding> out;
  out.reserve(prompts.size());
  for (size_t i = 0; i < prompts.size(); ++i) {
    try {
      out.push_back(embed(model, prompts[i]));
    } catch (const DataError& e) {
      throw DataError("batch item " + std::to_string(i) + " ('" +
                      prompts[i].id + "'): " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("batch item " + std::to_string(i) + " ('" +
                         prompts[i].id + "'): " + e.what());
    }
  }
  return out;
}

namespace {

void check_field(const std::string& value, const char* what) {
  if (value.find_first_of("\t\n\r") != std::string::npos) {
    throw DataError(std::string("embedding ") + what +
                    " contains a tab or newline: " + value);
  }
}

}  // namespace

void write_embeddings(const std::string& path,
                      std::span<const Embedding> embeddings) {
  std::string out;
  char buf[32];
  for (const auto& e : embeddings) {
    check_field(e.id, "id");
    check_field(e.domain, "domain");
    if (e.vec.empty()) {
      throw DataError("embedding '" + e.id + "' has an empty vector");
    }
    out += e.id;
    out += '\t';
    out += role_name(e.role);
    out += '\t';
    out += e.domain;
    out += '\t';
    for (size_t i = 0; i < e.vec.size(); ++i) {
      if (i > 0) out += ' ';
      std::snprintf(buf, sizeof(buf), "%.17g", e.vec[i]);
      out += buf;
    }
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<Embedding> read_embeddings(const std::string& path) {
  const std::string data = io::read_file(path);
  std::vector<Embedding> out;
  std::istringstream lines(data);
  std::string line;
  size_t line_no = 0;
  size_t dim = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = path + ":" + std::to_string(line_no);
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    const size_t t3 = t2 == std::string::npos ? t2 : line.find('\t', t2 + 1);
    if (t3 == std::string::npos) {
      throw DataError("malformed embedding record at " + where);
    }
    Embedding e;
    e.id = line.substr(0, t1);
    e.role = role_from_name(line.substr(t1 + 1, t2 - t1 - 1));
    e.domain = line.substr(t2 + 1, t3 - t2 - 1);
    const char* p = line.c_str() + t3 + 1;
    while (*p != '\0') {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) {
        throw DataError("malformed embedding value at " + where);
      }
      e.vec.push_back(v);
      p = end;
      while (*p == ' ') ++p;
    }
    if (e.vec.empty()) {
      throw DataError("embedding record without values at " + where);
    }
    if (dim == 0) {
      dim = e.vec.size();
    } else if (e.vec.size() != dim) {
      throw DataError("inconsistent embedding dimension at " + where +
                      ": expected " + std::to_string(dim) + ", found " +
                      std::to_string(e.vec.size()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace url::compression
