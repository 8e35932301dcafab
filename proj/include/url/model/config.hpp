#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "url/model/tokenizer.hpp"

namespace url::model {

enum class Pooling { kMean, kLastToken };

std::string pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);

struct ModelConfig {
  int64_t d_model = 64;
  int64_t n_layers = 2;
  int64_t n_heads = 4;
  int64_t d_ff = 256;
  int64_t vocab_size = kVocabSize;
  int64_t max_seq_len = 256;
  Pooling pooling = Pooling::kMean;

  int64_t head_dim() const { return d_model / n_heads; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct LoraConfig {
  int64_t rank = 8;
  double alpha = 16.0;
  double dropout = 0.05;
  // Adapter targets are fixed to the query and value projections of every
  // attention block.

  double scaling() const { return alpha / static_cast<double>(rank); }
  void validate() const;
  nlohmann::json to_json() const;
  static LoraConfig from_json(const nlohmann::json& j);
};

}  // namespace url::model
