#include "url/model/config.hpp"

#include "url/errors.hpp"

namespace url::model {

std::string pooling_name(Pooling p) {
  return p == Pooling::kMean ? "mean" : "last_token";
}

Pooling pooling_from_name(const std::string& name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "last_token") return Pooling::kLastToken;
  throw DataError("unknown pooling '" + name + "' (expected mean|last_token)");
}

void ModelConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
      max_seq_len <= 0) {
    throw DataError("model config: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw DataError("model config: d_model " + std::to_string(d_model) +
                    " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (vocab_size != kVocabSize) {
    throw DataError("model config: vocab_size is fixed at " +
                    std::to_string(kVocabSize) + " (byte vocabulary)");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_model", d_model},     {"n_layers", n_layers},
          {"n_heads", n_heads},     {"d_ff", d_ff},
          {"vocab_size", vocab_size}, {"max_seq_len", max_seq_len},
          {"pooling", pooling_name(pooling)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d_model = j.value("d_model", cfg.d_model);
  cfg.n_layers = j.value("n_layers", cfg.n_layers);
  cfg.n_heads = j.value("n_heads", cfg.n_heads);
  cfg.d_ff = j.value("d_ff", cfg.d_ff);
  cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
  cfg.max_seq_len = j.value("max_seq_len", cfg.max_seq_len);
  cfg.pooling = pooling_from_name(j.value("pooling", pooling_name(cfg.pooling)));
  cfg.validate();
  return cfg;
}

void LoraConfig::validate() const {
  if (rank < 1) throw DataError("lora config: rank must be >= 1");
  if (alpha <= 0.0) throw DataError("lora config: alpha must be positive");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw DataError("lora config: dropout must be in [0, 1)");
  }
}

nlohmann::json LoraConfig::to_json() const {
  return {{"rank", rank}, {"alpha", alpha}, {"dropout", dropout}};
}

LoraConfig LoraConfig::from_json(const nlohmann::json& j) {
  LoraConfig cfg;
  cfg.rank = j.value("rank", cfg.rank);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.validate();
  return cfg;
}

}  // namespace url::model
