#include "url/model/transformer.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "url/errors.hpp"
#include "url/io/atomic_file.hpp"
#include "url/io/bytes.hpp"

namespace url::model {

using numeric::Parameter;
using numeric::Tape;
using numeric::Tensor;
using numeric::Var;

namespace {

// Every tensor draws from its own named stream, so the initialization of one
// weight never depends on how many values another weight consumed.
Tensor init_normal(uint64_t seed, const std::string& name,
                   std::vector<int64_t> shape, double stddev) {
  RngStream rng(seed, name);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.next_normal();
  return t;
}

bool in_lora_set(const std::string& name) {
  return name.find(".lora_") != std::string::npos || name == "prefix_proj";
}

}  // namespace

Parameter* TransformerLM::add_param(const std::string& name, Tensor value) {
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return params_.back().get();
}

TransformerLM::TransformerLM(ModelConfig cfg, LoraConfig lora, uint64_t seed)
    : cfg_(cfg), lora_(lora) {
  cfg_.validate();
  lora_.validate();
  const int64_t d = cfg_.d_model;
  const int64_t r = lora_.rank;
  const double kInitStd = 0.02;

  auto normal = [&](const std::string& name, std::vector<int64_t> shape) {
    return add_param(name, init_normal(seed, name, std::move(shape), kInitStd));
  };
  auto ones = [&](const std::string& name, std::vector<int64_t> shape) {
    return add_param(name, Tensor::full(std::move(shape), 1.0));
  };
  auto zeros = [&](const std::string& name, std::vector<int64_t> shape) {
    return add_param(name, Tensor::zeros(std::move(shape)));
  };

  wte_ = normal("wte", {cfg_.vocab_size, d});
  wpe_ = normal("wpe", {cfg_.max_seq_len, d});
  layers_.reserve(static_cast<size_t>(cfg_.n_layers));
  for (int64_t i = 0; i < cfg_.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    LayerParams lp;
    lp.ln1_gamma = ones(p + "ln1.gamma", {d});
    lp.ln1_beta = zeros(p + "ln1.beta", {d});
    lp.wq = normal(p + "attn.wq", {d, d});
    lp.wk = normal(p + "attn.wk", {d, d});
    lp.wv = normal(p + "attn.wv", {d, d});
    lp.wo = normal(p + "attn.wo", {d, d});
    lp.lora_q_a = normal(p + "attn.lora_q.a", {d, r});
    lp.lora_q_b = zeros(p + "attn.lora_q.b", {r, d});
    lp.lora_v_a = normal(p + "attn.lora_v.a", {d, r});
    lp.lora_v_b = zeros(p + "attn.lora_v.b", {r, d});
    lp.ln2_gamma = ones(p + "ln2.gamma", {d});
    lp.ln2_beta = zeros(p + "ln2.beta", {d});
    lp.ffn_w1 = normal(p + "ffn.w1", {d, cfg_.d_ff});
    lp.ffn_w2 = normal(p + "ffn.w2", {cfg_.d_ff, d});
    layers_.push_back(lp);
  }
  final_gamma_ = ones("final_ln.gamma", {d});
  final_beta_ = zeros("final_ln.beta", {d});
  prefix_proj_ = normal("prefix_proj", {d, d});
}

Var TransformerLM::lora_linear(Tape& tape, Var x, Parameter& w, Parameter& a,
                               Parameter& b, const ForwardOptions& opts) {
  Var base = numeric::matmul(x, tape.leaf(w));
  if (!opts.use_adapters) return base;
  Var xin = x;
  if (opts.train && lora_.dropout > 0.0) {
    xin = numeric::dropout(x, lora_.dropout, *opts.dropout_rng);
  }
  Var low = numeric::matmul(numeric::matmul(xin, tape.leaf(a)), tape.leaf(b));
  return numeric::add(base, numeric::scale(low, lora_.scaling()));
}

ForwardResult TransformerLM::forward(Tape& tape, std::span<const int> tokens,
                                     std::optional<Var> prefix_slot,
                                     const ForwardOptions& opts) {
  const int64_t n_tokens = static_cast<int64_t>(tokens.size());
  const int64_t total = n_tokens + (prefix_slot.has_value() ? 1 : 0);
  if (total == 0) throw DataError("forward: empty sequence");
  if (total > cfg_.max_seq_len) {
    throw DataError("forward: sequence length " + std::to_string(total) +
                    " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw DataError("forward: token id " + std::to_string(id) +
                      " outside vocabulary of " +
                      std::to_string(cfg_.vocab_size));
    }
  }
  if (opts.use_adapters && opts.train && lora_.dropout > 0.0 &&
      opts.dropout_rng == nullptr) {
    throw Error("forward: training with adapter dropout requires a dropout rng");
  }

  Var wte = tape.leaf(*wte_);
  std::vector<int> ids(tokens.begin(), tokens.end());
  Var x;
  if (prefix_slot.has_value()) {
    const Tensor& pv = prefix_slot->value();
    if (pv.rank() != 2 || pv.rows() != 1 || pv.cols() != cfg_.d_model) {
      throw ShapeError("forward: prefix slot must be [1 x " +
                       std::to_string(cfg_.d_model) + "], got " +
                       pv.shape_str());
    }
    Var pref = numeric::matmul(*prefix_slot, tape.leaf(*prefix_proj_));
    x = n_tokens > 0 ? numeric::concat_rows(pref, numeric::gather_rows(wte, ids))
                     : pref;
  } else {
    x = numeric::gather_rows(wte, ids);
  }

  std::vector<int> positions(static_cast<size_t>(total));
  std::iota(positions.begin(), positions.end(), 0);
  x = numeric::add(x, numeric::gather_rows(tape.leaf(*wpe_), positions));

  const int64_t dh = cfg_.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (auto& layer : layers_) {
    Var ln1 = numeric::layer_norm(x, tape.leaf(*layer.ln1_gamma),
                                  tape.leaf(*layer.ln1_beta));
    Var q = lora_linear(tape, ln1, *layer.wq, *layer.lora_q_a, *layer.lora_q_b,
                        opts);
    Var k = numeric::matmul(ln1, tape.leaf(*layer.wk));
    Var v = lora_linear(tape, ln1, *layer.wv, *layer.lora_v_a, *layer.lora_v_b,
                        opts);
    std::vector<Var> heads;
    heads.reserve(static_cast<size_t>(cfg_.n_heads));
    for (int64_t h = 0; h < cfg_.n_heads; ++h) {
      Var qh = numeric::slice_cols(q, h * dh, (h + 1) * dh);
      Var kh = numeric::slice_cols(k, h * dh, (h + 1) * dh);
      Var vh = numeric::slice_cols(v, h * dh, (h + 1) * dh);
      Var att = numeric::causal_softmax(
          numeric::scale(numeric::matmul(qh, kh, /*transpose_b=*/true),
                         att_scale));
      heads.push_back(numeric::matmul(att, vh));
    }
    Var attn_out =
        numeric::matmul(numeric::concat_cols(heads), tape.leaf(*layer.wo));
    x = numeric::add(x, attn_out);

    Var ln2 = numeric::layer_norm(x, tape.leaf(*layer.ln2_gamma),
                                  tape.leaf(*layer.ln2_beta));
    Var ffn = numeric::matmul(
        numeric::gelu(numeric::matmul(ln2, tape.leaf(*layer.ffn_w1))),
        tape.leaf(*layer.ffn_w2));
    x = numeric::add(x, ffn);
  }

  ForwardResult out{numeric::layer_norm(x, tape.leaf(*final_gamma_),
                                        tape.leaf(*final_beta_)),
                    Var{}};
  if (opts.with_logits) {
    out.logits = numeric::matmul(out.hidden, wte, /*transpose_b=*/true);
  }
  return out;
}

std::vector<Parameter*> TransformerLM::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> TransformerLM::trainable_parameters(bool lora_only) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (!lora_only || in_lora_set(p->name())) out.push_back(p.get());
  }
  return out;
}

void TransformerLM::set_trainable_set(bool lora_only) {
  for (auto& p : params_) {
    p->set_trainable(!lora_only || in_lora_set(p->name()));
  }
}

Parameter& TransformerLM::param(const std::string& name) {
  for (auto& p : params_) {
    if (p->name() == name) return *p;
  }
  throw DataError("unknown parameter: " + name);
}

uint64_t TransformerLM::fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_bytes = [&h](const void* data, size_t n) {
    const unsigned char* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  const std::string cfg_dump =
      nlohmann::json({{"model", cfg_.to_json()}, {"lora", lora_.to_json()}})
          .dump();
  mix_bytes(cfg_dump.data(), cfg_dump.size());
  for (const auto& p : params_) {
    mix_bytes(p->name().data(), p->name().size() + 1);  // include the NUL
    const auto& vals = p->value().values();
    mix_bytes(vals.data(), vals.size() * sizeof(double));
  }
  return h;
}

// ---- checkpoint ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'F', 'L', 'K', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(TransformerLM& model, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  io::put<uint32_t>(out, kVersion);

  const std::string cfg_dump = nlohmann::json({{"model", model.config().to_json()},
                                               {"lora", model.lora_config().to_json()}})
                                   .dump();
  io::put<uint64_t>(out, cfg_dump.size());
  out.append(cfg_dump);

  auto params = model.parameters();
  io::put<uint64_t>(out, params.size());
  for (const Parameter* p : params) {
    io::put<uint64_t>(out, p->name().size());
    out.append(p->name());
    const auto& shape = p->value().shape();
    io::put<uint32_t>(out, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) io::put<int64_t>(out, d);
    const auto& vals = p->value().values();
    out.append(reinterpret_cast<const char*>(vals.data()),
               vals.size() * sizeof(double));
  }
  io::write_file_atomic(path, out);
}

TransformerLM load_checkpoint(const std::string& path) {
  const std::string data = io::read_file(path);
  io::ByteReader in(data, "checkpoint " + path);
  if (in.get_str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError("not a checkpoint file: " + path);
  }
  const uint32_t version = in.get<uint32_t>();
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version) + " in " + path);
  }
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(in.get_str(in.get<uint64_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint config in " + path + ": " + e.what());
  }
  TransformerLM model(ModelConfig::from_json(cfg_json.at("model")),
                      LoraConfig::from_json(cfg_json.at("lora")), /*seed=*/0);

  auto params = model.parameters();
  const uint64_t count = in.get<uint64_t>();
  if (count != params.size()) {
    throw DataError("checkpoint parameter count mismatch in " + path +
                    ": file has " + std::to_string(count) + ", model expects " +
                    std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const std::string name = in.get_str(in.get<uint64_t>());
    if (name != p->name()) {
      throw DataError("checkpoint parameter order mismatch in " + path +
                      ": expected " + p->name() + ", found " + name);
    }
    const uint32_t rank = in.get<uint32_t>();
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = in.get<int64_t>();
    if (shape != p->value().shape()) {
      throw DataError("checkpoint shape mismatch for " + name + " in " + path +
                      ": expected " + Tensor::shape_str(p->value().shape()) +
                      ", found " + Tensor::shape_str(shape));
    }
    in.get_doubles(p->value().data(),
                   static_cast<size_t>(p->value().numel()));
    if (!p->value().all_finite()) {
      throw DataError("checkpoint holds non-finite values for " + name +
                      " in " + path);
    }
  }
  if (!in.exhausted()) {
    throw DataError("trailing bytes after checkpoint payload: " + path);
  }
  return model;
}

}  // namespace url::model
