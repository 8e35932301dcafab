#include "url/training/losses.hpp"

#include <algorithm>
#include <cmath>

#include "url/errors.hpp"
#include "url/model/tokenizer.hpp"

namespace url::training {

using compression::AssembledPrompt;
using compression::Embedding;
using compression::RenderedInstruction;
using compression::Role;
using compression::SuffixSpec;
using model::TransformerLM;
using numeric::Tape;
using numeric::Tensor;
using numeric::Var;

void TrainExample::validate() const {
  if (claim.empty()) throw DataError("example '" + id + "' has an empty claim");
  if (positive.empty()) {
    throw DataError("example '" + id + "' has an empty positive reference");
  }
  if (c2r_prompt.empty() || r2c_prompt.empty()) {
    throw DataError("example '" + id + "' is missing a generation prompt");
  }
  for (const auto& n : negatives) {
    if (n == positive) {
      throw DataError("example '" + id +
                      "' lists its positive reference among the negatives");
    }
  }
}

nlohmann::json TrainExample::to_json() const {
  return nlohmann::json{{"id", id},
                        {"domain", domain},
                        {"claim", claim},
                        {"positive", positive},
                        {"negatives", negatives},
                        {"claim_instruction", claim_instruction},
                        {"reference_instruction", reference_instruction},
                        {"gen_prompt_c2r", c2r_prompt},
                        {"gen_prompt_r2c", r2c_prompt}};
}

TrainExample TrainExample::from_json(const nlohmann::json& j) {
  TrainExample e;
  try {
    e.id = j.at("id").get<std::string>();
    e.domain = j.value("domain", std::string());
    e.claim = j.at("claim").get<std::string>();
    e.positive = j.at("positive").get<std::string>();
    e.negatives = j.value("negatives", std::vector<std::string>{});
    e.claim_instruction = j.value("claim_instruction", std::string());
    e.reference_instruction = j.value("reference_instruction", std::string());
    e.c2r_prompt = j.at("gen_prompt_c2r").get<std::string>();
    e.r2c_prompt = j.at("gen_prompt_r2c").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("bad training example record: ") + ex.what());
  }
  e.validate();
  return e;
}

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) {
    throw DataError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (tau <= 0.0) throw DataError("tau must be positive");
  if (learning_rate <= 0.0) throw DataError("learning rate must be positive");
  if (epochs <= 0 || batch_size <= 0 || grad_accum <= 0) {
    throw DataError("epochs, batch size, and accumulation must be positive");
  }
  if (negatives_per_example < 0) {
    throw DataError("negatives per example must be non-negative");
  }
  if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
    throw DataError("warmup ratio must lie in [0, 1)");
  }
  if (max_grad_norm < 0.0) {
    throw DataError("max grad norm must be non-negative (0 disables)");
  }
  SuffixSpec{suffix}.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"alpha", alpha},
                        {"tau", tau},
                        {"learning_rate", learning_rate},
                        {"epochs", epochs},
                        {"batch_size", batch_size},
                        {"grad_accum", grad_accum},
                        {"warmup_ratio", warmup_ratio},
                        {"negatives_per_example", negatives_per_example},
                        {"in_batch_negatives", in_batch_negatives},
                        {"max_grad_norm", max_grad_norm},
                        {"seed", seed},
                        {"suffix", suffix}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.tau = j.value("tau", c.tau);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_accum = j.value("grad_accum", c.grad_accum);
    c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
    c.negatives_per_example =
        j.value("negatives_per_example", c.negatives_per_example);
    c.in_batch_negatives = j.value("in_batch_negatives", c.in_batch_negatives);
    c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
    c.seed = j.value("seed", c.seed);
    c.suffix = j.value("suffix", c.suffix);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("bad training config: ") + ex.what());
  }
  c.validate();
  return c;
}

LossBreakdown make_breakdown(double l1, double l2, double alpha) {
  return LossBreakdown{l1, l2, alpha * l1 + (1.0 - alpha) * l2};
}

Var generative_loss_var(Tape& tape, TransformerLM& model, Var source_embedding,
                        const std::string& gen_prompt,
                        const std::string& target,
                        const model::ForwardOptions& opts) {
  if (target.empty()) throw DataError("generative loss with an empty target");
  if (gen_prompt.empty()) {
    throw DataError("generative loss with an empty generation prompt");
  }
  const auto prompt_ids = model::encode_bytes(gen_prompt);
  auto target_ids = model::encode_bytes(target);
  const int64_t max_len = model.config().max_seq_len;
  const auto n_prompt = static_cast<int64_t>(prompt_ids.size());
  // prefix slot + prompt + target + EOS must fit; the target tail gives way.
  if (n_prompt + 2 > max_len) {
    throw DataError("generation prompt needs " + std::to_string(n_prompt + 2) +
                    " positions, max_seq_len is " + std::to_string(max_len));
  }
  const auto budget = static_cast<size_t>(max_len - 2 - n_prompt);
  if (target_ids.size() > budget) target_ids.resize(budget);
  const auto n_target = static_cast<int64_t>(target_ids.size());

  std::vector<int> tokens = prompt_ids;
  tokens.insert(tokens.end(), target_ids.begin(), target_ids.end());
  tokens.push_back(model::kEos);

  model::ForwardOptions fwd = opts;
  fwd.with_logits = true;
  auto out = model.forward(tape, tokens, source_embedding, fwd);

  // Rows: 0 = prefix slot, 1..n_prompt = prompt, then target, then EOS.
  // Row r predicts position r+1, so rows n_prompt .. n_prompt+n_target are
  // supervised with the target tokens followed by EOS.
  const int64_t rows = out.logits.value().rows();
  std::vector<int> targets(static_cast<size_t>(rows), 0);
  std::vector<unsigned char> mask(static_cast<size_t>(rows), 0);
  for (int64_t t = 0; t < n_target; ++t) {
    targets[static_cast<size_t>(n_prompt + t)] =
        target_ids[static_cast<size_t>(t)];
    mask[static_cast<size_t>(n_prompt + t)] = 1;
  }
  targets[static_cast<size_t>(n_prompt + n_target)] = model::kEos;
  mask[static_cast<size_t>(n_prompt + n_target)] = 1;
  return numeric::cross_entropy(out.logits, std::move(targets),
                                std::move(mask));
}

double generative_loss(TransformerLM& model, const Embedding& source,
                       const std::string& gen_prompt,
                       const std::string& target) {
  Tape tape;
  const auto d = static_cast<int64_t>(source.vec.size());
  Var e = tape.constant(Tensor({1, d}, source.vec));
  return generative_loss_var(tape, model, e, gen_prompt, target)
      .value()
      .item();
}

Var contrastive_loss_var(Tape& tape, Var anchor, Var positive,
                         std::span<const Var> negatives, double tau) {
  if (tau <= 0.0) throw DataError("tau must be positive");
  if (negatives.empty()) {
    // Single-candidate softmax: certainty, zero loss, no gradient.
    return tape.constant(Tensor::scalar(0.0));
  }
  std::vector<Var> candidates;
  candidates.reserve(negatives.size() + 1);
  candidates.push_back(positive);
  candidates.insert(candidates.end(), negatives.begin(), negatives.end());
  Var stacked = numeric::stack_rows(candidates);
  Var logits =
      numeric::scale(numeric::matmul(anchor, stacked, /*transpose_b=*/true),
                     1.0 / tau);
  return numeric::cross_entropy(logits, {0}, {1});
}

namespace {

void check_unit_norm(const Embedding& e, const char* who) {
  double norm_sq = 0.0;
  for (double v : e.vec) norm_sq += v * v;
  if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-6) {
    throw NumericError(std::string("contrastive ") + who + " '" + e.id +
                       "' is not unit-norm (|v| = " +
                       std::to_string(std::sqrt(norm_sq)) + ")");
  }
}

}  // namespace

double contrastive_loss(const Embedding& anchor, const Embedding& positive,
                        std::span<const Embedding> negatives, double tau) {
  check_unit_norm(anchor, "anchor");
  check_unit_norm(positive, "positive");
  const auto d = static_cast<int64_t>(anchor.vec.size());
  if (static_cast<int64_t>(positive.vec.size()) != d) {
    throw ShapeError("contrastive positive dimension mismatch");
  }
  Tape tape;
  Var a = tape.constant(Tensor({1, d}, anchor.vec));
  Var p = tape.constant(Tensor({1, d}, positive.vec));
  std::vector<Var> negs;
  negs.reserve(negatives.size());
  for (const auto& n : negatives) {
    check_unit_norm(n, "negative");
    if (static_cast<int64_t>(n.vec.size()) != d) {
      throw ShapeError("contrastive negative dimension mismatch");
    }
    negs.push_back(tape.constant(Tensor({1, d}, n.vec)));
  }
  return contrastive_loss_var(tape, a, p, negs, tau).value().item();
}

BatchLossVars total_loss_var(Tape& tape, TransformerLM& model,
                             std::span<const TrainExample> batch,
                             const TrainConfig& cfg, RngStream* dropout_rng) {
  cfg.validate();
  if (batch.empty()) throw DataError("total loss over an empty batch");
  const SuffixSpec suffix{cfg.suffix};
  const int64_t max_len = model.config().max_seq_len;

  model::ForwardOptions opts;
  opts.train = dropout_rng != nullptr;
  opts.dropout_rng = dropout_rng;

  const auto n = batch.size();
  std::vector<Var> e_claim(n), e_pos(n);
  std::vector<std::vector<Var>> e_neg(n);
  for (size_t i = 0; i < n; ++i) {
    const TrainExample& ex = batch[i];
    ex.validate();
    const RenderedInstruction claim_ins{Role::kClaim, ex.domain,
                                        ex.claim_instruction};
    const RenderedInstruction ref_ins{Role::kReference, ex.domain,
                                      ex.reference_instruction};
    e_claim[i] = compression::embed_var(
        tape, model,
        compression::assemble(ex.id, ex.claim, claim_ins, suffix, max_len),
        opts);
    e_pos[i] = compression::embed_var(
        tape, model,
        compression::assemble(ex.id, ex.positive, ref_ins, suffix, max_len),
        opts);
    const auto n_used = std::min<size_t>(
        ex.negatives.size(), static_cast<size_t>(cfg.negatives_per_example));
    e_neg[i].reserve(n_used);
    for (size_t k = 0; k < n_used; ++k) {
      e_neg[i].push_back(compression::embed_var(
          tape, model,
          compression::assemble(ex.id + "#neg" + std::to_string(k),
                                ex.negatives[k], ref_ins, suffix, max_len),
          opts));
    }
  }

  Var l1, l2;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    const TrainExample& ex = batch[i];
    Var c2r = generative_loss_var(tape, model, e_claim[i], ex.c2r_prompt,
                                  ex.positive, opts);
    Var r2c = generative_loss_var(tape, model, e_pos[i], ex.r2c_prompt,
                                  ex.claim, opts);
    Var gen = numeric::scale(numeric::add(c2r, r2c), 0.5);

    // Claim anchor: its positive against sampled negatives plus, when
    // enabled, the other in-batch positives.
    std::vector<Var> claim_negs = e_neg[i];
    // Reference anchor: its claim against the other in-batch claims (the
    // corpus carries no sampled claim-side negatives).
    std::vector<Var> ref_negs;
    if (cfg.in_batch_negatives) {
      for (size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        claim_negs.push_back(e_pos[j]);
        ref_negs.push_back(e_claim[j]);
      }
    }
    Var claim_anchor =
        contrastive_loss_var(tape, e_claim[i], e_pos[i], claim_negs, cfg.tau);
    Var ref_anchor =
        contrastive_loss_var(tape, e_pos[i], e_claim[i], ref_negs, cfg.tau);
    Var con = numeric::scale(numeric::add(claim_anchor, ref_anchor), 0.5);

    Var gen_share = numeric::scale(gen, inv_n);
    Var con_share = numeric::scale(con, inv_n);
    l1 = i == 0 ? gen_share : numeric::add(l1, gen_share);
    l2 = i == 0 ? con_share : numeric::add(l2, con_share);
  }

  Var total = numeric::add(numeric::scale(l1, cfg.alpha),
                           numeric::scale(l2, 1.0 - cfg.alpha));
  BatchLossVars out{total, l1, l2,
                    LossBreakdown{l1.value().item(), l2.value().item(),
                                  total.value().item()}};
  return out;
}

LossBreakdown total_loss(TransformerLM& model,
                         std::span<const TrainExample> batch,
                         const TrainConfig& cfg) {
  Tape tape;
  return total_loss_var(tape, model, batch, cfg).values;
}

}  // namespace url::training
