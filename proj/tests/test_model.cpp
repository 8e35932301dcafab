#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "url/errors.hpp"
#include "url/io/atomic_file.hpp"
#include "url/model/config.hpp"
#include "url/model/tokenizer.hpp"
#include "url/model/transformer.hpp"
#include "url/numeric/graph.hpp"
#include "url/numeric/optimizer.hpp"
#include "url/rng.hpp"

using namespace url;
using namespace url::model;
using numeric::Tape;
using numeric::Tensor;
using numeric::Var;

namespace {

std::vector<int> random_tokens(RngStream& rng, int n) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int& t : out) t = static_cast<int>(rng.next_below(256));
  return out;
}

std::filesystem::path temp_path(const std::string& stem) {
  return std::filesystem::temp_directory_path() /
         (stem + "." + std::to_string(::getpid()));
}

}  // namespace

TEST_CASE("tokenizer: encode examples") {
  CHECK(encode("") == std::vector<int>{kBos, kEos});
  CHECK(encode("AB") == std::vector<int>{kBos, 65, 66, kEos});
  CHECK(encode_bytes("AB") == std::vector<int>{65, 66});
  for (int id : encode("any text at all")) CHECK(id != kPad);
}

TEST_CASE("tokenizer: round-trip of 1000 random byte strings") {
  RngStream rng(11, "tokenizer-roundtrip");
  for (int i = 0; i < 1000; ++i) {
    const size_t len = rng.next_below(64);
    std::string s(len, '\0');
    for (char& c : s) c = static_cast<char>(rng.next_below(256));
    CHECK(decode(encode(s)) == s);
  }
}

TEST_CASE("tokenizer: decode strips specials and rejects out-of-vocab ids") {
  const std::vector<int> mixed{kBos, 'h', kPad, 'i', kEos};
  CHECK(decode(mixed) == "hi");
  const std::vector<int> bad{'h', kVocabSize};
  CHECK_THROWS_AS(static_cast<void>(decode(bad)), DataError);
}

TEST_CASE("config: validation and json round-trip") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.head_dim() == 16);

  ModelConfig indivisible = cfg;
  indivisible.n_heads = 3;
  CHECK_THROWS_AS(indivisible.validate(), DataError);

  ModelConfig wrong_vocab = cfg;
  wrong_vocab.vocab_size = 100;
  CHECK_THROWS_AS(wrong_vocab.validate(), DataError);

  cfg.d_model = 32;
  cfg.pooling = Pooling::kLastToken;
  ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.d_model == 32);
  CHECK(back.pooling == Pooling::kLastToken);
  CHECK(back.to_json() == cfg.to_json());

  LoraConfig lora;
  CHECK(lora.scaling() == doctest::Approx(2.0));
  LoraConfig lora_back = LoraConfig::from_json(lora.to_json());
  CHECK(lora_back.to_json() == lora.to_json());
  LoraConfig bad_rank = lora;
  bad_rank.rank = 0;
  CHECK_THROWS_AS(bad_rank.validate(), DataError);
}

TEST_CASE("model: output shapes at T=10") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 3);
  RngStream rng(5, "tokens");
  const auto tokens = random_tokens(rng, 10);

  Tape tape;
  auto out = m.forward(tape, tokens);
  CHECK(out.hidden.value().shape() == std::vector<int64_t>{10, 64});
  CHECK(out.logits.value().shape() == std::vector<int64_t>{10, 259});

  Tape tape2;
  ForwardOptions no_logits;
  no_logits.with_logits = false;
  auto out2 = m.forward(tape2, tokens, std::nullopt, no_logits);
  CHECK(out2.hidden.valid());
  CHECK_FALSE(out2.logits.valid());

  // A prefix slot occupies one extra position.
  Tape tape3;
  Var prefix = tape3.constant(Tensor::full({1, 64}, 0.25));
  auto out3 = m.forward(tape3, tokens, prefix);
  CHECK(out3.hidden.value().rows() == 11);
  CHECK(out3.logits.value().rows() == 11);
}

TEST_CASE("model: input validation errors") {
  ModelConfig cfg;
  cfg.max_seq_len = 8;
  TransformerLM m(cfg, LoraConfig{}, 3);
  RngStream rng(5, "tokens");

  Tape tape;
  CHECK_THROWS_AS(m.forward(tape, std::vector<int>{}), DataError);

  const auto nine = random_tokens(rng, 9);
  CHECK_THROWS_WITH_AS(m.forward(tape, nine),
                       doctest::Contains("9"), DataError);
  CHECK_THROWS_WITH_AS(m.forward(tape, nine), doctest::Contains("8"),
                       DataError);

  // Exactly max_seq_len fits without a prefix but overflows with one.
  const auto eight = random_tokens(rng, 8);
  Tape ok_tape;
  CHECK_NOTHROW(m.forward(ok_tape, eight));
  Tape over_tape;
  Var prefix = over_tape.constant(Tensor::full({1, 64}, 0.1));
  CHECK_THROWS_AS(m.forward(over_tape, eight, prefix), DataError);

  Tape bad_tape;
  Var bad_prefix = bad_tape.constant(Tensor::full({1, 32}, 0.1));
  CHECK_THROWS_AS(m.forward(bad_tape, random_tokens(rng, 3), bad_prefix),
                  ShapeError);

  std::vector<int> bad_ids{42, 259};
  Tape id_tape;
  CHECK_THROWS_AS(m.forward(id_tape, bad_ids), DataError);
}

TEST_CASE("model: causality is exact") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 21);
  RngStream rng(9, "causality");
  auto tokens = random_tokens(rng, 12);

  Tape base_tape;
  auto base = m.forward(base_tape, tokens);

  for (int j : {4, 7, 11}) {
    auto perturbed = tokens;
    perturbed[static_cast<size_t>(j)] =
        (perturbed[static_cast<size_t>(j)] + 101) % 256;
    Tape tape;
    auto out = m.forward(tape, perturbed);
    // Every position strictly before the edit is untouched, bit for bit.
    for (int64_t i = 0; i < j; ++i) {
      for (int64_t c = 0; c < 64; ++c) {
        CHECK(out.hidden.value().at(i, c) == base.hidden.value().at(i, c));
      }
      for (int64_t c = 0; c < 259; ++c) {
        CHECK(out.logits.value().at(i, c) == base.logits.value().at(i, c));
      }
    }
    // ...and the edited position itself sees the change in its logits row
    // through its own embedding.
    double diff = 0.0;
    for (int64_t c = 0; c < 259; ++c) {
      diff = std::max(diff, std::abs(out.logits.value().at(j, c) -
                                     base.logits.value().at(j, c)));
    }
    CHECK(diff > 0.0);
  }
}

TEST_CASE("model: zero-initialized adapters are an exact identity") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 33);
  RngStream rng(13, "lora-id");
  const auto tokens = random_tokens(rng, 14);

  Tape with_tape;
  ForwardOptions with_adapters;  // defaults: adapters on, inference
  auto with = m.forward(with_tape, tokens, std::nullopt, with_adapters);

  Tape without_tape;
  ForwardOptions without;
  without.use_adapters = false;
  auto bare = m.forward(without_tape, tokens, std::nullopt, without);

  CHECK(testutil::max_abs_diff(with.hidden.value(), bare.hidden.value()) <
        1e-12);
  CHECK(testutil::max_abs_diff(with.logits.value(), bare.logits.value()) <
        1e-12);

  // Once B is nonzero the adapters must actually do something.
  m.param("layers.0.attn.lora_q.b").value().fill(0.01);
  Tape live_tape;
  auto live = m.forward(live_tape, tokens, std::nullopt, with_adapters);
  CHECK(testutil::max_abs_diff(live.hidden.value(), bare.hidden.value()) >
        1e-8);
}

TEST_CASE("model: inference is deterministic; adapter dropout is not a no-op") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 4);
  // Give the adapters weight so the dropout path is observable.
  m.param("layers.0.attn.lora_q.b").value().fill(0.05);
  m.param("layers.1.attn.lora_v.b").value().fill(0.05);
  RngStream rng(6, "det");
  const auto tokens = random_tokens(rng, 6);

  Tape t1, t2;
  auto a = m.forward(t1, tokens);
  auto b = m.forward(t2, tokens);
  const auto& av = a.hidden.value().values();
  const auto& bv = b.hidden.value().values();
  CHECK(std::memcmp(av.data(), bv.data(), av.size() * sizeof(double)) == 0);

  ForwardOptions train_opts;
  train_opts.train = true;
  RngStream drop_rng(99, "dropout");
  train_opts.dropout_rng = &drop_rng;
  Tape t3;
  auto trained_mode = m.forward(t3, tokens, std::nullopt, train_opts);
  CHECK(testutil::max_abs_diff(trained_mode.hidden.value(), a.hidden.value()) >
        0.0);

  ForwardOptions missing_rng;
  missing_rng.train = true;
  Tape t4;
  CHECK_THROWS_AS(m.forward(t4, tokens, std::nullopt, missing_rng), Error);
}

TEST_CASE("model: permuting the input changes the hidden states") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 17);
  RngStream rng(31, "perm");
  auto tokens = random_tokens(rng, 10);
  auto reversed = tokens;
  std::reverse(reversed.begin(), reversed.end());
  REQUIRE(tokens != reversed);

  Tape t1, t2;
  auto a = m.forward(t1, tokens);
  auto b = m.forward(t2, reversed);
  CHECK(testutil::max_abs_diff(a.hidden.value(), b.hidden.value()) > 1e-6);
}

TEST_CASE("model: trainable parameter selection") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 3);
  auto all = m.trainable_parameters(false);
  auto lora = m.trainable_parameters(true);
  CHECK(all.size() == 33);  // 2 embeddings + 2x14 per layer + 2 final + prefix
  CHECK(lora.size() == 9);  // 2 layers x 2 targets x (A,B) + prefix projection

  int64_t lora_scalars = 0;
  for (auto* p : lora) lora_scalars += p->value().numel();
  // 2 layers x 2 targets x (64x8 + 8x64) + 64x64 prefix projection
  CHECK(lora_scalars == 8192);

  for (auto* p : lora) {
    const bool is_adapter = p->name().find(".lora_") != std::string::npos ||
                            p->name() == "prefix_proj";
    CHECK(is_adapter);
    CHECK(std::find(all.begin(), all.end(), p) != all.end());
  }
}

TEST_CASE("model: one adapter-only step leaves base weights bit-identical") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 12);
  m.set_trainable_set(/*lora_only=*/true);

  std::vector<std::string> base_names{"wte", "wpe", "layers.0.attn.wq",
                                      "layers.1.ffn.w1", "final_ln.gamma"};
  std::vector<std::vector<double>> snapshot;
  for (const auto& n : base_names) snapshot.push_back(m.param(n).value().values());
  const std::vector<double> lora_a_before =
      m.param("layers.0.attn.lora_q.a").value().values();
  const std::vector<double> lora_b_before =
      m.param("layers.0.attn.lora_q.b").value().values();

  RngStream rng(2, "step");
  const auto tokens = random_tokens(rng, 16);
  std::vector<int> targets(tokens.begin() + 1, tokens.end());
  targets.push_back(kEos);
  std::vector<unsigned char> mask(tokens.size(), 1);

  Tape tape;
  ForwardOptions opts;
  opts.train = true;
  RngStream drop(7, "dropout");
  opts.dropout_rng = &drop;
  auto out = m.forward(tape, tokens, std::nullopt, opts);
  Var loss = numeric::cross_entropy(out.logits, targets, mask);
  tape.backward(loss);

  numeric::AdamW opt(m.trainable_parameters(true), {1e-3, 0.0, 10});
  CHECK(opt.step() == numeric::StepStatus::kApplied);

  for (size_t i = 0; i < base_names.size(); ++i) {
    const auto& now = m.param(base_names[i]).value().values();
    CHECK(std::memcmp(now.data(), snapshot[i].data(),
                      now.size() * sizeof(double)) == 0);
  }
  CHECK(m.param("layers.0.attn.lora_q.a").value().values() != lora_a_before);
  CHECK(m.param("layers.0.attn.lora_q.b").value().values() != lora_b_before);
}

TEST_CASE("checkpoint: save/load round-trip is byte-identical") {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 64;
  cfg.pooling = Pooling::kLastToken;
  LoraConfig lora;
  lora.rank = 4;
  TransformerLM m(cfg, lora, 77);

  const auto p1 = temp_path("ckpt_a.bin");
  const auto p2 = temp_path("ckpt_b.bin");
  save_checkpoint(m, p1.string());
  TransformerLM loaded = load_checkpoint(p1.string());

  CHECK(loaded.config().d_model == 32);
  CHECK(loaded.config().pooling == Pooling::kLastToken);
  CHECK(loaded.lora_config().rank == 4);
  CHECK(loaded.fingerprint() == m.fingerprint());
  auto orig = m.parameters();
  auto back = loaded.parameters();
  REQUIRE(orig.size() == back.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(back[i]->name() == orig[i]->name());
    const auto& a = orig[i]->value().values();
    const auto& b = back[i]->value().values();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }

  save_checkpoint(loaded, p2.string());
  CHECK(io::read_file(p1.string()) == io::read_file(p2.string()));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("checkpoint: corruption is rejected") {
  TransformerLM m(ModelConfig{}, LoraConfig{}, 8);
  const auto path = temp_path("ckpt_corrupt.bin");
  save_checkpoint(m, path.string());
  std::string bytes = io::read_file(path.string());

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  io::write_file_atomic(path.string(), bad_magic);
  CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);

  io::write_file_atomic(path.string(), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);

  io::write_file_atomic(path.string(), bytes + "extra");
  CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);

  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);
}

TEST_CASE("model: fingerprint tracks weight changes") {
  TransformerLM a(ModelConfig{}, LoraConfig{}, 5);
  TransformerLM b(ModelConfig{}, LoraConfig{}, 5);
  TransformerLM c(ModelConfig{}, LoraConfig{}, 6);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
  b.param("wte").value().at(0, 0) += 1e-9;
  CHECK(a.fingerprint() != b.fingerprint());
}
