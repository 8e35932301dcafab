#include "url/cli/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <set>
#include <stdexcept>
#include <utility>

#include <CLI11.hpp>

#include "url/compression/embedder.hpp"
#include "url/errors.hpp"
#include "url/eval/trec.hpp"
#include "url/io/atomic_file.hpp"
#include "url/linking/linking.hpp"
#include "url/model/transformer.hpp"
#include "url/training/trainer.hpp"

namespace url::cli {

using compression::DomainInstructionSet;
using compression::Embedding;
using compression::RenderedInstruction;
using compression::Role;
using compression::SuffixSpec;
using corpus::CorpusRecord;
using corpus::QAPair;
using training::TrainExample;

namespace {

// Bad invocations (as opposed to bad data) exit with code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string json_field(const nlohmann::json& j, const char* key,
                       std::string fallback) {
  return j.value(key, std::move(fallback));
}

}  // namespace

nlohmann::json Paths::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  const std::pair<const char*, const std::string*> fields[] = {
      {"qa", &qa},           {"train", &train},
      {"records", &records}, {"claims", &claims},
      {"references", &references}, {"qrels", &qrels},
      {"checkpoint", &checkpoint}, {"init_from", &init_from},
      {"index", &index},     {"run", &run},
      {"report", &report},   {"embeddings", &embeddings},
      {"instructions", &instructions}, {"out_dir", &out_dir}};
  for (const auto& [key, value] : fields) {
    if (!value->empty()) j[key] = *value;
  }
  return j;
}

Paths Paths::from_json(const nlohmann::json& j) {
  Paths p;
  std::set<std::string> known{"qa",         "train",     "records",
                              "claims",     "references", "qrels",
                              "checkpoint", "init_from", "index",
                              "run",        "report",    "embeddings",
                              "instructions", "out_dir"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) {
      throw DataError("unknown paths key '" + key + "'");
    }
  }
  p.qa = json_field(j, "qa", p.qa);
  p.train = json_field(j, "train", p.train);
  p.records = json_field(j, "records", p.records);
  p.claims = json_field(j, "claims", p.claims);
  p.references = json_field(j, "references", p.references);
  p.qrels = json_field(j, "qrels", p.qrels);
  p.checkpoint = json_field(j, "checkpoint", p.checkpoint);
  p.init_from = json_field(j, "init_from", p.init_from);
  p.index = json_field(j, "index", p.index);
  p.run = json_field(j, "run", p.run);
  p.report = json_field(j, "report", p.report);
  p.embeddings = json_field(j, "embeddings", p.embeddings);
  p.instructions = json_field(j, "instructions", p.instructions);
  p.out_dir = json_field(j, "out_dir", p.out_dir);
  return p;
}

nlohmann::json RunConfig::to_json() const {
  return nlohmann::json{
      {"version", 1},
      {"seed", seed},
      {"model", model.to_json()},
      {"lora", lora.to_json()},
      {"train", train.to_json()},
      {"synthetic", synthetic.to_json()},
      {"ablation", ablation.to_json()},
      {"k", k},
      {"ks", ks},
      {"instruction_arm", instruction_arm_name(instruction_arm)},
      {"style", compression::instruction_style_name(style)},
      {"tag", tag},
      {"paths", paths.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  std::set<std::string> known{"version", "seed",  "model",     "lora",
                              "train",   "synthetic", "ablation", "k",
                              "ks",      "instruction_arm", "style", "tag",
                              "paths"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) {
      throw DataError("unknown config key '" + key + "'");
    }
  }
  try {
    if (j.contains("version") && j.at("version").get<int64_t>() != 1) {
      throw DataError("unsupported config version");
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("model")) {
      cfg.model = model::ModelConfig::from_json(j.at("model"));
    }
    if (j.contains("lora")) {
      cfg.lora = model::LoraConfig::from_json(j.at("lora"));
    }
    if (j.contains("train")) {
      cfg.train = training::TrainConfig::from_json(j.at("train"));
    }
    if (j.contains("synthetic")) {
      cfg.synthetic = corpus::SyntheticSpec::from_json(j.at("synthetic"));
    }
    if (j.contains("ablation")) {
      cfg.ablation = AblationConfig::from_json(j.at("ablation"));
    }
    if (j.contains("k")) cfg.k = j.at("k").get<int64_t>();
    if (j.contains("ks")) cfg.ks = j.at("ks").get<std::vector<int64_t>>();
    if (j.contains("instruction_arm")) {
      cfg.instruction_arm =
          instruction_arm_from_name(j.at("instruction_arm").get<std::string>());
    }
    if (j.contains("style")) {
      cfg.style = compression::instruction_style_from_name(
          j.at("style").get<std::string>());
    }
    if (j.contains("tag")) cfg.tag = j.at("tag").get<std::string>();
    if (j.contains("paths")) cfg.paths = Paths::from_json(j.at("paths"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad config: ") + e.what());
  }
  return cfg;
}

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

std::string require_input(const std::string& path, const char* what) {
  if (path.empty()) {
    throw UsageError(std::string("missing required ") + what);
  }
  if (!std::filesystem::exists(path)) {
    throw DataError("no such file: " + path);
  }
  return path;
}

std::string or_default(const std::string& path, const char* fallback) {
  return path.empty() ? std::string(fallback) : path;
}

std::string hex_fingerprint(uint64_t fp) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(fp));
  return buf;
}

void write_json_report(const std::string& path, const nlohmann::json& j) {
  io::write_file_atomic(path, j.dump(2) + "\n");
}

// Instruction sets for the transform/embed/index/link subcommands: a user
// file when given, otherwise the shipped domains restyled per config.
std::vector<DomainInstructionSet> load_instruction_sets(const RunConfig& cfg) {
  if (!cfg.paths.instructions.empty()) {
    const std::string text =
        io::read_file(require_input(cfg.paths.instructions, "--instructions"));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(cfg.paths.instructions + ": " + e.what());
    }
    if (!j.is_array() || j.empty()) {
      throw DataError(cfg.paths.instructions +
                      ": expected a non-empty array of instruction sets");
    }
    std::vector<DomainInstructionSet> sets;
    for (const auto& item : j) {
      sets.push_back(DomainInstructionSet::from_json(item));
    }
    return sets;
  }
  auto sets = compression::builtin_domains();
  for (auto& s : sets) s.style = cfg.style;
  return sets;
}

const RenderedInstruction& rendered_for(
    std::span<const RenderedInstruction> rendered, const std::string& domain) {
  for (const RenderedInstruction& r : rendered) {
    if (r.domain == domain) return r;
  }
  throw DataError("no instruction for domain '" + domain + "'");
}

model::TransformerLM load_model(const RunConfig& cfg) {
  return model::load_checkpoint(
      require_input(cfg.paths.checkpoint, "--checkpoint"));
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const corpus::SyntheticCorpus data =
      corpus::generate_synthetic(cfg.synthetic, cfg.seed);
  const std::filesystem::path dir = or_default(cfg.paths.out_dir, ".");
  std::filesystem::create_directories(dir);

  corpus::write_jsonl<TrainExample>((dir / "train.jsonl").string(),
                                    data.train);
  corpus::write_jsonl<CorpusRecord>((dir / "claims.jsonl").string(),
                                    data.eval_claims);
  corpus::write_jsonl<CorpusRecord>((dir / "references.jsonl").string(),
                                    data.eval_references);
  eval::write_qrels((dir / "qrels.txt").string(), data.qrels);

  const nlohmann::json manifest{
      {"version", 1},
      {"seed", cfg.seed},
      {"synthetic", cfg.synthetic.to_json()},
      {"files",
       {{"train", "train.jsonl"},
        {"claims", "claims.jsonl"},
        {"references", "references.jsonl"},
        {"qrels", "qrels.txt"}}},
      {"counts",
       {{"train", data.train.size()},
        {"claims", data.eval_claims.size()},
        {"references", data.eval_references.size()},
        {"judged_queries", data.qrels.judgments.size()}}}};
  write_json_report((dir / "manifest.json").string(), manifest);

  out << "seed " << cfg.seed << ": wrote " << data.train.size()
      << " training examples, " << data.eval_claims.size() << " claims, "
      << data.eval_references.size() << " references to " << dir.string()
      << "\n";
}

void cmd_transform(const RunConfig& cfg, std::ostream& out) {
  const auto pairs =
      corpus::read_jsonl<QAPair>(require_input(cfg.paths.qa, "--qa"));
  const auto sets = load_instruction_sets(cfg);
  const auto examples = corpus::transform_qa(
      pairs, sets, cfg.train.negatives_per_example, cfg.seed);
  const std::string out_path = or_default(cfg.paths.train, "train.jsonl");
  corpus::write_jsonl<TrainExample>(out_path, examples);
  out << "transformed " << pairs.size() << " question-answer pairs into "
      << examples.size() << " training examples ("
      << cfg.train.negatives_per_example << " negatives each) -> " << out_path
      << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto examples = corpus::read_jsonl<TrainExample>(
      require_input(cfg.paths.train, "--train"));

  model::TransformerLM lm =
      cfg.paths.init_from.empty()
          ? model::TransformerLM(cfg.model, cfg.lora, cfg.seed)
          : model::load_checkpoint(
                require_input(cfg.paths.init_from, "--init-from"));

  training::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  const training::TrainReport report = training::train(lm, examples, tcfg);

  const std::string ckpt = or_default(cfg.paths.checkpoint, "model.ckpt");
  model::save_checkpoint(lm, ckpt);
  if (!cfg.paths.report.empty()) {
    training::write_train_report(cfg.paths.report, report, tcfg);
  }

  out << "trained " << report.steps.size() << " optimizer steps (planned "
      << report.planned_steps << ") on " << examples.size() << " examples\n";
  if (!report.steps.empty()) {
    const auto& last = report.steps.back();
    char line[128];
    std::snprintf(line, sizeof(line),
                  "final step: total %.6f (l1 %.6f, l2 %.6f)\n", last.total,
                  last.l1, last.l2);
    out << line;
  }
  out << "checkpoint: " << ckpt << " (fingerprint "
      << hex_fingerprint(lm.fingerprint()) << ")\n";
}

void cmd_embed(const RunConfig& cfg, std::ostream& out) {
  const auto records = corpus::read_jsonl<CorpusRecord>(
      require_input(cfg.paths.records, "--in"));
  if (records.empty()) throw DataError("nothing to embed");
  model::TransformerLM lm = load_model(cfg);
  const auto sets = load_instruction_sets(cfg);
  const auto claim_side =
      arm_instructions(cfg.instruction_arm, sets, Role::kClaim);
  const auto ref_side =
      arm_instructions(cfg.instruction_arm, sets, Role::kReference);
  const SuffixSpec suffix{cfg.train.suffix};

  std::vector<compression::AssembledPrompt> prompts;
  prompts.reserve(records.size());
  for (const CorpusRecord& r : records) {
    r.validate();
    const auto& side = r.role == Role::kClaim ? claim_side : ref_side;
    prompts.push_back(compression::assemble(r.id, r.text,
                                            rendered_for(side, r.domain),
                                            suffix,
                                            lm.config().max_seq_len));
  }
  const auto embedded = compression::embed_batch(lm, prompts);
  const std::string out_path =
      or_default(cfg.paths.embeddings, "embeddings.txt");
  compression::write_embeddings(out_path, embedded);
  out << "embedded " << embedded.size() << " records (d="
      << lm.config().d_model << ", fingerprint "
      << hex_fingerprint(lm.fingerprint()) << ") -> " << out_path << "\n";
}

void cmd_index(const RunConfig& cfg, std::ostream& out) {
  const auto references = corpus::read_jsonl<CorpusRecord>(
      require_input(cfg.paths.references, "--references"));
  model::TransformerLM lm = load_model(cfg);
  const auto sets = load_instruction_sets(cfg);
  const SuffixSpec suffix{cfg.train.suffix};
  const linking::ReferenceIndex index = linking::build_index(
      lm, references,
      arm_instructions(cfg.instruction_arm, sets, Role::kReference), suffix);
  const std::string out_path = or_default(cfg.paths.index, "index.bin");
  linking::save_index(index, out_path);
  out << "indexed " << index.size() << " references (d="
      << index.embeddings.cols() << ", domain " << index.domain
      << ", fingerprint " << hex_fingerprint(index.fingerprint) << ") -> "
      << out_path << "\n";
}

void cmd_link(const RunConfig& cfg, std::ostream& out) {
  const auto claims = corpus::read_jsonl<CorpusRecord>(
      require_input(cfg.paths.claims, "--claims"));
  model::TransformerLM lm = load_model(cfg);
  const linking::ReferenceIndex index =
      linking::load_index(require_input(cfg.paths.index, "--index"));
  if (index.fingerprint != lm.fingerprint()) {
    throw DataError("index " + cfg.paths.index + " was built by model " +
                    hex_fingerprint(index.fingerprint) +
                    ", but the checkpoint is " +
                    hex_fingerprint(lm.fingerprint()));
  }
  const auto sets = load_instruction_sets(cfg);
  const SuffixSpec suffix{cfg.train.suffix};
  eval::Run run = linking::batch_link(
      lm, index, claims,
      arm_instructions(cfg.instruction_arm, sets, Role::kClaim), cfg.k,
      suffix);
  run.tag = cfg.tag;
  const std::string out_path = or_default(cfg.paths.run, "run.txt");
  eval::write_run(out_path, run);
  out << "linked " << claims.size() << " claims against " << index.size()
      << " references (top " << cfg.k << ") -> " << out_path << "\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const eval::Run run =
      eval::read_run(require_input(cfg.paths.run, "--run"));
  const eval::Qrels qrels =
      eval::read_qrels(require_input(cfg.paths.qrels, "--qrels"));
  const eval::EvalReport report = eval::evaluate(run, qrels, cfg.ks);
  out << report.to_text();
  if (!cfg.paths.report.empty()) {
    write_json_report(cfg.paths.report,
                      nlohmann::json{{"version", 1},
                                     {"config", cfg.to_json()},
                                     {"metrics", report.to_json()}});
  }
}

void cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  AblationConfig acfg = cfg.ablation;
  acfg.seed = cfg.seed;
  const AblationReport report = run_ablation(acfg);

  const std::filesystem::path dir = or_default(cfg.paths.out_dir, "ablation");
  std::filesystem::create_directories(dir);
  write_json_report((dir / "report.json").string(), report.to_json());
  io::write_file_atomic((dir / "report.txt").string(),
                        report.to_text(/*with_timing=*/false));
  for (const ArmResult& arm : report.arms) {
    eval::Run run = arm.run;
    run.tag = arm.name;
    eval::write_run((dir / (arm.name + ".run.txt")).string(), run);
  }

  out << report.to_text(/*with_timing=*/true);
  out << "\nartifacts in " << dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// Flag wiring

template <typename T>
struct Flag {
  T value{};
  CLI::Option* opt = nullptr;

  explicit operator bool() const { return opt != nullptr && opt->count() > 0; }
  void apply(T& target) const {
    if (*this) target = value;
  }
};

struct PathFlags {
  Flag<std::string> qa, train, records, claims, references, qrels, checkpoint,
      init_from, index, run, report, embeddings, instructions, out_dir;

  void apply(Paths& p) const {
    qa.apply(p.qa);
    train.apply(p.train);
    records.apply(p.records);
    claims.apply(p.claims);
    references.apply(p.references);
    qrels.apply(p.qrels);
    checkpoint.apply(p.checkpoint);
    init_from.apply(p.init_from);
    index.apply(p.index);
    run.apply(p.run);
    report.apply(p.report);
    embeddings.apply(p.embeddings);
    instructions.apply(p.instructions);
    out_dir.apply(p.out_dir);
  }
};

struct SynthFlags {
  Flag<int64_t> domains, train_per_domain, eval_per_domain, tokens_per_text,
      vocab_size, negatives;

  void add(CLI::App* sub) {
    domains.opt = sub->add_option("--domains", domains.value,
                                  "number of domains");
    train_per_domain.opt =
        sub->add_option("--train-per-domain", train_per_domain.value,
                        "training pairs per domain");
    eval_per_domain.opt =
        sub->add_option("--eval-per-domain", eval_per_domain.value,
                        "evaluation pairs per domain");
    tokens_per_text.opt =
        sub->add_option("--tokens-per-text", tokens_per_text.value,
                        "pseudo-words per text");
    vocab_size.opt = sub->add_option("--vocab-size", vocab_size.value,
                                     "pseudo-word vocabulary size");
    negatives.opt = sub->add_option("--negatives", negatives.value,
                                    "sampled negatives per example");
  }

  void apply(corpus::SyntheticSpec& spec) const {
    domains.apply(spec.n_domains);
    train_per_domain.apply(spec.train_per_domain);
    eval_per_domain.apply(spec.eval_per_domain);
    tokens_per_text.apply(spec.tokens_per_text);
    vocab_size.apply(spec.vocab_size);
    negatives.apply(spec.negatives_per_example);
  }
};

struct ModelFlags {
  Flag<int64_t> d_model, n_layers, n_heads, d_ff, max_seq_len;
  Flag<int64_t> lora_rank;
  Flag<double> lora_alpha, lora_dropout;

  void add(CLI::App* sub) {
    d_model.opt = sub->add_option("--d-model", d_model.value,
                                  "embedding width");
    n_layers.opt = sub->add_option("--n-layers", n_layers.value,
                                   "transformer layers");
    n_heads.opt = sub->add_option("--n-heads", n_heads.value,
                                  "attention heads");
    d_ff.opt = sub->add_option("--d-ff", d_ff.value, "feed-forward width");
    max_seq_len.opt = sub->add_option("--max-seq-len", max_seq_len.value,
                                      "maximum prompt length");
    lora_rank.opt = sub->add_option("--lora-rank", lora_rank.value,
                                    "adapter rank");
    lora_alpha.opt = sub->add_option("--lora-alpha", lora_alpha.value,
                                     "adapter scaling numerator");
    lora_dropout.opt = sub->add_option("--lora-dropout", lora_dropout.value,
                                       "adapter dropout probability");
  }

  void apply(RunConfig& cfg) const {
    d_model.apply(cfg.model.d_model);
    n_layers.apply(cfg.model.n_layers);
    n_heads.apply(cfg.model.n_heads);
    d_ff.apply(cfg.model.d_ff);
    max_seq_len.apply(cfg.model.max_seq_len);
    lora_rank.apply(cfg.lora.rank);
    lora_alpha.apply(cfg.lora.alpha);
    lora_dropout.apply(cfg.lora.dropout);
  }
};

struct TrainFlags {
  Flag<double> alpha, tau, lr, warmup_ratio, max_grad_norm;
  Flag<int64_t> epochs, batch, accum, negatives;
  Flag<bool> in_batch;
  Flag<std::string> suffix;

  void add(CLI::App* sub) {
    alpha.opt = sub->add_option("--alpha", alpha.value,
                                "generative-view weight");
    tau.opt = sub->add_option("--tau", tau.value, "contrastive temperature");
    lr.opt = sub->add_option("--lr", lr.value, "peak learning rate");
    epochs.opt = sub->add_option("--epochs", epochs.value, "training epochs");
    batch.opt = sub->add_option("--batch", batch.value, "micro-batch size");
    accum.opt = sub->add_option("--accum", accum.value,
                                "gradient accumulation window");
    warmup_ratio.opt = sub->add_option("--warmup-ratio", warmup_ratio.value,
                                       "warmup fraction of total steps");
    negatives.opt = sub->add_option("--train-negatives", negatives.value,
                                    "stored negatives used per example");
    in_batch.opt = sub->add_flag("--in-batch-negatives,!--no-in-batch-negatives",
                                 in_batch.value,
                                 "use other in-batch items as negatives");
    max_grad_norm.opt = sub->add_option("--max-grad-norm",
                                        max_grad_norm.value,
                                        "gradient clip (0 disables)");
    suffix.opt = sub->add_option("--suffix", suffix.value,
                                 "pooled prompt tail");
  }

  void apply(RunConfig& cfg) const {
    alpha.apply(cfg.train.alpha);
    tau.apply(cfg.train.tau);
    lr.apply(cfg.train.learning_rate);
    epochs.apply(cfg.train.epochs);
    batch.apply(cfg.train.batch_size);
    accum.apply(cfg.train.grad_accum);
    warmup_ratio.apply(cfg.train.warmup_ratio);
    negatives.apply(cfg.train.negatives_per_example);
    in_batch.apply(cfg.train.in_batch_negatives);
    max_grad_norm.apply(cfg.train.max_grad_norm);
    suffix.apply(cfg.train.suffix);
  }
};

struct StyleFlags {
  Flag<std::string> style, arm;

  void add(CLI::App* sub, bool with_arm) {
    style.opt = sub->add_option("--style", style.value,
                                "instruction wording: full or compact");
    if (with_arm) {
      arm.opt = sub->add_option("--instruction-arm", arm.value,
                                "instruction channel: task, fixed, or none");
    }
  }

  void apply(RunConfig& cfg) const {
    if (style) {
      cfg.style = compression::instruction_style_from_name(style.value);
    }
    if (arm) cfg.instruction_arm = instruction_arm_from_name(arm.value);
  }
};

uint64_t parse_seed_env(const char* text) {
  std::string s(text);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw UsageError("REFLINK_SEED must be an unsigned integer, got '" + s +
                     "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw UsageError("REFLINK_SEED is out of range: '" + s + "'");
  }
}

int run_impl(std::span<const std::string> args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"task-instructed embedding, linking, and retrieval evaluation",
               "reflink"};
  app.require_subcommand(1);

  Flag<std::string> config_path;
  config_path.opt = app.add_option(
      "--config", config_path.value,
      "JSON config file; flags override file values");
  Flag<uint64_t> seed;
  seed.opt = app.add_option(
      "--seed", seed.value,
      "global seed (REFLINK_SEED env overrides even this)");

  // synth ------------------------------------------------------------------
  CLI::App* synth = app.add_subcommand(
      "synth", "generate the seeded multi-domain synthetic corpus");
  SynthFlags synth_flags;
  synth_flags.add(synth);
  StyleFlags synth_style;
  synth_style.add(synth, /*with_arm=*/false);
  PathFlags synth_paths;
  synth_paths.out_dir.opt = synth->add_option(
      "--out-dir", synth_paths.out_dir.value, "output directory");

  // transform ----------------------------------------------------------------
  CLI::App* transform = app.add_subcommand(
      "transform", "turn question-answer pairs into training examples");
  PathFlags transform_paths;
  transform_paths.qa.opt = transform->add_option(
      "--qa", transform_paths.qa.value, "question-answer pairs (jsonl)");
  transform_paths.train.opt = transform->add_option(
      "--out", transform_paths.train.value, "training examples to write");
  transform_paths.instructions.opt = transform->add_option(
      "--instructions", transform_paths.instructions.value,
      "instruction-set file (json array)");
  StyleFlags transform_style;
  transform_style.add(transform, /*with_arm=*/false);
  Flag<int64_t> transform_negatives;
  transform_negatives.opt = transform->add_option(
      "--negatives", transform_negatives.value,
      "negatives sampled per example");

  // train --------------------------------------------------------------------
  CLI::App* train = app.add_subcommand("train",
                                       "finetune the adapters on examples");
  PathFlags train_paths;
  train_paths.train.opt = train->add_option(
      "--train", train_paths.train.value, "training examples (jsonl)");
  train_paths.checkpoint.opt = train->add_option(
      "--checkpoint-out", train_paths.checkpoint.value,
      "checkpoint to write (default model.ckpt)");
  train_paths.init_from.opt = train->add_option(
      "--init-from", train_paths.init_from.value,
      "checkpoint to start from (model flags ignored)");
  train_paths.report.opt = train->add_option(
      "--report", train_paths.report.value, "step-by-step report to write");
  ModelFlags train_model;
  train_model.add(train);
  TrainFlags train_train;
  train_train.add(train);

  // embed --------------------------------------------------------------------
  CLI::App* embed = app.add_subcommand(
      "embed", "write task-instructed embeddings for corpus records");
  PathFlags embed_paths;
  embed_paths.records.opt = embed->add_option(
      "--in", embed_paths.records.value, "corpus records (jsonl)");
  embed_paths.checkpoint.opt = embed->add_option(
      "--checkpoint", embed_paths.checkpoint.value, "model checkpoint");
  embed_paths.embeddings.opt = embed->add_option(
      "--out", embed_paths.embeddings.value, "embedding file to write");
  embed_paths.instructions.opt = embed->add_option(
      "--instructions", embed_paths.instructions.value,
      "instruction-set file (json array)");
  StyleFlags embed_style;
  embed_style.add(embed, /*with_arm=*/true);
  TrainFlags embed_train;  // only --suffix is meaningful here
  embed_train.suffix.opt = embed->add_option(
      "--suffix", embed_train.suffix.value, "pooled prompt tail");

  // index --------------------------------------------------------------------
  CLI::App* index = app.add_subcommand(
      "index", "embed references and freeze them into an index file");
  PathFlags index_paths;
  index_paths.references.opt = index->add_option(
      "--references", index_paths.references.value,
      "reference records (jsonl)");
  index_paths.checkpoint.opt = index->add_option(
      "--checkpoint", index_paths.checkpoint.value, "model checkpoint");
  index_paths.index.opt = index->add_option(
      "--out", index_paths.index.value, "index file to write");
  index_paths.instructions.opt = index->add_option(
      "--instructions", index_paths.instructions.value,
      "instruction-set file (json array)");
  StyleFlags index_style;
  index_style.add(index, /*with_arm=*/true);
  TrainFlags index_train;
  index_train.suffix.opt = index->add_option(
      "--suffix", index_train.suffix.value, "pooled prompt tail");

  // link ---------------------------------------------------------------------
  CLI::App* link = app.add_subcommand(
      "link", "rank indexed references for each claim");
  PathFlags link_paths;
  link_paths.claims.opt = link->add_option(
      "--claims", link_paths.claims.value, "claim records (jsonl)");
  link_paths.checkpoint.opt = link->add_option(
      "--checkpoint", link_paths.checkpoint.value, "model checkpoint");
  link_paths.index.opt = link->add_option(
      "--index", link_paths.index.value, "index file");
  link_paths.run.opt = link->add_option(
      "--out", link_paths.run.value, "ranked run file to write");
  link_paths.instructions.opt = link->add_option(
      "--instructions", link_paths.instructions.value,
      "instruction-set file (json array)");
  StyleFlags link_style;
  link_style.add(link, /*with_arm=*/true);
  Flag<int64_t> link_k;
  link_k.opt = link->add_option("--k", link_k.value,
                                "references returned per claim");
  Flag<std::string> link_tag;
  link_tag.opt = link->add_option("--tag", link_tag.value, "run tag");
  TrainFlags link_train;
  link_train.suffix.opt = link->add_option(
      "--suffix", link_train.suffix.value, "pooled prompt tail");

  // eval ---------------------------------------------------------------------
  CLI::App* evalc = app.add_subcommand(
      "eval", "score a run against judgments (NDCG/MAP at each cutoff)");
  PathFlags eval_paths;
  eval_paths.run.opt = evalc->add_option(
      "--run", eval_paths.run.value, "ranked run file");
  eval_paths.qrels.opt = evalc->add_option(
      "--qrels", eval_paths.qrels.value, "relevance judgments");
  eval_paths.report.opt = evalc->add_option(
      "--report", eval_paths.report.value, "JSON report to write");
  Flag<std::vector<int64_t>> eval_ks;
  eval_ks.opt = evalc
                    ->add_option("--k", eval_ks.value,
                                 "comma-separated cutoffs (default 10,20)")
                    ->delimiter(',');

  // ablate -------------------------------------------------------------------
  CLI::App* ablate = app.add_subcommand(
      "ablate",
      "train and score the five-arm instruction/objective comparison");
  PathFlags ablate_paths;
  ablate_paths.out_dir.opt = ablate->add_option(
      "--out-dir", ablate_paths.out_dir.value,
      "artifact directory (default ablation)");
  Flag<int64_t> ablate_k;
  ablate_k.opt = ablate->add_option("--k", ablate_k.value,
                                    "evaluation cutoff");

  // Let --seed/--config appear after the subcommand name too.
  for (CLI::App* sub :
       {synth, transform, train, embed, index, link, evalc, ablate}) {
    sub->fallthrough();
  }

  // ---------------------------------------------------------------------------
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("reflink");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  RunConfig cfg;
  if (config_path) {
    const std::string path = require_input(config_path.value, "--config");
    try {
      cfg = RunConfig::from_json(nlohmann::json::parse(io::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": " + e.what());
    }
  }
  seed.apply(cfg.seed);
  if (const char* env = std::getenv("REFLINK_SEED")) {
    cfg.seed = parse_seed_env(env);
  }

  if (app.got_subcommand(synth)) {
    synth_flags.apply(cfg.synthetic);
    if (synth_style.style) {
      cfg.synthetic.style = compression::instruction_style_from_name(
          synth_style.style.value);
    }
    synth_paths.apply(cfg.paths);
    cmd_synth(cfg, out);
  } else if (app.got_subcommand(transform)) {
    transform_paths.apply(cfg.paths);
    transform_style.apply(cfg);
    transform_negatives.apply(cfg.train.negatives_per_example);
    cmd_transform(cfg, out);
  } else if (app.got_subcommand(train)) {
    train_paths.apply(cfg.paths);
    train_model.apply(cfg);
    train_train.apply(cfg);
    cmd_train(cfg, out);
  } else if (app.got_subcommand(embed)) {
    embed_paths.apply(cfg.paths);
    embed_style.apply(cfg);
    embed_train.suffix.apply(cfg.train.suffix);
    cmd_embed(cfg, out);
  } else if (app.got_subcommand(index)) {
    index_paths.apply(cfg.paths);
    index_style.apply(cfg);
    index_train.suffix.apply(cfg.train.suffix);
    cmd_index(cfg, out);
  } else if (app.got_subcommand(link)) {
    link_paths.apply(cfg.paths);
    link_style.apply(cfg);
    link_k.apply(cfg.k);
    link_tag.apply(cfg.tag);
    link_train.suffix.apply(cfg.train.suffix);
    cmd_link(cfg, out);
  } else if (app.got_subcommand(evalc)) {
    eval_paths.apply(cfg.paths);
    eval_ks.apply(cfg.ks);
    cmd_eval(cfg, out);
  } else if (app.got_subcommand(ablate)) {
    ablate_paths.apply(cfg.paths);
    ablate_k.apply(cfg.ablation.k);
    cmd_ablate(cfg, out);
  }
  return 0;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out,
        std::ostream& err) {
  try {
    return run_impl(args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace url::cli
