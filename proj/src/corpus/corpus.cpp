#include "url/corpus/corpus.hpp"

#include <algorithm>
#include <set>

#include "url/rng.hpp"

namespace url::corpus {

using compression::DomainInstructionSet;
using compression::Role;
using training::TrainExample;

void QAPair::validate() const {
  if (question.empty()) throw DataError("QA pair with empty question");
  if (answer.empty()) throw DataError("QA pair with empty answer");
  if (domain.empty()) throw DataError("QA pair with empty domain label");
}

nlohmann::json QAPair::to_json() const {
  return nlohmann::json{
      {"question", question}, {"answer", answer}, {"domain", domain}};
}

QAPair QAPair::from_json(const nlohmann::json& j) {
  QAPair p;
  try {
    p.question = j.at("question").get<std::string>();
    p.answer = j.at("answer").get<std::string>();
    p.domain = j.at("domain").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad QA record: ") + e.what());
  }
  p.validate();
  return p;
}

void CorpusRecord::validate() const {
  if (id.empty()) throw DataError("corpus record with empty id");
  if (text.empty()) throw DataError("corpus record '" + id + "' has no text");
}

nlohmann::json CorpusRecord::to_json() const {
  return nlohmann::json{{"id", id},
                        {"text", text},
                        {"role", compression::role_name(role)},
                        {"domain", domain}};
}

CorpusRecord CorpusRecord::from_json(const nlohmann::json& j) {
  CorpusRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.role = compression::role_from_name(j.at("role").get<std::string>());
    r.domain = j.at("domain").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad corpus record: ") + e.what());
  }
  r.validate();
  return r;
}

std::string generation_prompt_c2r(const std::string& domain) {
  return "According to the above text and instructions, these common "
         "questions in the " +
         domain + " domain can retrieve the following explanations:";
}

std::string generation_prompt_r2c(const std::string& domain) {
  return "According to the above text and instructions, these explanations "
         "in the " +
         domain + " domain can be matched with the following common "
                  "questions:";
}

std::vector<TrainExample> transform_qa(
    std::span<const QAPair> pairs,
    std::span<const DomainInstructionSet> instructions, int64_t n_neg,
    uint64_t seed) {
  if (n_neg < 0) {
    throw DataError("negatives per example must be >= 0, got " +
                    std::to_string(n_neg));
  }
  // Render each domain's two instructions once; unknown domains fail here,
  // before any example is built.
  std::map<std::string, std::pair<std::string, std::string>> rendered;
  for (const QAPair& p : pairs) {
    p.validate();
    if (rendered.count(p.domain)) continue;
    const DomainInstructionSet& set =
        compression::find_domain(instructions, p.domain);
    rendered[p.domain] = {set.rendered(Role::kClaim).text,
                          set.rendered(Role::kReference).text};
  }

  RngStream root(seed, "qa-transform");
  std::vector<TrainExample> out;
  out.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const QAPair& p = pairs[i];
    TrainExample ex;
    ex.id = "qa-" + std::to_string(i);
    ex.domain = p.domain;
    ex.claim = p.question;
    ex.positive = p.answer;
    const auto& [claim_instr, ref_instr] = rendered.at(p.domain);
    ex.claim_instruction = claim_instr;
    ex.reference_instruction = ref_instr;
    ex.c2r_prompt = generation_prompt_c2r(p.domain);
    ex.r2c_prompt = generation_prompt_r2c(p.domain);

    if (n_neg > 0) {
      std::vector<size_t> candidates;
      candidates.reserve(pairs.size());
      for (size_t j = 0; j < pairs.size(); ++j) {
        if (pairs[j].answer != p.answer) candidates.push_back(j);
      }
      if (static_cast<int64_t>(candidates.size()) < n_neg) {
        throw DataError("example " + std::to_string(i) + " needs " +
                        std::to_string(n_neg) + " negatives but only " +
                        std::to_string(candidates.size()) +
                        " distinct other answers exist");
      }
      // Partial Fisher-Yates: the first n_neg slots become a uniform draw
      // without replacement, independent per example.
      RngStream rng = root.child(static_cast<uint64_t>(i));
      for (int64_t k = 0; k < n_neg; ++k) {
        const size_t j =
            k + static_cast<size_t>(rng.next_below(candidates.size() - k));
        std::swap(candidates[k], candidates[j]);
        ex.negatives.push_back(pairs[candidates[k]].answer);
      }
    }
    ex.validate();
    out.push_back(std::move(ex));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (n_domains < 1) {
    throw DataError("synthetic corpus needs at least one domain");
  }
  if (train_per_domain < 1 || eval_per_domain < 1) {
    throw DataError("synthetic corpus needs at least one train and one eval "
                    "item per domain");
  }
  if (tokens_per_text < 1) {
    throw DataError("synthetic texts need at least one token");
  }
  if (negatives_per_example < 0) {
    throw DataError("negatives per example must be >= 0");
  }
  if (vocab_size < 2 || vocab_size < tokens_per_text) {
    throw DataError(
        "vocabulary budget too small: need at least max(2, tokens_per_text) "
        "= " +
        std::to_string(std::max<int64_t>(2, tokens_per_text)) +
        " distinct tokens, got " + std::to_string(vocab_size));
  }
}

nlohmann::json SyntheticSpec::to_json() const {
  return nlohmann::json{
      {"n_domains", n_domains},
      {"train_per_domain", train_per_domain},
      {"eval_per_domain", eval_per_domain},
      {"tokens_per_text", tokens_per_text},
      {"vocab_size", vocab_size},
      {"negatives_per_example", negatives_per_example},
      {"style", compression::instruction_style_name(style)}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.n_domains = j.value("n_domains", s.n_domains);
    s.train_per_domain = j.value("train_per_domain", s.train_per_domain);
    s.eval_per_domain = j.value("eval_per_domain", s.eval_per_domain);
    s.tokens_per_text = j.value("tokens_per_text", s.tokens_per_text);
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    s.negatives_per_example =
        j.value("negatives_per_example", s.negatives_per_example);
    s.style = compression::instruction_style_from_name(
        j.value("style", compression::instruction_style_name(s.style)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<DomainInstructionSet> synthetic_instruction_sets(
    const SyntheticSpec& spec) {
  spec.validate();
  std::vector<DomainInstructionSet> sets = compression::builtin_domains();
  if (spec.n_domains < static_cast<int64_t>(sets.size())) {
    sets.resize(spec.n_domains);
  }
  for (int64_t d = static_cast<int64_t>(sets.size()); d < spec.n_domains;
       ++d) {
    DomainInstructionSet extra;
    extra.domain = "domain" + std::to_string(d);
    extra.claim_description = "type-" + std::to_string(d) + " inquiry";
    extra.reference_description = "type-" + std::to_string(d) + " entry";
    sets.push_back(std::move(extra));
  }
  for (DomainInstructionSet& s : sets) s.style = spec.style;
  return sets;
}

std::vector<std::string> synthetic_vocabulary(int64_t n) {
  if (n < 0) throw DataError("vocabulary size must be >= 0");
  static const char* kConsonants = "bcdfghjklmnpqrstvwxz";
  static const char* kVowels = "aeiou";
  auto syllable = [](int64_t k) {
    std::string s;
    s += kConsonants[k / 5];
    s += kVowels[k % 5];
    return s;
  };
  std::vector<std::string> words;
  words.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    // Base-100 syllable digits, at least two of them; words of different
    // lengths cannot collide and equal-length words differ in some digit.
    std::vector<int64_t> digits;
    int64_t x = i;
    do {
      digits.push_back(x % 100);
      x /= 100;
    } while (x > 0);
    while (digits.size() < 2) digits.push_back(0);
    std::string w;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
      w += syllable(*it);
    }
    words.push_back(std::move(w));
  }
  return words;
}

namespace {

// One bijective, fixed-point-free permutation of [0, vocab) per domain.
std::vector<std::vector<int64_t>> rule_permutations(const SyntheticSpec& spec,
                                                    uint64_t seed) {
  spec.validate();
  const int64_t v = spec.vocab_size;
  RngStream cipher_root = RngStream(seed, "synthetic").child("cipher");
  std::vector<std::vector<int64_t>> perms;
  perms.reserve(spec.n_domains);
  for (int64_t d = 0; d < spec.n_domains; ++d) {
    std::vector<int64_t> perm(v);
    for (int64_t i = 0; i < v; ++i) perm[i] = i;
    RngStream rng = cipher_root.child(static_cast<uint64_t>(d));
    rng.shuffle(perm);
    // Remove fixed points by swapping with the next slot: both slots end up
    // displaced and the array stays a permutation.
    for (int64_t i = 0; i < v; ++i) {
      if (perm[i] == i) std::swap(perm[i], perm[(i + 1) % v]);
    }
    perms.push_back(std::move(perm));
  }
  for (size_t a = 0; a < perms.size(); ++a) {
    for (size_t b = a + 1; b < perms.size(); ++b) {
      if (perms[a] == perms[b]) {
        throw DataError(
            "vocabulary budget too small to keep the domain rules distinct "
            "(domains " +
            std::to_string(a) + " and " + std::to_string(b) +
            " drew the same substitution over " + std::to_string(v) +
            " tokens)");
      }
    }
  }
  return perms;
}

}  // namespace

std::vector<std::map<std::string, std::string>> synthetic_rules(
    const SyntheticSpec& spec, uint64_t seed) {
  const auto vocab = synthetic_vocabulary(spec.vocab_size);
  const auto perms = rule_permutations(spec, seed);
  std::vector<std::map<std::string, std::string>> rules;
  rules.reserve(perms.size());
  for (const auto& perm : perms) {
    std::map<std::string, std::string> rule;
    for (size_t i = 0; i < perm.size(); ++i) {
      rule[vocab[i]] = vocab[perm[i]];
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  const auto sets = synthetic_instruction_sets(spec);
  const auto vocab = synthetic_vocabulary(spec.vocab_size);
  const auto perms = rule_permutations(spec, seed);

  RngStream root(seed, "synthetic");
  RngStream draw = root.child("claims");
  const int64_t per_domain = spec.train_per_domain + spec.eval_per_domain;

  // The same claim texts appear in every domain; each domain's substitution
  // produces a different linked reference, so the claim alone never
  // determines the right reference.
  std::vector<std::string> claim_texts;
  std::vector<std::vector<std::string>> ref_texts(spec.n_domains);
  std::set<std::string> used;
  for (int64_t item = 0; item < per_domain; ++item) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      std::vector<int64_t> tokens;
      while (static_cast<int64_t>(tokens.size()) < spec.tokens_per_text) {
        const int64_t t =
            static_cast<int64_t>(draw.next_below(spec.vocab_size));
        if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) {
          tokens.push_back(t);
        }
      }
      auto join = [&](const std::vector<int64_t>& ids) {
        std::string text;
        for (size_t i = 0; i < ids.size(); ++i) {
          if (i > 0) text += ' ';
          text += vocab[ids[i]];
        }
        return text;
      };
      const std::string claim = join(tokens);
      std::vector<std::string> refs;
      bool token_overlap = false;
      for (int64_t d = 0; d < spec.n_domains; ++d) {
        std::vector<int64_t> mapped;
        for (int64_t t : tokens) mapped.push_back(perms[d][t]);
        // A linked pair must share no surface tokens: the substitution has
        // no fixed points, but a token may still map onto another token of
        // the same claim, so such draws are rejected.
        for (int64_t m : mapped) {
          if (std::find(tokens.begin(), tokens.end(), m) != tokens.end()) {
            token_overlap = true;
          }
        }
        refs.push_back(join(mapped));
      }
      if (token_overlap) continue;
      std::set<std::string> fresh;
      fresh.insert(claim);
      for (const std::string& r : refs) fresh.insert(r);
      bool clash = fresh.size() != refs.size() + 1;
      for (const std::string& t : fresh) {
        if (used.count(t)) clash = true;
      }
      if (clash) continue;
      used.insert(fresh.begin(), fresh.end());
      claim_texts.push_back(claim);
      for (int64_t d = 0; d < spec.n_domains; ++d) {
        ref_texts[d].push_back(refs[d]);
      }
      placed = true;
    }
    if (!placed) {
      throw DataError(
          "vocabulary budget too small: could not draw " +
          std::to_string(per_domain) +
          " globally distinct claim/reference texts from " +
          std::to_string(spec.vocab_size) + " tokens");
    }
  }

  SyntheticCorpus corpus;
  std::vector<QAPair> pairs;
  for (int64_t d = 0; d < spec.n_domains; ++d) {
    for (int64_t item = 0; item < spec.train_per_domain; ++item) {
      pairs.push_back(
          QAPair{claim_texts[item], ref_texts[d][item], sets[d].domain});
    }
  }
  const uint64_t neg_seed = root.child("negatives").next_u64();
  corpus.train =
      transform_qa(pairs, sets, spec.negatives_per_example, neg_seed);

  for (int64_t d = 0; d < spec.n_domains; ++d) {
    for (int64_t item = spec.train_per_domain; item < per_domain; ++item) {
      const std::string base = sets[d].domain + "-";
      const std::string cid = base + "c" + std::to_string(item);
      const std::string rid = base + "r" + std::to_string(item);
      corpus.eval_claims.push_back(CorpusRecord{
          cid, claim_texts[item], Role::kClaim, sets[d].domain});
      corpus.eval_references.push_back(CorpusRecord{
          rid, ref_texts[d][item], Role::kReference, sets[d].domain});
      corpus.qrels.add(cid, rid, 1);
    }
  }
  return corpus;
}

}  // namespace url::corpus
