#include "url/linking/linking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "url/errors.hpp"
#include "url/io/atomic_file.hpp"
#include "url/io/bytes.hpp"
#include "url/numeric/kernels.hpp"

namespace url::linking {

using compression::DomainInstructionSet;
using compression::Embedding;
using compression::RenderedInstruction;
using compression::Role;
using compression::SuffixSpec;
using corpus::CorpusRecord;
using numeric::Tensor;

namespace {

// One rendered instruction per domain, checked for the expected role.
std::map<std::string, const RenderedInstruction*> by_domain(
    std::span<const RenderedInstruction> rendered, Role required) {
  std::map<std::string, const RenderedInstruction*> out;
  for (const RenderedInstruction& r : rendered) {
    if (r.role != required) {
      throw DataError("instruction for domain '" + r.domain + "' has role " +
                      compression::role_name(r.role) + ", need " +
                      compression::role_name(required));
    }
    if (!out.emplace(r.domain, &r).second) {
      throw DataError("duplicate instruction for domain '" + r.domain + "'");
    }
  }
  return out;
}

const RenderedInstruction& instruction_for(
    const std::map<std::string, const RenderedInstruction*>& table,
    const std::string& domain) {
  const auto it = table.find(domain);
  if (it == table.end()) {
    throw DataError("no instruction for domain '" + domain + "'");
  }
  return *it->second;
}

std::vector<RenderedInstruction> render_all(
    std::span<const DomainInstructionSet> instructions,
    std::span<const CorpusRecord> records, Role role) {
  std::set<std::string> domains;
  for (const CorpusRecord& r : records) domains.insert(r.domain);
  std::vector<RenderedInstruction> rendered;
  rendered.reserve(domains.size());
  for (const std::string& d : domains) {
    rendered.push_back(
        compression::find_domain(instructions, d).rendered(role));
  }
  return rendered;
}

std::string common_domain(std::span<const CorpusRecord> records) {
  std::string domain = records.empty() ? std::string() : records[0].domain;
  for (const CorpusRecord& r : records) {
    if (r.domain != domain) return "mixed";
  }
  return domain;
}

}  // namespace

void ReferenceIndex::validate() const {
  const int64_t n = size();
  if (embeddings.empty() ? n != 0 : embeddings.rows() != n) {
    throw DataError("reference index has " + std::to_string(n) +
                    " ids but " +
                    std::to_string(embeddings.empty() ? 0 : embeddings.rows()) +
                    " embedding rows");
  }
  std::set<std::string> seen;
  for (const std::string& id : ids) {
    if (id.empty()) throw DataError("reference index holds an empty id");
    if (!seen.insert(id).second) {
      throw DataError("duplicate reference id '" + id + "' in index");
    }
  }
  if (n == 0) return;
  if (!embeddings.all_finite()) {
    throw NumericError("reference index holds non-finite values");
  }
  const int64_t d = embeddings.cols();
  for (int64_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      sq += embeddings.at(r, c) * embeddings.at(r, c);
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
      throw NumericError("index row for '" + ids[r] +
                         "' is not unit-norm (|v| = " + std::to_string(
                             std::sqrt(sq)) + ")");
    }
  }
}

ReferenceIndex build_index(model::TransformerLM& model,
                           std::span<const CorpusRecord> references,
                           std::span<const RenderedInstruction> rendered,
                           const SuffixSpec& suffix) {
  if (references.empty()) {
    throw DataError("reference index needs at least one reference");
  }
  const auto table = by_domain(rendered, Role::kReference);
  std::set<std::string> seen;
  std::vector<compression::AssembledPrompt> prompts;
  prompts.reserve(references.size());
  for (const CorpusRecord& r : references) {
    r.validate();
    if (r.role != Role::kReference) {
      throw DataError("record '" + r.id + "' has role " +
                      compression::role_name(r.role) +
                      "; an index holds references");
    }
    if (!seen.insert(r.id).second) {
      throw DataError("duplicate reference id '" + r.id + "'");
    }
    prompts.push_back(compression::assemble(r.id, r.text,
                                            instruction_for(table, r.domain),
                                            suffix,
                                            model.config().max_seq_len));
  }
  const std::vector<Embedding> embedded =
      compression::embed_batch(model, prompts);

  ReferenceIndex index;
  const int64_t d = static_cast<int64_t>(embedded[0].vec.size());
  index.embeddings =
      Tensor::zeros({static_cast<int64_t>(embedded.size()), d});
  for (size_t i = 0; i < embedded.size(); ++i) {
    index.ids.push_back(embedded[i].id);
    std::copy(embedded[i].vec.begin(), embedded[i].vec.end(),
              index.embeddings.data() + static_cast<int64_t>(i) * d);
  }
  index.domain = common_domain(references);
  index.fingerprint = model.fingerprint();
  index.validate();
  return index;
}

ReferenceIndex build_index(model::TransformerLM& model,
                           std::span<const CorpusRecord> references,
                           std::span<const DomainInstructionSet> instructions,
                           const SuffixSpec& suffix) {
  const auto rendered =
      render_all(instructions, references, Role::kReference);
  return build_index(model, references, rendered, suffix);
}

std::vector<LinkResult> query(const ReferenceIndex& index,
                              const Embedding& claim, int64_t k) {
  if (k < 1) {
    throw DataError("query needs k >= 1, got " + std::to_string(k));
  }
  double sq = 0.0;
  for (double v : claim.vec) sq += v * v;
  if (std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
    throw NumericError("claim embedding '" + claim.id +
                       "' is not unit-norm");
  }
  const int64_t n = index.size();
  if (n == 0) return {};
  const int64_t d = index.embeddings.cols();
  if (static_cast<int64_t>(claim.vec.size()) != d) {
    throw ShapeError("claim embedding has " +
                     std::to_string(claim.vec.size()) +
                     " dimensions, index rows have " + std::to_string(d));
  }

  std::vector<double> scores(n);
  numeric::kernels::matmul_nt(index.embeddings.data(), claim.vec.data(),
                              scores.data(), n, d, /*n=*/1,
                              /*accumulate=*/false);

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.ids[a] < index.ids[b];
  });

  std::vector<LinkResult> results;
  const int64_t take = std::min(k, n);
  results.reserve(take);
  for (int64_t i = 0; i < take; ++i) {
    results.push_back(LinkResult{
        index.ids[order[i]],
        std::clamp(scores[order[i]], -1.0, 1.0), i + 1});
  }
  return results;
}

eval::Run batch_link(model::TransformerLM& model, const ReferenceIndex& index,
                     std::span<const CorpusRecord> claims,
                     std::span<const RenderedInstruction> rendered, int64_t k,
                     const SuffixSpec& suffix) {
  const auto table = by_domain(rendered, Role::kClaim);
  eval::Run run;
  for (const CorpusRecord& c : claims) {
    c.validate();
    if (c.role != Role::kClaim) {
      throw DataError("record '" + c.id + "' has role " +
                      compression::role_name(c.role) +
                      "; linking starts from claims");
    }
    std::vector<LinkResult> links;
    try {
      const Embedding e = compression::embed(
          model,
          compression::assemble(c.id, c.text,
                                instruction_for(table, c.domain), suffix,
                                model.config().max_seq_len));
      links = query(index, e, k);
    } catch (const DataError& e) {
      throw DataError("claim '" + c.id + "': " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("claim '" + c.id + "': " + e.what());
    }
    if (links.empty()) continue;
    std::vector<eval::RunEntry> entries;
    entries.reserve(links.size());
    for (const LinkResult& l : links) {
      entries.push_back(eval::RunEntry{l.reference_id, l.score});
    }
    run.add_ranking(c.id, std::move(entries));
  }
  return run;
}

eval::Run batch_link(model::TransformerLM& model, const ReferenceIndex& index,
                     std::span<const CorpusRecord> claims,
                     std::span<const DomainInstructionSet> instructions,
                     int64_t k, const SuffixSpec& suffix) {
  const auto rendered = render_all(instructions, claims, Role::kClaim);
  return batch_link(model, index, claims, rendered, k, suffix);
}

namespace {

constexpr char kIndexMagic[8] = {'R', 'F', 'L', 'K', 'I', 'N', 'D', 'X'};
constexpr uint32_t kIndexVersion = 1;

}  // namespace

void save_index(const ReferenceIndex& index, const std::string& path) {
  index.validate();
  if (index.size() == 0) {
    throw DataError("refusing to save an empty reference index");
  }
  std::string out;
  out.append(kIndexMagic, sizeof(kIndexMagic));
  io::put<uint32_t>(out, kIndexVersion);
  io::put<uint64_t>(out, static_cast<uint64_t>(index.size()));
  io::put<uint64_t>(out, static_cast<uint64_t>(index.embeddings.cols()));
  io::put<uint64_t>(out, index.fingerprint);
  io::put<uint64_t>(out, index.domain.size());
  out.append(index.domain);
  for (const std::string& id : index.ids) {
    io::put<uint64_t>(out, id.size());
    out.append(id);
  }
  const auto& vals = index.embeddings.values();
  out.append(reinterpret_cast<const char*>(vals.data()),
             vals.size() * sizeof(double));
  io::write_file_atomic(path, out);
}

ReferenceIndex load_index(const std::string& path) {
  const std::string data = io::read_file(path);
  io::ByteReader in(data, "index " + path);
  if (in.get_str(sizeof(kIndexMagic)) !=
      std::string(kIndexMagic, sizeof(kIndexMagic))) {
    throw DataError("not a reference index file: " + path);
  }
  const uint32_t version = in.get<uint32_t>();
  if (version != kIndexVersion) {
    throw DataError("unsupported index version " + std::to_string(version) +
                    " in " + path);
  }
  const uint64_t n = in.get<uint64_t>();
  const uint64_t d = in.get<uint64_t>();
  if (n == 0 || d == 0) {
    throw DataError("index " + path + " declares an empty matrix");
  }
  ReferenceIndex index;
  index.fingerprint = in.get<uint64_t>();
  index.domain = in.get_str(in.get<uint64_t>());
  index.ids.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    index.ids.push_back(in.get_str(in.get<uint64_t>()));
  }
  index.embeddings = Tensor::zeros(
      {static_cast<int64_t>(n), static_cast<int64_t>(d)});
  in.get_doubles(index.embeddings.data(), n * d);
  if (!in.exhausted()) {
    throw DataError("trailing bytes after index payload: " + path);
  }
  index.validate();
  return index;
}

}  // namespace url::linking
