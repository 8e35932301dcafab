#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace url::eval {

// Ground-truth judgments: query id -> reference id -> graded relevance >= 0.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;

  int relevance(const std::string& qid, const std::string& doc_id) const;
  int64_t positives(const std::string& qid) const;  // judgments with rel > 0
  void add(const std::string& qid, const std::string& doc_id, int rel);
};

struct RunEntry {
  std::string doc_id;
  double score = 0.0;
};

// Ranked retrieval output: per query, entries in rank order (score
// descending, ties broken by ascending id at construction time).
struct Run {
  std::string tag = "reflink";
  std::map<std::string, std::vector<RunEntry>> rankings;

  // Inserts one query's scored candidates, sorting them into rank order.
  void add_ranking(const std::string& qid, std::vector<RunEntry> entries);
  void validate() const;  // unique ids per query, finite scores
};

// "qid 0 docid rel", single-space separated.
Qrels parse_qrels(const std::string& text, const std::string& where);
Qrels read_qrels(const std::string& path);
std::string format_qrels(const Qrels& qrels);
void write_qrels(const std::string& path, const Qrels& qrels);

// "qid Q0 docid rank score runtag", scores with 6 decimals; the rank field is
// regenerated from stored order on write and checked on parse.
Run parse_run(const std::string& text, const std::string& where);
Run read_run(const std::string& path);
std::string format_run(const Run& run);
void write_run(const std::string& path, const Run& run);

// Per-query scores for one metric at one cutoff. Queries without a single
// positive judgment are excluded from the mean and listed in `skipped`;
// queries judged but absent from the run score 0.
struct MetricReport {
  std::map<std::string, double> per_query;
  double mean = 0.0;
  std::vector<std::string> skipped;
};

MetricReport ndcg_at_k(const Run& run, const Qrels& qrels, int64_t k);
MetricReport map_at_k(const Run& run, const Qrels& qrels, int64_t k);

struct EvalReport {
  std::vector<int64_t> ks;
  std::map<int64_t, MetricReport> ndcg;
  std::map<int64_t, MetricReport> map;

  nlohmann::json to_json() const;
  std::string to_text() const;  // aligned table
};

EvalReport evaluate(const Run& run, const Qrels& qrels,
                    std::span<const int64_t> ks);

}  // namespace url::eval
