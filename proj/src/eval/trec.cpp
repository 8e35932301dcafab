#include "url/eval/trec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "url/errors.hpp"
#include "url/io/atomic_file.hpp"

namespace url::eval {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (start <= line.size()) {
    const size_t space = line.find(' ', start);
    if (space == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, space - start));
    start = space + 1;
  }
  return fields;
}

int parse_int(const std::string& token, const std::string& where,
              const char* field) {
  char* end = nullptr;
  const long v = std::strtol(token.c_str(), &end, 10);
  if (token.empty() || end != token.c_str() + token.size()) {
    throw DataError("malformed " + std::string(field) + " '" + token +
                    "' at " + where);
  }
  return static_cast<int>(v);
}

double parse_score(const std::string& token, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size() ||
      !std::isfinite(v)) {
    throw DataError("malformed score '" + token + "' at " + where);
  }
  return v;
}

}  // namespace

int Qrels::relevance(const std::string& qid, const std::string& doc_id) const {
  const auto q = judgments.find(qid);
  if (q == judgments.end()) return 0;
  const auto d = q->second.find(doc_id);
  return d == q->second.end() ? 0 : d->second;
}

int64_t Qrels::positives(const std::string& qid) const {
  const auto q = judgments.find(qid);
  if (q == judgments.end()) return 0;
  int64_t n = 0;
  for (const auto& [doc, rel] : q->second) {
    if (rel > 0) ++n;
  }
  return n;
}

void Qrels::add(const std::string& qid, const std::string& doc_id, int rel) {
  if (rel < 0) {
    throw DataError("negative relevance for (" + qid + ", " + doc_id + ")");
  }
  auto [it, inserted] = judgments[qid].emplace(doc_id, rel);
  if (!inserted) {
    throw DataError("duplicate judgment for (" + qid + ", " + doc_id + ")");
  }
}

void Run::add_ranking(const std::string& qid, std::vector<RunEntry> entries) {
  for (const auto& e : entries) {
    if (!std::isfinite(e.score)) {
      throw NumericError("non-finite score for (" + qid + ", " + e.doc_id +
                         ")");
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const RunEntry& a, const RunEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc_id < b.doc_id;
            });
  for (size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].doc_id == entries[i - 1].doc_id) {
      throw DataError("duplicate document '" + entries[i].doc_id +
                      "' in ranking for " + qid);
    }
  }
  if (!rankings.emplace(qid, std::move(entries)).second) {
    throw DataError("duplicate ranking for query " + qid);
  }
}

void Run::validate() const {
  for (const auto& [qid, entries] : rankings) {
    std::map<std::string, int> seen;
    for (const auto& e : entries) {
      if (!std::isfinite(e.score)) {
        throw NumericError("non-finite score for (" + qid + ", " + e.doc_id +
                           ")");
      }
      if (++seen[e.doc_id] > 1) {
        throw DataError("duplicate document '" + e.doc_id +
                        "' in ranking for " + qid);
      }
    }
  }
}

Qrels parse_qrels(const std::string& text, const std::string& where) {
  Qrels out;
  std::istringstream lines(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string at = where + ":" + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw DataError("expected 4 fields, found " +
                      std::to_string(fields.size()) + " at " + at);
    }
    if (fields[1] != "0") {
      throw DataError("expected literal '0' iteration field, found '" +
                      fields[1] + "' at " + at);
    }
    if (fields[0].empty() || fields[2].empty()) {
      throw DataError("empty id field at " + at);
    }
    const int rel = parse_int(fields[3], at, "relevance");
    if (rel < 0) {
      throw DataError("negative relevance '" + fields[3] + "' at " + at);
    }
    try {
      out.add(fields[0], fields[2], rel);
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at " + at);
    }
  }
  return out;
}

Qrels read_qrels(const std::string& path) {
  return parse_qrels(io::read_file(path), path);
}

std::string format_qrels(const Qrels& qrels) {
  std::string out;
  for (const auto& [qid, docs] : qrels.judgments) {
    for (const auto& [doc, rel] : docs) {
      out += qid + " 0 " + doc + " " + std::to_string(rel) + "\n";
    }
  }
  return out;
}

void write_qrels(const std::string& path, const Qrels& qrels) {
  io::write_file_atomic(path, format_qrels(qrels));
}

Run parse_run(const std::string& text, const std::string& where) {
  Run out;
  out.tag.clear();
  std::map<std::string, int64_t> next_rank;
  std::istringstream lines(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string at = where + ":" + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (fields.size() != 6) {
      throw DataError("expected 6 fields, found " +
                      std::to_string(fields.size()) + " at " + at);
    }
    if (fields[1] != "Q0") {
      throw DataError("expected literal 'Q0' field, found '" + fields[1] +
                      "' at " + at);
    }
    const std::string& qid = fields[0];
    const std::string& doc = fields[2];
    if (qid.empty() || doc.empty()) throw DataError("empty id field at " + at);
    const int rank = parse_int(fields[3], at, "rank");
    const double score = parse_score(fields[4], at);
    if (out.tag.empty()) {
      out.tag = fields[5];
    } else if (out.tag != fields[5]) {
      throw DataError("inconsistent run tag '" + fields[5] + "' at " + at);
    }
    auto& entries = out.rankings[qid];
    const int64_t expected = ++next_rank[qid];
    if (rank != expected) {
      throw DataError("rank field '" + fields[3] + "' out of order (expected " +
                      std::to_string(expected) + ") at " + at);
    }
    for (const auto& e : entries) {
      if (e.doc_id == doc) {
        throw DataError("duplicate document '" + doc + "' at " + at);
      }
    }
    entries.push_back(RunEntry{doc, score});
  }
  if (out.tag.empty()) out.tag = "reflink";
  return out;
}

Run read_run(const std::string& path) {
  return parse_run(io::read_file(path), path);
}

std::string format_run(const Run& run) {
  if (run.tag.empty() ||
      run.tag.find_first_of(" \t\n") != std::string::npos) {
    throw DataError("run tag must be a single non-empty token");
  }
  std::string out;
  char score_buf[64];
  for (const auto& [qid, entries] : run.rankings) {
    for (size_t i = 0; i < entries.size(); ++i) {
      std::snprintf(score_buf, sizeof(score_buf), "%.6f", entries[i].score);
      out += qid + " Q0 " + entries[i].doc_id + " " + std::to_string(i + 1) +
             " " + score_buf + " " + run.tag + "\n";
    }
  }
  return out;
}

void write_run(const std::string& path, const Run& run) {
  run.validate();
  io::write_file_atomic(path, format_run(run));
}

namespace {

template <typename PerQuery>
MetricReport reduce_queries(const Qrels& qrels, PerQuery&& per_query_score) {
  MetricReport report;
  double sum = 0.0;
  for (const auto& [qid, docs] : qrels.judgments) {
    int64_t n_pos = 0;
    for (const auto& [doc, rel] : docs) {
      if (rel > 0) ++n_pos;
    }
    if (n_pos == 0) {
      report.skipped.push_back(qid);
      continue;
    }
    const double score = per_query_score(qid, docs);
    report.per_query[qid] = score;
    sum += score;
  }
  if (!report.per_query.empty()) {
    report.mean = sum / static_cast<double>(report.per_query.size());
  }
  return report;
}

const std::vector<RunEntry>* find_ranking(const Run& run,
                                          const std::string& qid) {
  const auto it = run.rankings.find(qid);
  return it == run.rankings.end() ? nullptr : &it->second;
}

}  // namespace

MetricReport ndcg_at_k(const Run& run, const Qrels& qrels, int64_t k) {
  if (k < 1) throw DataError("ndcg cutoff must be at least 1");
  return reduce_queries(
      qrels, [&](const std::string& qid,
                 const std::map<std::string, int>& docs) {
        // Ideal DCG: judged relevances in descending order, cut at k.
        std::vector<int> rels;
        rels.reserve(docs.size());
        for (const auto& [doc, rel] : docs) {
          if (rel > 0) rels.push_back(rel);
        }
        std::sort(rels.begin(), rels.end(), std::greater<int>());
        double idcg = 0.0;
        for (size_t i = 0; i < rels.size() && static_cast<int64_t>(i) < k;
             ++i) {
          idcg += rels[i] / std::log2(static_cast<double>(i) + 2.0);
        }
        const auto* entries = find_ranking(run, qid);
        if (entries == nullptr) return 0.0;
        double dcg = 0.0;
        for (size_t i = 0;
             i < entries->size() && static_cast<int64_t>(i) < k; ++i) {
          const int rel = qrels.relevance(qid, (*entries)[i].doc_id);
          if (rel > 0) dcg += rel / std::log2(static_cast<double>(i) + 2.0);
        }
        return dcg / idcg;
      });
}

MetricReport map_at_k(const Run& run, const Qrels& qrels, int64_t k) {
  if (k < 1) throw DataError("map cutoff must be at least 1");
  return reduce_queries(
      qrels,
      [&](const std::string& qid, const std::map<std::string, int>& docs) {
        int64_t total_relevant = 0;
        for (const auto& [doc, rel] : docs) {
          if (rel > 0) ++total_relevant;
        }
        const auto* entries = find_ranking(run, qid);
        if (entries == nullptr) return 0.0;
        double sum_precision = 0.0;
        int64_t hits = 0;
        for (size_t i = 0;
             i < entries->size() && static_cast<int64_t>(i) < k; ++i) {
          if (qrels.relevance(qid, (*entries)[i].doc_id) > 0) {
            ++hits;
            sum_precision +=
                static_cast<double>(hits) / (static_cast<double>(i) + 1.0);
          }
        }
        return sum_precision / static_cast<double>(total_relevant);
      });
}

nlohmann::json EvalReport::to_json() const {
  auto metric_json = [](const std::map<int64_t, MetricReport>& by_k) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, report] : by_k) {
      j[std::to_string(k)] = nlohmann::json{{"mean", report.mean},
                                            {"per_query", report.per_query},
                                            {"skipped", report.skipped}};
    }
    return j;
  };
  return nlohmann::json{
      {"ks", ks}, {"ndcg", metric_json(ndcg)}, {"map", metric_json(map)}};
}

std::string EvalReport::to_text() const {
  char buf[64];
  std::string out = "metric  ";
  for (int64_t k : ks) {
    std::snprintf(buf, sizeof(buf), " %9s", ("@" + std::to_string(k)).c_str());
    out += buf;
  }
  out += "\n";
  auto row = [&](const char* name,
                 const std::map<int64_t, MetricReport>& by_k) {
    std::snprintf(buf, sizeof(buf), "%-8s", name);
    out += buf;
    for (int64_t k : ks) {
      std::snprintf(buf, sizeof(buf), " %9.6f", by_k.at(k).mean);
      out += buf;
    }
    out += "\n";
  };
  row("ndcg", ndcg);
  row("map", map);
  if (!ks.empty()) {
    const auto& first = ndcg.at(ks.front());
    std::snprintf(buf, sizeof(buf), "queries  %9zu", first.per_query.size());
    out += buf;
    out += "\n";
    if (!first.skipped.empty()) {
      out += "# skipped (no positive judgments):";
      for (const auto& qid : first.skipped) out += " " + qid;
      out += "\n";
    }
  }
  return out;
}

EvalReport evaluate(const Run& run, const Qrels& qrels,
                    std::span<const int64_t> ks) {
  if (ks.empty()) throw DataError("evaluate needs at least one cutoff");
  run.validate();
  EvalReport report;
  report.ks.assign(ks.begin(), ks.end());
  for (int64_t k : ks) {
    report.ndcg.emplace(k, ndcg_at_k(run, qrels, k));
    report.map.emplace(k, map_at_k(run, qrels, k));
  }
  return report;
}

}  // namespace url::eval
