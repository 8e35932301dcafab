#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <unistd.h>
#include <vector>

#include "metric_oracle.hpp"
#include "testutil.hpp"
#include "url/errors.hpp"
#include "url/eval/trec.hpp"
#include "url/io/atomic_file.hpp"

using namespace url;
using namespace url::eval;
using testutil::approx;

namespace {

std::filesystem::path temp_path(const std::string& stem) {
  return std::filesystem::temp_directory_path() /
         (stem + "." + std::to_string(::getpid()));
}

// Builds a single-query run whose rank order is exactly `docs` (scores are
// strictly decreasing integers, so sorting cannot reorder anything).
Run ordered_run(const std::string& qid, const std::vector<std::string>& docs) {
  Run run;
  std::vector<RunEntry> entries;
  for (size_t i = 0; i < docs.size(); ++i) {
    entries.push_back(
        RunEntry{docs[i], static_cast<double>(docs.size() - i)});
  }
  run.add_ranking(qid, std::move(entries));
  return run;
}

}  // namespace

TEST_CASE("qrels lines parse and reject malformed input") {
  const Qrels q = parse_qrels("q1 0 d7 1\nq1 0 d9 0\nq2 0 d7 2\n", "mem");
  CHECK(q.relevance("q1", "d7") == 1);
  CHECK(q.relevance("q1", "d9") == 0);
  CHECK(q.relevance("q2", "d7") == 2);
  CHECK(q.relevance("q2", "missing") == 0);
  CHECK(q.relevance("missing", "d7") == 0);
  CHECK(q.positives("q1") == 1);
  CHECK(q.positives("q2") == 1);
  CHECK(q.positives("missing") == 0);

  // Blank lines are tolerated; everything else is strict.
  CHECK(parse_qrels("\nq1 0 d1 1\n\n", "mem").relevance("q1", "d1") == 1);
  CHECK_THROWS_WITH_AS(parse_qrels("q1 0 d1\n", "mem"),
                       doctest::Contains("mem:1"), DataError);
  CHECK_THROWS_WITH_AS(parse_qrels("q1 0 d1 1 extra\n", "mem"),
                       doctest::Contains("4 fields"), DataError);
  CHECK_THROWS_WITH_AS(parse_qrels("q1 1 d1 1\n", "mem"),
                       doctest::Contains("'0'"), DataError);
  CHECK_THROWS_WITH_AS(parse_qrels("q1 0 d1 one\n", "mem"),
                       doctest::Contains("relevance"), DataError);
  CHECK_THROWS_AS(parse_qrels("q1 0 d1 -1\n", "mem"), DataError);
  CHECK_THROWS_AS(parse_qrels("q1 0 d1 1\nq1 0 d1 1\n", "mem"), DataError);
  CHECK_THROWS_AS(parse_qrels(" q1 0 d1 1\n", "mem"), DataError);
  CHECK_THROWS_AS(parse_qrels("q1 0 d1 1 \n", "mem"), DataError);
  CHECK_THROWS_AS(Qrels{}.add("q", "d", -2), DataError);
}

TEST_CASE("qrels files round-trip byte for byte") {
  Qrels q;
  q.add("q2", "d1", 1);
  q.add("q1", "d3", 0);
  q.add("q1", "d2", 2);
  const std::string text = format_qrels(q);
  CHECK(text == "q1 0 d2 2\nq1 0 d3 0\nq2 0 d1 1\n");
  CHECK(format_qrels(parse_qrels(text, "mem")) == text);

  const auto path = temp_path("qrels.txt");
  write_qrels(path.string(), q);
  const Qrels back = read_qrels(path.string());
  CHECK(format_qrels(back) == text);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_qrels(path.string()), DataError);
}

TEST_CASE("rankings sort by score with ties broken by document id") {
  Run run;
  run.add_ranking("q1", {{"dz", 1.0}, {"da", 3.0}, {"db", 1.0}, {"dc", 2.0}});
  const auto& e = run.rankings.at("q1");
  REQUIRE(e.size() == 4);
  CHECK(e[0].doc_id == "da");
  CHECK(e[1].doc_id == "dc");
  CHECK(e[2].doc_id == "db");  // tie with dz resolved alphabetically
  CHECK(e[3].doc_id == "dz");

  CHECK_THROWS_AS(run.add_ranking("q1", {{"d", 1.0}}), DataError);
  CHECK_THROWS_AS(run.add_ranking("q2", {{"d", 1.0}, {"d", 2.0}}), DataError);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(run.add_ranking("q3", {{"d", inf}}), NumericError);
  run.validate();
}

TEST_CASE("run files round-trip byte for byte with regenerated ranks") {
  Run run;
  run.tag = "trial";
  int serial = 0;
  for (const std::string qid : {"qa", "qb", "qc", "qd"}) {
    std::vector<RunEntry> entries;
    for (int i = 0; i < 25; ++i) {
      entries.push_back(RunEntry{
          "doc" + std::to_string(i),
          100.0 - 0.5 * i + 0.001 * (++serial % 7)});
    }
    run.add_ranking(qid, std::move(entries));
  }

  const std::string text = format_run(run);
  CHECK(std::count(text.begin(), text.end(), '\n') == 100);
  CHECK(text.substr(0, text.find('\n')).find(" Q0 ") != std::string::npos);

  const Run back = parse_run(text, "mem");
  CHECK(back.tag == "trial");
  REQUIRE(back.rankings.size() == 4);
  for (const auto& [qid, entries] : back.rankings) {
    const auto& orig = run.rankings.at(qid);
    REQUIRE(entries.size() == orig.size());
    for (size_t i = 0; i < entries.size(); ++i) {
      CHECK(entries[i].doc_id == orig[i].doc_id);  // file order preserved
    }
  }
  CHECK(format_run(back) == text);

  const auto path = temp_path("run.txt");
  write_run(path.string(), run);
  CHECK(format_run(read_run(path.string())) == text);
  std::filesystem::remove(path);
}

TEST_CASE("run parsing rejects malformed lines") {
  CHECK(parse_run("", "mem").rankings.empty());
  CHECK(parse_run("", "mem").tag == "reflink");

  const std::string good = "q1 Q0 d1 1 0.500000 tag\n";
  CHECK(parse_run(good, "mem").rankings.at("q1")[0].score == 0.5);

  CHECK_THROWS_WITH_AS(parse_run("q1 Q0 d1 1 0.5\n", "mem"),
                       doctest::Contains("6 fields"), DataError);
  CHECK_THROWS_WITH_AS(parse_run("q1 QQ d1 1 0.5 tag\n", "mem"),
                       doctest::Contains("Q0"), DataError);
  CHECK_THROWS_WITH_AS(parse_run("q1 Q0 d1 2 0.5 tag\n", "mem"),
                       doctest::Contains("out of order"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_run(good + "q1 Q0 d2 3 0.400000 tag\n", "mem"),
      doctest::Contains("mem:2"), DataError);
  CHECK_THROWS_WITH_AS(parse_run("q1 Q0 d1 1 fast tag\n", "mem"),
                       doctest::Contains("score"), DataError);
  CHECK_THROWS_AS(parse_run("q1 Q0 d1 1 inf tag\n", "mem"), DataError);
  CHECK_THROWS_AS(
      parse_run(good + "q1 Q0 d1 2 0.400000 tag\n", "mem"), DataError);
  CHECK_THROWS_AS(
      parse_run(good + "q2 Q0 d1 1 0.400000 other\n", "mem"), DataError);

  Run blank_tag;
  blank_tag.tag = "two words";
  CHECK_THROWS_AS(format_run(blank_tag), DataError);
}

TEST_CASE("hand-checked metric values") {
  // A single relevant document placed second: 1/log2(3) = 0.6309297...
  Qrels q1;
  q1.add("q", "d2", 1);
  const Run r1 = ordered_run("q", {"d1", "d2", "d3"});
  const double first = ndcg_at_k(r1, q1, 10).per_query.at("q");
  CHECK(approx(first, 1.0 / std::log2(3.0), 1e-15));
  CHECK(approx(first, 0.63093, 5e-6));

  // Two relevant documents retrieved at ranks 1 and 3: 1.5/1.6309297...
  Qrels q2;
  q2.add("q", "da", 1);
  q2.add("q", "dc", 1);
  const Run r2 = ordered_run("q", {"da", "db", "dc", "dd"});
  const double second = ndcg_at_k(r2, q2, 10).per_query.at("q");
  CHECK(approx(second,
               (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0)),
               1e-15));
  CHECK(approx(second, 0.91972, 5e-6));

  // Average precision with hits at ranks 1 and 4: (1/1 + 2/4)/2 = 0.75.
  Qrels q3;
  q3.add("q", "da", 1);
  q3.add("q", "dd", 1);
  const Run r3 = ordered_run("q", {"da", "db", "dc", "dd"});
  CHECK(map_at_k(r3, q3, 10).per_query.at("q") == 0.75);

  // Cutoff above the single relevant hit: the hit stops counting.
  CHECK(map_at_k(r1, q1, 1).per_query.at("q") == 0.0);
  CHECK(ndcg_at_k(r1, q1, 1).per_query.at("q") == 0.0);

  // The ideal prefix is perfect even when more positives exist below k.
  Qrels q4;
  q4.add("q", "da", 1);
  q4.add("q", "db", 1);
  CHECK(ndcg_at_k(ordered_run("q", {"da", "db"}), q4, 1).per_query.at("q") ==
        1.0);
}

TEST_CASE("metrics match an exhaustive oracle over all small rankings") {
  const std::vector<int64_t> ks = {1, 2, 3, 5, 10};
  const std::vector<std::string> pool = {"d1", "d2", "d3", "d4", "d5"};
  int64_t cases = 0;
  double worst = 0.0;

  for (int n = 1; n <= 5; ++n) {
    for (int mask = 1; mask < (1 << n); ++mask) {
      if (std::popcount(static_cast<unsigned>(mask)) > 2) continue;
      Qrels qrels;
      std::vector<int> judged;
      for (int b = 0; b < n; ++b) {
        if ((mask >> b) & 1) {
          qrels.add("q", pool[b], 1);
          judged.push_back(1);
        }
      }
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      do {
        std::vector<std::string> docs;
        std::vector<int> grades;
        for (int idx : order) {
          docs.push_back(pool[idx]);
          grades.push_back((mask >> idx) & 1);
        }
        const Run run = ordered_run("q", docs);
        ++cases;
        for (int64_t k : ks) {
          const double n_lib = ndcg_at_k(run, qrels, k).per_query.at("q");
          const double n_ref = oracle::ndcg(grades, judged, k);
          const double m_lib = map_at_k(run, qrels, k).per_query.at("q");
          const double m_ref = oracle::average_precision(
              grades, static_cast<int64_t>(judged.size()), k);
          worst = std::max({worst, std::abs(n_lib - n_ref),
                            std::abs(m_lib - m_ref)});
          if (std::abs(n_lib - n_ref) > 1e-9 ||
              std::abs(m_lib - m_ref) > 1e-9) {
            CAPTURE(n);
            CAPTURE(mask);
            CAPTURE(k);
            CHECK(approx(n_lib, n_ref, 1e-9));
            CHECK(approx(m_lib, m_ref, 1e-9));
          }
        }
      } while (std::next_permutation(order.begin(), order.end()));
    }
  }
  CHECK(cases == 2083);  // sum over n of perms(n) * subsets of size 1 or 2
  CHECK(worst < 1e-9);
}

TEST_CASE("graded relevance and zero-grade judgments match the oracle") {
  const std::vector<std::string> pool = {"da", "db", "dc"};
  const std::vector<int> grade_of = {2, 1, 0};  // dc judged irrelevant
  Qrels qrels;
  for (size_t i = 0; i < pool.size(); ++i) {
    qrels.add("q", pool[i], grade_of[i]);
  }
  std::vector<int> order = {0, 1, 2};
  do {
    std::vector<std::string> docs;
    std::vector<int> grades;
    for (int idx : order) {
      docs.push_back(pool[idx]);
      grades.push_back(grade_of[idx]);
    }
    const Run run = ordered_run("q", docs);
    for (int64_t k : {1, 2, 3}) {
      CHECK(approx(ndcg_at_k(run, qrels, k).per_query.at("q"),
                   oracle::ndcg(grades, grade_of, k), 1e-9));
      CHECK(approx(map_at_k(run, qrels, k).per_query.at("q"),
                   oracle::average_precision(grades, 2, k), 1e-9));
    }
  } while (std::next_permutation(order.begin(), order.end()));
}

TEST_CASE("judged queries missing from the run score zero") {
  Qrels qrels;
  qrels.add("q1", "d1", 1);
  qrels.add("q2", "d1", 1);
  const Run run = ordered_run("q1", {"d1"});
  const MetricReport r = ndcg_at_k(run, qrels, 10);
  CHECK(r.per_query.at("q1") == 1.0);
  CHECK(r.per_query.at("q2") == 0.0);
  CHECK(r.mean == 0.5);
  CHECK(r.skipped.empty());
  CHECK(map_at_k(run, qrels, 10).mean == 0.5);
}

TEST_CASE("queries without positive judgments are skipped, not averaged") {
  Qrels qrels;
  qrels.add("q1", "d1", 1);
  qrels.add("q2", "d1", 0);  // judged, but nothing relevant
  Run run = ordered_run("q1", {"d1"});
  run.add_ranking("q2", {{"d1", 1.0}});
  const MetricReport r = map_at_k(run, qrels, 10);
  CHECK(r.per_query.size() == 1);
  CHECK(r.per_query.count("q2") == 0);
  CHECK(r.mean == 1.0);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0] == "q2");
}

TEST_CASE("documents shuffled below the cutoff leave metrics unchanged") {
  Qrels qrels;
  qrels.add("q", "d1", 1);
  qrels.add("q", "d2", 1);
  const Run a = ordered_run("q", {"d1", "d2", "d3", "d4", "d5"});
  const Run b = ordered_run("q", {"d1", "d2", "d5", "d3", "d4"});
  for (int64_t k : {1, 2}) {
    CHECK(ndcg_at_k(a, qrels, k).per_query.at("q") ==
          ndcg_at_k(b, qrels, k).per_query.at("q"));
    CHECK(map_at_k(a, qrels, k).per_query.at("q") ==
          map_at_k(b, qrels, k).per_query.at("q"));
  }
  // Unjudged padding below every hit changes nothing at any cutoff.
  const Run padded = ordered_run("q", {"d1", "d2", "x1", "x2", "x3", "x4"});
  const Run bare = ordered_run("q", {"d1", "d2"});
  CHECK(ndcg_at_k(padded, qrels, 10).per_query.at("q") ==
        ndcg_at_k(bare, qrels, 10).per_query.at("q"));
  CHECK(map_at_k(padded, qrels, 10).per_query.at("q") ==
        map_at_k(bare, qrels, 10).per_query.at("q"));
}

TEST_CASE("evaluate aggregates both metrics across cutoffs") {
  Qrels qrels;
  Run run;
  for (int q = 0; q < 3; ++q) {
    const std::string qid = "q" + std::to_string(q);
    qrels.add(qid, "hit", 1);
    run.add_ranking(qid, {{"hit", 2.0}, {"miss", 1.0}});
  }
  const std::vector<int64_t> ks = {5, 10};
  const EvalReport report = evaluate(run, qrels, ks);
  REQUIRE(report.ks == ks);
  CHECK(report.ndcg.at(5).mean == 1.0);
  CHECK(report.ndcg.at(10).mean == 1.0);
  CHECK(report.map.at(5).mean == 1.0);
  CHECK(report.map.at(10).mean == 1.0);

  const nlohmann::json j = report.to_json();
  CHECK(j.at("ks") == nlohmann::json(ks));
  CHECK(j.at("ndcg").at("5").at("mean").get<double>() == 1.0);
  CHECK(j.at("map").at("10").at("per_query").size() == 3);

  const std::string text = report.to_text();
  CHECK(text.find("ndcg") != std::string::npos);
  CHECK(text.find("map") != std::string::npos);
  CHECK(text.find("@5") != std::string::npos);
  CHECK(text.find("1.000000") != std::string::npos);

  const std::vector<int64_t> none;
  CHECK_THROWS_AS(evaluate(run, qrels, none), DataError);
  CHECK_THROWS_AS(ndcg_at_k(run, qrels, 0), DataError);
  CHECK_THROWS_AS(map_at_k(run, qrels, 0), DataError);
}
