#pragma once

// Brute-force reference implementations of ranked-retrieval metrics, computed
// from first principles on a vector of relevance grades in rank order. Kept
// deliberately independent of the library: no shared helpers, logarithms via
// ln(x)/ln(2), accumulation in plain loops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// Discounted gain of one grade at 1-based rank i.
inline double discounted(int rel, int64_t i) {
  return static_cast<double>(rel) /
         (std::log(static_cast<double>(i) + 1.0) / std::log(2.0));
}

inline double dcg(const std::vector<int>& ranked_grades, int64_t k) {
  double total = 0.0;
  for (int64_t i = 0;
       i < static_cast<int64_t>(ranked_grades.size()) && i < k; ++i) {
    total += discounted(ranked_grades[i], i + 1);
  }
  return total;
}

// ranked_grades: the grade of each retrieved document in rank order (0 for
// unjudged). judged_grades: every judged grade for the query, any order.
inline double ndcg(const std::vector<int>& ranked_grades,
                   std::vector<int> judged_grades, int64_t k) {
  std::sort(judged_grades.begin(), judged_grades.end());
  std::reverse(judged_grades.begin(), judged_grades.end());
  const double ideal = dcg(judged_grades, k);
  return ideal == 0.0 ? 0.0 : dcg(ranked_grades, k) / ideal;
}

// Average precision at cutoff k with the full positive count as denominator.
inline double average_precision(const std::vector<int>& ranked_grades,
                                int64_t total_relevant, int64_t k) {
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  int64_t seen = 0;
  for (int64_t i = 0;
       i < static_cast<int64_t>(ranked_grades.size()) && i < k; ++i) {
    if (ranked_grades[i] > 0) {
      ++seen;
      sum += static_cast<double>(seen) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

}  // namespace oracle
