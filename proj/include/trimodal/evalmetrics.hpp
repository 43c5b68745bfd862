#pragma once

// Retrieval accuracy and caption quality metrics.
//
// Acc@q is the fraction of queries whose true match landed in the top q.
// BLEU-n is the classic clipped modified n-gram precision with a brevity
// penalty and no smoothing: any vanishing precision zeroes the score, which
// keeps reported numbers reproducible at the cost of harshness on short
// candidates. One reference per candidate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "trimodal/errors.hpp"

namespace trimodal::model {

inline double acc_at_q(const std::vector<int>& true_ranks, int q) {
  if (true_ranks.empty()) throw ContractError("acc_at_q: no ranks");
  if (q < 1) throw ContractError("acc_at_q: q must be >= 1, got " + std::to_string(q));
  int hits = 0;
  for (int r : true_ranks) {
    if (r < 1) throw ContractError("acc_at_q: ranks are 1-based, got " + std::to_string(r));
    if (r <= q) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(true_ranks.size());
}

namespace detail {

// Clipped n-gram matches / candidate n-gram count for one order.
inline double modified_precision(const std::vector<int>& cand, const std::vector<int>& ref,
                                 int n) {
  int cn = static_cast<int>(cand.size()) - n + 1;
  if (cn <= 0) return 0.0;
  std::map<std::vector<int>, int> ref_counts;
  for (int i = 0; i + n <= static_cast<int>(ref.size()); ++i)
    ++ref_counts[std::vector<int>(ref.begin() + i, ref.begin() + i + n)];
  std::map<std::vector<int>, int> cand_counts;
  for (int i = 0; i < cn; ++i)
    ++cand_counts[std::vector<int>(cand.begin() + i, cand.begin() + i + n)];
  int matched = 0;
  for (const auto& [gram, count] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  return static_cast<double>(matched) / static_cast<double>(cn);
}

}  // namespace detail

inline double bleu_n(const std::vector<int>& candidate, const std::vector<int>& reference,
                     int n) {
  if (n < 1 || n > 4) throw ContractError("bleu_n: n must be 1..4, got " + std::to_string(n));
  if (reference.empty()) throw ContractError("bleu_n: empty reference");
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (int i = 1; i <= n; ++i) {
    double p = detail::modified_precision(candidate, reference, i);
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
  }
  double c = static_cast<double>(candidate.size());
  double r = static_cast<double>(reference.size());
  double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / n);
}

// Best score any candidate reaches against the reference. The sampling-based
// evaluation convention: a model is credited with its best draw.
inline double oracle_max(
    const std::vector<std::vector<int>>& candidates, const std::vector<int>& reference,
    const std::function<double(const std::vector<int>&, const std::vector<int>&)>& metric) {
  if (candidates.empty()) throw ContractError("oracle_max: no candidates");
  double best = metric(candidates[0], reference);
  for (std::size_t i = 1; i < candidates.size(); ++i)
    best = std::max(best, metric(candidates[i], reference));
  return best;
}

// =========================================================================
// Aggregate report
// =========================================================================

struct EvalReport {
  std::string mode;               // retrieval query mode, "" if retrieval skipped
  int gallery_size = 0;
  int retrieval_queries = 0;
  std::map<int, double> acc_at;   // q -> fraction

  int caption_records = 0;
  int caption_samples = 0;        // draws per record
  std::map<int, double> bleu;     // n -> mean oracle-max score

  // Fixed line order and fixed float format keep the file diffable.
  void write(std::ostream& os) const {
    os << std::fixed << std::setprecision(6);
    if (retrieval_queries > 0) {
      os << "retrieval.mode\t" << mode << '\n';
      os << "retrieval.gallery\t" << gallery_size << '\n';
      os << "retrieval.queries\t" << retrieval_queries << '\n';
      for (const auto& [q, v] : acc_at) os << "retrieval.acc@" << q << '\t' << v << '\n';
    }
    if (caption_records > 0) {
      os << "caption.records\t" << caption_records << '\n';
      os << "caption.samples\t" << caption_samples << '\n';
      for (const auto& [n, v] : bleu) os << "caption.bleu" << n << '\t' << v << '\n';
    }
  }
};

}  // namespace trimodal::model
