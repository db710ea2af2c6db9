#pragma once

// Rank correlations and the summary-level meta-evaluation correlation:
// for each query, correlate two metrics across that query's candidate
// summaries, then average over queries.

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace qfces::metaeval {

// Average (fractional) ranks, 1-based; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

// Both throw ValidationError on length mismatch, length < 2 or a constant vector.
double spearman(std::span<const double> x, std::span<const double> y);
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

enum class Measure { Spearman, Kendall };
double correlate(Measure m, std::span<const double> x, std::span<const double> y);

bool is_constant(std::span<const double> v);

// Seeded shuffling with a fixed algorithm (Fisher-Yates over mt19937_64 with
// rejection sampling), so permutations do not depend on the standard library.
class Shuffler {
 public:
  explicit Shuffler(std::uint64_t seed) : engine_(seed) {}
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

using Statistic = std::function<double(std::span<const double>, std::span<const double>)>;

// Two-sided permutation p-value: (1 + #{|stat(x, perm(y))| >= |stat(x, y)|}) / (1 + iterations).
// Requires iterations >= 100.
double perm_pvalue(const Statistic& stat, std::span<const double> x, std::span<const double> y,
                   std::size_t iterations, std::uint64_t seed);

// (query_id, summary_id) -> metric value.
using MetricTable = std::map<std::pair<std::string, std::string>, double>;

struct CorrelationResult {
  double rho = 0.0;
  double tau = 0.0;
  double p_rho = 1.0;
  double p_tau = 1.0;
  std::size_t n_queries_used = 0;
  // Queries skipped because a vector was constant or had fewer than two summaries.
  std::size_t n_queries_skipped_constant = 0;
};

struct SummaryLevelOptions {
  std::size_t iterations = 10'000;
  std::uint64_t seed = 0;
  bool compute_pvalues = true;
};

// Throws ValidationError when the key sets differ or every query is skipped.
// P-values permute summaries within each query and recompute the query average.
CorrelationResult summary_level_corr(const MetricTable& a, const MetricTable& b,
                                     const SummaryLevelOptions& options = {});

// Just the averaged correlation for one measure.
double summary_level(const MetricTable& a, const MetricTable& b, Measure m);

nlohmann::json to_json(const CorrelationResult& r);

}  // namespace qfces::metaeval
