#include "qfces/metaeval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qfces/error.hpp"

namespace qfces::metaeval {

using nlohmann::json;

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError("length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw ValidationError("correlation needs at least 2 observations");
  if (is_constant(x) || is_constant(y)) throw ValidationError("correlation undefined for a constant vector");
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Sum of t(t-1)/2 over runs of equal values in an already sorted sequence.
template <typename Eq>
std::uint64_t tied_pairs(std::size_t n, Eq equal) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Counts pairs i < j with v[i] > v[j], sorting v in the process.
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

struct QueryVectors {
  std::vector<double> a, b;
};

}  // namespace

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  return pearson(average_ranks(x), average_ranks(y));
}

// Knight's O(n log n) tau-b: sort by (x, y), then count y-inversions.
double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]); });

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t ties_x = tied_pairs(n, [&](std::size_t i, std::size_t j) { return x[idx[i]] == x[idx[j]]; });
  const std::uint64_t ties_xy = tied_pairs(
      n, [&](std::size_t i, std::size_t j) { return x[idx[i]] == x[idx[j]] && y[idx[i]] == y[idx[j]]; });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
  const std::uint64_t swaps = count_inversions(ys, buf, 0, n);
  const std::uint64_t ties_y = tied_pairs(n, [&](std::size_t i, std::size_t j) { return ys[i] == ys[j]; });

  // concordant - discordant = n0 - ties_x - ties_y + ties_xy - 2 * swaps
  const double numerator = static_cast<double>(n0) - static_cast<double>(ties_x) - static_cast<double>(ties_y) +
                           static_cast<double>(ties_xy) - 2.0 * static_cast<double>(swaps);
  const double denom = std::sqrt(static_cast<double>(n0 - ties_x) * static_cast<double>(n0 - ties_y));
  return std::clamp(numerator / denom, -1.0, 1.0);
}

double correlate(Measure m, std::span<const double> x, std::span<const double> y) {
  return m == Measure::Spearman ? spearman(x, y) : kendall_tau_b(x, y);
}

std::size_t Shuffler::below(std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

double perm_pvalue(const Statistic& stat, std::span<const double> x, std::span<const double> y,
                   std::size_t iterations, std::uint64_t seed) {
  if (iterations < 100) throw ValidationError("permutation test needs at least 100 iterations");
  const double observed = std::abs(stat(x, y));
  Shuffler rng(seed);
  std::vector<double> perm(y.begin(), y.end());
  std::size_t extreme = 0;
  // Tolerance keeps permutations that reproduce the observed value from being
  // lost to rounding noise.
  const double eps = 1e-12;
  for (std::size_t i = 0; i < iterations; ++i) {
    rng.shuffle(perm);
    if (std::abs(stat(x, perm)) >= observed - eps) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + iterations);
}

CorrelationResult summary_level_corr(const MetricTable& a, const MetricTable& b, const SummaryLevelOptions& options) {
  if (a.size() != b.size() ||
      !std::equal(a.begin(), a.end(), b.begin(), [](const auto& l, const auto& r) { return l.first == r.first; })) {
    throw ValidationError("metrics cover different (query, summary) keys");
  }
  // Map iteration is sorted by (query, summary), so each query's summaries are contiguous.
  std::vector<QueryVectors> used;
  std::size_t total_queries = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end()) {
    const std::string& q = ia->first.first;
    QueryVectors qv;
    for (; ia != a.end() && ia->first.first == q; ++ia, ++ib) {
      qv.a.push_back(ia->second);
      qv.b.push_back(ib->second);
    }
    ++total_queries;
    if (qv.a.size() >= 2 && !is_constant(qv.a) && !is_constant(qv.b)) used.push_back(std::move(qv));
  }
  if (used.empty()) throw ValidationError("every query was skipped (constant vectors or fewer than 2 summaries)");

  CorrelationResult r;
  r.n_queries_used = used.size();
  r.n_queries_skipped_constant = total_queries - used.size();

  auto averaged = [&](Measure m, const std::vector<std::vector<double>>* permuted_b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < used.size(); ++i) {
      sum += correlate(m, used[i].a, permuted_b ? (*permuted_b)[i] : used[i].b);
    }
    return sum / static_cast<double>(used.size());
  };
  r.rho = averaged(Measure::Spearman, nullptr);
  r.tau = averaged(Measure::Kendall, nullptr);

  if (options.compute_pvalues) {
    if (options.iterations < 100) throw ValidationError("permutation test needs at least 100 iterations");
    Shuffler rng(options.seed);
    std::vector<std::vector<double>> perm;
    for (const auto& qv : used) perm.push_back(qv.b);
    std::size_t extreme_rho = 0, extreme_tau = 0;
    const double eps = 1e-12;
    for (std::size_t it = 0; it < options.iterations; ++it) {
      for (auto& p : perm) rng.shuffle(p);
      if (std::abs(averaged(Measure::Spearman, &perm)) >= std::abs(r.rho) - eps) ++extreme_rho;
      if (std::abs(averaged(Measure::Kendall, &perm)) >= std::abs(r.tau) - eps) ++extreme_tau;
    }
    const double denom = static_cast<double>(1 + options.iterations);
    r.p_rho = static_cast<double>(1 + extreme_rho) / denom;
    r.p_tau = static_cast<double>(1 + extreme_tau) / denom;
  }
  return r;
}

double summary_level(const MetricTable& a, const MetricTable& b, Measure m) {
  SummaryLevelOptions o;
  o.compute_pvalues = false;
  const auto r = summary_level_corr(a, b, o);
  return m == Measure::Spearman ? r.rho : r.tau;
}

json to_json(const CorrelationResult& r) {
  return {{"rho", r.rho},
          {"tau", r.tau},
          {"p_rho", r.p_rho},
          {"p_tau", r.p_tau},
          {"n_queries_used", r.n_queries_used},
          {"n_queries_skipped_constant", r.n_queries_skipped_constant}};
}

}  // namespace qfces::metaeval
