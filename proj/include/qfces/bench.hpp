#pragma once

// Latency benchmark of comparative-summary generation from precomputed
// opinion summaries (MOS) versus raw product data (DIA).

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfces/catalog.hpp"
#include "qfces/gateway.hpp"
#include "qfces/promptkit.hpp"

namespace qfces::bench {

// product_id -> opinion summary text, as written by gen-mos.
class MosStore {
 public:
  MosStore() = default;
  explicit MosStore(std::map<std::string, std::string> texts) : texts_(std::move(texts)) {}

  // Records carry at least product_id and summary. Throws ValidationError when the file is missing.
  static MosStore load(const std::filesystem::path& path);

  bool contains(const std::string& product_id) const { return texts_.count(product_id) > 0; }
  const std::string& get(const std::string& product_id) const;
  void put(const std::string& product_id, std::string text) { texts_[product_id] = std::move(text); }
  std::size_t size() const { return texts_.size(); }
  // Product ids of `instance` with no stored summary.
  std::vector<std::string> missing(const catalog::QueryInstance& instance) const;

 private:
  std::map<std::string, std::string> texts_;
};

// Generation inputs for one instance in the given mode. Throws ValidationError
// in Mos mode when a product has no stored summary.
std::vector<prompt::CesInput> ces_inputs(const catalog::QueryInstance& instance, prompt::CesMode mode,
                                         const MosStore& store);

struct BenchConfig {
  std::vector<std::string> query_ids;  // empty = every instance, dataset order
  std::size_t iterations = 50;
  std::string backend_id;
  gateway::SamplingParams params = gateway::SamplingParams::generation();
  // Raw timing log. With `resume`, timings already in the log are kept and skipped.
  std::optional<std::filesystem::path> raw_log;
  bool resume = false;
  // Extra fields merged into every raw log record.
  nlohmann::json log_stamp = nlohmann::json::object();
};

struct TimingRecord {
  std::string query_id;
  prompt::CesMode mode = prompt::CesMode::Mos;
  std::size_t iteration = 0;
  double latency_ms = 0.0;
};

nlohmann::json to_json(const TimingRecord& t);
TimingRecord timing_from_json(const nlohmann::json& j);

struct BenchRow {
  std::string query_id;
  prompt::CesMode mode = prompt::CesMode::Mos;
  std::size_t n = 0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double stddev_ms = 0.0;  // sample standard deviation, 0 when n == 1
};

struct BenchReport {
  std::vector<BenchRow> rows;  // query order, Mos before Dia
  std::optional<double> mean_mos_ms;
  std::optional<double> mean_dia_ms;
  std::optional<double> reduction_percent;
};

// 100 * (dia - mos) / dia. Throws ValidationError when dia <= 0.
double compare_means(double mean_mos_ms, double mean_dia_ms);

// Pure function of the timings; queries appear in order of first occurrence.
BenchReport report_from_timings(const std::vector<TimingRecord>& timings);

// Sequential: for each query, each mode, each iteration, one timed complete().
// The timer covers only the backend call. On a backend failure a resume marker
// is appended to the raw log and the error is rethrown.
BenchReport run_bench(gateway::Gateway& gw, const catalog::Dataset& dataset, const MosStore& store,
                      const BenchConfig& config,
                      const prompt::TemplateSet& templates = prompt::TemplateSet::defaults());

std::string render_report(const BenchReport& r);
nlohmann::json to_json(const BenchReport& r);

}  // namespace qfces::bench
