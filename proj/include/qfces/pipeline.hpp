#pragma once

// Run configuration, run-directory layout and the command implementations
// behind the qfces tool.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfces/annotations.hpp"
#include "qfces/bench.hpp"
#include "qfces/catalog.hpp"
#include "qfces/ces_parser.hpp"
#include "qfces/gateway.hpp"
#include "qfces/judge.hpp"
#include "qfces/metaeval.hpp"
#include "qfces/promptkit.hpp"

namespace qfces::pipeline {

struct BackendConfig {
  std::string id;
  std::string type;  // "mock" or "http"
  gateway::MockSpec mock;
  gateway::HttpBackendConfig http;
  gateway::BackendLimits limits;
};

struct RunConfig {
  std::string config_hash;  // FNV-1a of the config file bytes, hex
  std::filesystem::path dataset;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  std::string run_id;
  std::optional<std::filesystem::path> template_dir;
  bool strict = true;

  std::map<std::string, BackendConfig> backends;

  std::string generation_backend;
  gateway::SamplingParams generation = gateway::SamplingParams::generation();

  std::string evaluation_backend;
  gateway::SamplingParams evaluation = gateway::SamplingParams::evaluation();
  double validity_threshold = 0.5;
  std::vector<std::string> dimensions;  // empty = the dimensions of the judged summary kind

  std::string bench_backend;
  std::size_t bench_iterations = 50;
  std::vector<std::string> bench_queries;

  std::size_t permutation_iterations = 10'000;
  int discrepancy_threshold = 2;

  // INI text. Relative paths resolve against `base_dir`. Throws ValidationError
  // on unknown sections or keys, bad values or undefined backend references.
  static RunConfig parse(const std::string& ini_text, const std::filesystem::path& base_dir = ".");
  static RunConfig load(const std::filesystem::path& path);
};

// <output_dir>/<run_id>, or <output_dir>/<UTC timestamp>-<hash prefix> when run_id is empty.
std::filesystem::path default_run_dir(const RunConfig& config);

class Run {
 public:
  Run(RunConfig config, std::filesystem::path dir);

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }
  gateway::Gateway& gateway() { return *gateway_; }
  const prompt::TemplateSet& templates() const { return templates_; }

  // {"config_hash", "seed"} merged into every written record.
  nlohmann::json stamp(nlohmann::json record) const;

  std::filesystem::path dataset_path() const { return dir_ / "dataset.jsonl"; }
  std::filesystem::path mos_store_path() const { return dir_ / "mos" / "mos.jsonl"; }
  std::filesystem::path ces_path(const std::string& label) const { return dir_ / "ces" / (label + ".jsonl"); }
  std::filesystem::path reports_dir() const { return dir_ / "reports"; }

  // The ingested dataset of this run. Throws ValidationError when ingest has not run.
  catalog::Dataset dataset() const;

 private:
  RunConfig config_;
  std::filesystem::path dir_;
  std::unique_ptr<gateway::Gateway> gateway_;
  prompt::TemplateSet templates_;
};

catalog::Dataset ingest(Run& run);
catalog::DatasetStats stats(Run& run);

// One opinion summary per distinct product, written to mos/mos.jsonl.
std::size_t gen_mos(Run& run);

struct CesRecord {
  std::string query_id;
  prompt::CesMode mode = prompt::CesMode::Mos;
  std::string summary;
};
std::vector<CesRecord> read_ces(const std::filesystem::path& path);

// Writes ces/<label>.jsonl; the label defaults to the mode name.
std::size_t gen_ces(Run& run, prompt::CesMode mode, const std::string& label = "");

struct FormatSummary {
  std::string label;
  std::size_t n_instances = 0;
  std::size_t n_passed_all = 0;
  std::map<std::string, std::size_t> passed_by_code;
};
FormatSummary check_format(Run& run, const std::string& label);
std::string render_format_summary(const FormatSummary& s);
nlohmann::json to_json(const FormatSummary& s);

enum class JudgeTarget { Ces, Mos };

// Scores every summary of the target. Output judge/<ces|mos>_<label>.jsonl, one
// record per (instance, dimension); records already present are kept and skipped.
std::vector<judge::InstanceScore> run_judge(Run& run, JudgeTarget target, const std::string& label,
                                            std::vector<std::string> dimension_ids);

struct EvalReport {
  std::optional<judge::EvalMatrix> ces;
  std::optional<judge::EvalMatrix> mos;
};
EvalReport report(Run& run);
std::string render_eval_report(const EvalReport& r);
nlohmann::json to_json(const EvalReport& r);

// Judge score vs the mean human rating, per dimension, at summary level.
// Judge record (instance_id, model) is matched to rating (query_id, summary_id).
struct MetaEvalRow {
  std::string dimension;
  metaeval::CorrelationResult result;
};
std::vector<MetaEvalRow> meta_eval(const annotations::AnnotationSet& human,
                                   const std::vector<judge::InstanceScore>& scores,
                                   const metaeval::SummaryLevelOptions& options);
std::vector<MetaEvalRow> meta_eval(Run& run, const std::filesystem::path& ratings,
                                   const std::vector<std::filesystem::path>& judge_files);
std::string render_meta_eval(const std::vector<MetaEvalRow>& rows);
nlohmann::json to_json(const std::vector<MetaEvalRow>& rows);

struct AgreementOutput {
  annotations::AgreementReport agreement;
  annotations::RaterTables raters;
};
AgreementOutput agreement(Run& run, const std::filesystem::path& round1,
                          const std::optional<std::filesystem::path>& round2, annotations::Difference difference);

struct FlagOutput {
  annotations::FlagResult flags;
  std::optional<std::size_t> merged_records;
};
FlagOutput flag_rounds(Run& run, const std::filesystem::path& round1,
                       const std::optional<std::filesystem::path>& round2);
std::string render_flags(const FlagOutput& f);
nlohmann::json to_json(const FlagOutput& f);

bench::BenchReport bench(Run& run, bool resume);

}  // namespace qfces::pipeline
