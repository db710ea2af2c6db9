#pragma once

// LLM-as-judge scoring: sample n judge outputs per (summary, dimension),
// extract the 1-5 scores and take the probability-weighted score
//   o = sum_k p(s_k) * s_k
// with p(s_k) estimated from sample frequencies.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfces/error.hpp"
#include "qfces/gateway.hpp"
#include "qfces/promptkit.hpp"

namespace qfces::judge {

// nullopt means the text carried no usable score.
std::optional<int> extract_score(std::string_view text);

struct ScoreSample {
  std::string raw_text;
  std::optional<int> extracted;
};

struct ScoreDistribution {
  std::array<std::size_t, 5> counts{};  // counts[k-1] = number of samples scoring k
  std::size_t n_valid = 0;
  std::size_t n_invalid = 0;

  void add(std::optional<int> score);
  std::size_t count(int score) const { return counts.at(static_cast<std::size_t>(score - 1)); }
  // p(s_k) for k = 1..5; all zero when n_valid == 0.
  std::array<double, 5> probabilities() const;

  static ScoreDistribution from_counts(const std::map<int, std::size_t>& counts, std::size_t n_invalid = 0);
  static ScoreDistribution from_samples(std::span<const ScoreSample> samples);

  bool operator==(const ScoreDistribution&) const = default;
};

// Throws ValidationError when n_valid == 0. Evaluated as (sum_k c_k * k) / n_valid,
// which is the same quantity as sum_k p(s_k) * s_k and exactly the mean of the valid scores.
double weighted_score(const ScoreDistribution& d);

struct DimensionScore {
  std::string dimension;
  double weighted = 0.0;
  ScoreDistribution distribution;
  std::size_t n_requested = 0;
};

struct JudgeOptions {
  std::string backend_id;
  gateway::SamplingParams params = gateway::SamplingParams::evaluation();  // params.n_samples is n
  double validity_threshold = 0.5;
};

// Thrown when too few samples yielded a score.
class InvalidScoresError : public ValidationError {
 public:
  InvalidScoresError(std::string dimension, std::size_t n_invalid, std::size_t n_requested);
  const std::string& dimension() const { return dimension_; }
  std::size_t n_invalid() const { return n_invalid_; }

 private:
  std::string dimension_;
  std::size_t n_invalid_;
};

// Result keyed by dimension id; iteration follows registry order when read
// through ordered_dimensions().
std::map<std::string, DimensionScore> evaluate_summary(gateway::Gateway& gw, const std::string& summary,
                                                       const prompt::EvalContext& context,
                                                       std::span<const std::string> dimension_ids,
                                                       const JudgeOptions& options,
                                                       const prompt::TemplateSet& templates =
                                                           prompt::TemplateSet::defaults());

// Sorts dimension ids into registry order.
std::vector<std::string> ordered_dimensions(std::vector<std::string> ids);

// One persisted judge record.
struct InstanceScore {
  std::string instance_id;
  std::string model;
  std::string dimension;
  ScoreDistribution distribution;
  std::size_t n_requested = 0;
  double weighted = 0.0;
};

nlohmann::json to_json(const InstanceScore& s);
InstanceScore instance_score_from_json(const nlohmann::json& j);

struct EvalMatrix {
  std::vector<std::string> models;
  std::vector<std::string> dimensions;
  std::vector<std::vector<double>> cells;  // [model][dimension]
  std::vector<double> averages;            // per model

  double cell(std::string_view model, std::string_view dimension) const;
};

// Cell = mean over instances; models sorted by id; dimensions in registry order.
EvalMatrix aggregate_matrix(std::span<const InstanceScore> scores);

// Values rounded half-even to two decimals.
std::string render_matrix(const EvalMatrix& m);
nlohmann::json to_json(const EvalMatrix& m);

}  // namespace qfces::judge
