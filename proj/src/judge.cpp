#include "qfces/judge.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "qfces/error.hpp"
#include "qfces/text.hpp"

namespace qfces::judge {

using nlohmann::json;

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Digit run [b, e) read as a standalone integer in 1..5, else nullopt.
std::optional<int> standalone_score(std::string_view s, std::size_t b, std::size_t e) {
  if (b > 0) {
    const char prev = s[b - 1];
    if (is_alnum(prev)) return std::nullopt;
    if ((prev == '.' || prev == ',' || prev == '/') && b >= 2 && is_digit(s[b - 2])) return std::nullopt;
  }
  if (e < s.size()) {
    const char next = s[e];
    if (is_alnum(next)) return std::nullopt;
    if ((next == '.' || next == ',') && e + 1 < s.size() && is_digit(s[e + 1])) return std::nullopt;
  }
  if (e - b != 1) return std::nullopt;
  const int v = s[b] - '0';
  if (v < 1 || v > 5) return std::nullopt;
  return v;
}

constexpr std::size_t kScoreWindow = 10;

}  // namespace

std::optional<int> extract_score(std::string_view input) {
  const std::string lower = text::to_lower(input);
  const std::string_view s = lower;

  // Last "score" that is followed within the window by a standalone 1-5.
  std::optional<int> best;
  for (std::size_t pos = s.find("score"); pos != std::string_view::npos; pos = s.find("score", pos + 1)) {
    const std::size_t start = pos + 5;
    const std::size_t limit = std::min(s.size(), start + kScoreWindow);
    std::size_t b = start;
    while (b < limit && !is_digit(s[b])) ++b;
    if (b >= limit) continue;
    std::size_t e = b;
    while (e < s.size() && is_digit(s[e])) ++e;
    if (auto v = standalone_score(s, b, e)) best = v;
  }
  if (best) return best;

  std::optional<int> last;
  for (std::size_t i = 0; i < s.size();) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    std::size_t e = i;
    while (e < s.size() && is_digit(s[e])) ++e;
    if (auto v = standalone_score(s, i, e)) last = v;
    i = e;
  }
  return last;
}

void ScoreDistribution::add(std::optional<int> score) {
  if (score && *score >= 1 && *score <= 5) {
    ++counts[static_cast<std::size_t>(*score - 1)];
    ++n_valid;
  } else {
    ++n_invalid;
  }
}

std::array<double, 5> ScoreDistribution::probabilities() const {
  std::array<double, 5> p{};
  if (n_valid == 0) return p;
  for (std::size_t k = 0; k < 5; ++k) p[k] = static_cast<double>(counts[k]) / static_cast<double>(n_valid);
  return p;
}

ScoreDistribution ScoreDistribution::from_counts(const std::map<int, std::size_t>& counts, std::size_t n_invalid) {
  ScoreDistribution d;
  for (const auto& [score, c] : counts) {
    if (score < 1 || score > 5) throw ValidationError("score " + std::to_string(score) + " outside 1..5");
    d.counts[static_cast<std::size_t>(score - 1)] += c;
    d.n_valid += c;
  }
  d.n_invalid = n_invalid;
  return d;
}

ScoreDistribution ScoreDistribution::from_samples(std::span<const ScoreSample> samples) {
  ScoreDistribution d;
  for (const auto& s : samples) d.add(s.extracted);
  return d;
}

double weighted_score(const ScoreDistribution& d) {
  if (d.n_valid == 0) throw ValidationError("weighted score needs at least one valid sample");
  std::size_t total = 0;
  for (std::size_t k = 0; k < 5; ++k) total += d.counts[k] * (k + 1);
  return static_cast<double>(total) / static_cast<double>(d.n_valid);
}

InvalidScoresError::InvalidScoresError(std::string dimension, std::size_t n_invalid, std::size_t n_requested)
    : ValidationError("dimension '" + dimension + "': " + std::to_string(n_invalid) + " of " +
                      std::to_string(n_requested) + " judge outputs had no valid score"),
      dimension_(std::move(dimension)),
      n_invalid_(n_invalid) {}

std::vector<std::string> ordered_dimensions(std::vector<std::string> ids) {
  std::vector<std::string> out;
  for (const auto& d : prompt::dimensions()) {
    if (std::find(ids.begin(), ids.end(), d.id) != ids.end()) out.push_back(d.id);
  }
  for (const auto& id : ids) {
    if (!prompt::is_dimension(id)) throw ValidationError("unknown dimension: '" + id + "'");
  }
  return out;
}

std::map<std::string, DimensionScore> evaluate_summary(gateway::Gateway& gw, const std::string& summary,
                                                       const prompt::EvalContext& context,
                                                       std::span<const std::string> dimension_ids,
                                                       const JudgeOptions& options,
                                                       const prompt::TemplateSet& templates) {
  if (text::trim(summary).empty()) throw ValidationError("cannot evaluate an empty summary");
  if (options.params.n_samples < 1) throw ValidationError("n must be >= 1");
  const auto n = static_cast<std::size_t>(options.params.n_samples);

  std::map<std::string, DimensionScore> out;
  for (const auto& id : ordered_dimensions({dimension_ids.begin(), dimension_ids.end()})) {
    auto req = prompt::render_evaluation(prompt::dimension(id), summary, context, templates);
    req.backend_id = options.backend_id;
    req.params = options.params;
    const auto outcomes = gw.sample_n(req, n);

    std::vector<ScoreSample> samples;
    samples.reserve(outcomes.size());
    for (const auto& o : outcomes) {
      ScoreSample s;
      if (o.ok()) {
        s.raw_text = o.result->text;
        s.extracted = extract_score(s.raw_text);
      }
      samples.push_back(std::move(s));
    }
    DimensionScore ds;
    ds.dimension = id;
    ds.distribution = ScoreDistribution::from_samples(samples);
    ds.n_requested = n;
    if (static_cast<double>(ds.distribution.n_valid) / static_cast<double>(n) < options.validity_threshold ||
        ds.distribution.n_valid == 0) {
      throw InvalidScoresError(id, ds.distribution.n_invalid, n);
    }
    ds.weighted = weighted_score(ds.distribution);
    out.emplace(id, std::move(ds));
  }
  return out;
}

json to_json(const InstanceScore& s) {
  json counts = json::object();
  for (int k = 1; k <= 5; ++k) counts[std::to_string(k)] = s.distribution.count(k);
  return {{"instance_id", s.instance_id}, {"model", s.model},           {"dimension", s.dimension},
          {"counts", std::move(counts)},  {"n_valid", s.distribution.n_valid},
          {"n_invalid", s.distribution.n_invalid}, {"n_requested", s.n_requested}, {"o", s.weighted}};
}

InstanceScore instance_score_from_json(const json& j) {
  try {
    InstanceScore s;
    s.instance_id = j.at("instance_id").get<std::string>();
    s.model = j.at("model").get<std::string>();
    s.dimension = j.at("dimension").get<std::string>();
    std::map<int, std::size_t> counts;
    for (const auto& [k, v] : j.at("counts").items()) counts[std::stoi(k)] = v.get<std::size_t>();
    s.distribution = ScoreDistribution::from_counts(counts, j.value("n_invalid", std::size_t{0}));
    s.n_requested = j.value("n_requested", s.distribution.n_valid + s.distribution.n_invalid);
    s.weighted = j.at("o").get<double>();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed judge record: ") + e.what());
  }
}

double EvalMatrix::cell(std::string_view model, std::string_view dimension) const {
  auto mi = std::find(models.begin(), models.end(), model);
  auto di = std::find(dimensions.begin(), dimensions.end(), dimension);
  if (mi == models.end() || di == dimensions.end()) {
    throw ValidationError("no cell for (" + std::string(model) + ", " + std::string(dimension) + ")");
  }
  return cells[static_cast<std::size_t>(mi - models.begin())][static_cast<std::size_t>(di - dimensions.begin())];
}

EvalMatrix aggregate_matrix(std::span<const InstanceScore> scores) {
  if (scores.empty()) throw ValidationError("no scores to aggregate");
  std::set<std::string> models;
  std::vector<std::string> dims;
  for (const auto& s : scores) {
    models.insert(s.model);
    if (std::find(dims.begin(), dims.end(), s.dimension) == dims.end()) dims.push_back(s.dimension);
  }
  EvalMatrix m;
  m.models.assign(models.begin(), models.end());
  m.dimensions = ordered_dimensions(dims);
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> acc;
  for (const auto& s : scores) {
    auto& a = acc[{s.model, s.dimension}];
    a.first += s.weighted;
    ++a.second;
  }
  for (const auto& model : m.models) {
    std::vector<double> row;
    for (const auto& dim : m.dimensions) {
      auto it = acc.find({model, dim});
      if (it == acc.end()) throw ValidationError("no scores for model '" + model + "' on dimension '" + dim + "'");
      row.push_back(it->second.first / static_cast<double>(it->second.second));
    }
    double sum = 0.0;
    for (double v : row) sum += v;
    m.averages.push_back(sum / static_cast<double>(row.size()));
    m.cells.push_back(std::move(row));
  }
  return m;
}

std::string render_matrix(const EvalMatrix& m) {
  std::vector<std::string> header = {"Model"};
  for (const auto& d : m.dimensions) header.push_back(prompt::dimension(d).abbreviation);
  header.push_back("Average");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < m.models.size(); ++i) {
    std::vector<std::string> row = {m.models[i]};
    for (double v : m.cells[i]) row.push_back(text::format_fixed(v, 2));
    row.push_back(text::format_fixed(m.averages[i], 2));
    rows.push_back(std::move(row));
  }
  return text::aligned_table(header, rows);
}

json to_json(const EvalMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.models.size(); ++i) {
    json cells = json::object();
    for (std::size_t d = 0; d < m.dimensions.size(); ++d) cells[m.dimensions[d]] = m.cells[i][d];
    rows.push_back({{"model", m.models[i]}, {"scores", std::move(cells)}, {"average", m.averages[i]}});
  }
  return {{"dimensions", m.dimensions}, {"rows", std::move(rows)}};
}

}  // namespace qfces::judge
