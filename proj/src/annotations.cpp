#include "qfces/annotations.hpp"

#include <algorithm>
#include <numeric>

#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"
#include "qfces/metaeval.hpp"
#include "qfces/promptkit.hpp"
#include "qfces/text.hpp"

namespace qfces::annotations {

using nlohmann::json;

namespace {

ItemKey key_of(const RatingRecord& r) { return {r.query_id, r.summary_id, r.dimension}; }

// Dimensions in registry order, unknown ids afterwards in sorted order.
std::vector<std::string> ordered(const std::set<std::string>& dims) {
  std::vector<std::string> out;
  for (const auto& d : prompt::dimensions()) {
    if (dims.count(d.id)) out.push_back(d.id);
  }
  for (const auto& d : dims) {
    if (!prompt::is_dimension(d)) out.push_back(d);
  }
  return out;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? text::format_fixed(*v, 2) : "n/a"; }

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

AnnotationSet::AnnotationSet(std::vector<RatingRecord> records) {
  for (auto& r : records) add(std::move(r));
}

void AnnotationSet::add(RatingRecord r) {
  if (r.score < 1 || r.score > 5) {
    throw ValidationError("rating by " + r.rater_id + " on " + r.query_id + "/" + r.summary_id + " has score " +
                          std::to_string(r.score) + " outside 1..5");
  }
  if (r.round != 1 && r.round != 2) throw ValidationError("round must be 1 or 2");
  if (r.rater_id.empty() || r.query_id.empty() || r.summary_id.empty() || r.dimension.empty()) {
    throw ValidationError("rating record has an empty identifier");
  }
  auto key = std::make_tuple(r.rater_id, key_of(r), r.round);
  if (!index_.insert(key).second) {
    throw ValidationError("duplicate rating: rater " + r.rater_id + ", " + r.query_id + "/" + r.summary_id + "/" +
                          r.dimension + ", round " + std::to_string(r.round));
  }
  records_.push_back(std::move(r));
}

std::set<std::string> AnnotationSet::raters() const {
  std::set<std::string> out;
  for (const auto& r : records_) out.insert(r.rater_id);
  return out;
}

std::set<std::string> AnnotationSet::dimensions() const {
  std::set<std::string> out;
  for (const auto& r : records_) out.insert(r.dimension);
  return out;
}

std::set<ItemKey> AnnotationSet::items() const {
  std::set<ItemKey> out;
  for (const auto& r : records_) out.insert(key_of(r));
  return out;
}

AnnotationSet AnnotationSet::select(const std::optional<std::string>& dimension, std::optional<int> round) const {
  AnnotationSet out;
  for (const auto& r : records_) {
    if (dimension && r.dimension != *dimension) continue;
    if (round && r.round != *round) continue;
    out.add(r);
  }
  return out;
}

std::vector<std::pair<std::string, ItemKey>> AnnotationSet::missing_cells(int round) const {
  std::vector<std::pair<std::string, ItemKey>> out;
  for (const auto& item : items()) {
    for (const auto& rater : raters()) {
      if (!index_.count(std::make_tuple(rater, item, round))) out.emplace_back(rater, item);
    }
  }
  return out;
}

RatingRecord record_from_json(const json& j) {
  try {
    RatingRecord r;
    r.rater_id = j.at("rater_id").get<std::string>();
    r.query_id = j.at("query_id").get<std::string>();
    r.summary_id = j.at("summary_id").get<std::string>();
    r.dimension = j.at("dimension").get<std::string>();
    r.round = j.at("round").get<int>();
    r.score = j.at("score").get<int>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed rating record: ") + e.what());
  }
}

json to_json(const RatingRecord& r) {
  return {{"rater_id", r.rater_id}, {"query_id", r.query_id}, {"summary_id", r.summary_id},
          {"dimension", r.dimension}, {"round", r.round},      {"score", r.score}};
}

AnnotationSet AnnotationSet::load(const std::filesystem::path& path) {
  AnnotationSet set;
  jsonl::for_each(path, [&](const json& j, std::size_t line) {
    try {
      set.add(record_from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return set;
}

void AnnotationSet::save(const std::filesystem::path& path) const {
  std::vector<json> out;
  for (const auto& r : records_) out.push_back(to_json(r));
  jsonl::write_all(path, out);
}

double krippendorff_alpha(const AnnotationSet& set, const std::string& dimension, std::optional<int> round,
                          Difference difference) {
  std::map<std::pair<std::string, std::string>, std::map<std::string, int>> units;
  for (const auto& r : set.records()) {
    if (r.dimension != dimension || (round && r.round != *round)) continue;
    auto& unit = units[{r.query_id, r.summary_id}];
    if (!unit.emplace(r.rater_id, r.score).second) {
      throw ValidationError("rater " + r.rater_id + " rated " + r.query_id + "/" + r.summary_id +
                            " more than once; select a single round");
    }
  }

  std::vector<int> values;
  for (const auto& [_, unit] : units) {
    if (unit.size() < 2) continue;
    for (const auto& [__, v] : unit) values.push_back(v);
  }
  if (values.empty()) throw ValidationError("no unit of '" + dimension + "' was rated by two or more raters");
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const std::size_t k = values.size();
  auto index_of = [&](int v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) - values.begin());
  };

  std::vector<std::vector<double>> coincidence(k, std::vector<double>(k, 0.0));
  for (const auto& [_, unit] : units) {
    const std::size_t m = unit.size();
    if (m < 2) continue;
    const double w = 1.0 / static_cast<double>(m - 1);
    for (auto a = unit.begin(); a != unit.end(); ++a) {
      for (auto b = unit.begin(); b != unit.end(); ++b) {
        if (a != b) coincidence[index_of(a->second)][index_of(b->second)] += w;
      }
    }
  }
  std::vector<double> marginal(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) marginal[c] = std::accumulate(coincidence[c].begin(), coincidence[c].end(), 0.0);
  const double n = std::accumulate(marginal.begin(), marginal.end(), 0.0);

  auto delta2 = [&](std::size_t c, std::size_t e) {
    if (difference == Difference::Interval) {
      const double d = values[c] - values[e];
      return d * d;
    }
    const std::size_t lo = std::min(c, e), hi = std::max(c, e);
    double s = 0.0;
    for (std::size_t g = lo; g <= hi; ++g) s += marginal[g];
    s -= (marginal[lo] + marginal[hi]) / 2.0;
    return s * s;
  };

  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t e = 0; e < k; ++e) {
      const double d = delta2(c, e);
      observed += coincidence[c][e] * d;
      expected += marginal[c] * marginal[e] * d;
    }
  }
  observed /= n;
  expected /= n * (n - 1.0);
  if (expected == 0.0) throw ValidationError("zero expected disagreement for '" + dimension + "'");
  return 1.0 - observed / expected;
}

AgreementReport agreement_report(const AnnotationSet& round1, const AnnotationSet& merged, Difference difference) {
  std::set<std::string> dims = round1.dimensions();
  for (const auto& d : merged.dimensions()) dims.insert(d);
  AgreementReport report;
  std::vector<double> r1, r2;
  auto safe_alpha = [&](const AnnotationSet& s, const std::string& d, std::optional<int> round) -> std::optional<double> {
    try {
      return krippendorff_alpha(s, d, round, difference);
    } catch (const ValidationError&) {
      return std::nullopt;
    }
  };
  for (const auto& d : ordered(dims)) {
    AgreementRow row{d, safe_alpha(round1, d, 1), safe_alpha(merged, d, std::nullopt)};
    if (row.round1) r1.push_back(*row.round1);
    if (row.round2) r2.push_back(*row.round2);
    report.rows.push_back(std::move(row));
  }
  report.average_round1 = mean_of(r1);
  report.average_round2 = mean_of(r2);
  return report;
}

std::string render_agreement(const AgreementReport& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : r.rows) rows.push_back({row.dimension, fmt_opt(row.round1), fmt_opt(row.round2)});
  rows.push_back({"AVG", fmt_opt(r.average_round1), fmt_opt(r.average_round2)});
  return text::aligned_table({"Dimension", "Round-I", "Round-II"}, rows);
}

json to_json(const AgreementReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"dimension", row.dimension}, {"round1", opt(row.round1)}, {"round2", opt(row.round2)}});
  }
  return {{"rows", std::move(rows)}, {"average_round1", opt(r.average_round1)}, {"average_round2", opt(r.average_round2)}};
}

namespace {

using Scores = std::map<std::pair<std::string, std::string>, double>;

// Per rater, per dimension: (query, summary) -> score.
std::map<std::string, std::map<std::string, Scores>> by_rater(const AnnotationSet& set) {
  std::map<std::string, std::map<std::string, Scores>> out;
  for (const auto& r : set.records()) {
    auto& cell = out[r.rater_id][r.dimension];
    if (!cell.emplace(std::make_pair(r.query_id, r.summary_id), static_cast<double>(r.score)).second) {
      throw ValidationError("rater " + r.rater_id + " rated " + r.query_id + "/" + r.summary_id +
                            " more than once; select a single round");
    }
  }
  return out;
}

std::optional<CorrelationPair> corr_on_overlap(const Scores& a, const Scores& b, const std::string& what) {
  metaeval::MetricTable ma, mb;
  for (const auto& [k, v] : a) {
    if (auto it = b.find(k); it != b.end()) {
      ma[k] = v;
      mb[k] = it->second;
    }
  }
  if (ma.size() < 2) throw ValidationError(what + ": fewer than two co-rated items");
  metaeval::SummaryLevelOptions o;
  o.compute_pvalues = false;
  try {
    auto r = metaeval::summary_level_corr(ma, mb, o);
    return CorrelationPair{r.rho, r.tau};
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

RaterTableRow average_row(const std::string& label, const std::vector<RaterTableRow>& rows,
                          const std::vector<std::string>& dims) {
  RaterTableRow out{label, {}};
  for (const auto& d : dims) {
    std::vector<double> rho, tau;
    for (const auto& r : rows) {
      if (auto it = r.by_dimension.find(d); it != r.by_dimension.end() && it->second) {
        rho.push_back(it->second->rho);
        tau.push_back(it->second->tau);
      }
    }
    if (rho.empty()) {
      out.by_dimension[d] = std::nullopt;
    } else {
      out.by_dimension[d] = CorrelationPair{*mean_of(rho), *mean_of(tau)};
    }
  }
  return out;
}

}  // namespace

RaterTables rater_tables(const AnnotationSet& set) {
  const auto scores = by_rater(set);
  if (scores.size() < 2) throw ValidationError("rater tables need at least two raters");
  RaterTables t;
  t.dimensions = ordered(set.dimensions());
  std::vector<std::string> raters;
  for (const auto& [r, _] : scores) raters.push_back(r);

  static const Scores kEmpty;
  auto scores_of = [&](const std::string& rater, const std::string& dim) -> const Scores& {
    auto& per_dim = scores.at(rater);
    auto it = per_dim.find(dim);
    return it == per_dim.end() ? kEmpty : it->second;
  };

  for (std::size_t i = 0; i < raters.size(); ++i) {
    for (std::size_t j = i + 1; j < raters.size(); ++j) {
      RaterTableRow row{raters[i] + "-" + raters[j], {}};
      for (const auto& d : t.dimensions) {
        row.by_dimension[d] =
            corr_on_overlap(scores_of(raters[i], d), scores_of(raters[j], d), row.label + " on " + d);
      }
      t.pairwise.push_back(std::move(row));
    }
  }
  t.pairwise_average = average_row("AVG", t.pairwise, t.dimensions);

  for (const auto& d : t.dimensions) {
    // Mean of all raters per item, every rater included.
    Scores mean;
    std::map<std::pair<std::string, std::string>, std::size_t> count;
    for (const auto& rater : raters) {
      for (const auto& [k, v] : scores_of(rater, d)) {
        mean[k] += v;
        ++count[k];
      }
    }
    for (auto& [k, v] : mean) v /= static_cast<double>(count[k]);
    for (std::size_t i = 0; i < raters.size(); ++i) {
      if (t.versus_average.size() <= i) t.versus_average.push_back({"A-" + raters[i], {}});
      t.versus_average[i].by_dimension[d] =
          corr_on_overlap(scores_of(raters[i], d), mean, "A-" + raters[i] + " on " + d);
    }
  }
  t.versus_average_mean = average_row("AVG", t.versus_average, t.dimensions);
  return t;
}

std::string render_rater_tables(const RaterTables& t) {
  std::vector<std::string> header = {""};
  for (const auto& d : t.dimensions) {
    const std::string abbr = prompt::is_dimension(d) ? prompt::dimension(d).abbreviation : d;
    header.push_back(abbr + " rho");
    header.push_back(abbr + " tau");
  }
  auto emit = [&](const RaterTableRow& r) {
    std::vector<std::string> row = {r.label};
    for (const auto& d : t.dimensions) {
      const auto& c = r.by_dimension.at(d);
      row.push_back(c ? text::format_fixed(c->rho, 2) : "n/a");
      row.push_back(c ? text::format_fixed(c->tau, 2) : "n/a");
    }
    return row;
  };
  std::vector<std::vector<std::string>> pair_rows, avg_rows;
  for (const auto& r : t.pairwise) pair_rows.push_back(emit(r));
  pair_rows.push_back(emit(t.pairwise_average));
  for (const auto& r : t.versus_average) avg_rows.push_back(emit(r));
  avg_rows.push_back(emit(t.versus_average_mean));
  return "Pairwise correlation among raters\n" + text::aligned_table(header, pair_rows) +
         "\nCorrelation between raters and the average rating\n" + text::aligned_table(header, avg_rows);
}

json to_json(const RaterTables& t) {
  auto row_json = [&](const RaterTableRow& r) {
    json cells = json::object();
    for (const auto& d : t.dimensions) {
      const auto& c = r.by_dimension.at(d);
      cells[d] = c ? json{{"rho", c->rho}, {"tau", c->tau}} : json(nullptr);
    }
    return json{{"label", r.label}, {"correlations", std::move(cells)}};
  };
  json pairs = json::array(), vs = json::array();
  for (const auto& r : t.pairwise) pairs.push_back(row_json(r));
  for (const auto& r : t.versus_average) vs.push_back(row_json(r));
  return {{"dimensions", t.dimensions},
          {"pairwise", std::move(pairs)},
          {"pairwise_average", row_json(t.pairwise_average)},
          {"versus_average", std::move(vs)},
          {"versus_average_mean", row_json(t.versus_average_mean)}};
}

FlagResult flag_discrepancies(const AnnotationSet& round1, int threshold) {
  if (threshold < 1) throw ValidationError("discrepancy threshold must be >= 1");
  const auto raters = round1.raters();
  std::map<ItemKey, std::vector<int>> scores;
  for (const auto& r : round1.records()) {
    if (r.round != 1) throw ValidationError("flag_discrepancies expects round-1 records only");
    scores[key_of(r)].push_back(r.score);
  }
  FlagResult out;
  for (const auto& [item, s] : scores) {
    if (s.size() != raters.size()) {
      out.incomplete.push_back(item);
      continue;
    }
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    if (*hi - *lo >= threshold) out.flagged.push_back(item);
  }
  return out;
}

AnnotationSet merge_rounds(const AnnotationSet& round1, const AnnotationSet& round2, int threshold) {
  const auto flags = flag_discrepancies(round1, threshold);
  const std::set<ItemKey> flagged(flags.flagged.begin(), flags.flagged.end());
  std::map<std::pair<std::string, ItemKey>, const RatingRecord*> replacements;
  for (const auto& r : round2.records()) {
    if (r.round != 2) throw ValidationError("merge_rounds expects round-2 records in the second set");
    const ItemKey k = key_of(r);
    if (!flagged.count(k)) {
      throw ValidationError("round-2 rating for unflagged item " + k.query_id + "/" + k.summary_id + "/" + k.dimension);
    }
    replacements[{r.rater_id, k}] = &r;
  }
  AnnotationSet merged;
  for (const auto& r : round1.records()) {
    auto it = replacements.find({r.rater_id, key_of(r)});
    merged.add(it == replacements.end() ? r : *it->second);
  }
  // A round-2 rater who had no round-1 record on the item is added as well.
  for (const auto& [key, rec] : replacements) {
    bool present = false;
    for (const auto& r : merged.records()) {
      if (r.rater_id == key.first && key_of(r) == key.second) {
        present = true;
        break;
      }
    }
    if (!present) merged.add(*rec);
  }
  return merged;
}

}  // namespace qfces::annotations
