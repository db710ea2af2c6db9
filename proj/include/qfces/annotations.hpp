#pragma once

// Human rating sets, inter-rater agreement and the two-round annotation
// protocol (items whose round-1 scores spread by >= threshold get re-rated).

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace qfces::annotations {

struct RatingRecord {
  std::string rater_id;
  std::string query_id;
  std::string summary_id;
  std::string dimension;
  int round = 1;
  int score = 0;

  bool operator==(const RatingRecord&) const = default;
};

struct ItemKey {
  std::string query_id;
  std::string summary_id;
  std::string dimension;

  auto operator<=>(const ItemKey&) const = default;
};

class AnnotationSet {
 public:
  AnnotationSet() = default;
  explicit AnnotationSet(std::vector<RatingRecord> records);

  // Throws ValidationError on a score outside 1..5, a round other than 1 or 2,
  // or a duplicate (rater, query, summary, dimension, round).
  void add(RatingRecord r);

  const std::vector<RatingRecord>& records() const { return records_; }
  std::set<std::string> raters() const;
  std::set<std::string> dimensions() const;
  std::set<ItemKey> items() const;
  std::size_t size() const { return records_.size(); }

  // Records of one round (or all records when round is empty) for one dimension.
  AnnotationSet select(const std::optional<std::string>& dimension, std::optional<int> round) const;

  // (rater, item) cells with no record in the given round, over all raters and items seen.
  std::vector<std::pair<std::string, ItemKey>> missing_cells(int round) const;

  static AnnotationSet load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<RatingRecord> records_;
  std::set<std::tuple<std::string, ItemKey, int>> index_;
};

RatingRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RatingRecord& r);

enum class Difference { Ordinal, Interval };

// Krippendorff's alpha = 1 - D_o / D_e from the coincidence matrix of the
// pairable values. Units are (query, summary) items of the dimension. When
// `round` is empty all records are used; each rater may then rate a unit once.
// Throws ValidationError with no co-rated unit or zero expected disagreement.
double krippendorff_alpha(const AnnotationSet& set, const std::string& dimension, std::optional<int> round,
                          Difference difference = Difference::Ordinal);

struct AgreementRow {
  std::string dimension;
  std::optional<double> round1;
  std::optional<double> round2;
};

struct AgreementReport {
  std::vector<AgreementRow> rows;
  std::optional<double> average_round1;
  std::optional<double> average_round2;
};

// Round I uses round-1 records; round II uses the merged set.
AgreementReport agreement_report(const AnnotationSet& round1, const AnnotationSet& merged,
                                 Difference difference = Difference::Ordinal);
std::string render_agreement(const AgreementReport& r);
nlohmann::json to_json(const AgreementReport& r);

struct CorrelationPair {
  double rho = 0.0;
  double tau = 0.0;
};

struct RaterTableRow {
  std::string label;  // "A1-A2" style for pairs, "A-A1" for rater vs average
  std::map<std::string, std::optional<CorrelationPair>> by_dimension;
};

struct RaterTables {
  std::vector<std::string> dimensions;
  std::vector<RaterTableRow> pairwise;
  RaterTableRow pairwise_average;
  std::vector<RaterTableRow> versus_average;
  RaterTableRow versus_average_mean;
};

// Summary-level correlations (per query across summaries, averaged over
// queries) for each rater pair and for each rater against the per-item mean of
// all raters, the rater included. A dimension where every query is constant
// for a pair yields an empty cell. Throws ValidationError when a pair shares
// fewer than two rated items.
RaterTables rater_tables(const AnnotationSet& set);
std::string render_rater_tables(const RaterTables& t);
nlohmann::json to_json(const RaterTables& t);

struct FlagResult {
  std::vector<ItemKey> flagged;
  std::vector<ItemKey> incomplete;  // not every rater scored the item; never flagged
};

// An item is flagged iff max(score) - min(score) >= threshold among its round-1 ratings.
FlagResult flag_discrepancies(const AnnotationSet& round1, int threshold = 2);

// Round-2 scores replace round-1 scores of flagged items; everything else is
// carried forward as round 1. Throws ValidationError for a round-2 record on
// an item that was not flagged.
AnnotationSet merge_rounds(const AnnotationSet& round1, const AnnotationSet& round2, int threshold = 2);

}  // namespace qfces::annotations
