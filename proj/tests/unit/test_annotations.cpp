#include <doctest.h>

#include "oracles.hpp"
#include "qfces/annotations.hpp"
#include "qfces/error.hpp"

using namespace qfces;
using namespace qfces::annotations;

namespace {

// raters -> per-item scores over items i1..iN, one dimension.
AnnotationSet grid(const std::map<std::string, std::vector<int>>& by_rater, int round = 1,
                   const std::string& dim = "clarity") {
  AnnotationSet s;
  for (const auto& [rater, scores] : by_rater) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] == 0) continue;
      s.add({rater, "q", "i" + std::to_string(i + 1), dim, round, scores[i]});
    }
  }
  return s;
}

const std::map<std::string, std::vector<int>> kCanonical = {
    {"A1", {1, 2, 3, 4}}, {"A2", {1, 3, 3, 4}}, {"A3", {2, 2, 4, 5}}};

std::vector<std::vector<int>> units(const std::map<std::string, std::vector<int>>& by_rater) {
  std::vector<std::vector<int>> u(by_rater.begin()->second.size());
  for (const auto& [r, scores] : by_rater) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] != 0) u[i].push_back(scores[i]);
    }
  }
  return u;
}

AnnotationSet triple(int a, int b, int c) {
  return grid({{"A1", {a}}, {"A2", {b}}, {"A3", {c}}});
}

}  // namespace

TEST_CASE("perfect agreement gives alpha one") {
  const auto s = grid({{"A1", {1, 2, 3, 5}}, {"A2", {1, 2, 3, 5}}, {"A3", {1, 2, 3, 5}}});
  CHECK(krippendorff_alpha(s, "clarity", 1) == 1.0);
  CHECK(krippendorff_alpha(s, "clarity", 1, Difference::Interval) == 1.0);
}

TEST_CASE("canonical fixture matches the pairwise oracle") {
  const auto s = grid(kCanonical);
  const double ord = krippendorff_alpha(s, "clarity", 1);
  const double itv = krippendorff_alpha(s, "clarity", 1, Difference::Interval);
  CHECK(std::abs(ord - 0.8102869352869353) < 1e-9);
  CHECK(std::abs(itv - 0.7924528301886793) < 1e-9);
  CHECK(std::abs(ord - oracle::alpha(units(kCanonical), true)) < 1e-9);
  CHECK(std::abs(itv - oracle::alpha(units(kCanonical), false)) < 1e-9);
}

TEST_CASE("alpha does not depend on rater labels") {
  const auto relabeled = grid({{"zed", {1, 2, 3, 4}}, {"amy", {1, 3, 3, 4}}, {"bob", {2, 2, 4, 5}}});
  CHECK(krippendorff_alpha(relabeled, "clarity", 1) == doctest::Approx(krippendorff_alpha(grid(kCanonical), "clarity", 1)).epsilon(1e-12));
}

TEST_CASE("a noisy rater lowers alpha") {
  auto noisy = kCanonical;
  noisy["A4"] = {5, 1, 1, 2};
  const double a = krippendorff_alpha(grid(noisy), "clarity", 1);
  CHECK(a < krippendorff_alpha(grid(kCanonical), "clarity", 1));
  CHECK(std::abs(a - 0.05673963133640553) < 1e-9);
}

TEST_CASE("missing ratings and unpairable units") {
  // Units: [1], [2,3,2], [3,3,4], [4,4].
  const std::map<std::string, std::vector<int>> m = {{"A1", {1, 2, 3, 4}}, {"A2", {0, 3, 3, 4}}, {"A3", {0, 2, 4, 0}}};
  const double a = krippendorff_alpha(grid(m), "clarity", 1);
  CHECK(std::abs(a - 0.6441666666666667) < 1e-9);
  CHECK(std::abs(a - oracle::alpha(units(m), true)) < 1e-9);
  CHECK_THROWS_AS(krippendorff_alpha(grid({{"A1", {1, 2}}, {"A2", {0, 0}}}), "clarity", 1), ValidationError);
  CHECK_THROWS_AS(krippendorff_alpha(grid({{"A1", {3, 3}}, {"A2", {3, 3}}}), "clarity", 1), ValidationError);
}

TEST_CASE("random sets agree with the oracle") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 30; ++t) {
    std::map<std::string, std::vector<int>> m;
    for (int r = 0; r < 3; ++r) {
      std::vector<int> scores;
      for (double v : oracle::random_scores(rng, 6)) scores.push_back(static_cast<int>(v));
      m["R" + std::to_string(r)] = scores;
    }
    for (bool ordinal : {true, false}) {
      const double got = krippendorff_alpha(grid(m), "clarity", 1, ordinal ? Difference::Ordinal : Difference::Interval);
      CHECK(std::abs(got - oracle::alpha(units(m), ordinal)) < 1e-9);
    }
  }
}

TEST_CASE("record validation") {
  AnnotationSet s;
  s.add({"A1", "q", "s", "clarity", 1, 3});
  CHECK_THROWS_AS(s.add({"A1", "q", "s", "clarity", 1, 4}), ValidationError);
  CHECK_NOTHROW(s.add({"A1", "q", "s", "clarity", 2, 4}));
  CHECK_THROWS_AS(s.add({"A1", "q", "s", "fluency", 1, 0}), ValidationError);
  CHECK_THROWS_AS(s.add({"A1", "q", "s", "fluency", 1, 6}), ValidationError);
  CHECK_THROWS_AS(s.add({"A1", "q", "s", "fluency", 3, 2}), ValidationError);
  CHECK(s.size() == 2);
  // One rater twice in the same unit is ambiguous across rounds.
  CHECK_THROWS_AS(krippendorff_alpha(s, "clarity", std::nullopt), ValidationError);
}

TEST_CASE("json and file round trip") {
  const auto s = grid(kCanonical);
  const auto dir = oracle::scratch_dir("annotations");
  s.save(dir / "r.jsonl");
  const auto back = AnnotationSet::load(dir / "r.jsonl");
  CHECK(back.records() == s.records());
  CHECK(record_from_json(to_json(s.records()[0])) == s.records()[0]);
  CHECK_THROWS_AS(record_from_json({{"rater_id", "x"}}), ValidationError);
  CHECK(back.raters() == std::set<std::string>{"A1", "A2", "A3"});
  CHECK(back.items().size() == 4);
}

TEST_CASE("missing cells") {
  const auto s = grid({{"A1", {1, 2}}, {"A2", {3, 0}}});
  const auto missing = s.missing_cells(1);
  REQUIRE(missing.size() == 1);
  CHECK(missing[0].first == "A2");
  CHECK(missing[0].second.summary_id == "i2");
}

TEST_CASE("flagging uses a spread of two or more") {
  CHECK(flag_discrepancies(triple(5, 3, 4)).flagged.size() == 1);
  CHECK(flag_discrepancies(triple(4, 4, 5)).flagged.empty());
  CHECK(flag_discrepancies(triple(1, 5, 3)).flagged.size() == 1);
  CHECK(flag_discrepancies(triple(4, 4, 5), 1).flagged.size() == 1);
  CHECK_THROWS_AS(flag_discrepancies(triple(4, 4, 5), 0), ValidationError);

  auto partial = triple(1, 5, 3);
  partial.add({"A1", "q", "i9", "clarity", 1, 1});
  partial.add({"A2", "q", "i9", "clarity", 1, 5});
  const auto f = flag_discrepancies(partial);
  CHECK(f.flagged.size() == 1);
  REQUIRE(f.incomplete.size() == 1);
  CHECK(f.incomplete[0].summary_id == "i9");
}

TEST_CASE("merging replaces exactly the flagged items") {
  // i1 = (5,3,4) flagged, i2 = (4,4,5) not.
  const auto r1 = grid({{"A1", {5, 4}}, {"A2", {3, 4}}, {"A3", {4, 5}}});
  const auto r2 = grid({{"A1", {4}}, {"A2", {4}}, {"A3", {4}}}, 2);
  const auto merged = merge_rounds(r1, r2);
  CHECK(merged.size() == 6);
  for (const auto& r : merged.records()) {
    if (r.summary_id == "i1") {
      CHECK(r.round == 2);
      CHECK(r.score == 4);
    } else {
      CHECK(r.round == 1);
    }
  }

  const auto stray = grid({{"A1", {0, 5}}}, 2);
  CHECK_THROWS_AS(merge_rounds(r1, stray), ValidationError);

  // A rater who re-rates only some flagged items keeps round-1 scores elsewhere.
  const auto partial = grid({{"A2", {4}}}, 2);
  const auto m2 = merge_rounds(r1, partial);
  CHECK(m2.size() == 6);
  int round2 = 0;
  for (const auto& r : m2.records()) round2 += r.round == 2;
  CHECK(round2 == 1);
}

TEST_CASE("agreement report rows and averages") {
  AnnotationSet r1 = grid(kCanonical);
  const auto fluency = grid(kCanonical, 1, "fluency");
  for (const auto& r : fluency.records()) r1.add(r);
  const auto report = agreement_report(r1, r1);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].dimension == "clarity");
  CHECK(*report.rows[0].round1 == doctest::Approx(0.8102869352869353));
  CHECK(*report.average_round1 == doctest::Approx(0.8102869352869353));
  CHECK(*report.average_round2 == doctest::Approx(0.8102869352869353));
  const auto text = render_agreement(report);
  CHECK(text.find("AVG") != std::string::npos);
  CHECK(text.find("0.81") != std::string::npos);
  CHECK(to_json(report)["rows"].size() == 2);
}

TEST_CASE("rater correlation tables match the oracle") {
  AnnotationSet s;
  const std::map<std::string, std::map<std::string, std::vector<int>>> scores = {
      {"R1", {{"q1", {5, 3, 1}}, {"q2", {2, 4, 4}}}},
      {"R2", {{"q1", {4, 3, 2}}, {"q2", {1, 5, 3}}}},
      {"R3", {{"q1", {3, 4, 1}}, {"q2", {2, 2, 5}}}},
  };
  for (const auto& [rater, by_query] : scores) {
    for (const auto& [q, v] : by_query) {
      for (std::size_t i = 0; i < v.size(); ++i) s.add({rater, q, "s" + std::to_string(i + 1), "clarity", 1, v[i]});
    }
  }
  const auto t = rater_tables(s);
  REQUIRE(t.pairwise.size() == 3);
  REQUIRE(t.versus_average.size() == 3);
  auto check = [](const RaterTableRow& row, const std::string& label, double rho, double tau) {
    CHECK(row.label == label);
    const auto& c = row.by_dimension.at("clarity");
    REQUIRE(c.has_value());
    CHECK(std::abs(c->rho - rho) < 1e-9);
    CHECK(std::abs(c->tau - tau) < 1e-9);
  };
  check(t.pairwise[0], "R1-R2", 0.9330127018922194, 0.9082482904638631);
  check(t.pairwise[1], "R1-R3", 0.5, 0.41666666666666663);
  check(t.pairwise[2], "R2-R3", 0.25, 0.16666666666666666);
  check(t.versus_average[0], "A-R1", 0.9330127018922194, 0.9082482904638631);
  check(t.versus_average[1], "A-R2", 0.75, 0.6666666666666666);
  check(t.versus_average[2], "A-R3", 0.6830127018922194, 0.5749149571305298);
  CHECK(t.pairwise_average.by_dimension.at("clarity")->rho ==
        doctest::Approx((0.9330127018922194 + 0.5 + 0.25) / 3));
  const auto text = render_rater_tables(t);
  CHECK(text.find("R1-R2") != std::string::npos);
  CHECK(text.find("A-R3") != std::string::npos);
  CHECK(to_json(t)["pairwise"].size() == 3);
}

TEST_CASE("rater pairs need two shared items") {
  AnnotationSet s;
  s.add({"R1", "q", "s1", "clarity", 1, 3});
  s.add({"R2", "q", "s2", "clarity", 1, 4});
  CHECK_THROWS_AS(rater_tables(s), ValidationError);
}
