#include <doctest.h>

#include <map>

#include "oracles.hpp"
#include "qfces/ces_parser.hpp"
#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"

using namespace qfces;

namespace {

std::string fixture_text(const std::string& name) { return jsonl::read_text(oracle::fixture("ces/" + name)); }

std::map<std::string, bool> results(const ces::FormatReport& r) {
  std::map<std::string, bool> m;
  for (const auto& c : r.checks) m[c.code] = c.passed;
  return m;
}

}  // namespace

TEST_CASE("golden summary parses into the expected table") {
  const auto p = ces::parse(fixture_text("golden.md"));
  CHECK(p.table.attribute_header == "Attribute");
  CHECK(p.table.product_columns == std::vector<std::string>{"Aero Lite 14", "Nimbus Book 13", "Vertex Pro 15"});
  REQUIRE(p.table.rows.size() == 7);
  CHECK(p.table.rows[0].attribute == "Base Price");
  CHECK(p.table.rows[3].cells == std::vector<std::string>{"11 hours", "9 hours", "NA"});
  CHECK(p.table.rows[6].attribute == "Cons");
  CHECK(p.verdict.rfind("For a budget laptop", 0) == 0);
  CHECK(p.well_formed_table);
  CHECK(p.ragged_rows.empty());
}

TEST_CASE("text without a table is rejected") {
  try {
    ces::parse("Just some prose about three laptops.\nNothing tabular here.");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()) == "no table found");
  }
  CHECK_THROWS_AS(ces::parse("   "), ValidationError);
}

TEST_CASE("strict mode wants three product columns, lenient accepts two") {
  const std::string two = "| Attribute | A | B |\n|---|---|---|\n| Base Price | 1 | 2 |\n\nA is cheaper.";
  CHECK_THROWS_AS(ces::parse(two, true), ValidationError);
  const auto p = ces::parse(two, false);
  CHECK(p.table.product_columns.size() == 2);
  CHECK(p.verdict == "A is cheaper.");
}

TEST_CASE("ragged rows are strict errors and padded in lenient mode") {
  const std::string text = "| Attribute | A | B | C |\n|---|---|---|---|\n| Pros | x | y |\n\nVerdict here.";
  CHECK_THROWS_AS(ces::parse(text, true), ValidationError);
  const auto p = ces::parse(text, false);
  CHECK(p.ragged_rows == std::vector<std::size_t>{0});
  CHECK(p.table.rows[0].cells.size() == 3);
}

TEST_CASE("missing-value spellings normalise to NA") {
  const std::string text =
      "| Attribute | A | B | C |\n|---|---|---|---|\n| Weight | n/a | N/A | na |\n| Pros | NA | Na | ok |\n\nFine.";
  const auto p = ces::parse(text);
  CHECK(p.table.rows[0].cells == std::vector<std::string>{"NA", "NA", "NA"});
  CHECK(p.table.rows[1].cells == std::vector<std::string>{"NA", "NA", "ok"});
}

TEST_CASE("serialize then parse is the identity") {
  const auto golden = ces::parse(fixture_text("golden.md"));
  const auto again = ces::parse(ces::serialize(golden));
  CHECK(again == golden);
  CHECK(ces::serialize(again) == ces::serialize(golden));

  ces::ParsedCes piped;
  piped.table.product_columns = {"A|1", "B", "C"};
  piped.table.rows = {{"Pros", {"x | y", "NA", "z"}}};
  piped.verdict = "A wins on price.";
  CHECK(ces::parse(ces::serialize(piped)) == piped);
}

TEST_CASE("golden summary passes every format check") {
  const auto r = ces::check_format(fixture_text("golden.md"));
  CHECK(r.passed_all);
  REQUIRE(r.checks.size() == ces::check_codes().size());
  for (std::size_t i = 0; i < r.checks.size(); ++i) {
    CHECK(r.checks[i].code == ces::check_codes()[i]);
    CHECK_MESSAGE(r.checks[i].passed, r.checks[i].code);
  }
}

TEST_CASE("each mutation fails its own check") {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"mut_table_present.md", "TABLE_PRESENT"},
      {"mut_three_columns.md", "THREE_PRODUCT_COLUMNS"},
      {"mut_required_rows.md", "REQUIRED_ROWS_PRESENT"},
      {"mut_dynamic_row.md", "DYNAMIC_ROW_PRESENT"},
      {"mut_placeholder.md", "NO_PLACEHOLDER_ATTRIBUTES"},
      {"mut_missing_na.md", "MISSING_MARKED_NA"},
      {"mut_verdict_present.md", "VERDICT_PRESENT"},
      {"mut_verdict_short.md", "VERDICT_NONTRIVIAL"},
  };
  for (const auto& [file, code] : cases) {
    CAPTURE(file);
    const auto r = ces::check_format(fixture_text(file));
    const auto m = results(r);
    CHECK_FALSE(r.passed_all);
    CHECK_FALSE(m.at(code));
    for (const auto& [other, passed] : m) {
      if (other != code) CHECK_MESSAGE(passed, other);
    }
  }
}

TEST_CASE("format checks never throw") {
  for (const std::string text : {"", "no table", "| a |", "| a | b |\n| c | d |"}) {
    const auto r = ces::check_format(text);
    CHECK(r.checks.size() == ces::check_codes().size());
    CHECK_FALSE(r.passed_all);
  }
}

TEST_CASE("json views") {
  const auto p = ces::parse(fixture_text("golden.md"));
  const auto j = ces::to_json(p);
  CHECK(j["rows"].size() == 7);
  const auto r = ces::to_json(ces::check_format(fixture_text("mut_verdict_short.md")));
  CHECK(r["passed_all"] == false);
}
