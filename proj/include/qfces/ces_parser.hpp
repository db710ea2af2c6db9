#pragma once

// Structure of a generated comparative summary: a pipe table (products in
// columns, attributes in rows) followed by a final verdict.

#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

namespace qfces::ces {

inline constexpr std::string_view kMissingValue = "NA";

struct TableRow {
  std::string attribute;
  std::vector<std::string> cells;

  bool operator==(const TableRow&) const = default;
};

struct ComparativeTable {
  std::string attribute_header = "Attribute";
  std::vector<std::string> product_columns;
  std::vector<TableRow> rows;

  bool operator==(const ComparativeTable&) const = default;
};

const std::vector<std::string>& required_row_names();

struct ParsedCes {
  ComparativeTable table;
  std::string verdict;
  std::string raw;
  // True when the table had a dash separator under its header.
  bool well_formed_table = true;
  // Indices of body rows whose cell count differed from the header (lenient mode pads or trims them).
  std::vector<std::size_t> ragged_rows;

  // Equality ignores the raw text and parse diagnostics.
  bool operator==(const ParsedCes& o) const { return table == o.table && verdict == o.verdict; }
};

// Strict: requires a header + dash separator + body rows, exactly 3 product
// columns, consistent row widths and a non-empty verdict.
// Lenient: accepts any block of pipe rows and any column count.
// Cells reading NA or N/A (any case) are normalised to "NA".
ParsedCes parse(const std::string& text, bool strict = true);

// Canonical rendering; parse(serialize(x)) == x.
std::string serialize(const ParsedCes& ces);

struct FormatCheck {
  std::string code;
  bool passed = false;
  std::string detail;
};

struct FormatReport {
  std::vector<FormatCheck> checks;
  bool passed_all = false;
};

struct FormatOptions {
  std::vector<std::regex> placeholder_patterns;
  std::size_t min_verdict_words = 15;

  static FormatOptions defaults();
};

// Check codes, in report order.
const std::vector<std::string>& check_codes();

// Never throws; every check is always present.
FormatReport check_format(const std::string& text, const FormatOptions& options = FormatOptions::defaults());

nlohmann::json to_json(const FormatReport& report);
nlohmann::json to_json(const ParsedCes& ces);

}  // namespace qfces::ces
