#include "qfces/ces_parser.hpp"

#include <algorithm>
#include <optional>

#include "qfces/error.hpp"
#include "qfces/text.hpp"

namespace qfces::ces {

using nlohmann::json;

namespace {

bool is_pipe_row(std::string_view line) {
  std::string_view t = text::trim(line);
  if (t.empty()) return false;
  return t.front() == '|' || std::count(t.begin(), t.end(), '|') >= 2;
}

std::vector<std::string> split_cells(std::string_view line) {
  std::string_view t = text::trim(line);
  if (!t.empty() && t.front() == '|') t.remove_prefix(1);
  if (!t.empty() && t.back() == '|' && !(t.size() >= 2 && t[t.size() - 2] == '\\')) t.remove_suffix(1);
  std::vector<std::string> cells;
  std::string cur;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '\\' && i + 1 < t.size() && t[i + 1] == '|') {
      cur += '|';
      ++i;
    } else if (t[i] == '|') {
      cells.emplace_back(text::trim(cur));
      cur.clear();
    } else {
      cur += t[i];
    }
  }
  cells.emplace_back(text::trim(cur));
  return cells;
}

bool is_separator(const std::vector<std::string>& cells) {
  if (cells.empty()) return false;
  for (const auto& c : cells) {
    std::string_view v = c;
    if (!v.empty() && v.front() == ':') v.remove_prefix(1);
    if (!v.empty() && v.back() == ':') v.remove_suffix(1);
    if (v.empty() || v.find_first_not_of('-') != std::string_view::npos) return false;
  }
  return true;
}

std::string normalize_cell(std::string cell) {
  const std::string l = text::to_lower(cell);
  if (l == "na" || l == "n/a") return std::string(kMissingValue);
  return cell;
}

std::string escape_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

// Lowercased, whitespace-collapsed attribute name with markdown emphasis removed.
std::string attribute_key(std::string_view name) {
  std::string s(name);
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '*' || c == '_' || c == '`'; }), s.end());
  std::string k = text::normalize_key(s);
  while (!k.empty() && k.back() == ':') k.pop_back();
  return k;
}

std::string strip_verdict_heading(const std::string& after) {
  static const std::regex kHeading(
      R"(^\s*(#{1,6}\s*)?[*_]*\s*final\s+verdict\s*[*_]*\s*:?\s*[*_]*[ \t]*)", std::regex::icase);
  std::string v(text::trim(after));
  std::smatch m;
  if (std::regex_search(v, m, kHeading) && m.position(0) == 0) v = v.substr(static_cast<std::size_t>(m.length(0)));
  return std::string(text::trim(v));
}

struct Located {
  std::size_t header = 0;
  std::size_t body_begin = 0;
  std::size_t end = 0;  // one past the last table line
  bool well_formed = false;
};

std::optional<Located> locate_table(const std::vector<std::string>& lines) {
  for (std::size_t i = 0; i + 2 < lines.size(); ++i) {
    if (is_pipe_row(lines[i]) && is_pipe_row(lines[i + 1]) && is_separator(split_cells(lines[i + 1])) &&
        is_pipe_row(lines[i + 2])) {
      std::size_t end = i + 2;
      while (end < lines.size() && is_pipe_row(lines[end])) ++end;
      return Located{i, i + 2, end, true};
    }
  }
  // No separator anywhere: fall back to the first block of two or more pipe rows.
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!is_pipe_row(lines[i])) continue;
    std::size_t end = i;
    while (end < lines.size() && is_pipe_row(lines[end])) ++end;
    if (end - i >= 2) return Located{i, i + 1, end, false};
    i = end;
  }
  return std::nullopt;
}

}  // namespace

const std::vector<std::string>& required_row_names() {
  static const std::vector<std::string> kNames = {"Base Price", "Final Price", "Average Rating", "Pros", "Cons"};
  return kNames;
}

ParsedCes parse(const std::string& input, bool strict) {
  if (text::trim(input).empty()) throw ValidationError("empty summary text");
  const auto lines = text::split_lines(input);
  auto loc = locate_table(lines);
  if (!loc || (strict && !loc->well_formed)) throw ValidationError("no table found");

  ParsedCes out;
  out.raw = input;
  out.well_formed_table = loc->well_formed;
  auto header = split_cells(lines[loc->header]);
  out.table.attribute_header = header.front();
  out.table.product_columns.assign(header.begin() + 1, header.end());
  const std::size_t width = out.table.product_columns.size();

  for (std::size_t i = loc->body_begin; i < loc->end; ++i) {
    auto cells = split_cells(lines[i]);
    if (is_separator(cells)) continue;
    TableRow row;
    row.attribute = cells.front();
    row.cells.assign(cells.begin() + 1, cells.end());
    if (row.cells.size() != width) {
      out.ragged_rows.push_back(out.table.rows.size());
      row.cells.resize(width);
    }
    for (auto& c : row.cells) c = normalize_cell(std::move(c));
    out.table.rows.push_back(std::move(row));
  }

  std::vector<std::string> rest(lines.begin() + static_cast<std::ptrdiff_t>(loc->end), lines.end());
  out.verdict = strip_verdict_heading(text::join(rest, "\n"));

  if (strict) {
    if (width != 3) {
      throw ValidationError("table has " + std::to_string(width) + " product columns, expected 3");
    }
    if (!out.ragged_rows.empty()) {
      throw ValidationError("table row '" + out.table.rows[out.ragged_rows.front()].attribute +
                            "' does not have 3 cells");
    }
    if (out.verdict.empty()) throw ValidationError("no verdict text after the table");
  }
  return out;
}

std::string serialize(const ParsedCes& ces) {
  const auto& t = ces.table;
  std::string out = "| " + escape_cell(t.attribute_header);
  for (const auto& c : t.product_columns) out += " | " + escape_cell(c);
  out += " |\n|";
  for (std::size_t i = 0; i <= t.product_columns.size(); ++i) out += " --- |";
  out += "\n";
  for (const auto& r : t.rows) {
    out += "| " + escape_cell(r.attribute);
    for (const auto& c : r.cells) out += " | " + escape_cell(c);
    out += " |\n";
  }
  out += "\nFinal Verdict: " + ces.verdict + "\n";
  return out;
}

FormatOptions FormatOptions::defaults() {
  FormatOptions o;
  const auto icase = std::regex::icase;
  o.placeholder_patterns = {
      std::regex(R"(^(attribute|attr|feature)\s*([0-9]+|[a-z])$)", icase),
      std::regex(R"(^(key|dynamic|selected|custom)\s+(attribute|feature)(\s*[0-9]+)?$)", icase),
      std::regex(R"(^(attribute|feature)\s+name(\s*[0-9]+)?$)", icase),
      std::regex(R"(^[<\[{].*[>\]}]$)", icase),
  };
  return o;
}

const std::vector<std::string>& check_codes() {
  static const std::vector<std::string> kCodes = {
      "TABLE_PRESENT",          "THREE_PRODUCT_COLUMNS", "REQUIRED_ROWS_PRESENT", "DYNAMIC_ROW_PRESENT",
      "NO_PLACEHOLDER_ATTRIBUTES", "MISSING_MARKED_NA",  "VERDICT_PRESENT",       "VERDICT_NONTRIVIAL"};
  return kCodes;
}

FormatReport check_format(const std::string& input, const FormatOptions& options) {
  FormatReport report;
  auto add = [&](std::size_t idx, bool passed, std::string detail) {
    report.checks.push_back({check_codes()[idx], passed, std::move(detail)});
  };

  std::optional<ParsedCes> parsed;
  std::string parse_error;
  try {
    parsed = parse(input, /*strict=*/false);
  } catch (const std::exception& e) {
    parse_error = e.what();
  }

  if (!parsed) {
    for (std::size_t i = 0; i < 6; ++i) add(i, false, parse_error);
    // Without a table there is nothing to separate a verdict from.
    const std::string verdict = strip_verdict_heading(input);
    const std::size_t words = text::count_words(verdict);
    add(6, words > 0, words > 0 ? "verdict text found" : "no verdict text");
    add(7, words == 0 || words >= options.min_verdict_words,
        words == 0 ? "skipped: no verdict" : std::to_string(words) + " words");
  } else {
    const auto& p = *parsed;
    const auto& t = p.table;

    add(0, p.well_formed_table,
        p.well_formed_table ? "pipe table with header separator" : "pipe rows without a header separator row");

    const bool three = t.product_columns.size() == 3 && p.ragged_rows.empty();
    std::string cols_detail = std::to_string(t.product_columns.size()) + " product columns";
    if (!p.ragged_rows.empty()) cols_detail += "; " + std::to_string(p.ragged_rows.size()) + " ragged rows";
    add(1, three, cols_detail);

    std::vector<std::string> keys;
    for (const auto& r : t.rows) keys.push_back(attribute_key(r.attribute));
    std::vector<std::string> missing;
    for (const auto& name : required_row_names()) {
      if (std::find(keys.begin(), keys.end(), attribute_key(name)) == keys.end()) missing.push_back(name);
    }
    add(2, missing.empty(), missing.empty() ? "all required rows present" : "missing: " + text::join(missing, ", "));

    static const std::vector<std::string> kTitleRows = {"title", "product", "product title", "product name", "name"};
    std::size_t dynamic = 0;
    for (const auto& k : keys) {
      const bool required = std::any_of(required_row_names().begin(), required_row_names().end(),
                                        [&](const std::string& n) { return attribute_key(n) == k; });
      const bool title = std::find(kTitleRows.begin(), kTitleRows.end(), k) != kTitleRows.end();
      if (!required && !title && !k.empty()) ++dynamic;
    }
    add(3, dynamic > 0, std::to_string(dynamic) + " query-driven rows");

    std::vector<std::string> placeholders;
    for (const auto& r : t.rows) {
      const std::string k = attribute_key(r.attribute);
      for (const auto& re : options.placeholder_patterns) {
        if (std::regex_match(k, re)) {
          placeholders.push_back(r.attribute);
          break;
        }
      }
    }
    add(4, placeholders.empty(),
        placeholders.empty() ? "no placeholder names" : "placeholder names: " + text::join(placeholders, ", "));

    std::vector<std::string> empty_cells;
    for (const auto& r : t.rows) {
      for (std::size_t c = 0; c < r.cells.size(); ++c) {
        if (text::trim(r.cells[c]).empty()) {
          empty_cells.push_back(r.attribute + "/" + (c < t.product_columns.size() ? t.product_columns[c] : "?"));
        }
      }
    }
    add(5, empty_cells.empty(),
        empty_cells.empty() ? "no empty cells" : "empty cells: " + text::join(empty_cells, ", "));

    const std::size_t words = text::count_words(p.verdict);
    add(6, words > 0, words > 0 ? "verdict text found" : "no verdict text after the table");
    add(7, words == 0 || words >= options.min_verdict_words,
        words == 0 ? "skipped: no verdict" : std::to_string(words) + " words");
  }

  report.passed_all =
      std::all_of(report.checks.begin(), report.checks.end(), [](const FormatCheck& c) { return c.passed; });
  return report;
}

json to_json(const FormatReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks) checks.push_back({{"code", c.code}, {"passed", c.passed}, {"detail", c.detail}});
  return {{"passed_all", report.passed_all}, {"checks", std::move(checks)}};
}

json to_json(const ParsedCes& ces) {
  json rows = json::array();
  for (const auto& r : ces.table.rows) rows.push_back({{"attribute", r.attribute}, {"cells", r.cells}});
  return {{"attribute_header", ces.table.attribute_header},
          {"product_columns", ces.table.product_columns},
          {"rows", std::move(rows)},
          {"verdict", ces.verdict}};
}

}  // namespace qfces::ces
