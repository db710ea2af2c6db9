#include "qfces/catalog.hpp"

#include <regex>
#include <set>
#include <sstream>

#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"
#include "qfces/text.hpp"

namespace qfces::catalog {

using nlohmann::json;

std::size_t Dataset::product_count() const {
  std::size_t n = 0;
  for (const auto& q : instances) n += q.products.size();
  return n;
}

const QueryInstance* Dataset::find(std::string_view query_id) const {
  for (const auto& q : instances) {
    if (q.query_id == query_id) return &q;
  }
  return nullptr;
}

namespace {

const std::regex kAmount(R"(^[0-9]+(\.[0-9]+)?$)");
const std::regex kCurrency(R"(^[A-Z]{3}$)");

void check_price(const Price& p, const char* label, std::vector<std::string>& out) {
  if (!std::regex_match(p.amount, kAmount)) {
    out.push_back(std::string(label) + " amount is not a non-negative decimal: '" + p.amount + "'");
  }
  if (!std::regex_match(p.currency, kCurrency)) {
    out.push_back(std::string(label) + " currency is not an ISO-4217 code: '" + p.currency + "'");
  }
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing key '") + key + "'");
  return j.at(key);
}

std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw ValidationError(std::string("key '") + key + "' must be a string");
  return v.get<std::string>();
}

Price price_from_json(const json& j, const char* key) {
  const json& v = require(j, key);
  Price p;
  p.amount = require_string(v, "amount");
  p.currency = require_string(v, "currency");
  return p;
}

json price_to_json(const Price& p) { return {{"amount", p.amount}, {"currency", p.currency}}; }

}  // namespace

std::vector<std::string> validate(const ProductRecord& p) {
  std::vector<std::string> errs;
  if (text::trim(p.title).empty()) errs.push_back("product " + p.product_id + ": title is empty");
  if (!(p.average_rating >= 1.0 && p.average_rating <= 5.0)) {
    std::ostringstream os;
    os << "product " << p.product_id << ": average_rating " << p.average_rating << " outside [1,5]";
    errs.push_back(os.str());
  }
  for (const auto& r : p.reviews) {
    if (r.rating && (*r.rating < 1 || *r.rating > 5)) {
      errs.push_back("product " + p.product_id + ": review rating " + std::to_string(*r.rating) +
                     " outside 1..5");
    }
  }
  std::vector<std::string> price_errs;
  check_price(p.base_price, "base_price", price_errs);
  check_price(p.final_price, "final_price", price_errs);
  if (p.base_price.currency != p.final_price.currency) {
    price_errs.push_back("base_price and final_price currencies differ");
  }
  for (auto& e : price_errs) errs.push_back("product " + p.product_id + ": " + e);
  return errs;
}

std::vector<std::string> validate(const QueryInstance& q) {
  std::vector<std::string> errs;
  if (text::trim(q.query).empty()) errs.push_back("query is empty");
  if (q.products.size() != kProductsPerQuery) {
    errs.push_back("product count != 3 (got " + std::to_string(q.products.size()) + ")");
  }
  for (const auto& p : q.products) {
    auto pe = validate(p);
    errs.insert(errs.end(), pe.begin(), pe.end());
  }
  return errs;
}

ProductRecord product_from_json(const json& j) {
  ProductRecord p;
  p.product_id = require_string(j, "product_id");
  p.title = require_string(j, "title");
  p.description = require_string(j, "description");
  for (const auto& f : require(j, "key_features")) p.key_features.push_back(f.get<std::string>());
  for (const auto& s : require(j, "specifications")) {
    p.specifications.push_back({require_string(s, "name"), require_string(s, "value")});
  }
  for (const auto& r : require(j, "reviews")) {
    Review rv;
    rv.text = require_string(r, "text");
    if (r.contains("rating") && !r.at("rating").is_null()) {
      const json& rating = r.at("rating");
      if (!rating.is_number_integer()) throw ValidationError("review rating must be an integer");
      rv.rating = rating.get<int>();
    }
    p.reviews.push_back(std::move(rv));
  }
  const json& avg = require(j, "average_rating");
  if (!avg.is_number()) throw ValidationError("average_rating must be a number");
  p.average_rating = avg.get<double>();
  p.base_price = price_from_json(j, "base_price");
  p.final_price = price_from_json(j, "final_price");
  return p;
}

QueryInstance instance_from_json(const json& j) {
  QueryInstance q;
  q.query_id = require_string(j, "query_id");
  q.query = require_string(j, "query");
  const json& products = require(j, "products");
  if (!products.is_array()) throw ValidationError("products must be an array");
  for (const auto& p : products) q.products.push_back(product_from_json(p));
  return q;
}

json to_json(const ProductRecord& p) {
  json specs = json::array();
  for (const auto& s : p.specifications) specs.push_back({{"name", s.name}, {"value", s.value}});
  json reviews = json::array();
  for (const auto& r : p.reviews) {
    json rv = {{"text", r.text}};
    if (r.rating) rv["rating"] = *r.rating;
    reviews.push_back(std::move(rv));
  }
  return {{"product_id", p.product_id},
          {"title", p.title},
          {"description", p.description},
          {"key_features", p.key_features},
          {"specifications", std::move(specs)},
          {"reviews", std::move(reviews)},
          {"average_rating", p.average_rating},
          {"base_price", price_to_json(p.base_price)},
          {"final_price", price_to_json(p.final_price)}};
}

json to_json(const QueryInstance& q) {
  json products = json::array();
  for (const auto& p : q.products) products.push_back(to_json(p));
  return {{"query_id", q.query_id}, {"query", q.query}, {"products", std::move(products)}};
}

Dataset parse_dataset(std::string_view content, bool strict, std::string_view source) {
  Dataset ds;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  for (const auto& line : text::split_lines(content)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + ": malformed record: " + e.what());
    }
    QueryInstance q;
    try {
      q = instance_from_json(j);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": malformed record: " + e.what());
    } catch (const json::exception& e) {
      throw ValidationError(where + ": malformed record: " + e.what());
    }
    auto errs = validate(q);
    if (seen.count(q.query_id)) errs.push_back("duplicate query_id '" + q.query_id + "'");
    if (!errs.empty()) {
      if (strict) throw ValidationError(where + ": " + errs.front());
      ds.dropped.push_back({lineno, text::join(errs, "; ")});
      continue;
    }
    seen.insert(q.query_id);
    ds.instances.push_back(std::move(q));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, bool strict) {
  if (!std::filesystem::exists(path)) throw ValidationError("dataset file not found: " + path.string());
  return parse_dataset(jsonl::read_text(path), strict, path.string());
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& q : dataset.instances) out += to_json(q).dump() + "\n";
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  jsonl::write_text(path, serialize_dataset(dataset));
}

std::size_t spec_words(const ProductRecord& p) {
  std::vector<std::string> parts;
  for (const auto& s : p.specifications) parts.push_back(s.name + " " + s.value);
  return text::count_words(text::join(parts, " "));
}

std::size_t review_words(const ProductRecord& p) {
  std::size_t n = 0;
  for (const auto& r : p.reviews) n += text::count_words(r.text);
  return n;
}

std::size_t key_feature_words(const ProductRecord& p) {
  std::size_t n = 0;
  for (const auto& f : p.key_features) n += text::count_words(f);
  return n;
}

DatasetStats compute_stats(const Dataset& dataset) {
  if (dataset.instances.empty()) throw ValidationError("cannot compute statistics of an empty dataset");
  DatasetStats s;
  std::set<std::string> queries;
  std::size_t reviews = 0, specs = 0, review_w = 0, desc = 0, features = 0;
  for (const auto& q : dataset.instances) {
    queries.insert(q.query_id);
    for (const auto& p : q.products) {
      ++s.n_total_products;
      reviews += p.reviews.size();
      specs += spec_words(p);
      review_w += review_words(p);
      desc += text::count_words(p.description);
      features += key_feature_words(p);
    }
  }
  s.n_unique_queries = queries.size();
  if (s.n_total_products == 0) return s;
  const double n = static_cast<double>(s.n_total_products);
  s.avg_reviews_per_product = static_cast<double>(reviews) / n;
  s.avg_spec_words = static_cast<double>(specs) / n;
  s.avg_review_words = static_cast<double>(review_w) / n;
  s.avg_description_words = static_cast<double>(desc) / n;
  s.avg_key_feature_words = static_cast<double>(features) / n;
  return s;
}

json to_json(const DatasetStats& s) {
  return {{"n_unique_queries", s.n_unique_queries},
          {"n_total_products", s.n_total_products},
          {"avg_reviews_per_product", s.avg_reviews_per_product},
          {"avg_spec_words", s.avg_spec_words},
          {"avg_review_words", s.avg_review_words},
          {"avg_description_words", s.avg_description_words},
          {"avg_key_feature_words", s.avg_key_feature_words}};
}

std::string render_stats_table(const DatasetStats& s) {
  return text::aligned_table(
      {"Statistic", "Value"},
      {{"# of unique queries", std::to_string(s.n_unique_queries)},
       {"Total # of products", std::to_string(s.n_total_products)},
       {"Average # of reviews per product", text::format_fixed(s.avg_reviews_per_product, 2)},
       {"Average length of specifications per product (words)", text::format_fixed(s.avg_spec_words, 2)},
       {"Average length of reviews per product (words)", text::format_fixed(s.avg_review_words, 2)},
       {"Average length of description per product (words)",
        text::format_fixed(s.avg_description_words, 2)},
       {"Average length of key features per product (words)",
        text::format_fixed(s.avg_key_feature_words, 2)}});
}

}  // namespace qfces::catalog
