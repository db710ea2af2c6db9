#pragma once

// Query-to-product data model: one query bound to its top-3 recommended
// products, each carrying metadata from several sources.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace qfces::catalog {

inline constexpr std::size_t kProductsPerQuery = 3;

// Money is kept as the decimal string it arrived as; no float arithmetic.
struct Price {
  std::string amount;
  std::string currency;

  bool operator==(const Price&) const = default;
};

struct Specification {
  std::string name;
  std::string value;

  bool operator==(const Specification&) const = default;
};

struct Review {
  std::string text;
  std::optional<int> rating;

  bool operator==(const Review&) const = default;
};

struct ProductRecord {
  std::string product_id;
  std::string title;
  std::string description;
  std::vector<std::string> key_features;
  std::vector<Specification> specifications;
  std::vector<Review> reviews;
  double average_rating = 0.0;
  Price base_price;
  Price final_price;

  bool operator==(const ProductRecord&) const = default;
};

struct QueryInstance {
  std::string query_id;
  std::string query;
  std::vector<ProductRecord> products;

  bool operator==(const QueryInstance&) const = default;
};

struct DroppedRecord {
  std::size_t line = 0;
  std::string reason;
};

struct Dataset {
  std::vector<QueryInstance> instances;
  std::vector<DroppedRecord> dropped;

  std::size_t product_count() const;
  const QueryInstance* find(std::string_view query_id) const;
};

struct DatasetStats {
  std::size_t n_unique_queries = 0;
  std::size_t n_total_products = 0;
  double avg_reviews_per_product = 0.0;
  double avg_spec_words = 0.0;
  double avg_review_words = 0.0;
  double avg_description_words = 0.0;
  double avg_key_feature_words = 0.0;

  bool operator==(const DatasetStats&) const = default;
};

// Returns the list of invariant violations; empty means valid.
std::vector<std::string> validate(const ProductRecord& p);
std::vector<std::string> validate(const QueryInstance& q);

ProductRecord product_from_json(const nlohmann::json& j);
QueryInstance instance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProductRecord& p);
nlohmann::json to_json(const QueryInstance& q);

// Strict mode throws ValidationError on the first invalid record or duplicate
// query_id. Lenient mode drops such records (keeping the first duplicate) and
// lists them in Dataset::dropped. Malformed JSON always throws.
Dataset load_dataset(const std::filesystem::path& path, bool strict);
Dataset parse_dataset(std::string_view content, bool strict, std::string_view source = "<memory>");
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
std::string serialize_dataset(const Dataset& dataset);

// Word counts: specifications concatenate "name value" pairs; reviews and key
// features are summed per product. All averages are means over products.
std::size_t spec_words(const ProductRecord& p);
std::size_t review_words(const ProductRecord& p);
std::size_t key_feature_words(const ProductRecord& p);

DatasetStats compute_stats(const Dataset& dataset);
nlohmann::json to_json(const DatasetStats& s);
std::string render_stats_table(const DatasetStats& s);

}  // namespace qfces::catalog
