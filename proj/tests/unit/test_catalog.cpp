#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "qfces/catalog.hpp"
#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"

using namespace qfces;
using nlohmann::json;

namespace {

json product_json(const std::string& id) {
  return {{"product_id", id},
          {"title", "Item " + id},
          {"description", "a b c"},
          {"key_features", {"x"}},
          {"specifications", json::array({{{"name", "Color"}, {"value", "Red"}}})},
          {"reviews", json::array({{{"text", "nice"}, {"rating", 4}}})},
          {"average_rating", 4.0},
          {"base_price", {{"amount", "10.00"}, {"currency", "USD"}}},
          {"final_price", {{"amount", "9.50"}, {"currency", "USD"}}}};
}

json instance_json(const std::string& qid, std::size_t n_products = 3) {
  json products = json::array();
  for (std::size_t i = 0; i < n_products; ++i) products.push_back(product_json(qid + "-" + std::to_string(i)));
  return {{"query_id", qid}, {"query", "query " + qid}, {"products", products}};
}

std::string lines(const std::vector<json>& v) {
  std::string s;
  for (const auto& j : v) s += j.dump() + "\n";
  return s;
}

}  // namespace

TEST_CASE("two valid instances load with six products") {
  const auto ds = catalog::parse_dataset(lines({instance_json("a"), instance_json("b")}), true);
  CHECK(ds.instances.size() == 2);
  CHECK(ds.product_count() == 6);
  CHECK(ds.dropped.empty());
  REQUIRE(ds.find("b") != nullptr);
  CHECK(ds.find("zzz") == nullptr);
}

TEST_CASE("strict mode rejects a two-product instance") {
  try {
    catalog::parse_dataset(lines({instance_json("a", 2)}), true);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("product count != 3") != std::string::npos);
  }
}

TEST_CASE("lenient mode drops an out-of-range rating") {
  auto bad = instance_json("bad");
  bad["products"][1]["average_rating"] = 5.7;
  const auto ds = catalog::parse_dataset(lines({instance_json("a"), bad}), false);
  CHECK(ds.instances.size() == 1);
  REQUIRE(ds.dropped.size() == 1);
  CHECK(ds.dropped[0].line == 2);
  CHECK_THROWS_AS(catalog::parse_dataset(lines({bad}), true), ValidationError);
}

TEST_CASE("record invariants") {
  auto with = [](auto mutate) {
    auto j = instance_json("q");
    mutate(j);
    return catalog::parse_dataset(lines({j}), false).dropped.size();
  };
  CHECK(with([](json& j) { j["products"][0]["title"] = "  "; }) == 1);
  CHECK(with([](json& j) { j["products"][0]["reviews"][0]["rating"] = 6; }) == 1);
  CHECK(with([](json& j) { j["products"][0]["base_price"]["amount"] = "-1"; }) == 1);
  CHECK(with([](json& j) { j["products"][0]["final_price"]["currency"] = "EUR"; }) == 1);
  CHECK(with([](json& j) { j["query"] = ""; }) == 1);
  CHECK(with([](json& j) { j["products"][0]["reviews"][0].erase("rating"); }) == 0);
  // A final price above the base price is allowed.
  CHECK(with([](json& j) { j["products"][0]["final_price"]["amount"] = "99.00"; }) == 0);
}

TEST_CASE("duplicate query ids: strict error, lenient keeps the first") {
  auto second = instance_json("a");
  second["query"] = "other";
  const std::string content = lines({instance_json("a"), second});
  CHECK_THROWS_AS(catalog::parse_dataset(content, true), ValidationError);
  const auto ds = catalog::parse_dataset(content, false);
  REQUIRE(ds.instances.size() == 1);
  CHECK(ds.instances[0].query == "query a");
}

TEST_CASE("malformed lines and missing files are errors naming the location") {
  try {
    catalog::parse_dataset(instance_json("a").dump() + "\n{not json\n", false, "data.jsonl");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("data.jsonl:2") != std::string::npos);
  }
  CHECK_THROWS_AS(catalog::load_dataset("/nonexistent/data.jsonl", true), ValidationError);
}

TEST_CASE("hand-counted statistics fixture") {
  const auto ds = catalog::load_dataset(oracle::fixture("stats_small.jsonl"), true);
  const auto s = catalog::compute_stats(ds);
  CHECK(s.n_unique_queries == 2);
  CHECK(s.n_total_products == 6);
  CHECK(s.avg_reviews_per_product == 9.0 / 6.0);
  CHECK(s.avg_spec_words == 17.0 / 6.0);
  CHECK(s.avg_review_words == 32.0 / 6.0);
  CHECK(s.avg_description_words == 6.0);
  CHECK(s.avg_key_feature_words == 2.0);
}

TEST_CASE("ten reviews per product") {
  const auto s = catalog::compute_stats(catalog::load_dataset(oracle::fixture("ten_reviews.jsonl"), true));
  CHECK(s.avg_reviews_per_product == 10.0);
}

TEST_CASE("single product with no reviews and empty dataset") {
  catalog::Dataset ds;
  catalog::QueryInstance q;
  q.query_id = "x";
  q.query = "y";
  catalog::ProductRecord p;
  p.product_id = "p";
  p.title = "t";
  q.products.push_back(p);
  ds.instances.push_back(q);
  CHECK(catalog::compute_stats(ds).avg_reviews_per_product == 0.0);
  CHECK_THROWS_AS(catalog::compute_stats(catalog::Dataset{}), ValidationError);
}

TEST_CASE("specification words count name and value") {
  catalog::ProductRecord p;
  p.specifications = {{"Battery life", "10 hours"}, {"Ports", "2 USB-C"}};
  CHECK(catalog::spec_words(p) == 7);
}

TEST_CASE("stats are invariant to instance order and products = 3 x queries") {
  auto ds = catalog::load_dataset(oracle::fixture("pipeline5.jsonl"), true);
  const auto before = catalog::compute_stats(ds);
  CHECK(before.n_total_products == 3 * before.n_unique_queries);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(ds.instances.begin(), ds.instances.end(), rng);
    const auto after = catalog::compute_stats(ds);
    CHECK(after.n_unique_queries == before.n_unique_queries);
    CHECK(after.avg_review_words == doctest::Approx(before.avg_review_words).epsilon(1e-12));
    CHECK(after.avg_spec_words == doctest::Approx(before.avg_spec_words).epsilon(1e-12));
  }
}

TEST_CASE("serialization round trip") {
  const auto ds = catalog::load_dataset(oracle::fixture("pipeline5.jsonl"), true);
  const auto dir = oracle::scratch_dir("catalog_rt");
  catalog::write_dataset(dir / "out.jsonl", ds);
  const auto back = catalog::load_dataset(dir / "out.jsonl", true);
  CHECK(back.instances == ds.instances);
  CHECK(catalog::serialize_dataset(back) == catalog::serialize_dataset(ds));
}

TEST_CASE("stats table rows") {
  const auto s = catalog::compute_stats(catalog::load_dataset(oracle::fixture("ten_reviews.jsonl"), true));
  const auto table = catalog::render_stats_table(s);
  CHECK(table.find("Average # of reviews per product") != std::string::npos);
  CHECK(table.find("10.00") != std::string::npos);
  CHECK(catalog::to_json(s)["n_unique_queries"] == 1);
}
