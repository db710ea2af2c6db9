#include "qfces/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <tuple>

#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"
#include "qfces/text.hpp"

namespace qfces::bench {

using nlohmann::json;

MosStore MosStore::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("M-OS store not found: " + path.string() + " (run gen-mos first)");
  }
  MosStore store;
  jsonl::for_each(path, [&](const json& j, std::size_t line) {
    if (!j.contains("product_id") || !j.contains("summary")) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": record lacks product_id or summary");
    }
    store.put(j.at("product_id").get<std::string>(), j.at("summary").get<std::string>());
  });
  return store;
}

const std::string& MosStore::get(const std::string& product_id) const {
  auto it = texts_.find(product_id);
  if (it == texts_.end()) throw ValidationError("M-OS store has no summary for product " + product_id);
  return it->second;
}

std::vector<std::string> MosStore::missing(const catalog::QueryInstance& instance) const {
  std::vector<std::string> out;
  for (const auto& p : instance.products) {
    if (!contains(p.product_id)) out.push_back(p.product_id);
  }
  return out;
}

std::vector<prompt::CesInput> ces_inputs(const catalog::QueryInstance& instance, prompt::CesMode mode,
                                         const MosStore& store) {
  std::vector<prompt::CesInput> inputs;
  for (const auto& p : instance.products) {
    prompt::CesInput in{p, std::nullopt};
    if (mode == prompt::CesMode::Mos) in.opinion_summary = store.get(p.product_id);
    inputs.push_back(std::move(in));
  }
  return inputs;
}

json to_json(const TimingRecord& t) {
  return {{"query_id", t.query_id},
          {"mode", std::string(prompt::to_string(t.mode))},
          {"iteration", t.iteration},
          {"latency_ms", t.latency_ms}};
}

TimingRecord timing_from_json(const json& j) {
  try {
    TimingRecord t;
    t.query_id = j.at("query_id").get<std::string>();
    t.mode = prompt::parse_mode(j.at("mode").get<std::string>());
    t.iteration = j.at("iteration").get<std::size_t>();
    t.latency_ms = j.at("latency_ms").get<double>();
    return t;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed timing record: ") + e.what());
  }
}

double compare_means(double mean_mos_ms, double mean_dia_ms) {
  if (!(mean_dia_ms > 0.0)) throw ValidationError("DIA mean latency must be positive");
  return 100.0 * (mean_dia_ms - mean_mos_ms) / mean_dia_ms;
}

BenchReport report_from_timings(const std::vector<TimingRecord>& timings) {
  std::vector<std::string> order;
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  std::vector<double> mos, dia;
  for (const auto& t : timings) {
    if (std::find(order.begin(), order.end(), t.query_id) == order.end()) order.push_back(t.query_id);
    groups[{t.query_id, static_cast<int>(t.mode)}].push_back(t.latency_ms);
    (t.mode == prompt::CesMode::Mos ? mos : dia).push_back(t.latency_ms);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };

  BenchReport r;
  for (const auto& q : order) {
    for (auto mode : {prompt::CesMode::Mos, prompt::CesMode::Dia}) {
      auto it = groups.find({q, static_cast<int>(mode)});
      if (it == groups.end()) continue;
      const auto& v = it->second;
      BenchRow row{q, mode, v.size(), mean(v), *std::min_element(v.begin(), v.end()),
                   *std::max_element(v.begin(), v.end()), 0.0};
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - row.mean_ms) * (x - row.mean_ms);
        row.stddev_ms = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
      r.rows.push_back(row);
    }
  }
  if (!mos.empty()) r.mean_mos_ms = mean(mos);
  if (!dia.empty()) r.mean_dia_ms = mean(dia);
  if (r.mean_mos_ms && r.mean_dia_ms && *r.mean_dia_ms > 0.0) {
    r.reduction_percent = compare_means(*r.mean_mos_ms, *r.mean_dia_ms);
  }
  return r;
}

BenchReport run_bench(gateway::Gateway& gw, const catalog::Dataset& dataset, const MosStore& store,
                      const BenchConfig& config, const prompt::TemplateSet& templates) {
  if (config.iterations < 1) throw ValidationError("bench iterations must be >= 1");
  if (!gw.has_backend(config.backend_id)) throw ValidationError("unknown backend '" + config.backend_id + "'");

  std::vector<const catalog::QueryInstance*> instances;
  if (config.query_ids.empty()) {
    for (const auto& q : dataset.instances) instances.push_back(&q);
  } else {
    for (const auto& id : config.query_ids) {
      const auto* q = dataset.find(id);
      if (!q) throw ValidationError("bench query '" + id + "' is not in the dataset");
      instances.push_back(q);
    }
  }
  for (const auto* q : instances) {
    if (auto miss = store.missing(*q); !miss.empty()) {
      throw ValidationError("M-OS store lacks products of query " + q->query_id + ": " + text::join(miss, ", "));
    }
  }

  std::vector<TimingRecord> timings;
  std::set<std::tuple<std::string, int, std::size_t>> done;
  if (config.raw_log) {
    if (config.resume && std::filesystem::exists(*config.raw_log)) {
      jsonl::for_each(*config.raw_log, [&](const json& j, std::size_t) {
        if (j.contains("resume_marker")) return;
        auto t = timing_from_json(j);
        done.emplace(t.query_id, static_cast<int>(t.mode), t.iteration);
        timings.push_back(std::move(t));
      });
    } else {
      jsonl::write_text(*config.raw_log, "");
    }
  }

  for (const auto* q : instances) {
    for (auto mode : {prompt::CesMode::Mos, prompt::CesMode::Dia}) {
      const auto inputs = ces_inputs(*q, mode, store);
      auto request = prompt::render_ces_generation(q->query, inputs, mode, templates);
      request.backend_id = config.backend_id;
      request.params = config.params;
      request.params.n_samples = 1;
      for (std::size_t it = 0; it < config.iterations; ++it) {
        if (done.count({q->query_id, static_cast<int>(mode), it})) continue;
        TimingRecord t{q->query_id, mode, it, 0.0};
        try {
          const auto start = std::chrono::steady_clock::now();
          gw.complete(request);
          const auto stop = std::chrono::steady_clock::now();
          t.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
        } catch (const BackendError& e) {
          if (config.raw_log) {
            json marker = {{"resume_marker", true},
                           {"query_id", q->query_id},
                           {"mode", std::string(prompt::to_string(mode))},
                           {"iteration", it},
                           {"error", e.what()}};
            marker.update(config.log_stamp);
            jsonl::append(*config.raw_log, marker);
          }
          throw;
        }
        if (config.raw_log) {
          json record = to_json(t);
          record.update(config.log_stamp);
          jsonl::append(*config.raw_log, record);
        }
        timings.push_back(std::move(t));
      }
    }
  }
  return report_from_timings(timings);
}

std::string render_report(const BenchReport& r) {
  auto opt = [](const std::optional<double>& v, int digits) { return v ? text::format_fixed(*v, digits) : "n/a"; };
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : r.rows) {
    rows.push_back({row.query_id, std::string(prompt::to_string(row.mode)), std::to_string(row.n),
                    text::format_fixed(row.mean_ms, 2), text::format_fixed(row.min_ms, 2),
                    text::format_fixed(row.max_ms, 2), text::format_fixed(row.stddev_ms, 2)});
  }
  std::string out = text::aligned_table({"Query", "Mode", "n", "Mean ms", "Min ms", "Max ms", "Stddev ms"}, rows);
  out += "Mean MOS ms: " + opt(r.mean_mos_ms, 2) + "\n";
  out += "Mean DIA ms: " + opt(r.mean_dia_ms, 2) + "\n";
  out += "Reduction %: " + opt(r.reduction_percent, 2) + "\n";
  return out;
}

json to_json(const BenchReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"query_id", row.query_id},
                    {"mode", std::string(prompt::to_string(row.mode))},
                    {"n", row.n},
                    {"mean_ms", row.mean_ms},
                    {"min_ms", row.min_ms},
                    {"max_ms", row.max_ms},
                    {"stddev_ms", row.stddev_ms}});
  }
  return {{"rows", std::move(rows)},
          {"mean_mos_ms", opt(r.mean_mos_ms)},
          {"mean_dia_ms", opt(r.mean_dia_ms)},
          {"reduction_percent", opt(r.reduction_percent)}};
}

}  // namespace qfces::bench
