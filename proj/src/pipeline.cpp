#include "qfces/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"
#include "qfces/text.hpp"

namespace qfces::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

class Section {
 public:
  Section(std::string name, const pt::ptree& tree, std::set<std::string> allowed) : name_(std::move(name)), tree_(tree) {
    for (const auto& [key, _] : tree_) {
      if (!allowed.count(key)) throw ValidationError("config [" + name_ + "]: unknown key '" + key + "'");
    }
  }

  std::optional<std::string> str(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return std::string(text::trim(*v));
  }

  template <typename T>
  std::optional<T> number(const std::string& key) const {
    auto s = str(key);
    if (!s) return std::nullopt;
    std::istringstream in(*s);
    T v{};
    in >> v;
    if (!in || !in.eof()) bad(key, *s);
    return v;
  }

  std::optional<bool> flag(const std::string& key) const {
    auto s = str(key);
    if (!s) return std::nullopt;
    const std::string l = text::to_lower(*s);
    if (l == "true" || l == "yes" || l == "1" || l == "on") return true;
    if (l == "false" || l == "no" || l == "0" || l == "off") return false;
    bad(key, *s);
  }

  std::optional<std::vector<std::string>> list(const std::string& key) const {
    auto s = str(key);
    if (!s) return std::nullopt;
    std::vector<std::string> out;
    std::stringstream in(*s);
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto t = text::trim(item);
      if (!t.empty()) out.emplace_back(t);
    }
    return out;
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& value) const {
    throw ValidationError("config [" + name_ + "] " + key + ": invalid value '" + value + "'");
  }

  std::string name_;
  const pt::ptree& tree_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_report(const fs::path& dir, const std::string& name, const std::string& text_form, const json& json_form) {
  jsonl::write_text(dir / (name + ".txt"), text_form);
  jsonl::write_text(dir / (name + ".json"), dump(json_form));
}

std::string pick_backend(const RunConfig& c, const std::optional<std::string>& named, const std::string& section) {
  if (named) {
    if (!c.backends.count(*named)) {
      throw ValidationError("config [" + section + "] references undefined backend '" + *named + "'");
    }
    return *named;
  }
  return c.backends.size() == 1 ? c.backends.begin()->first : std::string();
}

const std::string& require_backend(const std::string& id, const std::string& section) {
  if (id.empty()) throw ValidationError("config [" + section + "] needs a backend (several or none are defined)");
  return id;
}

std::vector<const catalog::ProductRecord*> distinct_products(const catalog::Dataset& ds) {
  std::vector<const catalog::ProductRecord*> out;
  std::set<std::string> seen;
  for (const auto& q : ds.instances) {
    for (const auto& p : q.products) {
      if (seen.insert(p.product_id).second) out.push_back(&p);
    }
  }
  return out;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& ini_text, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  RunConfig c;
  c.config_hash = text::to_hex(text::fnv1a64(ini_text));
  std::optional<std::string> gen_backend, eval_backend, bench_backend;
  std::set<std::string> seeded;  // backends with their own seed

  for (const auto& [name, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ValidationError("config: key '" + name + "' outside a section");
    if (name == "run") {
      Section s(name, body, {"dataset", "output_dir", "seed", "run_id", "template_dir", "strict"});
      if (auto v = s.str("dataset")) c.dataset = resolve(base_dir, *v);
      if (auto v = s.str("output_dir")) c.output_dir = resolve(base_dir, *v);
      if (auto v = s.number<std::uint64_t>("seed")) c.seed = *v;
      if (auto v = s.str("run_id")) c.run_id = *v;
      if (auto v = s.str("template_dir"); v && !v->empty()) c.template_dir = resolve(base_dir, *v);
      if (auto v = s.flag("strict")) c.strict = *v;
    } else if (name.rfind("backend.", 0) == 0) {
      Section s(name, body,
                {"type", "seed", "base_latency_ms", "per_input_token_ms", "per_output_token_ms", "endpoint", "model",
                 "auth_env", "timeout_s", "extended_params", "max_attempts", "max_concurrency",
                 "max_failure_fraction"});
      BackendConfig b;
      b.id = name.substr(8);
      if (b.id.empty()) throw ValidationError("config: backend section needs an id, e.g. [backend.mock]");
      b.type = s.str("type").value_or("mock");
      if (b.type != "mock" && b.type != "http") {
        throw ValidationError("config [" + name + "] type: expected mock or http, got '" + b.type + "'");
      }
      b.mock.base_latency_ms = s.number<double>("base_latency_ms").value_or(0.0);
      b.mock.per_input_token_ms = s.number<double>("per_input_token_ms").value_or(0.0);
      b.mock.per_output_token_ms = s.number<double>("per_output_token_ms").value_or(0.0);
      if (b.mock.base_latency_ms < 0 || b.mock.per_input_token_ms < 0 || b.mock.per_output_token_ms < 0) {
        throw ValidationError("config [" + name + "]: latency coefficients must be >= 0");
      }
      if (auto v = s.number<std::uint64_t>("seed")) {
        b.mock.seed = *v;
        seeded.insert(b.id);
      }
      if (auto v = s.str("endpoint")) b.http.endpoint = *v;
      if (auto v = s.str("model")) b.http.model = *v;
      if (auto v = s.str("auth_env")) b.http.auth_env = *v;
      if (auto v = s.number<double>("timeout_s")) {
        if (*v <= 0) throw ValidationError("config [" + name + "] timeout_s must be > 0");
        b.http.timeout = std::chrono::milliseconds(static_cast<long long>(*v * 1000.0));
      }
      if (auto v = s.flag("extended_params")) b.http.extended_params = *v;
      if (auto v = s.number<int>("max_attempts")) {
        if (*v < 1) throw ValidationError("config [" + name + "] max_attempts must be >= 1");
        b.http.max_attempts = *v;
      }
      if (auto v = s.number<std::size_t>("max_concurrency")) {
        if (*v < 1) throw ValidationError("config [" + name + "] max_concurrency must be >= 1");
        b.limits.max_concurrency = *v;
      }
      if (auto v = s.number<double>("max_failure_fraction")) b.limits.max_failure_fraction = *v;
      if (b.type == "http" && (b.http.endpoint.empty() || b.http.model.empty())) {
        throw ValidationError("config [" + name + "]: http backends need endpoint and model");
      }
      c.backends[b.id] = std::move(b);
    } else if (name == "generation") {
      Section s(name, body, {"backend", "temperature", "top_k", "top_p", "num_beams", "max_tokens"});
      gen_backend = s.str("backend");
      if (auto v = s.number<double>("temperature")) c.generation.temperature = *v;
      if (auto v = s.number<int>("top_k")) c.generation.top_k = *v;
      if (auto v = s.number<double>("top_p")) c.generation.top_p = *v;
      if (auto v = s.number<int>("num_beams")) c.generation.num_beams = *v;
      if (auto v = s.number<int>("max_tokens")) c.generation.max_tokens = *v;
    } else if (name == "evaluation") {
      Section s(name, body, {"backend", "n", "temperature", "top_p", "max_tokens", "validity_threshold", "dimensions"});
      eval_backend = s.str("backend");
      if (auto v = s.number<int>("n")) c.evaluation.n_samples = *v;
      if (auto v = s.number<double>("temperature")) c.evaluation.temperature = *v;
      if (auto v = s.number<double>("top_p")) c.evaluation.top_p = *v;
      if (auto v = s.number<int>("max_tokens")) c.evaluation.max_tokens = *v;
      if (auto v = s.number<double>("validity_threshold")) {
        if (*v < 0.0 || *v > 1.0) throw ValidationError("config [evaluation] validity_threshold must be in [0, 1]");
        c.validity_threshold = *v;
      }
      if (auto v = s.list("dimensions")) {
        for (const auto& d : *v) prompt::dimension(d);
        c.dimensions = *v;
      }
    } else if (name == "bench") {
      Section s(name, body, {"backend", "iterations", "queries"});
      bench_backend = s.str("backend");
      if (auto v = s.number<std::size_t>("iterations")) c.bench_iterations = *v;
      if (auto v = s.list("queries")) c.bench_queries = *v;
    } else if (name == "metaeval") {
      Section s(name, body, {"iterations"});
      if (auto v = s.number<std::size_t>("iterations")) c.permutation_iterations = *v;
    } else if (name == "annotation") {
      Section s(name, body, {"discrepancy_threshold"});
      if (auto v = s.number<int>("discrepancy_threshold")) c.discrepancy_threshold = *v;
    } else {
      throw ValidationError("config: unknown section [" + name + "]");
    }
  }

  for (auto& [id, b] : c.backends) {
    if (!seeded.count(id)) b.mock.seed = c.seed;
  }
  gateway::validate(c.generation);
  gateway::validate(c.evaluation);
  if (c.bench_iterations < 1) throw ValidationError("config [bench] iterations must be >= 1");
  if (c.permutation_iterations < 100) throw ValidationError("config [metaeval] iterations must be >= 100");
  c.generation_backend = pick_backend(c, gen_backend, "generation");
  c.evaluation_backend = pick_backend(c, eval_backend, "evaluation");
  c.bench_backend = pick_backend(c, bench_backend, "bench");
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  return parse(jsonl::read_text(path), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

fs::path default_run_dir(const RunConfig& config) {
  if (!config.run_id.empty()) return config.output_dir / config.run_id;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return config.output_dir / (std::string(buf) + "-" + config.config_hash.substr(0, 8));
}

Run::Run(RunConfig config, fs::path dir)
    : config_(std::move(config)),
      dir_(std::move(dir)),
      gateway_(std::make_unique<gateway::Gateway>()),
      templates_(config_.template_dir ? prompt::TemplateSet::with_overrides(*config_.template_dir)
                                      : prompt::TemplateSet::defaults()) {
  for (const auto& [id, b] : config_.backends) {
    std::shared_ptr<gateway::Backend> backend;
    if (b.type == "mock") {
      backend = std::make_shared<gateway::MockBackend>(b.mock);
    } else {
      backend = std::make_shared<gateway::HttpBackend>(b.http);
    }
    gateway_->register_backend(id, std::move(backend), b.limits);
  }
}

json Run::stamp(json record) const {
  record["config_hash"] = config_.config_hash;
  record["seed"] = config_.seed;
  return record;
}

catalog::Dataset Run::dataset() const {
  if (!fs::exists(dataset_path())) {
    throw ValidationError("run has no ingested dataset: " + dataset_path().string() + " (run ingest first)");
  }
  return catalog::load_dataset(dataset_path(), true);
}

catalog::Dataset ingest(Run& run) {
  const auto& c = run.config();
  if (c.dataset.empty()) throw ValidationError("config [run] dataset is not set");
  auto ds = catalog::load_dataset(c.dataset, c.strict);
  catalog::write_dataset(run.dataset_path(), ds);
  json dropped = json::array();
  for (const auto& d : ds.dropped) dropped.push_back({{"line", d.line}, {"reason", d.reason}});
  jsonl::write_text(run.reports_dir() / "ingest.json",
                    dump(run.stamp({{"n_instances", ds.instances.size()},
                                    {"n_products", ds.product_count()},
                                    {"dropped", std::move(dropped)}})));
  jsonl::write_text(run.dir() / "manifest.json",
                    dump(run.stamp({{"dataset", c.dataset.filename().string()}, {"strict", c.strict}})));
  return ds;
}

catalog::DatasetStats stats(Run& run) {
  const auto ds = fs::exists(run.dataset_path()) ? run.dataset()
                                                 : catalog::load_dataset(run.config().dataset, run.config().strict);
  const auto s = catalog::compute_stats(ds);
  write_report(run.reports_dir(), "stats", catalog::render_stats_table(s), run.stamp(catalog::to_json(s)));
  return s;
}

std::size_t gen_mos(Run& run) {
  const auto ds = run.dataset();
  const auto& backend = require_backend(run.config().generation_backend, "generation");
  std::vector<json> records;
  for (const auto* p : distinct_products(ds)) {
    auto req = prompt::render_mos_generation(*p, run.templates());
    req.backend_id = backend;
    req.params = run.config().generation;
    req.params.n_samples = 1;
    const auto result = run.gateway().complete(req);
    records.push_back(run.stamp({{"product_id", p->product_id}, {"summary", result.text}}));
  }
  jsonl::write_all(run.mos_store_path(), records);
  return records.size();
}

std::vector<CesRecord> read_ces(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("comparative summaries not found: " + path.string() + " (run gen-ces first)");
  std::vector<CesRecord> out;
  jsonl::for_each(path, [&](const json& j, std::size_t line) {
    try {
      out.push_back({j.at("query_id").get<std::string>(), prompt::parse_mode(j.at("mode").get<std::string>()),
                     j.at("summary").get<std::string>()});
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

std::size_t gen_ces(Run& run, prompt::CesMode mode, const std::string& label) {
  const auto ds = run.dataset();
  const auto& backend = require_backend(run.config().generation_backend, "generation");
  const bench::MosStore store = mode == prompt::CesMode::Mos ? bench::MosStore::load(run.mos_store_path())
                                                             : bench::MosStore();
  std::vector<json> records;
  for (const auto& q : ds.instances) {
    const auto inputs = bench::ces_inputs(q, mode, store);
    auto req = prompt::render_ces_generation(q.query, inputs, mode, run.templates());
    req.backend_id = backend;
    req.params = run.config().generation;
    req.params.n_samples = 1;
    const auto result = run.gateway().complete(req);
    records.push_back(
        run.stamp({{"query_id", q.query_id}, {"mode", std::string(prompt::to_string(mode))}, {"summary", result.text}}));
  }
  jsonl::write_all(run.ces_path(label.empty() ? std::string(prompt::to_string(mode)) : label), records);
  return records.size();
}

FormatSummary check_format(Run& run, const std::string& label) {
  const auto recs = read_ces(run.ces_path(label));
  FormatSummary s;
  s.label = label;
  for (const auto& code : ces::check_codes()) s.passed_by_code[code] = 0;
  std::vector<json> records;
  for (const auto& r : recs) {
    const auto report = ces::check_format(r.summary);
    ++s.n_instances;
    if (report.passed_all) ++s.n_passed_all;
    for (const auto& c : report.checks) {
      if (c.passed) ++s.passed_by_code[c.code];
    }
    json j = ces::to_json(report);
    j["query_id"] = r.query_id;
    records.push_back(run.stamp(std::move(j)));
  }
  jsonl::write_all(run.reports_dir() / ("format_" + label + ".jsonl"), records);
  jsonl::write_text(run.reports_dir() / ("format_" + label + ".json"), dump(run.stamp(to_json(s))));
  return s;
}

std::string render_format_summary(const FormatSummary& s) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& code : ces::check_codes()) {
    rows.push_back({code, std::to_string(s.passed_by_code.at(code)) + "/" + std::to_string(s.n_instances)});
  }
  rows.push_back({"ALL", std::to_string(s.n_passed_all) + "/" + std::to_string(s.n_instances)});
  return text::aligned_table({"Check", "Passed"}, rows);
}

json to_json(const FormatSummary& s) {
  return {{"label", s.label},
          {"n_instances", s.n_instances},
          {"n_passed_all", s.n_passed_all},
          {"passed_by_code", s.passed_by_code}};
}

std::vector<judge::InstanceScore> run_judge(Run& run, JudgeTarget target, const std::string& label,
                                            std::vector<std::string> dimension_ids) {
  const auto kind = target == JudgeTarget::Ces ? prompt::SummaryKind::Comparative : prompt::SummaryKind::Opinion;
  if (dimension_ids.empty()) dimension_ids = run.config().dimensions;
  if (dimension_ids.empty()) dimension_ids = prompt::dimension_ids(kind);
  for (const auto& d : dimension_ids) {
    if (prompt::dimension(d).kind != kind) {
      throw ValidationError("dimension '" + d + "' does not apply to " +
                            (target == JudgeTarget::Ces ? "comparative" : "opinion") + " summaries");
    }
  }
  dimension_ids = judge::ordered_dimensions(dimension_ids);

  const auto ds = run.dataset();
  const std::string model = label.empty() ? std::string("mos") : label;
  const fs::path out = run.dir() / "judge" / ((target == JudgeTarget::Ces ? "ces_" : "mos_") + model + ".jsonl");

  // (instance, subject text, context) in a fixed order.
  struct Job {
    std::string instance_id;
    std::string summary;
    prompt::EvalContext context;
  };
  std::vector<Job> jobs;
  if (target == JudgeTarget::Ces) {
    for (const auto& r : read_ces(run.ces_path(model))) {
      const auto* q = ds.find(r.query_id);
      if (!q) throw ValidationError("summary for unknown query '" + r.query_id + "'");
      jobs.push_back({r.query_id, r.summary, {q->query, q->products}});
    }
  } else {
    const auto store = bench::MosStore::load(run.mos_store_path());
    for (const auto* p : distinct_products(ds)) jobs.push_back({p->product_id, store.get(p->product_id), {"", {*p}}});
  }

  std::vector<judge::InstanceScore> scores;
  std::set<std::pair<std::string, std::string>> done;
  if (fs::exists(out)) {
    jsonl::for_each(out, [&](const json& j, std::size_t) {
      auto s = judge::instance_score_from_json(j);
      done.emplace(s.instance_id, s.dimension);
      scores.push_back(std::move(s));
    });
  }

  judge::JudgeOptions options;
  options.backend_id = require_backend(run.config().evaluation_backend, "evaluation");
  options.params = run.config().evaluation;
  options.validity_threshold = run.config().validity_threshold;
  for (const auto& job : jobs) {
    std::vector<std::string> todo;
    for (const auto& d : dimension_ids) {
      if (!done.count({job.instance_id, d})) todo.push_back(d);
    }
    if (todo.empty()) continue;
    const auto result = judge::evaluate_summary(run.gateway(), job.summary, job.context, todo, options, run.templates());
    for (const auto& d : todo) {
      const auto& ds_ = result.at(d);
      judge::InstanceScore s{job.instance_id, model, d, ds_.distribution, ds_.n_requested, ds_.weighted};
      jsonl::append(out, run.stamp(judge::to_json(s)));
      scores.push_back(std::move(s));
    }
  }
  return scores;
}

EvalReport report(Run& run) {
  const fs::path dir = run.dir() / "judge";
  std::vector<judge::InstanceScore> ces_scores, mos_scores;
  if (fs::exists(dir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string name = f.filename().string();
      auto* sink = name.rfind("ces_", 0) == 0 ? &ces_scores : name.rfind("mos_", 0) == 0 ? &mos_scores : nullptr;
      if (!sink) continue;
      jsonl::for_each(f, [&](const json& j, std::size_t) { sink->push_back(judge::instance_score_from_json(j)); });
    }
  }
  if (ces_scores.empty() && mos_scores.empty()) {
    throw ValidationError("no judge results under " + dir.string() + " (run judge first)");
  }
  EvalReport r;
  if (!ces_scores.empty()) r.ces = judge::aggregate_matrix(ces_scores);
  if (!mos_scores.empty()) r.mos = judge::aggregate_matrix(mos_scores);
  write_report(run.reports_dir(), "eval_matrix", render_eval_report(r), run.stamp(to_json(r)));
  return r;
}

std::string render_eval_report(const EvalReport& r) {
  std::string out;
  if (r.ces) out += "Comparative summaries\n" + judge::render_matrix(*r.ces);
  if (r.ces && r.mos) out += "\n";
  if (r.mos) out += "Opinion summaries\n" + judge::render_matrix(*r.mos);
  return out;
}

json to_json(const EvalReport& r) {
  return {{"ces", r.ces ? judge::to_json(*r.ces) : json(nullptr)},
          {"mos", r.mos ? judge::to_json(*r.mos) : json(nullptr)}};
}

std::vector<MetaEvalRow> meta_eval(const annotations::AnnotationSet& human,
                                   const std::vector<judge::InstanceScore>& scores,
                                   const metaeval::SummaryLevelOptions& options) {
  std::map<std::tuple<std::string, std::string, std::string>, double> judged;
  std::set<std::string> judged_dims;
  for (const auto& s : scores) {
    judged[{s.instance_id, s.model, s.dimension}] = s.weighted;
    judged_dims.insert(s.dimension);
  }
  // Latest round per (rater, item), then the mean over raters.
  std::map<std::tuple<std::string, annotations::ItemKey>, std::pair<int, int>> latest;
  for (const auto& r : human.records()) {
    auto& slot = latest[{r.rater_id, annotations::ItemKey{r.query_id, r.summary_id, r.dimension}}];
    if (r.round >= slot.first) slot = {r.round, r.score};
  }
  std::map<std::string, std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>>> sums;
  for (const auto& [key, v] : latest) {
    const auto& item = std::get<1>(key);
    auto& acc = sums[item.dimension][{item.query_id, item.summary_id}];
    acc.first += v.second;
    ++acc.second;
  }

  std::vector<std::string> dims;
  for (const auto& [d, _] : sums) {
    if (judged_dims.count(d)) dims.push_back(d);
  }
  if (dims.empty()) throw ValidationError("no dimension has both human ratings and judge scores");
  std::vector<std::string> ordered;
  for (const auto& d : prompt::dimensions()) {
    if (std::find(dims.begin(), dims.end(), d.id) != dims.end()) ordered.push_back(d.id);
  }
  for (const auto& d : dims) {
    if (!prompt::is_dimension(d)) ordered.push_back(d);
  }

  std::vector<MetaEvalRow> rows;
  for (const auto& d : ordered) {
    metaeval::MetricTable a, b;
    for (const auto& [key, acc] : sums.at(d)) {
      auto it = judged.find({key.first, key.second, d});
      if (it == judged.end()) {
        throw ValidationError("no judge score for " + key.first + "/" + key.second + " on '" + d + "'");
      }
      a[key] = it->second;
      b[key] = acc.first / static_cast<double>(acc.second);
    }
    rows.push_back({d, metaeval::summary_level_corr(a, b, options)});
  }
  return rows;
}

std::vector<MetaEvalRow> meta_eval(Run& run, const fs::path& ratings, const std::vector<fs::path>& judge_files) {
  const auto human = annotations::AnnotationSet::load(ratings);
  std::vector<fs::path> files = judge_files;
  if (files.empty()) {
    const fs::path dir = run.dir() / "judge";
    if (fs::exists(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".jsonl") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw ValidationError("no judge results to correlate (run judge or pass --judge)");
  std::vector<judge::InstanceScore> scores;
  for (const auto& f : files) {
    jsonl::for_each(f, [&](const json& j, std::size_t) { scores.push_back(judge::instance_score_from_json(j)); });
  }
  metaeval::SummaryLevelOptions options;
  options.iterations = run.config().permutation_iterations;
  options.seed = run.config().seed;
  auto rows = meta_eval(human, scores, options);
  write_report(run.reports_dir(), "meta_eval", render_meta_eval(rows), run.stamp(to_json(rows)));
  return rows;
}

std::string render_meta_eval(const std::vector<MetaEvalRow>& rows) {
  auto cell = [](double v, double p) { return text::format_fixed(v, 2) + (p < 0.05 ? "*" : ""); };
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    const std::string name = prompt::is_dimension(r.dimension) ? prompt::dimension(r.dimension).name : r.dimension;
    body.push_back({name, cell(r.result.rho, r.result.p_rho), cell(r.result.tau, r.result.p_tau),
                    text::format_fixed(r.result.p_rho, 4), text::format_fixed(r.result.p_tau, 4),
                    std::to_string(r.result.n_queries_used), std::to_string(r.result.n_queries_skipped_constant)});
  }
  return text::aligned_table({"Dimension", "rho", "tau", "p(rho)", "p(tau)", "Queries", "Skipped"}, body) +
         "* p < 0.05 (permutation test)\n";
}

json to_json(const std::vector<MetaEvalRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = metaeval::to_json(r.result);
    j["dimension"] = r.dimension;
    out.push_back(std::move(j));
  }
  return {{"rows", std::move(out)}};
}

AgreementOutput agreement(Run& run, const fs::path& round1, const std::optional<fs::path>& round2,
                          annotations::Difference difference) {
  const auto r1 = annotations::AnnotationSet::load(round1);
  const auto merged =
      round2 ? annotations::merge_rounds(r1, annotations::AnnotationSet::load(*round2), run.config().discrepancy_threshold)
             : r1;
  AgreementOutput out{annotations::agreement_report(r1, merged, difference), annotations::rater_tables(merged)};
  json j = {{"agreement", annotations::to_json(out.agreement)}, {"rater_tables", annotations::to_json(out.raters)}};
  write_report(run.reports_dir(), "agreement",
               annotations::render_agreement(out.agreement) + "\n" + annotations::render_rater_tables(out.raters),
               run.stamp(std::move(j)));
  return out;
}

FlagOutput flag_rounds(Run& run, const fs::path& round1, const std::optional<fs::path>& round2) {
  const auto r1 = annotations::AnnotationSet::load(round1);
  FlagOutput out{annotations::flag_discrepancies(r1, run.config().discrepancy_threshold), std::nullopt};
  std::vector<json> flagged;
  for (const auto& k : out.flags.flagged) {
    flagged.push_back(run.stamp({{"query_id", k.query_id}, {"summary_id", k.summary_id}, {"dimension", k.dimension}}));
  }
  jsonl::write_all(run.reports_dir() / "flagged.jsonl", flagged);
  if (round2) {
    const auto merged =
        annotations::merge_rounds(r1, annotations::AnnotationSet::load(*round2), run.config().discrepancy_threshold);
    std::vector<json> records;
    for (const auto& r : merged.records()) records.push_back(run.stamp(annotations::to_json(r)));
    jsonl::write_all(run.dir() / "annotations" / "merged.jsonl", records);
    out.merged_records = records.size();
  }
  jsonl::write_text(run.reports_dir() / "flags.json", dump(run.stamp(to_json(out))));
  return out;
}

std::string render_flags(const FlagOutput& f) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& k : f.flags.flagged) rows.push_back({k.query_id, k.summary_id, k.dimension, "flagged"});
  for (const auto& k : f.flags.incomplete) rows.push_back({k.query_id, k.summary_id, k.dimension, "incomplete"});
  std::string out = text::aligned_table({"Query", "Summary", "Dimension", "Status"}, rows);
  out += std::to_string(f.flags.flagged.size()) + " flagged, " + std::to_string(f.flags.incomplete.size()) +
         " incomplete\n";
  if (f.merged_records) out += "merged set: " + std::to_string(*f.merged_records) + " records\n";
  return out;
}

json to_json(const FlagOutput& f) {
  auto items = [](const std::vector<annotations::ItemKey>& v) {
    json a = json::array();
    for (const auto& k : v) a.push_back({{"query_id", k.query_id}, {"summary_id", k.summary_id}, {"dimension", k.dimension}});
    return a;
  };
  return {{"flagged", items(f.flags.flagged)},
          {"incomplete", items(f.flags.incomplete)},
          {"merged_records", f.merged_records ? json(*f.merged_records) : json(nullptr)}};
}

bench::BenchReport bench(Run& run, bool resume) {
  const auto ds = run.dataset();
  const auto store = bench::MosStore::load(run.mos_store_path());
  bench::BenchConfig config;
  config.query_ids = run.config().bench_queries;
  config.iterations = run.config().bench_iterations;
  config.backend_id = require_backend(run.config().bench_backend, "bench");
  config.params = run.config().generation;
  config.raw_log = run.dir() / "bench" / "raw.jsonl";
  config.resume = resume;
  config.log_stamp = run.stamp(json::object());
  auto r = bench::run_bench(run.gateway(), ds, store, config, run.templates());
  write_report(run.reports_dir(), "bench", bench::render_report(r), run.stamp(bench::to_json(r)));
  return r;
}

}  // namespace qfces::pipeline
