#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"
#include "qfces/pipeline.hpp"

using namespace qfces;
using namespace qfces::pipeline;
namespace fs = std::filesystem;

namespace {

std::string base_ini(const fs::path& out, const std::string& extra = "") {
  return "[run]\ndataset = pipeline5.jsonl\noutput_dir = " + out.string() +
         "\nrun_id = r\nseed = 7\n\n[backend.mock]\ntype = mock\n\n[evaluation]\nn = 4\n" + extra;
}

RunConfig parse(const std::string& ini) { return RunConfig::parse(ini, oracle::fixture("")); }

void expect_error(const std::string& ini, const std::string& needle) {
  try {
    parse(ini);
    FAIL("expected an error for: " << needle);
  } catch (const ValidationError& e) {
    CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
  }
}

}  // namespace

TEST_CASE("config parsing") {
  const auto out = oracle::scratch_dir("cfg");
  const auto c = parse(base_ini(out, "dimensions = clarity, faithfulness\n"));
  CHECK(c.seed == 7);
  CHECK(c.run_id == "r");
  CHECK(c.dataset == oracle::fixture("pipeline5.jsonl"));
  CHECK(c.evaluation.n_samples == 4);
  CHECK(c.evaluation_backend == "mock");
  CHECK(c.generation_backend == "mock");
  CHECK(c.bench_backend == "mock");
  CHECK(c.backends.at("mock").mock.seed == 7);
  CHECK(c.dimensions == std::vector<std::string>{"clarity", "faithfulness"});
  CHECK(c.config_hash.size() == 16);
  CHECK(parse(base_ini(out)).config_hash != parse(base_ini(out, "temperature = 0.3\n")).config_hash);
  CHECK(default_run_dir(c) == out / "r");
}

TEST_CASE("config errors") {
  const auto out = oracle::scratch_dir("cfg_err");
  expect_error(base_ini(out, "colour = blue\n"), "colour");
  expect_error(base_ini(out) + "[mystery]\nx = 1\n", "mystery");
  expect_error(base_ini(out) + "[generation]\nbackend = ghost\n", "ghost");
  expect_error(base_ini(out, "n = lots\n"), "n");
  expect_error(base_ini(out, "dimensions = brevity\n"), "brevity");
  expect_error(base_ini(out) + "[backend.x]\ntype = carrier-pigeon\n", "carrier-pigeon");
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.ini"), ValidationError);
}

TEST_CASE("commands in order on a small run") {
  const auto out = oracle::scratch_dir("pipe");
  Run run(parse(base_ini(out)), out / "r");
  CHECK_THROWS_AS(run.dataset(), ValidationError);
  CHECK_THROWS_AS(gen_mos(run), ValidationError);

  const auto ds = ingest(run);
  CHECK(ds.instances.size() == 5);
  CHECK(fs::exists(run.dir() / "manifest.json"));
  CHECK(stats(run).n_total_products == 15);

  CHECK_THROWS_AS(gen_ces(run, prompt::CesMode::Mos), ValidationError);
  CHECK(gen_mos(run) == 15);
  for (const auto& j : jsonl::read_all(run.mos_store_path())) {
    CHECK(j["seed"] == 7);
    CHECK(j["config_hash"] == run.config().config_hash);
  }
  CHECK(gen_ces(run, prompt::CesMode::Mos) == 5);
  CHECK(gen_ces(run, prompt::CesMode::Dia) == 5);
  CHECK(read_ces(run.ces_path("dia")).front().mode == prompt::CesMode::Dia);

  const auto f = check_format(run, "mos");
  CHECK(f.n_instances == 5);
  CHECK(f.n_passed_all == 5);
  CHECK(render_format_summary(f).find("TABLE_PRESENT") != std::string::npos);
  CHECK_THROWS_AS(check_format(run, "absent"), ValidationError);

  const auto ces = run_judge(run, JudgeTarget::Ces, "mos", {"clarity", "format_adherence"});
  CHECK(ces.size() == 10);
  // Resuming skips every record that exists already.
  CHECK(run_judge(run, JudgeTarget::Ces, "mos", {"clarity", "format_adherence"}).size() == 10);
  CHECK(jsonl::read_all(run.dir() / "judge" / "ces_mos.jsonl").size() == 10);
  CHECK_THROWS_AS(run_judge(run, JudgeTarget::Ces, "mos", {"fluency"}), ValidationError);
  CHECK(run_judge(run, JudgeTarget::Ces, "dia", {"clarity", "format_adherence"}).size() == 10);
  CHECK(run_judge(run, JudgeTarget::Mos, "", {"fluency"}).size() == 15);

  const auto r = report(run);
  REQUIRE(r.ces.has_value());
  REQUIRE(r.mos.has_value());
  CHECK(r.ces->models == std::vector<std::string>{"dia", "mos"});
  CHECK(render_eval_report(r).find("CL") != std::string::npos);
  CHECK(fs::exists(run.reports_dir() / "eval_matrix.json"));
}

TEST_CASE("meta-evaluation joins judge records to human ratings") {
  annotations::AnnotationSet human;
  std::vector<judge::InstanceScore> scores;
  const std::vector<std::string> models = {"m1", "m2", "m3"};
  for (int q = 0; q < 4; ++q) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      const std::string qid = "q" + std::to_string(q);
      const int base = static_cast<int>(m) + 1 + (q % 2);
      human.add({"A1", qid, models[m], "clarity", 1, base});
      human.add({"A2", qid, models[m], "clarity", 1, std::min(5, base + 1)});
      judge::InstanceScore s;
      s.instance_id = qid;
      s.model = models[m];
      s.dimension = "clarity";
      s.weighted = 1.5 + static_cast<double>(m);
      s.distribution = judge::ScoreDistribution::from_counts({{1, 1}});
      scores.push_back(s);
    }
  }
  metaeval::SummaryLevelOptions opts;
  opts.iterations = 200;
  const auto rows = meta_eval(human, scores, opts);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].dimension == "clarity");
  CHECK(rows[0].result.rho == doctest::Approx(1.0));
  CHECK(render_meta_eval(rows).find("clarity") != std::string::npos);

  scores.pop_back();
  CHECK_THROWS_AS(meta_eval(human, scores, opts), ValidationError);
}

TEST_CASE("agreement and flag commands write reports") {
  const auto out = oracle::scratch_dir("pipe_ann");
  Run run(parse(base_ini(out)), out / "r");
  annotations::AnnotationSet r1, r2;
  const std::vector<std::vector<int>> scores = {{5, 4, 2}, {3, 4, 2}, {4, 5, 3}};
  for (std::size_t a = 0; a < scores.size(); ++a) {
    for (std::size_t i = 0; i < scores[a].size(); ++i) {
      r1.add({"A" + std::to_string(a + 1), "q1", "s" + std::to_string(i + 1), "clarity", 1, scores[a][i]});
    }
    r2.add({"A" + std::to_string(a + 1), "q1", "s1", "clarity", 2, 4});
  }
  r1.save(out / "r1.jsonl");
  r2.save(out / "r2.jsonl");

  const auto flags = flag_rounds(run, out / "r1.jsonl", out / "r2.jsonl");
  REQUIRE(flags.flags.flagged.size() == 1);
  CHECK(flags.flags.flagged[0].summary_id == "s1");
  CHECK(flags.merged_records == 9u);
  CHECK(fs::exists(run.dir() / "annotations" / "merged.jsonl"));
  CHECK(render_flags(flags).find("s1") != std::string::npos);

  const auto ag = agreement(run, out / "r1.jsonl", out / "r2.jsonl", annotations::Difference::Ordinal);
  REQUIRE(ag.agreement.rows.size() == 1);
  CHECK(ag.agreement.rows[0].round1.has_value());
  CHECK(ag.raters.pairwise.size() == 3);
  CHECK(fs::exists(run.reports_dir() / "agreement.json"));
}

#ifdef QFCES_CLI_PATH
namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(QFCES_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("command-line exit codes") {
  const auto out = oracle::scratch_dir("pipe_cli");
  const auto cfg = out / "run.ini";
  {
    std::ofstream f(cfg);
    f << "[run]\ndataset = " << oracle::fixture("pipeline5.jsonl").string() << "\noutput_dir = " << out.string()
      << "\nrun_id = r\nseed = 3\n\n[backend.mock]\ntype = mock\n\n[evaluation]\nn = 3\n";
  }
  const std::string c = "-c " + cfg.string();
  CHECK(cli("--help") == 0);
  CHECK(cli(c) == 1);
  CHECK(cli(c + " bogus") == 1);
  CHECK(cli(c + " gen-mos") == 1);
  CHECK(cli(c + " ingest") == 0);
  CHECK(cli(c + " gen-ces --mode mos") == 1);
  CHECK(cli(c + " gen-ces --mode both") == 1);
  CHECK(cli(c + " gen-mos") == 0);
  CHECK(cli(c + " gen-ces --mode mos") == 0);
  CHECK(cli(c + " judge --dims brevity") == 1);
  CHECK(cli(c + " judge --dims clarity") == 0);
  CHECK(cli(c + " report --json") == 0);
  CHECK(cli("-c /nonexistent.ini stats") == 1);

  const auto bad = out / "bad.ini";
  {
    std::ofstream f(bad);
    f << "[run]\ndataset = " << oracle::fixture("pipeline5.jsonl").string() << "\noutput_dir = " << out.string()
      << "\nrun_id = r\n\n[backend.down]\ntype = http\nendpoint = http://127.0.0.1:9/v1/chat/completions\n"
      << "model = m\nmax_attempts = 1\n";
  }
  CHECK(cli("-c " + bad.string() + " --run-dir " + (out / "r").string() + " gen-ces --mode mos") == 2);
}
#endif
