// qfces: command-line front end for the comparative-summary pipeline.
//
// Exit codes: 0 success, 1 validation failure, 2 backend failure.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "qfces/error.hpp"
#include "qfces/pipeline.hpp"

namespace fs = std::filesystem;
using namespace qfces;

namespace {

// Latest run directory under output_dir created from this config.
fs::path latest_run_dir(const pipeline::RunConfig& config) {
  const std::string suffix = "-" + config.config_hash.substr(0, 8);
  std::optional<fs::path> best;
  if (fs::exists(config.output_dir)) {
    for (const auto& e : fs::directory_iterator(config.output_dir)) {
      const std::string name = e.path().filename().string();
      if (!e.is_directory() || name.size() < suffix.size() ||
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        continue;
      }
      if (!best || e.path().filename() > best->filename()) best = e.path();
    }
  }
  if (!best) throw ValidationError("no run directory found under " + config.output_dir.string() + " (run ingest or pass --run-dir)");
  return *best;
}

void emit(bool as_json, const pipeline::Run& run, const nlohmann::json& j, const std::string& text) {
  if (as_json) {
    std::cout << run.stamp(j).dump(2) << "\n";
  } else {
    std::cout << text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-focused comparative summaries: generation, judging, meta-evaluation and latency benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir_opt;
  bool as_json = false;
  app.add_option("-c,--config", config_path, "Run configuration (INI)")->required();
  app.add_option("--run-dir", run_dir_opt, "Run directory (default: from run_id or the latest run)");

  auto* ingest = app.add_subcommand("ingest", "Validate the dataset and start a run directory");
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  stats->add_flag("--json", as_json, "Machine-readable output");
  auto* gen_mos = app.add_subcommand("gen-mos", "Generate one opinion summary per product");

  auto* gen_ces = app.add_subcommand("gen-ces", "Generate comparative summaries");
  std::string mode_str;
  std::string label;
  gen_ces->add_option("--mode", mode_str, "mos or dia")->required()->check(CLI::IsMember({"mos", "dia"}));
  gen_ces->add_option("--label", label, "Output label (default: the mode)");

  auto* check = app.add_subcommand("check-format", "Structural checks on comparative summaries");
  check->add_option("--label", label, "Summaries to check (default: mos)");
  check->add_flag("--json", as_json, "Machine-readable output");

  auto* judge_cmd = app.add_subcommand("judge", "Score summaries with the judge model");
  std::vector<std::string> dims;
  std::string target = "ces";
  judge_cmd->add_option("--dims", dims, "Dimension ids (comma separated)")->delimiter(',');
  judge_cmd->add_option("--target", target, "ces or mos")->check(CLI::IsMember({"ces", "mos"}));
  judge_cmd->add_option("--label", label, "Summaries to score and result label (default: mos)");

  auto* meta = app.add_subcommand("meta-eval", "Correlate judge scores with human ratings");
  std::string ratings;
  std::vector<std::string> judge_files;
  meta->add_option("--ratings", ratings, "Human ratings (JSONL)")->required();
  meta->add_option("--judge", judge_files, "Judge result files (default: every file in the run's judge/)");
  meta->add_flag("--json", as_json, "Machine-readable output");

  auto* agree = app.add_subcommand("agreement", "Inter-rater agreement and rater correlation tables");
  std::string round1, round2, difference = "ordinal";
  agree->add_option("--round1", round1, "Round-1 ratings (JSONL)")->required();
  agree->add_option("--round2", round2, "Round-2 ratings of flagged items (JSONL)");
  agree->add_option("--difference", difference, "ordinal or interval")->check(CLI::IsMember({"ordinal", "interval"}));
  agree->add_flag("--json", as_json, "Machine-readable output");

  auto* flags = app.add_subcommand("flag-rounds", "Flag items for re-rating and merge the second round");
  flags->add_option("--round1", round1, "Round-1 ratings (JSONL)")->required();
  flags->add_option("--round2", round2, "Round-2 ratings to merge (JSONL)");
  flags->add_flag("--json", as_json, "Machine-readable output");

  auto* bench = app.add_subcommand("bench", "Time comparative-summary generation in both modes");
  bool resume = false;
  bench->add_flag("--resume", resume, "Continue an interrupted benchmark");
  bench->add_flag("--json", as_json, "Machine-readable output");

  auto* report = app.add_subcommand("report", "Judge score matrix");
  report->add_flag("--json", as_json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto config = pipeline::RunConfig::load(config_path);
    fs::path dir;
    if (!run_dir_opt.empty()) {
      dir = run_dir_opt;
    } else if (*ingest || !config.run_id.empty()) {
      dir = pipeline::default_run_dir(config);
    } else {
      dir = latest_run_dir(config);
    }
    pipeline::Run run(std::move(config), dir);

    if (*ingest) {
      const auto ds = pipeline::ingest(run);
      std::cout << "run directory: " << run.dir().string() << "\n"
                << ds.instances.size() << " instances, " << ds.product_count() << " products, " << ds.dropped.size()
                << " dropped\n";
      for (const auto& d : ds.dropped) std::cout << "  line " << d.line << ": " << d.reason << "\n";
    } else if (*stats) {
      const auto s = pipeline::stats(run);
      emit(as_json, run, catalog::to_json(s), catalog::render_stats_table(s));
    } else if (*gen_mos) {
      std::cout << pipeline::gen_mos(run) << " opinion summaries written to " << run.mos_store_path().string() << "\n";
    } else if (*gen_ces) {
      const auto mode = prompt::parse_mode(mode_str);
      const std::string out_label = label.empty() ? mode_str : label;
      std::cout << pipeline::gen_ces(run, mode, out_label) << " comparative summaries written to "
                << run.ces_path(out_label).string() << "\n";
    } else if (*check) {
      const auto s = pipeline::check_format(run, label.empty() ? "mos" : label);
      emit(as_json, run, pipeline::to_json(s), pipeline::render_format_summary(s));
    } else if (*judge_cmd) {
      const auto scores = pipeline::run_judge(
          run, target == "ces" ? pipeline::JudgeTarget::Ces : pipeline::JudgeTarget::Mos, label, dims);
      std::cout << scores.size() << " judge records\n";
    } else if (*meta) {
      std::vector<fs::path> files(judge_files.begin(), judge_files.end());
      const auto rows = pipeline::meta_eval(run, ratings, files);
      emit(as_json, run, pipeline::to_json(rows), pipeline::render_meta_eval(rows));
    } else if (*agree) {
      const auto out = pipeline::agreement(
          run, round1, round2.empty() ? std::nullopt : std::optional<fs::path>(round2),
          difference == "interval" ? annotations::Difference::Interval : annotations::Difference::Ordinal);
      emit(as_json, run,
           {{"agreement", annotations::to_json(out.agreement)}, {"rater_tables", annotations::to_json(out.raters)}},
           annotations::render_agreement(out.agreement) + "\n" + annotations::render_rater_tables(out.raters));
    } else if (*flags) {
      const auto out =
          pipeline::flag_rounds(run, round1, round2.empty() ? std::nullopt : std::optional<fs::path>(round2));
      emit(as_json, run, pipeline::to_json(out), pipeline::render_flags(out));
    } else if (*bench) {
      const auto r = pipeline::bench(run, resume);
      emit(as_json, run, bench::to_json(r), bench::render_report(r));
    } else if (*report) {
      const auto r = pipeline::report(run);
      emit(as_json, run, pipeline::to_json(r), pipeline::render_eval_report(r));
    }
  } catch (const BackendError& e) {
    spdlog::error("backend failure: {}", e.what());
    return 2;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
