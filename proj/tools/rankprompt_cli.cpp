// rankprompt command-line harness.
//
//   rankprompt train      run.cfg
//   rankprompt sweep      run.cfg --counts 2,3,4 --types linear,inverse_proportion
//   rankprompt ablation   run.cfg
//   rankprompt fewshot    run.cfg --shots 1,2,4,8
//   rankprompt distshift  run.cfg --shift 10:0.8 --shift 40:0.9
//   rankprompt report     RUN_DIR
//
// Exit codes: 0 success, 1 verification failure, 2 config error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rankprompt/errors.hpp"
#include "rankprompt/experiment.hpp"

using namespace rankprompt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitConfig = 2;

void print_table(const std::string& title, const Table& t) {
  std::cout << title << '\n' << t.to_csv();
}

ShiftSetting parse_shift(const std::string& text, std::size_t num_ranks) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("shift \"" + text + "\": expected PERCENT_OF_RANKS:FRACTION");
  double pct = 0.0;
  double frac = 0.0;
  try {
    pct = std::stod(text.substr(0, colon));
    frac = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("shift \"" + text + "\": not numeric");
  }
  if (pct < 0.0 || pct > 100.0 || frac < 0.0 || frac > 1.0) throw ConfigError("shift \"" + text + "\": out of range");
  return {static_cast<std::size_t>(pct / 100.0 * static_cast<double>(num_ranks) + 0.5), frac};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ordinal regression with language prototypes: training, experiment grids and run reports"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  std::vector<std::size_t> counts = {2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::string> types = {"linear", "inverse_proportion"};
  std::vector<std::size_t> shots = {1, 2, 4, 8};
  std::vector<std::string> shifts = {"10:0.8", "10:0.9", "20:0.8", "20:0.9", "30:0.8", "30:0.9", "40:0.8", "40:0.9"};
  std::size_t jobs = 0;

  auto* train = app.add_subcommand("train", "Single run with checkpoint, metrics, heatmaps and manifest");
  auto* sweep = app.add_subcommand("sweep", "Base-rank count x interpolation type grid");
  auto* ablation = app.add_subcommand("ablation", "Tune rank / tune ctx / init ctx grid for coop and ordinalclip");
  auto* fewshot = app.add_subcommand("fewshot", "Few-shot grid for baseline, coop and ordinalclip");
  auto* distshift = app.add_subcommand("distshift", "Distribution-shift grid for baseline, coop and ordinalclip");
  auto* report = app.add_subcommand("report", "Summarize a run directory and verify its checksums");

  for (auto* sub : {train, sweep, ablation, fewshot, distshift}) {
    sub->add_option("config", config_path, "key = value config file")->required();
    sub->add_option("--jobs", jobs, "Override the config's worker count");
  }
  sweep->add_option("--counts", counts, "Base-rank counts")->delimiter(',');
  sweep->add_option("--types", types, "Interpolation types")->delimiter(',');
  fewshot->add_option("--shots", shots, "Shots per rank")->delimiter(',');
  distshift->add_option("--shift", shifts, "PERCENT_OF_RANKS:FRACTION, repeatable");
  report->add_option("run_dir", run_dir, "Directory written by train")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      const ReportResult r = cmd_report(run_dir);
      std::cout << r.text;
      return r.exit_code == 0 ? kExitOk : kExitVerify;
    }

    RunConfig cfg = load_config(config_path);
    if (jobs > 0) cfg.jobs = jobs;

    if (train->parsed()) {
      const TrainSummary s = cmd_train(cfg);
      if (s.image_encoder_only) std::cout << "note: image-encoder-only (tune_rank and tune_ctx are off)\n";
      std::printf("run_dir %s\nmae %.6f\nmae_expectation %.6f\naccuracy %.6f\nordinality %.6f\n", s.run_dir.c_str(),
                  s.report.mae, s.report.mae_expectation, s.report.accuracy, s.report.ordinality);
    } else if (sweep->parsed()) {
      std::vector<Interpolation> kinds;
      for (const auto& t : types) kinds.push_back(parse_interpolation(t));
      const GridResult g = cmd_sweep_interpolation(cfg, counts, kinds);
      print_table("# MAE", g.mae);
      print_table("# ordinality (%)", g.ordinality);
    } else if (ablation->parsed()) {
      print_table("# ablation", cmd_ablation(cfg).mae);
    } else if (fewshot->parsed()) {
      const GridResult g = cmd_fewshot(cfg, shots);
      print_table("# MAE", g.mae);
      print_table("# ordinality (%)", g.ordinality);
    } else if (distshift->parsed()) {
      std::vector<ShiftSetting> grid;
      for (const auto& s : shifts) grid.push_back(parse_shift(s, cfg.model.prompt.num_ranks));
      const GridResult g = cmd_distshift(cfg, grid);
      print_table("# MAE", g.mae);
      print_table("# ordinality (%)", g.ordinality);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitVerify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitVerify;
  }
  return kExitOk;
}
