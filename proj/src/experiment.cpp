#include "rankprompt/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "rankprompt/binary_io.hpp"
#include "rankprompt/errors.hpp"
#include "rankprompt/metrics.hpp"

namespace fs = std::filesystem;

namespace rankprompt {
namespace {

using DataTransform = std::function<OrdinalDataset(const OrdinalDataset&, std::uint64_t)>;

struct CellSpec {
  std::string label;
  RunConfig cfg;
  DataTransform transform;  // applied to the training split; may be empty
  std::string note;
};

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t file_checksum(const fs::path& path) { return fnv1a64(read_file_bytes(path.string())); }

std::vector<CellResult> run_grid(const RunConfig& base, const std::vector<CellSpec>& specs) {
  base.validate();
  std::vector<SplitData> data;
  for (std::size_t s = 0; s < base.num_seeds; ++s) data.push_back(prepare_data(base, base.seed + s));

  const std::size_t total = specs.size() * base.num_seeds;
  std::vector<MetricReport> reports(total);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      const CellSpec& spec = specs[job / base.num_seeds];
      const std::size_t s = job % base.num_seeds;
      const std::uint64_t seed = base.seed + s;
      try {
        SplitData cell_data = data[s];
        if (spec.transform) cell_data.train = spec.transform(cell_data.train, seed);
        reports[job] = run_once(spec.cfg, cell_data, seed).report;
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(base.jobs, total);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<CellResult> cells;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    CellResult r;
    r.label = specs[c].label;
    r.method = specs[c].cfg.method();
    r.note = specs[c].note;
    for (std::size_t s = 0; s < base.num_seeds; ++s) {
      const MetricReport& rep = reports[c * base.num_seeds + s];
      r.maes.push_back(rep.mae);
      r.ordinalities.push_back(rep.ordinality);
      r.mean_mae += rep.mae / static_cast<double>(base.num_seeds);
      r.mean_ordinality += rep.ordinality / static_cast<double>(base.num_seeds);
    }
    cells.push_back(std::move(r));
  }
  return cells;
}

/// Tables with one row per method and one column per setting label.
GridResult method_by_setting(std::vector<CellResult> cells, const std::vector<Method>& methods,
                             const std::vector<std::string>& settings, const std::string& corner) {
  GridResult g;
  g.mae.header = {corner};
  g.mae.header.insert(g.mae.header.end(), settings.begin(), settings.end());
  g.ordinality.header = g.mae.header;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<std::string> mae_row = {to_string(methods[m])};
    std::vector<std::string> ord_row = mae_row;
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const CellResult& c = cells[s * methods.size() + m];
      mae_row.push_back(fixed(c.mean_mae));
      ord_row.push_back(fixed(100.0 * c.mean_ordinality, 2));
    }
    g.mae.rows.push_back(std::move(mae_row));
    g.ordinality.rows.push_back(std::move(ord_row));
  }
  g.cells = std::move(cells);
  return g;
}

void write_tables(const RunConfig& cfg, const std::string& stem, const GridResult& g) {
  if (cfg.output_dir.empty()) return;
  fs::create_directories(cfg.output_dir);
  g.mae.write((fs::path(cfg.output_dir) / (stem + "_mae.csv")).string());
  g.ordinality.write((fs::path(cfg.output_dir) / (stem + "_ordinality.csv")).string());
  write_text(fs::path(cfg.output_dir) / (stem + "_config.txt"), render_config(cfg));
}

/// Percent of ranks reduced, then percent of samples dropped: "40-90".
std::string shift_label(const ShiftSetting& s, std::size_t num_ranks) {
  const double pct = 100.0 * static_cast<double>(s.reduce_classes) / static_cast<double>(num_ranks);
  return std::to_string(std::lround(pct)) + "-" + std::to_string(std::lround(100.0 * s.reduce_fraction));
}

}  // namespace

SplitData prepare_data(const RunConfig& cfg, std::uint64_t seed) {
  OrdinalDataset all = cfg.data.csv_path.empty()
                           ? generate_synthetic(cfg.model.prompt.num_ranks, cfg.data.per_rank,
                                                cfg.model.input_dim, cfg.data.noise_sigma, seed)
                           : load_csv(cfg.data.csv_path);
  auto [train, test] = split(all, {cfg.data.train_fraction, seed});
  return {std::move(train), std::move(test)};
}

RunOutcome run_once(const RunConfig& cfg, const SplitData& data, std::uint64_t seed) {
  ModelConfig mc = cfg.model;
  mc.prompt.num_ranks = data.train.num_ranks();
  mc.input_dim = data.train.input_dim();
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  RunOutcome out{make_model(mc, seed, cfg.encoder_seed), {}, {}};
  out.fit = fit(out.model, data.train, tc);
  out.report = evaluate(out.model, data.test, cfg.predict_rule, tc.temperature);
  return out;
}

std::string Table::to_csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

void Table::write(const std::string& path) const { write_text(path, to_csv()); }

TrainSummary cmd_train(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.output_dir.empty()) throw ConfigError("missing required key \"output_dir\"");
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  const SplitData data = prepare_data(cfg, cfg.seed);
  RunOutcome run = run_once(cfg, data, cfg.seed);
  const Model& model = run.model;

  TrainSummary summary;
  summary.run_dir = dir.string();
  summary.report = run.report;
  summary.image_encoder_only = model.uses_prompts() && model.config.method != Method::ZeroShot &&
                               !model.config.prompt.tune_rank && !model.config.prompt.tune_ctx;

  std::vector<std::string> files;
  write_file_bytes((dir / "checkpoint.bin").string(), serialize_checkpoint(model));
  files.push_back("checkpoint.bin");

  std::string trace = "epoch,mean_loss,lr\n";
  char buf[96];
  for (const EpochLog& e : run.fit.trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g\n", e.epoch, e.mean_loss, e.learning_rate);
    trace += buf;
  }
  write_text(dir / "loss_trace.csv", trace);
  files.push_back("loss_trace.csv");

  const MetricReport& r = run.report;
  std::string metrics = "metric,value\n";
  metrics += "mae," + fixed(r.mae, 6) + "\n";
  metrics += "mae_argmax," + fixed(r.mae_argmax, 6) + "\n";
  metrics += "mae_expectation," + fixed(r.mae_expectation, 6) + "\n";
  metrics += "accuracy," + fixed(r.accuracy, 6) + "\n";
  metrics += "ordinality," + fixed(r.ordinality, 6) + "\n";
  for (std::size_t j = 0; j < r.per_rank_counts.size(); ++j)
    metrics += "count_rank_" + std::to_string(j) + "," + std::to_string(r.per_rank_counts[j]) + "\n";
  write_text(dir / "metrics.csv", metrics);
  files.push_back("metrics.csv");

  const Matrix prototypes = model.prototypes();
  if (model.uses_prompts()) {
    export_prototypes((dir / "prototypes.opro").string(), prototypes);
    files.push_back("prototypes.opro");
  }
  export_heatmap(prototype_similarity(prototypes, cfg.train.temperature), (dir / "prototype_similarity").string());
  files.push_back("prototype_similarity.csv");
  files.push_back("prototype_similarity.pgm");
  if (!model.interpolation.empty()) {
    export_heatmap(model.interpolation, (dir / "interpolation").string());
    files.push_back("interpolation.csv");
    files.push_back("interpolation.pgm");
  }

  std::string manifest = "# rankprompt run manifest\n";
  if (summary.image_encoder_only) manifest += "# image-encoder-only: tune_rank and tune_ctx are both off\n";
  manifest += render_config(cfg);
  manifest += "metric.mae = " + fixed(r.mae, 6) + "\n";
  manifest += "metric.mae_argmax = " + fixed(r.mae_argmax, 6) + "\n";
  manifest += "metric.mae_expectation = " + fixed(r.mae_expectation, 6) + "\n";
  manifest += "metric.accuracy = " + fixed(r.accuracy, 6) + "\n";
  manifest += "metric.ordinality = " + fixed(r.ordinality, 6) + "\n";
  for (const auto& f : files) manifest += "file." + f + " = " + hex64(file_checksum(dir / f)) + "\n";
  write_text(dir / "manifest.txt", manifest);
  return summary;
}

GridResult cmd_sweep_interpolation(const RunConfig& cfg, const std::vector<std::size_t>& base_rank_counts,
                                   const std::vector<Interpolation>& types) {
  std::vector<CellSpec> specs;
  for (Interpolation type : types) {
    for (std::size_t count : base_rank_counts) {
      CellSpec s{std::string(to_string(type)) + "/" + std::to_string(count), cfg, {}, {}};
      s.cfg.model.method = Method::OrdinalClip;
      s.cfg.model.prompt.interpolation = type;
      s.cfg.model.prompt.num_base_ranks = count;
      s.cfg.validate();
      specs.push_back(std::move(s));
    }
  }
  GridResult g;
  g.cells = run_grid(cfg, specs);
  g.mae.header = {"interpolation"};
  g.ordinality.header = {"interpolation"};
  for (std::size_t count : base_rank_counts) {
    g.mae.header.push_back(std::to_string(count));
    g.ordinality.header.push_back(std::to_string(count));
  }
  for (std::size_t t = 0; t < types.size(); ++t) {
    const std::string name = types[t] == Interpolation::Linear ? "Linear" : "Inv. Prop";
    std::vector<std::string> mae_row = {name};
    std::vector<std::string> ord_row = {name};
    for (std::size_t c = 0; c < base_rank_counts.size(); ++c) {
      const CellResult& cell = g.cells[t * base_rank_counts.size() + c];
      mae_row.push_back(fixed(cell.mean_mae));
      ord_row.push_back(fixed(100.0 * cell.mean_ordinality, 2));
    }
    g.mae.rows.push_back(std::move(mae_row));
    g.ordinality.rows.push_back(std::move(ord_row));
  }
  write_tables(cfg, "sweep_interpolation", g);
  return g;
}

GridResult cmd_ablation(const RunConfig& cfg) {
  struct Setting {
    bool tune_rank;
    bool tune_ctx;
    bool init_ctx;
  };
  const Setting settings[] = {{true, false, false}, {false, true, false}, {true, true, false},
                              {true, false, true},  {false, true, true},  {true, true, true}};
  std::vector<CellSpec> specs;
  for (Method m : {Method::CoOp, Method::OrdinalClip}) {
    for (const Setting& s : settings) {
      CellSpec spec{std::string(to_string(m)) + (s.tune_rank ? "/rank" : "") + (s.tune_ctx ? "/ctx" : "") +
                        (s.init_ctx ? "/init" : ""),
                    cfg, {}, {}};
      spec.cfg.model.method = m;
      spec.cfg.model.prompt.tune_rank = s.tune_rank;
      spec.cfg.model.prompt.tune_ctx = s.tune_ctx;
      spec.cfg.model.prompt.init_ctx = s.init_ctx;
      specs.push_back(std::move(spec));
    }
  }
  GridResult g;
  g.cells = run_grid(cfg, specs);
  g.mae.header = {"method", "tune_rank", "tune_ctx", "init_ctx", "mae", "ordinality"};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& p = specs[i].cfg.model.prompt;
    g.mae.rows.push_back({to_string(specs[i].cfg.method()), p.tune_rank ? "1" : "0", p.tune_ctx ? "1" : "0",
                          p.init_ctx ? "1" : "0", fixed(g.cells[i].mean_mae),
                          fixed(100.0 * g.cells[i].mean_ordinality, 2)});
  }
  g.ordinality = g.mae;
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    g.mae.write((fs::path(cfg.output_dir) / "ablation.csv").string());
    write_text(fs::path(cfg.output_dir) / "ablation_config.txt", render_config(cfg));
  }
  return g;
}

GridResult cmd_fewshot(const RunConfig& cfg, const std::vector<std::size_t>& shots) {
  const std::vector<Method> methods = {Method::Baseline, Method::CoOp, Method::OrdinalClip};
  std::vector<CellSpec> specs;
  std::vector<std::string> labels;
  for (std::size_t k : shots) {
    labels.push_back(std::to_string(k));
    for (Method m : methods) {
      CellSpec s{std::string(to_string(m)) + "/" + std::to_string(k) + "-shot", cfg,
                 [k](const OrdinalDataset& train, std::uint64_t seed) { return few_shot_subsample(train, k, seed); },
                 {}};
      s.cfg.model.method = m;
      specs.push_back(std::move(s));
    }
  }
  GridResult g = method_by_setting(run_grid(cfg, specs), methods, labels, "shots");
  write_tables(cfg, "fewshot", g);
  return g;
}

GridResult cmd_distshift(const RunConfig& cfg, const std::vector<ShiftSetting>& grid) {
  const std::vector<Method> methods = {Method::Baseline, Method::CoOp, Method::OrdinalClip};
  std::vector<CellSpec> specs;
  std::vector<std::string> labels;
  for (const ShiftSetting& setting : grid) {
    labels.push_back(shift_label(setting, cfg.model.prompt.num_ranks));
    for (Method m : methods) {
      CellSpec s{std::string(to_string(m)) + "/" + shift_label(setting, cfg.model.prompt.num_ranks), cfg,
                 [setting](const OrdinalDataset& train, std::uint64_t seed) {
                   return distribution_shift_subsample(train, setting.reduce_classes, setting.reduce_fraction, seed);
                 },
                 {}};
      s.cfg.model.method = m;
      specs.push_back(std::move(s));
    }
  }
  GridResult g = method_by_setting(run_grid(cfg, specs), methods, labels, "re_cls-re_smp");
  write_tables(cfg, "distshift", g);
  return g;
}

ReportResult cmd_report(const std::string& run_dir) {
  ReportResult result;
  const fs::path dir(run_dir);
  const fs::path manifest_path = dir / "manifest.txt";
  std::ostringstream text;
  if (!fs::exists(manifest_path)) {
    result.problems.push_back("missing manifest.txt");
    result.exit_code = 1;
    result.text = "run directory " + run_dir + ": manifest.txt not found\n";
    return result;
  }
  const std::string manifest = read_text(manifest_path);
  try {
    parse_config(manifest, false);
  } catch (const std::exception& e) {
    result.problems.push_back(std::string("manifest config invalid: ") + e.what());
  }

  std::ostringstream config_echo;
  std::ostringstream metrics;
  std::ostringstream inventory;
  std::istringstream lines(manifest);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key.rfind("metric.", 0) == 0) {
      metrics << "  " << key.substr(7) << ": " << value << '\n';
    } else if (key.rfind("file.", 0) == 0) {
      const std::string name = key.substr(5);
      const fs::path file = dir / name;
      if (!fs::exists(file)) {
        result.problems.push_back("missing file " + name);
        inventory << "  " << name << "  MISSING\n";
        continue;
      }
      const std::string actual = hex64(file_checksum(file));
      if (actual != value) {
        result.problems.push_back("checksum mismatch for " + name + " (manifest " + value + ", file " + actual + ")");
        inventory << "  " << name << "  CHECKSUM MISMATCH\n";
      } else {
        inventory << "  " << name << "  " << fs::file_size(file) << " bytes  ok\n";
      }
    } else {
      config_echo << "  " << key << " = " << value << '\n';
    }
  }
  text << "run directory: " << run_dir << "\n\nmetrics:\n"
       << metrics.str() << "\nconfig:\n"
       << config_echo.str() << "\nfiles:\n"
       << inventory.str();
  if (!result.problems.empty()) {
    text << "\nproblems:\n";
    for (const auto& p : result.problems) text << "  " << p << '\n';
  }
  result.text = text.str();
  result.exit_code = result.problems.empty() ? 0 : 1;
  return result;
}

}  // namespace rankprompt
