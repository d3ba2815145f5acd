// netsem: batch driver for equilibria, simulation, estimation and Monte Carlo.
//
// Exit codes: 0 ok, 2 input/schema, 3 precondition, 4 numeric, 5 comparison.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "netsem/netsem.hpp"

namespace fs = std::filesystem;
using namespace netsem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string modes;
  std::string compare;
  std::string normalize;
  int jobs = 0;
  int iv_depth = 0;
};

RunConfig load(const Options& o, bool required) {
  if (o.config.empty()) {
    if (required) throw SchemaError("--config is required");
    return parse_run_config("{}");
  }
  return load_run_config(o.config);
}

fs::path out_dir(const Options& o, const RunConfig& rc) {
  if (!o.out.empty()) return o.out;
  if (rc.out) return *rc.out;
  throw SchemaError("--out is required");
}

std::vector<EstimatorMode> parse_mode_list(const std::string& list) {
  std::vector<EstimatorMode> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = list.find(',', start);
    const std::string item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) {
      try {
        out.push_back(parse_mode(item));
      } catch (const DomainError& e) {
        throw SchemaError(std::string("--mode: ") + e.what());
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw SchemaError("--mode: no estimator named");
  return out;
}

Normalization parse_norm_flag(const std::string& s) {
  try {
    return parse_normalization(s);
  } catch (const DomainError& e) {
    throw SchemaError(std::string("--normalize: ") + e.what());
  }
}

int cmd_game(const Options& o, bool planner) {
  const RunConfig rc = load(o, true);
  if (!rc.equilibrium) throw SchemaError("config: 'equilibrium' section is required");
  const io::GameInput in = io::read_game_input(rc.equilibrium->network, rc.equilibrium->abilities);
  const fs::path dir = out_dir(o, rc);
  EquilibriumResult r;
  try {
    r = planner ? planner_optimum(in.alpha, rc.equilibrium->params, in.net)
                : nash_equilibrium(in.alpha, rc.equilibrium->params, in.net);
  } catch (const PreconditionError& e) {
    std::fprintf(stderr, "unstable: spectral margin %.6g\n", e.margin());
    throw;
  }
  io::write_text(dir / (planner ? "planner.csv" : "equilibrium.csv"), io::effort_csv(r));
  io::write_text(dir / "stability.json", io::stability_json(r).dump(2) + "\n");
  std::printf("stable: margin %.6g (radius_T %.6g, radius_S %.6g), residual %.3g\n", r.stability.margin,
              r.stability.radius_T, r.stability.radius_S, r.residual_norm);
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return 0;
}

int cmd_simulate(const Options& o) {
  RunConfig rc = load(o, true);
  rc.require_seed();
  if (!o.normalize.empty()) rc.dgp.normalization = parse_norm_flag(o.normalize);
  const fs::path dir = out_dir(o, rc);
  const SimulatedDataset d = simulate(rc.dgp);
  json echo = rc.source;
  echo["dgp"]["normalization"] = std::string(normalization_name(rc.dgp.normalization));
  io::write_dataset(dir, d, echo);
  io::write_text(dir / "seed.txt", std::to_string(*rc.seed) + "\n");
  std::printf("wrote %s (structural residual %.3g, spectral margin %.6g)\n", dir.string().c_str(),
              d.structural_residual, d.spectral_margin);
  return 0;
}

int cmd_estimate(const Options& o) {
  RunConfig rc = load(o, false);
  fs::path data = !o.data.empty() ? fs::path(o.data) : rc.data.value_or(fs::path());
  if (data.empty()) throw SchemaError("--data is required");
  const fs::path dir = out_dir(o, rc);
  EstimateOptions opt = rc.estimate;
  // Without an explicit choice, follow the dataset's own generator settings.
  if (fs::exists(data / "config.json") && !rc.estimate_normalization) {
    const RunConfig echo = load_run_config(data / "config.json");
    opt.normalization = echo.dgp.normalization;
    opt.similarity_column = echo.dgp.similarity_column;
  }
  if (!o.normalize.empty()) opt.normalization = parse_norm_flag(o.normalize);
  if (o.iv_depth != 0) opt.depth = o.iv_depth;
  if (opt.depth < 1) throw SchemaError("--iv-depth: must be >= 1");
  const std::vector<EstimatorMode> modes = o.modes.empty() ? rc.estimate_modes : parse_mode_list(o.modes);

  const EstimationData ed = io::read_dataset(data);
  std::string csv = io::estimates_csv_header(), summary = io::summary_csv_header();
  json results = json::array();
  for (EstimatorMode m : modes) {
    std::pair<EstimateResult, EstimateResult> r;
    try {
      r = estimate_system(ed, m, opt);
    } catch (const Error& e) {
      std::fprintf(stderr,
                   "estimation failed\n  mode: %s\n  data: %s\n  iv depth: %d\n  normalization: %s\n  error: %s\n",
                   std::string(mode_name(m)).c_str(), data.string().c_str(), opt.depth,
                   std::string(normalization_name(opt.normalization)).c_str(), e.what());
      return e.exit_code() == 2 ? 2 : 4;
    }
    for (const EstimateResult* e : {&r.first, &r.second}) {
      csv += io::estimates_csv_rows(*e);
      summary += io::summary_csv_row(*e);
      results.push_back(io::estimate_json(*e));
    }
  }
  io::write_text(dir / "estimates.csv", csv);
  io::write_text(dir / "summary.csv", summary);
  io::write_text(dir / "results.json", results.dump(2) + "\n");
  std::fputs(summary.c_str(), stdout);
  return 0;
}

int cmd_montecarlo(const Options& o) {
  RunConfig rc = load(o, true);
  rc.require_seed();
  McConfig cfg = rc.mc;
  if (!o.normalize.empty()) {
    cfg.base.normalization = parse_norm_flag(o.normalize);
    cfg.estimate.normalization = cfg.base.normalization;
  }
  if (o.iv_depth != 0) cfg.estimate.depth = o.iv_depth;
  if (!o.modes.empty()) cfg.modes = parse_mode_list(o.modes);
  if (o.jobs != 0) cfg.jobs = o.jobs;
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw SchemaError(e.what());
  }
  const fs::path dir = out_dir(o, rc);
  std::vector<ReferenceCell> reference;
  if (!o.compare.empty()) reference = io::read_reference(o.compare);

  const McReport rep = run_experiment(cfg);
  io::write_text(dir / "report.csv", io::report_csv(rep));
  io::write_text(dir / "report.json", io::report_json(rep).dump(2) + "\n");
  io::write_text(dir / "run_info.json",
                 json{{"wall_seconds", rep.wall_seconds}, {"jobs", cfg.jobs}}.dump(2) + "\n");
  int failures = 0;
  for (const McCell& c : rep.cells)
    if (c.n_fail > 0) failures += c.n_fail;
  std::printf("%zu cells, %d replications each (%.1f s)\n", rep.cells.size(), rep.replications, rep.wall_seconds);
  if (failures > 0) std::printf("failed estimations (summed over cells): %d\n", failures);

  if (o.compare.empty()) return 0;
  const std::vector<Deviation> dev = compare_to_reference(rep, reference);
  io::write_text(dir / "deviations.csv", io::deviation_csv(dev));
  int failed = 0;
  for (const Deviation& d : dev) failed += d.pass ? 0 : 1;
  std::printf("comparison: %zu cells, %d outside tolerance\n", dev.size(), failed);
  return failed == 0 ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"netsem: two-layer network games and network econometrics"};
  app.require_subcommand(1);
  Options o;

  auto* eq = app.add_subcommand("equilibrium", "Nash equilibrium efforts from network files");
  auto* pl = app.add_subcommand("planner", "Planner-optimal efforts from network files");
  auto* sim = app.add_subcommand("simulate", "Simulate one dataset");
  auto* est = app.add_subcommand("estimate", "Estimate both equations on a dataset directory");
  auto* mc = app.add_subcommand("montecarlo", "Run the replication study");
  for (CLI::App* s : {eq, pl, sim, est, mc}) {
    s->add_option("--config", o.config, "JSON run configuration");
    s->add_option("--out", o.out, "Output directory");
  }
  for (CLI::App* s : {sim, est, mc})
    s->add_option("--normalize", o.normalize, "Within-layer normalization: on, off, row, max-sum");
  for (CLI::App* s : {est, mc}) {
    s->add_option("--mode", o.modes, "Comma list of estimators: 2sls, 2sls-ec");
    s->add_option("--iv-depth", o.iv_depth, "Maximum instrument chain length");
  }
  est->add_option("--data", o.data, "Dataset directory written by simulate");
  mc->add_option("--jobs", o.jobs, "Worker threads");
  mc->add_option("--compare", o.compare, "Reference table CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (eq->parsed()) return cmd_game(o, false);
    if (pl->parsed()) return cmd_game(o, true);
    if (sim->parsed()) return cmd_simulate(o);
    if (est->parsed()) return cmd_estimate(o);
    if (mc->parsed()) return cmd_montecarlo(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
