#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "perclab/runner.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 1;
constexpr int kRuntimeError = 2;

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

struct PlotArgs {
  std::string csv;
  std::string out;
  std::string x, y, err;
  bool lin = false;
  bool log = false;
  std::optional<double> slope;
  std::optional<double> hline;
  std::string title;
};

int run(perclab::ExperimentKind kind, const RunArgs& a) {
  std::map<std::string, std::string> overrides;
  if (a.seed) overrides["seed"] = std::to_string(*a.seed);
  if (a.workers) overrides["workers"] = std::to_string(*a.workers);
  if (!a.out.empty()) overrides["output"] = a.out;
  perclab::ExperimentConfig cfg;
  try {
    cfg = perclab::load_config(a.config, kind, overrides);
  } catch (const perclab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  }
  try {
    const auto out = perclab::run_experiment(cfg);
    std::cout << out.csv_path << " (" << out.rows << " rows)\n" << out.metadata_path << "\n";
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

// Plot defaults from the metadata sidecar written next to the CSV, when present.
std::optional<perclab::PlotSpec> sidecar_spec(const std::string& csv) {
  std::filesystem::path json = csv;
  json.replace_extension(".json");
  std::ifstream is(json);
  if (!is) return std::nullopt;
  try {
    const auto meta = nlohmann::json::parse(is);
    std::map<std::string, std::string> entries;
    for (const auto& [k, v] : meta.at("config").items()) entries[k] = v.get<std::string>();
    std::string text;
    for (const auto& [k, v] : entries) text += k + " = " + v + "\n";
    return perclab::default_plot_spec(perclab::parse_config(text));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

int plot(const PlotArgs& a) {
  perclab::PlotSpec spec = sidecar_spec(a.csv).value_or(perclab::PlotSpec{});
  if (!a.x.empty()) spec.x_column = a.x;
  if (!a.y.empty()) spec.y_column = a.y;
  if (!a.err.empty()) spec.error_column = a.err == "none" ? "" : a.err;
  if (a.lin) spec.log_log = false;
  if (a.log) spec.log_log = true;
  if (a.slope) spec.reference_slope = *a.slope;
  if (a.hline) spec.horizontal_guide = *a.hline;
  if (!a.title.empty()) spec.title = a.title;
  if (spec.x_column.empty() || spec.y_column.empty()) {
    std::cerr << "error: no metadata sidecar found; pass --x and --y\n";
    return kBadConfig;
  }
  std::string out = a.out;
  if (out.empty()) out = std::filesystem::path(a.csv).replace_extension(".svg").string();
  try {
    const auto res = perclab::emit_plot(a.csv, spec, out);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << out << " (" << res.points << " points)\n";
    return kOk;
  } catch (const perclab::PlotError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bond percolation laboratory"};
  app.set_version_flag("--version", perclab::kToolVersion);
  app.require_subcommand(1);

  std::map<std::string, RunArgs> run_args;
  for (const auto& name : perclab::experiment_kinds()) {
    auto* sub = app.add_subcommand(name, "run a " + name + " experiment");
    auto& a = run_args[name];
    sub->add_option("--config", a.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed, "master seed (overrides the config)");
    sub->add_option("--workers", a.workers, "worker threads (results do not depend on it)")->check(CLI::Range(1, 1024));
    sub->add_option("--out", a.out, "output path prefix (overrides the config)");
  }
  PlotArgs pa;
  auto* ps = app.add_subcommand("plot", "render a result CSV as SVG");
  ps->add_option("--csv", pa.csv, "result CSV")->required();
  ps->add_option("--out", pa.out, "SVG path (default: next to the CSV)");
  ps->add_option("--x", pa.x, "x column");
  ps->add_option("--y", pa.y, "y column");
  ps->add_option("--err", pa.err, "error-bar column, or 'none'");
  ps->add_flag("--lin", pa.lin, "linear axes");
  ps->add_flag("--log", pa.log, "logarithmic axes");
  ps->add_option("--slope", pa.slope, "reference slope through the first point");
  ps->add_option("--hline", pa.hline, "horizontal guide level");
  ps->add_option("--title", pa.title, "plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }
  if (ps->parsed()) return plot(pa);
  for (auto& [name, a] : run_args) {
    if (app.got_subcommand(name)) return run(*perclab::parse_kind(name), a);
  }
  return kBadConfig;
}
