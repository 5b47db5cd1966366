#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "perclab/estimators.hpp"
#include "perclab/lattice.hpp"

namespace perclab {

inline constexpr const char* kToolVersion = "0.3.0";

enum class ExperimentKind {
  TwoPoint,
  OneArm,
  Pioneers,
  Susceptibility,
  Plateau,
  Triangle,
  PtSolve,
  MassFit,
  Oracle,
  OsssCheck,
  Slab,
  Coupling,
  ImageSum,
};

const char* to_string(ExperimentKind k);
std::optional<ExperimentKind> parse_kind(const std::string& s);
std::vector<std::string> experiment_kinds();

// Invalid configuration; `field` names the offending key.
struct ConfigError : std::invalid_argument {
  ConfigError(std::string field, const std::string& reason);
  std::string field;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::TwoPoint;
  ModelSpec model;
  std::vector<double> p_values;
  std::vector<Point> x_values;
  std::vector<std::int64_t> shells;
  std::vector<std::int64_t> radii;
  std::vector<std::int64_t> n_values;
  std::vector<std::int64_t> k_values;
  std::vector<double> lambdas;
  std::uint64_t replicas = 0;
  Caps caps;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string output;
  ArmMetric metric = ArmMetric::Extrinsic;
  std::int64_t box_radius = 0;
  std::int64_t explore_radius = 0;
  std::int64_t grid_radius = 0;
  double decay_exponent = 0.0;
  std::int64_t cutoff = 2;
  std::int64_t torus_period = 0;
  std::int64_t instances = 0;
  int max_indices = 8;
  std::optional<Point> rect_lo;
  std::optional<Point> rect_hi;
  bool power_correction = false;

  // Normalized key/value pairs as read (after command-line overrides), excluding `workers`.
  std::map<std::string, std::string> entries;
};

// Parses "key = value" lines ('#' starts a comment). Lists are comma separated; point lists
// separate points with ';'. Unknown keys, malformed values and missing required keys throw
// ConfigError.
ExperimentConfig parse_config(const std::string& text, std::optional<ExperimentKind> expected = std::nullopt,
                              const std::map<std::string, std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path, std::optional<ExperimentKind> expected = std::nullopt,
                             const std::map<std::string, std::string>& overrides = {});

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

// Fixed column order per experiment kind.
std::vector<std::string> result_columns(ExperimentKind k);

// Runs the experiment in memory.
ResultTable compute_experiment(const ExperimentConfig& cfg);

struct RunOutputs {
  std::string csv_path;
  std::string metadata_path;
  std::string timing_path;
  std::size_t rows = 0;
};

// Writes <output>.csv, <output>.json (deterministic metadata) and <output>.timing.json.
RunOutputs run_experiment(const ExperimentConfig& cfg);

std::string format_double(double v);
std::string to_csv(const ResultTable& t);

struct PlotSpec {
  std::string x_column;
  std::string y_column;
  std::string error_column;  // empty: no error bars
  bool log_log = true;
  std::optional<double> reference_slope;
  std::optional<double> horizontal_guide;
  std::string title;
};

struct PlotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlotResult {
  std::size_t points = 0;
  std::vector<std::string> warnings;
};

// Plot preset for an experiment kind (reference slopes from the model dimension).
PlotSpec default_plot_spec(const ExperimentConfig& cfg);

// Renders the CSV as a standalone SVG file.
PlotResult emit_plot(const std::string& csv_path, const PlotSpec& spec, const std::string& svg_path);

}  // namespace perclab
