#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "perclab/runner.hpp"

using namespace perclab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string header(const ResultTable& t) {
  std::string line = to_csv(t);
  return line.substr(0, line.find('\n'));
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "perclab_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("missing and unknown keys are reported by name") {
  try {
    parse_config("kind = two_point\ndimension = 2\np = 0.3\nx = 1,0\noutput = a.csv\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "replicas");
  }
  try {
    parse_config("kind = two_point\ndimension = 2\np = 0.3\nx = 1,0\nreplicas = 5\noutput = a\nbogus = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "bogus");
  }
  try {
    parse_config("kind = two_point\ndimension = 2\np = 0.3\nx = 1,0\nreplicas = 5\noutput = a\nlambda = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "lambda");
    CHECK(std::string(e.what()).find("not used by experiment kind") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("kind = two_point\n", ExperimentKind::OneArm), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = plateau\ndimension = 2\np = 0.3\nreplicas = 5\noutput = a\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = two_point\ndimension = 2\np = 1.3\nx = 1,0\nreplicas = 5\noutput = a\n"),
                  ConfigError);
}

TEST_CASE("overrides and entries") {
  const auto cfg = parse_config("kind = two_point\ndimension = 2\np = 0.3, 0.35\nx = 1,0; 2 1\nreplicas = 5\noutput = a\n",
                                std::nullopt, {{"seed", "9"}, {"workers", "4"}});
  CHECK(cfg.seed == 9);
  CHECK(cfg.workers == 4);
  CHECK(cfg.p_values.size() == 2);
  REQUIRE(cfg.x_values.size() == 2);
  CHECK(cfg.x_values[1] == Point{2, 1});
  CHECK_FALSE(cfg.entries.contains("workers"));
  CHECK(cfg.entries.at("seed") == "9");
}

TEST_CASE("column headers per kind") {
  CHECK(header(ResultTable{result_columns(ExperimentKind::TwoPoint), {}}) ==
        "p,x,jbracket,value,std_error,replicas,truncated,truncated_fraction,unreliable,seed,stream_begin,stream_end");
  CHECK(header(ResultTable{result_columns(ExperimentKind::Plateau), {}}) ==
        "p,lambda,x,jbracket,multiplicity,value,std_error,replicas,volume_two_thirds");
  CHECK(header(ResultTable{result_columns(ExperimentKind::OsssCheck), {}}) ==
        "instance,measure,indices,trees,lhs,rhs,holds");
  for (const auto& name : experiment_kinds()) {
    const auto k = parse_kind(name);
    REQUIRE(k.has_value());
    CHECK(std::string(to_string(*k)) == name);
    CHECK_FALSE(result_columns(*k).empty());
  }
}

TEST_CASE("format_double round trips") {
  CHECK(format_double(0.3) == "0.29999999999999999");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("plateau emits one row per symmetry class") {
  const auto cfg = parse_config("kind = plateau\ndimension = 2\ngeometry = torus\nperiod = 4\np = 0.2\nreplicas = 200\noutput = a\n");
  const auto t = compute_experiment(cfg);
  // (1,0) (1,1) (2,0) (2,1) (2,2)
  CHECK(t.rows.size() == 5);
  for (const auto& row : t.rows) CHECK(row.size() == t.columns.size());
}

TEST_CASE("runs are byte identical across repeats and worker counts") {
  const auto dir = scratch("determinism");
  const std::string base = "kind = two_point\ndimension = 3\np = 0.2\nx = 1,0,0; 2,1,0\nshells = 2\nreplicas = 3000\n";
  std::string reference_csv, reference_json;
  for (const char* w : {"1", "4", "16", "1"}) {
    const auto out = (dir / (std::string("w") + w) / "run").string();
    const auto cfg = parse_config(base + "output = " + out + "\n", std::nullopt, {{"workers", w}});
    const auto res = run_experiment(cfg);
    const std::string csv = slurp(res.csv_path);
    std::string json = slurp(res.metadata_path);
    // only the output paths differ
    const auto pos = json.find(out);
    REQUIRE(pos != std::string::npos);
    json = std::regex_replace(json, std::regex(out), "OUT");
    CHECK(fs::exists(res.timing_path));
    if (reference_csv.empty()) {
      reference_csv = csv;
      reference_json = json;
    } else {
      CHECK(csv == reference_csv);
      CHECK(json == reference_json);
    }
  }
}

TEST_CASE("plots") {
  const auto dir = scratch("plot");
  const auto empty_csv = (dir / "empty.csv").string();
  {
    std::ofstream os(empty_csv);
    os << "p,x,jbracket,value,std_error\n";
  }
  PlotSpec spec;
  spec.x_column = "jbracket";
  spec.y_column = "value";
  spec.error_column = "std_error";
  const auto res = emit_plot(empty_csv, spec, (dir / "empty.svg").string());
  CHECK(res.points == 0);
  CHECK_FALSE(res.warnings.empty());
  CHECK(fs::exists(dir / "empty.svg"));
  spec.y_column = "nonexistent";
  CHECK_THROWS_AS(emit_plot(empty_csv, spec, (dir / "bad.svg").string()), PlotError);

  const auto cfg = parse_config("kind = one_arm\ndimension = 2\np = 0.3\nradii = 1,2,3\nreplicas = 500\noutput = " +
                                (dir / "arm").string() + "\n");
  const auto out = run_experiment(cfg);
  const auto plot = emit_plot(out.csv_path, default_plot_spec(cfg), (dir / "arm.svg").string());
  CHECK(plot.points == 3);
  CHECK(slurp((dir / "arm.svg").string()).find("<svg") != std::string::npos);
}
