#include "perclab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "perclab/diagrams.hpp"
#include "perclab/oracle.hpp"
#include "perclab/osss.hpp"

namespace perclab {

namespace {

using K = ExperimentKind;

struct KindInfo {
  K kind;
  const char* name;
};

constexpr KindInfo kKinds[] = {
    {K::TwoPoint, "two_point"},   {K::OneArm, "one_arm"},       {K::Pioneers, "pioneers"},
    {K::Susceptibility, "susceptibility"}, {K::Plateau, "plateau"}, {K::Triangle, "triangle"},
    {K::PtSolve, "pt_solve"},     {K::MassFit, "mass_fit"},     {K::Oracle, "oracle"},
    {K::OsssCheck, "osss_check"}, {K::Slab, "slab"},            {K::Coupling, "coupling"},
    {K::ImageSum, "image_sum"},
};

const std::set<std::string> kCommonKeys = {"kind",       "dimension",  "range",         "geometry",
                                           "period",     "replicas",   "seed",          "workers",
                                           "output",     "max_volume", "max_radius",    "max_intrinsic"};

// Keys accepted by each kind beyond the common ones, and the ones it requires.
struct KeyRules {
  std::set<std::string> allowed;
  std::set<std::string> required;
};

KeyRules rules_for(K k) {
  switch (k) {
    case K::TwoPoint: return {{"p", "x", "shells", "box_radius"}, {"p"}};
    case K::OneArm: return {{"p", "radii", "metric"}, {"p", "radii"}};
    case K::Pioneers: return {{"p", "n_values", "k_values"}, {"p"}};
    case K::Susceptibility: return {{"p"}, {"p"}};
    case K::Plateau: return {{"p", "lambda"}, {}};
    case K::Triangle:
      return {{"p", "grid_radius", "explore_radius", "decay_exponent", "torus_period"},
              {"p", "grid_radius", "torus_period"}};
    case K::PtSolve: return {{"lambda"}, {"lambda"}};
    case K::MassFit: return {{"p", "n_values", "power_correction"}, {"p", "n_values"}};
    case K::Oracle: return {{"p", "x", "rect_lo", "rect_hi"}, {"p", "x", "rect_lo", "rect_hi"}};
    case K::OsssCheck: return {{"p", "instances", "max_indices"}, {"instances"}};
    case K::Slab: return {{"p", "radii"}, {"p", "radii"}};
    case K::Coupling: return {{"p", "radii"}, {"p"}};
    case K::ImageSum: return {{"p", "x", "cutoff"}, {"p", "x"}};
  }
  return {};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

double parse_double(const std::string& field, const std::string& s) {
  if (s.empty()) throw ConfigError(field, "empty number");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) throw ConfigError(field, "not a number: '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& field, const std::string& s) {
  if (s.empty()) throw ConfigError(field, "empty integer");
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE) throw ConfigError(field, "not an integer: '" + s + "'");
  return v;
}

std::vector<double> parse_doubles(const std::string& field, const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split(s, ',')) out.push_back(parse_double(field, t));
  if (out.empty()) throw ConfigError(field, "grid is empty");
  return out;
}

std::vector<std::int64_t> parse_ints(const std::string& field, const std::string& s) {
  std::vector<std::int64_t> out;
  for (const auto& t : split(s, ',')) out.push_back(parse_int(field, t));
  if (out.empty()) throw ConfigError(field, "grid is empty");
  return out;
}

Point parse_point(const std::string& field, const std::string& s, int dim) {
  std::vector<std::int64_t> c;
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  std::string tok;
  while (is >> tok) c.push_back(parse_int(field, tok));
  if (static_cast<int>(c.size()) != dim) {
    throw ConfigError(field, "point '" + s + "' has " + std::to_string(c.size()) + " coordinates, dimension is " +
                                 std::to_string(dim));
  }
  return Point(std::span<const std::int64_t>(c));
}

std::vector<Point> parse_points(const std::string& field, const std::string& s, int dim) {
  std::vector<Point> out;
  for (const auto& t : split(s, ';')) out.push_back(parse_point(field, t, dim));
  if (out.empty()) throw ConfigError(field, "grid is empty");
  return out;
}

std::string point_cell(const Point& x) {
  std::string out;
  for (int i = 0; i < x.dim(); ++i) {
    if (i) out += ' ';
    out += std::to_string(x[i]);
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------------------------
// Result rows

const std::vector<std::string> kEstimateColumns = {"value",     "std_error",          "replicas",
                                                   "truncated", "truncated_fraction", "unreliable",
                                                   "seed",      "stream_begin",       "stream_end"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<std::string> estimate_cells(const Estimate& e) {
  return {format_double(e.value),  format_double(e.std_error), std::to_string(e.replicas),
          std::to_string(e.truncated), format_double(e.truncated_fraction), e.unreliable() ? "1" : "0",
          std::to_string(e.seed),  std::to_string(e.stream_begin), std::to_string(e.stream_end)};
}

RunOptions options_for(const ExperimentConfig& cfg) {
  RunOptions opt;
  opt.replicas = cfg.replicas;
  opt.seed = cfg.seed;
  opt.workers = cfg.workers;
  opt.caps = cfg.caps;
  return opt;
}

struct Table {
  ResultTable t;
  void add(std::vector<std::string> row) {
    if (row.size() != t.columns.size()) throw std::logic_error("row width does not match schema");
    t.rows.push_back(std::move(row));
  }
};

std::string d2s(double v) { return format_double(v); }

void run_two_point(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  for (double p : cfg.p_values) {
    for (const auto& x : cfg.x_values) {
      const auto e = estimate_two_point(cfg.model, p, x, opt);
      out.add(cat({d2s(p), point_cell(x), std::to_string(norms(x).jbracket)}, estimate_cells(e)));
    }
    if (!cfg.shells.empty()) {
      const auto es = estimate_two_point_shells(cfg.model, p, cfg.shells, opt, cfg.box_radius);
      for (std::size_t j = 0; j < es.size(); ++j) {
        out.add(cat({d2s(p), "shell " + std::to_string(cfg.shells[j]), std::to_string(std::max<std::int64_t>(cfg.shells[j], 1))},
                    estimate_cells(es[j])));
      }
    }
  }
}

void run_one_arm(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  const char* metric = cfg.metric == ArmMetric::Extrinsic ? "extrinsic" : "intrinsic";
  for (double p : cfg.p_values) {
    const auto es = estimate_one_arm_profile(cfg.model, p, cfg.radii, opt, cfg.metric);
    for (std::size_t j = 0; j < es.size(); ++j) {
      out.add(cat({d2s(p), metric, std::to_string(cfg.radii[j])}, estimate_cells(es[j])));
    }
  }
}

void run_pioneers(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  for (double p : cfg.p_values) {
    if (!cfg.n_values.empty()) {
      for (const auto& [n, e] : estimate_Pn(cfg.model, p, cfg.n_values, opt)) {
        out.add(cat({d2s(p), "mean_Pn", std::to_string(n)}, estimate_cells(e)));
      }
    }
    if (!cfg.k_values.empty()) {
      const auto es = estimate_pioneer_tail(cfg.model, p, cfg.k_values, opt);
      for (std::size_t j = 0; j < es.size(); ++j) {
        out.add(cat({d2s(p), "tail", std::to_string(cfg.k_values[j])}, estimate_cells(es[j])));
      }
    }
  }
}

void run_susceptibility(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  for (double p : cfg.p_values) out.add(cat({d2s(p)}, estimate_cells(estimate_susceptibility(cfg.model, p, opt))));
}

void run_plateau(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  std::vector<double> ps = cfg.p_values;
  std::vector<std::string> lambda_cells(ps.size(), "");
  for (double lambda : cfg.lambdas) {
    RunOptions so = opt;
    so.first_stream = opt.replicas;
    ps.push_back(solve_p_T(cfg.model, lambda, so).p_T);
    lambda_cells.push_back(d2s(lambda));
  }
  const int d = cfg.model.dimension;
  const std::int64_t r = cfg.model.period();
  const double guide = std::pow(static_cast<double>(cfg.model.volume()), -2.0 / 3.0);
  for (std::size_t ip = 0; ip < ps.size(); ++ip) {
    const auto grid = estimate_torus_two_point_grid(cfg.model, ps[ip], opt);
    struct Class {
      Point rep;
      std::int64_t count = 0;
      double tau = 0.0;
      double se = 0.0;
    };
    std::map<std::vector<std::int64_t>, Class> classes;
    for (std::size_t i = 0; i < grid.tau.size(); ++i) {
      const Point x = grid.tau.point(i);
      std::vector<std::int64_t> key(d);
      for (int a = 0; a < d; ++a) key[a] = std::abs(x[a]);
      std::sort(key.begin(), key.end(), std::greater<>());
      if (key[0] < 1 || key[0] > r / 2) continue;
      auto& c = classes[key];
      if (c.count == 0) c.rep = Point(std::span<const std::int64_t>(key));
      ++c.count;
      c.tau += grid.tau[i];
      c.se += grid.std_error[i];
    }
    // Shells in increasing |x|_inf, then lexicographic within a shell.
    std::vector<const Class*> ordered;
    for (const auto& [key, c] : classes) ordered.push_back(&c);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Class* a, const Class* b) { return a->rep[0] < b->rep[0]; });
    for (const Class* c : ordered) {
      const double n = static_cast<double>(c->count);
      out.add({d2s(ps[ip]), lambda_cells[ip], point_cell(c->rep), std::to_string(norms(c->rep).jbracket),
               std::to_string(c->count), d2s(c->tau / n), d2s(c->se / n), std::to_string(grid.replicas), d2s(guide)});
    }
  }
}

void run_triangle(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  const int d = cfg.model.dimension;
  const double decay = cfg.decay_exponent > 0 ? cfg.decay_exponent : d - 2.0;
  const std::int64_t explore = std::max(cfg.explore_radius, cfg.grid_radius);
  const ModelSpec torus = ModelSpec::torus(d, cfg.torus_period, cfg.model.range);
  for (double p : cfg.p_values) {
    const Grid tau = estimate_lattice_two_point_grid(cfg.model, p, cfg.grid_radius, explore, opt, decay);
    const auto tt = estimate_torus_two_point_grid(torus, p, opt);
    const auto diag = triangle_diagrams(tau, tt.tau);
    const Point o(d);
    const std::size_t i0 = diag.triangle.grid.index(o);
    const double bt = diag.bubble.tail_bound.empty() ? 0.0 : diag.bubble.tail_bound[diag.bubble.grid.index(o)];
    const double tt0 = diag.triangle.tail_bound.empty() ? 0.0 : diag.triangle.tail_bound[i0];
    out.add({d2s(p), d2s(diag.bubble.grid.at(o)), d2s(bt), d2s(diag.triangle.grid[i0]), d2s(tt0),
             d2s(diag.torus_triangle.at(o)), std::to_string(cfg.replicas)});
  }
}

void run_pt_solve(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  for (double lambda : cfg.lambdas) {
    const auto s = solve_p_T(cfg.model, lambda, opt);
    out.add(cat(cat({d2s(lambda), d2s(s.p_T), d2s(s.target)}, estimate_cells(s.chi)),
                {d2s(s.residual), std::to_string(s.iterations)}));
  }
}

void run_mass_fit(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  for (double p : cfg.p_values) {
    std::map<std::int64_t, Estimate> series;
    for (auto n : cfg.n_values) {
      series[n] = estimate_two_point(cfg.model, p, Point::unit(cfg.model.dimension, 0, n), opt);
    }
    MassFitOptions mo;
    mo.power_correction = cfg.power_correction;
    mo.dimension = cfg.model.dimension;
    std::vector<std::string> fit_cells(5, "");
    try {
      const auto fit = fit_mass(series, mo);
      fit_cells = {d2s(fit.m_hat), d2s(fit.intercept), std::to_string(fit.n_min), std::to_string(fit.n_max),
                   d2s(fit.residual)};
    } catch (const EstimatorError&) {
      // Too few usable points: the fit columns stay empty.
    }
    for (const auto& [n, e] : series) out.add(cat(cat({d2s(p), std::to_string(n)}, estimate_cells(e)), fit_cells));
  }
}

constexpr std::size_t kPolynomialEdges = 12;

void run_oracle(const ExperimentConfig& cfg, Table& out) {
  const auto graph = FiniteGraph::from_rect(cfg.model, *cfg.rect_lo, *cfg.rect_hi);
  const Point o(cfg.model.dimension);
  RunOptions opt = options_for(cfg);
  opt.region = graph.region();
  auto z = [](double exact, const Estimate& e) {
    if (e.std_error > 0) return (e.value - exact) / e.std_error;
    return e.value == exact ? 0.0 : std::copysign(INFINITY, e.value - exact);
  };
  auto emit = [&](double p, const char* obs, const std::string& target, double exact, const Estimate& e,
                  const std::string& poly = "") {
    out.add(cat(cat({d2s(p), obs, target, d2s(exact)}, estimate_cells(e)), {d2s(z(exact, e)), poly}));
  };
  // Monomial coefficients of P_p(0 <-> x), lowest degree first.
  auto polynomial = [&](const std::vector<std::uint64_t>& counts) {
    if (graph.edge_count() > kPolynomialEdges) return std::string();
    std::string s;
    for (auto c : monomial_coefficients(counts)) s += (s.empty() ? "" : " ") + std::to_string(c);
    return s;
  };
  for (double p : cfg.p_values) {
    for (const auto& x : cfg.x_values) {
      const auto counts = satisfying_counts(graph, connection_event(graph, o, x));
      emit(p, "two_point", point_cell(x), polynomial_value(counts, p), estimate_two_point(cfg.model, p, x, opt),
           polynomial(counts));
    }
    const int io = graph.vertex_index(o);
    const double size = exact_expectation(
        graph, p, [&](Config w) { return static_cast<double>(graph.component(w, io).size()); });
    emit(p, "cluster_size", "", size, estimate_susceptibility(cfg.model, p, opt));
    double pioneers = 0.0;
    for (const auto& [k, prob] : exact_pioneer_law(graph, o, p)) pioneers += static_cast<double>(k) * prob;
    emit(p, "pioneer_mean", "", pioneers, estimate_pioneer_count(cfg.model, p, opt));
  }
}

void run_osss(const ExperimentConfig& cfg, Table& out) {
  for (std::int64_t i = 0; i < cfg.instances; ++i) {
    const auto inst = osss::random_instance(splitmix(cfg.seed ^ splitmix(static_cast<std::uint64_t>(i))), cfg.max_indices);
    const auto res = osss::verify_osss(inst.f, inst.g, inst.forest, inst.mu);
    out.add({std::to_string(i), inst.kind, std::to_string(inst.mu.size()), std::to_string(inst.forest.trees.size()),
             d2s(res.lhs), d2s(res.rhs), res.holds ? "1" : "0"});
  }
  for (double p : cfg.p_values) {
    osss::BoolFn f = [](osss::Bits w) { return static_cast<double>(w & 1u); };
    const osss::DecisionForest forest{{osss::DecisionTree::single(0)}};
    const auto res = osss::verify_osss(f, f, forest, osss::ProductMeasure::uniform(1, p));
    out.add({"equality", "single_edge p=" + d2s(p), "1", "1", d2s(res.lhs), d2s(res.rhs), res.holds ? "1" : "0"});
  }
}

void run_slab(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  for (double p : cfg.p_values) {
    for (auto r : cfg.radii) {
      const auto s = estimate_slab_counts(cfg.model, p, r, opt);
      out.add(cat({d2s(p), std::to_string(r), "x_r"}, estimate_cells(s.x_r)));
      out.add(cat({d2s(p), std::to_string(r), "y_r"}, estimate_cells(s.y_r)));
    }
  }
}

void run_coupling(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  auto ps = cfg.p_values;
  std::sort(ps.begin(), ps.end());
  const std::int64_t ball = cfg.radii.empty() ? 8 : cfg.radii.front();
  for (std::size_t i = 0; i + 1 < ps.size(); ++i) {
    const auto c = check_monotone_coupling(cfg.model, ps[i], ps[i + 1], ball, opt);
    out.add({d2s(ps[i]), d2s(ps[i + 1]), std::to_string(ball), std::to_string(c.edges_checked),
             std::to_string(c.edge_violations), std::to_string(c.clusters_checked),
             std::to_string(c.cluster_violations), std::to_string(c.clusters_skipped),
             std::to_string(c.balls_checked), std::to_string(c.ball_violations)});
  }
}

void run_image_sum(const ExperimentConfig& cfg, Table& out) {
  const auto opt = options_for(cfg);
  RunOptions lifted = opt;
  lifted.first_stream = opt.replicas;
  for (double p : cfg.p_values) {
    for (const auto& x : cfg.x_values) {
      const auto tt = estimate_two_point(cfg.model, p, x, opt);
      const auto ps = estimate_psi(cfg.model, p, x, cfg.cutoff, lifted);
      const double slack = 3.0 * std::hypot(tt.std_error, ps.image_sum.std_error);
      const bool ok = tt.value <= ps.image_sum.value + slack;
      out.add({d2s(p), point_cell(x), d2s(tt.value), d2s(tt.std_error), d2s(ps.tau_x.value), d2s(ps.tau_x.std_error),
               d2s(ps.psi.value), d2s(ps.psi.std_error), d2s(ps.image_sum.value), d2s(ps.image_sum.std_error),
               d2s(ps.tail_bound), std::to_string(cfg.replicas), ok ? "1" : "0"});
    }
  }
}

std::string experiment_id(const ExperimentConfig& cfg) {
  std::string canon;
  for (const auto& [k, v] : cfg.entries) {
    if (k == "output") continue;
    canon += k + "=" + v + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
  return std::string(to_string(cfg.kind)) + "-" + buf;
}

std::string strip_csv(const std::string& out) {
  if (out.size() > 4 && out.substr(out.size() - 4) == ".csv") return out.substr(0, out.size() - 4);
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write output file '" + path + "'");
  os << content;
  if (!os.flush()) throw std::runtime_error("failed writing output file '" + path + "'");
}

}  // namespace

// ---------------------------------------------------------------------------------------------

ConfigError::ConfigError(std::string f, const std::string& reason)
    : std::invalid_argument("config field '" + f + "': " + reason), field(std::move(f)) {}

const char* to_string(ExperimentKind k) {
  for (const auto& ki : kKinds) {
    if (ki.kind == k) return ki.name;
  }
  return "?";
}

std::optional<ExperimentKind> parse_kind(const std::string& s) {
  for (const auto& ki : kKinds) {
    if (s == ki.name) return ki.kind;
  }
  return std::nullopt;
}

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> out;
  for (const auto& ki : kKinds) out.emplace_back(ki.name);
  return out;
}

ExperimentConfig parse_config(const std::string& text, std::optional<ExperimentKind> expected,
                              const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    if (!kv.emplace(key, value).second) throw ConfigError(key, "given more than once");
  }
  for (const auto& [k, v] : overrides) kv[k] = v;

  ExperimentConfig cfg;
  // Kind: from the file, the caller, or both (which must agree).
  if (auto it = kv.find("kind"); it != kv.end()) {
    auto k = parse_kind(it->second);
    if (!k) throw ConfigError("kind", "unknown experiment kind '" + it->second + "'");
    if (expected && *expected != *k) {
      throw ConfigError("kind", std::string("config declares '") + to_string(*k) + "' but the subcommand is '" +
                                    to_string(*expected) + "'");
    }
    cfg.kind = *k;
  } else if (expected) {
    cfg.kind = *expected;
    kv["kind"] = to_string(*expected);
  } else {
    throw ConfigError("kind", "missing");
  }

  const KeyRules rules = rules_for(cfg.kind);
  for (const auto& [k, v] : kv) {
    if (kCommonKeys.contains(k) || rules.allowed.contains(k)) continue;
    bool known = false;
    for (const auto& ki : kKinds) known = known || rules_for(ki.kind).allowed.contains(k);
    if (known) throw ConfigError(k, std::string("not used by experiment kind '") + to_string(cfg.kind) + "'");
    throw ConfigError(k, "unknown key");
  }
  for (const char* k : {"dimension", "replicas", "output"}) {
    if (!kv.contains(k)) throw ConfigError(k, "missing");
  }
  for (const auto& k : rules.required) {
    if (!kv.contains(k)) throw ConfigError(k, "missing");
  }
  auto get = [&](const std::string& k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };

  const auto dim = parse_int("dimension", *get("dimension"));
  if (dim < 1 || dim > kMaxDim) throw ConfigError("dimension", "must lie in [1, " + std::to_string(kMaxDim) + "]");
  const auto range = get("range") ? parse_int("range", *get("range")) : 1;
  if (range < 1) throw ConfigError("range", "must be >= 1");
  const std::string geometry = get("geometry") ? *get("geometry") : "lattice";
  if (geometry == "torus") {
    if (!get("period")) throw ConfigError("period", "missing (required for geometry = torus)");
    cfg.model = ModelSpec::torus(static_cast<int>(dim), parse_int("period", *get("period")), static_cast<int>(range));
  } else if (geometry == "lattice") {
    if (get("period")) throw ConfigError("period", "only valid with geometry = torus");
    cfg.model = ModelSpec::lattice(static_cast<int>(dim), static_cast<int>(range));
  } else {
    throw ConfigError("geometry", "expected 'lattice' or 'torus', got '" + geometry + "'");
  }
  try {
    cfg.model.validate();
  } catch (const LatticeError& e) {
    throw ConfigError(cfg.model.is_torus() ? "period" : "dimension", e.what());
  }

  const auto reps = parse_int("replicas", *get("replicas"));
  if (reps < 1) throw ConfigError("replicas", "must be >= 1");
  cfg.replicas = static_cast<std::uint64_t>(reps);
  if (auto v = get("seed")) {
    const auto s = parse_int("seed", *v);
    if (s < 0) throw ConfigError("seed", "must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (auto v = get("workers")) {
    const auto w = parse_int("workers", *v);
    if (w < 1 || w > 1024) throw ConfigError("workers", "must lie in [1, 1024]");
    cfg.workers = static_cast<int>(w);
  }
  cfg.output = *get("output");
  if (cfg.output.empty()) throw ConfigError("output", "empty path");
  auto cap = [&](const char* k, std::int64_t& slot) {
    if (auto v = get(k)) {
      slot = parse_int(k, *v);
      if (slot < 1) throw ConfigError(k, "must be >= 1");
    }
  };
  cap("max_volume", cfg.caps.max_volume);
  cap("max_radius", cfg.caps.max_radius);
  cap("max_intrinsic", cfg.caps.max_intrinsic);

  if (auto v = get("p")) {
    cfg.p_values = parse_doubles("p", *v);
    for (double p : cfg.p_values) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p", "values must lie in [0,1]");
    }
  }
  if (auto v = get("x")) cfg.x_values = parse_points("x", *v, static_cast<int>(dim));
  auto positive_list = [&](const char* k, std::vector<std::int64_t>& slot, std::int64_t min) {
    if (auto v = get(k)) {
      slot = parse_ints(k, *v);
      for (auto n : slot) {
        if (n < min) throw ConfigError(k, "values must be >= " + std::to_string(min));
      }
    }
  };
  positive_list("shells", cfg.shells, 0);
  positive_list("radii", cfg.radii, 1);
  positive_list("n_values", cfg.n_values, 1);
  positive_list("k_values", cfg.k_values, 1);
  if (auto v = get("lambda")) {
    cfg.lambdas = parse_doubles("lambda", *v);
    for (double l : cfg.lambdas) {
      if (!(l > 0)) throw ConfigError("lambda", "values must be positive");
    }
  }
  if (auto v = get("metric")) {
    if (*v == "extrinsic") cfg.metric = ArmMetric::Extrinsic;
    else if (*v == "intrinsic") cfg.metric = ArmMetric::Intrinsic;
    else throw ConfigError("metric", "expected 'extrinsic' or 'intrinsic'");
  }
  auto scalar = [&](const char* k, std::int64_t& slot, std::int64_t min) {
    if (auto v = get(k)) {
      slot = parse_int(k, *v);
      if (slot < min) throw ConfigError(k, "must be >= " + std::to_string(min));
    }
  };
  scalar("box_radius", cfg.box_radius, 1);
  scalar("grid_radius", cfg.grid_radius, 0);
  scalar("explore_radius", cfg.explore_radius, 0);
  scalar("cutoff", cfg.cutoff, 0);
  scalar("torus_period", cfg.torus_period, 1);
  scalar("instances", cfg.instances, 1);
  std::int64_t mi = cfg.max_indices;
  scalar("max_indices", mi, 2);
  if (mi > osss::kMaxIndices) throw ConfigError("max_indices", "must be <= " + std::to_string(osss::kMaxIndices));
  cfg.max_indices = static_cast<int>(mi);
  if (auto v = get("decay_exponent")) {
    cfg.decay_exponent = parse_double("decay_exponent", *v);
    if (!(cfg.decay_exponent > 0)) throw ConfigError("decay_exponent", "must be positive");
  }
  if (auto v = get("power_correction")) {
    if (*v == "true" || *v == "1") cfg.power_correction = true;
    else if (*v == "false" || *v == "0") cfg.power_correction = false;
    else throw ConfigError("power_correction", "expected true or false");
  }
  if (auto v = get("rect_lo")) cfg.rect_lo = parse_point("rect_lo", *v, static_cast<int>(dim));
  if (auto v = get("rect_hi")) cfg.rect_hi = parse_point("rect_hi", *v, static_cast<int>(dim));

  // Kind-specific consistency.
  auto need_lattice = [&] {
    if (cfg.model.is_torus()) throw ConfigError("geometry", std::string(to_string(cfg.kind)) + " runs on Z^d");
  };
  auto need_torus = [&] {
    if (!cfg.model.is_torus()) throw ConfigError("geometry", std::string(to_string(cfg.kind)) + " needs geometry = torus");
  };
  switch (cfg.kind) {
    case K::TwoPoint:
      if (cfg.x_values.empty() && cfg.shells.empty()) throw ConfigError("x", "missing (give x or shells)");
      if (!cfg.shells.empty()) {
        const auto kmax = *std::max_element(cfg.shells.begin(), cfg.shells.end());
        if (!get("box_radius")) cfg.box_radius = kmax;
        if (!cfg.model.is_torus() && cfg.box_radius < kmax) throw ConfigError("box_radius", "must be >= the largest shell");
      }
      break;
    case K::Pioneers:
      need_lattice();
      if (cfg.n_values.empty() && cfg.k_values.empty()) throw ConfigError("n_values", "missing (give n_values or k_values)");
      break;
    case K::Plateau:
      need_torus();
      if (cfg.p_values.empty() && cfg.lambdas.empty()) throw ConfigError("p", "missing (give p or lambda)");
      break;
    case K::Triangle:
      need_lattice();
      if (cfg.torus_period <= 2 * range) throw ConfigError("torus_period", "must exceed 2 * range");
      if (cfg.explore_radius && cfg.explore_radius < cfg.grid_radius) {
        throw ConfigError("explore_radius", "must be >= grid_radius");
      }
      break;
    case K::PtSolve:
    case K::ImageSum: need_torus(); break;
    case K::MassFit:
    case K::Slab: need_lattice(); break;
    case K::Oracle: {
      need_lattice();
      const Point o(static_cast<int>(dim));
      for (int a = 0; a < dim; ++a) {
        if ((*cfg.rect_lo)[a] > 0 || (*cfg.rect_hi)[a] < 0) throw ConfigError("rect_lo", "rectangle must contain the origin");
        if ((*cfg.rect_lo)[a] > (*cfg.rect_hi)[a]) throw ConfigError("rect_hi", "must be >= rect_lo");
      }
      const Region rect = Region::rect(*cfg.rect_lo, *cfg.rect_hi);
      for (const auto& x : cfg.x_values) {
        if (!rect.contains(x)) throw ConfigError("x", "point " + point_cell(x) + " lies outside the rectangle");
      }
      try {
        FiniteGraph::from_rect(cfg.model, *cfg.rect_lo, *cfg.rect_hi);
      } catch (const OracleError& e) {
        throw ConfigError("rect_hi", e.what());
      }
      break;
    }
    case K::Coupling:
      if (cfg.p_values.size() < 2) throw ConfigError("p", "coupling needs at least two values");
      break;
    default: break;
  }

  kv.erase("workers");
  cfg.entries = std::move(kv);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, std::optional<ExperimentKind> expected,
                             const std::map<std::string, std::string>& overrides) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("config", "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), expected, overrides);
}

std::vector<std::string> result_columns(ExperimentKind k) {
  switch (k) {
    case K::TwoPoint: return cat({"p", "x", "jbracket"}, kEstimateColumns);
    case K::OneArm: return cat({"p", "metric", "rho"}, kEstimateColumns);
    case K::Pioneers: return cat({"p", "observable", "n"}, kEstimateColumns);
    case K::Susceptibility: return cat({"p"}, kEstimateColumns);
    case K::Plateau:
      return {"p", "lambda", "x", "jbracket", "multiplicity", "value", "std_error", "replicas", "volume_two_thirds"};
    case K::Triangle:
      return {"p", "bubble", "bubble_tail_bound", "triangle", "triangle_tail_bound", "torus_triangle", "replicas"};
    case K::PtSolve: return cat(cat({"lambda", "p_T", "target"}, kEstimateColumns), {"residual", "iterations"});
    case K::MassFit:
      return cat(cat({"p", "n"}, kEstimateColumns), {"m_hat", "intercept", "n_min", "n_max", "fit_residual"});
    case K::Oracle: return cat(cat({"p", "observable", "target", "exact"}, kEstimateColumns), {"z_score", "polynomial"});
    case K::OsssCheck: return {"instance", "measure", "indices", "trees", "lhs", "rhs", "holds"};
    case K::Slab: return cat({"p", "r", "observable"}, kEstimateColumns);
    case K::Coupling:
      return {"p",          "q",                 "ball_radius",      "edges_checked", "edge_violations",
              "clusters_checked", "cluster_violations", "clusters_skipped", "balls_checked", "ball_violations"};
    case K::ImageSum:
      return {"p",   "x",      "tau_torus", "tau_torus_se", "tau", "tau_se", "psi", "psi_se", "image_sum",
              "image_sum_se", "tail_bound", "replicas", "bound_holds"};
  }
  return {};
}

ResultTable compute_experiment(const ExperimentConfig& cfg) {
  Table out;
  out.t.columns = result_columns(cfg.kind);
  switch (cfg.kind) {
    case K::TwoPoint: run_two_point(cfg, out); break;
    case K::OneArm: run_one_arm(cfg, out); break;
    case K::Pioneers: run_pioneers(cfg, out); break;
    case K::Susceptibility: run_susceptibility(cfg, out); break;
    case K::Plateau: run_plateau(cfg, out); break;
    case K::Triangle: run_triangle(cfg, out); break;
    case K::PtSolve: run_pt_solve(cfg, out); break;
    case K::MassFit: run_mass_fit(cfg, out); break;
    case K::Oracle: run_oracle(cfg, out); break;
    case K::OsssCheck: run_osss(cfg, out); break;
    case K::Slab: run_slab(cfg, out); break;
    case K::Coupling: run_coupling(cfg, out); break;
    case K::ImageSum: run_image_sum(cfg, out); break;
  }
  return out.t;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const ResultTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
  return out;
}

RunOutputs run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const ResultTable table = compute_experiment(cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunOutputs out;
  const std::string base = strip_csv(cfg.output);
  out.csv_path = base + ".csv";
  out.metadata_path = base + ".json";
  out.timing_path = base + ".timing.json";
  out.rows = table.rows.size();
  const auto parent = std::filesystem::path(out.csv_path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + parent.string() + "': " + ec.message());
  }

  nlohmann::ordered_json meta;
  meta["tool"] = "perclab";
  meta["tool_version"] = kToolVersion;
  meta["experiment_id"] = experiment_id(cfg);
  meta["kind"] = to_string(cfg.kind);
  meta["seed"] = cfg.seed;
  meta["replicas"] = cfg.replicas;
  nlohmann::ordered_json conf = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.entries) conf[k] = v;
  meta["config"] = conf;
  meta["columns"] = table.columns;
  meta["rows"] = table.rows.size();
  meta["csv"] = std::filesystem::path(out.csv_path).filename().string();
  meta["timing"] = std::filesystem::path(out.timing_path).filename().string();

  nlohmann::ordered_json timing;
  timing["experiment_id"] = experiment_id(cfg);
  timing["wall_seconds"] = wall;
  timing["workers"] = cfg.workers;

  write_file(out.csv_path, to_csv(table));
  write_file(out.metadata_path, meta.dump(2) + "\n");
  write_file(out.timing_path, timing.dump(2) + "\n");
  return out;
}

}  // namespace perclab
