// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "perclab/estimators.hpp"
#include "perclab/oracle.hpp"
#include "perclab/osss.hpp"
#include "perclab/pioneers.hpp"
#include "perclab/runner.hpp"

using namespace perclab;
namespace fs = std::filesystem;

namespace {

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

RunOptions opts(std::uint64_t replicas, std::uint64_t seed) {
  RunOptions o;
  o.replicas = replicas;
  o.seed = seed;
  o.workers = workers();
  return o;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct OracleCase {
  std::string name;
  FiniteGraph graph;
  Point target;
};

std::vector<OracleCase> oracle_cases() {
  std::vector<OracleCase> out;
  auto add = [&](std::string name, const ModelSpec& m, Point lo, Point hi, Point x) {
    out.push_back({std::move(name), FiniteGraph::from_rect(m, lo, hi), x});
  };
  add("path3", ModelSpec::lattice(1), Point{0}, Point{3}, Point{3});
  add("square", ModelSpec::lattice(2), Point{0, 0}, Point{1, 1}, Point{1, 1});
  add("ladder", ModelSpec::lattice(2), Point{0, 0}, Point{2, 1}, Point{2, 1});
  add("grid4x3", ModelSpec::lattice(2), Point{-1, -1}, Point{2, 1}, Point{2, 0});
  add("cube", ModelSpec::lattice(3), Point{0, 0, 0}, Point{1, 1, 1}, Point{1, 1, 1});
  add("spread2x3", ModelSpec::lattice(2, 2), Point{0, 0}, Point{1, 2}, Point{1, 2});
  return out;
}

const std::vector<double> kOracleP = {0.15, 0.4, 0.6, 0.85};

// 1. Monte Carlo estimators against exact enumeration.
Outcome oracle_equivalence() {
  int cells = 0, comparisons = 0, within = 0;
  std::string misses;
  std::uint64_t seed = 100;
  for (const auto& c : oracle_cases()) {
    const auto& g = c.graph;
    const ModelSpec m = *g.embedding();
    const int i0 = g.vertex_index(Point(m.dimension));
    for (double p : kOracleP) {
      ++cells;
      RunOptions o = opts(100'000, ++seed);
      o.region = g.region();
      const double tau = exact_probability(g, p, connection_event(g, Point(m.dimension), c.target));
      const double chi = exact_expectation(g, p, [&](Config w) { return static_cast<double>(g.component(w, i0).size()); });
      double pion = 0.0;
      for (const auto& [k, pr] : exact_pioneer_law(g, Point(m.dimension), p)) pion += static_cast<double>(k) * pr;
      const std::pair<const char*, std::pair<double, Estimate>> checks[] = {
          {"two_point", {tau, estimate_two_point(m, p, c.target, o)}},
          {"cluster_size", {chi, estimate_susceptibility(m, p, o)}},
          {"pioneer_mean", {pion, estimate_pioneer_count(m, p, o)}},
      };
      for (const auto& [name, ve] : checks) {
        ++comparisons;
        const auto& [exact, est] = ve;
        const double z = est.std_error > 0 ? std::fabs(est.value - exact) / est.std_error
                                           : (std::fabs(est.value - exact) < 1e-12 ? 0.0 : INFINITY);
        if (z <= 3.0) ++within;
        else misses += fmt(" %s/%s@p=%g z=%.2f", c.name.c_str(), name, p, z);
      }
    }
  }
  const double frac = static_cast<double>(within) / comparisons;
  return {cells >= 20 && frac >= 0.95,
          fmt("%d cells, %d/%d comparisons within 3 SE (%.1f%%)", cells, within, comparisons, 100 * frac) + misses};
}

// 2. Russo formula on every oracle instance.
Outcome russo() {
  double worst = 0.0;
  int n = 0;
  for (const auto& c : oracle_cases()) {
    const ModelSpec m = *c.graph.embedding();
    const EventSpec events[] = {connection_event(c.graph, Point(m.dimension), c.target), edge_open_event(0)};
    for (const auto& ev : events) {
      for (double p : kOracleP) {
        const auto r = russo_check(c.graph, p, ev);
        worst = std::max(worst, std::fabs(r.finite_difference - r.covariance_formula));
        ++n;
      }
    }
  }
  return {worst <= 1e-9, fmt("%d instances, max |difference| = %.3g", n, worst)};
}

// 3. OSSS battery and the equality case.
Outcome osss_battery() {
  int violations = 0, two_layer = 0;
  double min_slack = INFINITY;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto inst = osss::random_instance(s, 8);
    if (inst.mu.size() > 8) return {false, fmt("instance %llu has %d indices", (unsigned long long)s, inst.mu.size())};
    if (inst.kind.find("two_layer") != std::string::npos) ++two_layer;
    const auto r = osss::verify_osss(inst.f, inst.g, inst.forest, inst.mu);
    if (!r.holds) ++violations;
    min_slack = std::min(min_slack, r.lhs - r.rhs);
  }
  double eq_err = 0.0;
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const osss::BoolFn f = [](osss::Bits w) { return static_cast<double>(w & 1u); };
    const auto r = osss::verify_osss(f, f, osss::DecisionForest{{osss::DecisionTree::single(0)}},
                                     osss::ProductMeasure::uniform(1, p));
    eq_err = std::max({eq_err, std::fabs(r.lhs - p * (1 - p)), std::fabs(r.rhs - p * (1 - p))});
  }
  return {violations == 0 && two_layer > 0 && eq_err <= 1e-12,
          fmt("500 instances (%d two-layer), %d violations, min lhs-rhs = %.3g; equality case error %.2g", two_layer,
              violations, min_slack, eq_err)};
}

// 4. Monotone coupling invariants.
Outcome coupling() {
  CouplingCheck total;
  const struct {
    ModelSpec m;
    double p, q;
    std::int64_t ball;
  } runs[] = {{ModelSpec::lattice(2), 0.3, 0.45, 8}, {ModelSpec::lattice(3), 0.18, 0.24, 6}};
  std::uint64_t seed = 400;
  for (const auto& r : runs) {
    const auto c = check_monotone_coupling(r.m, r.p, r.q, r.ball, opts(1000, ++seed), 100);
    total.edges_checked += c.edges_checked;
    total.edge_violations += c.edge_violations;
    total.clusters_checked += c.clusters_checked;
    total.cluster_violations += c.cluster_violations;
    total.clusters_skipped += c.clusters_skipped;
    total.balls_checked += c.balls_checked;
    total.ball_violations += c.ball_violations;
  }
  const bool pass = total.edges_checked >= 100'000 && total.clusters_checked >= 1000 && total.balls_checked >= 1000 &&
                    total.edge_violations == 0 && total.cluster_violations == 0 && total.ball_violations == 0;
  return {pass, fmt("edges %llu (%llu violations), clusters %llu (%llu violations, %llu skipped), balls %llu (%llu "
                    "violations)",
                    (unsigned long long)total.edges_checked, (unsigned long long)total.edge_violations,
                    (unsigned long long)total.clusters_checked, (unsigned long long)total.cluster_violations,
                    (unsigned long long)total.clusters_skipped, (unsigned long long)total.balls_checked,
                    (unsigned long long)total.ball_violations)};
}

// 5. Plane sweep against the definition, and the d=1 law.
Outcome pioneer_correctness() {
  const std::vector<FiniteGraph> graphs = {
      FiniteGraph::from_rect(ModelSpec::lattice(2), Point{-1, -1}, Point{2, 1}),
      FiniteGraph::from_rect(ModelSpec::lattice(3), Point{0, 0, 0}, Point{2, 1, 1}),
      FiniteGraph::from_rect(ModelSpec::lattice(2, 2), Point{0, 0}, Point{2, 1}),
  };
  const double ps[] = {0.3, 0.5, 0.7};
  int configs = 0, mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& g = graphs[i % graphs.size()];
    const double p = ps[(i / graphs.size()) % 3];
    const ModelSpec m = g.embedding()->with_p(p);
    const EdgeField field(500, static_cast<std::uint64_t>(i));
    Config w = 0;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
      if (field.is_open(g.edges()[e], p)) w |= Config{1} << e;
    }
    const Point& x = g.vertices()[static_cast<std::size_t>(i * 7) % g.vertices().size()];
    const auto rec = pioneer_profile(m, field, x, Caps{}, g.region());
    std::vector<Edge> brute;
    for (std::size_t e : brute_force_pioneers(g, w, x)) brute.push_back(g.edges()[e]);
    std::sort(brute.begin(), brute.end());
    ++configs;
    if (rec.truncated || rec.edges != brute) ++mismatches;
  }
  const double p = 0.6;
  std::vector<std::int64_t> ns = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto pn = estimate_Pn(ModelSpec::lattice(1), p, ns, opts(100'000, 501));
  double worst_z = 0.0;
  for (auto n : ns) {
    const auto& e = pn.at(n);
    worst_z = std::max(worst_z, std::fabs(e.value - std::pow(p, static_cast<double>(n))) / e.std_error);
  }
  return {mismatches == 0 && worst_z <= 3.0,
          fmt("%d configurations, %d mismatches; d=1 law max |z| = %.2f over n=1..8", configs, mismatches, worst_z)};
}

// Shared d = 7 critical point estimates.
struct CriticalPoints {
  std::map<std::int64_t, PtSolution> by_period;
};

const PtSolution& p_T_for(CriticalPoints& cp, std::int64_t r) {
  auto it = cp.by_period.find(r);
  if (it == cp.by_period.end()) {
    it = cp.by_period.emplace(r, solve_p_T(ModelSpec::torus(7, r), 1.0, opts(20'000, 700 + r))).first;
    std::printf("  p_T(d=7, r=%lld, lambda=1) = %.7f (chi %.2f +- %.2f, target %.2f)\n", (long long)r, it->second.p_T,
                it->second.chi.value, it->second.chi.std_error, it->second.target);
    std::fflush(stdout);
  }
  return it->second;
}

// 6. Submultiplicativity of E|P_0(n)|.
Outcome submultiplicativity(CriticalPoints& cp) {
  const double p = 0.9 * p_T_for(cp, 8).p_T;
  std::vector<std::int64_t> ns;
  for (std::int64_t n = 1; n <= 12; ++n) ns.push_back(n);
  const auto P = estimate_Pn(ModelSpec::lattice(7), p, ns, opts(100'000, 601));
  int violations = 0;
  double worst = -INFINITY;
  for (std::int64_t n = 1; n <= 6; ++n) {
    for (std::int64_t k = 1; k <= 6; ++k) {
      const auto &a = P.at(n), &b = P.at(k), &ab = P.at(n + k);
      const double se = std::sqrt(ab.std_error * ab.std_error + std::pow(b.value * a.std_error, 2) +
                                  std::pow(a.value * b.std_error, 2));
      const double excess = ab.value - a.value * b.value;  // L = 1: p^(1-L) = 1
      worst = std::max(worst, excess / (se > 0 ? se : 1.0));
      if (excess > 3 * se) ++violations;
    }
  }
  return {violations == 0, fmt("p = %.6f, %d/36 violations, max (P(n+m) - P(n)P(m))/SE = %.2f", p, violations, worst)};
}

struct SlopeResult {
  double slope = 0.0;
  double slope_se = 0.0;
};

SlopeResult loglog_slope(const std::vector<double>& x, const std::vector<Estimate>& ys) {
  std::vector<double> lx, ly, w;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (ys[i].value <= 0) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(ys[i].value));
    const double rel = ys[i].std_error / ys[i].value;
    w.push_back(rel > 0 ? 1.0 / (rel * rel) : 1.0);
  }
  if (lx.size() < 2) return {NAN, NAN};
  const auto f = fit_line(lx, ly, w);
  return {f.slope, f.slope_se};
}

// 7. Exponent trends at the estimated critical point.
Outcome exponents(CriticalPoints& cp) {
  const double pc = p_T_for(cp, 8).p_T;
  const ModelSpec m = ModelSpec::lattice(7);
  std::string detail = fmt("p_c estimate %.6f;", pc);
  bool pass = true;
  auto record = [&](const char* name, SlopeResult s, double expect, double tol) {
    const bool ok = std::fabs(s.slope - expect) <= tol;
    pass = pass && ok;
    detail += fmt(" %s %.3f +- %.3f (want %.2f +- %.2f) %s;", name, s.slope, s.slope_se, expect, tol, ok ? "ok" : "off");
  };

  std::vector<std::int64_t> radii = {4, 6, 8, 10, 12, 16, 20, 24};
  std::vector<double> rx(radii.begin(), radii.end());
  record("extrinsic one-arm", loglog_slope(rx, estimate_one_arm_profile(m, pc, radii, opts(200'000, 801))), -2.0, 0.5);

  std::vector<std::int64_t> ells = {8, 12, 16, 24, 32, 48, 64};
  std::vector<double> lx(ells.begin(), ells.end());
  record("intrinsic one-arm",
         loglog_slope(lx, estimate_one_arm_profile(m, pc, ells, opts(200'000, 802), ArmMetric::Intrinsic)), -1.0, 0.3);

  std::vector<std::int64_t> shells = {2, 3, 4, 5, 6, 8, 10, 12};
  std::vector<double> sx(shells.begin(), shells.end());
  record("two-point", loglog_slope(sx, estimate_two_point_shells(m, pc, shells, opts(100'000, 803), 24)), -5.0, 1.0);

  std::vector<std::int64_t> ks = {3, 5, 8, 13, 20, 30};
  std::vector<double> kx(ks.begin(), ks.end());
  RunOptions po = opts(100'000, 804);
  po.caps.max_radius = 400;
  record("pioneer tail", loglog_slope(kx, estimate_pioneer_tail(m, pc, ks, po)), -2.0 / 3.0, 0.3);
  return {pass, detail};
}

// 8. Plateau of the torus two-point function at p_T.
Outcome plateau(CriticalPoints& cp) {
  std::map<std::int64_t, double> level;
  bool pass = true;
  std::string detail;
  for (std::int64_t r : {6, 8}) {
    const auto& sol = p_T_for(cp, r);
    const bool chi_ok = sol.residual <= 3 * sol.chi.std_error;
    std::vector<std::int64_t> shells;
    for (std::int64_t k = (r + 3) / 4; k <= r / 2; ++k) shells.push_back(k);
    const auto es = estimate_two_point_shells(ModelSpec::torus(7, r), sol.p_T, shells, opts(20'000, 900 + r));
    double lo = INFINITY, hi = 0.0, sum = 0.0;
    for (const auto& e : es) {
      lo = std::min(lo, e.value);
      hi = std::max(hi, e.value);
      sum += e.value;
    }
    level[r] = sum / static_cast<double>(es.size());
    const bool flat = lo > 0 && hi / lo <= 2.0;
    pass = pass && chi_ok && flat;
    detail += fmt("r=%lld: chi residual %.3g (3 SE %.3g), shells %lld..%lld max/min %.3f, level %.4g; ", (long long)r,
                  sol.residual, 3 * sol.chi.std_error, (long long)shells.front(), (long long)shells.back(), hi / lo,
                  level[r]);
  }
  const double expect = std::pow(std::pow(8.0 / 6.0, 7), 2.0 / 3.0);
  const double ratio = level[6] / level[8];
  const bool scales = std::fabs(ratio / expect - 1.0) <= 0.5;
  pass = pass && scales;
  detail += fmt("level ratio r=6/r=8 %.3f vs V^(2/3) ratio %.3f", ratio, expect);
  return {pass, detail};
}

// 9. Torus two-point function against the image sum.
Outcome image_sum_bound(CriticalPoints& cp) {
  const std::int64_t r = 6;
  const ModelSpec torus = ModelSpec::torus(7, r);
  const double pt = p_T_for(cp, r).p_T;
  const std::vector<Point> xs = {Point{1, 0, 0, 0, 0, 0, 0}, Point{2, 0, 0, 0, 0, 0, 0}, Point{3, 0, 0, 0, 0, 0, 0},
                                 Point{1, 1, 0, 0, 0, 0, 0}, Point{3, 3, 3, 0, 0, 0, 0}};
  int points = 0, violations = 0;
  double worst = -INFINITY;
  std::uint64_t seed = 1000;
  for (double frac : {0.5, 0.7, 0.8, 0.9}) {
    const double p = frac * pt;
    for (const auto& x : xs) {
      ++points;
      const auto tt = estimate_two_point(torus, p, x, opts(100'000, ++seed));
      const auto ps = estimate_psi(torus, p, x, 1, opts(100'000, ++seed));
      const double se = std::hypot(tt.std_error, ps.image_sum.std_error);
      const double excess = tt.value - ps.image_sum.value;
      worst = std::max(worst, se > 0 ? excess / se : excess);
      if (excess > 3 * se) ++violations;
    }
  }
  return {violations == 0, fmt("%d (x,p) points below p_T = %.6f, %d violations, max excess/SE = %.2f", points, pt,
                               violations, worst)};
}

// 10. Byte-identical outputs across repeats and worker counts.
Outcome determinism() {
  const std::map<std::string, std::string> configs = {
      {"two_point", "dimension = 2\np = 0.3\nx = 1,0; 3,2\nshells = 1, 2\nreplicas = 2000\n"},
      {"one_arm", "dimension = 2\np = 0.4\nradii = 1, 2, 4\nreplicas = 2000\n"},
      {"pioneers", "dimension = 2\np = 0.3\nn_values = 1, 2, 3\nk_values = 1, 2\nreplicas = 2000\n"},
      {"susceptibility", "dimension = 3\np = 0.2\nreplicas = 2000\n"},
      {"plateau", "dimension = 2\ngeometry = torus\nperiod = 6\np = 0.3\nreplicas = 500\n"},
      {"triangle", "dimension = 2\np = 0.3\ngrid_radius = 3\ntorus_period = 6\nreplicas = 500\n"},
      {"pt_solve", "dimension = 2\ngeometry = torus\nperiod = 6\nlambda = 1\nreplicas = 500\n"},
      {"mass_fit", "dimension = 2\np = 0.3\nn_values = 1, 2, 3, 4, 5\nreplicas = 2000\n"},
      {"oracle", "dimension = 2\np = 0.4\nx = 1,1\nrect_lo = 0,0\nrect_hi = 1,1\nreplicas = 2000\n"},
      {"osss_check", "dimension = 2\np = 0.5\ninstances = 50\nreplicas = 1\n"},
      {"slab", "dimension = 2\np = 0.3\nradii = 1, 2\nreplicas = 2000\n"},
      {"coupling", "dimension = 2\np = 0.3, 0.4\nradii = 2\nreplicas = 200\n"},
      {"image_sum", "dimension = 2\ngeometry = torus\nperiod = 6\np = 0.3\nx = 1,0\nreplicas = 2000\n"},
  };
  const fs::path dir = fs::temp_directory_path() / "perclab_acceptance";
  fs::remove_all(dir);
  int kinds = 0;
  std::string differing;
  for (const auto& [kind, body] : configs) {
    ++kinds;
    std::string reference;
    int run = 0;
    for (const char* w : {"1", "1", "4", "16"}) {
      const auto out = (dir / kind / std::to_string(run++) / "run").string();
      const auto cfg = parse_config("kind = " + kind + "\n" + body + "output = " + out + "\n", std::nullopt,
                                    {{"workers", w}, {"seed", "31"}});
      const auto res = run_experiment(cfg);
      std::ifstream is(res.csv_path, std::ios::binary);
      std::stringstream ss;
      ss << is.rdbuf();
      if (run == 1) reference = ss.str();
      else if (ss.str() != reference) differing += " " + kind + "(workers=" + w + ")";
    }
  }
  return {differing.empty(), fmt("%d experiment kinds, workers {1,1,4,16}", kinds) +
                                 (differing.empty() ? std::string(", all CSVs identical") : ", differ:" + differing)};
}

}  // namespace

int main() {
  CriticalPoints cp;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"Russo formula", russo},
      {"OSSS battery", osss_battery},
      {"coupling invariants", coupling},
      {"pioneer correctness", pioneer_correctness},
      {"submultiplicativity", [&] { return submultiplicativity(cp); }},
      {"exponent trends", [&] { return exponents(cp); }},
      {"plateau", [&] { return plateau(cp); }},
      {"image-sum bound", [&] { return image_sum_bound(cp); }},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
