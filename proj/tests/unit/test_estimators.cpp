#include <doctest.h>

#include <cmath>
#include <numeric>

#include "perclab/estimators.hpp"
#include "perclab/oracle.hpp"

using namespace perclab;

namespace {

RunOptions opts(std::uint64_t replicas, std::uint64_t seed = 1, int workers = 1) {
  RunOptions o;
  o.replicas = replicas;
  o.seed = seed;
  o.workers = workers;
  return o;
}

bool within(const Estimate& e, double exact, double k = 3.0) { return std::fabs(e.value - exact) <= k * e.std_error; }

}  // namespace

TEST_CASE("pairwise sum and means") {
  std::vector<double> xs(1000);
  std::iota(xs.begin(), xs.end(), 1.0);
  CHECK(pairwise_sum(xs) == 500500.0);
  CHECK(pairwise_sum({}) == 0.0);
  const auto m = mean_iid(xs);
  CHECK(m.mean == 500.5);
  CHECK(m.se == doctest::Approx(std::sqrt(1000.0 * 1001 / 12.0 / 1000.0)));
  std::vector<double> ind = {1, 0, 1, 1};
  const auto b = mean_binomial(ind);
  CHECK(b.mean == 0.75);
  CHECK(b.se == doctest::Approx(std::sqrt(0.75 * 0.25 / 4)));
  const auto bm = mean_batch(xs, 20);
  CHECK(bm.mean == 500.5);
  CHECK(bm.se > 0);
}

TEST_CASE("fit_line recovers an exact line") {
  std::vector<double> x = {1, 2, 3, 4}, y = {3, 5, 7, 9};
  const auto f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.rms_residual == doctest::Approx(0.0));
}

TEST_CASE("two-point: trivial values and the four-cycle") {
  const ModelSpec m = ModelSpec::lattice(2);
  CHECK(estimate_two_point(m, 0.0, Point{1, 0}, opts(1000)).value == 0.0);
  CHECK(estimate_two_point(m, 0.0, Point{0, 0}, opts(1000)).value == 1.0);
  RunOptions o = opts(100'000, 3);
  o.region = Region::rect(Point{0, 0}, Point{1, 1});
  CHECK(within(estimate_two_point(m, 0.5, Point{1, 0}, o), 0.5625));
  CHECK_THROWS_AS(estimate_two_point(m, 1.5, Point{1, 0}, o), EstimatorError);
}

TEST_CASE("one-arm trivial values") {
  const ModelSpec m = ModelSpec::lattice(3);
  for (auto metric : {ArmMetric::Extrinsic, ArmMetric::Intrinsic}) {
    CHECK(estimate_one_arm(m, 0.0, 3, opts(500), metric).value == 0.0);
    CHECK(estimate_one_arm(m, 1.0, 3, opts(50), metric).value == 1.0);
  }
  CHECK_THROWS(estimate_one_arm(m, 0.5, 0, opts(10)));
}

TEST_CASE("one-arm profile agrees with single-radius estimates") {
  const ModelSpec m = ModelSpec::lattice(2);
  for (auto metric : {ArmMetric::Extrinsic, ArmMetric::Intrinsic}) {
    const std::vector<std::int64_t> radii = {1, 2, 4, 8};
    const auto prof = estimate_one_arm_profile(m, 0.45, radii, opts(3000, 9), metric);
    for (std::size_t j = 0; j < radii.size(); ++j) {
      const auto one = estimate_one_arm(m, 0.45, radii[j], opts(3000, 9), metric);
      CHECK(one.value == prof[j].value);
    }
  }
}

TEST_CASE("one-arm d=1 is p^rho for either metric") {
  const ModelSpec m = ModelSpec::lattice(1);
  // Extrinsic: reach |x| >= rho on either side; intrinsic on Z is the same event.
  const double p = 0.6;
  const auto ext = estimate_one_arm(m, p, 3, opts(50'000, 2));
  const double exact = 2 * std::pow(p, 3) - std::pow(p, 6);
  CHECK(within(ext, exact));
  const auto in = estimate_one_arm(m, p, 3, opts(50'000, 2), ArmMetric::Intrinsic);
  CHECK(within(in, exact));
}

TEST_CASE("susceptibility trivial values") {
  CHECK(estimate_susceptibility(ModelSpec::lattice(3), 0.0, opts(100)).value == 1.0);
  const auto t = estimate_susceptibility(ModelSpec::torus(2, 5), 1.0, opts(50));
  CHECK(t.value == 25.0);
  CHECK(t.std_error == 0.0);
}

TEST_CASE("susceptibility and censoring flags") {
  RunOptions o = opts(200);
  o.caps.max_volume = 10;
  const auto e = estimate_susceptibility(ModelSpec::lattice(2), 0.9, o);
  CHECK(e.truncated > 0);
  CHECK(e.unreliable());
  CHECK(e.truncated_fraction == doctest::Approx(static_cast<double>(e.truncated) / 200));
  CHECK(e.seed == 1);
  CHECK(e.stream_begin == 0);
  CHECK(e.stream_end == 200);
}

TEST_CASE("slab counts") {
  const ModelSpec m = ModelSpec::lattice(2);
  const auto s0 = estimate_slab_counts(m, 0.4, 0, opts(500));
  CHECK(s0.x_r.value >= 1.0);
  const auto sp0 = estimate_slab_counts(m, 0.0, 2, opts(500));
  CHECK(sp0.x_r.value == 0.0);
  CHECK(sp0.y_r.value == 0.0);
  const double p = 0.4;
  for (std::int64_t r : {1, 2, 3}) {
    const auto s = estimate_slab_counts(m, p, r, opts(40'000, 5));
    const auto pn = estimate_Pn(m, p, {r + 1}, opts(40'000, 6)).at(r + 1);
    const double se = std::hypot(s.x_r.std_error, pn.std_error / p);
    CHECK(std::fabs(s.x_r.value - pn.value / p) <= 3 * se);
    CHECK(s.y_r.value <= s.x_r.value);
  }
}

TEST_CASE("psi: trivial values and the unrolled d=1 definition") {
  const ModelSpec t = ModelSpec::torus(1, 5);
  const auto z = estimate_psi(t, 0.0, Point{0}, 1, opts(100));
  CHECK(z.psi.value == 0.0);
  CHECK(z.tau_x.value == 1.0);
  CHECK_FALSE(z.tail_reported);
  const double p = 0.6;
  const auto ps = estimate_psi(t, p, Point{0}, 1, opts(50'000, 4));
  // tau(5) + tau(-5) on Z.
  CHECK(within(ps.psi, 2 * std::pow(p, 5)));
  MassFit mf;
  mf.m_hat = -std::log(p);
  const auto with_tail = estimate_psi(t, p, Point{0}, 1, opts(1000, 4), mf);
  CHECK(with_tail.tail_reported);
  CHECK(with_tail.tail_bound > 0);
  CHECK_THROWS(estimate_psi(ModelSpec::lattice(1), p, Point{0}, 1, opts(10)));
}

TEST_CASE("torus two-point is bounded by the image sum") {
  const ModelSpec t = ModelSpec::torus(2, 5);
  for (double p : {0.2, 0.35}) {
    for (const Point& x : {Point{1, 0}, Point{2, 1}}) {
      const auto tt = estimate_two_point(t, p, x, opts(20'000, 8));
      RunOptions o = opts(20'000, 8);
      o.first_stream = 20'000;
      const auto ps = estimate_psi(t, p, x, 2, o);
      CHECK(tt.value <= ps.image_sum.value + 3 * std::hypot(tt.std_error, ps.image_sum.std_error));
    }
  }
}

TEST_CASE("solve_p_T: extreme lambdas, residual contract, errors") {
  const ModelSpec t = ModelSpec::torus(2, 5);
  const double V = 25;
  const auto lo = solve_p_T(t, std::cbrt(1 / V), opts(200));
  CHECK(lo.p_T < 1e-6);
  const auto hi = solve_p_T(t, std::cbrt(V * V), opts(200));
  CHECK(hi.chi.value == doctest::Approx(V));
  CHECK(hi.p_T > 0.5);
  CHECK_THROWS_AS(solve_p_T(t, 0.01, opts(100)), EstimatorError);
  CHECK_THROWS_AS(solve_p_T(t, 100.0, opts(100)), EstimatorError);
  CHECK_THROWS_AS(solve_p_T(ModelSpec::lattice(2), 1.0, opts(100)), EstimatorError);
  const auto mid = solve_p_T(t, 1.0, opts(4000, 3));
  CHECK(mid.residual <= 3 * mid.chi.std_error);
  CHECK(mid.p_T > 0.0);
  CHECK(mid.p_T < 1.0);
}

TEST_CASE("solve_p_T at d=7, r=6, lambda=0.1") {
  const ModelSpec t = ModelSpec::torus(7, 6);
  const auto s = solve_p_T(t, 0.1, opts(2000, 5));
  CHECK(s.target == doctest::Approx(0.1 * std::cbrt(std::pow(6.0, 7))));
  CHECK(s.residual <= 3 * s.chi.std_error);
}

TEST_CASE("fit_mass: exact exponential and corrected power law") {
  std::map<std::int64_t, Estimate> a, b;
  for (std::int64_t n = 1; n <= 12; ++n) {
    a[n].value = std::exp(-0.3 * n);
    a[n].std_error = 0.01 * a[n].value;
    b[n].value = std::pow(static_cast<double>(n), -5.0) * std::exp(-0.2 * n);
    b[n].std_error = 0.01 * b[n].value;
  }
  const auto fa = fit_mass(a);
  CHECK(fa.m_hat == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(fa.residual == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(fa.n_min == 1);
  CHECK(fa.n_max == 12);
  MassFitOptions mo;
  mo.power_correction = true;
  mo.dimension = 11;  // (d - 1)/2 = 5
  const auto fb = fit_mass(b, mo);
  CHECK(std::fabs(fb.m_hat - 0.2) <= 0.05 * 0.2);
  std::map<std::int64_t, Estimate> few(a.begin(), std::next(a.begin(), 3));
  CHECK_THROWS_AS(fit_mass(few), EstimatorError);
  std::map<std::int64_t, Estimate> noisy = a;
  noisy[6].std_error = noisy[6].value;  // breaks the run at n = 6
  const auto fn = fit_mass(noisy);
  CHECK(fn.n_min == 7);
  CHECK(fn.n_max == 12);
}

TEST_CASE("results do not depend on the worker count") {
  const ModelSpec m = ModelSpec::lattice(3);
  for (int w : {4, 16}) {
    const auto a = estimate_susceptibility(m, 0.2, opts(3000, 11, 1));
    const auto b = estimate_susceptibility(m, 0.2, opts(3000, 11, w));
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);
    const auto ta = estimate_pioneer_tail(m, 0.2, {1, 2, 4}, opts(2000, 2, 1));
    const auto tb = estimate_pioneer_tail(m, 0.2, {1, 2, 4}, opts(2000, 2, w));
    for (std::size_t j = 0; j < ta.size(); ++j) CHECK(ta[j].value == tb[j].value);
    const ModelSpec t = ModelSpec::torus(3, 5);
    CHECK(solve_p_T(t, 1.0, opts(500, 1, 1)).p_T == solve_p_T(t, 1.0, opts(500, 1, w)).p_T);
    const auto ga = estimate_torus_two_point_grid(t, 0.25, opts(300, 1, 1));
    const auto gb = estimate_torus_two_point_grid(t, 0.25, opts(300, 1, w));
    CHECK(ga.tau.values() == gb.tau.values());
  }
}

TEST_CASE("estimators are monotone in p on shared fields") {
  const ModelSpec m = ModelSpec::lattice(2);
  const auto a = estimate_two_point(m, 0.3, Point{2, 0}, opts(5000, 4));
  const auto b = estimate_two_point(m, 0.4, Point{2, 0}, opts(5000, 4));
  CHECK(b.value >= a.value);
  const auto c = estimate_one_arm(m, 0.3, 4, opts(5000, 4));
  const auto d = estimate_one_arm(m, 0.4, 4, opts(5000, 4));
  CHECK(d.value >= c.value);
}

TEST_CASE("monotone coupling check finds no violations") {
  const auto c = check_monotone_coupling(ModelSpec::lattice(3), 0.15, 0.2, 6, opts(300, 3));
  CHECK(c.edges_checked == 30'000);
  CHECK(c.edge_violations == 0);
  CHECK(c.cluster_violations == 0);
  CHECK(c.ball_violations == 0);
  CHECK(c.clusters_checked + c.clusters_skipped == 300);
  CHECK(c.balls_checked > 0);
  CHECK_THROWS(check_monotone_coupling(ModelSpec::lattice(3), 0.3, 0.2, 6, opts(10)));
}

TEST_CASE("torus two-point grid") {
  const ModelSpec t = ModelSpec::torus(2, 5);
  const auto g = estimate_torus_two_point_grid(t, 1.0, opts(20));
  for (double v : g.tau.values()) CHECK(v == doctest::Approx(1.0));
  const auto h = estimate_torus_two_point_grid(t, 0.3, opts(4000, 2));
  CHECK(h.tau.at(Point{0, 0}) == doctest::Approx(1.0));
  // Sum over x equals the mean cluster size.
  double chi = 0;
  for (double v : h.tau.values()) chi += v;
  const auto s = estimate_susceptibility(t, 0.3, opts(4000, 2));
  CHECK(chi == doctest::Approx(s.value).epsilon(1e-9));
  const auto pt = estimate_two_point(t, 0.3, Point{1, 0}, opts(4000, 2));
  CHECK(std::fabs(h.tau.at(Point{1, 0}) - pt.value) <= 3 * std::hypot(pt.std_error, h.std_error.at(Point{1, 0})) + 0.02);
}

TEST_CASE("lattice two-point grid agrees with pointwise estimates") {
  const ModelSpec m = ModelSpec::lattice(2);
  const Grid g = estimate_lattice_two_point_grid(m, 0.35, 3, 10, opts(5000, 7), 1.0);
  CHECK(g.at(Point{0, 0}) == 1.0);
  const auto e = estimate_two_point(m, 0.35, Point{2, 1}, opts(5000, 8));
  CHECK(std::fabs(g.at(Point{2, 1}) - e.value) <= 4 * e.std_error * std::sqrt(2.0));
  CHECK_THROWS(estimate_lattice_two_point_grid(m, 0.35, 5, 3, opts(10), 1.0));
}

TEST_CASE("shell-averaged two-point") {
  const ModelSpec t = ModelSpec::torus(2, 5);
  CHECK(torus_shell_size(2, 5, 0) == 1);
  CHECK(torus_shell_size(2, 5, 1) == 8);
  CHECK(torus_shell_size(2, 5, 2) == 16);
  CHECK(torus_shell_size(2, 6, 3) == 11);  // window [-3, 2]^2: |x|_inf = 3 needs a coordinate -3
  const auto sh = estimate_two_point_shells(t, 1.0, {0, 1, 2}, opts(10));
  for (const auto& e : sh) CHECK(e.value == doctest::Approx(1.0));
  const auto z = estimate_two_point_shells(ModelSpec::lattice(2), 0.0, {0, 1}, opts(10), 4);
  CHECK(z[0].value == 1.0);
  CHECK(z[1].value == 0.0);
}
