#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "perclab/diagrams.hpp"

using namespace perclab;

namespace {

Grid random_grid(Grid g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : g.values()) v = u(rng);
  return g;
}

// Direct double sum, independent of the library's convolution code.
Grid naive_cyclic(const Grid& a, const Grid& b) {
  Grid out = Grid::torus(a.dim(), a.period());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Point x = out.point(i);
    double s = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const Point y = a.point(j);
      s += a[j] * b.at(project_to_torus(x - y, a.period()));
    }
    out[i] = s;
  }
  return out;
}

Grid naive_box(const Grid& a, const Grid& b) {
  Grid out = Grid::box(a.dim(), a.radius());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Point x = out.point(i);
    double s = 0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b.value_or_zero(x - a.point(j));
    out[i] = s;
  }
  return out;
}

double max_rel_diff(const Grid& a, const Grid& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]) / std::max(1e-300, std::fabs(b[i])));
  return m;
}

}  // namespace

TEST_CASE("point mass is the identity") {
  const Grid t = Grid::torus(3, 5);
  const auto pt = point_mass(t, Point(3));
  CHECK(convolve(pt, pt).grid.values() == pt.values());
  const Grid b = Grid::box(2, 3);
  const auto pb = point_mass(b, Point(2));
  for (auto m : {ConvolveMethod::Direct, ConvolveMethod::Fft}) {
    const auto c = convolve(pb, pb, m).grid;
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(pb[i]).epsilon(1e-12));
  }
}

TEST_CASE("torus d=1 r=4 all-ones convolve to all-fours") {
  Grid a = Grid::torus(1, 4);
  for (auto& v : a.values()) v = 1.0;
  for (auto m : {ConvolveMethod::Direct, ConvolveMethod::Fft}) {
    const auto c = convolve(a, a, m);
    for (double v : c.grid.values()) CHECK(v == doctest::Approx(4.0));
  }
}

TEST_CASE("cyclic convolution matches the direct double sum") {
  for (auto [d, r] : {std::pair{1, 7}, std::pair{2, 5}, std::pair{3, 4}, std::pair{2, 6}}) {
    const Grid a = random_grid(Grid::torus(d, r), 1), b = random_grid(Grid::torus(d, r), 2);
    const Grid ref = naive_cyclic(a, b);
    CHECK(max_rel_diff(convolve(a, b, ConvolveMethod::Direct).grid, ref) < 1e-12);
    CHECK(max_rel_diff(convolve(a, b, ConvolveMethod::Fft).grid, ref) < 1e-12);
  }
}

TEST_CASE("box convolution matches the direct sum and reports a tail bound") {
  Grid a = random_grid(Grid::box(2, 4, 3.0), 3), b = random_grid(Grid::box(2, 4, 3.0), 4);
  const Grid ref = naive_box(a, b);
  const auto direct = convolve(a, b, ConvolveMethod::Direct);
  const auto fft = convolve(a, b, ConvolveMethod::Fft);
  CHECK(max_rel_diff(direct.grid, ref) < 1e-12);
  CHECK(max_rel_diff(fft.grid, ref) < 1e-12);
  REQUIRE(direct.tail_bound.size() == direct.grid.size());
  CHECK(direct.max_tail_bound() > 0);
  CHECK(std::isfinite(direct.max_tail_bound()));
  const Grid undeclared = random_grid(Grid::box(2, 4), 5);
  CHECK(std::isinf(convolve(undeclared, undeclared).max_tail_bound()));
}

TEST_CASE("mismatched shapes are rejected") {
  CHECK_THROWS_AS(convolve(Grid::torus(2, 5), Grid::torus(2, 6)), DiagramError);
  CHECK_THROWS_AS(convolve(Grid::torus(2, 5), Grid::box(2, 2)), DiagramError);
  CHECK_THROWS_AS(convolve(Grid::box(3, 2), Grid::box(2, 2)), DiagramError);
}

TEST_CASE("triangle diagrams: point mass and the p = 1 torus") {
  const Grid tau = point_mass(Grid::box(2, 3, 4.0), Point(2));
  Grid tt = Grid::torus(2, 5);
  for (auto& v : tt.values()) v = 1.0;
  const auto d = triangle_diagrams(tau, tt);
  for (std::size_t i = 0; i < tau.size(); ++i) CHECK(d.triangle.grid[i] == doctest::Approx(tau[i]).epsilon(1e-12));
  for (double v : d.torus_triangle.values()) CHECK(v == doctest::Approx(625.0));
  CHECK_THROWS(triangle_diagrams(tt, tt));
}

TEST_CASE("torus triangle is maximal at the origin for positive-definite kernels") {
  // Kernels of the form (1/|C|) sum_{u,v in C} 1(v - u = x), averaged over random sets C.
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Grid tt = Grid::torus(2, 6);
    for (int s = 0; s < 10; ++s) {
      std::vector<Point> c;
      for (std::size_t i = 0; i < tt.size(); ++i) {
        if (rng() % 4 == 0) c.push_back(tt.point(i));
      }
      if (c.empty()) continue;
      for (const auto& u : c) {
        for (const auto& v : c) tt.at(project_to_torus(v - u, 6)) += 1.0 / c.size();
      }
    }
    const auto d = triangle_diagrams(point_mass(Grid::box(2, 1, 3.0), Point(2)), tt);
    const double at0 = d.torus_triangle.at(Point(2));
    for (double v : d.torus_triangle.values()) CHECK(v <= at0 * (1 + 1e-12));
  }
}

TEST_CASE("radial convolution against a brute-force sum") {
  // d = 3, <y>^-2 * <y>^-2 summed over |y|_inf <= 12.
  const int d = 3;
  for (const Point& x : {Point{0, 0, 0}, Point{2, 1, 0}, Point{5, -3, 2}}) {
    double brute = 0;
    Point y(3);
    for (y[0] = -12; y[0] <= 12; ++y[0]) {
      for (y[1] = -12; y[1] <= 12; ++y[1]) {
        for (y[2] = -12; y[2] <= 12; ++y[2]) {
          brute += std::pow(static_cast<double>(norms(y).jbracket), -2.0) *
                   std::pow(static_cast<double>(norms(x - y).jbracket), -2.0);
        }
      }
    }
    const auto rc = radial_convolution(d, 2.0, 2.0, x, 12);
    CHECK(rc.value == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("power-law convolution estimate for d = 7, a = b = 2") {
  // f(x) = <x>^(a - d); (f * f)(x) / <x>^(a + b - d) stays bounded.
  const int d = 7;
  double lo = INFINITY, hi = 0;
  for (std::int64_t k = 1; k <= 16; ++k) {
    const auto rc = radial_convolution(d, 5.0, 5.0, Point::unit(d, 0, k), 1024);
    CHECK(std::isfinite(rc.tail_bound));
    const double ratio = (rc.value + rc.tail_bound) / std::pow(static_cast<double>(k), -3.0);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  CHECK(std::isfinite(hi));
  CHECK(hi / lo < 20.0);
}

TEST_CASE("grid helpers") {
  Grid g = Grid::box(2, 2);
  g.at(Point{1, 0}) = 4.0;
  g.symmetrize();
  CHECK(g.at(Point{0, -1}) == doctest::Approx(1.0));
  CHECK(g.at(Point{1, 0}) == doctest::Approx(1.0));
  CHECK(g.value_or_zero(Point{5, 0}) == 0.0);
  const Grid t = Grid::torus(1, 5);
  CHECK(t.index(Point{6}) == t.index(Point{1}));
  const Grid p = power_law_grid(2, 3, 2.0);
  CHECK(p.at(Point{2, 1}) == doctest::Approx(0.25));
  CHECK(p.tail_amplitude() == doctest::Approx(1.0));
}

TEST_CASE("grid round trip through CSV and JSON") {
  const auto dir = std::filesystem::temp_directory_path() / "perclab_grid_test";
  std::filesystem::create_directories(dir);
  const Grid g = random_grid(Grid::box(2, 3, 2.5), 6);
  write_grid(g, (dir / "g.csv").string(), (dir / "g.json").string(), {42, "unit test"});
  const Grid h = read_grid((dir / "g.csv").string(), (dir / "g.json").string());
  CHECK(h.same_shape(g));
  CHECK(h.values() == g.values());
  CHECK(h.decay_exponent() == 2.5);
  const Grid t = random_grid(Grid::torus(3, 4), 7);
  write_grid(t, (dir / "t.csv").string(), (dir / "t.json").string(), {1, ""});
  CHECK(read_grid((dir / "t.csv").string(), (dir / "t.json").string()).values() == t.values());
}
