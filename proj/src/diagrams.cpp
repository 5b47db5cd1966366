#include "perclab/diagrams.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include <fftw3.h>
#include <nlohmann/json.hpp>

namespace perclab {

namespace {

constexpr std::size_t kDirectLimit = 4096;

std::int64_t floor_mod(std::int64_t a, std::int64_t r) {
  const std::int64_t m = a % r;
  return m < 0 ? m + r : m;
}

std::size_t checked_volume(int dim, std::int64_t extent) {
  double v = std::pow(static_cast<double>(extent), dim);
  if (v > 2e8) throw DiagramError("grid too large to store densely");
  return static_cast<std::size_t>(std::llround(v));
}

std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

// Cyclic convolution of two real arrays laid out row-major over `dims`.
std::vector<double> fft_cyclic(const std::vector<double>& a, const std::vector<double>& b,
                               const std::vector<int>& dims) {
  const std::size_t n = a.size();
  const std::size_t last = static_cast<std::size_t>(dims.back());
  const std::size_t nc = n / last * (last / 2 + 1);
  std::vector<double> ra(a), rb(b), out(n);
  auto* ca = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nc));
  auto* cb = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nc));
  fftw_plan pa, pb, pinv;
  {
    std::lock_guard lk(fftw_planner_mutex());
    pa = fftw_plan_dft_r2c(static_cast<int>(dims.size()), dims.data(), ra.data(), ca, FFTW_ESTIMATE);
    pb = fftw_plan_dft_r2c(static_cast<int>(dims.size()), dims.data(), rb.data(), cb, FFTW_ESTIMATE);
    pinv = fftw_plan_dft_c2r(static_cast<int>(dims.size()), dims.data(), ca, out.data(), FFTW_ESTIMATE);
  }
  // Planning with FFTW_ESTIMATE leaves the input arrays intact.
  fftw_execute(pa);
  fftw_execute(pb);
  for (std::size_t i = 0; i < nc; ++i) {
    const double re = ca[i][0] * cb[i][0] - ca[i][1] * cb[i][1];
    const double im = ca[i][0] * cb[i][1] + ca[i][1] * cb[i][0];
    ca[i][0] = re;
    ca[i][1] = im;
  }
  fftw_execute(pinv);
  {
    std::lock_guard lk(fftw_planner_mutex());
    fftw_destroy_plan(pa);
    fftw_destroy_plan(pb);
    fftw_destroy_plan(pinv);
  }
  fftw_free(ca);
  fftw_free(cb);
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

double shell_count(int d, std::int64_t k) {
  if (k == 0) return 1.0;
  return std::pow(2.0 * k + 1.0, d) - std::pow(2.0 * k - 1.0, d);
}

double bracket_pow(double s, double e) { return std::pow(std::max(s, 1.0), -e); }

// Bound on sum_{k >= from} |shell(k)| A k^-a B max(k - xinf, 1)^-b.
double shell_tail(int d, std::int64_t from, std::int64_t xinf, double a, double b) {
  if (a + b <= d) return std::numeric_limits<double>::infinity();
  const std::int64_t explicit_end = std::max<std::int64_t>(from, 2 * xinf + 2) + 20000;
  double s = 0.0;
  for (std::int64_t k = from; k < explicit_end; ++k) {
    s += shell_count(d, k) * bracket_pow(static_cast<double>(k), a) *
         bracket_pow(static_cast<double>(k - xinf), b);
  }
  // k - xinf >= k/2 and |shell(k)| <= 2d (3k)^(d-1) beyond explicit_end.
  const double K = static_cast<double>(explicit_end);
  s += 2.0 * d * std::pow(3.0, d - 1) * std::pow(2.0, b) * std::pow(K - 1.0, d - a - b) / (a + b - d);
  return s;
}

}  // namespace

Grid::Grid(int dim, bool wrap, std::int64_t extent) : dim_(dim), wrap_(wrap), extent_(extent) {
  if (dim < 1 || dim > kMaxDim) throw DiagramError("grid dimension out of range");
  values_.assign(checked_volume(dim, extent), 0.0);
}

Grid Grid::torus(int dim, std::int64_t period) {
  if (period <= 2) throw DiagramError("torus period must exceed 2");
  return Grid(dim, true, period);
}

Grid Grid::box(int dim, std::int64_t radius, double decay_exponent) {
  if (radius < 0) throw DiagramError("box radius must be nonnegative");
  Grid g(dim, false, 2 * radius + 1);
  g.decay_ = decay_exponent;
  return g;
}

bool Grid::contains(const Point& x) const {
  if (x.dim() != dim_) return false;
  if (wrap_) return true;
  return norms(x).linf <= radius();
}

std::size_t Grid::index(const Point& x) const {
  if (x.dim() != dim_) throw DiagramError("point dimension does not match grid");
  std::size_t idx = 0;
  const std::int64_t rho = radius();
  for (int i = 0; i < dim_; ++i) {
    std::int64_t m;
    if (wrap_) {
      m = floor_mod(x[i], extent_);
    } else {
      m = x[i] + rho;
      if (m < 0 || m >= extent_) throw DiagramError("point " + x.to_string() + " outside grid box");
    }
    idx = idx * static_cast<std::size_t>(extent_) + static_cast<std::size_t>(m);
  }
  return idx;
}

Point Grid::point(std::size_t index) const {
  Point x(dim_);
  const std::int64_t rho = radius();
  const std::int64_t high = extent_ - extent_ / 2;
  for (int i = dim_ - 1; i >= 0; --i) {
    const auto m = static_cast<std::int64_t>(index % static_cast<std::size_t>(extent_));
    index /= static_cast<std::size_t>(extent_);
    x[i] = wrap_ ? (m >= high ? m - extent_ : m) : m - rho;
  }
  return x;
}

double Grid::value_or_zero(const Point& x) const {
  if (!contains(x)) return 0.0;
  return values_[index(x)];
}

double Grid::tail_amplitude() const {
  double a = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    a = std::max(a, std::abs(values_[i]) * std::pow(static_cast<double>(norms(point(i)).jbracket), decay_));
  }
  return a;
}

void Grid::symmetrize() {
  std::map<std::vector<std::int64_t>, std::pair<double, int>> classes;
  std::vector<std::vector<std::int64_t>> keys(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Point x = point(i);
    std::vector<std::int64_t> k(dim_);
    for (int a = 0; a < dim_; ++a) {
      if (wrap_) {
        const std::int64_t m = floor_mod(x[a], extent_);
        k[a] = std::min(m, extent_ - m);
      } else {
        k[a] = x[a] < 0 ? -x[a] : x[a];
      }
    }
    std::sort(k.begin(), k.end());
    auto& c = classes[k];
    c.first += values_[i];
    c.second += 1;
    keys[i] = std::move(k);
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto& c = classes[keys[i]];
    values_[i] = c.first / c.second;
  }
}

Grid point_mass(const Grid& shape, const Point& at) {
  Grid g = shape;
  std::fill(g.values().begin(), g.values().end(), 0.0);
  g.at(at) = 1.0;
  return g;
}

Grid power_law_grid(int dim, std::int64_t radius, double exponent) {
  Grid g = Grid::box(dim, radius, exponent);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = std::pow(static_cast<double>(norms(g.point(i)).jbracket), -exponent);
  }
  return g;
}

double Convolution::max_tail_bound() const {
  double m = 0.0;
  for (double t : tail_bound) m = std::max(m, t);
  return m;
}

Convolution convolve(const Grid& a, const Grid& b, ConvolveMethod method) {
  if (!a.same_shape(b)) throw DiagramError("convolve: grids have mismatched shapes");
  const int d = a.dim();
  const std::size_t n = a.size();
  const std::int64_t E = a.extent();
  Convolution out{a, {}};
  auto& res = out.grid.values();
  std::fill(res.begin(), res.end(), 0.0);
  const bool direct = method == ConvolveMethod::Direct || (method == ConvolveMethod::Auto && n <= kDirectLimit);

  // Per-index coordinates in storage units (0..E-1).
  std::vector<std::int64_t> coord(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (int k = d - 1; k >= 0; --k) {
      coord[i * d + k] = static_cast<std::int64_t>(rem % static_cast<std::size_t>(E));
      rem /= static_cast<std::size_t>(E);
    }
  }

  if (a.wrap()) {
    if (direct) {
      for (std::size_t x = 0; x < n; ++x) {
        std::vector<double> terms;
        terms.reserve(n);
        for (std::size_t y = 0; y < n; ++y) {
          std::size_t z = 0;
          for (int k = 0; k < d; ++k) z = z * E + static_cast<std::size_t>(floor_mod(coord[x * d + k] - coord[y * d + k], E));
          terms.push_back(a[y] * b[z]);
        }
        res[x] = std::accumulate(terms.begin(), terms.end(), 0.0);
      }
    } else {
      res = fft_cyclic(a.values(), b.values(), std::vector<int>(d, static_cast<int>(E)));
    }
    out.grid.set_decay_exponent(0.0);
    return out;
  }

  const std::int64_t rho = a.radius();
  if (direct) {
    for (std::size_t x = 0; x < n; ++x) {
      double s = 0.0;
      for (std::size_t y = 0; y < n; ++y) {
        std::size_t z = 0;
        bool inside = true;
        for (int k = 0; k < d && inside; ++k) {
          // storage offsets carry +rho each; x - y + rho is the storage offset of x - y.
          const std::int64_t m = coord[x * d + k] - coord[y * d + k] + rho;
          inside = m >= 0 && m < E;
          z = z * E + static_cast<std::size_t>(m);
        }
        if (inside) s += a[y] * b[z];
      }
      res[x] = s;
    }
  } else {
    // Linear convolution through zero padding to 2E-1 per axis.
    const std::int64_t P = 2 * E - 1;
    const std::size_t np = checked_volume(d, P);
    std::vector<double> pa(np, 0.0), pb(np, 0.0);
    auto padded = [&](std::size_t i) {
      std::size_t z = 0;
      for (int k = 0; k < d; ++k) z = z * P + static_cast<std::size_t>(coord[i * d + k]);
      return z;
    };
    for (std::size_t i = 0; i < n; ++i) {
      pa[padded(i)] = a[i];
      pb[padded(i)] = b[i];
    }
    const auto full = fft_cyclic(pa, pb, std::vector<int>(d, static_cast<int>(P)));
    for (std::size_t x = 0; x < n; ++x) {
      std::size_t z = 0;
      for (int k = 0; k < d; ++k) z = z * P + static_cast<std::size_t>(coord[x * d + k] + rho);
      res[x] = full[z];
    }
  }

  // Tail bound from the declared decay of each factor.
  const double alpha = a.decay_exponent(), beta = b.decay_exponent();
  const double Aa = a.tail_amplitude(), Ab = b.tail_amplitude();
  double mass_a = 0.0;
  for (double v : a.values()) mass_a += std::abs(v);
  out.tail_bound.assign(n, std::numeric_limits<double>::infinity());
  if (alpha > 0 && beta > 0) {
    std::map<std::int64_t, double> by_radius;
    for (std::size_t x = 0; x < n; ++x) {
      const std::int64_t xinf = norms(out.grid.point(x)).linf;
      auto it = by_radius.find(xinf);
      if (it == by_radius.end()) {
        const double outer = Aa * Ab * shell_tail(d, rho + 1, xinf, alpha, beta);
        const double inner = mass_a * Ab * std::pow(static_cast<double>(rho + 1), -beta);
        it = by_radius.emplace(xinf, outer + inner).first;
      }
      out.tail_bound[x] = it->second;
    }
    out.grid.set_decay_exponent(alpha + beta - d > 0 ? alpha + beta - d : 0.0);
  } else {
    out.grid.set_decay_exponent(0.0);
  }
  return out;
}

Diagrams triangle_diagrams(const Grid& tau, const Grid& tau_torus, ConvolveMethod method) {
  if (tau.wrap()) throw DiagramError("triangle_diagrams: tau must be a truncated Z^d grid");
  if (!tau_torus.wrap()) throw DiagramError("triangle_diagrams: tau_torus must be a torus grid");
  Diagrams out{convolve(tau, tau, method), {Grid::box(tau.dim(), 0), {}}, Grid::torus(tau_torus.dim(), tau_torus.period())};
  out.triangle = convolve(out.bubble.grid, tau, method);
  // Propagate the bubble's own truncation error through the outer convolution.
  if (!out.bubble.tail_bound.empty()) {
    Grid err = tau;
    std::copy(out.bubble.tail_bound.begin(), out.bubble.tail_bound.end(), err.values().begin());
    const double eb = out.bubble.max_tail_bound();
    if (std::isfinite(eb)) {
      err.set_decay_exponent(0.0);
      const auto prop = convolve(err, tau, method);
      double mass_tau = 0.0;
      for (double v : tau.values()) mass_tau += v;
      for (std::size_t i = 0; i < out.triangle.tail_bound.size(); ++i) {
        out.triangle.tail_bound[i] += prop.grid[i] + eb * mass_tau;
      }
    } else {
      std::fill(out.triangle.tail_bound.begin(), out.triangle.tail_bound.end(), eb);
    }
  }
  const auto bubble_t = convolve(tau_torus, tau_torus, method);
  out.torus_triangle = convolve(bubble_t.grid, tau_torus, method).grid;
  return out;
}

RadialConvolution radial_convolution(int dim, double a, double b, const Point& x, std::int64_t cutoff) {
  if (x.dim() != dim) throw DiagramError("radial_convolution: dimension mismatch");
  if (cutoff < 1) throw DiagramError("radial_convolution: cutoff must be positive");
  const std::int64_t xinf = norms(x).linf;
  // N(s,t) = #{y : |y|_inf <= s, |x-y|_inf <= t}
  auto N = [&](std::int64_t s, std::int64_t t) -> long double {
    if (s < 0 || t < 0) return 0.0L;
    long double prod = 1.0L;
    for (int i = 0; i < dim; ++i) {
      const std::int64_t lo = std::max(-s, x[i] - t), hi = std::min(s, x[i] + t);
      if (hi < lo) return 0.0L;
      prod *= static_cast<long double>(hi - lo + 1);
    }
    return prod;
  };
  long double total = 0.0L;
  for (std::int64_t s = 0; s <= cutoff; ++s) {
    const long double fs = std::pow(static_cast<long double>(std::max<std::int64_t>(s, 1)), -static_cast<long double>(a));
    long double prev = 0.0L;  // #{|y| = s, |x-y| <= t-1}
    long double inner = 0.0L;
    const std::int64_t tmin = std::max<std::int64_t>(0, s - xinf);
    for (std::int64_t t = tmin; t <= s + xinf; ++t) {
      const long double cur = N(s, t) - N(s - 1, t);
      const long double cnt = cur - (t == tmin ? (N(s, t - 1) - N(s - 1, t - 1)) : prev);
      if (cnt != 0.0L) {
        inner += cnt * std::pow(static_cast<long double>(std::max<std::int64_t>(t, 1)), -static_cast<long double>(b));
      }
      prev = cur;
    }
    total += fs * inner;
  }
  RadialConvolution r;
  r.value = static_cast<double>(total);
  r.tail_bound = shell_tail(dim, cutoff + 1, xinf, a, b);
  return r;
}

void write_grid(const Grid& g, const std::string& csv_path, const std::string& json_path, const GridMetadata& meta) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  for (int i = 0; i < g.dim(); ++i) csv << 'x' << (i + 1) << ',';
  csv << "value\n";
  char buf[64];
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point x = g.point(i);
    for (auto c : x.coords()) csv << c << ',';
    std::snprintf(buf, sizeof buf, "%.17g", g[i]);
    csv << buf << '\n';
  }
  nlohmann::ordered_json j;
  j["dim"] = g.dim();
  j["wrap"] = g.wrap();
  if (g.wrap()) j["period"] = g.period();
  else j["radius"] = g.radius();
  j["decay_exponent"] = g.decay_exponent();
  j["rows"] = g.size();
  j["seed"] = meta.seed;
  j["provenance"] = meta.provenance;
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << j.dump(2) << '\n';
}

Grid read_grid(const std::string& csv_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("cannot read " + json_path);
  const auto j = nlohmann::json::parse(js);
  const int dim = j.at("dim").get<int>();
  Grid g = j.at("wrap").get<bool>() ? Grid::torus(dim, j.at("period").get<std::int64_t>())
                                    : Grid::box(dim, j.at("radius").get<std::int64_t>(), j.at("decay_exponent").get<double>());
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot read " + csv_path);
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Point x(dim);
    for (int i = 0; i < dim; ++i) {
      std::getline(ss, cell, ',');
      x[i] = std::stoll(cell);
    }
    std::getline(ss, cell, ',');
    g.at(x) = std::stod(cell);
  }
  return g;
}

}  // namespace perclab
