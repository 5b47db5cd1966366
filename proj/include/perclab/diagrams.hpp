#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perclab/lattice.hpp"

namespace perclab {

struct DiagramError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dense real-valued function on the torus T_r^d (wrap) or on the box Lambda_rho of Z^d.
// Truncated grids carry a declared power-law decay exponent used for tail bounds: outside the
// box the function is assumed bounded by A <x>^-decay with A fitted on the grid itself.
class Grid {
 public:
  static Grid torus(int dim, std::int64_t period);
  static Grid box(int dim, std::int64_t radius, double decay_exponent = 0.0);

  int dim() const { return dim_; }
  bool wrap() const { return wrap_; }
  std::int64_t period() const { return wrap_ ? extent_ : 0; }
  std::int64_t radius() const { return wrap_ ? 0 : (extent_ - 1) / 2; }
  std::int64_t extent() const { return extent_; }
  std::size_t size() const { return values_.size(); }
  double decay_exponent() const { return decay_; }
  void set_decay_exponent(double a) { decay_ = a; }

  bool same_shape(const Grid& o) const { return dim_ == o.dim_ && wrap_ == o.wrap_ && extent_ == o.extent_; }
  bool contains(const Point& x) const;
  std::size_t index(const Point& x) const;
  Point point(std::size_t index) const;

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(const Point& x) { return values_[index(x)]; }
  double at(const Point& x) const { return values_[index(x)]; }
  // Value at x, zero outside a truncated grid (torus points are reduced first).
  double value_or_zero(const Point& x) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // A = max over the grid of value * <x>^decay.
  double tail_amplitude() const;
  // Average over the hyperoctahedral group (coordinate permutations and sign flips).
  void symmetrize();

 private:
  Grid(int dim, bool wrap, std::int64_t extent);
  int dim_ = 1;
  bool wrap_ = false;
  std::int64_t extent_ = 1;
  double decay_ = 0.0;
  std::vector<double> values_;
};

Grid point_mass(const Grid& shape, const Point& at);
// f(x) = <x>^-exponent on a truncated box.
Grid power_law_grid(int dim, std::int64_t radius, double exponent);

enum class ConvolveMethod { Auto, Direct, Fft };

struct Convolution {
  Grid grid;
  // Upper bound on the mass dropped by truncation, per output point (empty on the torus).
  std::vector<double> tail_bound;
  double max_tail_bound() const;
};

Convolution convolve(const Grid& a, const Grid& b, ConvolveMethod method = ConvolveMethod::Auto);

struct Diagrams {
  Convolution bubble;    // tau * tau on Z^d
  Convolution triangle;  // tau * tau * tau on Z^d
  Grid torus_triangle;   // tauT * tauT * tauT on T_r^d
};

Diagrams triangle_diagrams(const Grid& tau, const Grid& tau_torus, ConvolveMethod method = ConvolveMethod::Auto);

// Exact convolution of two l_inf-radial kernels <y>^-a and <y>^-b on Z^d evaluated at x, by
// counting lattice points per pair of l_inf shells. Shells up to `cutoff` are summed exactly; the
// remainder is bounded analytically (requires a + b > d).
struct RadialConvolution {
  double value = 0.0;       // exact sum over |y|_inf <= cutoff
  double tail_bound = 0.0;  // bound on the remaining sum
};
RadialConvolution radial_convolution(int dim, double a, double b, const Point& x, std::int64_t cutoff = 4096);

struct GridMetadata {
  std::uint64_t seed = 0;
  std::string provenance;
};

// CSV rows "c1,...,cd,value" plus a JSON sidecar describing the grid shape.
void write_grid(const Grid& g, const std::string& csv_path, const std::string& json_path, const GridMetadata& meta);
Grid read_grid(const std::string& csv_path, const std::string& json_path);

}  // namespace perclab
