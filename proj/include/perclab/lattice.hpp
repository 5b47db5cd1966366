#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace perclab {

inline constexpr int kMaxDim = 12;

struct LatticeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A point of Z^d (or a canonical representative of T_r^d).
class Point {
 public:
  Point() = default;
  explicit Point(int dim);
  Point(std::initializer_list<std::int64_t> coords);
  explicit Point(std::span<const std::int64_t> coords);

  static Point unit(int dim, int axis, std::int64_t scale = 1);

  int dim() const { return dim_; }
  std::int64_t operator[](int i) const { return c_[i]; }
  std::int64_t& operator[](int i) { return c_[i]; }
  std::span<const std::int64_t> coords() const { return {c_.data(), static_cast<std::size_t>(dim_)}; }

  Point& operator+=(const Point& o);
  Point& operator-=(const Point& o);
  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator-(Point a, const Point& b) { return a -= b; }
  friend Point operator*(std::int64_t k, Point a);

  friend bool operator==(const Point& a, const Point& b);
  // Lexicographic on coordinates; points of different dimension order by dimension first.
  friend std::strong_ordering operator<=>(const Point& a, const Point& b);

  template <typename H>
  friend H AbslHashValue(H h, const Point& p) {
    return H::combine_contiguous(std::move(h), p.c_.data(), static_cast<std::size_t>(p.dim_));
  }

  std::string to_string() const;

 private:
  std::array<std::int64_t, kMaxDim> c_{};
  std::uint8_t dim_ = 0;
};

struct Norms {
  std::int64_t l1 = 0;
  std::int64_t linf = 0;
  std::int64_t jbracket = 1;  // max(linf, 1)
};

Norms norms(const Point& x);

struct InfiniteLattice {};
struct Torus {
  std::int64_t period = 0;
};
using Geometry = std::variant<InfiniteLattice, Torus>;

// Bond percolation model: Z^d or T_r^d, edges between points at l1 distance <= range.
struct ModelSpec {
  int dimension = 1;
  Geometry geometry = InfiniteLattice{};
  int range = 1;
  double p = 0.0;

  static ModelSpec lattice(int d, int range = 1, double p = 0.0);
  static ModelSpec torus(int d, std::int64_t r, int range = 1, double p = 0.0);

  bool is_torus() const { return std::holds_alternative<Torus>(geometry); }
  std::int64_t period() const;
  // r^d; throws on Z^d or overflow.
  std::int64_t volume() const;
  ModelSpec with_p(double q) const;
  // Same (d, L) on Z^d.
  ModelSpec unwrapped() const;

  void validate() const;
};

// Unordered pair of distinct points stored with the lexicographically smaller endpoint first.
class Edge {
 public:
  Edge(const Point& x, const Point& y);

  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  bool has_endpoint(const Point& v) const { return v == lo_ || v == hi_; }
  const Point& other(const Point& v) const { return v == lo_ ? hi_ : lo_; }

  friend bool operator==(const Edge&, const Edge&) = default;
  friend std::strong_ordering operator<=>(const Edge& a, const Edge& b) {
    if (auto c = a.lo_ <=> b.lo_; c != 0) return c;
    return a.hi_ <=> b.hi_;
  }
  template <typename H>
  friend H AbslHashValue(H h, const Edge& e) {
    return H::combine(std::move(h), e.lo_, e.hi_);
  }

  std::string to_string() const;

 private:
  Point lo_;
  Point hi_;
};

// Reduces each coordinate into the window [-floor(r/2), r - floor(r/2)).
Point project_to_torus(const Point& x, std::int64_t r);

// Canonical form of a point for the model (identity on Z^d).
Point canonical_point(const Point& x, const ModelSpec& model);

// All v != 0 with |v|_1 <= range, in lexicographic order.
std::vector<Point> neighbor_offsets(int dim, int range);

std::vector<Edge> incident_edges(const Point& x, const ModelSpec& model);

// Precomputed neighbourhood structure for hot loops.
class Neighborhood {
 public:
  explicit Neighborhood(const ModelSpec& model);

  const ModelSpec& model() const { return model_; }
  std::span<const Point> offsets() const { return offsets_; }
  // Neighbour of x along offset i, canonicalised on the torus.
  Point neighbor(const Point& x, std::size_t i) const;

 private:
  ModelSpec model_;
  std::vector<Point> offsets_;
};

enum class Side { AtLeast, Below };

class Region {
 public:
  struct All {};
  struct Box {
    std::int64_t radius;  // |x|_inf <= radius
  };
  struct OutsideBox {
    std::int64_t radius;  // |x|_inf >= radius
  };
  struct Halfspace {
    int axis;
    std::int64_t threshold;
    Side side;  // AtLeast: x[axis] >= threshold; Below: x[axis] < threshold
  };
  struct Slab {
    int axis;
    std::int64_t lo;
    std::int64_t hi;  // lo <= x[axis] <= hi
  };
  struct Rect {
    Point lo;
    Point hi;  // lo[i] <= x[i] <= hi[i] for every axis
  };
  struct Single {
    Point point;
  };
  struct Custom {
    std::function<bool(const Point&)> predicate;
  };
  using Kind = std::variant<All, Box, OutsideBox, Halfspace, Slab, Rect, Single, Custom>;

  Region() : kind_(All{}) {}

  static Region all() { return Region(All{}); }
  static Region box(std::int64_t radius) { return Region(Box{radius}); }
  static Region outside_box(std::int64_t radius) { return Region(OutsideBox{radius}); }
  // H_n = {x : x_1 >= n}
  static Region halfspace_at_least(std::int64_t n, int axis = 0) {
    return Region(Halfspace{axis, n, Side::AtLeast});
  }
  // {x : x_1 < n}
  static Region halfspace_below(std::int64_t n, int axis = 0) {
    return Region(Halfspace{axis, n, Side::Below});
  }
  static Region slab(std::int64_t lo, std::int64_t hi, int axis = 0) {
    return Region(Slab{axis, lo, hi});
  }
  static Region rect(const Point& lo, const Point& hi) { return Region(Rect{lo, hi}); }
  static Region single(const Point& x) { return Region(Single{x}); }
  static Region custom(std::function<bool(const Point&)> pred) { return Region(Custom{std::move(pred)}); }

  bool contains(const Point& x) const;
  bool is_all() const { return std::holds_alternative<All>(kind_); }
  const Kind& kind() const { return kind_; }

 private:
  explicit Region(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

}  // namespace perclab

template <>
struct std::hash<perclab::Point> {
  std::size_t operator()(const perclab::Point& p) const noexcept;
};
template <>
struct std::hash<perclab::Edge> {
  std::size_t operator()(const perclab::Edge& e) const noexcept;
};
