#include "perclab/lattice.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace perclab {

namespace {

void check_dim(int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw LatticeError("dimension must lie in [1, " + std::to_string(kMaxDim) + "], got " +
                       std::to_string(dim));
  }
}

std::int64_t floor_mod(std::int64_t a, std::int64_t r) {
  std::int64_t m = a % r;
  return m < 0 ? m + r : m;
}

}  // namespace

Point::Point(int dim) {
  check_dim(dim);
  dim_ = static_cast<std::uint8_t>(dim);
}

Point::Point(std::initializer_list<std::int64_t> coords)
    : Point(std::span<const std::int64_t>(coords.begin(), coords.size())) {}

Point::Point(std::span<const std::int64_t> coords) : Point(static_cast<int>(coords.size())) {
  std::copy(coords.begin(), coords.end(), c_.begin());
}

Point Point::unit(int dim, int axis, std::int64_t scale) {
  Point p(dim);
  if (axis < 0 || axis >= dim) throw LatticeError("axis out of range");
  p.c_[axis] = scale;
  return p;
}

Point& Point::operator+=(const Point& o) {
  if (o.dim_ != dim_) throw LatticeError("dimension mismatch in point arithmetic");
  for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
  return *this;
}

Point& Point::operator-=(const Point& o) {
  if (o.dim_ != dim_) throw LatticeError("dimension mismatch in point arithmetic");
  for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
  return *this;
}

Point operator*(std::int64_t k, Point a) {
  for (int i = 0; i < a.dim_; ++i) a.c_[i] *= k;
  return a;
}

bool operator==(const Point& a, const Point& b) {
  if (a.dim_ != b.dim_) return false;
  return std::equal(a.c_.begin(), a.c_.begin() + a.dim_, b.c_.begin());
}

std::strong_ordering operator<=>(const Point& a, const Point& b) {
  if (a.dim_ != b.dim_) return a.dim_ <=> b.dim_;
  for (int i = 0; i < a.dim_; ++i) {
    if (a.c_[i] != b.c_[i]) return a.c_[i] <=> b.c_[i];
  }
  return std::strong_ordering::equal;
}

std::string Point::to_string() const {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < dim_; ++i) {
    if (i) os << ',';
    os << c_[i];
  }
  os << ')';
  return os.str();
}

Norms norms(const Point& x) {
  Norms n;
  for (auto c : x.coords()) {
    const std::int64_t a = c < 0 ? -c : c;
    n.l1 += a;
    n.linf = std::max(n.linf, a);
  }
  n.jbracket = std::max<std::int64_t>(n.linf, 1);
  return n;
}

ModelSpec ModelSpec::lattice(int d, int range, double p) {
  ModelSpec m{d, InfiniteLattice{}, range, p};
  m.validate();
  return m;
}

ModelSpec ModelSpec::torus(int d, std::int64_t r, int range, double p) {
  ModelSpec m{d, Torus{r}, range, p};
  m.validate();
  return m;
}

std::int64_t ModelSpec::period() const {
  if (!is_torus()) throw LatticeError("period requested on an infinite lattice model");
  return std::get<Torus>(geometry).period;
}

std::int64_t ModelSpec::volume() const {
  const std::int64_t r = period();
  std::int64_t v = 1;
  for (int i = 0; i < dimension; ++i) {
    if (v > std::numeric_limits<std::int64_t>::max() / r) throw LatticeError("torus volume overflows");
    v *= r;
  }
  return v;
}

ModelSpec ModelSpec::with_p(double q) const {
  ModelSpec m = *this;
  m.p = q;
  return m;
}

ModelSpec ModelSpec::unwrapped() const {
  ModelSpec m = *this;
  m.geometry = InfiniteLattice{};
  return m;
}

void ModelSpec::validate() const {
  check_dim(dimension);
  if (range < 1) throw LatticeError("range L must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw LatticeError("p must lie in [0,1]");
  if (is_torus()) {
    const std::int64_t r = std::get<Torus>(geometry).period;
    if (r <= 2 * static_cast<std::int64_t>(range)) {
      throw LatticeError("torus period r must exceed 2L (r=" + std::to_string(r) +
                         ", L=" + std::to_string(range) + ")");
    }
  }
}

Edge::Edge(const Point& x, const Point& y) {
  if (x.dim() != y.dim()) throw LatticeError("edge endpoints have different dimensions");
  if (x == y) throw LatticeError("edge endpoints must be distinct");
  if (x < y) {
    lo_ = x;
    hi_ = y;
  } else {
    lo_ = y;
    hi_ = x;
  }
}

std::string Edge::to_string() const { return "{" + lo_.to_string() + "," + hi_.to_string() + "}"; }

Point project_to_torus(const Point& x, std::int64_t r) {
  if (r <= 2) throw LatticeError("torus period must exceed 2");
  const std::int64_t low = r / 2;
  Point y = x;
  for (int i = 0; i < x.dim(); ++i) y[i] = floor_mod(x[i] + low, r) - low;
  return y;
}

Point canonical_point(const Point& x, const ModelSpec& model) {
  if (x.dim() != model.dimension) throw LatticeError("point dimension does not match model");
  return model.is_torus() ? project_to_torus(x, model.period()) : x;
}

std::vector<Point> neighbor_offsets(int dim, int range) {
  check_dim(dim);
  if (range < 1) throw LatticeError("range must be positive");
  std::vector<Point> out;
  Point v(dim);
  // Depth-first over coordinates with remaining l1 budget; coordinates ascend so output is lexicographic.
  auto rec = [&](auto&& self, int axis, std::int64_t budget) -> void {
    if (axis == dim) {
      if (budget != range) out.push_back(v);
      return;
    }
    for (std::int64_t c = -budget; c <= budget; ++c) {
      v[axis] = c;
      self(self, axis + 1, budget - (c < 0 ? -c : c));
    }
    v[axis] = 0;
  };
  rec(rec, 0, range);
  return out;
}

std::vector<Edge> incident_edges(const Point& x, const ModelSpec& model) {
  model.validate();
  if (x.dim() != model.dimension) throw LatticeError("point dimension does not match model");
  const Neighborhood nb(model);
  const Point cx = canonical_point(x, model);
  std::vector<Edge> out;
  out.reserve(nb.offsets().size());
  for (std::size_t i = 0; i < nb.offsets().size(); ++i) out.emplace_back(cx, nb.neighbor(cx, i));
  return out;
}

Neighborhood::Neighborhood(const ModelSpec& model)
    : model_(model), offsets_(neighbor_offsets(model.dimension, model.range)) {
  model_.validate();
}

Point Neighborhood::neighbor(const Point& x, std::size_t i) const {
  Point y = x + offsets_[i];
  if (model_.is_torus()) {
    const std::int64_t r = std::get<Torus>(model_.geometry).period;
    const std::int64_t low = r / 2;
    // Neighbours leave the window by at most L < r/2, so one correction suffices.
    for (int a = 0; a < y.dim(); ++a) {
      if (y[a] < -low) y[a] += r;
      else if (y[a] >= r - low) y[a] -= r;
    }
  }
  return y;
}

bool Region::contains(const Point& x) const {
  return std::visit(
      [&](const auto& k) -> bool {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, All>) {
          return true;
        } else if constexpr (std::is_same_v<K, Box>) {
          return norms(x).linf <= k.radius;
        } else if constexpr (std::is_same_v<K, OutsideBox>) {
          return norms(x).linf >= k.radius;
        } else if constexpr (std::is_same_v<K, Halfspace>) {
          return k.side == Side::AtLeast ? x[k.axis] >= k.threshold : x[k.axis] < k.threshold;
        } else if constexpr (std::is_same_v<K, Slab>) {
          return x[k.axis] >= k.lo && x[k.axis] <= k.hi;
        } else if constexpr (std::is_same_v<K, Rect>) {
          for (int i = 0; i < x.dim(); ++i) {
            if (x[i] < k.lo[i] || x[i] > k.hi[i]) return false;
          }
          return true;
        } else if constexpr (std::is_same_v<K, Single>) {
          return x == k.point;
        } else {
          return k.predicate(x);
        }
      },
      kind_);
}

}  // namespace perclab

std::size_t std::hash<perclab::Point>::operator()(const perclab::Point& p) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(p.dim());
  for (auto c : p.coords()) {
    h ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

std::size_t std::hash<perclab::Edge>::operator()(const perclab::Edge& e) const noexcept {
  const std::hash<perclab::Point> hp;
  return hp(e.lo()) * 31u + hp(e.hi());
}
