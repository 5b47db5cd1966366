#include "perclab/pioneers.hpp"

#include <algorithm>

#include <absl/container/flat_hash_set.h>

namespace perclab {

namespace {

class PlaneSweep {
 public:
  PlaneSweep(const ModelSpec& model, const EdgeField& field, const Region& region, const Caps& caps)
      : nb_(model), field_(field), region_(region), caps_(caps), p_(model.p) {}

  // Adds seeds and everything joined to them inside {w_1 < bound}. Returns false if the volume cap binds.
  bool grow(const std::vector<Point>& seeds, std::int64_t bound) {
    std::vector<Point> stack;
    for (const auto& s : seeds) {
      if (insert(s)) stack.push_back(s);
      if (over_volume()) return false;
    }
    while (!stack.empty()) {
      const Point v = stack.back();
      stack.pop_back();
      for (std::size_t i = 0; i < nb_.offsets().size(); ++i) {
        const Point w = nb_.neighbor(v, i);
        if (w[0] >= bound || members_.contains(w) || !region_.contains(w)) continue;
        if (!field_.open_unchecked(Edge(v, w), p_)) continue;
        insert(w);
        if (over_volume()) return false;
        stack.push_back(w);
      }
    }
    return true;
  }

  const std::vector<Point>& plane(std::int64_t q) const {
    static const std::vector<Point> kEmpty;
    auto it = planes_.find(q);
    return it == planes_.end() ? kEmpty : it->second;
  }

  bool contains(const Point& v) const { return members_.contains(v); }
  const Neighborhood& nb() const { return nb_; }
  bool open(const Edge& e) const { return field_.open_unchecked(e, p_); }
  const Region& region() const { return region_; }

 private:
  bool insert(const Point& v) {
    if (!members_.insert(v).second) return false;
    planes_[v[0]].push_back(v);
    return true;
  }
  bool over_volume() const { return static_cast<std::int64_t>(members_.size()) > caps_.max_volume; }

  Neighborhood nb_;
  const EdgeField& field_;
  const Region& region_;
  Caps caps_;
  double p_;
  absl::flat_hash_set<Point> members_;
  absl::flat_hash_map<std::int64_t, std::vector<Point>> planes_;
};

}  // namespace

PioneerRecord pioneer_profile(const ModelSpec& model, const EdgeField& field, const Point& x,
                              const Caps& caps, const Region& region) {
  model.validate();
  caps.validate();
  if (model.is_torus()) throw ExploreError("pioneers are defined on Z^d only");
  if (x.dim() != model.dimension) throw ExploreError("point dimension does not match model");
  if (!region.contains(x)) throw ExploreError("x lies outside the region");

  PioneerRecord rec;
  rec.x = x;
  PlaneSweep sweep(model, field, region, caps);
  const std::int64_t L = model.range;
  const std::int64_t x1 = x[0];

  auto truncate_at = [&](std::int64_t last_complete_plane) {
    rec.truncated = true;
    rec.exact_through = std::max<std::int64_t>(0, last_complete_plane - x1 - L + 1);
  };
  if (!sweep.grow({x}, x1 + 1)) {
    truncate_at(x1);
    return rec;
  }
  for (std::int64_t k = x1 + 1;; ++k) {
    const bool beyond_cap = k > x1 + caps.max_radius;
    bool crossing = false;
    std::vector<Point> entered;
    for (std::int64_t q = k - L; q < k; ++q) {
      for (const Point& y : sweep.plane(q)) {
        for (std::size_t i = 0; i < sweep.nb().offsets().size(); ++i) {
          if (sweep.nb().offsets()[i][0] < k - q) continue;
          const Point z = sweep.nb().neighbor(y, i);
          if (!sweep.region().contains(z)) continue;
          const Edge e(y, z);
          if (!sweep.open(e)) continue;
          crossing = true;
          if (beyond_cap || z[0] != k) continue;
          rec.edges.push_back(e);
          for (std::int64_t n = std::max<std::int64_t>(y[0] - x1 + 1, 1); n <= k - x1; ++n) ++rec.counts[n];
          if (!sweep.contains(z)) entered.push_back(z);
        }
      }
    }
    if (!crossing) break;
    if (beyond_cap) {
      truncate_at(k - 1);
      break;
    }
    std::sort(entered.begin(), entered.end());
    if (!sweep.grow(entered, k + 1)) {
      truncate_at(k);
      break;
    }
  }
  std::sort(rec.edges.begin(), rec.edges.end());
  rec.total = static_cast<std::int64_t>(rec.edges.size());
  return rec;
}

}  // namespace perclab
