#include "perclab/explore.hpp"

#include <algorithm>

namespace perclab {

void Caps::validate() const {
  if (max_volume <= 0 || max_radius <= 0 || max_intrinsic <= 0) {
    throw ExploreError("caps must be positive");
  }
}

const char* to_string(Truncation t) {
  switch (t) {
    case Truncation::None: return "none";
    case Truncation::Volume: return "volume";
    case Truncation::Radius: return "radius";
    case Truncation::Intrinsic: return "intrinsic";
  }
  return "?";
}

std::int64_t Cluster::max_intrinsic() const {
  return order.empty() ? 0 : distance.at(order.back());
}

std::int64_t Cluster::max_radius() const {
  std::int64_t r = 0;
  for (const auto& v : order) r = std::max(r, norms(v - source).linf);
  return r;
}

namespace {

std::int64_t radius_from(const Point& v, const Point& source, const ModelSpec& model) {
  Point d = v - source;
  if (model.is_torus()) d = project_to_torus(d, model.period());
  return norms(d).linf;
}

// Core BFS. `on_vertex(v)` is called for every vertex added (including the source) and may
// return true to stop the search early.
template <typename OnVertex>
void bfs(const ModelSpec& model, const EdgeField& field, const Region& region, const Caps& caps,
         Cluster& c, OnVertex&& on_vertex) {
  caps.validate();
  const Neighborhood nb(model);
  const double p = model.p;
  const bool unrestricted = region.is_all();
  auto flag = [&c](Truncation why) {
    if (!c.truncated) {
      c.truncated = true;
      c.truncation_reason = why;
    }
  };

  c.order.push_back(c.source);
  c.distance.emplace(c.source, 0);
  if (on_vertex(c.source)) return;

  for (std::size_t head = 0; head < c.order.size(); ++head) {
    const Point v = c.order[head];
    const std::int64_t dv = c.distance.at(v);
    const bool at_cap = dv >= caps.max_intrinsic;
    for (std::size_t i = 0; i < nb.offsets().size(); ++i) {
      const Point w = nb.neighbor(v, i);
      if (!unrestricted && !region.contains(w)) continue;
      const auto it = c.distance.find(w);
      if (it != c.distance.end()) {
        const std::int64_t dw = it->second;
        // Each internal edge is tested from one side only.
        if (dw < dv || (dw == dv && w < v)) continue;
        const Edge e(v, w);
        if (field.open_unchecked(e, p)) c.open_edges.push_back(e);
        continue;
      }
      const Edge e(v, w);
      if (!field.open_unchecked(e, p)) continue;
      if (at_cap) {
        flag(Truncation::Intrinsic);
        continue;
      }
      if (radius_from(w, c.source, model) > caps.max_radius) {
        flag(Truncation::Radius);
        continue;
      }
      if (static_cast<std::int64_t>(c.order.size()) >= caps.max_volume) {
        flag(Truncation::Volume);
        return;
      }
      c.open_edges.push_back(e);
      c.order.push_back(w);
      c.distance.emplace(w, dv + 1);
      if (on_vertex(w)) return;
    }
  }
}

void check_source(const ModelSpec& model, const Point& source, const Region& region) {
  model.validate();
  if (source.dim() != model.dimension) throw ExploreError("source dimension does not match model");
  if (!region.contains(source)) throw ExploreError("source " + source.to_string() + " lies outside the region");
  if (!(model.p >= 0.0 && model.p <= 1.0)) throw ExploreError("p must lie in [0,1]");
}

}  // namespace

Cluster explore_cluster(const ModelSpec& model, const EdgeField& field, const Point& source,
                        const Region& region, const Caps& caps) {
  check_source(model, source, region);
  Cluster c;
  c.source = canonical_point(source, model);
  bfs(model, field, region, caps, c, [](const Point&) { return false; });
  return c;
}

ReachResult reaches(const ModelSpec& model, const EdgeField& field, const Point& source,
                    const Region& target, const Region& within, const Caps& caps) {
  check_source(model, source, within);
  Cluster c;
  c.source = canonical_point(source, model);
  ReachResult out;
  bfs(model, field, within, caps, c, [&](const Point& v) {
    if (target.contains(v)) out.reached = true;
    return out.reached;
  });
  if (!out.reached) {
    out.truncated = c.truncated;
    out.truncation_reason = c.truncation_reason;
  }
  return out;
}

}  // namespace perclab
