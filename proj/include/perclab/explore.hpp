#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "perclab/lattice.hpp"
#include "perclab/randomness.hpp"

namespace perclab {

struct Caps {
  std::int64_t max_volume = 4'000'000;
  std::int64_t max_radius = std::numeric_limits<std::int64_t>::max() / 4;  // l_inf from source
  std::int64_t max_intrinsic = std::numeric_limits<std::int64_t>::max() / 4;

  static constexpr std::int64_t kUnbounded = std::numeric_limits<std::int64_t>::max() / 4;
  void validate() const;
};

enum class Truncation { None, Volume, Radius, Intrinsic };

const char* to_string(Truncation t);

struct Cluster {
  Point source;
  // Vertices in BFS order; distance[v] is the intrinsic (open-path graph) distance from source.
  std::vector<Point> order;
  absl::flat_hash_map<Point, std::int64_t> distance;
  std::vector<Edge> open_edges;
  bool truncated = false;
  Truncation truncation_reason = Truncation::None;

  std::size_t size() const { return order.size(); }
  bool contains(const Point& v) const { return distance.contains(v); }
  std::int64_t max_intrinsic() const;
  std::int64_t max_radius() const;  // max l_inf distance from source
};

struct ExploreError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// BFS over open edges with both endpoints inside `region`. Uses model.p as the parameter.
Cluster explore_cluster(const ModelSpec& model, const EdgeField& field, const Point& source,
                        const Region& region, const Caps& caps);

struct ReachResult {
  bool reached = false;
  bool truncated = false;
  Truncation truncation_reason = Truncation::None;
};

// True iff the open cluster of source inside `within` meets `target` before a cap binds.
ReachResult reaches(const ModelSpec& model, const EdgeField& field, const Point& source,
                    const Region& target, const Region& within, const Caps& caps);

}  // namespace perclab
