#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "perclab/explore.hpp"
#include "perclab/lattice.hpp"
#include "perclab/randomness.hpp"

namespace perclab {

// x-pioneers of one configuration: an open edge {y,z} with y_1 < z_1, x_1 < z_1 and x joined to y
// by an open path inside {w : w_1 < z_1}. counts[n] = |P_x(n)|, the pioneers with y_1 < x_1+n <= z_1.
struct PioneerRecord {
  Point x;
  std::map<std::int64_t, std::int64_t> counts;
  std::int64_t total = 0;
  std::vector<Edge> edges;  // every pioneer, sorted
  bool truncated = false;
  // counts[n] is exact for every n <= exact_through (everything is exact when not truncated).
  std::int64_t exact_through = std::numeric_limits<std::int64_t>::max();

  std::int64_t count(std::int64_t n) const {
    auto it = counts.find(n);
    return it == counts.end() ? 0 : it->second;
  }
};

// Plane sweep: R_k, the set joined to x inside {w_1 < k}, is grown one plane at a time; every
// open edge from R_k into plane k is a pioneer. Planes beyond x_1 + caps.max_radius are not
// examined (truncated = true when the cluster would continue past them). `region` restricts
// the whole configuration (Region::all() for Z^d).
PioneerRecord pioneer_profile(const ModelSpec& model, const EdgeField& field, const Point& x,
                              const Caps& caps, const Region& region = Region::all());

}  // namespace perclab
