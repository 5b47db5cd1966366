#include "perclab/osss.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <random>
#include <unordered_map>

namespace perclab::osss {

namespace {

int checked_size(const ProductMeasure& mu) {
  mu.validate();
  return mu.size();
}

template <typename Fn>
void for_each_config(const ProductMeasure& mu, Fn&& fn) {
  const int n = checked_size(mu);
  const Bits total = n == 32 ? ~Bits{0} : (Bits{1} << n);
  for (Bits w = 0; w < total; ++w) {
    const double wt = mu.weight(w);
    if (wt > 0.0) fn(w, wt);
  }
}

std::map<double, double> value_law(const BoolFn& f, const ProductMeasure& mu) {
  std::map<double, double> law;
  for_each_config(mu, [&](Bits w, double wt) { law[f(w)] += wt; });
  return law;
}

std::uint64_t mix(std::uint64_t h) {
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

}  // namespace

DecisionTree::DecisionTree(int first_query, Successor successor) : first_(first_query), next_(std::move(successor)) {
  if (first_query < 0) throw OsssError("decision tree query index must be non-negative");
}

DecisionTree DecisionTree::single(int e) {
  return DecisionTree(e, [](std::span<const Observation>) { return std::optional<int>(); });
}

DecisionTree DecisionTree::fixed(std::vector<int> order) {
  if (order.empty()) throw OsssError("fixed decision tree needs at least one query");
  const int first = order.front();
  return DecisionTree(first, [order = std::move(order)](std::span<const Observation> h) -> std::optional<int> {
    if (h.size() < order.size()) return order[h.size()];
    return std::nullopt;
  });
}

std::vector<int> DecisionTree::run(Bits w, int n) const {
  std::vector<int> seq;
  std::vector<Observation> history;
  Bits seen = 0;
  std::optional<int> q = first_;
  while (q) {
    const int e = *q;
    if (e < 0 || e >= n) throw OsssError("decision tree queried index " + std::to_string(e) + " outside [0, n)");
    if (seen >> e & 1u) throw OsssError("decision tree queried index " + std::to_string(e) + " twice");
    seen |= Bits{1} << e;
    seq.push_back(e);
    history.push_back({e, (w >> e & 1u) != 0});
    q = next_ ? next_(history) : std::nullopt;
  }
  return seq;
}

Bits DecisionForest::queried(Bits w, int n) const {
  Bits mask = 0;
  for (const auto& t : trees) {
    for (int e : t.run(w, n)) mask |= Bits{1} << e;
  }
  return mask;
}

ProductMeasure ProductMeasure::uniform(int n, double p) {
  ProductMeasure mu{std::vector<double>(static_cast<std::size_t>(std::max(n, 0)), p)};
  mu.validate();
  return mu;
}

ProductMeasure ProductMeasure::two_layer(int edges, double p, double h) {
  if (!(h >= 0.0)) throw OsssError("ghost parameter h must be non-negative");
  ProductMeasure mu;
  mu.params.assign(static_cast<std::size_t>(edges), p);
  mu.params.resize(2 * static_cast<std::size_t>(edges), -std::expm1(-h));
  mu.validate();
  return mu;
}

double ProductMeasure::weight(Bits w) const {
  double out = 1.0;
  for (std::size_t e = 0; e < params.size(); ++e) out *= (w >> e & 1u) ? params[e] : 1.0 - params[e];
  return out;
}

void ProductMeasure::validate() const {
  if (params.empty()) throw OsssError("product measure needs at least one index");
  if (params.size() > static_cast<std::size_t>(kMaxIndices)) {
    throw OsssError("enumeration bound is " + std::to_string(kMaxIndices) + " indices, got " +
                    std::to_string(params.size()));
  }
  for (double q : params) {
    if (!(q >= 0.0 && q <= 1.0)) throw OsssError("product measure parameter outside [0,1]");
  }
}

std::vector<double> revealment(const DecisionForest& forest, const ProductMeasure& mu) {
  const int n = checked_size(mu);
  std::vector<double> delta(n, 0.0);
  for_each_config(mu, [&](Bits w, double wt) {
    const Bits q = forest.queried(w, n);
    for (int e = 0; e < n; ++e) {
      if (q >> e & 1u) delta[e] += wt;
    }
  });
  return delta;
}

std::vector<double> revealment_mc(const DecisionForest& forest, const ProductMeasure& mu, std::uint64_t samples,
                                  std::uint64_t seed) {
  const int n = checked_size(mu);
  if (samples == 0) throw OsssError("revealment_mc needs at least one sample");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint64_t> hits(n, 0);
  for (std::uint64_t s = 0; s < samples; ++s) {
    Bits w = 0;
    for (int e = 0; e < n; ++e) {
      if (u(rng) < mu.params[e]) w |= Bits{1} << e;
    }
    const Bits q = forest.queried(w, n);
    for (int e = 0; e < n; ++e) hits[e] += q >> e & 1u;
  }
  std::vector<double> out(n);
  for (int e = 0; e < n; ++e) out[e] = static_cast<double>(hits[e]) / static_cast<double>(samples);
  return out;
}

double expectation(const BoolFn& f, const ProductMeasure& mu) {
  long double s = 0.0L;
  for_each_config(mu, [&](Bits w, double wt) { s += static_cast<long double>(wt) * f(w); });
  return static_cast<double>(s);
}

double covariance(const BoolFn& f, const BoolFn& g, const ProductMeasure& mu) {
  long double sf = 0.0L, sg = 0.0L, sfg = 0.0L;
  for_each_config(mu, [&](Bits w, double wt) {
    const long double a = f(w), b = g(w);
    sf += wt * a;
    sg += wt * b;
    sfg += wt * a * b;
  });
  return static_cast<double>(sfg - sf * sg);
}

double covr(const BoolFn& f, const BoolFn& g, const ProductMeasure& mu) {
  const auto lf = value_law(f, mu), lg = value_law(g, mu);
  long double indep = 0.0L;
  for (const auto& [a, pa] : lf) {
    for (const auto& [b, pb] : lg) indep += static_cast<long double>(pa) * pb * std::fabs(a - b);
  }
  long double joint = 0.0L;
  for_each_config(mu, [&](Bits w, double wt) { joint += static_cast<long double>(wt) * std::fabs(f(w) - g(w)); });
  return static_cast<double>(indep - joint);
}

std::optional<Bits> computes_witness(const DecisionForest& forest, const BoolFn& g, const ProductMeasure& mu) {
  const int n = checked_size(mu);
  std::unordered_map<std::uint64_t, double> seen;
  std::optional<Bits> witness;
  for_each_config(mu, [&](Bits w, double) {
    if (witness) return;
    const Bits q = forest.queried(w, n);
    const std::uint64_t key = (std::uint64_t{q} << 32) | (w & q);
    const double v = g(w);
    auto [it, fresh] = seen.emplace(key, v);
    if (!fresh && std::fabs(it->second - v) > 1e-12) witness = w;
  });
  return witness;
}

OsssResult verify_osss(const BoolFn& f, const BoolFn& g, const DecisionForest& forest, const ProductMeasure& mu) {
  if (auto w = computes_witness(forest, g, mu)) {
    throw OsssError("forest does not compute g (witness configuration " + std::to_string(*w) + ")");
  }
  const int n = mu.size();
  const auto delta = revealment(forest, mu);
  long double ef = 0.0L;
  std::vector<long double> ef_open(n, 0.0L);
  for_each_config(mu, [&](Bits w, double wt) {
    const long double v = static_cast<long double>(wt) * f(w);
    ef += v;
    for (int e = 0; e < n; ++e) {
      if (w >> e & 1u) ef_open[e] += v;
    }
  });
  OsssResult out;
  long double lhs = 0.0L;
  for (int e = 0; e < n; ++e) lhs += delta[e] * (ef_open[e] - ef * mu.params[e]);
  out.lhs = static_cast<double>(lhs);
  out.rhs = 0.5 * std::fabs(covr(f, g, mu));
  out.holds = out.lhs >= out.rhs - 1e-12;
  return out;
}

PioneerGhostInstance pioneer_ghost_instance(const FiniteGraph& graph, const Point& x, std::int64_t k, double p,
                                            double h) {
  const int m = static_cast<int>(graph.edge_count());
  if (2 * m > kMaxIndices) {
    throw OsssError("pioneer/ghost instance needs 2m <= " + std::to_string(kMaxIndices) + " indices, got m = " +
                    std::to_string(m));
  }
  if (!graph.embedding()) throw OsssError("pioneer/ghost instance needs a lattice embedding");
  const int ix = graph.vertex_index(x);
  if (ix < 0) throw OsssError("x is not a vertex of the graph");

  PioneerGhostInstance out;
  out.mu = ProductMeasure::two_layer(m, p, h);
  const Bits perc_mask = (Bits{1} << m) - 1;
  const FiniteGraph* gp = &graph;

  out.f = [gp, x, k, perc_mask](Bits w) {
    return static_cast<std::int64_t>(brute_force_pioneers(*gp, w & perc_mask, x).size()) >= k ? 1.0 : 0.0;
  };
  out.g = [gp, x, m, perc_mask](Bits w) {
    for (std::size_t i : brute_force_pioneers(*gp, w & perc_mask, x)) {
      if (w >> (m + static_cast<int>(i)) & 1u) return 1.0;
    }
    return 0.0;
  };

  struct EdgeEnds {
    int a, b;
  };
  std::vector<EdgeEnds> ends;
  for (const auto& e : graph.edges()) ends.push_back({graph.vertex_index(e.lo()), graph.vertex_index(e.hi())});
  std::vector<Point> verts = graph.vertices();

  for (int i = 0; i < m; ++i) {
    const Edge& e = graph.edges()[i];
    if (e.lo()[0] == e.hi()[0]) continue;
    const Point& y = e.lo()[0] < e.hi()[0] ? e.lo() : e.hi();
    const std::int64_t z1 = e.other(y)[0];
    const int iy = graph.vertex_index(y);
    // ghost(e), then w(e), then explore the cluster of y in {v_1 < z_1} until x is found.
    auto successor = [i, m, iy, ix, z1, ends, verts](std::span<const Observation> hist) -> std::optional<int> {
      if (!hist.back().value && hist.size() <= 2) return std::nullopt;
      if (hist.size() == 1) return i;
      std::vector<char> found(verts.size(), 0), asked(ends.size(), 0);
      found[iy] = 1;
      asked[i] = 1;
      for (std::size_t s = 2; s < hist.size(); ++s) {
        const int j = hist[s].index;
        asked[j] = 1;
        if (hist[s].value) found[ends[j].a] = found[ends[j].b] = 1;
      }
      if (found[ix]) return std::nullopt;
      for (int j = 0; j < m; ++j) {
        if (asked[j]) continue;
        const auto [a, b] = ends[j];
        if (verts[a][0] >= z1 || verts[b][0] >= z1) continue;
        if (found[a] != found[b]) return j;
      }
      return std::nullopt;
    };
    out.forest.trees.emplace_back(m + i, successor);
  }
  if (out.forest.trees.empty()) throw OsssError("graph has no horizontal edges");
  return out;
}

RandomInstance random_instance(std::uint64_t seed, int max_indices) {
  if (max_indices < 2 || max_indices > kMaxIndices) throw OsssError("max_indices must lie in [2, 20]");
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform01 = [&] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };

  RandomInstance out;
  const int measure_kind = uniform_int(0, 2);
  int n = 0;
  if (measure_kind == 2) {
    const int edges = uniform_int(1, max_indices / 2);
    n = 2 * edges;
    out.mu = ProductMeasure::two_layer(edges, uniform01(), 3.0 * uniform01());
    out.kind = "two_layer";
  } else if (measure_kind == 1) {
    n = uniform_int(1, max_indices);
    for (int e = 0; e < n; ++e) out.mu.params.push_back(uniform01());
    out.kind = "product";
  } else {
    n = uniform_int(1, max_indices);
    out.mu = ProductMeasure::uniform(n, uniform01());
    out.kind = "uniform";
  }

  // Increasing functions as unions of up-sets generated by random minimal masks.
  auto random_upset = [&] {
    std::vector<Bits> gens(uniform_int(1, 4));
    for (auto& gm : gens) {
      gm = 0;
      const int size = uniform_int(1, std::min(n, 3));
      for (int s = 0; s < size; ++s) gm |= Bits{1} << uniform_int(0, n - 1);
    }
    return gens;
  };
  auto upset_fn = [](std::vector<Bits> gens) {
    return [gens](Bits w) {
      for (Bits gm : gens) {
        if ((w & gm) == gm) return 1.0;
      }
      return 0.0;
    };
  };
  if (uniform_int(0, 1) == 0) {
    out.f = upset_fn(random_upset());
  } else {
    auto a = upset_fn(random_upset()), b = upset_fn(random_upset());
    const double wa = uniform01(), wb = uniform01();
    out.f = [a, b, wa, wb](Bits w) { return wa * a(w) + wb * b(w); };
    out.kind += "+real_f";
  }
  const auto g_gens = random_upset();
  out.g = upset_fn(g_gens);

  // Adaptive tree querying pseudo-randomly chosen indices until g is determined.
  const Bits all = (Bits{1} << n) - 1;
  auto determined = [g_gens, all](Bits known_mask, Bits known_vals) {
    const Bits free = all & ~known_mask;
    bool any0 = false, any1 = false;
    for (Bits sub = free;; sub = (sub - 1) & free) {
      const Bits w = known_vals | sub;
      bool v = false;
      for (Bits gm : g_gens) v = v || (w & gm) == gm;
      (v ? any1 : any0) = true;
      if (any0 && any1) return false;
      if (sub == 0) break;
    }
    return true;
  };
  const std::uint64_t salt = rng();
  auto pick = [salt, n](std::span<const Observation> hist, Bits known_mask) {
    std::uint64_t hsh = salt;
    for (const auto& o : hist) hsh = mix(hsh ^ (static_cast<std::uint64_t>(o.index) << 1 | o.value));
    std::vector<int> free;
    for (int e = 0; e < n; ++e) {
      if (!(known_mask >> e & 1u)) free.push_back(e);
    }
    return free[hsh % free.size()];
  };
  const int first = pick({}, 0);
  out.forest.trees.emplace_back(first, [determined, pick](std::span<const Observation> hist) -> std::optional<int> {
    Bits mask = 0, vals = 0;
    for (const auto& o : hist) {
      mask |= Bits{1} << o.index;
      if (o.value) vals |= Bits{1} << o.index;
    }
    if (determined(mask, vals)) return std::nullopt;
    return pick(hist, mask);
  });
  const int extra = uniform_int(0, 2);
  for (int t = 0; t < extra; ++t) {
    std::vector<int> order(n);
    for (int e = 0; e < n; ++e) order[e] = e;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(uniform_int(1, n));
    out.forest.trees.push_back(DecisionTree::fixed(std::move(order)));
  }
  if (extra > 0) out.kind += "+extra_trees";
  return out;
}

}  // namespace perclab::osss
