#include "perclab/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "perclab/stats.hpp"

namespace perclab {

namespace {

constexpr std::uint64_t kChunk = 1u << 14;

struct UnionFind {
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
  std::vector<int> parent;
};

std::vector<long double> weights_by_open_count(std::size_t m, long double p) {
  std::vector<long double> w(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    w[k] = std::pow(p, static_cast<long double>(k)) * std::pow(1.0L - p, static_cast<long double>(m - k));
  }
  return w;
}

// Calls fn(config) for every configuration, chunked across the replica scheduler; per-chunk
// partial results are combined in chunk order.
template <typename T, typename Fn, typename Merge>
T enumerate(std::size_t m, Fn&& fn, Merge&& merge, T init) {
  const std::uint64_t total = std::uint64_t{1} << m;
  const std::uint64_t chunks = (total + kChunk - 1) / kChunk;
  auto parts = map_replicas<T>(chunks, 1, [&](std::uint64_t c) {
    T acc{};
    const std::uint64_t lo = c * kChunk, hi = std::min(total, lo + kChunk);
    for (std::uint64_t w = lo; w < hi; ++w) fn(static_cast<Config>(w), acc);
    return acc;
  });
  for (auto& part : parts) merge(init, part);
  return init;
}

}  // namespace

FiniteGraph::FiniteGraph(std::vector<Point> vertices, std::vector<Edge> edges, std::optional<ModelSpec> embedding)
    : vertices_(std::move(vertices)), edges_(std::move(edges)), embedding_(std::move(embedding)) {
  if (edges_.size() > kMaxEdges) {
    throw OracleError("finite graph has " + std::to_string(edges_.size()) + " edges; enumeration bound is " +
                      std::to_string(kMaxEdges));
  }
  for (const auto& e : edges_) {
    const int a = vertex_index(e.lo()), b = vertex_index(e.hi());
    if (a < 0 || b < 0) throw OracleError("edge " + e.to_string() + " has an endpoint outside the vertex list");
    ends_.emplace_back(a, b);
  }
}

FiniteGraph FiniteGraph::from_rect(const ModelSpec& model, const Point& lo, const Point& hi) {
  if (model.is_torus()) throw OracleError("from_rect builds Z^d restrictions only");
  const Region rect = Region::rect(lo, hi);
  std::vector<Point> verts;
  Point v = lo;
  auto rec = [&](auto&& self, int axis) -> void {
    if (axis == model.dimension) {
      verts.push_back(v);
      return;
    }
    for (std::int64_t c = lo[axis]; c <= hi[axis]; ++c) {
      v[axis] = c;
      self(self, axis + 1);
    }
  };
  rec(rec, 0);
  std::sort(verts.begin(), verts.end());
  std::vector<Edge> edges;
  for (const auto& x : verts) {
    for (const auto& e : incident_edges(x, model)) {
      if (e.lo() == x && rect.contains(e.hi())) edges.push_back(e);
    }
  }
  std::sort(edges.begin(), edges.end());
  return FiniteGraph(std::move(verts), std::move(edges), model);
}

int FiniteGraph::vertex_index(const Point& v) const {
  auto it = std::find(vertices_.begin(), vertices_.end(), v);
  return it == vertices_.end() ? -1 : static_cast<int>(it - vertices_.begin());
}

Region FiniteGraph::region() const {
  auto verts = vertices_;
  return Region::custom([verts](const Point& x) { return std::find(verts.begin(), verts.end(), x) != verts.end(); });
}

bool FiniteGraph::connected(Config w, int a, int b, const std::function<bool(const Point&)>& allowed) const {
  if (allowed && (!allowed(vertices_[a]) || !allowed(vertices_[b]))) return false;
  if (a == b) return true;
  UnionFind uf(vertices_.size());
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (!(w >> i & 1u)) continue;
    const auto [u, v] = ends_[i];
    if (allowed && (!allowed(vertices_[u]) || !allowed(vertices_[v]))) continue;
    uf.unite(u, v);
  }
  return uf.find(a) == uf.find(b);
}

std::vector<int> FiniteGraph::component(Config w, int a) const {
  UnionFind uf(vertices_.size());
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (w >> i & 1u) uf.unite(ends_[i].first, ends_[i].second);
  }
  std::vector<int> out;
  const int root = uf.find(a);
  for (int v = 0; v < static_cast<int>(vertices_.size()); ++v) {
    if (uf.find(v) == root) out.push_back(v);
  }
  return out;
}

EventSpec connection_event(const FiniteGraph& g, const Point& a, const Point& b) {
  const int ia = g.vertex_index(a), ib = g.vertex_index(b);
  if (ia < 0 || ib < 0) throw OracleError("connection_event: vertex not in graph");
  return {[&g, ia, ib](Config w) { return g.connected(w, ia, ib); }, true,
          "connect " + a.to_string() + " " + b.to_string()};
}

EventSpec edge_open_event(std::size_t edge_index) {
  return {[edge_index](Config w) { return (w >> edge_index & 1u) != 0; }, true, "edge " + std::to_string(edge_index) + " open"};
}

std::vector<std::uint64_t> satisfying_counts(const FiniteGraph& g, const EventSpec& ev) {
  const std::size_t m = g.edge_count();
  using Counts = std::vector<std::uint64_t>;
  return enumerate<Counts>(
      m,
      [&](Config w, Counts& acc) {
        if (acc.empty()) acc.assign(m + 1, 0);
        if (ev.predicate(w)) ++acc[std::popcount(w)];
      },
      [m](Counts& into, const Counts& part) {
        if (into.empty()) into.assign(m + 1, 0);
        for (std::size_t k = 0; k < part.size(); ++k) into[k] += part[k];
      },
      Counts(m + 1, 0));
}

double polynomial_value(const std::vector<std::uint64_t>& counts, double p) {
  if (counts.empty()) return 0.0;
  const std::size_t m = counts.size() - 1;
  const auto w = weights_by_open_count(m, p);
  long double s = 0.0L;
  for (std::size_t k = 0; k <= m; ++k) s += static_cast<long double>(counts[k]) * w[k];
  return static_cast<double>(s);
}

std::vector<std::int64_t> monomial_coefficients(const std::vector<std::uint64_t>& counts) {
  const std::size_t m = counts.empty() ? 0 : counts.size() - 1;
  if (m > 16) throw OracleError("monomial expansion is limited to 16 edges");
  std::vector<std::int64_t> a(m + 1, 0);
  for (std::size_t k = 0; k <= m; ++k) {
    // (1-p)^(m-k) = sum_j C(m-k, j) (-1)^j p^j
    std::int64_t binom = 1;
    for (std::size_t j = 0; j <= m - k; ++j) {
      a[k + j] += static_cast<std::int64_t>(counts[k]) * (j % 2 ? -binom : binom);
      binom = binom * static_cast<std::int64_t>(m - k - j) / static_cast<std::int64_t>(j + 1);
    }
  }
  return a;
}

double exact_probability(const FiniteGraph& g, double p, const EventSpec& ev) {
  if (!(p >= 0.0 && p <= 1.0)) throw OracleError("p must lie in [0,1]");
  return polynomial_value(satisfying_counts(g, ev), p);
}

double exact_expectation(const FiniteGraph& g, double p, const std::function<double(Config)>& f) {
  if (!(p >= 0.0 && p <= 1.0)) throw OracleError("p must lie in [0,1]");
  const std::size_t m = g.edge_count();
  const auto w = weights_by_open_count(m, p);
  const long double s = enumerate<long double>(
      m, [&](Config c, long double& acc) { acc += w[std::popcount(c)] * static_cast<long double>(f(c)); },
      [](long double& into, long double part) { into += part; }, 0.0L);
  return static_cast<double>(s);
}

RussoCheck russo_check(const FiniteGraph& g, double p, const EventSpec& ev, double h) {
  if (!(p > 0.0 && p < 1.0)) throw OracleError("russo_check needs 0 < p < 1");
  if (h <= 0 || p - h < 0 || p + h > 1) throw OracleError("finite-difference step leaves [0,1]");
  const auto counts = satisfying_counts(g, ev);
  RussoCheck out;
  auto value = [&](long double q) {
    const auto wq = weights_by_open_count(counts.size() - 1, q);
    long double v = 0.0L;
    for (std::size_t k = 0; k < counts.size(); ++k) v += static_cast<long double>(counts[k]) * wq[k];
    return v;
  };
  const long double hl = h;
  out.finite_difference = static_cast<double>((value(p + hl) - value(p - hl)) / (2 * hl));

  const std::size_t m = g.edge_count();
  const auto w = weights_by_open_count(m, p);
  struct Acc {
    long double prob = 0.0L;
    long double open_and_event = 0.0L;  // sum_e P(w(e) = 1, A)
  };
  const Acc acc = enumerate<Acc>(
      m,
      [&](Config c, Acc& a) {
        if (!ev.predicate(c)) return;
        const int k = std::popcount(c);
        a.prob += w[k];
        a.open_and_event += w[k] * k;
      },
      [](Acc& into, const Acc& part) {
        into.prob += part.prob;
        into.open_and_event += part.open_and_event;
      },
      Acc{});
  const long double cov_sum = acc.open_and_event - static_cast<long double>(m) * p * acc.prob;
  out.covariance_formula = static_cast<double>(cov_sum / (static_cast<long double>(p) * (1.0L - p)));
  return out;
}

std::vector<std::size_t> brute_force_pioneers(const FiniteGraph& g, Config w, const Point& x) {
  const int ix = g.vertex_index(x);
  if (ix < 0) throw OracleError("pioneer base point is not a vertex");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.edge_count(); ++i) {
    if (!(w >> i & 1u)) continue;
    const Edge& e = g.edges()[i];
    if (e.lo()[0] == e.hi()[0]) continue;
    const Point& y = e.lo()[0] < e.hi()[0] ? e.lo() : e.hi();
    const Point& z = e.other(y);
    if (!(x[0] < z[0])) continue;
    const std::int64_t z1 = z[0];
    if (g.connected(w, ix, g.vertex_index(y), [z1](const Point& v) { return v[0] < z1; })) out.push_back(i);
  }
  return out;
}

std::map<std::int64_t, double> exact_pioneer_law(const FiniteGraph& g, const Point& x, double p) {
  if (!g.embedding()) throw OracleError("pioneer law needs a lattice embedding");
  if (!(p >= 0.0 && p <= 1.0)) throw OracleError("p must lie in [0,1]");
  const std::size_t m = g.edge_count();
  const auto w = weights_by_open_count(m, p);
  using Law = std::map<std::int64_t, long double>;
  const Law law = enumerate<Law>(
      m,
      [&](Config c, Law& acc) {
        const long double wt = w[std::popcount(c)];
        if (wt == 0.0L) return;
        acc[static_cast<std::int64_t>(brute_force_pioneers(g, c, x).size())] += wt;
      },
      [](Law& into, const Law& part) {
        for (const auto& [k, v] : part) into[k] += v;
      },
      Law{});
  std::map<std::int64_t, double> out;
  for (const auto& [k, v] : law) out[k] = static_cast<double>(v);
  return out;
}

}  // namespace perclab
