#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "perclab/lattice.hpp"

namespace perclab {

struct OracleError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A configuration of a finite graph: bit i is the state of edges[i] (1 = open).
using Config = std::uint32_t;

// Finite graph with at most kMaxEdges edges. When built from a lattice region it keeps the
// model so that halfspace (pioneer) semantics are available.
class FiniteGraph {
 public:
  static constexpr std::size_t kMaxEdges = 25;

  FiniteGraph(std::vector<Point> vertices, std::vector<Edge> edges, std::optional<ModelSpec> embedding = std::nullopt);

  // All vertices of `model` (Z^d) inside the rectangle [lo, hi], with every model edge between them.
  static FiniteGraph from_rect(const ModelSpec& model, const Point& lo, const Point& hi);

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::optional<ModelSpec>& embedding() const { return embedding_; }
  std::size_t edge_count() const { return edges_.size(); }
  int vertex_index(const Point& v) const;  // -1 if absent
  // Region containing exactly this graph's vertices.
  Region region() const;

  // Connectivity in the open subgraph, restricted to vertices satisfying `allowed`.
  bool connected(Config w, int a, int b, const std::function<bool(const Point&)>& allowed = {}) const;
  std::vector<int> component(Config w, int a) const;

 private:
  std::vector<Point> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::pair<int, int>> ends_;
  std::optional<ModelSpec> embedding_;
};

struct EventSpec {
  std::function<bool(Config)> predicate;
  bool monotone = false;  // declared increasing
  std::string name;
};

EventSpec connection_event(const FiniteGraph& g, const Point& a, const Point& b);
EventSpec edge_open_event(std::size_t edge_index);

// Counts c_k of satisfying configurations with k open edges; P_p(A) = sum_k c_k p^k (1-p)^(m-k).
std::vector<std::uint64_t> satisfying_counts(const FiniteGraph& g, const EventSpec& ev);
double polynomial_value(const std::vector<std::uint64_t>& counts, double p);
// The same polynomial in the monomial basis: P_p(A) = sum_j a_j p^j.
std::vector<std::int64_t> monomial_coefficients(const std::vector<std::uint64_t>& counts);

double exact_probability(const FiniteGraph& g, double p, const EventSpec& ev);

// Exact expectation of a real function of the configuration.
double exact_expectation(const FiniteGraph& g, double p, const std::function<double(Config)>& f);

struct RussoCheck {
  double finite_difference = 0.0;  // centred difference of P_p(A)
  double covariance_formula = 0.0; // (p(1-p))^-1 sum_e Cov[w(e), 1_A]
};
RussoCheck russo_check(const FiniteGraph& g, double p, const EventSpec& ev, double h = 1e-5);

// Pioneer edges of x in one configuration by direct evaluation of the definition.
std::vector<std::size_t> brute_force_pioneers(const FiniteGraph& g, Config w, const Point& x);
// Distribution of |P_x| under P_p.
std::map<std::int64_t, double> exact_pioneer_law(const FiniteGraph& g, const Point& x, double p);

}  // namespace perclab
