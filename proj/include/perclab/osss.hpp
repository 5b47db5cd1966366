#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perclab/oracle.hpp"

namespace perclab::osss {

struct OsssError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Configurations on a finite index set E = {0, ..., n-1}; bit e is omega(e).
using Bits = std::uint32_t;
inline constexpr int kMaxIndices = 20;

struct Observation {
  int index;
  bool value;
};

// A decision tree: fixed first query, then a pure successor rule on the observed history.
// The rule returns std::nullopt to halt.
class DecisionTree {
 public:
  using Successor = std::function<std::optional<int>(std::span<const Observation>)>;

  DecisionTree(int first_query, Successor successor);

  // Single query of `e`, then halt.
  static DecisionTree single(int e);
  // Queries `order` in sequence regardless of answers.
  static DecisionTree fixed(std::vector<int> order);

  // Query sequence on configuration w. Throws if an index is queried twice or out of range.
  std::vector<int> run(Bits w, int n) const;

 private:
  int first_;
  Successor next_;
};

struct DecisionForest {
  std::vector<DecisionTree> trees;

  // Union of queried indices on w (bit mask).
  Bits queried(Bits w, int n) const;
};

// Independent Bernoulli measure with one parameter per index.
struct ProductMeasure {
  std::vector<double> params;

  static ProductMeasure uniform(int n, double p);
  // Two layers over `edges` indices: [0, edges) percolation with parameter p, [edges, 2 edges)
  // ghost field with parameter 1 - exp(-h).
  static ProductMeasure two_layer(int edges, double p, double h);

  int size() const { return static_cast<int>(params.size()); }
  double weight(Bits w) const;
  void validate() const;
};

using BoolFn = std::function<double(Bits)>;

// delta_e(F, mu) by enumeration.
std::vector<double> revealment(const DecisionForest& forest, const ProductMeasure& mu);

// Monte Carlo revealment (demonstration only): frequency over `samples` draws.
std::vector<double> revealment_mc(const DecisionForest& forest, const ProductMeasure& mu, std::uint64_t samples,
                                  std::uint64_t seed);

double expectation(const BoolFn& f, const ProductMeasure& mu);
double covariance(const BoolFn& f, const BoolFn& g, const ProductMeasure& mu);
// (mu x mu)|f(w1) - g(w2)| - mu|f(w) - g(w)|
double covr(const BoolFn& f, const BoolFn& g, const ProductMeasure& mu);

// Returns a configuration witnessing that the forest does not compute g (g differs between two
// positive-probability configurations that agree on every queried index), or nullopt.
std::optional<Bits> computes_witness(const DecisionForest& forest, const BoolFn& g, const ProductMeasure& mu);

struct OsssResult {
  double lhs = 0.0;  // sum_e delta_e Cov[f, w(e)]
  double rhs = 0.0;  // |CoVr[f, g]| / 2
  bool holds = false;
};

OsssResult verify_osss(const BoolFn& f, const BoolFn& g, const DecisionForest& forest, const ProductMeasure& mu);

// Worked example on a finite lattice graph: f = 1(|P_x| >= k), g = 1(some x-pioneer is green),
// forest {T^e : e horizontal}. Indices: edge i is percolation index i, its ghost bit is m + i.
struct PioneerGhostInstance {
  BoolFn f;
  BoolFn g;
  DecisionForest forest;
  ProductMeasure mu;
};
PioneerGhostInstance pioneer_ghost_instance(const FiniteGraph& graph, const Point& x, std::int64_t k, double p, double h);

}  // namespace perclab::osss

namespace perclab::osss {

// Random verification instance: monotone f and g, a forest that provably computes g, and a
// product measure (sometimes a percolation/ghost two-layer measure).
struct RandomInstance {
  BoolFn f;
  BoolFn g;
  DecisionForest forest;
  ProductMeasure mu;
  std::string kind;
};
RandomInstance random_instance(std::uint64_t seed, int max_indices = 8);

}  // namespace perclab::osss
