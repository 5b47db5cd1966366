#pragma once

#include <array>
#include <cstdint>

#include "perclab/lattice.hpp"

namespace perclab {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// 64-bit digest of the canonical edge key; the counter input of the edge PRF.
std::uint64_t edge_digest(const Edge& e);

enum class Domain : std::uint32_t { Percolation = 0x70657263u, Ghost = 0x67686f73u, Aux = 0x61757821u };

// Static random environment: one uniform per edge, determined by (master seed, stream, edge).
class EdgeField {
 public:
  EdgeField(std::uint64_t master_seed, std::uint64_t stream_id, Domain domain = Domain::Percolation);

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  // Uniform in [0,1) with 53 random bits.
  double uniform(const Edge& e) const;
  // Open iff uniform(e) < p; throws for p outside [0,1].
  bool is_open(const Edge& e, double p) const;
  // Unchecked variant for hot loops (p already validated).
  bool open_unchecked(const Edge& e, double p) const { return uniform(e) < p; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint32_t, 2> key_;
  std::uint32_t tag_;
};

// Independent marking of edges with probability 1 - exp(-h).
class GhostField {
 public:
  GhostField(std::uint64_t master_seed, std::uint64_t stream_id, double intensity);

  double intensity() const { return h_; }
  double green_probability() const;
  bool is_green(const Edge& e) const;

 private:
  EdgeField field_;
  double h_;
};

// Auxiliary per-replica uniforms keyed by an integer counter (used where no edge is involved).
double stream_uniform(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t counter);

}  // namespace perclab
