#include "perclab/randomness.hpp"

#include <cmath>

namespace perclab {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(prod >> 32);
  lo = static_cast<std::uint32_t>(prod);
}

// murmur3 finaliser
inline std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

inline double to_unit(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(a) << 32 | b) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

std::array<std::uint32_t, 4> counter_for(std::uint64_t digest, std::uint64_t stream, std::uint32_t tag) {
  return {static_cast<std::uint32_t>(digest), static_cast<std::uint32_t>(digest >> 32),
          static_cast<std::uint32_t>(stream),
          static_cast<std::uint32_t>(stream >> 32) ^ tag};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t edge_digest(const Edge& e) {
  std::uint64_t h = 0x243f6a8885a308d3ULL ^ static_cast<std::uint64_t>(e.lo().dim());
  for (auto c : e.lo().coords()) h = fmix64(h ^ static_cast<std::uint64_t>(c)) + 0x9e3779b97f4a7c15ULL;
  // The offset hi - lo is small; folding it separately keeps lattice translates well separated.
  for (int i = 0; i < e.lo().dim(); ++i) {
    h = fmix64(h ^ static_cast<std::uint64_t>(e.hi()[i] - e.lo()[i]) ^ 0x5851f42d4c957f2dULL);
  }
  return h;
}

EdgeField::EdgeField(std::uint64_t master_seed, std::uint64_t stream_id, Domain domain)
    : seed_(master_seed), stream_(stream_id), tag_(static_cast<std::uint32_t>(domain)) {
  const std::uint64_t k = fmix64(master_seed ^ 0x6a09e667f3bcc909ULL);
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

double EdgeField::uniform(const Edge& e) const {
  const auto out = philox4x32(counter_for(edge_digest(e), stream_, tag_), key_);
  return to_unit(out[0], out[1]);
}

bool EdgeField::is_open(const Edge& e, double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
  return uniform(e) < p;
}

GhostField::GhostField(std::uint64_t master_seed, std::uint64_t stream_id, double intensity)
    : field_(master_seed, stream_id, Domain::Ghost), h_(intensity) {
  if (!(intensity >= 0.0)) throw std::invalid_argument("ghost intensity must be nonnegative");
}

double GhostField::green_probability() const { return -std::expm1(-h_); }

bool GhostField::is_green(const Edge& e) const { return field_.uniform(e) < green_probability(); }

double stream_uniform(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t counter) {
  const std::uint64_t k = fmix64(master_seed ^ 0xbb67ae8584caa73bULL);
  const auto out = philox4x32(counter_for(counter, stream_id, static_cast<std::uint32_t>(Domain::Aux)),
                              {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)});
  return to_unit(out[0], out[1]);
}

}  // namespace perclab
