#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace perclab {

// Result of one Monte Carlo estimator. `replicas` counts the uncensored replicas that entered the
// value; censored (truncated) replicas are excluded and counted separately.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t replicas = 0;
  std::int64_t truncated = 0;
  double truncated_fraction = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream_begin = 0;
  std::uint64_t stream_end = 0;  // exclusive

  static constexpr double kUnreliableFraction = 0.01;
  bool unreliable() const { return truncated_fraction > kUnreliableFraction; }
};

// Pairwise (cascade) summation; result depends only on the order of `xs`.
double pairwise_sum(std::span<const double> xs);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

// Sample mean with the iid standard error.
MeanSe mean_iid(std::span<const double> xs);
// Sample mean with batch-means standard error over contiguous batches (falls back to iid
// when there are fewer than two samples per batch).
MeanSe mean_batch(std::span<const double> xs, int batches = 20);
// Fraction of ones with binomial standard error.
MeanSe mean_binomial(std::span<const double> indicators);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  double rms_residual = 0.0;
};

// Weighted least squares y = a + b x (unit weights when `w` is empty).
LineFit fit_line(std::span<const double> x, std::span<const double> y, std::span<const double> w = {});

struct ReplicaRange {
  std::uint64_t begin = 0;
  std::uint64_t count = 0;
};

// Evaluates fn(i) for i in [0, count) on `workers` threads and returns the results indexed by i.
// Workers pull fixed-size chunks from a shared counter; the output order never depends on the
// schedule.
template <typename T, typename Fn>
std::vector<T> map_replicas(std::uint64_t count, int workers, Fn&& fn) {
  std::vector<T> out(count);
  if (workers <= 1 || count < 2) {
    for (std::uint64_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  constexpr std::uint64_t kChunk = 64;
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    try {
      for (;;) {
        const std::uint64_t b = next.fetch_add(kChunk);
        if (b >= count) return;
        const std::uint64_t e = std::min(count, b + kChunk);
        for (std::uint64_t i = b; i < e; ++i) out[i] = fn(i);
      }
    } catch (...) {
      std::lock_guard lk(error_mu);
      if (!error) error = std::current_exception();
      next.store(count);
    }
  };
  std::vector<std::thread> pool;
  const int n = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(workers), count));
  pool.reserve(n);
  for (int t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace perclab
