#include "perclab/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace perclab {

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

MeanSe mean_iid(std::span<const double> xs) {
  MeanSe r;
  const auto n = static_cast<double>(xs.size());
  if (xs.empty()) return r;
  r.mean = pairwise_sum(xs) / n;
  if (xs.size() < 2) return r;
  std::vector<double> dev(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) dev[i] = (xs[i] - r.mean) * (xs[i] - r.mean);
  r.se = std::sqrt(pairwise_sum(dev) / (n - 1.0) / n);
  return r;
}

MeanSe mean_batch(std::span<const double> xs, int batches) {
  if (batches < 2 || xs.size() < 2 * static_cast<std::size_t>(batches)) return mean_iid(xs);
  MeanSe r;
  r.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  std::vector<double> means(batches);
  for (int b = 0; b < batches; ++b) {
    const std::size_t lo = xs.size() * b / batches;
    const std::size_t hi = xs.size() * (b + 1) / batches;
    means[b] = pairwise_sum(xs.subspan(lo, hi - lo)) / static_cast<double>(hi - lo);
  }
  r.se = mean_iid(means).se;
  return r;
}

MeanSe mean_binomial(std::span<const double> indicators) {
  MeanSe r;
  if (indicators.empty()) return r;
  const auto n = static_cast<double>(indicators.size());
  r.mean = pairwise_sum(indicators) / n;
  r.se = std::sqrt(std::max(0.0, r.mean * (1.0 - r.mean)) / n);
  return r;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 paired points");
  if (!w.empty() && w.size() != x.size()) throw std::invalid_argument("fit_line weight size mismatch");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sw += wi;
    sx += wi * x[i];
    sy += wi * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sxx += wi * (x[i] - mx) * (x[i] - mx);
    sxy += wi * (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0) throw std::invalid_argument("fit_line needs distinct abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ss += (w.empty() ? 1.0 : w[i]) * r * r;
  }
  f.rms_residual = std::sqrt(ss / sw);
  if (x.size() > 2) {
    if (w.empty()) {
      f.slope_se = std::sqrt(ss / static_cast<double>(x.size() - 2) / sxx);
    } else {
      // Weights are inverse variances.
      f.slope_se = std::sqrt(1.0 / sxx);
    }
  }
  return f;
}

}  // namespace perclab
