#include "perclab/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace perclab {

namespace {

struct Sample {
  double value = 0.0;
  bool censored = false;
};

enum class SeKind { Binomial, BatchMeans };

Estimate summarize(const std::vector<Sample>& samples, const RunOptions& opt, SeKind kind) {
  std::vector<double> kept;
  kept.reserve(samples.size());
  std::int64_t censored = 0;
  for (const auto& s : samples) {
    if (s.censored) ++censored;
    else kept.push_back(s.value);
  }
  const MeanSe m = kind == SeKind::Binomial ? mean_binomial(kept) : mean_batch(kept);
  Estimate e;
  e.value = m.mean;
  e.std_error = m.se;
  e.replicas = static_cast<std::int64_t>(kept.size());
  e.truncated = censored;
  e.truncated_fraction = samples.empty() ? 0.0 : static_cast<double>(censored) / static_cast<double>(samples.size());
  e.seed = opt.seed;
  e.stream_begin = opt.first_stream;
  e.stream_end = opt.first_stream + samples.size();
  return e;
}

Region intersect(const Region& a, const Region& b) {
  if (a.is_all()) return b;
  if (b.is_all()) return a;
  return Region::custom([a, b](const Point& x) { return a.contains(x) && b.contains(x); });
}

Point origin(const ModelSpec& model) { return Point(model.dimension); }

void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw EstimatorError("p must lie in [0,1]");
}

double lattice_shell_size(int d, std::int64_t k) {
  if (k == 0) return 1.0;
  return std::pow(2.0 * k + 1.0, d) - std::pow(2.0 * k - 1.0, d);
}

}  // namespace

Estimate estimate_two_point(const ModelSpec& model, double p, const Point& x, const RunOptions& opt) {
  check_p(p);
  const ModelSpec m = model.with_p(p);
  const Point target = canonical_point(x, m);
  const Region target_region = Region::single(target);
  auto samples = map_replicas<Sample>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const auto r = reaches(m, opt.field(i), origin(m), target_region, opt.region, opt.caps);
    return Sample{r.reached ? 1.0 : 0.0, r.truncated};
  });
  return summarize(samples, opt, SeKind::Binomial);
}

std::int64_t torus_shell_size(int dim, std::int64_t period, std::int64_t k) {
  if (k < 0) return 0;
  const std::int64_t low = period / 2, high = period - low - 1;
  auto within = [&](std::int64_t s) -> std::int64_t {
    if (s < 0) return 0;
    return std::min(s, low) + std::min(s, high) + 1;
  };
  auto ipow = [dim](std::int64_t b) {
    std::int64_t v = 1;
    for (int i = 0; i < dim; ++i) v *= b;
    return v;
  };
  return ipow(within(k)) - ipow(within(k - 1));
}

std::vector<Estimate> estimate_two_point_shells(const ModelSpec& model, double p, const std::vector<std::int64_t>& shells,
                                                const RunOptions& opt, std::int64_t box_radius) {
  check_p(p);
  if (shells.empty()) throw EstimatorError("no shells requested");
  const ModelSpec m = model.with_p(p);
  const std::int64_t kmax = *std::max_element(shells.begin(), shells.end());
  Region region = opt.region;
  if (!m.is_torus()) {
    if (box_radius < kmax) throw EstimatorError("box radius must cover the largest shell");
    region = intersect(region, Region::box(box_radius));
  }
  std::vector<double> sizes;
  for (auto k : shells) {
    const double s = m.is_torus() ? static_cast<double>(torus_shell_size(m.dimension, m.period(), k))
                                  : lattice_shell_size(m.dimension, k);
    if (s <= 0) throw EstimatorError("empty shell " + std::to_string(k));
    sizes.push_back(s);
  }
  auto per_replica = map_replicas<std::vector<Sample>>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const Cluster c = explore_cluster(m, opt.field(i), origin(m), region, opt.caps);
    std::vector<double> hits(shells.size(), 0.0);
    for (const auto& v : c.order) {
      const std::int64_t k = norms(v).linf;
      for (std::size_t j = 0; j < shells.size(); ++j) {
        if (shells[j] == k) hits[j] += 1.0;
      }
    }
    std::vector<Sample> out(shells.size());
    for (std::size_t j = 0; j < shells.size(); ++j) out[j] = Sample{hits[j] / sizes[j], c.truncated};
    return out;
  });
  std::vector<Estimate> out;
  for (std::size_t j = 0; j < shells.size(); ++j) {
    std::vector<Sample> col(per_replica.size());
    for (std::size_t i = 0; i < per_replica.size(); ++i) col[i] = per_replica[i][j];
    out.push_back(summarize(col, opt, SeKind::BatchMeans));
  }
  return out;
}

Estimate estimate_one_arm(const ModelSpec& model, double p, std::int64_t rho, const RunOptions& opt, ArmMetric metric) {
  check_p(p);
  if (rho < 1) throw EstimatorError("one-arm radius must be >= 1");
  if (metric == ArmMetric::Intrinsic) return estimate_one_arm_profile(model, p, {rho}, opt, metric).front();
  const ModelSpec m = model.with_p(p);
  const Region target = Region::outside_box(rho);
  auto samples = map_replicas<Sample>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const auto r = reaches(m, opt.field(i), origin(m), target, opt.region, opt.caps);
    return Sample{r.reached ? 1.0 : 0.0, r.truncated};
  });
  return summarize(samples, opt, SeKind::Binomial);
}

std::vector<Estimate> estimate_one_arm_profile(const ModelSpec& model, double p, const std::vector<std::int64_t>& radii,
                                               const RunOptions& opt, ArmMetric metric) {
  check_p(p);
  if (radii.empty()) throw EstimatorError("no radii requested");
  for (auto r : radii) {
    if (r < 1) throw EstimatorError("one-arm radius must be >= 1");
  }
  const ModelSpec m = model.with_p(p);
  const std::int64_t rmax = *std::max_element(radii.begin(), radii.end());
  Region region = opt.region;
  Caps caps = opt.caps;
  if (metric == ArmMetric::Extrinsic) {
    // The first vertex of an arm outside Lambda_{rho-1} lies within l_inf distance rho - 1 + L.
    region = intersect(region, Region::box(rmax + m.range - 1));
  } else {
    caps.max_intrinsic = std::min(caps.max_intrinsic, rmax);
  }
  auto per_replica = map_replicas<std::vector<Sample>>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const Cluster c = explore_cluster(m, opt.field(i), origin(m), region, caps);
    std::int64_t reach = 0;
    if (metric == ArmMetric::Extrinsic) {
      for (const auto& v : c.order) reach = std::max(reach, norms(v).linf);
    } else {
      reach = c.max_intrinsic();
    }
    const bool censoring = c.truncated && (metric == ArmMetric::Extrinsic || c.truncation_reason != Truncation::Intrinsic);
    std::vector<Sample> out(radii.size());
    for (std::size_t j = 0; j < radii.size(); ++j) {
      const bool hit = reach >= radii[j];
      out[j] = Sample{hit ? 1.0 : 0.0, censoring && !hit};
    }
    return out;
  });
  std::vector<Estimate> out;
  for (std::size_t j = 0; j < radii.size(); ++j) {
    std::vector<Sample> col(per_replica.size());
    for (std::size_t i = 0; i < per_replica.size(); ++i) col[i] = per_replica[i][j];
    out.push_back(summarize(col, opt, SeKind::Binomial));
  }
  return out;
}

Estimate estimate_susceptibility(const ModelSpec& model, double p, const RunOptions& opt) {
  check_p(p);
  const ModelSpec m = model.with_p(p);
  auto samples = map_replicas<Sample>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const Cluster c = explore_cluster(m, opt.field(i), origin(m), opt.region, opt.caps);
    return Sample{static_cast<double>(c.size()), c.truncated};
  });
  return summarize(samples, opt, SeKind::BatchMeans);
}

SlabCounts estimate_slab_counts(const ModelSpec& model, double p, std::int64_t r, const RunOptions& opt) {
  check_p(p);
  if (model.is_torus()) throw EstimatorError("slab counts are defined on Z^d");
  if (model.range != 1) throw EstimatorError("slab counts require the nearest-neighbour model");
  if (r < 0) throw EstimatorError("slab index r must be nonnegative");
  const ModelSpec m = model.with_p(p);
  const Region half = intersect(opt.region, Region::halfspace_below(r + 1));
  const Region slab = intersect(opt.region, Region::slab(-r, r));
  auto count_plane = [r](const Cluster& c) {
    double n = 0;
    for (const auto& v : c.order) n += v[0] == r ? 1.0 : 0.0;
    return n;
  };
  auto samples = map_replicas<std::pair<Sample, Sample>>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const EdgeField f = opt.field(i);
    const Cluster cx = explore_cluster(m, f, origin(m), half, opt.caps);
    const Cluster cy = explore_cluster(m, f, origin(m), slab, opt.caps);
    return std::pair{Sample{count_plane(cx), cx.truncated}, Sample{count_plane(cy), cy.truncated}};
  });
  std::vector<Sample> xs, ys;
  for (const auto& [a, b] : samples) {
    xs.push_back(a);
    ys.push_back(b);
  }
  return {summarize(xs, opt, SeKind::BatchMeans), summarize(ys, opt, SeKind::BatchMeans)};
}

std::map<std::int64_t, Estimate> estimate_Pn(const ModelSpec& model, double p, const std::vector<std::int64_t>& n_list,
                                             const RunOptions& opt) {
  check_p(p);
  for (auto n : n_list) {
    if (n < 1) throw EstimatorError("pioneer plane index n must be >= 1");
  }
  const ModelSpec m = model.with_p(p);
  auto per_replica = map_replicas<std::vector<Sample>>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const PioneerRecord rec = pioneer_profile(m, opt.field(i), origin(m), opt.caps, opt.region);
    std::vector<Sample> out(n_list.size());
    for (std::size_t j = 0; j < n_list.size(); ++j) {
      out[j] = Sample{static_cast<double>(rec.count(n_list[j])), rec.truncated && n_list[j] > rec.exact_through};
    }
    return out;
  });
  std::map<std::int64_t, Estimate> out;
  for (std::size_t j = 0; j < n_list.size(); ++j) {
    std::vector<Sample> col(per_replica.size());
    for (std::size_t i = 0; i < per_replica.size(); ++i) col[i] = per_replica[i][j];
    out[n_list[j]] = summarize(col, opt, SeKind::BatchMeans);
  }
  return out;
}

Estimate estimate_pioneer_count(const ModelSpec& model, double p, const RunOptions& opt) {
  check_p(p);
  const ModelSpec m = model.with_p(p);
  auto samples = map_replicas<Sample>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const PioneerRecord rec = pioneer_profile(m, opt.field(i), origin(m), opt.caps, opt.region);
    return Sample{static_cast<double>(rec.total), rec.truncated};
  });
  return summarize(samples, opt, SeKind::BatchMeans);
}

std::vector<Estimate> estimate_pioneer_tail(const ModelSpec& model, double p, const std::vector<std::int64_t>& ks,
                                            const RunOptions& opt) {
  check_p(p);
  const ModelSpec m = model.with_p(p);
  auto per_replica = map_replicas<std::vector<Sample>>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const PioneerRecord rec = pioneer_profile(m, opt.field(i), origin(m), opt.caps, opt.region);
    std::vector<Sample> out(ks.size());
    for (std::size_t j = 0; j < ks.size(); ++j) {
      const bool hit = rec.total >= ks[j];
      out[j] = Sample{hit ? 1.0 : 0.0, rec.truncated && !hit};
    }
    return out;
  });
  std::vector<Estimate> out;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    std::vector<Sample> col(per_replica.size());
    for (std::size_t i = 0; i < per_replica.size(); ++i) col[i] = per_replica[i][j];
    out.push_back(summarize(col, opt, SeKind::Binomial));
  }
  return out;
}

CouplingCheck check_monotone_coupling(const ModelSpec& model, double p, double q, std::int64_t ball_radius,
                                      const RunOptions& opt, std::uint64_t edges_per_replica) {
  check_p(p);
  check_p(q);
  if (p > q) throw EstimatorError("coupling check needs p <= q");
  if (ball_radius < 0) throw EstimatorError("ball radius must be non-negative");
  const ModelSpec mp = model.with_p(p), mq = model.with_p(q);
  const Neighborhood nb(mq);
  const Point o = origin(mq);
  const std::int64_t spread = mq.is_torus() ? mq.period() : 1'000'000;
  auto parts = map_replicas<CouplingCheck>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    CouplingCheck c;
    const EdgeField field = opt.field(i);
    for (std::uint64_t k = 0; k < edges_per_replica; ++k) {
      Point v(mq.dimension);
      for (int a = 0; a < mq.dimension; ++a) {
        const double u = stream_uniform(opt.seed, opt.first_stream + i, k * kMaxDim + static_cast<std::uint64_t>(a));
        v[a] = static_cast<std::int64_t>(u * static_cast<double>(spread)) - spread / 2;
      }
      v = canonical_point(v, mq);
      const auto j = static_cast<std::size_t>(
          stream_uniform(opt.seed, opt.first_stream + i, (edges_per_replica + k) * kMaxDim) * nb.offsets().size());
      const Edge e(v, nb.neighbor(v, std::min(j, nb.offsets().size() - 1)));
      ++c.edges_checked;
      if (field.is_open(e, p) && !field.is_open(e, q)) ++c.edge_violations;
    }
    const Cluster cp = explore_cluster(mp, field, o, opt.region, opt.caps);
    const Cluster cq = explore_cluster(mq, field, o, opt.region, opt.caps);
    if (cq.truncated) {
      ++c.clusters_skipped;
    } else {
      ++c.clusters_checked;
      for (const Point& v : cp.order) {
        if (!cq.contains(v)) {
          ++c.cluster_violations;
          break;
        }
      }
    }
    Caps ball = opt.caps;
    ball.max_intrinsic = ball_radius;
    const Cluster bp = explore_cluster(mp, field, o, opt.region, ball);
    const Cluster bq = explore_cluster(mq, field, o, opt.region, ball);
    if (bq.truncation_reason != Truncation::Volume && bp.truncation_reason != Truncation::Volume) {
      ++c.balls_checked;
      for (const auto& [v, dist] : bp.distance) {
        auto it = bq.distance.find(v);
        if (it == bq.distance.end() || it->second > dist) {
          ++c.ball_violations;
          break;
        }
      }
    }
    return c;
  });
  CouplingCheck out;
  for (const auto& c : parts) {
    out.edges_checked += c.edges_checked;
    out.edge_violations += c.edge_violations;
    out.clusters_checked += c.clusters_checked;
    out.cluster_violations += c.cluster_violations;
    out.clusters_skipped += c.clusters_skipped;
    out.balls_checked += c.balls_checked;
    out.ball_violations += c.ball_violations;
  }
  return out;
}

MassFit fit_mass(const std::map<std::int64_t, Estimate>& tau_series, const MassFitOptions& opt) {
  if (opt.power_correction && opt.dimension < 1) throw EstimatorError("power correction needs the dimension");
  // Largest contiguous run of usable points (ties: the earliest).
  std::vector<std::pair<std::int64_t, const Estimate*>> pts(tau_series.size());
  std::transform(tau_series.begin(), tau_series.end(), pts.begin(), [](const auto& kv) { return std::pair{kv.first, &kv.second}; });
  auto usable = [&](std::size_t i) {
    const Estimate& e = *pts[i].second;
    return pts[i].first >= 1 && e.value > 0 && e.std_error <= opt.max_relative_se * e.value;
  };
  std::size_t best_lo = 0, best_len = 0;
  for (std::size_t i = 0; i < pts.size();) {
    if (!usable(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < pts.size() && usable(j + 1) && pts[j + 1].first == pts[j].first + 1) ++j;
    if (j - i + 1 > best_len) {
      best_lo = i;
      best_len = j - i + 1;
    }
    i = j + 1;
  }
  if (best_len < opt.min_points) {
    throw EstimatorError("fit_mass: only " + std::to_string(best_len) + " usable points (need " +
                         std::to_string(opt.min_points) + ")");
  }
  std::vector<double> xs, ys;
  for (std::size_t i = best_lo; i < best_lo + best_len; ++i) {
    const double n = static_cast<double>(pts[i].first);
    double y = std::log(pts[i].second->value);
    if (opt.power_correction) y += 0.5 * (opt.dimension - 1) * std::log(n);
    xs.push_back(n);
    ys.push_back(y);
  }
  const LineFit f = fit_line(xs, ys);
  MassFit out;
  out.m_hat = std::max(0.0, -f.slope);
  out.intercept = f.intercept;
  out.n_min = pts[best_lo].first;
  out.n_max = pts[best_lo + best_len - 1].first;
  out.residual = f.rms_residual;
  out.power_correction = opt.power_correction;
  return out;
}

PsiEstimate estimate_psi(const ModelSpec& torus_model, double p, const Point& x, std::int64_t cutoff,
                         const RunOptions& opt, const std::optional<MassFit>& mass) {
  check_p(p);
  if (!torus_model.is_torus()) throw EstimatorError("estimate_psi needs a torus model to fix the period");
  if (cutoff < 1) throw EstimatorError("image cutoff U must be >= 1");
  const std::int64_t r = torus_model.period();
  const int d = torus_model.dimension;
  const Point xc = project_to_torus(x, r);
  const ModelSpec m = torus_model.unwrapped().with_p(p);
  // Lifts x + r u with |u|_inf <= U lie in Lambda_{r U + |x|_inf}.
  const Region box = intersect(opt.region, Region::box(r * cutoff + norms(xc).linf));

  struct Row {
    Sample psi, tau, sum;
  };
  auto rows = map_replicas<Row>(opt.replicas, opt.workers, [&](std::uint64_t i) {
    const Cluster c = explore_cluster(m, opt.field(i), origin(m), box, opt.caps);
    double lifts = 0.0, self = 0.0;
    for (const auto& v : c.order) {
      bool is_lift = true;
      for (int a = 0; a < d && is_lift; ++a) is_lift = ((v[a] - xc[a]) % r) == 0;
      if (!is_lift) continue;
      if (v == xc) self = 1.0;
      else lifts += 1.0;
    }
    return Row{{lifts, c.truncated}, {self, c.truncated}, {lifts + self, c.truncated}};
  });
  std::vector<Sample> a, b, s;
  for (const auto& row : rows) {
    a.push_back(row.psi);
    b.push_back(row.tau);
    s.push_back(row.sum);
  }
  PsiEstimate out{summarize(a, opt, SeKind::BatchMeans), summarize(b, opt, SeKind::Binomial),
                  summarize(s, opt, SeKind::BatchMeans), std::numeric_limits<double>::infinity(), false};
  if (mass && mass->m_hat > 0) {
    // tau(y) <= exp(a - m |y|_inf) extrapolated from the fit; |x + r u|_inf >= r k - |x|_inf on shell k.
    const double xinf = static_cast<double>(norms(xc).linf);
    double tail = 0.0;
    for (std::int64_t k = cutoff + 1; k < cutoff + 100000; ++k) {
      const double shell = std::pow(2.0 * k + 1.0, d) - std::pow(2.0 * k - 1.0, d);
      const double term = shell * std::exp(mass->intercept - mass->m_hat * (static_cast<double>(r * k) - xinf));
      tail += term;
      if (term < 1e-18 * std::max(tail, 1e-300)) break;
    }
    out.tail_bound = tail;
    out.tail_reported = std::isfinite(tail);
  }
  return out;
}

namespace {

// Returns true iff mean cluster size over the replicas is >= target. Blocks of replicas are
// processed in index order and the search stops as soon as the running total settles the question.
bool chi_at_least(const ModelSpec& m, double target, const RunOptions& opt) {
  const double need = target * static_cast<double>(opt.replicas);
  double total = 0.0;
  const std::uint64_t block = static_cast<std::uint64_t>(std::max(1, opt.workers)) * 8;
  for (std::uint64_t b = 0; b < opt.replicas; b += block) {
    const std::uint64_t e = std::min(opt.replicas, b + block);
    Caps caps = opt.caps;
    const double remaining = need - total;
    caps.max_volume = std::max<std::int64_t>(1, std::min<std::int64_t>(caps.max_volume, static_cast<std::int64_t>(std::ceil(remaining)) + 1));
    auto sizes = map_replicas<double>(e - b, opt.workers, [&](std::uint64_t j) {
      return static_cast<double>(explore_cluster(m, opt.field(b + j), origin(m), opt.region, caps).size());
    });
    total += pairwise_sum(sizes);
    if (total >= need) return true;
  }
  return false;
}

}  // namespace

PtSolution solve_p_T(const ModelSpec& torus_model, double lambda, const RunOptions& opt, const PtSolveOptions& so) {
  if (!torus_model.is_torus()) throw EstimatorError("solve_p_T needs a torus model");
  const double V = static_cast<double>(torus_model.volume());
  const double lo_l = std::cbrt(1.0 / V), hi_l = std::cbrt(V * V);
  if (!(lambda >= lo_l * (1 - 1e-12) && lambda <= hi_l * (1 + 1e-12))) {
    throw EstimatorError("lambda must lie in [V^-1/3, V^2/3] = [" + std::to_string(lo_l) + ", " + std::to_string(hi_l) + "]");
  }
  const double target = lambda * std::cbrt(V);
  RunOptions run = opt;
  run.caps.max_volume = std::max<std::int64_t>(run.caps.max_volume, static_cast<std::int64_t>(V) + 1);
  for (int attempt = 0;; ++attempt) {
    PtSolution sol;
    sol.target = target;
    sol.replicas = run.replicas;
    double lo = 0.0, hi = 1.0;
    if (chi_at_least(torus_model.with_p(0.0), target, run)) {
      hi = 0.0;
    } else {
      while (hi - lo > so.p_resolution) {
        const double mid = 0.5 * (lo + hi);
        if (chi_at_least(torus_model.with_p(mid), target, run)) hi = mid;
        else lo = mid;
        ++sol.iterations;
      }
    }
    const Estimate chi_hi = estimate_susceptibility(torus_model, hi, run);
    Estimate chosen = chi_hi;
    double p_T = hi;
    if (hi > 0.0) {
      const Estimate chi_lo = estimate_susceptibility(torus_model, lo, run);
      if (std::abs(chi_lo.value - target) < std::abs(chi_hi.value - target)) {
        chosen = chi_lo;
        p_T = lo;
      }
    }
    sol.p_T = p_T;
    sol.chi = chosen;
    sol.residual = std::abs(chosen.value - target);
    const double allowed = std::max(so.tolerance, 3.0 * chosen.std_error);
    if (sol.residual <= allowed || (so.tolerance == 0.0 && chosen.std_error == 0.0 && sol.residual <= 1e-9 * target)) {
      return sol;
    }
    if (attempt >= so.max_retries) {
      throw EstimatorError("solve_p_T: residual " + std::to_string(sol.residual) + " exceeds " + std::to_string(allowed) +
                           " after " + std::to_string(attempt + 1) + " attempts");
    }
    run.replicas *= 2;
  }
}

TorusTwoPointGrid estimate_torus_two_point_grid(const ModelSpec& torus_model, double p, const RunOptions& opt) {
  check_p(p);
  if (!torus_model.is_torus()) throw EstimatorError("torus two-point grid needs a torus model");
  const ModelSpec m = torus_model.with_p(p);
  const int d = m.dimension;
  const std::int64_t r = m.period();
  Grid sum = Grid::torus(d, r), sumsq = Grid::torus(d, r);
  const std::size_t V = sum.size();
  Caps caps = opt.caps;
  caps.max_volume = std::max<std::int64_t>(caps.max_volume, static_cast<std::int64_t>(V) + 1);

  using Sparse = std::vector<std::pair<std::uint32_t, double>>;
  const std::uint64_t block = static_cast<std::uint64_t>(std::max(1, opt.workers)) * 4;
  for (std::uint64_t b = 0; b < opt.replicas; b += block) {
    const std::uint64_t e = std::min(opt.replicas, b + block);
    auto parts = map_replicas<Sparse>(e - b, opt.workers, [&](std::uint64_t j) {
      const Cluster c = explore_cluster(m, opt.field(b + j), origin(m), opt.region, caps);
      const std::size_t n = c.size();
      std::vector<std::int64_t> digits(n * d);
      for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < d; ++a) digits[i * d + a] = ((c.order[i][a] % r) + r) % r;
      }
      const double w = 1.0 / static_cast<double>(n);
      auto diff_index = [&](std::size_t u, std::size_t v) {
        std::size_t idx = 0;
        for (int a = 0; a < d; ++a) {
          std::int64_t diff = digits[v * d + a] - digits[u * d + a];
          if (diff < 0) diff += r;
          idx = idx * static_cast<std::size_t>(r) + static_cast<std::size_t>(diff);
        }
        return static_cast<std::uint32_t>(idx);
      };
      Sparse out;
      if (n * n < V / 8) {
        absl::flat_hash_map<std::uint32_t, double> acc;
        for (std::size_t u = 0; u < n; ++u) {
          for (std::size_t v = 0; v < n; ++v) acc[diff_index(u, v)] += w;
        }
        out.assign(acc.begin(), acc.end());
        std::sort(out.begin(), out.end());
      } else {
        std::vector<double> acc(V, 0.0);
        for (std::size_t u = 0; u < n; ++u) {
          for (std::size_t v = 0; v < n; ++v) acc[diff_index(u, v)] += w;
        }
        for (std::size_t i = 0; i < V; ++i) {
          if (acc[i] != 0.0) out.emplace_back(static_cast<std::uint32_t>(i), acc[i]);
        }
      }
      return out;
    });
    for (const auto& part : parts) {
      for (const auto& [idx, val] : part) {
        sum[idx] += val;
        sumsq[idx] += val * val;
      }
    }
  }
  TorusTwoPointGrid out{Grid::torus(d, r), Grid::torus(d, r), opt.replicas};
  const double n = static_cast<double>(opt.replicas);
  for (std::size_t i = 0; i < V; ++i) {
    const double mean = sum[i] / n;
    out.tau[i] = mean;
    const double var = n > 1 ? std::max(0.0, (sumsq[i] / n - mean * mean) * n / (n - 1)) : 0.0;
    out.std_error[i] = std::sqrt(var / n);
  }
  return out;
}

Grid estimate_lattice_two_point_grid(const ModelSpec& model, double p, std::int64_t rho, std::int64_t explore_radius,
                                     const RunOptions& opt, double decay_exponent) {
  check_p(p);
  if (model.is_torus()) throw EstimatorError("lattice two-point grid needs a Z^d model");
  if (explore_radius < rho) throw EstimatorError("exploration box must contain the grid box");
  const ModelSpec m = model.with_p(p);
  const Region region = intersect(opt.region, Region::box(explore_radius));
  Grid g = Grid::box(m.dimension, rho, decay_exponent);
  const std::uint64_t block = static_cast<std::uint64_t>(std::max(1, opt.workers)) * 64;
  std::vector<std::uint64_t> hits(g.size(), 0);
  for (std::uint64_t b = 0; b < opt.replicas; b += block) {
    const std::uint64_t e = std::min(opt.replicas, b + block);
    auto parts = map_replicas<std::vector<std::uint32_t>>(e - b, opt.workers, [&](std::uint64_t j) {
      const Cluster c = explore_cluster(m, opt.field(b + j), origin(m), region, opt.caps);
      std::vector<std::uint32_t> idx;
      for (const auto& v : c.order) {
        if (g.contains(v)) idx.push_back(static_cast<std::uint32_t>(g.index(v)));
      }
      return idx;
    });
    for (const auto& part : parts) {
      for (auto i : part) ++hits[i];
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(hits[i]) / static_cast<double>(opt.replicas);
  return g;
}

}  // namespace perclab
