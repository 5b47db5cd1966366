#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "perclab/diagrams.hpp"
#include "perclab/explore.hpp"
#include "perclab/lattice.hpp"
#include "perclab/pioneers.hpp"
#include "perclab/stats.hpp"

namespace perclab {

struct EstimatorError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Replica i uses EdgeField(seed, first_stream + i).
struct RunOptions {
  std::uint64_t replicas = 10'000;
  std::uint64_t seed = 1;
  std::uint64_t first_stream = 0;
  int workers = 1;
  Caps caps{};
  // Restricts every exploration (finite-graph runs); Region::all() otherwise.
  Region region = Region::all();

  EdgeField field(std::uint64_t i) const { return EdgeField(seed, first_stream + i); }
};

// P_p(0 <-> x): fraction of replicas whose cluster of 0 reaches x.
Estimate estimate_two_point(const ModelSpec& model, double p, const Point& x, const RunOptions& opt);

// Shell-averaged two-point function: for each k, the mean of tau_p(x) over {x : |x|_inf = k},
// estimated by counting cluster vertices on the shell. On Z^d the explorations are restricted to
// the box Lambda_{box_radius} (a lower bound on tau, sharp away from the box boundary).
std::vector<Estimate> estimate_two_point_shells(const ModelSpec& model, double p, const std::vector<std::int64_t>& shells,
                                                const RunOptions& opt, std::int64_t box_radius = 0);

// Number of torus points with |x|_inf = k in the representative window.
std::int64_t torus_shell_size(int dim, std::int64_t period, std::int64_t k);

enum class ArmMetric { Extrinsic, Intrinsic };

// Extrinsic: P(0 <-> outside Lambda_{rho-1}), i.e. the cluster meets {|x|_inf >= rho}.
// Intrinsic: P(some vertex at intrinsic distance rho).
Estimate estimate_one_arm(const ModelSpec& model, double p, std::int64_t rho, const RunOptions& opt,
                          ArmMetric metric = ArmMetric::Extrinsic);
// Same observable for several radii from shared explorations.
std::vector<Estimate> estimate_one_arm_profile(const ModelSpec& model, double p, const std::vector<std::int64_t>& radii,
                                               const RunOptions& opt, ArmMetric metric = ArmMetric::Extrinsic);

// Mean cluster size E|C(0)| (chi on Z^d, chi^T on the torus). Batch-means standard error.
Estimate estimate_susceptibility(const ModelSpec& model, double p, const RunOptions& opt);

struct SlabCounts {
  Estimate x_r;  // points of S_r joined to 0 inside {x_1 <= r}
  Estimate y_r;  // points of S_r joined to 0 inside {-r <= x_1 <= r}
};
SlabCounts estimate_slab_counts(const ModelSpec& model, double p, std::int64_t r, const RunOptions& opt);

// E|P_0(n)| for each n, from pioneer sweeps.
std::map<std::int64_t, Estimate> estimate_Pn(const ModelSpec& model, double p, const std::vector<std::int64_t>& n_list,
                                             const RunOptions& opt);

// E|P_0|, the total number of pioneers of the origin.
Estimate estimate_pioneer_count(const ModelSpec& model, double p, const RunOptions& opt);

// P(|P_0| >= k). A truncated sweep only censors the thresholds it has not already passed.
std::vector<Estimate> estimate_pioneer_tail(const ModelSpec& model, double p, const std::vector<std::int64_t>& ks,
                                            const RunOptions& opt);

// Monotone coupling on one shared EdgeField per replica, for p <= q: open edges, clusters and
// intrinsic balls at p are contained in those at q.
struct CouplingCheck {
  std::uint64_t edges_checked = 0;
  std::uint64_t edge_violations = 0;
  std::uint64_t clusters_checked = 0;
  std::uint64_t cluster_violations = 0;
  std::uint64_t clusters_skipped = 0;  // q-cluster truncated
  std::uint64_t balls_checked = 0;
  std::uint64_t ball_violations = 0;
};
CouplingCheck check_monotone_coupling(const ModelSpec& model, double p, double q, std::int64_t ball_radius,
                                      const RunOptions& opt, std::uint64_t edges_per_replica = 100);

struct MassFit {
  double m_hat = 0.0;
  double intercept = 0.0;
  std::int64_t n_min = 0;
  std::int64_t n_max = 0;
  double residual = 0.0;  // RMS residual of the log-linear fit
  bool power_correction = false;
};

struct MassFitOptions {
  bool power_correction = false;  // subtract -(d-1)/2 log n before fitting
  int dimension = 0;              // needed when power_correction is set
  double max_relative_se = 0.2;
  std::size_t min_points = 4;
};

// Least squares log tau(n) = a - m n over the largest contiguous window of usable points.
MassFit fit_mass(const std::map<std::int64_t, Estimate>& tau_series, const MassFitOptions& opt = {});

struct PsiEstimate {
  Estimate psi;             // sum over 0 < |u|_inf <= U of tau_p(x + r u)
  Estimate tau_x;           // tau_p(x) from the same explorations
  Estimate image_sum;       // tau_p(x) + psi, per replica
  double tail_bound = 0.0;  // bound on the |u|_inf > U remainder (infinite without a mass fit)
  bool tail_reported = false;
};

// Image sum of the Z^d two-point function over the lifts of the torus point x. `torus_model`
// fixes (d, L, r); explorations run on Z^d.
PsiEstimate estimate_psi(const ModelSpec& torus_model, double p, const Point& x, std::int64_t cutoff,
                         const RunOptions& opt, const std::optional<MassFit>& mass = std::nullopt);

struct PtSolveOptions {
  double tolerance = 0.0;  // absolute tolerance on chi; 0 means "3 standard errors"
  double p_resolution = 1e-7;
  int max_retries = 2;     // replica doublings when the bracket is not confirmed
};

struct PtSolution {
  double p_T = 0.0;
  double target = 0.0;  // lambda V^(1/3)
  Estimate chi;         // chi^T at p_T
  double residual = 0.0;
  std::uint64_t replicas = 0;
  int iterations = 0;
};

// Bisection for chi^T(p) = lambda V^(1/3) on common random numbers (the estimate is then
// monotone in p replica by replica).
PtSolution solve_p_T(const ModelSpec& torus_model, double lambda, const RunOptions& opt, const PtSolveOptions& so = {});

struct TorusTwoPointGrid {
  Grid tau;
  Grid std_error;
  std::uint64_t replicas = 0;
};

// tau^T on the whole torus via the translation-averaged estimator |C(0)|^-1 sum_{u,v in C(0)} 1(v-u = x),
// which is positive definite sample by sample.
TorusTwoPointGrid estimate_torus_two_point_grid(const ModelSpec& torus_model, double p, const RunOptions& opt);

// tau_p on Lambda_rho of Z^d from explorations restricted to Lambda_{explore_radius}.
Grid estimate_lattice_two_point_grid(const ModelSpec& model, double p, std::int64_t rho, std::int64_t explore_radius,
                                     const RunOptions& opt, double decay_exponent);

}  // namespace perclab
