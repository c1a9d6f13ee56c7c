#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "singflow/blowup.hpp"
#include "singflow/identify.hpp"

namespace singflow {

/// Knobs shared by the exponent estimator and the periodic-orbit detector.
/// time_scale is the constant C of the sped-up flow: the detector's minimum
/// return time (4 in rescaled units) becomes 4 C in ambient time.
struct AnalyzeConfig {
  double time_scale = 1.0;
  double sing_threshold = 1e-9;  // relative to the field scale
  int max_iterates = 64;         // section-return iteration cap
  int contraction_window = 10;   // consecutive contracting ratios required
  int newton_max_iter = 30;      // periodic-orbit refinement cap
  double fd_step = 1e-2;         // relative step of the iterate-derivative FD
  void validate() const;
};

/// Finite-horizon Lyapunov data of the rescaled projected tangent flow along
/// one orbit. exponents holds the d-1 normal rates sorted descending;
/// field_rate is log |X(phi_T x)| / |X(x)| over T, the remaining tangent
/// direction (zero on a periodic orbit). logdet_gap is the relative gap
/// between the exponent sum and an independently accumulated log-determinant
/// rate of the same blocks; it certifies the triangular accumulation.
struct ExponentEstimate {
  OrbitSegment orbit;              // block base points, times i * step
  double step = 0.0;               // block length s
  std::vector<double> exponents;   // d-1 normal exponents, descending
  double field_rate = 0.0;
  long block_count = 0;
  double logdet_gap = 0.0;
  std::vector<double> block_log_norms;  // log operator norm per block
};

/// QR-accumulated normal exponents over blocks of length s: at each block the
/// rescaled projected tangent map is applied to an orthonormal frame of the
/// normal fiber and re-orthonormalized; the diagonal logs average to the
/// exponents. Throws NearSingularityError when the orbit's field norm drops
/// below sing_threshold times the field scale, and DomainError for
/// total_time <= 0 or s outside (0, 1].
ExponentEstimate lyapunov_normal(const VectorFieldSpec& spec, const Vec& x,
                                 double total_time, double s,
                                 const AnalyzeConfig& acfg,
                                 const IntegratorConfig& icfg);

/// The contraction fraction: an index qualifies when every trailing-window
/// average of the logs is at most -fraction * lambda.
struct PlissConfig {
  double fraction = 0.5;
};

/// Indices n (1-based block counts) at which every partial sum
/// sum_{i=m}^{n-1} logs[i] <= -fraction * lambda * (n - m) for all m < n.
/// constant is the empirical prefactor exp(max overshoot) that makes the
/// finite-product bound hold at the same rate for every index of the list.
struct PlissReport {
  double lambda = 0.0;
  double constant = 1.0;
  std::vector<long> indices;
};

/// Linear-time scan: prefix sums of logs[i] + fraction * lambda, an index
/// qualifies exactly when its prefix sum is a running minimum.
PlissReport pliss_points(const std::vector<double>& logs, double lambda,
                         const PlissConfig& cfg = {});

/// Quadratic reference that checks the defining inequality for every pair
/// m < n over the same prefix-sum values. Used as the test oracle; agrees
/// with pliss_points exactly, including ties.
PlissReport pliss_points_bruteforce(const std::vector<double>& logs,
                                    double lambda,
                                    const PlissConfig& cfg = {});

/// A refined periodic orbit. multipliers are the eigenvalues of the section
/// return-map derivative at `point` (the d-1 nontrivial Floquet multipliers);
/// iterate_spectrum holds the eigenvalues of the finite-difference derivative
/// of the contracting section-return iteration at its fixed point, and
/// spectrum_gap their matched distance: the two spectra agree because the
/// iteration is conjugate to the return map near the orbit.
struct PeriodicOrbitResult {
  Vec point;
  double period = 0.0;
  CVec multipliers;
  double residual = 0.0;          // d(point, phi_period(point))
  CVec iterate_spectrum;
  double spectrum_gap = 0.0;
  long iterations = 0;            // section-return iterations used
  double contraction_ratio = 0.0; // last informative successive-iterate ratio
};

/// Closing-property detector. Searches d(x, phi_T(x)) < r0 with T at least
/// 4 * time_scale, iterates the map (identification back to x) o (rescaled
/// holonomy over T) from the zero fiber vector, certifies empirical
/// contraction, then Newton-refines (point, period) on the unrescaled return
/// map to a fixed section through the limit. Throws NoReturnError when no
/// near-return exists within the horizon, NoContractionError when iterates
/// escape B(0, beta0) or the ratios fail to contract, and RootFindError
/// (carrying the best residual) when the refinement stalls.
PeriodicOrbitResult detect_periodic(const VectorFieldSpec& spec, const Vec& x,
                                    double search_horizon, double r0,
                                    double beta0, const AnalyzeConfig& acfg,
                                    const IntegratorConfig& icfg);

/// Stage budget of the negative-exponents pipeline.
struct PipelineConfig {
  double burn_in = 10.0;        // settle time before measuring
  double lyapunov_time = 40.0;  // exponent horizon
  double step = 0.25;           // exponent block length
  double search_horizon = 40.0; // return search after the burn-in point
  double r0 = 0.2;
  double beta0 = 0.2;
  int contraction_samples = 8;  // sphere samples per contraction test
  AnalyzeConfig analyze;
};

/// Outcome of the chained argument: negative normal exponents, a positive
/// density of Pliss indices for the block logs, an empirical radius on which
/// the rescaled holonomy halves vectors, and finally a detected periodic
/// orbit. failed_stage is empty on success, otherwise one of "exponents",
/// "pliss", "contraction", "recurrence", "refine" with the reason in notes.
struct PipelineReport {
  ExponentEstimate exponents;
  bool exponents_negative = false;
  PlissReport pliss;
  double pliss_density = 0.0;
  double contraction_radius = 0.0;  // dyadic radius of the 1/2-contraction
  double contraction_time = 0.0;    // ambient time of the halving test
  std::optional<PeriodicOrbitResult> orbit;
  std::string failed_stage;
  std::vector<std::string> notes;
};

PipelineReport negative_exponents_pipeline(const VectorFieldSpec& spec,
                                           const Vec& x,
                                           const PipelineConfig& cfg,
                                           const IntegratorConfig& icfg);

/// Sampling plan of the continuity sweep. Pairs are drawn on shells of the
/// given radii around every singularity plus far-field pairs; each pair is
/// compared over fiber balls of the dyadic radii beta0, beta0/2, beta0/4.
struct ContinuityConfig {
  std::vector<double> shells{1e-2, 1e-3, 1e-4};
  int pairs_per_shell = 4;
  int far_pairs = 4;
  int fiber_samples = 6;
  double beta0 = 0.05;
  double fd_step = 1e-3;       // step of the derivative comparison
  bool second_order = false;   // also compare second differences (noisier)
  int threads = 1;
  std::uint64_t seed = 1;
};

/// One compared pair. dir_distance is the larger of the ambient base gap and
/// the projective distance between the field lines at x and y; the fiber maps
/// are compared after transporting both domains and images by the minimal
/// rotations aligning the unit fields, which is the natural identification of
/// nearby normal fibers. Levels follow the dyadic beta grid, largest first.
struct ContinuityPair {
  Vec x, y;
  double dir_distance = 0.0;
  std::vector<double> c0;   // sup |psi*_x - psi*_y| per beta level
  std::vector<double> c1;   // derivative difference per beta level
  std::vector<double> c2;   // second differences, only if second_order
  bool defined = false;     // both maps evaluated on every level
  std::string note;
};

struct ContinuityRow {
  double eps = 0.0;
  double delta = 0.0;   // largest dyadic direction distance that passes
  double beta = 0.0;    // fiber radius shared by the whole table
  long pairs_used = 0;
  double worst = 0.0;   // largest distance among pairs below delta
};

struct ContinuityTable {
  std::vector<ContinuityPair> pairs;
  std::vector<ContinuityRow> rows;     // one per requested eps, input order
  double control_distance = 0.0;       // x == y row, identically zero maps
};

/// For each eps reports the largest dyadic delta such that every defined
/// sampled pair with dir_distance < delta stays eps-close in C^0 and C^1 over
/// B(0, beta). beta is fixed to the largest dyadic level that admits a
/// positive delta at the smallest eps, so rows are monotone: smaller eps
/// never yields a larger delta. Undefined pairs (tube escape on either side)
/// are excluded and noted.
ContinuityTable continuity_sweep(const VectorFieldSpec& spec, double t,
                                 const std::vector<double>& eps_list,
                                 const ContinuityConfig& cfg,
                                 const IntegratorConfig& icfg);

}  // namespace singflow
