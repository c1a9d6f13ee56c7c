#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "singflow/poincare.hpp"
#include "singflow/rng.hpp"

namespace singflow {

/// Radii and time windows for identification maps between nearby sections.
/// r0 is the ambient pairing radius, beta0 the rescaled fiber radius on the
/// source, beta_bar the rescaled landing radius on the target section,
/// eps_time the half width of the section-time window. time_scale is the
/// constant C of the sped-up flow s -> phi_{C s}: every interval bound stated
/// in rescaled time ([-2,2], 1/4, kappa, ...) is multiplied by C before use.
struct IdentifyConfig {
  double r0 = 0.5;
  double beta0 = 0.05;
  double beta_bar = 0.25;
  double eps_time = 0.25;
  double time_scale = 1.0;
  int samples = 32;
  void validate() const;
};

/// One evaluation of the identification h_{from,to}: the fiber vector u at
/// `from` is carried by the flow to the section at `to` in the recorded
/// section_time; image is the landing in rescaled normal coordinates at `to`.
struct IdentificationMap {
  Vec from;
  Vec to;
  double section_time = 0.0;
  NormalVector image;
};

/// h_{y,x}(u) = |X(x)|^-1 (phi_s(y + |X(y)| u) - x) for the unique section
/// time s in (-eps_time, eps_time). Requires d(x,y) < r0, |u| < beta0, u
/// normal to X(y). No landing inside the window raises
/// IdentificationDomainError; several landings raise AmbiguousCrossingError.
IdentificationMap identification(const VectorFieldSpec& spec, const Vec& y,
                                 const Vec& x, const Vec& u,
                                 const IdentifyConfig& idcfg,
                                 const IntegratorConfig& icfg);

/// Compact shell around the singular set: points whose distance to the
/// nearest singularity lies in [inner, outer]. This is the working region for
/// the compatibility checks (they are needed near, not at, the boundary).
struct ShellRegion {
  double inner = 0.0;
  double outer = 0.0;
};

/// Draws a shell point by rejection, or nullopt when the region is empty or
/// infeasible within the given number of tries.
std::optional<Vec> sample_shell(const VectorFieldSpec& spec,
                                const std::vector<SingularityRecord>& sings,
                                const ShellRegion& region, Rng& rng,
                                int max_tries = 4096);

/// Structured evidence from a compatibility check: scalar results, echoed
/// parameters, residuals against the pass threshold, and free-form notes
/// (violating samples, truncations). Merged associatively by sweep drivers.
struct CheckReport {
  std::string name;
  bool pass = true;
  double max_residual = 0.0;
  double threshold = 0.0;
  long samples_used = 0;
  long samples_skipped = 0;
  std::map<std::string, double> params;
  std::map<std::string, double> results;
  std::vector<std::string> notes;
};

/// Largest dyadic r such that every sampled near-return d(x, phi_t(x)) < r
/// with rescaled |t| in [kappa, 2] fails to occur; near-returns above kappa
/// are reported as violations. results["r"] carries the returned radius.
CheckReport check_no_small_period(const VectorFieldSpec& spec,
                                  const std::vector<SingularityRecord>& sings,
                                  const ShellRegion& region, double kappa,
                                  const IdentifyConfig& idcfg,
                                  const IntegratorConfig& icfg,
                                  std::uint64_t seed);

/// Largest dyadic beta <= beta0 such that every sampled pair x, y with
/// |h_x(y)| <= beta admits |t| <= 1/4 (rescaled) with d(phi_t(y), x) <=
/// delta. results["beta"] carries the returned radius.
CheckReport check_local_injectivity(const VectorFieldSpec& spec,
                                    const std::vector<SingularityRecord>& sings,
                                    const ShellRegion& region, double delta,
                                    const IdentifyConfig& idcfg,
                                    const IntegratorConfig& icfg,
                                    std::uint64_t seed);

/// Residual of h_x(psi*_t(u)) = h_x(u) over sampled (x, y, t, u) with y and
/// phi_t(y) both r0-close to x and rescaled |t| <= 2. Threshold 1e-8.
CheckReport check_local_invariance(const VectorFieldSpec& spec,
                                   const std::vector<SingularityRecord>& sings,
                                   const ShellRegion& region,
                                   const IdentifyConfig& idcfg,
                                   const IntegratorConfig& icfg,
                                   std::uint64_t seed);

/// Monotone reparametrization sampled on a grid; eval interpolates linearly
/// and requires t inside the sampled range. lipschitz_bound is the largest of
/// every divided difference and its reciprocal.
struct ReparamTrace {
  std::vector<double> sample_times;
  std::vector<double> theta_values;
  double lipschitz_bound = 1.0;
  double eval(double t) const;
};

struct GlobalInvariance {
  ReparamTrace trace;
  CheckReport report;
};

/// Matches the crossing times of the two tube orbits (u over base(u), u'
/// over base(u')) into theta = (theta0')^-1 o (theta0 - t_shift), then checks
/// the orbit distance bound delta, the Lipschitz bound 1+3rho, the projected
/// tube bound (2.i) and the commutation h o psi*_theta(t) = psi*_t (2.ii,
/// threshold 1e-6) on sampled times of I intersect theta^-1(I'). Tube escape
/// truncates the interval and is noted, not failed.
GlobalInvariance check_global_invariance(const VectorFieldSpec& spec,
                                         const NormalVector& u,
                                         const NormalVector& u_prime,
                                         std::pair<double, double> I,
                                         std::pair<double, double> I_prime,
                                         double delta, double rho,
                                         const IdentifyConfig& idcfg,
                                         const IntegratorConfig& icfg);

/// Shear trichotomy on a reparametrization: theta(0) > 1/2 forces theta(t) >
/// t+2, theta(0) in [-2,2] forces |theta(t) - t| <= 1/2, theta(0) < -1/2
/// symmetrically, each asserted at every visit time whose flag is set. All
/// applicable branches are asserted; overlapping hypotheses that contradict
/// are surfaced as failures rather than resolved silently.
CheckReport check_no_shear(const ReparamTrace& trace,
                           const std::vector<std::pair<double, bool>>& visits);

}  // namespace singflow
