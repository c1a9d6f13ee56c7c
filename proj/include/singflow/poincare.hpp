#pragma once

#include <vector>

#include "singflow/integrate.hpp"

namespace singflow {

/// Dimensionless radii controlling section holonomy. beta bounds fiber
/// vectors relative to |X| at the base, delta bounds the flow tube, t0 is the
/// half width of every crossing time search window, rho is the admissible
/// reparametrization slack. sing_threshold is relative to the field scale;
/// orbits that dip below it abort section constructions.
struct PoincareConfig {
  double beta = 0.05;
  double delta = 0.1;
  double t0 = 0.25;
  double rho = 0.1;
  double sing_threshold = 1e-9;
  void validate() const;
};

/// A vector in the normal fiber N_x = X(x)^perp at a regular point x.
struct NormalVector {
  Vec base;
  Vec vec;
};

/// Result of a section holonomy. crossing_time is the actual arrival time t'
/// at the section of phi_t(x); ratio_bound = max(t/t', t'/t).
struct PoincareImage {
  NormalVector image;
  double crossing_time = 0.0;
  double requested_time = 0.0;
  double ratio_bound = 1.0;
};

/// Orthogonal projection of w onto N_x, packaged with its base point.
NormalVector normal_project(const VectorFieldSpec& spec, const Vec& x,
                            const Vec& w);

/// Checks u.vec is orthogonal to X(u.base) (relative tolerance 1e-9) and the
/// base point is regular; throws DomainError otherwise.
void check_normal(const VectorFieldSpec& spec, const NormalVector& u);

/// Projected tangent flow on normal fibers: P o Dphi_t restricted to N_x.
NormalVector linear_poincare(const VectorFieldSpec& spec,
                             const NormalVector& u, double t,
                             const PoincareConfig& pcfg,
                             const IntegratorConfig& icfg);

/// The same with the field norm ratio |X(x)| / |X(phi_t(x))| applied.
NormalVector rescaled_linear_poincare(const VectorFieldSpec& spec,
                                      const NormalVector& u, double t,
                                      const PoincareConfig& pcfg,
                                      const IntegratorConfig& icfg);

/// Unique time t' in (-window, window) at which the orbit of y meets the
/// section through x, landing within delta |X(x)| of x. The window is scanned
/// with step at most window / 8 before refinement, so every transversal
/// crossing is found; zero roots raise NoCrossingError, several raise
/// AmbiguousCrossingError.
double crossing_time(const VectorFieldSpec& spec, const Vec& x, const Vec& y,
                     double window, double delta,
                     const IntegratorConfig& icfg);

/// Crossing times theta(s) of the orbit of z onto the moving section at
/// phi_s(x), sampled densely on [0, T] (either sign of T). Rescaled offsets
/// are |landing - phi_s(x)| / |X(phi_s(x))|. Throws TubeEscapeError the first
/// time the offset reaches delta.
struct HolonomyTrace {
  std::vector<double> base_times;
  std::vector<double> crossing_times;
  std::vector<double> rescaled_offsets;
};

HolonomyTrace holonomy_trace(const VectorFieldSpec& spec, const Vec& x,
                             const Vec& z, double T,
                             const PoincareConfig& pcfg,
                             const IntegratorConfig& icfg);

/// Section to section holonomy along the flow: x + u.vec is carried to the
/// first crossing with the section at phi_t(x). Requires |u.vec| <
/// beta |X(x)|; the whole holonomy orbit must stay inside the delta |X| tube.
/// Times |t| > 1 are composed from unit pieces.
PoincareImage nonlinear_poincare(const VectorFieldSpec& spec,
                                 const NormalVector& u, double t,
                                 const PoincareConfig& pcfg,
                                 const IntegratorConfig& icfg);

/// Holonomy in rescaled fiber coordinates: v with |v| < beta corresponds to
/// the ambient fiber vector |X(x)| v, and the image is divided by |X| at the
/// arrival base point.
PoincareImage rescaled_nonlinear_poincare(const VectorFieldSpec& spec,
                                          const NormalVector& v, double t,
                                          const PoincareConfig& pcfg,
                                          const IntegratorConfig& icfg);

}  // namespace singflow
