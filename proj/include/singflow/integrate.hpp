#pragma once

#include <functional>
#include <vector>

#include "singflow/fields.hpp"
#include "singflow/types.hpp"

namespace singflow {

/// Tolerances for the adaptive integrator. event_tol bounds the time error of
/// located crossings and exits; it may not exceed rel_tol.
struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double max_step = 0.0;  // 0 means no explicit cap
  double event_tol = 1e-12;
  void validate() const;
};

using Rhs = std::function<void(const Vec& y, Vec& dydt)>;
/// Signed distance to the domain boundary, positive inside. When it turns
/// non positive on an accepted node the integrator locates the exit time and
/// throws EscapeError.
using EscapeMargin = std::function<double(const Vec& y)>;

/// One accepted step with its quartic dense output block.
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  Vec r1, r2, r3, r4, r5;
};

/// Continuous solution on [0, T] (T of either sign). state() evaluates the
/// dense output, which carries the same order of accuracy as the nodes.
class Trajectory {
 public:
  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  const Vec& end_state() const { return end_state_; }
  int state_dim() const { return static_cast<int>(end_state_.size()); }

  Vec state(double t) const;
  std::vector<double> node_times() const;
  const std::vector<DenseStep>& steps() const { return steps_; }

  /// Point part for trajectories produced by integrate().
  Vec point(double t) const { return state(t).head(point_dim_); }
  Vec end_point() const { return end_state_.head(point_dim_); }
  int point_dim() const { return point_dim_; }

  /// Fundamental matrix for trajectories integrated with the variational
  /// system; identity column layout at t = 0.
  Mat fundamental(double t) const;
  Mat end_fundamental() const;
  bool has_variational() const { return variational_; }

 private:
  friend Trajectory integrate_rhs(const Rhs&, const Vec&, double,
                                  const IntegratorConfig&,
                                  const EscapeMargin&);
  friend Trajectory integrate(const VectorFieldSpec&, const Vec&, double,
                              const IntegratorConfig&, bool);
  friend Trajectory integrate_pair(const VectorFieldSpec&, const Vec&,
                                   const Vec&, double,
                                   const IntegratorConfig&);
  std::vector<DenseStep> steps_;
  double t_begin_ = 0.0;
  double t_end_ = 0.0;
  Vec end_state_;
  int point_dim_ = 0;
  bool variational_ = false;
};

/// Core Dormand-Prince 5(4) driver with quartic dense output on a generic
/// right hand side. Throws StiffnessError on step underflow and EscapeError
/// when the margin turns non positive.
Trajectory integrate_rhs(const Rhs& rhs, const Vec& y0, double T,
                         const IntegratorConfig& cfg,
                         const EscapeMargin& margin = {});

/// Flow of the field from x0 over [0, T]; with_variational couples the
/// matrix equation M' = DX(phi_t) M, M(0) = I, into the same error control.
Trajectory integrate(const VectorFieldSpec& spec, const Vec& x0, double T,
                     const IntegratorConfig& cfg,
                     bool with_variational = false);

/// Two orbits integrated as one system so they share step sizes; their
/// difference then loses no accuracy to independent step sequences. Point
/// slots are head(d) for the orbit of x and tail(d) for the orbit of z.
Trajectory integrate_pair(const VectorFieldSpec& spec, const Vec& x,
                          const Vec& z, double T, const IntegratorConfig& cfg);

Vec flow(const VectorFieldSpec& spec, const Vec& x, double t,
         const IntegratorConfig& cfg);
Mat tangent_flow(const VectorFieldSpec& spec, const Vec& x, double t,
                 const IntegratorConfig& cfg);

/// phi_t(x + y) - phi_t(x), the flow lifted to the fiber over the orbit.
Vec lifted_flow(const VectorFieldSpec& spec, const Vec& x, const Vec& y,
                double t, const IntegratorConfig& cfg);
/// phi_t(x + y) - x, the fiber preserving lift based at x.
Vec fiber_lifted_flow(const VectorFieldSpec& spec, const Vec& x, const Vec& y,
                      double t, const IntegratorConfig& cfg);
/// |X(phi_t(x))|^-1 phi-lift of |X(x)| y.
Vec rescaled_lifted_flow(const VectorFieldSpec& spec, const Vec& x,
                         const Vec& y, double t, const IntegratorConfig& cfg);
/// |X(x)|^-1 (phi_t(x + |X(x)| y) - x).
Vec rescaled_fiber_lifted_flow(const VectorFieldSpec& spec, const Vec& x,
                               const Vec& y, double t,
                               const IntegratorConfig& cfg);

/// Sampled orbit data, times ascending.
struct OrbitSegment {
  std::vector<double> times;
  std::vector<Vec> points;
  std::vector<Mat> fundamentals;  // empty unless integrated variationally
};

OrbitSegment to_segment(const Trajectory& traj);

}  // namespace singflow
