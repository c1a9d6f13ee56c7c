#include "singflow/integrate.hpp"

#include <algorithm>
#include <cmath>

namespace singflow {
namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kC2 = 1.0 / 5.0, kC3 = 3.0 / 10.0, kC4 = 4.0 / 5.0,
                 kC5 = 8.0 / 9.0;
constexpr double kA21 = 1.0 / 5.0;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                 kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0,
                 kA63 = 46732.0 / 5247.0, kA64 = 49.0 / 176.0,
                 kA65 = -5103.0 / 18656.0;
constexpr double kA71 = 35.0 / 384.0, kA73 = 500.0 / 1113.0,
                 kA74 = 125.0 / 192.0, kA75 = -2187.0 / 6784.0,
                 kA76 = 11.0 / 84.0;
// Difference between the 5th and 4th order weights.
constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0,
                 kE4 = 71.0 / 1920.0, kE5 = -17253.0 / 339200.0,
                 kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;
// Dense output weights for the quartic continuous extension.
constexpr double kD1 = -12715105075.0 / 11282082432.0;
constexpr double kD3 = 87487479700.0 / 32700410799.0;
constexpr double kD4 = -10690763975.0 / 1880347072.0;
constexpr double kD5 = 701980252875.0 / 199316789632.0;
constexpr double kD6 = -1453857185.0 / 822651844.0;
constexpr double kD7 = 69997945.0 / 29380423.0;

bool finite(const Vec& v) { return v.allFinite(); }

double rms_norm(const Vec& v) {
  return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

// Starting step size estimate from the first two derivative samples.
double initial_step(const Rhs& rhs, const Vec& y0, const Vec& f0, double dir,
                    double span, const IntegratorConfig& cfg) {
  const int n = static_cast<int>(y0.size());
  Vec sc(n);
  for (int i = 0; i < n; ++i)
    sc[i] = cfg.abs_tol + cfg.rel_tol * std::abs(y0[i]);
  const double d0 = rms_norm(Vec(y0.cwiseQuotient(sc)));
  const double d1 = rms_norm(Vec(f0.cwiseQuotient(sc)));
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * (d0 / d1);
  h0 = std::min(h0, span);
  Vec y1 = y0 + dir * h0 * f0;
  Vec f1(n);
  rhs(y1, f1);
  double dmax = d1;
  if (finite(f1)) {
    const double d2 = rms_norm(Vec((f1 - f0).cwiseQuotient(sc))) / h0;
    dmax = std::max(d1, d2);
  }
  double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                            : std::pow(0.01 / dmax, 0.2);
  double h = std::min({100.0 * h0, h1, span});
  if (cfg.max_step > 0.0) h = std::min(h, cfg.max_step);
  return std::max(h, 1e-12 * span);
}

Vec dense_eval(const DenseStep& s, double t) {
  const double theta = (t - s.t0) / s.h;
  const double theta1 = 1.0 - theta;
  return s.r1 +
         theta * (s.r2 + theta1 * (s.r3 + theta * (s.r4 + theta1 * s.r5)));
}

}  // namespace

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0) || !(event_tol > 0.0))
    throw DomainError("integrator config: tolerances must be positive");
  if (max_step < 0.0)
    throw DomainError("integrator config: max_step must be non negative");
  if (event_tol > rel_tol)
    throw DomainError("integrator config: event_tol must not exceed rel_tol");
}

Vec Trajectory::state(double t) const {
  if (steps_.empty()) return end_state_;
  const double span = std::abs(t_end_ - t_begin_);
  const double slack = 1e-9 * std::max(1.0, span);
  const double dir = t_end_ >= t_begin_ ? 1.0 : -1.0;
  if ((t - t_begin_) * dir < -slack || (t - t_end_) * dir > slack)
    throw DomainError("trajectory: dense evaluation outside the time span");
  // Binary search for the step whose interval contains t.
  int lo = 0, hi = static_cast<int>(steps_.size()) - 1;
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    const DenseStep& s = steps_[mid];
    if ((t - (s.t0 + s.h)) * dir > 0.0)
      lo = mid + 1;
    else
      hi = mid;
  }
  return dense_eval(steps_[lo], t);
}

std::vector<double> Trajectory::node_times() const {
  std::vector<double> ts;
  ts.reserve(steps_.size() + 1);
  for (const DenseStep& s : steps_) ts.push_back(s.t0);
  ts.push_back(t_end_);
  return ts;
}

Mat Trajectory::fundamental(double t) const {
  if (!variational_)
    throw DomainError("trajectory: no variational data was integrated");
  Vec s = state(t);
  return Eigen::Map<const Mat>(s.data() + point_dim_, point_dim_, point_dim_);
}

Mat Trajectory::end_fundamental() const {
  if (!variational_)
    throw DomainError("trajectory: no variational data was integrated");
  return Eigen::Map<const Mat>(end_state_.data() + point_dim_, point_dim_,
                               point_dim_);
}

Trajectory integrate_rhs(const Rhs& rhs, const Vec& y0, double T,
                         const IntegratorConfig& cfg,
                         const EscapeMargin& margin) {
  cfg.validate();
  Trajectory traj;
  traj.end_state_ = y0;
  traj.point_dim_ = static_cast<int>(y0.size());
  if (T == 0.0) return traj;
  if (!finite(y0)) throw DomainError("integrate: non finite initial state");
  if (margin && margin(y0) <= 0.0)
    throw EscapeError("integrate: initial state outside the domain", 0.0);

  const int n = static_cast<int>(y0.size());
  const double dir = T > 0.0 ? 1.0 : -1.0;
  const double span = std::abs(T);

  Vec y = y0;
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ynew(n), w(n);
  rhs(y, k1);
  if (!finite(k1))
    throw DomainError("integrate: field not finite at the initial state");

  double h = dir * initial_step(rhs, y, k1, dir, span, cfg);
  double t = 0.0;
  bool rejected_prev = false;
  long steps_taken = 0;

  while ((T - t) * dir > 0.0) {
    if (++steps_taken > 5000000)
      throw StiffnessError("integrate: step budget exhausted", t);
    if (std::abs(h) < 1e-14 * std::max(1.0, span))
      throw StiffnessError("integrate: step size underflow", t);
    if ((t + h - T) * dir > 0.0) h = T - t;

    w = y + h * (kA21 * k1);
    rhs(w, k2);
    w = y + h * (kA31 * k1 + kA32 * k2);
    rhs(w, k3);
    w = y + h * (kA41 * k1 + kA42 * k2 + kA43 * k3);
    rhs(w, k4);
    w = y + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4);
    rhs(w, k5);
    w = y + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5);
    rhs(w, k6);
    ynew = y + h * (kA71 * k1 + kA73 * k3 + kA74 * k4 + kA75 * k5 + kA76 * k6);
    rhs(ynew, k7);

    if (!finite(ynew) || !finite(k7) || !finite(k2) || !finite(k3) ||
        !finite(k4) || !finite(k5) || !finite(k6)) {
      h *= 0.5;
      rejected_prev = true;
      continue;
    }

    double err2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] +
                            kE5 * k5[i] + kE6 * k6[i] + kE7 * k7[i]);
      const double sc =
          cfg.abs_tol +
          cfg.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err2 += sq(e / sc);
    }
    const double err = std::sqrt(err2 / n);

    if (err <= 1.0) {
      DenseStep s;
      s.t0 = t;
      s.h = h;
      s.r1 = y;
      s.r2 = ynew - y;
      s.r3 = h * k1 - s.r2;
      s.r4 = s.r2 - h * k7 - s.r3;
      s.r5 = h * (kD1 * k1 + kD3 * k3 + kD4 * k4 + kD5 * k5 + kD6 * k6 +
                  kD7 * k7);
      traj.steps_.push_back(std::move(s));
      t += h;
      y = ynew;
      k1 = k7;  // first-same-as-last

      if (margin && margin(y) <= 0.0) {
        // Exit time by bisection on the dense output of the exiting step.
        const DenseStep& last = traj.steps_.back();
        double a = last.t0, b = t;
        for (int it = 0; it < 200 && std::abs(b - a) > cfg.event_tol; ++it) {
          const double m = 0.5 * (a + b);
          if (margin(dense_eval(last, m)) > 0.0)
            a = m;
          else
            b = m;
        }
        throw EscapeError("integrate: orbit left the field domain",
                          0.5 * (a + b));
      }

      const double facmax = rejected_prev ? 1.0 : 5.0;
      const double fac =
          err > 1e-30 ? 0.9 * std::pow(err, -0.2) : facmax;
      h *= std::min(facmax, std::max(0.2, fac));
      if (cfg.max_step > 0.0 && std::abs(h) > cfg.max_step)
        h = dir * cfg.max_step;
      rejected_prev = false;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      rejected_prev = true;
    }
  }

  traj.t_end_ = t;
  traj.end_state_ = y;
  return traj;
}

Trajectory integrate(const VectorFieldSpec& spec, const Vec& x0, double T,
                     const IntegratorConfig& cfg, bool with_variational) {
  const int d = spec.dim();
  if (x0.size() != d) throw DomainError("integrate: dimension mismatch");
  if (x0.norm() > spec.domain_radius())
    throw DomainError("integrate: initial point outside the field domain");
  const double R = spec.domain_radius();
  EscapeMargin margin = [R, d](const Vec& y) { return R - y.head(d).norm(); };

  Trajectory traj;
  if (!with_variational) {
    Rhs rhs = [&spec](const Vec& y, Vec& dy) { dy = spec.eval_raw(y); };
    traj = integrate_rhs(rhs, x0, T, cfg, margin);
  } else {
    Vec y0(d + d * d);
    y0.head(d) = x0;
    Eigen::Map<Mat>(y0.data() + d, d, d) = Mat::Identity(d, d);
    Rhs rhs = [&spec, d](const Vec& y, Vec& dy) {
      dy.resize(y.size());
      const Vec x = y.head(d);
      dy.head(d) = spec.eval_raw(x);
      Eigen::Map<const Mat> m(y.data() + d, d, d);
      Eigen::Map<Mat>(dy.data() + d, d, d) = spec.jacobian_raw(x) * m;
    };
    traj = integrate_rhs(rhs, y0, T, cfg, margin);
    traj.variational_ = true;
  }
  traj.point_dim_ = d;
  return traj;
}

Trajectory integrate_pair(const VectorFieldSpec& spec, const Vec& x,
                          const Vec& z, double T, const IntegratorConfig& cfg) {
  const int d = spec.dim();
  if (x.size() != d || z.size() != d)
    throw DomainError("integrate_pair: dimension mismatch");
  const double R = spec.domain_radius();
  if (x.norm() > R || z.norm() > R)
    throw DomainError("integrate_pair: initial point outside the domain");
  Vec y0(2 * d);
  y0.head(d) = x;
  y0.tail(d) = z;
  Rhs rhs = [&spec, d](const Vec& y, Vec& dy) {
    dy.resize(2 * d);
    dy.head(d) = spec.eval_raw(y.head(d));
    dy.tail(d) = spec.eval_raw(y.tail(d));
  };
  EscapeMargin margin = [R, d](const Vec& y) {
    return R - std::max(y.head(d).norm(), y.tail(d).norm());
  };
  Trajectory traj = integrate_rhs(rhs, y0, T, cfg, margin);
  traj.point_dim_ = 2 * d;
  return traj;
}

Vec flow(const VectorFieldSpec& spec, const Vec& x, double t,
         const IntegratorConfig& cfg) {
  return integrate(spec, x, t, cfg).end_point();
}

Mat tangent_flow(const VectorFieldSpec& spec, const Vec& x, double t,
                 const IntegratorConfig& cfg) {
  return integrate(spec, x, t, cfg, true).end_fundamental();
}

Vec lifted_flow(const VectorFieldSpec& spec, const Vec& x, const Vec& y,
                double t, const IntegratorConfig& cfg) {
  const int d = spec.dim();
  if (t == 0.0) return y;
  Trajectory traj = integrate_pair(spec, x, x + y, t, cfg);
  return traj.end_state().tail(d) - traj.end_state().head(d);
}

Vec fiber_lifted_flow(const VectorFieldSpec& spec, const Vec& x, const Vec& y,
                      double t, const IntegratorConfig& cfg) {
  if (t == 0.0) return y;
  return flow(spec, x + y, t, cfg) - x;
}

Vec rescaled_lifted_flow(const VectorFieldSpec& spec, const Vec& x,
                         const Vec& y, double t, const IntegratorConfig& cfg) {
  const int d = spec.dim();
  const double nx = spec.eval(x).norm();
  if (nx <= 0.0)
    throw DomainError("rescaled_lifted_flow: base point is a singularity");
  if (t == 0.0) return y;
  Trajectory traj = integrate_pair(spec, x, x + nx * y, t, cfg);
  const Vec xt = traj.end_state().head(d);
  const double nxt = spec.eval_raw(xt).norm();
  if (nxt <= 0.0)
    throw NearSingularityError(
        "rescaled_lifted_flow: orbit endpoint is a singularity", t);
  return (traj.end_state().tail(d) - xt) / nxt;
}

Vec rescaled_fiber_lifted_flow(const VectorFieldSpec& spec, const Vec& x,
                               const Vec& y, double t,
                               const IntegratorConfig& cfg) {
  const double nx = spec.eval(x).norm();
  if (nx <= 0.0)
    throw DomainError(
        "rescaled_fiber_lifted_flow: base point is a singularity");
  if (t == 0.0) return y;
  return (flow(spec, x + nx * y, t, cfg) - x) / nx;
}

OrbitSegment to_segment(const Trajectory& traj) {
  OrbitSegment seg;
  const std::vector<double> ts = traj.node_times();
  const bool backward = traj.t_end() < traj.t_begin();
  seg.times.reserve(ts.size());
  seg.points.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double t = backward ? ts[ts.size() - 1 - i] : ts[i];
    seg.times.push_back(t);
    seg.points.push_back(traj.point(t));
    if (traj.has_variational()) seg.fundamentals.push_back(traj.fundamental(t));
  }
  return seg;
}

}  // namespace singflow
