#include "singflow/blowup.hpp"

#include <algorithm>
#include <cmath>

#include "singflow/expm.hpp"

namespace singflow {
namespace {

Vec unit_or_throw(const Vec& u) {
  const double n = u.norm();
  if (n <= 0.0) throw DomainError("blowup: zero direction vector");
  return u / n;
}

}  // namespace

void BlowupConfig::validate() const {
  if (!(beta_prime > 0.0 && beta_prime < 1.0))
    throw DomainError("blowup config: beta_prime must lie in (0, 1)");
  if (!(t0 > 0.0)) throw DomainError("blowup config: t0 must be positive");
  if (newton_max_iter < 1)
    throw DomainError("blowup config: newton_max_iter must be positive");
}

Vec canonical_direction(const Vec& u) {
  Vec v = unit_or_throw(u);
  int imax = 0;
  for (int i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
  if (v[imax] < 0.0) v = -v;
  return v;
}

BlowupPoint BlowupPoint::regular(Vec x) {
  BlowupPoint p;
  p.boundary_ = false;
  p.x_ = std::move(x);
  return p;
}

BlowupPoint BlowupPoint::boundary(SingularityRecord sing, const Vec& dir) {
  if (dir.size() != sing.position.size())
    throw DomainError("blowup point: direction dimension mismatch");
  BlowupPoint p;
  p.boundary_ = true;
  p.dir_ = canonical_direction(dir);
  p.sing_ = std::move(sing);
  return p;
}

const Vec& BlowupPoint::point() const {
  if (boundary_) throw DomainError("blowup point: boundary point has no ambient position");
  return x_;
}

const SingularityRecord& BlowupPoint::sing() const {
  if (!boundary_) throw DomainError("blowup point: regular point has no singularity");
  return *sing_;
}

const Vec& BlowupPoint::dir() const {
  if (!boundary_) throw DomainError("blowup point: regular point has no direction");
  return dir_;
}

Vec chart_point(const ChartCoords& c) { return c.sing.position + c.s * c.u; }

ChartCoords chart_coords(const SingularityRecord& sing, const Vec& x,
                         double eps) {
  if (!(eps > 0.0)) throw DomainError("chart_coords: eps must be positive");
  const Vec d = x - sing.position;
  const double s = d.norm();
  if (s >= eps)
    throw DomainError("chart_coords: point outside the chart radius");
  if (s == 0.0)
    throw NeedsDirectionError(
        "chart_coords: the singularity itself needs a direction tag");
  ChartCoords c;
  c.sing = sing;
  c.u = canonical_direction(d);
  // Carry the antipodal flip on the sign of s so the ambient point survives.
  c.s = (c.u.dot(d) >= 0.0) ? s : -s;
  return c;
}

double chart_radius(const VectorFieldSpec& spec,
                    const std::vector<SingularityRecord>& sings) {
  double cap = spec.domain_radius() / 10.0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sings.size(); ++i)
    for (std::size_t j = i + 1; j < sings.size(); ++j)
      min_gap = std::min(min_gap,
                         (sings[i].position - sings[j].position).norm());
  if (!std::isfinite(min_gap)) return cap;
  return std::min(0.2 * min_gap, cap);
}

BlowupPoint to_blowup(const VectorFieldSpec& spec,
                      const std::vector<SingularityRecord>& sings,
                      const Vec& x, double eps) {
  if (!(eps > 0.0)) throw DomainError("to_blowup: eps must be positive");
  if (x.norm() > spec.domain_radius())
    throw DomainError("to_blowup: point outside the field domain");
  for (const SingularityRecord& s : sings) {
    const double d = (x - s.position).norm();
    if (d <= 64.0 * std::numeric_limits<double>::epsilon() *
                 std::max(1.0, s.position.norm()))
      throw NeedsDirectionError(
          "to_blowup: point coincides with a singularity; pass a direction");
  }
  if (spec.eval_raw(x).norm() == 0.0)
    throw DomainError("to_blowup: point is an undeclared zero of the field");
  return BlowupPoint::regular(x);
}

Vec extended_flow_boundary(const SingularityRecord& sing, const Vec& u,
                           double t) {
  const Vec v = unit_or_throw(u);
  const Vec w = expm(Mat(t * sing.jacobian)) * v;
  return canonical_direction(w);
}

Vec extended_unit_field(const SingularityRecord& sing, const Vec& u) {
  const Vec v = unit_or_throw(u);
  const Vec w = sing.jacobian * v;
  const double n = w.norm();
  if (n <= 0.0)
    throw DegenerateSingularityError(
        "extended_unit_field: direction in the kernel of the linearization");
  return w / n;
}

double rescaling_ratio(const VectorFieldSpec& spec, const BlowupPoint& p,
                       double t, const PoincareConfig& pcfg,
                       const IntegratorConfig& icfg) {
  if (p.is_boundary()) {
    const Mat& j = p.sing().jacobian;
    const Vec u = p.dir();
    // |DX u| / |DX e^{tDX} u| with the unnormalized propagated vector: the
    // regular ratio |X(x)|/|X(phi_t x)| at sigma + s u is s|DX u| / s|DX
    // e^{tDX} u| + O(s), so normalizing the transport would cancel the growth.
    const Vec ut = expm(Mat(t * j)) * u;
    const double num = (j * u).norm();
    const double den = (j * ut).norm();
    if (den <= 0.0)
      throw DegenerateSingularityError("rescaling_ratio: degenerate transport");
    return num / den;
  }
  pcfg.validate();
  icfg.validate();
  const Vec& x = p.point();
  const double nx = spec.eval(x).norm();
  const double floor = pcfg.sing_threshold * spec.field_scale();
  if (nx < floor)
    throw NearSingularityError(
        "rescaling_ratio: regular point inside the singular threshold; use a "
        "boundary tag",
        0.0);
  Trajectory traj = integrate(spec, x, t, icfg);
  for (double s : traj.node_times())
    if (spec.eval_raw(traj.point(s)).norm() < floor)
      throw NearSingularityError(
          "rescaling_ratio: orbit entered the singular threshold", s);
  return nx / spec.eval_raw(traj.end_point()).norm();
}

Vec extended_lifted_boundary(const SingularityRecord& sing, const Vec& u,
                             const Vec& y, double t) {
  const Vec v = unit_or_throw(u);
  const Mat et = expm(Mat(t * sing.jacobian));
  const double num = (sing.jacobian * v).norm();
  const double den = (sing.jacobian * (et * v)).norm();
  return (num / den) * (et * y);
}

Vec extended_fiber_lifted_boundary(const SingularityRecord& sing, const Vec& u,
                                   const Vec& y, double t) {
  const Vec v = unit_or_throw(u);
  const Mat et = expm(Mat(t * sing.jacobian));
  const double n = (sing.jacobian * v).norm();
  if (n <= 0.0)
    throw DegenerateSingularityError(
        "extended_fiber_lifted_boundary: direction in the kernel");
  return et * y + (et * v - v) / n;
}

double theta_functional(const VectorFieldSpec& spec, const BlowupPoint& p,
                        double t, const Vec& y, double tau,
                        const IntegratorConfig& icfg) {
  if (p.is_boundary()) {
    const SingularityRecord& s = p.sing();
    const Vec u = p.dir();
    const Vec ut_raw = expm(Mat(t * s.jacobian)) * u;
    const Vec ut = ut_raw / ut_raw.norm();  // transported lift, not canonical
    const Vec w = extended_lifted_boundary(s, u, y, t);
    const Vec v = extended_fiber_lifted_boundary(s, ut, w, tau);
    return v.dot(extended_unit_field(s, ut));
  }
  icfg.validate();
  const Vec& x = p.point();
  Trajectory traj = integrate(spec, x, t, icfg);
  const Vec xt = traj.end_point();
  const Vec w = rescaled_lifted_flow(spec, x, y, t, icfg);
  const Vec v = rescaled_fiber_lifted_flow(spec, xt, w, tau, icfg);
  const Vec Xt = spec.eval_raw(xt);
  return v.dot(Xt) / Xt.norm();
}

ExtendedPoincare extended_poincare_boundary(const SingularityRecord& sing,
                                            const Vec& u, const Vec& y,
                                            double t, const BlowupConfig& cfg) {
  cfg.validate();
  if (!(y.norm() < cfg.beta_prime))
    throw DomainError(
        "extended_poincare_boundary: |y| must be below beta_prime");
  if (t < 0.0 || t > 1.0)
    throw DomainError("extended_poincare_boundary: t must lie in [0, 1]");

  const Mat& j = sing.jacobian;
  const Vec v = unit_or_throw(u);
  const Mat et = expm(Mat(t * j));
  const Vec ut_raw = et * v;
  const Vec ut = ut_raw / ut_raw.norm();
  const Vec unit_target = extended_unit_field(sing, ut);
  const double ratio = (j * v).norm() / (j * ut_raw).norm();
  const Vec w = ratio * (et * y);  // lifted image at time t
  const double ju_norm = (j * ut).norm();

  // theta(tau) = < e^{tau J} w + (e^{tau J} u_t - u_t)/|J u_t|, unit_target >
  // with derivative < J e^{tau J} (w + u_t / |J u_t|), unit_target >.
  auto theta = [&](double tau) {
    const Mat etau = expm(Mat(tau * j));
    const Vec val = etau * w + (etau * ut - ut) / ju_norm;
    return val.dot(unit_target);
  };
  auto dtheta = [&](double tau) {
    const Mat etau = expm(Mat(tau * j));
    const Vec val = j * (etau * (w + ut / ju_norm));
    return val.dot(unit_target);
  };

  // Theta scales with the lifted offset; near the root the slope is 1 + O(|w|).
  const double scale = std::max(1.0, w.norm());
  double lo = -cfg.t0, hi = cfg.t0;
  double flo = theta(lo), fhi = theta(hi);
  bool bracketed = flo * fhi < 0.0;

  double tau = 0.0;
  double f = theta(tau);
  for (int it = 0; it < cfg.newton_max_iter && std::abs(f) > 1e-13 * scale;
       ++it) {
    // Once a sign change is seen, keep shrinking a valid bracket of either
    // orientation; Newton steps that leave it fall back to bisection.
    if (bracketed) {
      if ((f < 0.0) == (flo < 0.0)) {
        lo = tau;
        flo = f;
      } else {
        hi = tau;
        fhi = f;
      }
    } else if (f * flo < 0.0) {
      bracketed = true;
      hi = tau;
      fhi = f;
    } else if (f * fhi < 0.0) {
      bracketed = true;
      lo = tau;
      flo = f;
    }
    const double df = dtheta(tau);
    double next = std::abs(df) > 1e-14 * scale ? tau - f / df
                                               : 0.5 * (lo + hi);
    if (next <= lo || next >= hi) {
      // Clamp into the window; without a bracket Newton may still recover.
      next = bracketed ? 0.5 * (lo + hi)
                       : std::clamp(next, -cfg.t0, cfg.t0);
      if (next == tau) break;
    }
    tau = next;
    f = theta(tau);
  }
  if (std::abs(f) > 1e-10 * scale)
    throw RootFindError(
        "extended_poincare_boundary: no section crossing within the time "
        "window",
        std::abs(f) / scale);

  const Mat ett = expm(Mat((t + tau) * j));
  ExtendedPoincare out;
  out.tau = tau;
  out.image = ratio * (ett * y) + (ett * v - et * v) / (j * (et * v)).norm();
  return out;
}

Vec extended_rescaled_linear_poincare(const VectorFieldSpec& spec,
                                      const BlowupPoint& p, const Vec& v,
                                      double t, const PoincareConfig& pcfg,
                                      const IntegratorConfig& icfg) {
  if (!p.is_boundary()) {
    NormalVector u = normal_project(spec, p.point(), v);
    if ((u.vec - v).norm() > 1e-9 * std::max(1.0, v.norm()))
      throw DomainError(
          "extended_rescaled_linear_poincare: v must be normal to the field");
    return rescaled_linear_poincare(spec, u, t, pcfg, icfg).vec;
  }
  const SingularityRecord& s = p.sing();
  const Vec u = p.dir();
  const Vec unit_here = extended_unit_field(s, u);
  if (std::abs(unit_here.dot(v)) > 1e-9 * std::max(1.0, v.norm()))
    throw DomainError(
        "extended_rescaled_linear_poincare: v must be orthogonal to the unit "
        "field at the base direction");
  const Vec w = extended_lifted_boundary(s, u, v, t);
  const Vec ut_raw = expm(Mat(t * s.jacobian)) * u;
  const Vec n = extended_unit_field(s, ut_raw / ut_raw.norm());
  return w - w.dot(n) * n;
}

}  // namespace singflow
