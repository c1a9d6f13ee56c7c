#include "singflow/poincare.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

namespace singflow {
namespace {

// Orbit of y over [0, T], truncated just inside the domain exit when the
// orbit escapes; scanning code only needs the orbit as far as it exists.
Trajectory orbit_or_truncated(const VectorFieldSpec& spec, const Vec& y,
                              double T, const IntegratorConfig& icfg) {
  try {
    return integrate(spec, y, T, icfg);
  } catch (const EscapeError& e) {
    const double tcut = e.exit_time * (1.0 - 1e-6);
    if (std::abs(tcut) < 1e-300) return integrate(spec, y, 0.0, icfg);
    return integrate(spec, y, tcut, icfg);
  }
}

// Lazily grown dense orbit of a fixed point, evaluable at any reachable time
// of either sign.
class OrbitEval {
 public:
  OrbitEval(const VectorFieldSpec& spec, Vec z, const IntegratorConfig& icfg)
      : spec_(spec), z_(std::move(z)), icfg_(icfg) {}

  Vec at(double tau) {
    ensure(tau);
    if (tau >= 0.0) {
      if (!fwd_ || tau > fwd_->t_end() * (1.0 + 1e-12))
        return tau == 0.0 ? z_ : fwd_->point(std::min(tau, fwd_->t_end()));
      return fwd_->point(std::min(tau, fwd_->t_end()));
    }
    return bwd_->point(std::max(tau, bwd_->t_end()));
  }

  double hi() const { return fwd_ ? fwd_->t_end() : 0.0; }
  double lo() const { return bwd_ ? bwd_->t_end() : 0.0; }

  void ensure(double tau) {
    if (tau >= 0.0) {
      if ((!fwd_ || fwd_->t_end() < tau) && tau > 0.0) {
        if (fwd_capped_) {
          if (tau > fwd_->t_end())
            throw EscapeError("holonomy orbit left the field domain",
                              fwd_->t_end());
          return;
        }
        const double want = tau + std::max(0.25, 0.25 * tau);
        Trajectory t = orbit_or_truncated(spec_, z_, want, icfg_);
        if (t.t_end() < want * (1.0 - 1e-9)) fwd_capped_ = true;
        fwd_ = std::move(t);
        if (fwd_capped_ && tau > fwd_->t_end())
          throw EscapeError("holonomy orbit left the field domain",
                            fwd_->t_end());
      }
    } else {
      if (!bwd_ || bwd_->t_end() > tau) {
        if (bwd_capped_) {
          if (tau < bwd_->t_end())
            throw EscapeError("holonomy orbit left the field domain",
                              bwd_->t_end());
          return;
        }
        const double want = tau - std::max(0.25, 0.25 * (-tau));
        Trajectory t = orbit_or_truncated(spec_, z_, want, icfg_);
        if (t.t_end() > want * (1.0 - 1e-9)) bwd_capped_ = true;
        bwd_ = std::move(t);
        if (bwd_capped_ && tau < bwd_->t_end())
          throw EscapeError("holonomy orbit left the field domain",
                            bwd_->t_end());
      }
    }
  }

 private:
  const VectorFieldSpec& spec_;
  Vec z_;
  IntegratorConfig icfg_;
  std::optional<Trajectory> fwd_, bwd_;
  bool fwd_capped_ = false;
  bool bwd_capped_ = false;
};

// Roots of a continuous scalar function on [a, b], located by a sign change
// scan with the given step and refined by bisection to event_tol. Grid values
// below zero_scale in magnitude count as roots directly.
std::vector<double> scan_roots(const std::function<double(double)>& g,
                               double a, double b, double step,
                               double event_tol, double zero_scale) {
  std::vector<double> roots;
  if (!(b > a)) return roots;
  const int n = std::max(1, static_cast<int>(std::ceil((b - a) / step)));
  double prev_t = a;
  double prev_g = g(a);
  for (int i = 1; i <= n; ++i) {
    const double t = a + (b - a) * i / n;
    const double gi = g(t);
    if (std::abs(prev_g) <= zero_scale) {
      roots.push_back(prev_t);
    } else if (std::abs(gi) > zero_scale && prev_g * gi < 0.0) {
      double lo = prev_t, hi = t, glo = prev_g;
      while (hi - lo > event_tol) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm == 0.0) {
          lo = hi = mid;
          break;
        }
        if (glo * gm < 0.0)
          hi = mid;
        else {
          lo = mid;
          glo = gm;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    prev_t = t;
    prev_g = gi;
  }
  if (std::abs(prev_g) <= zero_scale) roots.push_back(prev_t);
  std::sort(roots.begin(), roots.end());
  std::vector<double> out;
  for (double r : roots)
    if (out.empty() || r - out.back() > 8.0 * std::max(event_tol, 1e-15))
      out.push_back(r);
  return out;
}

void check_nodes_regular(const VectorFieldSpec& spec, const Trajectory& traj,
                         double threshold) {
  for (double t : traj.node_times()) {
    if (spec.eval_raw(traj.point(t)).norm() < threshold)
      throw NearSingularityError(
          "orbit entered the singular threshold neighborhood; use the blowup "
          "operations there",
          t);
  }
}

// Newton solve of <Z(theta) - xs, Xs> = 0 from theta_init, confined to
// [theta_init - guard, theta_init + guard]. Returns the root or nullopt.
std::optional<double> section_newton(const VectorFieldSpec& spec, OrbitEval& Z,
                                     const Vec& xs, const Vec& Xs,
                                     double theta_init, double guard,
                                     double event_tol) {
  double theta = theta_init;
  const double dg_floor = 1e-6 * Xs.squaredNorm();
  for (int it = 0; it < 50; ++it) {
    const Vec p = Z.at(theta);
    const double g = (p - xs).dot(Xs);
    const double dg = spec.eval_raw(p).dot(Xs);
    if (std::abs(dg) < dg_floor) return std::nullopt;
    double step = -g / dg;
    step = std::clamp(step, -0.5 * guard, 0.5 * guard);
    theta += step;
    if (std::abs(theta - theta_init) > guard) return std::nullopt;
    if (std::abs(step) < 0.25 * event_tol) return theta;
  }
  return std::nullopt;
}

struct HolonomyResult {
  HolonomyTrace trace;
  Vec base_end;
  Vec landing;
  double theta_end = 0.0;
};

HolonomyResult holonomy_run(const VectorFieldSpec& spec, const Vec& x,
                            const Vec& z, double T, const PoincareConfig& pcfg,
                            const IntegratorConfig& icfg, bool refine_end) {
  pcfg.validate();
  icfg.validate();
  const double sing_floor = pcfg.sing_threshold * spec.field_scale();
  const Vec Xx = spec.eval(x);
  if (Xx.norm() < sing_floor)
    throw NearSingularityError("holonomy: base point is nearly singular", 0.0);

  Trajectory base = integrate(spec, x, T, icfg);
  check_nodes_regular(spec, base, sing_floor);

  // Sample grid: accepted base nodes, subdivided so gaps stay below t0 / 2.
  std::vector<double> samples;
  {
    const std::vector<double> nodes = base.node_times();
    const double cap = pcfg.t0 / 2.0;
    samples.push_back(nodes.front());
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      const double gap = nodes[i] - nodes[i - 1];
      const int k = std::max(1, static_cast<int>(std::ceil(std::abs(gap) / cap)));
      for (int j = 1; j <= k; ++j)
        samples.push_back(nodes[i - 1] + gap * j / k);
    }
  }

  OrbitEval Z(spec, z, icfg);
  HolonomyResult res;

  // Starting crossing. On section already (the usual case) means Newton from
  // zero; otherwise a full scan of the window, which must isolate one root.
  double theta_prev;
  {
    const double g0 = (z - x).dot(Xx);
    const double on_scale = 1e-10 * Xx.norm() * std::max(1.0, (z - x).norm());
    std::optional<double> th;
    if (std::abs(g0) <= on_scale)
      th = section_newton(spec, Z, x, Xx, 0.0, pcfg.t0, icfg.event_tol);
    if (!th) {
      Z.ensure(pcfg.t0);
      Z.ensure(-pcfg.t0);
      const double lo = std::max(-pcfg.t0, Z.lo());
      const double hi = std::min(pcfg.t0, Z.hi());
      auto g = [&](double tau) { return (Z.at(tau) - x).dot(Xx); };
      const double zs = 1e-13 * Xx.norm() * std::max(1.0, x.norm());
      std::vector<double> roots =
          scan_roots(g, lo, hi, pcfg.t0 / 8.0, icfg.event_tol, zs);
      std::vector<double> valid;
      for (double r : roots)
        if ((Z.at(r) - x).norm() < pcfg.delta * Xx.norm()) valid.push_back(r);
      if (valid.empty())
        throw NoCrossingError(
            "holonomy: starting point has no section crossing in the window");
      if (valid.size() > 1)
        throw AmbiguousCrossingError(
            "holonomy: starting point crosses the section several times");
      th = valid[0];
    }
    theta_prev = *th;
  }

  double s_prev = samples.front();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double s = samples[i];
    const Vec xs = base.point(s);
    const Vec Xs = spec.eval_raw(xs);
    const double ns = Xs.norm();
    if (ns < sing_floor)
      throw NearSingularityError(
          "holonomy: base orbit entered the singular threshold", s);

    double theta;
    if (i == 0) {
      theta = theta_prev;
    } else {
      const double init = theta_prev + (s - s_prev);
      std::optional<double> th =
          section_newton(spec, Z, xs, Xs, init, pcfg.t0, icfg.event_tol);
      if (!th) {
        // Local rescue scan around the predicted time.
        auto g = [&](double tau) { return (Z.at(tau) - xs).dot(Xs); };
        Z.ensure(init + pcfg.t0);
        Z.ensure(init - pcfg.t0);
        const double lo = std::max(init - pcfg.t0, Z.lo());
        const double hi = std::min(init + pcfg.t0, Z.hi());
        std::vector<double> roots = scan_roots(g, lo, hi, pcfg.t0 / 16.0,
                                               icfg.event_tol,
                                               1e-13 * ns * (1.0 + xs.norm()));
        if (roots.empty())
          throw NoCrossingError("holonomy: lost the moving section at base time " +
                                std::to_string(s));
        double best = roots[0];
        for (double r : roots)
          if (std::abs(r - init) < std::abs(best - init)) best = r;
        theta = best;
      } else {
        theta = *th;
      }
    }

    const Vec offset = Z.at(theta) - xs;
    const double rescaled = offset.norm() / ns;
    if (rescaled >= pcfg.delta)
      throw TubeEscapeError("holonomy left the flow tube", s);

    res.trace.base_times.push_back(s);
    res.trace.crossing_times.push_back(theta);
    res.trace.rescaled_offsets.push_back(rescaled);
    theta_prev = theta;
    s_prev = s;
  }

  res.base_end = base.end_point();
  res.theta_end = res.trace.crossing_times.back();
  if (refine_end) {
    // Endpoint accuracy: fresh integration to the estimated crossing time,
    // then a first order time correction instead of the dense interpolant.
    Vec w = res.theta_end == 0.0
                ? z
                : orbit_or_truncated(spec, z, res.theta_end, icfg).end_point();
    const Vec XT = spec.eval_raw(res.base_end);
    for (int it = 0; it < 3; ++it) {
      const double g = (w - res.base_end).dot(XT);
      const double dg = spec.eval_raw(w).dot(XT);
      if (std::abs(dg) < 1e-12 * XT.squaredNorm()) break;
      const double dtau = -g / dg;
      w += dtau * spec.eval_raw(w);
      res.theta_end += dtau;
      if (std::abs(dtau) < 1e-16 * std::max(1.0, std::abs(res.theta_end)))
        break;
    }
    res.landing = w;
  } else {
    res.landing = Z.at(res.theta_end);
  }
  return res;
}

// One holonomy piece with |t| <= 1: x + u.vec carried to the section at
// phi_t(x). Returns the projected image and the arrival time.
std::pair<NormalVector, double> holonomy_piece(const VectorFieldSpec& spec,
                                               const NormalVector& u, double t,
                                               const PoincareConfig& pcfg,
                                               const IntegratorConfig& icfg) {
  const Vec Xx = spec.eval(u.base);
  const double nx = Xx.norm();
  if (!(u.vec.norm() < pcfg.beta * nx))
    throw DomainError(
        "nonlinear_poincare: fiber vector must be shorter than beta |X|");
  HolonomyResult hr =
      holonomy_run(spec, u.base, u.base + u.vec, t, pcfg, icfg, true);
  NormalVector img = normal_project(spec, hr.base_end, hr.landing - hr.base_end);
  return {img, hr.theta_end};
}

}  // namespace

void PoincareConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0))
    throw DomainError("poincare config: beta must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0))
    throw DomainError("poincare config: delta must lie in (0, 1)");
  if (!(t0 > 0.0)) throw DomainError("poincare config: t0 must be positive");
  if (!(rho > 0.0)) throw DomainError("poincare config: rho must be positive");
  if (!(sing_threshold > 0.0))
    throw DomainError("poincare config: sing_threshold must be positive");
}

NormalVector normal_project(const VectorFieldSpec& spec, const Vec& x,
                            const Vec& w) {
  const Vec Xx = spec.eval(x);
  const double n2 = Xx.squaredNorm();
  if (n2 <= 0.0)
    throw DomainError("normal_project: base point is a singularity");
  return NormalVector{x, w - (Xx.dot(w) / n2) * Xx};
}

void check_normal(const VectorFieldSpec& spec, const NormalVector& u) {
  if (u.base.size() != spec.dim() || u.vec.size() != spec.dim())
    throw DomainError("normal vector: dimension mismatch");
  const Vec Xx = spec.eval(u.base);
  const double nx = Xx.norm();
  if (nx <= 0.0)
    throw DomainError("normal vector: base point is a singularity");
  if (std::abs(Xx.dot(u.vec)) > 1e-9 * nx * std::max(u.vec.norm(), 1e-300))
    throw DomainError("normal vector: not orthogonal to the field");
}

NormalVector linear_poincare(const VectorFieldSpec& spec,
                             const NormalVector& u, double t,
                             const PoincareConfig& pcfg,
                             const IntegratorConfig& icfg) {
  pcfg.validate();
  icfg.validate();
  check_normal(spec, u);
  Trajectory traj = integrate(spec, u.base, t, icfg, true);
  check_nodes_regular(spec, traj, pcfg.sing_threshold * spec.field_scale());
  return normal_project(spec, traj.end_point(),
                        traj.end_fundamental() * u.vec);
}

NormalVector rescaled_linear_poincare(const VectorFieldSpec& spec,
                                      const NormalVector& u, double t,
                                      const PoincareConfig& pcfg,
                                      const IntegratorConfig& icfg) {
  NormalVector psi = linear_poincare(spec, u, t, pcfg, icfg);
  const double nx = spec.eval_raw(u.base).norm();
  const double nt = spec.eval_raw(psi.base).norm();
  psi.vec *= nx / nt;
  return psi;
}

double crossing_time(const VectorFieldSpec& spec, const Vec& x, const Vec& y,
                     double window, double delta,
                     const IntegratorConfig& icfg) {
  icfg.validate();
  if (!(window > 0.0) || !(delta > 0.0))
    throw DomainError("crossing_time: window and delta must be positive");
  const Vec Xx = spec.eval(x);
  const double nx = Xx.norm();
  if (nx <= 0.0)
    throw DomainError("crossing_time: section base is a singularity");

  Trajectory fwd = orbit_or_truncated(spec, y, window, icfg);
  Trajectory bwd = orbit_or_truncated(spec, y, -window, icfg);
  auto orbit_point = [&](double tau) -> Vec {
    return tau >= 0.0 ? fwd.point(tau) : bwd.point(tau);
  };
  auto g = [&](double tau) { return (orbit_point(tau) - x).dot(Xx); };

  const double lo = bwd.t_end();
  const double hi = fwd.t_end();
  const double zs = 1e-13 * nx * std::max(1.0, x.norm());
  std::vector<double> roots =
      scan_roots(g, lo, hi, window / 8.0, icfg.event_tol, zs);
  std::vector<double> valid;
  for (double r : roots)
    if ((orbit_point(r) - x).norm() < delta * nx) valid.push_back(r);

  if (valid.empty())
    throw NoCrossingError(
        "crossing_time: no section crossing inside the window");
  if (valid.size() > 1)
    throw AmbiguousCrossingError(
        "crossing_time: " + std::to_string(valid.size()) +
        " crossings inside the window; shrink the window or delta");
  return valid[0];
}

HolonomyTrace holonomy_trace(const VectorFieldSpec& spec, const Vec& x,
                             const Vec& z, double T,
                             const PoincareConfig& pcfg,
                             const IntegratorConfig& icfg) {
  return holonomy_run(spec, x, z, T, pcfg, icfg, false).trace;
}

PoincareImage nonlinear_poincare(const VectorFieldSpec& spec,
                                 const NormalVector& u, double t,
                                 const PoincareConfig& pcfg,
                                 const IntegratorConfig& icfg) {
  pcfg.validate();
  icfg.validate();
  check_normal(spec, u);
  if (t == 0.0)
    throw DomainError("nonlinear_poincare: holonomy time must be nonzero");

  const int pieces =
      std::max(1, static_cast<int>(std::ceil(std::abs(t) - 1e-12)));
  const double piece = t / pieces;
  NormalVector cur = u;
  double arrival = 0.0;
  for (int p = 0; p < pieces; ++p) {
    auto [img, tp] = holonomy_piece(spec, cur, piece, pcfg, icfg);
    arrival += tp;
    cur = img;
  }

  PoincareImage out;
  out.image = cur;
  out.crossing_time = arrival;
  out.requested_time = t;
  if (arrival / t <= 0.0)
    throw NoCrossingError(
        "nonlinear_poincare: arrival time has the wrong sign");
  out.ratio_bound = std::max(t / arrival, arrival / t);
  return out;
}

PoincareImage rescaled_nonlinear_poincare(const VectorFieldSpec& spec,
                                          const NormalVector& v, double t,
                                          const PoincareConfig& pcfg,
                                          const IntegratorConfig& icfg) {
  pcfg.validate();
  const Vec Xx = spec.eval(v.base);
  const double nx = Xx.norm();
  if (nx <= 0.0)
    throw DomainError("rescaled_nonlinear_poincare: singular base point");
  if (!(v.vec.norm() < pcfg.beta))
    throw DomainError(
        "rescaled_nonlinear_poincare: |v| must be below beta in rescaled "
        "coordinates");
  NormalVector u{v.base, nx * v.vec};
  PoincareImage out = nonlinear_poincare(spec, u, t, pcfg, icfg);
  out.image.vec /= spec.eval_raw(out.image.base).norm();
  return out;
}

}  // namespace singflow
