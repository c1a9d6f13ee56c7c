#include "singflow/identify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "detail.hpp"

namespace singflow {
namespace {

using detail::min_orbit_distance;
using detail::orbit_capped;
using detail::point_str;

// Interior local minima of t -> d(phi_t(y), x) over [tlo, thi], each refined
// by ternary search. Minima at the window boundary are excluded: the value at
// |t| = tlo is dominated by the short-time drift t*|X|, not by a return.
std::vector<std::pair<double, double>> interior_return_minima(
    const Trajectory& traj, const Vec& x, double tlo, double thi) {
  std::vector<std::pair<double, double>> out;
  const double a = std::min(traj.t_begin(), traj.t_end());
  const double b = std::max(traj.t_begin(), traj.t_end());
  tlo = std::max(tlo, a);
  thi = std::min(thi, b);
  if (!(thi > tlo)) return out;
  const int n = 400;
  std::vector<double> d(n + 1);
  for (int i = 0; i <= n; ++i)
    d[i] = (traj.point(tlo + (thi - tlo) * i / n) - x).norm();
  for (int i = 1; i < n; ++i)
    if (d[i] < d[i - 1] && d[i] <= d[i + 1])
      out.push_back(min_orbit_distance(traj, x,
                                       tlo + (thi - tlo) * (i - 1) / n,
                                       tlo + (thi - tlo) * (i + 1) / n));
  return out;
}

PoincareConfig tube_cfg(const IdentifyConfig& idcfg) {
  PoincareConfig pc;
  pc.beta = std::min(0.45, 2.0 * idcfg.beta0);
  pc.delta = std::min(0.9, 2.0 * pc.beta);
  pc.t0 = idcfg.eps_time;
  return pc;
}

// A unit vector normal to X at x, deterministic in x.
Vec some_normal_dir(const VectorFieldSpec& spec, const Vec& x) {
  const Vec Xx = spec.eval(x);
  int k = 0;
  for (int i = 1; i < x.size(); ++i)
    if (std::abs(Xx[i]) < std::abs(Xx[k])) k = i;
  Vec e = Vec::Zero(x.size());
  e[k] = 1.0;
  Vec w = e - (e.dot(Xx) / Xx.squaredNorm()) * Xx;
  return w / w.norm();
}

double min_sing_distance(const std::vector<SingularityRecord>& sings,
                         const Vec& x) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : sings) d = std::min(d, (x - s.position).norm());
  return d;
}

}  // namespace

void IdentifyConfig::validate() const {
  if (!(r0 > 0.0)) throw DomainError("identify config: r0 must be positive");
  if (!(beta0 > 0.0 && beta0 < beta_bar))
    throw DomainError("identify config: need 0 < beta0 < beta_bar");
  if (!(beta_bar < 1.0))
    throw DomainError("identify config: beta_bar must lie below 1");
  if (!(eps_time > 0.0))
    throw DomainError("identify config: eps_time must be positive");
  if (!(time_scale >= 1.0))
    throw DomainError("identify config: time_scale C must be >= 1");
  if (samples < 1) throw DomainError("identify config: samples must be >= 1");
}

IdentificationMap identification(const VectorFieldSpec& spec, const Vec& y,
                                 const Vec& x, const Vec& u,
                                 const IdentifyConfig& idcfg,
                                 const IntegratorConfig& icfg) {
  idcfg.validate();
  icfg.validate();
  if ((x - y).norm() >= idcfg.r0)
    throw DomainError("identification: points are not r0-close");
  const Vec Xy = spec.eval(y);
  const Vec Xx = spec.eval(x);
  NormalVector src{y, u};
  check_normal(spec, src);
  if (!(u.norm() < idcfg.beta0))
    throw DomainError("identification: |u| must be below beta0");

  const Vec z = y + Xy.norm() * u;
  double s;
  try {
    s = crossing_time(spec, x, z, idcfg.eps_time, idcfg.beta_bar, icfg);
  } catch (const NoCrossingError&) {
    throw IdentificationDomainError(
        "identification: no section landing inside the time window");
  }
  const Vec landing = s == 0.0 ? z : integrate(spec, z, s, icfg).end_point();
  IdentificationMap out;
  out.from = y;
  out.to = x;
  out.section_time = s;
  // The crossing solve leaves an along-field residual of root tolerance;
  // project it away so the invariant |<image, X(x)>| = 0 holds exactly.
  out.image = normal_project(spec, x, Vec((landing - x) / Xx.norm()));
  return out;
}

std::optional<Vec> sample_shell(const VectorFieldSpec& spec,
                                const std::vector<SingularityRecord>& sings,
                                const ShellRegion& region, Rng& rng,
                                int max_tries) {
  if (sings.empty() || !(region.inner > 0.0) ||
      !(region.outer > region.inner))
    return std::nullopt;
  const int d = spec.dim();
  const double floor = 1e-9 * spec.field_scale();
  for (int i = 0; i < max_tries; ++i) {
    const auto& s = sings[rng.raw() % sings.size()];
    Vec x = s.position + rng.in_shell(d, region.inner, region.outer);
    if (x.norm() >= spec.domain_radius()) continue;
    const double md = min_sing_distance(sings, x);
    if (md < region.inner || md > region.outer) continue;
    if (spec.eval_raw(x).norm() < floor) continue;
    return x;
  }
  return std::nullopt;
}

CheckReport check_no_small_period(const VectorFieldSpec& spec,
                                  const std::vector<SingularityRecord>& sings,
                                  const ShellRegion& region, double kappa,
                                  const IdentifyConfig& idcfg,
                                  const IntegratorConfig& icfg,
                                  std::uint64_t seed) {
  idcfg.validate();
  if (!(kappa > 0.0 && kappa < 2.0))
    throw DomainError("check_no_small_period: kappa must lie in (0, 2)");
  const double C = idcfg.time_scale;
  CheckReport rep;
  rep.name = "no_small_period";
  rep.params["kappa"] = kappa;
  rep.params["C"] = C;
  rep.params["inner"] = region.inner;
  rep.params["outer"] = region.outer;
  const double r_ref = 1e-3 * region.outer;  // near-return alarm radius
  rep.params["r_ref"] = r_ref;
  rep.threshold = r_ref;

  auto in_region = [&](const Vec& p) {
    const double md = min_sing_distance(sings, p);
    return md >= region.inner && md <= region.outer &&
           p.norm() < spec.domain_radius();
  };
  // Return-distance of x minimized over the sign-side window, restricted to
  // t_prev +- one fiftieth of the window so polishing cannot jump branches.
  auto eval_near = [&](const Vec& x,
                       double t_prev) -> std::pair<double, double> {
    const double sign = t_prev < 0.0 ? -1.0 : 1.0;
    Trajectory traj = orbit_capped(spec, x, sign * 2.0 * C, icfg);
    const double lo = std::min(sign * kappa * C, sign * 2.0 * C);
    const double hi = std::max(sign * kappa * C, sign * 2.0 * C);
    const double w = (hi - lo) / 50.0;
    return min_orbit_distance(traj, x, std::max(lo, t_prev - w),
                              std::min(hi, t_prev + w));
  };
  // Midpoint contraction toward an exact return phi_t(x) = x. Random samples
  // essentially never land on a periodic orbit, so an interior minimum is
  // only a violation if this iteration drives the distance below r_ref.
  auto polish = [&](Vec x, double t,
                    double d) -> std::tuple<Vec, double, double> {
    for (int it = 0; it < 48 && d > 1e-10 * region.outer; ++it) {
      const double sign = t < 0.0 ? -1.0 : 1.0;
      Trajectory traj = orbit_capped(spec, x, sign * 2.0 * C, icfg);
      Vec mid = 0.5 * (x + traj.point(t));
      if (!in_region(mid)) break;
      auto [tn, dn] = eval_near(mid, t);
      if (!(dn < d)) break;
      x = mid;
      t = tn;
      d = dn;
    }
    return {x, t, d};
  };

  Rng rng(seed);
  double min_d = std::numeric_limits<double>::infinity();
  std::vector<std::tuple<double, double, Vec>> cands;  // (d, t, x)
  for (int n = 0; n < idcfg.samples; ++n) {
    auto xo = sample_shell(spec, sings, region, rng);
    if (!xo) break;
    const Vec& x = *xo;
    for (double sign : {1.0, -1.0}) {
      Trajectory traj = orbit_capped(spec, x, sign * 2.0 * C, icfg);
      const double lo = std::min(sign * kappa * C, sign * 2.0 * C);
      const double hi = std::max(sign * kappa * C, sign * 2.0 * C);
      auto [t, d] = min_orbit_distance(traj, x, lo, hi);
      if (d < min_d) min_d = d;
      for (auto& [tc, dc] : interior_return_minima(traj, x, lo, hi))
        cands.emplace_back(dc, tc, x);
    }
    ++rep.samples_used;
  }
  if (rep.samples_used == 0) rep.notes.push_back("region empty: vacuous pass");

  std::sort(cands.begin(), cands.end(),
            [](const auto& a, const auto& b) {
              return std::get<0>(a) < std::get<0>(b);
            });
  if (cands.size() > 3) cands.resize(3);
  rep.results["return_candidates"] = static_cast<double>(cands.size());
  double min_pol = min_d;
  for (const auto& [dc, tc, xc] : cands) {
    try {
      auto [px, pt, pd] = polish(xc, tc, dc);
      min_pol = std::min(min_pol, pd);
      if (pd < r_ref) {
        std::ostringstream os;
        os << "periodic return d=" << pd << " with rescaled period "
           << pt / C << " near x=" << point_str(px);
        rep.notes.push_back(os.str());
      }
    } catch (const Error& e) {
      rep.notes.push_back(std::string("polish abandoned: ") + e.what());
    }
  }

  double r = idcfg.r0;
  while (r > min_pol && r > 1e-300) r *= 0.5;
  if (!(min_pol < std::numeric_limits<double>::infinity())) r = idcfg.r0;
  rep.results["r"] = r;
  rep.results["min_return_distance"] = min_d;
  rep.results["min_polished_distance"] = min_pol;
  rep.max_residual =
      min_pol < std::numeric_limits<double>::infinity() ? min_pol : 0.0;
  rep.pass = rep.samples_used == 0 || min_pol >= r_ref;
  return rep;
}

CheckReport check_local_injectivity(const VectorFieldSpec& spec,
                                    const std::vector<SingularityRecord>& sings,
                                    const ShellRegion& region, double delta,
                                    const IdentifyConfig& idcfg,
                                    const IntegratorConfig& icfg,
                                    std::uint64_t seed) {
  idcfg.validate();
  if (!(delta > 0.0))
    throw DomainError("check_local_injectivity: delta must be positive");
  const double C = idcfg.time_scale;
  CheckReport rep;
  rep.name = "local_injectivity";
  rep.params["delta"] = delta;
  rep.params["C"] = C;
  rep.params["r0"] = idcfg.r0;
  rep.params["inner"] = region.inner;
  rep.params["outer"] = region.outer;
  rep.threshold = delta;

  Rng rng(seed);
  std::vector<std::pair<double, double>> pairs;  // (|h_x(y)|, min dist)
  for (int n = 0; n < idcfg.samples; ++n) {
    auto xo = sample_shell(spec, sings, region, rng);
    if (!xo) break;
    const Vec& x = *xo;
    Vec y = x + rng.in_ball(spec.dim(), 0.999 * idcfg.r0);
    const double md = min_sing_distance(sings, y);
    if (md < region.inner || md > region.outer ||
        y.norm() >= spec.domain_radius()) {
      ++rep.samples_skipped;
      continue;
    }
    double hnorm;
    try {
      hnorm = identification(spec, y, x, Vec::Zero(spec.dim()), idcfg, icfg)
                  .image.vec.norm();
    } catch (const Error&) {
      ++rep.samples_skipped;
      continue;
    }
    double dist = (y - x).norm();
    for (double sign : {1.0, -1.0}) {
      Trajectory traj = orbit_capped(spec, y, sign * 0.25 * C, icfg);
      auto [t, d] = min_orbit_distance(traj, x, std::min(0.0, sign * 0.25 * C),
                                       std::max(0.0, sign * 0.25 * C));
      (void)t;
      dist = std::min(dist, d);
    }
    pairs.emplace_back(hnorm, dist);
    ++rep.samples_used;
  }
  if (rep.samples_used == 0) rep.notes.push_back("region empty: vacuous pass");

  double beta = idcfg.beta0;
  long covered = 0;
  for (int k = 0; k <= 24; ++k, beta *= 0.5) {
    bool ok = true;
    covered = 0;
    for (const auto& [h, d] : pairs)
      if (h <= beta) {
        ++covered;
        if (d > delta) {
          ok = false;
          break;
        }
      }
    if (ok) break;
  }
  if (beta < idcfg.beta0 * std::pow(0.5, 24.0)) beta = 0.0;
  rep.results["beta"] = beta;
  rep.results["pairs_inside_beta"] = static_cast<double>(covered);
  double worst = 0.0;
  for (const auto& [h, d] : pairs)
    if (h <= beta) worst = std::max(worst, d);
  rep.max_residual = worst;
  rep.pass = rep.samples_used == 0 || beta > 0.0;
  return rep;
}

CheckReport check_local_invariance(const VectorFieldSpec& spec,
                                   const std::vector<SingularityRecord>& sings,
                                   const ShellRegion& region,
                                   const IdentifyConfig& idcfg,
                                   const IntegratorConfig& icfg,
                                   std::uint64_t seed) {
  idcfg.validate();
  const double C = idcfg.time_scale;
  CheckReport rep;
  rep.name = "local_invariance";
  rep.params["C"] = C;
  rep.params["r0"] = idcfg.r0;
  rep.params["inner"] = region.inner;
  rep.params["outer"] = region.outer;
  rep.threshold = 1e-8;

  const PoincareConfig pcfg = tube_cfg(idcfg);
  Rng rng(seed);
  for (int n = 0; n < idcfg.samples; ++n) {
    auto xo = sample_shell(spec, sings, region, rng);
    if (!xo) break;
    const Vec& x = *xo;
    Vec y = x + rng.in_ball(spec.dim(), 0.45 * idcfg.r0);
    Vec udir = rng.on_sphere(spec.dim());
    double t_pick = rng.uniform(-2.0 * C, 2.0 * C);
    NormalVector u;
    try {
      u = normal_project(spec, y, Vec(0.5 * idcfg.beta0 * udir));
    } catch (const Error&) {
      ++rep.samples_skipped;
      continue;
    }
    // The sampled t must keep phi_t(y) r0-close to x; clip it to the first
    // time the orbit leaves that ball.
    Trajectory traj = orbit_capped(spec, y, t_pick, icfg);
    double t = traj.t_end();
    const int grid = 64;
    for (int i = 1; i <= grid; ++i) {
      const double s = traj.t_end() * i / grid;
      if ((traj.point(s) - x).norm() > 0.9 * idcfg.r0) {
        t = traj.t_end() * (i - 1) / grid;
        break;
      }
    }
    try {
      PoincareImage img = rescaled_nonlinear_poincare(spec, u, t, pcfg, icfg);
      IdentificationMap lhs =
          identification(spec, img.image.base, x, img.image.vec, idcfg, icfg);
      IdentificationMap rhs = identification(spec, y, x, u.vec, idcfg, icfg);
      const double resid = (lhs.image.vec - rhs.image.vec).norm();
      rep.max_residual = std::max(rep.max_residual, resid);
      ++rep.samples_used;
      if (resid > rep.threshold) {
        std::ostringstream os;
        os << "residual " << resid << " at x=" << point_str(x)
           << " t=" << t / C << " (rescaled)";
        rep.notes.push_back(os.str());
      }
    } catch (const Error&) {
      ++rep.samples_skipped;
      continue;
    }
  }
  if (rep.samples_used == 0)
    rep.notes.push_back("no admissible samples: vacuous pass");
  rep.pass = rep.max_residual <= rep.threshold;
  return rep;
}

double ReparamTrace::eval(double t) const {
  if (sample_times.size() < 2 || sample_times.size() != theta_values.size())
    throw DomainError("ReparamTrace: trace needs at least two samples");
  const double lo = sample_times.front(), hi = sample_times.back();
  const double slack = 1e-12 * std::max(1.0, std::max(std::abs(lo),
                                                      std::abs(hi)));
  if (t < lo - slack || t > hi + slack)
    throw DomainError("ReparamTrace: time outside the sampled range");
  t = std::clamp(t, lo, hi);
  auto it = std::upper_bound(sample_times.begin(), sample_times.end(), t);
  size_t j = std::min(sample_times.size() - 1,
                      static_cast<size_t>(
                          std::max<std::ptrdiff_t>(1, it - sample_times.begin())));
  const double t0 = sample_times[j - 1], t1 = sample_times[j];
  const double w = t1 > t0 ? (t - t0) / (t1 - t0) : 0.0;
  return (1.0 - w) * theta_values[j - 1] + w * theta_values[j];
}

namespace {

// Tube trace over [min(0,T), max(0,T)] merged from a forward and a backward
// holonomy run; truncates at tube escape and reports how far it got.
struct TwoSidedTrace {
  std::vector<double> s;      // base times, ascending, containing 0
  std::vector<double> theta;  // crossing times of the tube orbit
  bool truncated = false;
  double reached_lo = 0.0, reached_hi = 0.0;
};

TwoSidedTrace two_sided_trace(const VectorFieldSpec& spec, const Vec& y,
                              const Vec& z, std::pair<double, double> I,
                              const PoincareConfig& pcfg,
                              const IntegratorConfig& icfg) {
  if (!(I.first <= 0.0 && I.second >= 0.0))
    throw DomainError("global invariance: interval must contain 0");
  TwoSidedTrace out;
  auto run = [&](double T) {
    if (T == 0.0) {
      HolonomyTrace tr0;
      tr0.base_times = {0.0};
      tr0.crossing_times = {0.0};
      tr0.rescaled_offsets = {0.0};
      return tr0;
    }
    try {
      return holonomy_trace(spec, y, z, T, pcfg, icfg);
    } catch (const TubeEscapeError& e) {
      out.truncated = true;
      const double cut = e.escape_time * (1.0 - 1e-3);
      return holonomy_trace(spec, y, z, cut, pcfg, icfg);
    }
  };
  HolonomyTrace fwd = run(I.second);
  std::vector<std::pair<double, double>> merged;
  if (I.first < 0.0) {
    HolonomyTrace bwd = run(I.first);
    for (size_t i = bwd.base_times.size(); i-- > 1;)
      merged.emplace_back(bwd.base_times[i], bwd.crossing_times[i]);
  }
  for (size_t i = 0; i < fwd.base_times.size(); ++i)
    merged.emplace_back(fwd.base_times[i], fwd.crossing_times[i]);
  std::sort(merged.begin(), merged.end());
  for (const auto& [a, b] : merged) {
    out.s.push_back(a);
    out.theta.push_back(b);
  }
  out.reached_lo = out.s.front();
  out.reached_hi = out.s.back();
  return out;
}

// Inverse of a strictly increasing sampled map at value v (linear pieces).
double invert_monotone(const std::vector<double>& xs,
                       const std::vector<double>& ys, double v) {
  auto it = std::upper_bound(ys.begin(), ys.end(), v);
  size_t j = std::min(ys.size() - 1,
                      static_cast<size_t>(
                          std::max<std::ptrdiff_t>(1, it - ys.begin())));
  const double y0 = ys[j - 1], y1 = ys[j];
  const double w = y1 > y0 ? (v - y0) / (y1 - y0) : 0.0;
  return (1.0 - w) * xs[j - 1] + w * xs[j];
}

}  // namespace

GlobalInvariance check_global_invariance(const VectorFieldSpec& spec,
                                         const NormalVector& u,
                                         const NormalVector& u_prime,
                                         std::pair<double, double> I,
                                         std::pair<double, double> I_prime,
                                         double delta, double rho,
                                         const IdentifyConfig& idcfg,
                                         const IntegratorConfig& icfg) {
  idcfg.validate();
  if (!(delta > 0.0 && rho > 0.0))
    throw DomainError("check_global_invariance: delta, rho must be positive");
  check_normal(spec, u);
  check_normal(spec, u_prime);
  const Vec& y = u.base;
  const Vec& yp = u_prime.base;

  GlobalInvariance out;
  CheckReport& rep = out.report;
  rep.name = "global_invariance";
  rep.params["delta"] = delta;
  rep.params["rho"] = rho;
  rep.params["r0"] = idcfg.r0;
  rep.params["beta0"] = idcfg.beta0;
  rep.threshold = delta;

  // Precondition h_y(u') = u, and the alignment time t with phi_t(z) = z'.
  IdentificationMap pre = identification(spec, yp, y, u_prime.vec, idcfg, icfg);
  const double pre_resid = (pre.image.vec - u.vec).norm();
  rep.results["precondition_residual"] = pre_resid;
  if (pre_resid > 0.2 * idcfg.beta0)
    throw DomainError(
        "check_global_invariance: h_y(u') does not match u (points are not "
        "identified)");
  const double t_shift =
      identification(spec, y, yp, u.vec, idcfg, icfg).section_time;
  rep.results["t_shift"] = t_shift;

  const Vec z = y + spec.eval(y).norm() * u.vec;
  const Vec zp = yp + spec.eval(yp).norm() * u_prime.vec;
  const PoincareConfig pcfg = tube_cfg(idcfg);
  TwoSidedTrace tr = two_sided_trace(spec, y, z, I, pcfg, icfg);
  TwoSidedTrace trp = two_sided_trace(spec, yp, zp, I_prime, pcfg, icfg);
  if (tr.truncated || trp.truncated) {
    std::ostringstream os;
    os << "tube escape truncated the intervals to [" << tr.reached_lo << ", "
       << tr.reached_hi << "] and [" << trp.reached_lo << ", "
       << trp.reached_hi << "]";
    rep.notes.push_back(os.str());
  }
  for (size_t i = 1; i < trp.theta.size(); ++i)
    if (!(trp.theta[i] > trp.theta[i - 1]))
      throw RootFindError(
          "check_global_invariance: crossing times are not increasing",
          trp.theta[i] - trp.theta[i - 1]);

  // theta(s) solves theta0'(theta(s)) = theta0(s) - t_shift on the common
  // range; outside it the orbits are no longer both inside their tubes.
  ReparamTrace& trace = out.trace;
  for (size_t i = 0; i < tr.s.size(); ++i) {
    const double v = tr.theta[i] - t_shift;
    if (v < trp.theta.front() || v > trp.theta.back()) continue;
    trace.sample_times.push_back(tr.s[i]);
    trace.theta_values.push_back(invert_monotone(trp.s, trp.theta, v));
  }
  if (trace.sample_times.size() < 2)
    throw DomainError(
        "check_global_invariance: the tube intervals do not overlap");
  double lip = 1.0;
  for (size_t i = 1; i < trace.sample_times.size(); ++i) {
    const double ds = trace.sample_times[i] - trace.sample_times[i - 1];
    const double dth = trace.theta_values[i] - trace.theta_values[i - 1];
    if (ds > 1e-12) {
      const double dd = dth / ds;
      if (!(dd > 0.0)) {
        lip = std::numeric_limits<double>::infinity();
        break;
      }
      lip = std::max(lip, std::max(dd, 1.0 / dd));
    }
  }
  trace.lipschitz_bound = lip;
  rep.results["lipschitz"] = lip;
  rep.results["theta0"] = trace.eval(0.0);
  const bool lip_ok = lip <= 1.0 + 3.0 * rho;
  if (!lip_ok) rep.notes.push_back("Lipschitz bound above 1+3 rho");

  // Part 1: orbit closeness d(phi_s(y), phi_theta(s)(y')) < delta.
  Trajectory ya = orbit_capped(spec, y, trace.sample_times.front(), icfg);
  Trajectory yb = orbit_capped(spec, y, trace.sample_times.back(), icfg);
  const double plo = trace.theta_values.front(), phi = trace.theta_values.back();
  Trajectory pa = orbit_capped(spec, yp, std::min(plo, 0.0), icfg);
  Trajectory pb = orbit_capped(spec, yp, std::max(phi, 0.0), icfg);
  auto orbit_at = [](const Trajectory& neg, const Trajectory& pos, double t) {
    return t < 0.0 ? neg.point(t) : pos.point(t);
  };
  double max_dist = 0.0;
  const size_t stride = std::max<size_t>(1, trace.sample_times.size() / 40);
  for (size_t i = 0; i < trace.sample_times.size(); i += stride) {
    const Vec a = orbit_at(ya, yb, trace.sample_times[i]);
    const Vec b = orbit_at(pa, pb, trace.theta_values[i]);
    max_dist = std::max(max_dist, (a - b).norm());
  }
  rep.results["max_orbit_distance"] = max_dist;
  const bool dist_ok = max_dist < delta;
  if (!dist_ok) rep.notes.push_back("orbit distance bound exceeded");

  // Parts 2.i / 2.ii. They only claim anything for a test vector v whose
  // whole projected orbit stays inside the beta0-ball, so shrink v until
  // the hypothesis max_s |psi*_s(v)| < beta0 holds before asserting.
  const size_t stride2 = std::max<size_t>(1, trace.sample_times.size() / 8);
  auto psi_at = [&](const NormalVector& w, double s) {
    if (std::abs(s) < 1e-14) return w;
    return rescaled_nonlinear_poincare(spec, w, s, pcfg, icfg).image;
  };
  Vec vvec = u.vec.norm() > 1e-12
                 ? Vec(0.5 * u.vec)
                 : Vec(0.25 * idcfg.beta0 * some_normal_dir(spec, y));
  bool hypothesis = false;
  double hyp_max = 0.0;
  for (int halving = 0; halving < 24 && !hypothesis; ++halving) {
    hyp_max = vvec.norm();
    bool ok = true;
    for (size_t i = 0; i < trace.sample_times.size() && ok; i += stride2) {
      try {
        hyp_max = std::max(
            hyp_max,
            psi_at(NormalVector{y, vvec}, trace.sample_times[i]).vec.norm());
      } catch (const Error&) {
        ok = false;
      }
    }
    if (ok && hyp_max < idcfg.beta0)
      hypothesis = true;
    else
      vvec *= 0.5;
  }
  double max_vp = 0.0, max_commute = 0.0;
  long part2 = 0;
  bool p2i_ok = true, p2ii_ok = true;
  if (!hypothesis) {
    rep.notes.push_back(
        "part 2 vacuous: no test vector kept its projected orbit inside the "
        "beta0 ball");
  } else {
    NormalVector v{y, vvec};
    Vec vp = identification(spec, y, yp, v.vec, idcfg, icfg).image.vec;
    rep.results["part2_vector_norm"] = vvec.norm();
    rep.results["part2_hypothesis_max"] = hyp_max;
    for (size_t i = 0; i < trace.sample_times.size(); i += stride2) {
      const double s = trace.sample_times[i];
      const double th = trace.theta_values[i];
      try {
        NormalVector ps = psi_at(v, s);
        NormalVector pps = psi_at(NormalVector{yp, vp}, th);
        max_vp = std::max(max_vp, pps.vec.norm());
        IdentificationMap back =
            identification(spec, pps.base, ps.base, pps.vec, idcfg, icfg);
        max_commute =
            std::max(max_commute, (back.image.vec - ps.vec).norm());
        ++part2;
      } catch (const Error& e) {
        rep.notes.push_back(std::string("part 2 sample skipped: ") + e.what());
      }
    }
    rep.results["max_projected_norm"] = max_vp;    // part 2.i, bound delta
    rep.results["max_commute_residual"] = max_commute;  // part 2.ii, 1e-6
    p2i_ok = max_vp < delta;
    p2ii_ok = max_commute <= 1e-6 && part2 > 0;
    if (!p2i_ok) rep.notes.push_back("projected tube bound exceeded (2.i)");
    if (!p2ii_ok)
      rep.notes.push_back("commutation residual above 1e-6 (2.ii)");
  }
  rep.results["part2_samples"] = static_cast<double>(part2);

  rep.samples_used = static_cast<long>(trace.sample_times.size());
  rep.max_residual = std::max(max_commute, std::max(max_dist, max_vp));
  rep.pass = lip_ok && dist_ok && p2i_ok && p2ii_ok;
  return out;
}

CheckReport check_no_shear(const ReparamTrace& trace,
                           const std::vector<std::pair<double, bool>>& visits) {
  CheckReport rep;
  rep.name = "no_shear";
  rep.threshold = 0.0;
  const double theta0 = trace.eval(0.0);
  rep.results["theta0"] = theta0;
  const bool upper = theta0 > 0.5;
  const bool middle = theta0 >= -2.0 && theta0 <= 2.0;
  const bool lower = theta0 < -0.5;
  rep.results["branch_upper"] = upper ? 1.0 : 0.0;
  rep.results["branch_middle"] = middle ? 1.0 : 0.0;
  rep.results["branch_lower"] = lower ? 1.0 : 0.0;
  if (upper && middle)
    rep.notes.push_back(
        "theta(0) lies in the overlap (1/2, 2]: both branch conclusions are "
        "asserted and cannot hold together");
  if (lower && middle)
    rep.notes.push_back(
        "theta(0) lies in the overlap [-2, -1/2): both branch conclusions "
        "are asserted and cannot hold together");

  double worst = 0.0;  // worst violation margin over flagged visits
  for (const auto& [t, in_u] : visits) {
    if (!in_u) continue;
    double th;
    try {
      th = trace.eval(t);
    } catch (const DomainError&) {
      ++rep.samples_skipped;
      continue;
    }
    ++rep.samples_used;
    const double dev = th - t;
    double viol = 0.0;
    if (upper) viol = std::max(viol, 2.0 - dev);        // need dev > 2
    if (middle) viol = std::max(viol, std::abs(dev) - 0.5);  // need |dev|<=1/2
    if (lower) viol = std::max(viol, dev + 2.0);        // need dev < -2
    if (viol > 0.0) {
      std::ostringstream os;
      os << "violation at t=" << t << ": theta-t=" << dev;
      rep.notes.push_back(os.str());
    }
    worst = std::max(worst, viol);
  }
  rep.max_residual = worst;
  rep.pass = worst <= 0.0;
  return rep;
}

}  // namespace singflow
