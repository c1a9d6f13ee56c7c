#include "singflow/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "detail.hpp"
#include "singflow/parallel.hpp"
#include "singflow/rng.hpp"

namespace singflow {
namespace {

using detail::hyperplane_frame;
using detail::min_orbit_distance;
using detail::orbit_capped;
using detail::rotation_between;

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec unit_field(const VectorFieldSpec& spec, const Vec& x, double floor,
               const char* who) {
  const Vec f = spec.eval(x);
  const double n = f.norm();
  if (n <= floor)
    throw NearSingularityError(std::string(who) +
                                   ": base point is at the singular threshold",
                               0.0);
  return f / n;
}

// Eigenvalues sorted by (real, imag) so two spectra can be matched up.
CVec sorted_spectrum(const Mat& m) {
  Eigen::EigenSolver<Mat> es(m);
  std::vector<std::complex<double>> v(es.eigenvalues().data(),
                                      es.eigenvalues().data() + m.rows());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  CVec out(m.rows());
  for (int i = 0; i < m.rows(); ++i) out[i] = v[i];
  return out;
}

double spectrum_distance(const CVec& a, const CVec& b) {
  double gap = 0.0;
  for (int i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  return gap;
}

}  // namespace

void AnalyzeConfig::validate() const {
  if (!(time_scale >= 1.0))
    throw DomainError("analyze config: time_scale C must be >= 1");
  if (!(sing_threshold > 0.0 && sing_threshold < 1.0))
    throw DomainError("analyze config: sing_threshold must lie in (0, 1)");
  if (max_iterates < 4)
    throw DomainError("analyze config: max_iterates must be at least 4");
  if (contraction_window < 1)
    throw DomainError("analyze config: contraction_window must be positive");
  if (newton_max_iter < 1)
    throw DomainError("analyze config: newton_max_iter must be positive");
  if (!(fd_step > 0.0 && fd_step < 0.5))
    throw DomainError("analyze config: fd_step must lie in (0, 0.5)");
}

ExponentEstimate lyapunov_normal(const VectorFieldSpec& spec, const Vec& x,
                                 double total_time, double s,
                                 const AnalyzeConfig& acfg,
                                 const IntegratorConfig& icfg) {
  acfg.validate();
  icfg.validate();
  if (!(total_time > 0.0))
    throw DomainError("lyapunov_normal: total_time must be positive");
  if (!(s > 0.0 && s <= 1.0))
    throw DomainError("lyapunov_normal: block length s must lie in (0, 1]");
  const int d = spec.dim();
  if (d < 2) throw DomainError("lyapunov_normal: need dimension >= 2");
  const double floor = acfg.sing_threshold * spec.field_scale();

  const long blocks = std::max<long>(1, std::llround(total_time / s));
  const double total = static_cast<double>(blocks) * s;

  ExponentEstimate est;
  est.step = s;
  est.block_count = blocks;

  Vec xi = x;
  const double norm0 = spec.eval(x).norm();
  if (norm0 <= floor)
    throw NearSingularityError("lyapunov_normal: start is singular", 0.0);
  Mat frame = hyperplane_frame(Vec(spec.eval(x) / norm0));  // d x (d-1)
  est.orbit.times.push_back(0.0);
  est.orbit.points.push_back(xi);

  std::vector<double> acc(d - 1, 0.0);
  double logdet_qr = 0.0, logdet_sv = 0.0;
  double prev_norm = norm0;
  for (long i = 0; i < blocks; ++i) {
    Trajectory tr = integrate(spec, xi, s, icfg, /*with_variational=*/true);
    const Vec xnext = tr.end_point();
    const Mat m = tr.end_fundamental();
    const Vec fn = spec.eval_raw(xnext);
    const double nn = fn.norm();
    if (nn <= floor)
      throw NearSingularityError(
          "lyapunov_normal: orbit reached the singular threshold",
          static_cast<double>(i + 1) * s);
    const Vec nhat = fn / nn;
    Mat b = (prev_norm / nn) * (m * frame);
    b -= nhat * (nhat.transpose() * b);

    Eigen::JacobiSVD<Mat> svd(b);
    const Vec sv = svd.singularValues();
    if (!(sv[d - 2] > 0.0))
      throw RootFindError("lyapunov_normal: degenerate block", sv[d - 2]);
    for (int k = 0; k < d - 1; ++k) logdet_sv += std::log(sv[k]);
    est.block_log_norms.push_back(std::log(sv[0]));

    Eigen::HouseholderQR<Mat> qr(b);
    Mat q = qr.householderQ() * Mat::Identity(d, d - 1);
    Mat r = qr.matrixQR().topRows(d - 1).triangularView<Eigen::Upper>();
    for (int k = 0; k < d - 1; ++k) {
      if (r(k, k) < 0.0) {
        q.col(k) *= -1.0;
        r.row(k) *= -1.0;
      }
      if (!(r(k, k) > 0.0))
        throw RootFindError("lyapunov_normal: rank-deficient block", r(k, k));
      acc[k] += std::log(r(k, k));
      logdet_qr += std::log(r(k, k));
    }

    frame = q;
    xi = xnext;
    prev_norm = nn;
    est.orbit.times.push_back(static_cast<double>(i + 1) * s);
    est.orbit.points.push_back(xi);
  }

  est.exponents.resize(d - 1);
  for (int k = 0; k < d - 1; ++k) est.exponents[k] = acc[k] / total;
  std::sort(est.exponents.rbegin(), est.exponents.rend());
  est.field_rate = std::log(prev_norm / norm0) / total;
  est.logdet_gap =
      std::abs(logdet_qr - logdet_sv) / std::max(1.0, std::abs(logdet_qr));
  return est;
}

namespace {

// Shared prefix sums b[n] = sum_{i<n} (logs[i] + fraction * lambda). An index
// n is a Pliss point exactly when b[n] <= b[m] for every m < n; both the
// linear scan and the quadratic reference compare these same values, so they
// agree bit for bit, ties included.
std::vector<double> pliss_prefix(const std::vector<double>& logs,
                                 double lambda, const PlissConfig& cfg) {
  if (!(cfg.fraction > 0.0 && cfg.fraction < 1.0))
    throw DomainError("pliss: fraction must lie in (0, 1)");
  if (!(lambda > 0.0)) throw DomainError("pliss: lambda must be positive");
  std::vector<double> b(logs.size() + 1, 0.0);
  for (size_t i = 0; i < logs.size(); ++i) {
    if (!std::isfinite(logs[i]))
      throw DomainError("pliss: logs must be finite");
    b[i + 1] = b[i] + (logs[i] + cfg.fraction * lambda);
  }
  return b;
}

double pliss_constant(const std::vector<double>& b) {
  double worst = 0.0;
  for (double v : b) worst = std::max(worst, v);
  return std::exp(worst);
}

}  // namespace

PlissReport pliss_points(const std::vector<double>& logs, double lambda,
                         const PlissConfig& cfg) {
  PlissReport rep;
  rep.lambda = lambda;
  const std::vector<double> b = pliss_prefix(logs, lambda, cfg);
  rep.constant = pliss_constant(b);
  double runmin = b[0];
  for (size_t n = 1; n < b.size(); ++n) {
    if (b[n] <= runmin) rep.indices.push_back(static_cast<long>(n));
    runmin = std::min(runmin, b[n]);
  }
  return rep;
}

PlissReport pliss_points_bruteforce(const std::vector<double>& logs,
                                    double lambda, const PlissConfig& cfg) {
  PlissReport rep;
  rep.lambda = lambda;
  const std::vector<double> b = pliss_prefix(logs, lambda, cfg);
  rep.constant = pliss_constant(b);
  for (size_t n = 1; n < b.size(); ++n) {
    bool ok = true;
    for (size_t m = 0; m < n && ok; ++m) ok = b[n] <= b[m];
    if (ok) rep.indices.push_back(static_cast<long>(n));
  }
  return rep;
}

namespace {

// Configurations of the section-return iteration psi-bar = h_x o psi*_T.
struct ClosingSetup {
  PoincareConfig pcfg;
  IdentifyConfig idcfg;
};

ClosingSetup closing_setup(double r0, double beta0, const AnalyzeConfig& acfg) {
  ClosingSetup cs;
  cs.pcfg.beta = std::min(0.45, 2.0 * beta0);
  cs.pcfg.delta = std::min(0.9, 2.0 * cs.pcfg.beta);
  cs.pcfg.t0 = 0.25;
  cs.pcfg.sing_threshold = acfg.sing_threshold;
  cs.idcfg.r0 = 3.0 * r0;
  cs.idcfg.beta0 = cs.pcfg.beta;
  cs.idcfg.beta_bar = std::min(0.9, 2.0 * cs.pcfg.beta);
  cs.idcfg.eps_time = 0.25;
  cs.idcfg.time_scale = acfg.time_scale;
  return cs;
}

// Earliest return: the distance minimum over the first window of times past
// tmin on which the orbit stays inside B(x, r0). Taking the first entry
// instead of the global minimum keeps the detector on the fundamental period
// when later revolutions pass marginally closer. Falls back to the global
// minimum when the orbit never enters the ball, so callers can report the
// nearest approach.
std::pair<double, double> first_return(const Trajectory& orbit, const Vec& x,
                                       double tmin, double tmax, double r0) {
  const int n = 800;
  const double dt = (tmax - tmin) / n;
  if (!(dt > 0.0)) return min_orbit_distance(orbit, x, tmin, tmax);
  std::vector<double> dist(n + 1);
  for (int i = 0; i <= n; ++i)
    dist[i] = (orbit.point(tmin + i * dt) - x).norm();
  int first = -1;
  for (int i = 0; i <= n; ++i) {
    if (dist[i] < r0) {
      first = i;
      break;
    }
  }
  if (first < 0) return min_orbit_distance(orbit, x, tmin, tmax);
  int last = first;
  while (last + 1 <= n && dist[last + 1] < r0) ++last;
  int best = first;
  for (int i = first; i <= last; ++i)
    if (dist[i] < dist[best]) best = i;
  const double lo = tmin + std::max(0, best - 1) * dt;
  const double hi = tmin + std::min(n, best + 1) * dt;
  return min_orbit_distance(orbit, x, lo, hi);
}

}  // namespace

PeriodicOrbitResult detect_periodic(const VectorFieldSpec& spec, const Vec& x,
                                    double search_horizon, double r0,
                                    double beta0, const AnalyzeConfig& acfg,
                                    const IntegratorConfig& icfg) {
  acfg.validate();
  icfg.validate();
  if (!(r0 > 0.0)) throw DomainError("detect_periodic: r0 must be positive");
  if (!(beta0 > 0.0 && beta0 < 0.45))
    throw DomainError("detect_periodic: beta0 must lie in (0, 0.45)");
  const double tmin = 4.0 * acfg.time_scale;
  if (!(search_horizon > tmin))
    throw DomainError(
        "detect_periodic: horizon must exceed the minimum return time 4C");
  const int d = spec.dim();

  // Return search: earliest re-entry of the forward orbit into B(x, r0) at
  // time >= 4C, refined to the distance minimum of that entry window.
  Trajectory orbit = orbit_capped(spec, x, search_horizon, icfg);
  auto [t_ret, d_ret] = first_return(orbit, x, tmin, orbit.t_end(), r0);
  if (!(d_ret < r0)) {
    std::ostringstream os;
    os << "detect_periodic: closest return distance " << d_ret
       << " at t=" << t_ret << " is not below r0=" << r0;
    throw NoReturnError(os.str());
  }

  // Contracting iteration of psi-bar = (identify back to x) o (holonomy over
  // t_ret) from the zero fiber vector.
  const ClosingSetup cs = closing_setup(r0, beta0, acfg);
  const double floor_step = 1e-11;
  Vec v = Vec::Zero(d);
  double period_seed = t_ret;
  double prev_step = -1.0;
  double last_ratio = 0.0;
  int contracting = 0;
  long iters = 0;
  bool settled = false;
  for (int k = 0; k < acfg.max_iterates; ++k) {
    PoincareImage im =
        rescaled_nonlinear_poincare(spec, NormalVector{x, v}, t_ret, cs.pcfg,
                                    icfg);
    IdentificationMap back = identification(spec, im.image.base, x,
                                            im.image.vec, cs.idcfg, icfg);
    const Vec vnext = back.image.vec;
    ++iters;
    if (vnext.norm() >= beta0)
      throw NoContractionError(
          "detect_periodic: return iterates escaped B(0, beta0)");
    const double step = (vnext - v).norm();
    v = vnext;
    period_seed = im.crossing_time + back.section_time;
    if (step < floor_step) {
      settled = true;
      break;
    }
    if (prev_step > 0.0) {
      last_ratio = step / prev_step;
      if (last_ratio < 1.0) {
        ++contracting;
      } else {
        throw NoContractionError(
            "detect_periodic: successive-iterate ratio reached " +
            std::to_string(last_ratio));
      }
    }
    prev_step = step;
    if (contracting >= acfg.contraction_window) {
      settled = true;
      break;
    }
  }
  if (!settled)
    throw NoContractionError(
        "detect_periodic: iteration neither settled nor certified "
        "contraction within max_iterates");

  // Newton refinement of (point, period) on the unrescaled return map to the
  // fixed section through the iteration limit.
  Vec p = x + spec.eval(x).norm() * v;
  const Vec n0 = unit_field(spec, p, acfg.sing_threshold * spec.field_scale(),
                            "detect_periodic");
  const Mat frame = hyperplane_frame(n0);  // d x (d-1)
  Vec z = p;
  double period = period_seed;
  double best_resid = kInf;
  Vec best_z = z;
  double best_period = period;
  for (int it = 0; it < acfg.newton_max_iter; ++it) {
    Trajectory tr = integrate(spec, z, period, icfg, /*with_variational=*/true);
    const Vec gap = tr.end_point() - z;
    const double resid = gap.norm();
    if (resid < best_resid) {
      best_resid = resid;
      best_z = z;
      best_period = period;
    }
    if (resid < 1e-12 * std::max(1.0, z.norm())) break;
    Mat jac(d, d);
    jac.leftCols(d - 1) =
        (tr.end_fundamental() - Mat::Identity(d, d)) * frame;
    jac.col(d - 1) = spec.eval_raw(tr.end_point());
    const Vec delta = jac.fullPivLu().solve(-gap);
    z += frame * delta.head(d - 1);
    period += delta[d - 1];
    if (!(period > 0.5 * period_seed && period < 2.0 * period_seed))
      throw RootFindError(
          "detect_periodic: refinement left the period bracket", best_resid);
  }
  if (!(best_resid < 1e-8 * std::max(1.0, best_z.norm())))
    throw RootFindError("detect_periodic: refinement stalled", best_resid);

  PeriodicOrbitResult out;
  out.point = best_z;
  out.period = best_period;
  out.iterations = iters;
  out.contraction_ratio = last_ratio;

  Trajectory tr =
      integrate(spec, best_z, best_period, icfg, /*with_variational=*/true);
  out.residual = (tr.end_point() - best_z).norm();
  const Vec nf = unit_field(spec, best_z,
                            acfg.sing_threshold * spec.field_scale(),
                            "detect_periodic");
  const Mat ef = hyperplane_frame(nf);
  const Vec xe = spec.eval_raw(tr.end_point());
  // Derivative of the first-return map: the monodromy projected along the
  // flow direction onto the section at the periodic point.
  const Mat proj =
      Mat::Identity(d, d) - xe * nf.transpose() / nf.dot(xe);
  out.multipliers = sorted_spectrum(Mat(ef.transpose() *
                                        (proj * tr.end_fundamental()) * ef));

  // Independent spectrum: Richardson finite differences of the contracting
  // iteration around its fixed point, in the same section coordinates.
  auto psibar = [&](const Vec& w) {
    PoincareImage im = rescaled_nonlinear_poincare(
        spec, NormalVector{x, w}, t_ret, cs.pcfg, icfg);
    IdentificationMap back = identification(spec, im.image.base, x,
                                            im.image.vec, cs.idcfg, icfg);
    return back.image.vec;
  };
  const Mat ex = hyperplane_frame(
      unit_field(spec, x, acfg.sing_threshold * spec.field_scale(),
                 "detect_periodic"));
  const double h = acfg.fd_step * std::max(0.1, v.norm());
  Mat deriv(d - 1, d - 1);
  for (int k = 0; k < d - 1; ++k) {
    const Vec e = ex.col(k);
    const Vec dh = (psibar(v + h * e) - psibar(v - h * e)) / (2.0 * h);
    const Vec dh2 =
        (psibar(v + 0.5 * h * e) - psibar(v - 0.5 * h * e)) / h;
    deriv.col(k) = ex.transpose() * Vec((4.0 * dh2 - dh) / 3.0);
  }
  out.iterate_spectrum = sorted_spectrum(deriv);
  out.spectrum_gap = spectrum_distance(out.multipliers, out.iterate_spectrum);
  return out;
}

PipelineReport negative_exponents_pipeline(const VectorFieldSpec& spec,
                                           const Vec& x,
                                           const PipelineConfig& cfg,
                                           const IntegratorConfig& icfg) {
  cfg.analyze.validate();
  PipelineReport rep;
  Vec base = x;
  try {
    if (cfg.burn_in > 0.0) base = flow(spec, x, cfg.burn_in, icfg);
  } catch (const Error& e) {
    rep.failed_stage = "exponents";
    rep.notes.push_back(std::string("burn-in failed: ") + e.what());
    return rep;
  }

  try {
    rep.exponents = lyapunov_normal(spec, base, cfg.lyapunov_time, cfg.step,
                                    cfg.analyze, icfg);
  } catch (const Error& e) {
    rep.failed_stage = "exponents";
    rep.notes.push_back(e.what());
    return rep;
  }
  const double top = rep.exponents.exponents.front();
  rep.exponents_negative = top < 0.0;
  if (!rep.exponents_negative) {
    rep.failed_stage = "exponents";
    std::ostringstream os;
    os << "largest normal exponent " << top << " is not negative";
    rep.notes.push_back(os.str());
    return rep;
  }

  // Pliss scan of the per-block log operator norms at the measured rate.
  const double lambda_block = -top * rep.exponents.step;
  rep.pliss = pliss_points(rep.exponents.block_log_norms, lambda_block);
  rep.pliss_density = static_cast<double>(rep.pliss.indices.size()) /
                      static_cast<double>(rep.exponents.block_count);
  if (rep.pliss.indices.empty()) {
    rep.failed_stage = "pliss";
    rep.notes.push_back("no Pliss index for the measured contraction rate");
    return rep;
  }

  // Empirical halving radius of the rescaled holonomy at the base point.
  const double t_half = std::max(2.0 * std::log(2.0) / (-top),
                                 2.0 * rep.exponents.step);
  rep.contraction_time = t_half;
  {
    const ClosingSetup cs = closing_setup(cfg.r0, cfg.beta0, cfg.analyze);
    const Mat frame = hyperplane_frame(
        unit_field(spec, base,
                   cfg.analyze.sing_threshold * spec.field_scale(),
                   "negative_exponents_pipeline"));
    Rng rng(2026);
    std::vector<Vec> dirs;
    for (int k = 0; k < cfg.contraction_samples; ++k)
      dirs.push_back(frame * rng.on_sphere(spec.dim() - 1));
    double radius = cfg.beta0;
    bool found = false;
    for (int h = 0; h < 20 && !found; ++h, radius *= 0.5) {
      bool all = true;
      for (const Vec& u : dirs) {
        try {
          PoincareImage im = rescaled_nonlinear_poincare(
              spec, NormalVector{base, Vec(radius * u)}, t_half, cs.pcfg,
              icfg);
          if (!(im.image.vec.norm() <= 0.5 * radius)) {
            all = false;
            break;
          }
        } catch (const Error&) {
          all = false;
          break;
        }
      }
      found = all;
    }
    if (!found) {
      rep.failed_stage = "contraction";
      rep.notes.push_back(
          "no dyadic radius made the holonomy a 1/2-contraction");
      return rep;
    }
    rep.contraction_radius = radius * 2.0;  // undo the loop's final halving
  }

  try {
    rep.orbit = detect_periodic(spec, base, cfg.search_horizon, cfg.r0,
                                cfg.beta0, cfg.analyze, icfg);
  } catch (const NoReturnError& e) {
    rep.failed_stage = "recurrence";
    rep.notes.push_back(e.what());
    return rep;
  } catch (const Error& e) {
    rep.failed_stage = "refine";
    rep.notes.push_back(e.what());
    return rep;
  }
  return rep;
}

namespace {

// Direction distance between the field lines at x and y together with the
// sign putting X(y) on the same side as X(x).
std::pair<double, double> line_gap(const Vec& fx, const Vec& fy) {
  const Vec a = fx / fx.norm();
  const Vec b = fy / fy.norm();
  const double dplus = (a - b).norm();
  const double dminus = (a + b).norm();
  return dplus <= dminus ? std::make_pair(dplus, 1.0)
                         : std::make_pair(dminus, -1.0);
}

struct SweepJob {
  Vec x, y;
  double dir_distance = 0.0;
  std::vector<Vec> fiber_dirs;  // raw sphere draws, projected per side
};

}  // namespace

ContinuityTable continuity_sweep(const VectorFieldSpec& spec, double t,
                                 const std::vector<double>& eps_list,
                                 const ContinuityConfig& cfg,
                                 const IntegratorConfig& icfg) {
  icfg.validate();
  if (eps_list.empty())
    throw DomainError("continuity_sweep: eps_list must not be empty");
  for (double e : eps_list)
    if (!(e > 0.0))
      throw DomainError("continuity_sweep: eps values must be positive");
  if (!(cfg.beta0 > 0.0 && cfg.beta0 < 0.3))
    throw DomainError("continuity_sweep: beta0 must lie in (0, 0.3)");
  if (cfg.fiber_samples < 1 || cfg.pairs_per_shell < 0 || cfg.far_pairs < 0)
    throw DomainError("continuity_sweep: bad sampling plan");
  const int d = spec.dim();
  const double floor = 1e-9 * spec.field_scale();

  PoincareConfig pcfg;
  pcfg.beta = std::min(0.45, 3.0 * cfg.beta0);
  pcfg.delta = std::min(0.9, 2.0 * pcfg.beta);
  pcfg.t0 = 0.25;

  const std::vector<double> levels{cfg.beta0, 0.5 * cfg.beta0,
                                   0.25 * cfg.beta0};

  // Deterministic sampling pass: all random draws happen here, before any
  // parallel work, so the thread count cannot change the table.
  std::vector<SingularityRecord> sings = find_singularities(spec);
  Rng rng(cfg.seed);
  std::vector<SweepJob> jobs;
  auto draw_dirs = [&] {
    std::vector<Vec> dirs;
    for (int k = 0; k < cfg.fiber_samples; ++k) dirs.push_back(rng.on_sphere(d));
    return dirs;
  };
  for (const SingularityRecord& sing : sings) {
    for (double s : cfg.shells) {
      for (int k = 0; k < cfg.pairs_per_shell; ++k) {
        for (int tries = 0; tries < 64; ++tries) {
          const Vec u = rng.on_sphere(d);
          const double gap = std::pow(10.0, rng.uniform(-6.0, -0.6));
          Vec w = rng.on_sphere(d);
          w -= u * u.dot(w);
          if (w.norm() < 1e-6) continue;
          const Vec u2 = (u + gap * w / w.norm()).normalized();
          SweepJob job;
          job.x = sing.position + s * u;
          job.y = sing.position + s * u2;
          if (spec.eval(job.x).norm() <= floor ||
              spec.eval(job.y).norm() <= floor)
            continue;
          job.dir_distance =
              std::max((job.x - job.y).norm(),
                       line_gap(spec.eval(job.x), spec.eval(job.y)).first);
          job.fiber_dirs = draw_dirs();
          jobs.push_back(std::move(job));
          break;
        }
      }
    }
  }
  const double far_radius = std::min(0.25 * spec.domain_radius(), 10.0);
  for (int k = 0; k < cfg.far_pairs; ++k) {
    for (int tries = 0; tries < 64; ++tries) {
      const Vec x = rng.in_shell(d, 0.2 * far_radius, far_radius);
      const double gap = std::pow(10.0, rng.uniform(-5.0, -1.0));
      const Vec y = x + gap * rng.on_sphere(d);
      if (spec.eval(x).norm() <= floor || spec.eval(y).norm() <= floor)
        continue;
      SweepJob job;
      job.x = x;
      job.y = y;
      job.dir_distance = std::max(
          (x - y).norm(), line_gap(spec.eval(x), spec.eval(y)).first);
      job.fiber_dirs = draw_dirs();
      jobs.push_back(std::move(job));
      break;
    }
  }

  ContinuityTable table;
  table.pairs.resize(jobs.size());

  auto eval_side = [&](const Vec& base, const Vec& v) {
    return rescaled_nonlinear_poincare(spec, NormalVector{base, v}, t, pcfg,
                                       icfg);
  };

  auto run_job = [&](long j) {
    const SweepJob& job = jobs[j];
    ContinuityPair& pair = table.pairs[j];
    pair.x = job.x;
    pair.y = job.y;
    pair.dir_distance = job.dir_distance;
    pair.c0.assign(levels.size(), std::numeric_limits<double>::quiet_NaN());
    pair.c1.assign(levels.size(), std::numeric_limits<double>::quiet_NaN());
    if (cfg.second_order)
      pair.c2.assign(levels.size(),
                     std::numeric_limits<double>::quiet_NaN());

    const Vec fx = spec.eval(job.x);
    const Vec fy = spec.eval(job.y);
    auto [gap, sign] = line_gap(fx, fy);
    (void)gap;
    const Vec ax = fx / fx.norm();
    const Vec ay = sign * fy / fy.norm();
    const Mat rin = rotation_between(ax, ay);  // N_x -> N_y
    const Mat ex = hyperplane_frame(ax);

    bool all_defined = true;
    for (size_t L = 0; L < levels.size(); ++L) {
      const double beta = levels[L];
      try {
        double c0 = 0.0;
        for (size_t k = 0; k < job.fiber_dirs.size(); ++k) {
          Vec w = job.fiber_dirs[k] - ax * ax.dot(job.fiber_dirs[k]);
          if (w.norm() < 1e-9) continue;
          w = w / w.norm() * (k % 2 == 0 ? beta : 0.5 * beta);
          PoincareImage a = eval_side(job.x, w);
          PoincareImage b = eval_side(job.y, Vec(rin * w));
          auto [ogap, osign] = line_gap(spec.eval(a.image.base),
                                        spec.eval(b.image.base));
          (void)ogap;
          const Vec oa = spec.eval(a.image.base).normalized();
          const Vec ob = osign * spec.eval(b.image.base).normalized();
          const Mat rout = rotation_between(ob, oa);  // N_out(y) -> N_out(x)
          c0 = std::max(c0, (a.image.vec - rout * b.image.vec).norm());
        }
        pair.c0[L] = c0;

        // Derivative comparison at the fiber origin by central differences.
        const double h = cfg.fd_step * beta / cfg.beta0;
        double c1 = 0.0;
        double c2 = 0.0;
        Mat da(d, d - 1), db(d, d - 1);
        PoincareImage a0 = eval_side(job.x, Vec(Vec::Zero(d)));
        PoincareImage b0 = eval_side(job.y, Vec(Vec::Zero(d)));
        auto [zgap, zsign] = line_gap(spec.eval(a0.image.base),
                                      spec.eval(b0.image.base));
        (void)zgap;
        const Vec za = spec.eval(a0.image.base).normalized();
        const Vec zb = zsign * spec.eval(b0.image.base).normalized();
        const Mat rout0 = rotation_between(zb, za);
        for (int k = 0; k < d - 1; ++k) {
          const Vec e = ex.col(k);
          PoincareImage ap = eval_side(job.x, Vec(h * e));
          PoincareImage am = eval_side(job.x, Vec(-h * e));
          PoincareImage bp = eval_side(job.y, Vec(rin * (h * e)));
          PoincareImage bm = eval_side(job.y, Vec(rin * (-h * e)));
          da.col(k) = (ap.image.vec - am.image.vec) / (2.0 * h);
          db.col(k) = (bp.image.vec - bm.image.vec) / (2.0 * h);
          if (cfg.second_order) {
            const Vec sa = (ap.image.vec - 2.0 * a0.image.vec +
                            am.image.vec) /
                           (h * h);
            const Vec sb = (bp.image.vec - 2.0 * b0.image.vec +
                            bm.image.vec) /
                           (h * h);
            c2 = std::max(c2, (sa - rout0 * sb).norm());
          }
        }
        c1 = (da - rout0 * db).norm();
        pair.c1[L] = c1;
        if (cfg.second_order) pair.c2[L] = c2;
      } catch (const Error& e) {
        all_defined = false;
        if (pair.note.empty()) pair.note = e.what();
      }
    }
    pair.defined = all_defined;
  };
  parallel_for(static_cast<long>(jobs.size()), cfg.threads, run_job);

  // Control row: comparing a point against itself runs the same code path
  // twice on identical inputs, so every distance is exactly zero.
  {
    Vec cx = Vec::Zero(d);
    cx[0] = std::min(1.0, 0.2 * spec.domain_radius());
    if (spec.eval(cx).norm() <= floor) cx[0] *= 2.0;
    SweepJob control;
    control.x = cx;
    control.y = cx;
    control.dir_distance = 0.0;
    Rng crng(cfg.seed + 1);
    for (int k = 0; k < cfg.fiber_samples; ++k)
      control.fiber_dirs.push_back(crng.on_sphere(d));
    jobs.push_back(std::move(control));
    table.pairs.emplace_back();
    run_job(static_cast<long>(jobs.size()) - 1);
    const ContinuityPair& cp = table.pairs.back();
    double worst = 0.0;
    for (size_t L = 0; L < levels.size(); ++L) {
      if (std::isfinite(cp.c0[L])) worst = std::max(worst, cp.c0[L]);
      if (std::isfinite(cp.c1[L])) worst = std::max(worst, cp.c1[L]);
    }
    table.control_distance = worst;
  }

  // Frontier: the largest dyadic delta at which every defined pair below it
  // stays eps-close, at the largest beta level that keeps a positive delta
  // for the smallest eps while at least half the pairs stay defined.
  const long npairs = static_cast<long>(table.pairs.size()) - 1;
  auto delta_frontier = [&](double eps, size_t L) {
    double delta = 1.0;
    for (int halving = 0; halving < 48; ++halving, delta *= 0.5) {
      bool ok = true;
      for (long j = 0; j < npairs && ok; ++j) {
        const ContinuityPair& p = table.pairs[j];
        if (p.dir_distance >= delta) continue;
        if (!std::isfinite(p.c0[L]) || !std::isfinite(p.c1[L])) continue;
        ok = std::max(p.c0[L], p.c1[L]) < eps;
      }
      if (ok) return delta;
    }
    return 0.0;
  };
  const double eps_min = *std::min_element(eps_list.begin(), eps_list.end());
  size_t chosen = 0;
  bool have_level = false;
  for (size_t L = 0; L < levels.size() && !have_level; ++L) {
    long defined = 0;
    for (long j = 0; j < npairs; ++j)
      if (std::isfinite(table.pairs[j].c0[L]) &&
          std::isfinite(table.pairs[j].c1[L]))
        ++defined;
    if (2 * defined >= npairs && delta_frontier(eps_min, L) > 0.0) {
      chosen = L;
      have_level = true;
    }
  }
  for (double eps : eps_list) {
    ContinuityRow row;
    row.eps = eps;
    row.beta = have_level ? levels[chosen] : 0.0;
    row.delta = have_level ? delta_frontier(eps, chosen) : 0.0;
    for (long j = 0; j < npairs; ++j) {
      const ContinuityPair& p = table.pairs[j];
      if (p.dir_distance >= row.delta) continue;
      if (!std::isfinite(p.c0[chosen]) || !std::isfinite(p.c1[chosen]))
        continue;
      ++row.pairs_used;
      row.worst = std::max(row.worst, std::max(p.c0[chosen], p.c1[chosen]));
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace singflow
