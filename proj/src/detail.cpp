#include "detail.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "singflow/types.hpp"

namespace singflow::detail {

Trajectory orbit_capped(const VectorFieldSpec& spec, const Vec& x, double T,
                        const IntegratorConfig& icfg) {
  try {
    return integrate(spec, x, T, icfg);
  } catch (const EscapeError& e) {
    const double tcut = e.exit_time * (1.0 - 1e-6);
    return integrate(spec, x, std::abs(tcut) < 1e-300 ? 0.0 : tcut, icfg);
  }
}

std::pair<double, double> min_orbit_distance(const Trajectory& traj,
                                             const Vec& x, double tlo,
                                             double thi) {
  const double a = std::min(traj.t_begin(), traj.t_end());
  const double b = std::max(traj.t_begin(), traj.t_end());
  tlo = std::max(tlo, a);
  thi = std::min(thi, b);
  if (!(thi >= tlo)) return {0.0, std::numeric_limits<double>::infinity()};
  const int n = 200;
  double best_t = tlo, best_d = (traj.point(tlo) - x).norm();
  for (int i = 1; i <= n; ++i) {
    const double t = tlo + (thi - tlo) * i / n;
    const double d = (traj.point(t) - x).norm();
    if (d < best_d) {
      best_d = d;
      best_t = t;
    }
  }
  double lo = std::max(tlo, best_t - (thi - tlo) / n);
  double hi = std::min(thi, best_t + (thi - tlo) / n);
  for (int it = 0; it < 60 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi));
       ++it) {
    const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if ((traj.point(m1) - x).norm() < (traj.point(m2) - x).norm())
      hi = m2;
    else
      lo = m1;
  }
  const double t = 0.5 * (lo + hi);
  const double d = (traj.point(t) - x).norm();
  return d < best_d ? std::make_pair(t, d) : std::make_pair(best_t, best_d);
}

Mat rotation_between(const Vec& p, const Vec& q) {
  const double c = p.dot(q);
  if (!(c > -1.0 + 1e-12))
    throw DomainError("rotation_between: vectors are antipodal");
  const Mat k = q * p.transpose() - p * q.transpose();
  return Mat::Identity(p.size(), p.size()) + k + k * k / (1.0 + c);
}

Mat hyperplane_frame(const Vec& n) {
  Eigen::HouseholderQR<Mat> qr{Mat(n)};
  Mat q = qr.householderQ();
  return q.rightCols(n.size() - 1);
}

std::string point_str(const Vec& x) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

}  // namespace singflow::detail
