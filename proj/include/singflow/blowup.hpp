#pragma once

#include <optional>
#include <utility>

#include "singflow/poincare.hpp"

namespace singflow {

/// Radii for boundary constructions: beta_prime bounds fiber vectors in the
/// boundary charts, t0 is the crossing time window for the implicit section
/// time, newton_max_iter caps the safeguarded Newton solve.
struct BlowupConfig {
  double beta_prime = 0.05;
  double t0 = 0.25;
  int newton_max_iter = 50;
  void validate() const;
};

/// Unit representative of a direction modulo the antipodal identification:
/// the entry of largest magnitude is made positive, ties broken by lowest
/// index. Throws DomainError on the zero vector.
Vec canonical_direction(const Vec& u);

/// A point of the blown up manifold: either an ordinary regular point or a
/// boundary direction over a singularity, stored canonically.
class BlowupPoint {
 public:
  static BlowupPoint regular(Vec x);
  static BlowupPoint boundary(SingularityRecord sing, const Vec& dir);

  bool is_boundary() const { return boundary_; }
  const Vec& point() const;
  const SingularityRecord& sing() const;
  const Vec& dir() const;

 private:
  BlowupPoint() = default;
  bool boundary_ = false;
  Vec x_;
  std::optional<SingularityRecord> sing_;
  Vec dir_;
};

/// Chart data near one singularity: the ambient point is sigma + s u. The
/// pairs (s, u) and (-s, -u) describe the same blowup point; construction
/// canonicalizes u and carries the sign on s.
struct ChartCoords {
  SingularityRecord sing;
  double s = 0.0;
  Vec u;
};

Vec chart_point(const ChartCoords& c);
ChartCoords chart_coords(const SingularityRecord& sing, const Vec& x,
                         double eps);

/// Default chart radius: a fifth of the closest singularity spacing, capped
/// at a tenth of the domain radius.
double chart_radius(const VectorFieldSpec& spec,
                    const std::vector<SingularityRecord>& sings);

/// Classifies an ambient point. Points at (machine precision distance of) a
/// singularity have a whole fiber of blowup preimages, so they raise
/// NeedsDirectionError; boundary points are built explicitly via
/// BlowupPoint::boundary.
BlowupPoint to_blowup(const VectorFieldSpec& spec,
                      const std::vector<SingularityRecord>& sings,
                      const Vec& x, double eps);

/// Boundary sphere flow over a singularity: direction of e^{t DX(sigma)} u,
/// returned canonically.
Vec extended_flow_boundary(const SingularityRecord& sing, const Vec& u,
                           double t);

/// Boundary value of the unit field X / |X|: DX(sigma) u / |DX(sigma) u|.
/// Not canonicalized; the two lifts of a direction give opposite values.
Vec extended_unit_field(const SingularityRecord& sing, const Vec& u);

/// The ratio |X(x)| / |X(phi_t(x))| extended over the blowup: boundary value
/// |DX u| / |DX e^{t DX} u|. Strictly positive.
double rescaling_ratio(const VectorFieldSpec& spec, const BlowupPoint& p,
                       double t, const PoincareConfig& pcfg,
                       const IntegratorConfig& icfg);

/// Boundary value of the rescaled lifted flow: linear map
/// y -> ratio(t) e^{t DX} y.
Vec extended_lifted_boundary(const SingularityRecord& sing, const Vec& u,
                             const Vec& y, double t);

/// Boundary value of the rescaled fiber preserving lift: affine map
/// y -> e^{t DX} y + (e^{t DX} u - u) / |DX u|.
Vec extended_fiber_lifted_boundary(const SingularityRecord& sing, const Vec& u,
                                   const Vec& y, double t);

/// Section functional whose zero in tau defines the implicit crossing time of
/// the compactified holonomy: the fiber lift at time tau of the lifted image
/// at time t, paired with the unit field at the target.
double theta_functional(const VectorFieldSpec& spec, const BlowupPoint& p,
                        double t, const Vec& y, double tau,
                        const IntegratorConfig& icfg);

/// Compactified holonomy on the boundary: solves theta = 0 for tau by
/// safeguarded Newton from 0 and assembles the closed form image
/// ratio(t) e^{(t+tau) DX} y + (e^{(t+tau) DX} u - e^{t DX} u)/|DX e^{t DX} u|.
struct ExtendedPoincare {
  Vec image;
  double tau = 0.0;
};

ExtendedPoincare extended_poincare_boundary(const SingularityRecord& sing,
                                            const Vec& u, const Vec& y,
                                            double t, const BlowupConfig& cfg);

/// Compactified rescaled projected tangent flow: the normal projection of the
/// rescaled lifted flow onto the orthogonal complement of the unit field at
/// the image point. Regular points reduce to rescaled_linear_poincare.
Vec extended_rescaled_linear_poincare(const VectorFieldSpec& spec,
                                      const BlowupPoint& p, const Vec& v,
                                      double t, const PoincareConfig& pcfg,
                                      const IntegratorConfig& icfg);

}  // namespace singflow
