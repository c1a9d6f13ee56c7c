#pragma once

#include <map>
#include <string>
#include <vector>

#include "singflow/types.hpp"

namespace singflow {

/// One term coeff * prod_i x_i^{exponents[i]} of a polynomial coordinate
/// function. Exponents are small non negative integers.
struct Monomial {
  double coeff = 0.0;
  std::vector<int> exponents;
};

/// One coordinate of a polynomial vector field.
using PolyCoordinate = std::vector<Monomial>;

/// A smooth vector field on the ball of radius domain_radius in R^d.
/// Every instance, including the named builtins, is stored as a polynomial,
/// so Jacobians are exact term by term derivatives rather than finite
/// differences. Instances are immutable after construction and safe to share
/// across threads.
class VectorFieldSpec {
 public:
  static VectorFieldSpec linear(const Mat& a, double domain_radius = 50.0);
  static VectorFieldSpec lorenz(double sigma = 10.0, double rho = 28.0,
                                double beta = 8.0 / 3.0,
                                double domain_radius = 100.0);
  static VectorFieldSpec van_der_pol(double mu = 1.0,
                                     double domain_radius = 20.0);
  static VectorFieldSpec hopf(double alpha = 1.0, double omega = 1.0,
                              double domain_radius = 10.0);
  static VectorFieldSpec polynomial(int dim,
                                    std::vector<PolyCoordinate> coords,
                                    std::vector<Vec> singularity_seeds,
                                    double domain_radius);

  int dim() const { return dim_; }
  double domain_radius() const { return domain_radius_; }
  const std::string& kind() const { return kind_; }
  const std::map<std::string, double>& params() const { return params_; }
  const std::vector<PolyCoordinate>& coords() const { return coords_; }
  const std::vector<Vec>& singularity_seeds() const { return seeds_; }

  /// Linear part for kind "linear"; throws otherwise.
  const Mat& matrix() const;

  /// Field value with the domain check |x| <= domain_radius.
  Vec eval(const Vec& x) const;
  /// Exact Jacobian with the domain check.
  Mat jacobian(const Vec& x) const;

  /// Unchecked evaluations for the integrator, which watches the domain
  /// itself and allows a small overshoot before declaring escape.
  Vec eval_raw(const Vec& x) const;
  Mat jacobian_raw(const Vec& x) const;

  /// Reference magnitude of the field, max(1, max |X| over a fixed sample of
  /// the inner ball). Relative thresholds (near singularity cutoffs, Newton
  /// stops) are scaled by this.
  double field_scale() const { return field_scale_; }

 private:
  VectorFieldSpec() = default;
  void finish();

  int dim_ = 0;
  std::string kind_;
  std::map<std::string, double> params_;
  std::vector<PolyCoordinate> coords_;
  std::vector<Vec> seeds_;
  double domain_radius_ = 0.0;
  double field_scale_ = 1.0;
  Mat matrix_;  // only for kind "linear"
};

/// A polished singularity with its spectral data.
struct SingularityRecord {
  Vec position;
  Mat jacobian;
  CVec eigenvalues;
  CMat eigenvectors;
  /// Relative Frobenius error of V diag(lambda) V^-1 against the Jacobian.
  double eigen_reconstruction_error = 0.0;
};

/// Newton-polish every declared seed to a true zero of X, deduplicate, and
/// attach spectral data. The result does not depend on seed perturbations
/// below the basin scale. Throws DegenerateSingularityError when a polished
/// zero has a linearization with relative smallest singular value below
/// 1e-10, and DomainError when a seed fails to converge.
std::vector<SingularityRecord> find_singularities(const VectorFieldSpec& spec);

}  // namespace singflow
