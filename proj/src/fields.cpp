#include "singflow/fields.hpp"

#include <algorithm>
#include <cmath>

#include "singflow/rng.hpp"

namespace singflow {
namespace {

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

Monomial mono(double c, std::vector<int> e) { return Monomial{c, std::move(e)}; }

}  // namespace

const Mat& VectorFieldSpec::matrix() const {
  if (kind_ != "linear")
    throw DomainError("matrix(): field kind is not linear");
  return matrix_;
}

Vec VectorFieldSpec::eval_raw(const Vec& x) const {
  Vec out = Vec::Zero(dim_);
  for (int i = 0; i < dim_; ++i) {
    double acc = 0.0;
    for (const Monomial& m : coords_[i]) {
      double term = m.coeff;
      for (int j = 0; j < dim_; ++j) term *= ipow(x[j], m.exponents[j]);
      acc += term;
    }
    out[i] = acc;
  }
  return out;
}

Mat VectorFieldSpec::jacobian_raw(const Vec& x) const {
  Mat out = Mat::Zero(dim_, dim_);
  for (int i = 0; i < dim_; ++i) {
    for (const Monomial& m : coords_[i]) {
      for (int j = 0; j < dim_; ++j) {
        int ej = m.exponents[j];
        if (ej == 0) continue;
        double term = m.coeff * ej * ipow(x[j], ej - 1);
        for (int k = 0; k < dim_; ++k)
          if (k != j) term *= ipow(x[k], m.exponents[k]);
        out(i, j) += term;
      }
    }
  }
  return out;
}

Vec VectorFieldSpec::eval(const Vec& x) const {
  if (x.size() != dim_) throw DomainError("eval: dimension mismatch");
  if (x.norm() > domain_radius_)
    throw DomainError("eval: point outside the field domain");
  return eval_raw(x);
}

Mat VectorFieldSpec::jacobian(const Vec& x) const {
  if (x.size() != dim_) throw DomainError("jacobian: dimension mismatch");
  if (x.norm() > domain_radius_)
    throw DomainError("jacobian: point outside the field domain");
  return jacobian_raw(x);
}

void VectorFieldSpec::finish() {
  if (dim_ <= 0) throw DomainError("vector field: dimension must be positive");
  if (domain_radius_ <= 0.0)
    throw DomainError("vector field: domain_radius must be positive");
  for (const PolyCoordinate& c : coords_)
    for (const Monomial& m : c) {
      if (static_cast<int>(m.exponents.size()) != dim_)
        throw DomainError("vector field: monomial exponent list length");
      for (int e : m.exponents)
        if (e < 0) throw DomainError("vector field: negative exponent");
    }
  // Fixed sample of the inner ball; the scale only feeds relative thresholds,
  // so the exact sample does not matter as long as it is deterministic.
  Rng rng(0x5eedf1e1dULL);
  double scale = 1.0;
  for (int i = 0; i < 64; ++i) {
    Vec p = rng.in_ball(dim_, domain_radius_ / 10.0);
    scale = std::max(scale, eval_raw(p).norm());
  }
  field_scale_ = scale;
}

VectorFieldSpec VectorFieldSpec::linear(const Mat& a, double domain_radius) {
  if (a.rows() != a.cols()) throw DomainError("linear: matrix must be square");
  VectorFieldSpec f;
  f.dim_ = static_cast<int>(a.rows());
  f.kind_ = "linear";
  f.matrix_ = a;
  f.domain_radius_ = domain_radius;
  f.coords_.resize(f.dim_);
  for (int i = 0; i < f.dim_; ++i)
    for (int j = 0; j < f.dim_; ++j) {
      if (a(i, j) == 0.0) continue;
      std::vector<int> e(f.dim_, 0);
      e[j] = 1;
      f.coords_[i].push_back(mono(a(i, j), e));
    }
  f.seeds_.push_back(Vec::Zero(f.dim_));
  f.finish();
  return f;
}

VectorFieldSpec VectorFieldSpec::lorenz(double sigma, double rho, double beta,
                                        double domain_radius) {
  VectorFieldSpec f;
  f.dim_ = 3;
  f.kind_ = "lorenz";
  f.params_ = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
  f.domain_radius_ = domain_radius;
  f.coords_.resize(3);
  f.coords_[0] = {mono(-sigma, {1, 0, 0}), mono(sigma, {0, 1, 0})};
  f.coords_[1] = {mono(rho, {1, 0, 0}), mono(-1.0, {0, 1, 0}),
                  mono(-1.0, {1, 0, 1})};
  f.coords_[2] = {mono(1.0, {1, 1, 0}), mono(-beta, {0, 0, 1})};
  f.seeds_.push_back(Vec::Zero(3));
  if (rho > 1.0) {
    double w = std::sqrt(beta * (rho - 1.0));
    Vec cp(3), cm(3);
    cp << w, w, rho - 1.0;
    cm << -w, -w, rho - 1.0;
    f.seeds_.push_back(cp);
    f.seeds_.push_back(cm);
  }
  f.finish();
  return f;
}

VectorFieldSpec VectorFieldSpec::van_der_pol(double mu, double domain_radius) {
  VectorFieldSpec f;
  f.dim_ = 2;
  f.kind_ = "van_der_pol";
  f.params_ = {{"mu", mu}};
  f.domain_radius_ = domain_radius;
  f.coords_.resize(2);
  f.coords_[0] = {mono(1.0, {0, 1})};
  f.coords_[1] = {mono(-1.0, {1, 0}), mono(mu, {0, 1}), mono(-mu, {2, 1})};
  f.seeds_.push_back(Vec::Zero(2));
  f.finish();
  return f;
}

VectorFieldSpec VectorFieldSpec::hopf(double alpha, double omega,
                                      double domain_radius) {
  VectorFieldSpec f;
  f.dim_ = 2;
  f.kind_ = "hopf";
  f.params_ = {{"alpha", alpha}, {"omega", omega}};
  f.domain_radius_ = domain_radius;
  f.coords_.resize(2);
  f.coords_[0] = {mono(alpha, {1, 0}), mono(-omega, {0, 1}),
                  mono(-1.0, {3, 0}), mono(-1.0, {1, 2})};
  f.coords_[1] = {mono(omega, {1, 0}), mono(alpha, {0, 1}),
                  mono(-1.0, {2, 1}), mono(-1.0, {0, 3})};
  f.seeds_.push_back(Vec::Zero(2));
  f.finish();
  return f;
}

VectorFieldSpec VectorFieldSpec::polynomial(int dim,
                                            std::vector<PolyCoordinate> coords,
                                            std::vector<Vec> singularity_seeds,
                                            double domain_radius) {
  if (static_cast<int>(coords.size()) != dim)
    throw DomainError("polynomial: need one coordinate list per dimension");
  VectorFieldSpec f;
  f.dim_ = dim;
  f.kind_ = "polynomial";
  f.domain_radius_ = domain_radius;
  f.coords_ = std::move(coords);
  f.seeds_ = std::move(singularity_seeds);
  for (const Vec& s : f.seeds_)
    if (s.size() != dim) throw DomainError("polynomial: seed dimension");
  f.finish();
  return f;
}

std::vector<SingularityRecord> find_singularities(const VectorFieldSpec& spec) {
  std::vector<SingularityRecord> out;
  const double scale = spec.field_scale();
  for (const Vec& seed : spec.singularity_seeds()) {
    Vec x = seed;
    bool converged = false;
    for (int it = 0; it < 60; ++it) {
      Vec fx = spec.eval_raw(x);
      if (fx.norm() <= 1e-14 * scale) {
        converged = true;
        break;
      }
      Eigen::FullPivLU<Mat> lu(spec.jacobian_raw(x));
      if (!lu.isInvertible())
        throw DegenerateSingularityError(
            "find_singularities: Jacobian not invertible during Newton near "
            "seed, field may have a non hyperbolic zero");
      Vec step = lu.solve(fx);
      x -= step;
      if (step.norm() <= 1e-16 * std::max(1.0, x.norm())) {
        converged = spec.eval_raw(x).norm() <= 1e-12 * scale;
        break;
      }
    }
    if (!converged && spec.eval_raw(x).norm() <= 1e-12 * scale)
      converged = true;
    if (!converged)
      throw DomainError(
          "find_singularities: declared seed did not converge to a zero of "
          "the field");
    bool duplicate = false;
    for (const SingularityRecord& r : out)
      if ((r.position - x).norm() <= 1e-8 * std::max(1.0, x.norm()))
        duplicate = true;
    if (duplicate) continue;

    SingularityRecord rec;
    rec.position = x;
    rec.jacobian = spec.jacobian_raw(x);

    Eigen::JacobiSVD<Mat> svd(rec.jacobian);
    const auto& sv = svd.singularValues();
    if (sv[0] <= 0.0 || sv[sv.size() - 1] / sv[0] < 1e-10) {
      throw DegenerateSingularityError(
          "find_singularities: degenerate linearization at singularity (" +
          std::to_string(x[0]) + ", ...), relative smallest singular value "
          "below 1e-10");
    }

    Eigen::EigenSolver<Mat> es(rec.jacobian);
    rec.eigenvalues = es.eigenvalues();
    rec.eigenvectors = es.eigenvectors();
    CMat recon = rec.eigenvectors * rec.eigenvalues.asDiagonal() *
                 rec.eigenvectors.inverse();
    rec.eigen_reconstruction_error =
        (recon - rec.jacobian.cast<std::complex<double>>()).norm() /
        std::max(1.0, rec.jacobian.norm());
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace singflow
