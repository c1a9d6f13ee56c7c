#include <doctest.h>

#include <cmath>

#include "singflow/poincare.hpp"
#include "singflow/rng.hpp"

using namespace singflow;

namespace {

const IntegratorConfig kCfg;
const PoincareConfig kPCfg;

VectorFieldSpec diag_field() {
  Mat a(2, 2);
  a << -1.0, 0.0, 0.0, 2.0;
  return VectorFieldSpec::linear(a);
}

}  // namespace

TEST_CASE("normal projection removes the field component") {
  VectorFieldSpec f = VectorFieldSpec::lorenz();
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Vec x = rng.in_ball(3, 20.0);
    Vec Xx = f.eval(x);
    if (Xx.norm() < 1e-6) continue;
    NormalVector nv = normal_project(f, x, rng.in_ball(3, 5.0));
    CHECK(std::abs(Xx.dot(nv.vec)) < 1e-10 * Xx.norm() * (1.0 + nv.vec.norm()));
    // Projection is idempotent.
    NormalVector again = normal_project(f, x, nv.vec);
    CHECK((again.vec - nv.vec).norm() < 1e-12 * (1.0 + nv.vec.norm()));
  }
}

TEST_CASE("projected tangent flow on the stable axis of a saddle") {
  // x on the stable axis of diag(-1, 2): fiber is the e2 line, the projected
  // tangent flow multiplies by e^{2t} and the rescale adds e^{t}.
  VectorFieldSpec f = diag_field();
  Vec x(2), e2(2);
  x << 1.0, 0.0;
  e2 << 0.0, 1.0;
  for (double t : {0.3, 1.0, 2.0}) {
    NormalVector u{x, e2};
    NormalVector lin = linear_poincare(f, u, t, kPCfg, kCfg);
    CHECK(lin.vec[1] == doctest::Approx(std::exp(2.0 * t)).epsilon(1e-9));
    CHECK(std::abs(lin.vec[0]) < 1e-12 * std::exp(2.0 * t));
    NormalVector res = rescaled_linear_poincare(f, u, t, kPCfg, kCfg);
    CHECK(res.vec[1] == doctest::Approx(std::exp(3.0 * t)).epsilon(1e-9));
  }
}

TEST_CASE("projected tangent flow is a cocycle") {
  VectorFieldSpec f = VectorFieldSpec::lorenz();
  Vec x(3);
  x << 4.0, -7.0, 21.0;
  Rng rng(21);
  Vec w = rng.on_sphere(3);
  NormalVector u = normal_project(f, x, w);
  const double s = 0.4, t = 0.7;
  NormalVector one = linear_poincare(f, u, s + t, kPCfg, kCfg);
  NormalVector half = linear_poincare(f, u, s, kPCfg, kCfg);
  NormalVector two = linear_poincare(f, half, t, kPCfg, kCfg);
  CHECK((one.vec - two.vec).norm() / one.vec.norm() < 1e-8);
  CHECK((one.base - two.base).norm() / one.base.norm() < 1e-9);
}

TEST_CASE("crossing time of a shifted point on the stable axis") {
  VectorFieldSpec f = diag_field();
  Vec x(2), y(2);
  x << 1.0, 0.0;
  for (double eta : {0.01, -0.005, 0.04}) {
    y << 1.0 + eta, 0.0;
    const double got = crossing_time(f, x, y, 0.25, 0.1, kCfg);
    CHECK(got == doctest::Approx(std::log1p(eta)).epsilon(1e-10));
  }
}

TEST_CASE("crossing time error modes") {
  VectorFieldSpec f = diag_field();
  Vec x(2), y(2);
  x << 1.0, 0.0;
  // Orbit of (0.5, 0) reaches the section only at -log 2, outside the window.
  y << 0.5, 0.0;
  CHECK_THROWS_AS(crossing_time(f, x, y, 0.25, 0.1, kCfg), NoCrossingError);

  // On a rotation both tau = -eps and tau = -eps +- 2 pi land near x.
  Mat r(2, 2);
  r << 0.0, -1.0, 1.0, 0.0;
  VectorFieldSpec rot = VectorFieldSpec::linear(r);
  const double eps = 0.02;
  Vec z(2);
  z << std::cos(eps), std::sin(eps);
  CHECK_THROWS_AS(crossing_time(rot, x, z, 7.0, 0.1, kCfg),
                  AmbiguousCrossingError);
  // A window below half a turn isolates the nearby crossing.
  CHECK(crossing_time(rot, x, z, 0.25, 0.1, kCfg) ==
        doctest::Approx(-eps).epsilon(1e-9));
}

TEST_CASE("holonomy through a saddle block has the product closed form") {
  // z = (1, 0.01) over the section at phi_1(1, 0): the first coordinate moves
  // independently, so the crossing time is exactly 1 and the image is
  // 0.01 e^2 in the fiber; rescaling by e^{1} gives 0.01 e^3. The rescaled
  // offset passes 0.2 on the way, so the tube must be opened beyond the
  // default delta for the closed form to be reachable.
  VectorFieldSpec f = diag_field();
  PoincareConfig wide = kPCfg;
  wide.delta = 0.25;
  Vec x(2), e2(2);
  x << 1.0, 0.0;
  e2 << 0.0, 1.0;
  NormalVector v{x, 0.01 * e2};
  PoincareImage out = rescaled_nonlinear_poincare(f, v, 1.0, wide, kCfg);
  CHECK(out.crossing_time == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(out.ratio_bound == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(out.image.vec[1] == doctest::Approx(0.01 * std::exp(3.0)).epsilon(1e-8));
  CHECK(std::abs(out.image.vec[0]) < 1e-10);
  CHECK(out.image.base[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));

  // The same holonomy without rescaling.
  NormalVector u{x, 0.01 * e2};
  PoincareImage plain = nonlinear_poincare(f, u, 1.0, wide, kCfg);
  CHECK(plain.image.vec[1] ==
        doctest::Approx(0.01 * std::exp(2.0)).epsilon(1e-8));
}

TEST_CASE("holonomy composition on the hopf limit cycle, t beyond one") {
  // On r = 1 the angle advances at unit speed for every radius, so the
  // crossing time is exact and the radial image follows the logistic closed
  // form r(t)^2 = r0^2 e^{2t} / (1 + r0^2 (e^{2t} - 1)).
  VectorFieldSpec f = VectorFieldSpec::hopf();
  Vec x(2), e1(2);
  x << 1.0, 0.0;
  e1 << 1.0, 0.0;
  const double r0 = 1.01;
  NormalVector v{x, (r0 - 1.0) * e1};
  const double t = 2.5;
  PoincareImage out = rescaled_nonlinear_poincare(f, v, t, kPCfg, kCfg);
  CHECK(out.requested_time == t);
  CHECK(out.crossing_time == doctest::Approx(t).epsilon(1e-9));
  CHECK(out.ratio_bound == doctest::Approx(1.0).epsilon(1e-9));
  const double e2t = std::exp(2.0 * t);
  const double rt = r0 * std::exp(t) / std::sqrt(1.0 + r0 * r0 * (e2t - 1.0));
  Vec radial(2);
  radial << std::cos(t), std::sin(t);
  CHECK((out.image.base - radial).norm() < 1e-8);
  CHECK((out.image.vec - (rt - 1.0) * radial).norm() < 1e-8);
}

TEST_CASE("holonomy derivative at zero matches the projected tangent flow") {
  // Central difference of the rescaled holonomy against the rescaled
  // projected tangent flow; the acceptance suite does the order study.
  VectorFieldSpec f = VectorFieldSpec::lorenz();
  Vec x(3);
  x << 4.0, -7.0, 21.0;
  Rng rng(7);
  NormalVector dir = normal_project(f, x, rng.on_sphere(3));
  dir.vec.normalize();
  const double h = 1e-3, t = 0.5;
  NormalVector vp{x, h * dir.vec};
  NormalVector vm{x, -h * dir.vec};
  Vec fd = (rescaled_nonlinear_poincare(f, vp, t, kPCfg, kCfg).image.vec -
            rescaled_nonlinear_poincare(f, vm, t, kPCfg, kCfg).image.vec) /
           (2.0 * h);
  Vec lin = rescaled_linear_poincare(f, dir, t, kPCfg, kCfg).vec;
  CHECK((fd - lin).norm() / lin.norm() < 1e-4);
}

TEST_CASE("tube escape is detected with a time stamp") {
  // Rescaled offset along the saddle grows like e^{3s} from 0.045, crossing
  // delta = 0.1 near s = ln(0.1 / 0.045) / 3, well before t = 1.
  VectorFieldSpec f = diag_field();
  Vec x(2), e2(2);
  x << 1.0, 0.0;
  e2 << 0.0, 1.0;
  NormalVector u{x, 0.045 * e2};
  try {
    nonlinear_poincare(f, u, 1.0, kPCfg, kCfg);
    FAIL("expected TubeEscapeError");
  } catch (const TubeEscapeError& e) {
    const double want = std::log(0.1 / 0.045) / 3.0;
    CHECK(e.escape_time == doctest::Approx(want).scale(1.0).epsilon(0.25));
  }
}

TEST_CASE("fiber vectors at or beyond beta are rejected") {
  VectorFieldSpec f = diag_field();
  Vec x(2), e2(2);
  x << 1.0, 0.0;
  e2 << 0.0, 1.0;
  NormalVector too_long{x, 0.06 * e2};  // beta |X| = 0.05
  CHECK_THROWS_AS(nonlinear_poincare(f, too_long, 0.5, kPCfg, kCfg),
                  DomainError);
  NormalVector bad{x, Vec::Ones(2)};  // not orthogonal to X = (-1, 0)
  CHECK_THROWS_AS(nonlinear_poincare(f, bad, 0.5, kPCfg, kCfg), DomainError);
}

TEST_CASE("near singular orbits abort section operations") {
  Mat a(2, 2);
  a << -1.0, 0.0, 0.0, -2.0;
  VectorFieldSpec f = VectorFieldSpec::linear(a);
  Vec x(2), e2(2);
  x << 1e-6, 0.0;
  e2 << 0.0, 1.0;
  NormalVector u{x, 1e-9 * e2};
  CHECK_THROWS_AS(linear_poincare(f, u, 10.0, kPCfg, kCfg),
                  NearSingularityError);
}

TEST_CASE("holonomy trace is monotone and stays in the tube") {
  VectorFieldSpec f = VectorFieldSpec::lorenz();
  Vec x(3);
  x << 4.0, -7.0, 21.0;
  Vec Xx = f.eval(x);
  Rng rng(13);
  NormalVector dir = normal_project(f, x, rng.on_sphere(3));
  dir.vec.normalize();
  // This stretch of the orbit expands normal offsets hard (the tube test
  // below sees a factor near 20 by s = 0.85), so the in-tube trace uses a
  // short span and a small start.
  Vec z = x + 0.005 * Xx.norm() * dir.vec;
  HolonomyTrace tr = holonomy_trace(f, x, z, 0.5, kPCfg, kCfg);
  REQUIRE(tr.base_times.size() > 10);
  CHECK(tr.base_times.front() == 0.0);
  CHECK(tr.base_times.back() == doctest::Approx(0.5));
  CHECK(std::abs(tr.crossing_times.front()) < 1e-10);
  for (std::size_t i = 1; i < tr.crossing_times.size(); ++i)
    CHECK(tr.crossing_times[i] > tr.crossing_times[i - 1]);
  for (double off : tr.rescaled_offsets) CHECK(off < kPCfg.delta);
  // The reparametrization stays close to the identity.
  for (std::size_t i = 0; i < tr.base_times.size(); ++i)
    CHECK(std::abs(tr.crossing_times[i] - tr.base_times[i]) < 0.05);
}

TEST_CASE("expanding holonomy ends in tube escape, not a wrong answer") {
  VectorFieldSpec f = VectorFieldSpec::lorenz();
  Vec x(3);
  x << 4.0, -7.0, 21.0;
  Vec Xx = f.eval(x);
  Rng rng(13);
  NormalVector dir = normal_project(f, x, rng.on_sphere(3));
  dir.vec.normalize();
  Vec z = x + 0.01 * Xx.norm() * dir.vec;
  CHECK_THROWS_AS(holonomy_trace(f, x, z, 1.0, kPCfg, kCfg), TubeEscapeError);
}
