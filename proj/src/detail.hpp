#pragma once

// Internal helpers shared by the higher level modules. Not installed.

#include <string>
#include <utility>

#include "singflow/integrate.hpp"

namespace singflow::detail {

/// integrate() that truncates at the domain exit instead of throwing, so
/// scans over an orbit can use whatever portion exists.
Trajectory orbit_capped(const VectorFieldSpec& spec, const Vec& x, double T,
                        const IntegratorConfig& icfg);

/// Sampled then ternary-refined minimum of t -> d(phi_t(y), x) over the span
/// of traj restricted to [tlo, thi]. Returns (argmin, min).
std::pair<double, double> min_orbit_distance(const Trajectory& traj,
                                             const Vec& x, double tlo,
                                             double thi);

/// Minimal rotation carrying unit vector p to unit vector q (identity when
/// they coincide); acts as the identity on the orthogonal complement of
/// their span. Requires p != -q.
Mat rotation_between(const Vec& p, const Vec& q);

/// Orthonormal basis of the hyperplane orthogonal to the unit vector n,
/// as the d x (d-1) matrix of trailing columns of a Householder frame.
Mat hyperplane_frame(const Vec& n);

std::string point_str(const Vec& x);

}  // namespace singflow::detail
