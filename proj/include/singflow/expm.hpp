#pragma once

#include "singflow/types.hpp"

namespace singflow {

/// Matrix exponential by scaling and squaring with diagonal Pade
/// approximants. Degree 3/5/7/9 when the 1-norm is small enough, otherwise
/// degree 13 after scaling A by a power of two. Backward stable for the
/// moderate norms that occur here (linearizations at singularities times
/// bounded t).
Mat expm(const Mat& a);

}  // namespace singflow
