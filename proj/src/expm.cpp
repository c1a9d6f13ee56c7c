#include "singflow/expm.hpp"

#include <cmath>

namespace singflow {
namespace {

// Pade numerator coefficients for the diagonal approximants of e^x; the
// denominator of degree m uses the same coefficients with alternating signs,
// which is why only U (odd part) and V (even part) are formed below.
const double kB3[] = {120.0, 60.0, 12.0, 1.0};
const double kB5[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
const double kB7[] = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                      25200.0,    1512.0,    56.0,      1.0};
const double kB9[] = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                      30270240.0,    2162160.0,    110880.0,     3960.0,
                      90.0,          1.0};
const double kB13[] = {64764752532480000.0,
                       32382376266240000.0,
                       7771770303897600.0,
                       1187353796428800.0,
                       129060195264000.0,
                       10559470521600.0,
                       670442572800.0,
                       33522128640.0,
                       1323241920.0,
                       40840800.0,
                       960960.0,
                       16380.0,
                       182.0,
                       1.0};

// 1-norm thresholds below which the degree-m approximant keeps the backward
// error under the double precision unit roundoff.
const double kTheta3 = 1.495585217958292e-2;
const double kTheta5 = 2.539398330063230e-1;
const double kTheta7 = 9.504178996162932e-1;
const double kTheta9 = 2.097847961257068e0;
const double kTheta13 = 5.371920351148152e0;

Mat pade_solve(const Mat& u, const Mat& v) {
  // (V - U) X = (V + U)
  return (v - u).partialPivLu().solve(v + u);
}

// Low degree approximants: U = A * sum b_{2k+1} A^{2k}, V = sum b_{2k} A^{2k}.
Mat pade_low(const Mat& a, const double* b, int m) {
  const int n = static_cast<int>(a.rows());
  const Mat a2 = a * a;
  Mat even = b[0] * Mat::Identity(n, n);
  Mat odd = b[1] * Mat::Identity(n, n);
  Mat pow = Mat::Identity(n, n);
  for (int k = 2; k <= m; k += 2) {
    pow = pow * a2;
    even += b[k] * pow;
    if (k + 1 <= m) odd += b[k + 1] * pow;
  }
  return pade_solve(a * odd, even);
}

Mat pade13(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  const Mat id = Mat::Identity(n, n);
  const Mat a2 = a * a;
  const Mat a4 = a2 * a2;
  const Mat a6 = a2 * a4;
  const double* b = kB13;
  Mat u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
               b[5] * a4 + b[3] * a2 + b[1] * id);
  Mat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
          b[2] * a2 + b[0] * id;
  return pade_solve(u, v);
}

}  // namespace

Mat expm(const Mat& a) {
  if (a.rows() != a.cols()) throw DomainError("expm: matrix must be square");
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  if (!std::isfinite(norm1)) throw DomainError("expm: non-finite entries");

  if (norm1 <= kTheta3) return pade_low(a, kB3, 3);
  if (norm1 <= kTheta5) return pade_low(a, kB5, 5);
  if (norm1 <= kTheta7) return pade_low(a, kB7, 7);
  if (norm1 <= kTheta9) return pade_low(a, kB9, 9);

  int s = 0;
  if (norm1 > kTheta13) {
    s = static_cast<int>(std::ceil(std::log2(norm1 / kTheta13)));
  }
  Mat x = pade13(a / std::pow(2.0, s));
  for (int i = 0; i < s; ++i) x = x * x;
  return x;
}

}  // namespace singflow
