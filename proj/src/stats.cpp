#include "fbkws/stats.hpp"

#include <cmath>
#include <string>

#include "fbkws/error.hpp"

namespace fbkws::stats {

namespace {

constexpr double kTol = 1e-10;

// Lentz's method for the continued fraction of I_x(a, b).
double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kTol) return h;
  }
  throw Error(Error::Kind::kRuntime, "incomplete beta did not converge");
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // sample variance, n - 1 denominator
  int n = 0;
};

Moments moments(const std::vector<double>& v, const char* which) {
  require(v.size() >= 2, Error::Kind::kContract,
          std::string("t-test sample ") + which + " needs at least 2 values");
  Moments m;
  m.n = static_cast<int>(v.size());
  for (double x : v) {
    require(std::isfinite(x), Error::Kind::kData,
            std::string("t-test sample ") + which + " contains non-finite values");
    m.mean += x;
  }
  m.mean /= m.n;
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= (m.n - 1);
  return m;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, Error::Kind::kContract, "incomplete beta needs a, b > 0");
  require(x >= 0.0 && x <= 1.0, Error::Kind::kContract, "incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_two_sided_p(double t, double df) {
  require(df > 0.0, Error::Kind::kContract, "degrees of freedom must be positive");
  require(std::isfinite(t), Error::Kind::kData, "t statistic is not finite");
  if (t == 0.0) return 1.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b,
                        double alpha) {
  const Moments ma = moments(a, "a");
  const Moments mb = moments(b, "b");

  TTestResult r;
  const double sa = ma.var / ma.n;
  const double sb = mb.var / mb.n;
  if (sa + sb == 0.0) {
    // no within-sample spread at all: identical means are indistinguishable,
    // different means are trivially separated
    r.t = ma.mean == mb.mean ? 0.0 : (ma.mean > mb.mean ? HUGE_VAL : -HUGE_VAL);
    r.df = static_cast<double>(ma.n + mb.n - 2);
    r.p = ma.mean == mb.mean ? 1.0 : 0.0;
    r.significant = r.p < alpha;
    return r;
  }
  r.t = (ma.mean - mb.mean) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) /
         (sa * sa / (ma.n - 1) + sb * sb / (mb.n - 1));
  r.p = student_two_sided_p(r.t, r.df);
  r.significant = r.p < alpha;
  return r;
}

}  // namespace fbkws::stats
