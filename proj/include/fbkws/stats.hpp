#pragma once

#include <vector>

namespace fbkws::stats {

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool significant = false;
};

// Regularized incomplete beta I_x(a, b), continued fraction evaluation,
// absolute tolerance 1e-10. Domain: a, b > 0 and x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided tail probability of Student's t with `df` degrees of freedom.
double student_two_sided_p(double t, double df);

// Welch's unequal-variance two-sample t-test, two-sided, with the
// Welch-Satterthwaite degrees of freedom. Both samples need >= 2 finite
// values. Degenerate case: both variances zero -> p = 1 when the means are
// equal, p = 0 otherwise.
TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b,
                        double alpha = 0.05);

}  // namespace fbkws::stats
