#pragma once

#include <string>

namespace sluaudit {

// A p-value plus a note saying which statistic produced it.
struct TailProbability {
    double p = 0.0;
    std::string description;

    operator double() const { return p; }
};

// ln Γ(x) for x > 0 (Lanczos approximation, g=7).
double log_gamma(double x);

// Regularized lower incomplete gamma P(a, x): series for x < a+1,
// continued fraction for the upper tail otherwise.
double regularized_gamma_p(double a, double x);

// Regularized incomplete beta I_x(a, b): continued fraction, switched
// through the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) for convergence.
double regularized_beta(double x, double a, double b);

TailProbability normal_cdf(double z);
TailProbability chi2_cdf(double x, int df);
TailProbability f_cdf(double x, int df1, int df2);

// Inverse CDFs: bracketed bisection refined with Newton steps, tolerance 1e-9.
double chi2_quantile(double prob, int df);
double normal_quantile(double prob);

}  // namespace sluaudit
