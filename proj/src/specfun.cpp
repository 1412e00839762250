#include "sluaudit/specfun.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "sluaudit/errors.hpp"

namespace sluaudit {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 500;

// Lanczos coefficients for g=7, n=9.
constexpr double kLanczosG = 7.0;
constexpr double kLanczos[9] = {
    0.99999999999980993,   676.5203681218851,     -1259.1392167224028,
    771.32342877765313,    -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,  9.9843695780195716e-6, 1.5056327351493116e-7,
};

double lanczos_log_gamma(double x) {
    // Valid for x >= 0.5; callers reflect smaller arguments.
    double acc = kLanczos[0];
    for (int i = 1; i < 9; ++i) acc += kLanczos[i] / (x - 1.0 + i);
    double t = x + kLanczosG - 0.5;
    return 0.5 * std::log(2.0 * M_PI) + (x - 0.5) * std::log(t) - t + std::log(acc);
}

// Series expansion of P(a, x), convergent for x < a+1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps) {
            return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
        }
    }
    throw StatError("regularized_gamma_p: series failed to converge");
}

// Continued fraction for Q(a, x) = 1 - P(a, x) (modified Lentz), x >= a+1.
double gamma_q_contfrac(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) {
            return h * std::exp(-x + a * std::log(x) - log_gamma(a));
        }
    }
    throw StatError("regularized_gamma_p: continued fraction failed to converge");
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_contfrac(double a, double b, double x) {
    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) return h;
    }
    throw StatError("regularized_beta: continued fraction failed to converge");
}

double chi2_pdf(double x, int df) {
    if (x <= 0.0) return 0.0;
    double half = 0.5 * df;
    return std::exp((half - 1.0) * std::log(x) - 0.5 * x - half * std::log(2.0) -
                    log_gamma(half));
}

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// Bisection on [lo, hi] with cdf(lo) < prob < cdf(hi), polished by Newton.
template <typename Cdf, typename Pdf>
double invert_cdf(double prob, double lo, double hi, Cdf cdf, Pdf pdf) {
    for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + std::fabs(lo)); ++i) {
        double mid = 0.5 * (lo + hi);
        if (cdf(mid) < prob) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 8; ++i) {
        double f = cdf(x) - prob;
        double fp = pdf(x);
        if (fp <= 0.0) break;
        double step = f / fp;
        double next = x - step;
        if (next <= lo || next >= hi) break;  // keep the bracket
        x = next;
        if (std::fabs(step) < 1e-9) break;
    }
    return x;
}

}  // namespace

double log_gamma(double x) {
    if (!(x > 0.0)) throw StatError("log_gamma: requires x > 0");
    if (x < 0.5) {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx).
        return std::log(M_PI / std::sin(M_PI * x)) - lanczos_log_gamma(1.0 - x);
    }
    return lanczos_log_gamma(x);
}

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0)) throw StatError("regularized_gamma_p: requires a > 0");
    if (x < 0.0) throw StatError("regularized_gamma_p: requires x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_contfrac(a, x);
}

double regularized_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw StatError("regularized_beta: requires a, b > 0");
    if (x < 0.0 || x > 1.0) throw StatError("regularized_beta: requires 0 <= x <= 1");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double front = std::exp(log_gamma(a + b) - log_gamma(a) - log_gamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_contfrac(a, b, x) / a;
    }
    return 1.0 - front * beta_contfrac(b, a, 1.0 - x) / b;
}

TailProbability normal_cdf(double z) {
    double p = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return {p, "Phi(" + std::to_string(z) + ")"};
}

TailProbability chi2_cdf(double x, int df) {
    if (df < 1) throw StatError("chi2_cdf: requires df >= 1");
    if (x < 0.0) throw StatError("chi2_cdf: requires x >= 0");
    double p = regularized_gamma_p(0.5 * df, 0.5 * x);
    return {p, "chi2 cdf, df=" + std::to_string(df)};
}

TailProbability f_cdf(double x, int df1, int df2) {
    if (df1 < 1 || df2 < 1) throw StatError("f_cdf: requires df1, df2 >= 1");
    if (x < 0.0) throw StatError("f_cdf: requires x >= 0");
    if (x == 0.0) return {0.0, "F cdf"};
    double p = regularized_beta(df1 * x / (df1 * x + df2), 0.5 * df1, 0.5 * df2);
    return {p, "F cdf, df=(" + std::to_string(df1) + "," + std::to_string(df2) + ")"};
}

double chi2_quantile(double prob, int df) {
    if (!(prob > 0.0 && prob < 1.0)) throw StatError("chi2_quantile: requires 0 < prob < 1");
    if (df < 1) throw StatError("chi2_quantile: requires df >= 1");
    double hi = df + 10.0;
    while (chi2_cdf(hi, df).p < prob) hi *= 2.0;
    return invert_cdf(
        prob, 0.0, hi, [df](double x) { return chi2_cdf(x, df).p; },
        [df](double x) { return chi2_pdf(x, df); });
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw StatError("normal_quantile: requires 0 < prob < 1");
    return invert_cdf(
        prob, -40.0, 40.0, [](double z) { return normal_cdf(z).p; },
        [](double z) { return normal_pdf(z); });
}

}  // namespace sluaudit
