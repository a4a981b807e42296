#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "shelab/errors.hpp"

namespace shelab {

struct MeanVar {
    double mean = 0, var = 0;
    std::size_t n = 0;
    double stderr_mean() const { return n > 1 ? std::sqrt(var / double(n)) : 0.0; }
};

inline MeanVar mean_var(const std::vector<double>& v) {
    MeanVar r;
    r.n = v.size();
    if (v.empty()) return r;
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double s = 0;
    for (double x : v) s += (x - r.mean) * (x - r.mean);
    r.var = v.size() > 1 ? s / double(v.size() - 1) : 0.0;
    return r;
}

// Sample variance with its standard error, sqrt((m4 - s^4 (n-3)/(n-1)) / n).
struct VarianceEstimate {
    double var, se;
    std::size_t n;
};

inline VarianceEstimate variance_with_se(const std::vector<double>& v) {
    auto mv = mean_var(v);
    double m4 = 0;
    for (double x : v) m4 += std::pow(x - mv.mean, 4);
    double n = double(v.size());
    m4 /= n;
    double s4 = mv.var * mv.var;
    return {mv.var, std::sqrt(std::max(0.0, (m4 - s4 * (n - 3) / (n - 1)) / n)), v.size()};
}

inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw DomainError("quantile of empty sample");
    std::sort(v.begin(), v.end());
    double h = p * double(v.size() - 1);
    auto lo = std::size_t(std::floor(h));
    auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

struct Proportion {
    std::size_t hits = 0, trials = 0;
    double p = 0, lo = 0, hi = 0;
    double se() const { return trials ? std::sqrt(p * (1 - p) / double(trials)) : 0.0; }
};

inline Proportion wilson(std::size_t k, std::size_t n, double z = 1.959963984540054) {
    Proportion r{k, n};
    if (n == 0) return r;
    double nn = double(n), ph = double(k) / nn, z2 = z * z;
    double den = 1 + z2 / nn, mid = (ph + z2 / (2 * nn)) / den;
    double half = z * std::sqrt(ph * (1 - ph) / nn + z2 / (4 * nn * nn)) / den;
    r.p = ph;
    r.lo = std::max(0.0, mid - half);
    r.hi = std::min(1.0, mid + half);
    return r;
}

struct LineFit {
    double slope = 0, intercept = 0, r2 = 0, slope_se = 0;
    std::size_t n = 0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw NumericalError("least_squares: need at least two points");
    double n = double(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0) throw NumericalError("least_squares: degenerate abscissae");
    LineFit f;
    f.n = x.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = std::max(0.0, syy - f.slope * sxy);
    f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
    f.slope_se = x.size() > 2 ? std::sqrt(sse / (n - 2) / sxx) : 0.0;
    return f;
}

// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double s = 0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

struct KsResult {
    double D = 0, p = 1;
};

inline double ks_pvalue(double D, double ne) {
    double se = std::sqrt(ne);
    return kolmogorov_q((se + 0.12 + 0.11 / se) * D);
}

inline KsResult ks_one_sample(std::vector<double> v, const std::function<double(double)>& cdf) {
    if (v.size() < 5) throw DomainError("ks: sample too small");
    std::sort(v.begin(), v.end());
    double n = double(v.size()), D = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double F = cdf(v[i]);
        D = std::max({D, double(i + 1) / n - F, F - double(i) / n});
    }
    return {D, ks_pvalue(D, n)};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.size() < 5 || b.size() < 5) throw DomainError("ks: sample too small");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double na = double(a.size()), nb = double(b.size()), D = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        D = std::max(D, std::abs(double(i) / na - double(j) / nb));
    }
    return {D, ks_pvalue(D, na * nb / (na + nb))};
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Exceedance curve and a least-squares fit of log P against lambda^2 * scale.
struct TailFit {
    std::vector<double> lambda, p_hat, ci_lo, ci_hi;
    std::size_t n = 0;
    double slope = 0, intercept = 0, r2 = 0;
    double C0 = 0, C1 = 0;  // P <= C0 exp(-C1 lambda^2 scale)
    double scale = 1;
};

inline TailFit tail_fit(const std::vector<double>& samples, double scale, const std::vector<double>& lambda_grid) {
    if (samples.size() < 500) throw DomainError("tail_fit: need at least 500 samples");
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    if (s.front() == s.back()) throw NumericalError("tail_fit: degenerate (constant) samples");
    TailFit f;
    f.n = s.size();
    f.scale = scale;
    std::vector<double> x, y;
    for (double lam : lambda_grid) {
        auto above = std::size_t(s.end() - std::upper_bound(s.begin(), s.end(), lam));
        auto w = wilson(above, s.size());
        f.lambda.push_back(lam);
        f.p_hat.push_back(w.p);
        f.ci_lo.push_back(w.lo);
        f.ci_hi.push_back(w.hi);
        if (above > 0) {
            x.push_back(lam * lam * scale);
            y.push_back(std::log(w.p));
        }
    }
    if (x.empty()) throw NumericalError("tail_fit: grid too high");
    if (x.size() < 4) throw NumericalError("tail_fit: fewer than 4 grid points with exceedances");
    auto lf = least_squares(x, y);
    f.slope = lf.slope;
    f.intercept = lf.intercept;
    f.r2 = lf.r2;
    f.C0 = std::exp(lf.intercept);
    f.C1 = -lf.slope;
    return f;
}

}  // namespace shelab
