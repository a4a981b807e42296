#pragma once

#include <cmath>
#include <numbers>

#include "shelab/constants.hpp"
#include "shelab/errors.hpp"
#include "shelab/geometry.hpp"
#include "shelab/quadrature.hpp"

namespace shelab {

inline double kernel(double t, double x) {
    if (!(t > 0.0)) throw DomainError("kernel: t must be positive");
    return std::exp(-x * x / (4.0 * t)) / std::sqrt(4.0 * std::numbers::pi * t);
}

struct KernelGrad {
    double dx, dt;            // exact partial derivatives
    double bound_x, bound_t;  // (c/sqrt t) G(2t,x), (c/t) G(2t,x)
    bool holds() const { return std::abs(dx) <= bound_x && std::abs(dt) <= bound_t; }
};

inline KernelGrad kernel_grad_bounds(double t, double x, double c = constants::kernel_grad_c) {
    double g = kernel(t, x), g2 = kernel(2.0 * t, x);
    return {-x / (2.0 * t) * g, g * (x * x / (4.0 * t * t) - 0.5 / t), c / std::sqrt(t) * g2, c / t * g2};
}

// int_0^t G(2r, h) dr, closed form.
inline double kernel_sq_time_integral(double t, double h) {
    if (t <= 0.0) return 0.0;
    double c = h * h / 8.0;
    double v = 2.0 * std::sqrt(t) * std::exp(-c / t);
    if (c > 0.0) v -= 2.0 * std::sqrt(std::numbers::pi * c) * std::erfc(std::sqrt(c / t));
    return v / std::sqrt(8.0 * std::numbers::pi);
}

struct StandardIntegrals {
    double I_space, I_time, I_tail;
    double C;
    double dx, dt;
    bool holds() const {
        double slack = 1.0 + 1e-9;
        return I_space <= C * dx * slack && I_time <= C * std::sqrt(dt) * slack &&
               I_tail <= C * std::sqrt(dt) * slack;
    }
};

// The three square integrals of the heat kernel increments, in closed form:
//   I_space = int_0^t int (G(t-r,x-z) - G(t-r,y-z))^2 dz dr = 2 int_0^t [G(2r,0) - G(2r,x-y)] dr
//   I_time  = int_0^s int (G(t-r,x-z) - G(s-r,x-z))^2 dz dr
//   I_tail  = int_s^t int G(t-r,x-z)^2 dz dr = sqrt((t-s)/(2 pi))
inline StandardIntegrals standard_integrals(double s, double t, double x, double y,
                                            double C = constants::standard_integral_C) {
    if (!(s >= 0.0 && s < t)) throw DomainError("standard_integrals: need 0 <= s < t");
    constexpr double pi = std::numbers::pi;
    double a = t - s;
    double I_space = 2.0 * (kernel_sq_time_integral(t, 0.0) - kernel_sq_time_integral(t, x - y));
    double I_time = 2.0 * (std::sqrt(t) - std::sqrt(a) + std::sqrt(s)) / std::sqrt(8.0 * pi) -
                    2.0 * (std::sqrt(a + 2.0 * s) - std::sqrt(a)) / std::sqrt(4.0 * pi);
    double I_tail = std::sqrt(a / (2.0 * pi));
    return {std::max(I_space, 0.0), std::max(I_time, 0.0), I_tail, C, std::abs(x - y), a};
}

// Covariance of one scalar component of N0 = int_0^t int G(t-s,x-y) W(dy,ds):
// int_0^{min t} G(t1+t2-2r, x1-x2) dr. With r = m - s^2 the integrand is
// 2s G(|t1-t2| + 2s^2, h), which is bounded at s = 0.
inline double n0_covariance(const ParabolicPoint& p1, const ParabolicPoint& p2) {
    double m = std::min(p1.t, p2.t);
    if (m <= 0.0) return 0.0;
    double tau = std::abs(p1.t - p2.t), h = p1.x - p2.x;
    if (h == 0.0) return (std::sqrt(tau + 2.0 * m) - std::sqrt(tau)) / std::sqrt(4.0 * std::numbers::pi);
    auto f = [&](double s) {
        double a = tau + 2.0 * s * s;
        return a > 0.0 ? 2.0 * s * kernel(a, h) : 0.0;
    };
    return integrate(f, 0.0, std::sqrt(m), 1e-10);
}

inline double n0_variance(double t) { return t > 0.0 ? std::sqrt(t / (2.0 * std::numbers::pi)) : 0.0; }

namespace detail {
// F(a,b) = pi|b| erf(|b|/(2 sqrt a)) + 2 sqrt(pi a) exp(-b^2/(4a)); F(0,b) = pi|b|.
inline double variogram_F(double a, double b) {
    constexpr double pi = std::numbers::pi;
    b = std::abs(b);
    if (a <= 0.0) return pi * b;
    double sa = std::sqrt(a);
    return pi * b * std::erf(b / (2.0 * sa)) + 2.0 * std::sqrt(pi * a) * std::exp(-b * b / (4.0 * a));
}
}  // namespace detail

// E[(N0(p1) - N0(p2))^2], closed form. Accurate for tiny separations, where
// Var1 + Var2 - 2 Cov would cancel catastrophically.
inline double n0_variogram(const ParabolicPoint& p1, const ParabolicPoint& p2) {
    double t1 = std::min(p1.t, p2.t), tau = std::abs(p1.t - p2.t), h = p1.x - p2.x;
    if (t1 <= 0.0) return n0_variance(std::max(p1.t, p2.t));
    using detail::variogram_F;
    double far = 0.5 * variogram_F(2.0 * t1, 0.0) - variogram_F(2.0 * t1 + tau, h) +
                 0.5 * variogram_F(2.0 * t1 + 2.0 * tau, 0.0);
    return std::max(0.0, (variogram_F(tau, h) + far) / (2.0 * std::numbers::pi));
}

// Stationary limit t1 -> infinity.
inline double n0_variogram_stationary(double tau, double h) {
    if (tau <= 0.0) return std::abs(h) / 2.0;
    return std::abs(h) / 2.0 * std::erf(std::abs(h) / (2.0 * std::sqrt(tau))) +
           std::sqrt(tau / std::numbers::pi) * std::exp(-h * h / (4.0 * tau));
}

}  // namespace shelab
