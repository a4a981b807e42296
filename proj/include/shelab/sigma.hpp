#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "shelab/errors.hpp"
#include "shelab/heat_kernel.hpp"
#include "shelab/quadrature.hpp"
#include "shelab/rng.hpp"

namespace shelab {

// sigma : R^d -> R^{d x d}, with declared Lipschitz constant L and bound
// sigma1, both in the Frobenius norm.
class SigmaFunction {
public:
    enum class Kind { zero, identity, constant, bounded_sine, custom };
    using Evaluator = std::function<void(const double* u, double* m)>;  // row-major d x d

    static SigmaFunction zero(int d) { return SigmaFunction(Kind::zero, d, 0.0, 0.0); }
    static SigmaFunction identity(int d) { return SigmaFunction(Kind::identity, d, 0.0, std::sqrt(double(d))); }

    static SigmaFunction constant(int d, std::vector<double> m) {
        if (m.size() != std::size_t(d * d)) throw ConfigError("constant sigma: matrix must be d x d");
        double f = 0;
        for (double v : m) f += v * v;
        SigmaFunction s(Kind::constant, d, 0.0, std::sqrt(f));
        s.matrix_ = std::move(m);
        return s;
    }

    // scale * block-diagonal rotation by `angle` (a trailing 1x1 block for odd d).
    static SigmaFunction scaled_rotation(int d, double scale, double angle) {
        std::vector<double> m(std::size_t(d * d), 0.0);
        for (int b = 0; b + 1 < d; b += 2) {
            m[b * d + b] = scale * std::cos(angle);
            m[b * d + b + 1] = -scale * std::sin(angle);
            m[(b + 1) * d + b] = scale * std::sin(angle);
            m[(b + 1) * d + b + 1] = scale * std::cos(angle);
        }
        if (d % 2) m[(d - 1) * d + d - 1] = scale;
        return constant(d, std::move(m));
    }

    // sigma1 (I + eps diag(sin u_k)) / (sqrt(d) (1 + eps)).
    static SigmaFunction bounded_sine(int d, double sigma1, double eps) {
        if (!(sigma1 > 0 && eps >= 0)) throw ConfigError("bounded_sine: need sigma1 > 0, eps >= 0");
        double c = sigma1 / (std::sqrt(double(d)) * (1 + eps));
        SigmaFunction s(Kind::bounded_sine, d, c * eps, sigma1);
        s.c_ = c;
        s.eps_ = eps;
        return s;
    }

    static SigmaFunction custom(int d, Evaluator f, double L, double sigma1) {
        SigmaFunction s(Kind::custom, d, L, sigma1);
        s.eval_ = std::move(f);
        return s;
    }

    Kind kind() const { return kind_; }
    int dim() const { return d_; }
    double lipschitz() const { return L_; }
    double sigma1() const { return sigma1_; }
    bool is_constant() const { return kind_ == Kind::zero || kind_ == Kind::identity || kind_ == Kind::constant; }

    void matrix(const double* u, double* m) const {
        int dd = d_ * d_;
        switch (kind_) {
            case Kind::zero:
                for (int i = 0; i < dd; ++i) m[i] = 0;
                break;
            case Kind::identity:
                for (int i = 0; i < dd; ++i) m[i] = 0;
                for (int k = 0; k < d_; ++k) m[k * d_ + k] = 1;
                break;
            case Kind::constant:
                for (int i = 0; i < dd; ++i) m[i] = matrix_[i];
                break;
            case Kind::bounded_sine:
                for (int i = 0; i < dd; ++i) m[i] = 0;
                for (int k = 0; k < d_; ++k) m[k * d_ + k] = c_ * (1 + eps_ * std::sin(u[k]));
                break;
            case Kind::custom:
                eval_(u, m);
                break;
        }
    }

    // out += sigma(u) * w
    void apply_add(const double* u, const double* w, double* out) const {
        switch (kind_) {
            case Kind::zero:
                return;
            case Kind::identity:
                for (int k = 0; k < d_; ++k) out[k] += w[k];
                return;
            case Kind::bounded_sine:
                for (int k = 0; k < d_; ++k) out[k] += c_ * (1 + eps_ * std::sin(u[k])) * w[k];
                return;
            default: {
                std::vector<double> m(std::size_t(d_ * d_));
                matrix(u, m.data());
                for (int k = 0; k < d_; ++k)
                    for (int l = 0; l < d_; ++l) out[k] += m[k * d_ + l] * w[l];
            }
        }
    }

private:
    SigmaFunction(Kind k, int d, double L, double s1) : kind_(k), d_(d), L_(L), sigma1_(s1) {
        if (d < 1) throw ConfigError("sigma: d must be positive");
    }
    Kind kind_;
    int d_;
    double L_, sigma1_;
    double c_ = 0, eps_ = 0;
    std::vector<double> matrix_;
    Evaluator eval_;
};

inline double frobenius(const std::vector<double>& m) {
    double s = 0;
    for (double v : m) s += v * v;
    return std::sqrt(s);
}

struct SigmaCheck {
    double max_lipschitz_ratio = 0;  // max |s(u)-s(v)| / (L |u-v|), 0 if L == 0 and s is constant
    double max_bound_ratio = 0;      // max |s(u)| / sigma1
    bool ok() const { return max_lipschitz_ratio <= 1 + 1e-12 && max_bound_ratio <= 1 + 1e-12; }
};

// Random-probe check of the declared constants.
inline SigmaCheck spot_check(const SigmaFunction& s, int probes, std::uint64_t seed, double spread = 3.0) {
    int d = s.dim();
    CounterStream rs(seed, 0x51);
    std::vector<double> u(d), v(d), mu(std::size_t(d * d)), mv(std::size_t(d * d)), diff(std::size_t(d * d));
    SigmaCheck c;
    for (int p = 0; p < probes; ++p) {
        double du = 0;
        for (int k = 0; k < d; ++k) {
            u[k] = spread * rs.normal();
            v[k] = u[k] + (p % 2 ? spread : 0.01) * rs.normal();
            du += (u[k] - v[k]) * (u[k] - v[k]);
        }
        s.matrix(u.data(), mu.data());
        s.matrix(v.data(), mv.data());
        for (std::size_t i = 0; i < mu.size(); ++i) diff[i] = mu[i] - mv[i];
        double num = frobenius(diff);
        du = std::sqrt(du);
        if (num > 0) {
            double r = s.lipschitz() > 0 ? num / (s.lipschitz() * du) : 1e300;
            c.max_lipschitz_ratio = std::max(c.max_lipschitz_ratio, r);
        }
        if (s.sigma1() > 0) c.max_bound_ratio = std::max(c.max_bound_ratio, frobenius(mu) / s.sigma1());
        else if (frobenius(mu) > 0) c.max_bound_ratio = 1e300;
    }
    return c;
}

// u0 : R -> R^d with uniform bound K0. Heat evolution int G(t,x-y) u0(y) dy is
// closed form for the built-in kinds.
class InitialCondition {
public:
    enum class Kind { zero, constant, heat_kernel, bump, custom };
    using Evaluator = std::function<void(double x, double* out)>;

    static InitialCondition zero(int d) { return InitialCondition(Kind::zero, d, 0.0); }
    static InitialCondition constant(std::vector<double> c) {
        InitialCondition ic(Kind::constant, int(c.size()), 0.0);
        double k = 0;
        for (double v : c) k += v * v;
        ic.K0_ = std::sqrt(k);
        ic.amp_ = std::move(c);
        return ic;
    }
    // amp_k * G(t_init, x)
    static InitialCondition heat_kernel(std::vector<double> amp, double t_init) {
        if (!(t_init > 0)) throw ConfigError("heat_kernel initial condition: t_init must be positive");
        InitialCondition ic = constant(std::move(amp));
        ic.kind_ = Kind::heat_kernel;
        ic.width_ = t_init;
        ic.K0_ *= kernel(t_init, 0.0);
        return ic;
    }
    // amp_k * exp(-x^2 / w^2)
    static InitialCondition bump(std::vector<double> amp, double w) {
        if (!(w > 0)) throw ConfigError("bump initial condition: width must be positive");
        InitialCondition ic = constant(std::move(amp));
        ic.kind_ = Kind::bump;
        ic.width_ = w;
        return ic;
    }
    static InitialCondition custom(int d, Evaluator f, double K0) {
        InitialCondition ic(Kind::custom, d, K0);
        ic.eval_ = std::move(f);
        return ic;
    }

    Kind kind() const { return kind_; }
    int dim() const { return d_; }
    double bound() const { return K0_; }

    void evaluate(double x, double* out) const {
        switch (kind_) {
            case Kind::zero:
                for (int k = 0; k < d_; ++k) out[k] = 0;
                break;
            case Kind::constant:
                for (int k = 0; k < d_; ++k) out[k] = amp_[k];
                break;
            case Kind::heat_kernel: {
                double g = kernel(width_, x);
                for (int k = 0; k < d_; ++k) out[k] = amp_[k] * g;
                break;
            }
            case Kind::bump: {
                double g = std::exp(-x * x / (width_ * width_));
                for (int k = 0; k < d_; ++k) out[k] = amp_[k] * g;
                break;
            }
            case Kind::custom:
                eval_(x, out);
                break;
        }
    }

    // int G(t, x-y) u0(y) dy; t = 0 gives u0(x).
    void heat_evolution(double t, double x, double* out) const {
        if (t <= 0) return evaluate(x, out);
        switch (kind_) {
            case Kind::zero:
            case Kind::constant:
                return evaluate(x, out);
            case Kind::heat_kernel: {
                double g = kernel(width_ + t, x);
                for (int k = 0; k < d_; ++k) out[k] = amp_[k] * g;
                return;
            }
            case Kind::bump: {
                double s = width_ * width_;
                double g = std::sqrt(s / (s + 4 * t)) * std::exp(-x * x / (s + 4 * t));
                for (int k = 0; k < d_; ++k) out[k] = amp_[k] * g;
                return;
            }
            case Kind::custom: {
                std::vector<double> tmp(d_);
                double sd = std::sqrt(2 * t);
                for (int k = 0; k < d_; ++k) {
                    auto f = [&](double z) {
                        eval_(x + sd * z, tmp.data());
                        return tmp[k] * std::exp(-0.5 * z * z);
                    };
                    out[k] = integrate(f, -12.0, 12.0, 1e-10) / std::sqrt(2 * std::numbers::pi);
                }
                return;
            }
        }
    }

private:
    InitialCondition(Kind k, int d, double K0) : kind_(k), d_(d), K0_(K0) {
        if (d < 1) throw ConfigError("initial condition: d must be positive");
    }
    Kind kind_;
    int d_;
    double K0_;
    double width_ = 0;
    std::vector<double> amp_;
    Evaluator eval_;
};

}  // namespace shelab
