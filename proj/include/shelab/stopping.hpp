#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "shelab/errors.hpp"
#include "shelab/geometry.hpp"
#include "shelab/rng.hpp"
#include "shelab/solver.hpp"

namespace shelab {

struct StoppingConfig {
    double K = 10.0;
    double delta = 0.25;
    double T0 = 3.5;      // clipped to the path horizon
    double x_half = 2.0;  // space window [-x_half, x_half]
    double t_start = 0.5;
    double cap = 0.5;     // only pairs with Delta <= cap are scanned
    int stride = 2;

    void validate() const {
        if (!(delta > 0 && delta < 1)) throw ConfigError("stopping: delta must lie in (0,1)");
        if (!(K > 0)) throw ConfigError("stopping: K must be positive");
        if (!(cap > 0 && cap <= 1)) throw ConfigError("stopping: cap must lie in (0,1]");
        if (stride < 1) throw ConfigError("stopping: stride must be >= 1");
    }
};

struct Witness {
    ParabolicPoint p, q;
    double lhs = 0, rhs = 0;  // |u(p)-u(q)| and K Delta^{1-delta} (or K(1+|x|))
};

struct StopTime {
    double tau = 0;
    int index = 0;       // time level of tau (nt when untriggered)
    int clip_index = 0;  // last level on which the defining inequality was verified
    bool triggered = false;
    Witness witness;
};

struct StoppingResult {
    StopTime tau1, tau2, tau3;
    bool any_triggered() const { return tau1.triggered || tau2.triggered || tau3.triggered; }
};

namespace detail {

// Strided sample of the scan window with per-block bounding boxes of the
// field values, used to discard blocks that cannot hold a violating partner.
class ModulusScanner {
public:
    static constexpr int BT = 16, BX = 4;

    ModulusScanner(const FieldPath& u, const StoppingConfig& cfg) : u_(u), cfg_(cfg), d_(u.dim()) {
        cfg.validate();
        const auto& g = u.grid();
        if (g.x(0) > -cfg.x_half + 1e-12 || g.x(g.nx - 1) < cfg.x_half - 1e-12)
            throw GridError("stopping: grid does not cover the space window");
        double t_end = std::min(cfg.T0, g.t(u.i_end()));
        if (t_end < cfg.t_start || g.t(u.i_begin()) > cfg.t_start + 1e-12)
            throw GridError("stopping: grid does not cover the time window");
        i0_ = int(std::ceil((cfg.t_start - g.t0) / g.dt - 1e-9));
        int i1 = int(std::floor((t_end - g.t0) / g.dt + 1e-9));
        j0_ = int(std::ceil((-cfg.x_half - g.x0) / g.dx - 0.5 - 1e-9));
        int j1 = int(std::floor((cfg.x_half - g.x0) / g.dx - 0.5 + 1e-9));
        s_ = cfg.stride;
        na_ = (i1 - i0_) / s_ + 1;
        nb_ = (j1 - j0_) / s_ + 1;
        acap_ = int(std::floor(std::pow(cfg.cap, 4) / (s_ * g.dt) + 1e-9));
        bcap_ = int(std::floor(cfg.cap * cfg.cap / (s_ * g.dx) + 1e-9));
        // Delta^{1-delta} for every strided offset inside the cap, 0 beyond it
        pw_.assign(std::size_t(acap_ + 1) * (bcap_ + 1), 0.0);
        for (int da = 0; da <= acap_; ++da)
            for (int db = 0; db <= bcap_; ++db) {
                double D = delta_metric(da * s_ * g.dt, db * s_ * g.dx);
                pw_[std::size_t(da) * (bcap_ + 1) + db] = D <= cfg.cap ? std::pow(D, 1 - cfg.delta) : 0.0;
            }
        nba_ = (na_ + BT - 1) / BT;
        nbb_ = (nb_ + BX - 1) / BX;
        lo_.assign(std::size_t(nba_) * nbb_ * d_, std::numeric_limits<double>::infinity());
        hi_.assign(lo_.size(), -std::numeric_limits<double>::infinity());
        for (int a = 0; a < na_; ++a)
            for (int b = 0; b < nb_; ++b) {
                const double* v = val(a, b);
                std::size_t o = (std::size_t(a / BT) * nbb_ + b / BX) * d_;
                for (int k = 0; k < d_; ++k) {
                    lo_[o + k] = std::min(lo_[o + k], v[k]);
                    hi_[o + k] = std::max(hi_[o + k], v[k]);
                }
            }
    }

    int levels() const { return na_; }
    int cols() const { return nb_; }
    int level_index(int a) const { return i0_ + a * s_; }
    double t(int a) const { return u_.grid().t(level_index(a)); }
    double x(int b) const { return u_.grid().x(j0_ + b * s_); }
    const double* val(int a, int b) const { return u_.at(i0_ + a * s_, j0_ + b * s_); }

    double dist(const double* p, const double* q) const {
        double s = 0;
        for (int k = 0; k < d_; ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
        return std::sqrt(s);
    }

    // Visit partners (a2,b2) of (a,b) with a2 <= a and Delta <= cap, skipping
    // blocks whose best possible ratio is below `floor_ratio()`. visit gets the
    // ratio |du| / Delta^{1-delta} and Delta^{1-delta}; returning true stops.
    template <class Visit, class Floor>
    bool partners(int a, int b, Visit&& visit, Floor&& floor_ratio) const {
        const double* p = val(a, b);
        auto pw = [&](int da, int db) { return pw_[std::size_t(da) * (bcap_ + 1) + std::abs(db)]; };
        int a_lo = std::max(0, a - acap_), b_lo = std::max(0, b - bcap_), b_hi = std::min(nb_ - 1, b + bcap_);
        for (int A = a_lo / BT; A <= a / BT; ++A)
            for (int B = b_lo / BX; B <= b_hi / BX; ++B) {
                int ra0 = std::max(A * BT, a_lo), ra1 = std::min(A * BT + BT - 1, a);
                int rb0 = std::max(B * BX, b_lo), rb1 = std::min(B * BX + BX - 1, b_hi);
                int gb = std::max({0, rb0 - b, b - rb1});
                double dmin = pw(a - ra1, gb);
                if (dmin > 0) {
                    const double* lo = lo_.data() + (std::size_t(A) * nbb_ + B) * d_;
                    const double* hi = hi_.data() + (std::size_t(A) * nbb_ + B) * d_;
                    double s = 0;
                    for (int k = 0; k < d_; ++k) {
                        double e = std::max(std::abs(p[k] - lo[k]), std::abs(hi[k] - p[k]));
                        s += e * e;
                    }
                    if (std::sqrt(s) < floor_ratio() * dmin) continue;
                }
                for (int a2 = ra0; a2 <= ra1; ++a2)
                    for (int b2 = rb0; b2 <= rb1; ++b2) {
                        if (a2 == a && b2 == b) continue;
                        double Dp = pw(a - a2, b2 - b);
                        if (Dp == 0) continue;
                        if (visit(a2, b2, dist(p, val(a2, b2)) / Dp, Dp)) return true;
                    }
            }
        return false;
    }

private:
    const FieldPath& u_;
    StoppingConfig cfg_;
    int d_, i0_, j0_, s_, na_, nb_, acap_, bcap_, nba_, nbb_;
    std::vector<double> lo_, hi_, pw_;
};

inline StopTime untriggered(const FieldPath& u) {
    StopTime s;
    s.index = u.i_end();
    s.clip_index = u.i_end();
    s.tau = u.grid().t(u.i_end());
    return s;
}

}  // namespace detail

// First scanned time level t >= t_start at which some pair (t,x), (s,y) with
// s <= t, both in the window and Delta <= cap, has |u(t,x)-u(s,y)| >= K Delta^{1-delta}.
inline StopTime tau1(const FieldPath& u, const StoppingConfig& cfg) {
    detail::ModulusScanner sc(u, cfg);
    const double K = cfg.K;
    for (int a = 0; a < sc.levels(); ++a)
        for (int b = 0; b < sc.cols(); ++b) {
            Witness w;
            bool hit = sc.partners(
                a, b,
                [&](int a2, int b2, double ratio, double D) {
                    if (ratio < K) return false;
                    w.p = {sc.t(a), sc.x(b)};
                    w.q = {sc.t(a2), sc.x(b2)};
                    w.lhs = ratio * D;
                    w.rhs = K * D;
                    return true;
                },
                [&] { return K; });
            if (hit) {
                StopTime s;
                s.triggered = true;
                s.index = sc.level_index(a);
                s.clip_index = a > 0 ? sc.level_index(a - 1) : sc.level_index(0) - 1;
                s.tau = u.grid().t(s.index);
                s.witness = w;
                return s;
            }
        }
    return detail::untriggered(u);
}

// Largest ratio |u(p)-u(q)| / Delta^{1-delta} over all scanned pairs: the
// smallest K for which tau1 does not trigger is just above this value.
inline double max_modulus_ratio(const FieldPath& u, const StoppingConfig& cfg, Witness* arg = nullptr) {
    detail::ModulusScanner sc(u, cfg);
    double best = 0;
    for (int a = 0; a < sc.levels(); ++a)
        for (int b = 0; b < sc.cols(); ++b)
            sc.partners(
                a, b,
                [&](int a2, int b2, double ratio, double D) {
                    if (ratio > best) {
                        best = ratio;
                        if (arg) {
                            arg->p = {sc.t(a), sc.x(b)};
                            arg->q = {sc.t(a2), sc.x(b2)};
                            arg->lhs = ratio * D;
                            arg->rhs = best * D;
                        }
                    }
                    return false;
                },
                [&] { return best; });
    return best;
}

// Reference O(pairs) scan without block pruning (tests only).
inline double max_modulus_ratio_bruteforce(const FieldPath& u, const StoppingConfig& cfg) {
    detail::ModulusScanner sc(u, cfg);
    double best = 0;
    for (int a = 0; a < sc.levels(); ++a)
        for (int b = 0; b < sc.cols(); ++b)
            sc.partners(
                a, b,
                [&](int, int, double ratio, double) {
                    best = std::max(best, ratio);
                    return false;
                },
                [] { return 0.0; });
    return best;
}

// First time level with |path(t,x)| >= K (1 + |x|) at some grid point.
inline StopTime tau_growth(const FieldPath& path, double K) {
    const auto& g = path.grid();
    int d = path.dim();
    for (int i = path.i_begin(); i <= path.i_end(); ++i)
        for (int j = 0; j < g.nx; ++j) {
            const double* v = path.at(i, j);
            double s = 0;
            for (int k = 0; k < d; ++k) s += v[k] * v[k];
            double lhs = std::sqrt(s), rhs = K * (1 + std::abs(g.x(j)));
            if (lhs >= rhs) {
                StopTime st;
                st.triggered = true;
                st.index = i;
                st.clip_index = i - 1;
                st.tau = g.t(i);
                st.witness = {{g.t(i), g.x(j)}, {g.t(i), g.x(j)}, lhs, rhs};
                return st;
            }
        }
    return detail::untriggered(path);
}

struct HolderEstimate {
    double Z_hat = 0;
    std::size_t pairs = 0;
    Witness arg;
};

// Max ratio over n random grid pairs. Pair k depends only on (seed, k), so a
// larger n extends the same sample. Half the pairs are uniform over the
// window, half are local (partner within Delta <= cap of the first point).
inline HolderEstimate estimate_Z(const FieldPath& u, double delta, std::size_t n_pairs, std::uint64_t seed,
                                 const StoppingConfig& win = {}) {
    if (n_pairs < 1) throw DomainError("estimate_Z: need at least one pair");
    const auto& g = u.grid();
    double t_end = std::min(win.T0, g.t(u.i_end()));
    int i0 = int(std::ceil((win.t_start - g.t0) / g.dt - 1e-9)), i1 = int(std::floor((t_end - g.t0) / g.dt + 1e-9));
    int j0 = int(std::ceil((-win.x_half - g.x0) / g.dx - 0.5 - 1e-9));
    int j1 = int(std::floor((win.x_half - g.x0) / g.dx - 0.5 + 1e-9));
    if (i1 < i0 || j1 < j0 || i0 < u.i_begin()) throw GridError("estimate_Z: window not covered");
    int ci = std::max(1, int(std::pow(win.cap, 4) / g.dt)), cj = std::max(1, int(win.cap * win.cap / g.dx));
    HolderEstimate h;
    h.pairs = n_pairs;
    for (std::size_t k = 0; k < n_pairs; ++k) {
        CounterStream rs(seed, 0x2a000000ULL + k);
        int ia = i0 + int(rs.below(std::uint64_t(i1 - i0 + 1))), ja = j0 + int(rs.below(std::uint64_t(j1 - j0 + 1)));
        int ib, jb;
        if (k % 2 == 0) {
            ib = i0 + int(rs.below(std::uint64_t(i1 - i0 + 1)));
            jb = j0 + int(rs.below(std::uint64_t(j1 - j0 + 1)));
        } else {
            ib = std::clamp(ia - ci + int(rs.below(std::uint64_t(2 * ci + 1))), i0, i1);
            jb = std::clamp(ja - cj + int(rs.below(std::uint64_t(2 * cj + 1))), j0, j1);
        }
        if (ia == ib && ja == jb) continue;
        double D = delta_metric(g.t(ia) - g.t(ib), g.x(ja) - g.x(jb));
        double s = 0;
        for (int c = 0; c < u.dim(); ++c) s += std::pow(u.at(ia, ja)[c] - u.at(ib, jb)[c], 2);
        double r = std::sqrt(s) / std::pow(D, 1 - delta);
        if (r > h.Z_hat) {
            h.Z_hat = r;
            h.arg = {{g.t(ia), g.x(ja)}, {g.t(ib), g.x(jb)}, std::sqrt(s), std::pow(D, 1 - delta)};
        }
    }
    return h;
}

// Checks the clipped-path modulus: every scanned pair with both times at or
// before clip_index satisfies the K-modulus. Returns the number of violations.
inline std::size_t clipped_modulus_violations(const FieldPath& u, const StoppingConfig& cfg, int clip_index) {
    detail::ModulusScanner sc(u, cfg);
    std::size_t bad = 0;
    for (int a = 0; a < sc.levels() && sc.level_index(a) <= clip_index; ++a)
        for (int b = 0; b < sc.cols(); ++b)
            sc.partners(
                a, b,
                [&](int, int, double ratio, double) {
                    if (ratio >= cfg.K) ++bad;
                    return false;
                },
                [&] { return cfg.K; });
    return bad;
}

}  // namespace shelab
