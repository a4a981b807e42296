#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "shelab/errors.hpp"

namespace shelab {

struct ParabolicPoint {
    double t = 0.0;
    double x = 0.0;
    friend bool operator==(const ParabolicPoint&, const ParabolicPoint&) = default;
};

inline double delta_metric(double dt, double dx) {
    return std::max(std::pow(std::abs(dt), 0.25), std::sqrt(std::abs(dx)));
}

inline double delta_metric(const ParabolicPoint& a, const ParabolicPoint& b) {
    return delta_metric(a.t - b.t, a.x - b.x);
}

// Closed rectangle [t_lo,t_hi] x [x_lo,x_hi].
struct AxisRect {
    double t_lo = 0, t_hi = 0, x_lo = 0, x_hi = 0;

    bool contains(double t, double x) const {
        return t >= t_lo && t <= t_hi && x >= x_lo && x <= x_hi;
    }
    bool contains(const ParabolicPoint& p) const { return contains(p.t, p.x); }
    double area() const { return (t_hi - t_lo) * (x_hi - x_lo); }
    AxisRect bounds() const { return *this; }
};

inline AxisRect make_rect(double t_lo, double t_hi, double x_lo, double x_hi) {
    if (!(t_lo <= t_hi && x_lo <= x_hi)) throw DomainError("AxisRect: inverted bounds");
    return {t_lo, t_hi, x_lo, x_hi};
}

inline const AxisRect unit_window{1.0, 2.0, 0.0, 1.0};  // R0

// Open rectangle R_rho(t0,x0) = {|t-t0| < rho^4, |x-x0| < rho^2}.
struct ParabolicRect {
    ParabolicPoint center;
    double rho = 0.5;

    ParabolicRect() = default;
    ParabolicRect(ParabolicPoint c, double r) : center(c), rho(r) {
        if (!(r > 0.0 && r <= 0.5)) throw DomainError("ParabolicRect: rho must lie in (0, 1/2]");
    }
    double t_half() const { return rho * rho * rho * rho; }
    double x_half() const { return rho * rho; }
    bool contains(double t, double x) const {
        return std::abs(t - center.t) < t_half() && std::abs(x - center.x) < x_half();
    }
    bool contains(const ParabolicPoint& p) const { return contains(p.t, p.x); }
    AxisRect bounds() const {
        return {center.t - t_half(), center.t + t_half(), center.x - x_half(), center.x + x_half()};
    }
};

// floor(log2(1/Delta)) without trusting log2 at exact powers of two.
inline int n0_level(const ParabolicPoint& a, const ParabolicPoint& b) {
    double d = delta_metric(a, b);
    if (d == 0.0) throw DomainError("n0_level: zero distance");
    int n = int(std::floor(-std::log2(d)));
    while (std::ldexp(1.0, -(n + 1)) >= d) ++n;
    while (std::ldexp(1.0, -n) < d) --n;
    return n;
}

// Order-l anisotropic dyadic rectangle containing p; right/top-open tie-break.
inline AxisRect dyadic_rect(int order, const ParabolicPoint& p) {
    if (order < 0) throw DomainError("dyadic_rect: negative order");
    double ht = std::ldexp(1.0, -4 * order), hx = std::ldexp(1.0, -2 * order);
    double mt = std::floor(p.t / ht), mx = std::floor(p.x / hx);
    return {mt * ht, (mt + 1) * ht, mx * hx, (mx + 1) * hx};
}

// Number of grid values k*h + o lying in [lo, hi].
inline std::int64_t grid_count(double lo, double hi, double h, double o) {
    double a = std::ceil((lo - o) / h), b = std::floor((hi - o) / h);
    return b >= a ? std::int64_t(b - a) + 1 : 0;
}

// Nearest-neighbour pairs of (origin + G_n) inside rect.
inline std::int64_t neighbor_pair_count(const AxisRect& r, int n, ParabolicPoint origin = {}) {
    double ht = std::ldexp(1.0, -4 * n), hx = std::ldexp(1.0, -2 * n);
    std::int64_t nt = grid_count(r.t_lo, r.t_hi, ht, origin.t);
    std::int64_t nx = grid_count(r.x_lo, r.x_hi, hx, origin.x);
    if (nt == 0 || nx == 0) return 0;
    return (nt - 1) * nx + nt * (nx - 1);
}

// Smallest level at which (origin + G_n) meets rect in at least two points.
inline int n_rect(const AxisRect& r, ParabolicPoint origin = {}, int max_level = 40) {
    for (int n = 0; n <= max_level; ++n) {
        double ht = std::ldexp(1.0, -4 * n), hx = std::ldexp(1.0, -2 * n);
        if (grid_count(r.t_lo, r.t_hi, ht, origin.t) * grid_count(r.x_lo, r.x_hi, hx, origin.x) >= 2)
            return n;
    }
    throw DomainError("n_rect: rectangle is degenerate below max level");
}

// ---------------------------------------------------------------------------
// Exact dyadic lattice. A point of origin + G_M is stored as integers (kt, kx)
// with t = origin.t + kt 2^{-4M}, x = origin.x + kx 2^{-2M}. M up to 30 fits:
// kt needs about 4M+2 bits, so it is a 128-bit integer.

using Int128 = __int128;

struct LatticePoint {
    Int128 kt = 0;
    std::int64_t kx = 0;
    friend bool operator==(const LatticePoint&, const LatticePoint&) = default;
};

inline Int128 floor_div(Int128 a, Int128 b) {
    Int128 q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

inline int bit_width128(unsigned __int128 v) {
    auto hi = std::uint64_t(v >> 64);
    return hi ? 64 + std::bit_width(hi) : std::bit_width(std::uint64_t(v));
}

class DyadicLattice {
public:
    explicit DyadicLattice(int max_level = 20, ParabolicPoint origin = {})
        : M_(max_level), origin_(origin) {
        if (max_level < 0 || max_level > 30) throw DomainError("DyadicLattice: max level must be in [0,30]");
    }
    int max_level() const { return M_; }
    ParabolicPoint origin() const { return origin_; }

    Int128 unit_t(int n) const { return Int128(1) << (4 * (M_ - n)); }
    std::int64_t unit_x(int n) const { return std::int64_t(1) << (2 * (M_ - n)); }

    LatticePoint snap(const ParabolicPoint& p) const {
        double vt = std::ldexp(p.t - origin_.t, 4 * M_);
        double vx = std::ldexp(p.x - origin_.x, 2 * M_);
        double rt = std::nearbyint(vt), rx = std::nearbyint(vx);
        if (std::abs(vt - rt) > 1e-9 || std::abs(vx - rx) > 1e-9)
            throw GridError("not a grid point");
        return {Int128(rt), std::int64_t(rx)};
    }
    ParabolicPoint point(const LatticePoint& q) const {
        return {origin_.t + std::ldexp(double(q.kt), -4 * M_), origin_.x + std::ldexp(double(q.kx), -2 * M_)};
    }
    LatticePoint make(int level, Int128 mt, std::int64_t mx) const {
        return {mt * unit_t(level), mx * unit_x(level)};
    }

    // Smallest n with q in G_n.
    int level_of(const LatticePoint& q) const {
        int n = 0;
        while (n < M_ && (q.kt % unit_t(n) != 0 || q.kx % unit_x(n) != 0)) ++n;
        return n;
    }

    // floor(log2(1/Delta(a-b))), exact.
    int n0(const LatticePoint& a, const LatticePoint& b) const {
        auto dt = static_cast<unsigned __int128>(a.kt > b.kt ? a.kt - b.kt : b.kt - a.kt);
        auto dx = static_cast<std::uint64_t>(a.kx > b.kx ? a.kx - b.kx : b.kx - a.kx);
        if (dt == 0 && dx == 0) throw DomainError("n0_level: zero distance");
        // largest n with dt <= 2^{4(M-n)} and dx <= 2^{2(M-n)}
        int nt = dt ? M_ - (bit_width128(dt - 1) + 3) / 4 : 1 << 20;
        int nx = dx ? M_ - (std::bit_width(dx - 1) + 1) / 2 : 1 << 20;
        return std::min(nt, nx);
    }

    // Delta^4 in units of 2^{-4M}; exact comparison key.
    unsigned __int128 delta4(const LatticePoint& a, const LatticePoint& b) const {
        auto dt = static_cast<unsigned __int128>(a.kt > b.kt ? a.kt - b.kt : b.kt - a.kt);
        auto dx = static_cast<unsigned __int128>(a.kx > b.kx ? a.kx - b.kx : b.kx - a.kx);
        return std::max(dt, dx * dx);
    }

private:
    int M_;
    ParabolicPoint origin_;
};

// Closed rectangle in lattice units (inward rounding of an AxisRect).
struct LatticeRect {
    Int128 t_lo, t_hi;
    std::int64_t x_lo, x_hi;
    bool contains(const LatticePoint& q) const {
        return q.kt >= t_lo && q.kt <= t_hi && q.kx >= x_lo && q.kx <= x_hi;
    }
};

inline LatticeRect to_lattice(const DyadicLattice& L, const AxisRect& r) {
    auto o = L.origin();
    int M = L.max_level();
    return {Int128(std::ceil(std::ldexp(r.t_lo - o.t, 4 * M))), Int128(std::floor(std::ldexp(r.t_hi - o.t, 4 * M))),
            std::int64_t(std::ceil(std::ldexp(r.x_lo - o.x, 2 * M))),
            std::int64_t(std::floor(std::ldexp(r.x_hi - o.x, 2 * M)))};
}

struct ChainPath {
    std::vector<LatticePoint> vertices;
    std::vector<int> step_levels;  // step s joins vertices[s] and vertices[s+1]
    int n0 = 0;
    std::map<int, int> tally;  // level -> number of steps of that type

    std::size_t size() const { return step_levels.size(); }
    int max_steps_per_level() const {
        int m = 0;
        for (auto& [n, c] : tally) m = std::max(m, c);
        return m;
    }
};

namespace detail {

inline void walk(const DyadicLattice& L, std::vector<LatticePoint>& verts, std::vector<int>& levels,
                 LatticePoint to, int n) {
    LatticePoint cur = verts.back();
    Int128 ut = L.unit_t(n);
    std::int64_t ux = L.unit_x(n);
    while (cur.kt != to.kt) {
        cur.kt += cur.kt < to.kt ? ut : -ut;
        verts.push_back(cur);
        levels.push_back(n);
    }
    while (cur.kx != to.kx) {
        cur.kx += cur.kx < to.kx ? ux : -ux;
        verts.push_back(cur);
        levels.push_back(n);
    }
}

// Descent from the shared corner c (a corner of p's level-n0 cell) down to p.
inline void descend(const DyadicLattice& L, const LatticeRect& R, LatticePoint c, LatticePoint p, int n0,
                    std::vector<LatticePoint>& verts, std::vector<int>& levels) {
    verts.assign(1, c);
    levels.clear();
    if (c == p) return;
    if (L.level_of(p) <= n0) {
        walk(L, verts, levels, p, n0);
        return;
    }
    for (int n = n0 + 1; n <= L.max_level(); ++n) {
        Int128 ut = L.unit_t(n);
        std::int64_t ux = L.unit_x(n);
        Int128 ct = floor_div(p.kt, ut) * ut;
        std::int64_t cx = std::int64_t(floor_div(p.kx, ux)) * ux;
        LatticePoint best{};
        bool have = false;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                LatticePoint q{ct + a * ut, cx + b * ux};
                if (!R.contains(q)) continue;
                if (!have) {
                    best = q;
                    have = true;
                    continue;
                }
                auto dq = L.delta4(q, p), db = L.delta4(best, p);
                if (dq < db || (dq == db && (q.kt < best.kt || (q.kt == best.kt && q.kx < best.kx))))
                    best = q;
            }
        if (!have) throw GridError("chain_path: no cell corner inside rect");
        walk(L, verts, levels, best, n);
        if (best == p) return;
    }
    throw GridError("chain_path: descent did not reach the point");
}

}  // namespace detail

// Constructive chaining path between two points of (origin + G) inside rect.
// The rect's lower-left corner must sit on the level-0 grid, so that the
// lower-left corner of every cell containing a rect point stays in the rect.
inline ChainPath chain_path(const DyadicLattice& L, LatticePoint a, LatticePoint b, const AxisRect& rect) {
    LatticeRect R = to_lattice(L, rect);
    if (R.t_lo % L.unit_t(0) != 0 || R.x_lo % L.unit_x(0) != 0)
        throw DomainError("chain_path: rect lower corner must lie on the level-0 grid");
    if (!R.contains(a) || !R.contains(b)) throw DomainError("chain_path: endpoint outside rect");
    ChainPath path;
    if (a == b) {
        path.vertices = {a};
        return path;
    }
    int n0 = L.n0(a, b);
    path.n0 = n0;
    Int128 ut = L.unit_t(n0);
    std::int64_t ux = L.unit_x(n0);
    LatticePoint q{std::max(floor_div(a.kt, ut), floor_div(b.kt, ut)) * ut,
                   std::int64_t(std::max(floor_div(a.kx, ux), floor_div(b.kx, ux))) * ux};

    std::vector<LatticePoint> va, vb;
    std::vector<int> la, lb;
    detail::descend(L, R, q, a, n0, va, la);
    detail::descend(L, R, q, b, n0, vb, lb);

    path.vertices.assign(va.rbegin(), va.rend());
    path.step_levels.assign(la.rbegin(), la.rend());
    path.vertices.insert(path.vertices.end(), vb.begin() + 1, vb.end());
    path.step_levels.insert(path.step_levels.end(), lb.begin(), lb.end());
    for (int n : path.step_levels) ++path.tally[n];
    return path;
}

inline ChainPath chain_path(const ParabolicPoint& p1, const ParabolicPoint& p2, const ParabolicPoint& origin,
                            const AxisRect& rect, int max_level = 20) {
    DyadicLattice L(max_level, origin);
    return chain_path(L, L.snap(p1), L.snap(p2), rect);
}

// Everything that can go wrong with a chain; empty means valid.
inline std::vector<std::string> validate_chain(const DyadicLattice& L, const ChainPath& path, LatticePoint a,
                                               LatticePoint b, const AxisRect& rect, int per_level_cap = 40) {
    std::vector<std::string> bad;
    LatticeRect R = to_lattice(L, rect);
    if (path.vertices.empty() || !(path.vertices.front() == a) || !(path.vertices.back() == b))
        bad.push_back("endpoints");
    if (path.vertices.size() != path.step_levels.size() + 1) bad.push_back("vertex/step count");
    for (auto& v : path.vertices)
        if (!R.contains(v)) {
            bad.push_back("vertex outside rect");
            break;
        }
    Int128 sum_t = 0;
    std::int64_t sum_x = 0;
    std::map<int, int> tally;
    for (std::size_t s = 0; s + 1 < path.vertices.size() && s < path.step_levels.size(); ++s) {
        int n = path.step_levels[s];
        auto& u = path.vertices[s];
        auto& v = path.vertices[s + 1];
        Int128 dt = v.kt - u.kt;
        std::int64_t dx = v.kx - u.kx;
        bool t_step = (dt == L.unit_t(n) || dt == -L.unit_t(n)) && dx == 0;
        bool x_step = (dx == L.unit_x(n) || dx == -L.unit_x(n)) && dt == 0;
        bool on_grid = u.kt % L.unit_t(n) == 0 && u.kx % L.unit_x(n) == 0;
        if (!(t_step || x_step) || !on_grid) bad.push_back("step " + std::to_string(s) + " not a neighbour pair");
        if (a != b && n < L.n0(a, b)) bad.push_back("step below n0");
        sum_t += dt;
        sum_x += dx;
        ++tally[n];
    }
    if (sum_t != b.kt - a.kt || sum_x != b.kx - a.kx) bad.push_back("telescoping sum");
    for (auto& [n, c] : tally)
        if (c > per_level_cap) bad.push_back("level " + std::to_string(n) + " has " + std::to_string(c) + " steps");
    if (tally != path.tally) bad.push_back("tally mismatch");
    return bad;
}

// ---------------------------------------------------------------------------
// Diameter of a point cloud in R^d (points stored contiguously). Exact; the
// radius sort lets most pairs be skipped because |p-q| <= r_p + r_q.
inline double point_set_diameter(const double* pts, std::size_t n, int d) {
    if (n < 2) return 0.0;
    if (d == 1) {
        auto [lo, hi] = std::minmax_element(pts, pts + n);
        return *hi - *lo;
    }
    std::vector<double> c(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) c[k] += pts[i * d + k];
    for (auto& v : c) v /= double(n);
    std::vector<std::pair<double, std::size_t>> rad(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (int k = 0; k < d; ++k) s += (pts[i * d + k] - c[k]) * (pts[i * d + k] - c[k]);
        rad[i] = {std::sqrt(s), i};
    }
    std::sort(rad.begin(), rad.end(), [](auto& a, auto& b) { return a.first > b.first; });
    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0;
        for (int k = 0; k < d; ++k) {
            double e = pts[i * d + k] - pts[j * d + k];
            s += e * e;
        }
        return std::sqrt(s);
    };
    double best = 0;
    for (std::size_t j = 1; j < n; ++j) best = std::max(best, dist(rad[0].second, rad[j].second));
    for (std::size_t i = 1; i < n; ++i) {
        if (rad[i].first + rad[i].first <= best) break;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rad[i].first + rad[j].first <= best) break;
            best = std::max(best, dist(rad[i].second, rad[j].second));
        }
    }
    return best;
}

}  // namespace shelab
