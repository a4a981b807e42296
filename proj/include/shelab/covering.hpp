#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/functional/hash.hpp>
#include <json.hpp>

#include "shelab/errors.hpp"
#include "shelab/gaussian.hpp"
#include "shelab/geometry.hpp"
#include "shelab/solver.hpp"
#include "shelab/stats.hpp"

namespace shelab {

inline double gauge_f(double r) {
    if (!(r > 0 && r < 0.5)) throw DomainError("gauge_f: r must lie in (0, 1/2)");
    return r * std::pow(std::log2(std::log2(1 / r)), -1.0 / 6.0);
}

inline double gauge_zeta(double x) {
    if (!(x > 0 && x < 0.5)) throw DomainError("gauge_zeta: x must lie in (0, 1/2)");
    return std::pow(x, 6) * std::log2(std::log2(1 / x));
}

struct GaugeConfig {
    double K_tilde = 1.0;
    double sigma1 = 1.0;
    double K2 = 1.0;
    int q0 = 2;

    // Radius of a good rectangle of order l.
    double d_ell(int ell) const { return 8 * sigma1 * K_tilde * gauge_f(std::ldexp(1.0, -ell)); }
    double residual_radius(int q) const { return K2 * std::ldexp(1.0, -2 * q) * q; }
};

// ---------------------------------------------------------------------------
// r_{q,l} = 2^{-q} q^{-l}, l = 0..l_q with l_q = floor(q / log2 q), which is
// the largest l with q^l <= 2^q.

struct ScaleLadder {
    int q = 0, ell_q = 0;
    std::vector<double> r;
};

namespace detail {
// q^l <= 2^q in exact integer arithmetic (q <= 64).
inline bool power_fits(int q, int l) {
    unsigned __int128 p = 1, lim = static_cast<unsigned __int128>(1) << q;
    for (int i = 0; i < l; ++i) {
        p *= unsigned(q);
        if (p > lim) return false;
    }
    return true;
}
}  // namespace detail

inline ScaleLadder make_ladder(int q) {
    if (q < 2 || q > 64) throw DomainError("make_ladder: q must lie in [2, 64]");
    ScaleLadder L;
    L.q = q;
    while (detail::power_fits(q, L.ell_q + 1)) ++L.ell_q;
    for (int l = 0; l <= L.ell_q; ++l) L.r.push_back(std::ldexp(1.0, -q) * std::pow(double(q), -l));
    return L;
}

// r_{q,l_q} >= 2^{-2q}, i.e. q^{l_q} <= 2^q, decided exactly.
inline bool ladder_floor_holds(int q) { return detail::power_fits(q, make_ladder(q).ell_q); }

// ---------------------------------------------------------------------------
// Window search: first l whose oscillation over R_{r_{q,l}}(t0,x0) is at most
// 2 sigma1 K_tilde f(r_{q,l}).

struct WindowSearch {
    bool found = false;
    int ell = -1;
    double r = 0, osc = 0, threshold = 0;
    std::vector<double> r_by_ell, osc_by_ell;
};

template <class OscAt>
WindowSearch window_search(OscAt&& osc_at, int q, double sigma1, double K_tilde) {
    auto L = make_ladder(q);
    WindowSearch w;
    for (int l = 0; l <= L.ell_q; ++l) {
        double r = L.r[l], o = osc_at(l, r);
        w.r_by_ell.push_back(r);
        w.osc_by_ell.push_back(o);
        double thr = 2 * sigma1 * K_tilde * gauge_f(r);
        if (!w.found && o <= thr) {
            w.found = true;
            w.ell = l;
            w.r = r;
            w.osc = o;
            w.threshold = thr;
        }
    }
    return w;
}

// The grid has to put at least two points into the smallest ladder rectangle.
inline WindowSearch window_search(const FieldPath& u_tilde, double t0, double x0, int q, const GaugeConfig& cfg) {
    if (q < cfg.q0) throw DomainError("window_search: q below q0");
    auto L = make_ladder(q);
    const auto& g = u_tilde.grid();
    double rmin = L.r.back();
    ParabolicRect small({t0, x0}, rmin);
    int pts = 0;
    for (int i = u_tilde.i_begin(); i <= u_tilde.i_end() && pts < 2; ++i)
        for (int j = 0; j < g.nx && pts < 2; ++j) pts += small.contains(g.t(i), g.x(j));
    if (pts < 2) throw GridError("q too large for grid");
    return window_search([&](int, double r) { return oscillation(u_tilde, ParabolicRect({t0, x0}, r)); }, q,
                         cfg.sigma1, cfg.K_tilde);
}

// min_l osc_l / f(r_l): the event of the Gaussian ladder bound holds iff this
// is <= K_tilde.
inline double ladder_statistic(const WindowSearch& w) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < w.r_by_ell.size(); ++l) m = std::min(m, w.osc_by_ell[l] / gauge_f(w.r_by_ell[l]));
    return m;
}

// Points of R_r(t0,x0) on an m x m lattice spanning its closure (the sup over
// the open rectangle equals the sup over its closure for continuous fields).
inline std::vector<ParabolicPoint> rect_lattice(const ParabolicPoint& c, double r, int m = 9) {
    if (m < 2) throw DomainError("rect_lattice: m must be at least 2");
    std::vector<ParabolicPoint> p;
    double ht = std::pow(r, 4), hx = r * r;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            p.push_back({c.t + ht * (2.0 * a / (m - 1) - 1), c.x + hx * (2.0 * b / (m - 1) - 1)});
    return p;
}

// Exact Gaussian ladder: increments of the d-dimensional N0 relative to the
// centre, sampled jointly on the lattices of every ladder rectangle.
class LadderSampler {
public:
    LadderSampler(const ParabolicPoint& centre, int q, int d, int m = 9)
        : centre_(centre), ladder_(make_ladder(q)), d_(d), m_(m), sampler_(build(centre, ladder_, m)) {}

    const ScaleLadder& ladder() const { return ladder_; }

    // Oscillation per ladder level for draw `draw`.
    std::vector<double> oscillations(std::uint64_t seed, std::uint64_t draw) const {
        std::size_t per = std::size_t(m_) * m_, n = per * ladder_.r.size();
        std::vector<double> v(n * d_);
        for (int k = 0; k < d_; ++k) {
            Eigen::VectorXd z = sampler_.sample(seed, draw, k);
            for (std::size_t i = 0; i < n; ++i) v[i * d_ + k] = z(Eigen::Index(i));
        }
        std::vector<double> osc;
        for (std::size_t l = 0; l < ladder_.r.size(); ++l) {
            // the centre (increment 0) is a lattice point when m is odd
            osc.push_back(point_set_diameter(v.data() + l * per * d_, per, d_));
        }
        return osc;
    }

    WindowSearch search(std::uint64_t seed, std::uint64_t draw, double sigma1, double K_tilde) const {
        auto osc = oscillations(seed, draw);
        return window_search([&](int l, double) { return osc[std::size_t(l)]; }, ladder_.q, sigma1, K_tilde);
    }

private:
    static GaussianSampler build(const ParabolicPoint& c, const ScaleLadder& L, int m) {
        std::vector<ParabolicPoint> pts;
        for (double r : L.r) {
            auto p = rect_lattice(c, r, m);
            pts.insert(pts.end(), p.begin(), p.end());
        }
        if (pts.size() > 2000) throw DomainError("LadderSampler: too many points");
        return GaussianSampler(n0_increment_covariance(pts, c));
    }
    ParabolicPoint centre_;
    ScaleLadder ladder_;
    int d_, m_;
    GaussianSampler sampler_;
};

// ---------------------------------------------------------------------------
// Field values on a regular dyadic lattice t = t_lo + a 2^{-et}, x = x_lo + b 2^{-ex}.

struct PointLattice {
    double t_lo = 0, x_lo = 0;
    int et = 0, ex = 0;  // spacings 2^{-et}, 2^{-ex}
    int nt = 0, nx = 0;  // point counts
    int d = 1;
    std::vector<double> values;  // (a*nx + b)*d + k

    double ht() const { return std::ldexp(1.0, -et); }
    double hx() const { return std::ldexp(1.0, -ex); }
    double t(int a) const { return t_lo + a * ht(); }
    double x(int b) const { return x_lo + b * hx(); }
    const double* at(int a, int b) const { return values.data() + (std::size_t(a) * nx + b) * d; }
    double* at(int a, int b) { return values.data() + (std::size_t(a) * nx + b) * d; }
};

namespace detail {
inline int dyadic_exponent(double h, const char* what) {
    int e;
    double m = std::frexp(h, &e);
    if (m != 0.5) throw GridError(std::string("grid spacing is not a power of two: ") + what);
    return 1 - e;
}
}  // namespace detail

// Grid points of a FieldPath inside a closed window. Times and cell centres
// must be exact dyadic values (t0 = 0, X a multiple of dx, dyadic dt and dx).
inline PointLattice lattice_from_field(const FieldPath& f, const AxisRect& win) {
    const auto& g = f.grid();
    PointLattice L;
    L.et = detail::dyadic_exponent(g.dt, "dt");
    L.ex = detail::dyadic_exponent(g.dx, "dx");
    L.d = f.dim();
    int i0 = aligned_index(win.t_lo, g.t0, g.dt, "window time");
    int i1 = aligned_index(win.t_hi, g.t0, g.dt, "window time");
    int j0 = aligned_index(win.x_lo, g.x0 + 0.5 * g.dx, g.dx, "window space");
    int j1 = aligned_index(win.x_hi, g.x0 + 0.5 * g.dx, g.dx, "window space");
    if (i0 < f.i_begin() || i1 > f.i_end() || j0 < 0 || j1 >= g.nx) throw GridError("rect outside grid");
    L.t_lo = g.t(i0);
    L.x_lo = g.x(j0);
    L.nt = i1 - i0 + 1;
    L.nx = j1 - j0 + 1;
    L.values.resize(std::size_t(L.nt) * L.nx * L.d);
    for (int a = 0; a < L.nt; ++a)
        std::copy(f.at(i0 + a, j0), f.at(i0 + a, j0) + std::size_t(L.nx) * L.d, L.at(a, 0));
    return L;
}

// Lattice of order-(q+1) corners over a window of nq_t x nq_x order-q rectangles.
inline std::vector<ParabolicPoint> cover_lattice_points(const ParabolicPoint& anchor, int q, int nq_t, int nq_x,
                                                        int* nt = nullptr, int* nx = nullptr) {
    int at = nq_t * 16 + 1, ax = nq_x * 4 + 1;
    double ht = std::ldexp(1.0, -4 * (q + 1)), hx = std::ldexp(1.0, -2 * (q + 1));
    std::vector<ParabolicPoint> p;
    for (int a = 0; a < at; ++a)
        for (int b = 0; b < ax; ++b) p.push_back({anchor.t + a * ht, anchor.x + b * hx});
    if (nt) *nt = at;
    if (nx) *nx = ax;
    return p;
}

// ---------------------------------------------------------------------------

struct CoverRect {
    int order = 0;
    int a = 0, b = 0;  // lattice index of the lower-left corner
    double radius = 0;
    std::vector<double> centre;
    bool good = true;
    double multiplicity = 1;  // residual blocks stand for this many order-2q rectangles
};

struct CoverReport {
    int q = 0, max_order = 0;
    AxisRect window;
    double sigma1 = 0, K_tilde = 0, K2 = 0;
    std::vector<CoverRect> good, residual;  // residual holds failed blocks of order max_order
    std::vector<std::pair<std::size_t, std::vector<double>>> residual_centres;  // lattice point -> value
    double n_good = 0, n_residual = 0;      // counts; residual in order-2q rectangles
    double sum_r6 = 0, sum_zeta = 0;        // zeta summed where defined (r < 1/2)
    std::size_t zeta_undefined = 0;         // rectangles with r_A >= 1/2
    double sum_r6_R0 = 0, sum_zeta_R0 = 0;  // extrapolated to lambda_2(R0) = 1
    double max_radius = 0;
    double good_area_fraction = 0;
    bool omega_q1_proxy = false;  // good area >= area (1 - exp(-sqrt(q)/4))
    double Nq_lhs = 0, Nq_rhs = 0;
    bool degraded = false;  // stops triggered on the source path
    bool per_radius_ok = false;  // zeta(r) >= r^6 log2 q for every r_A
    bool sum_inequality_ok = false;
    bool all_radii_le_quarter() const { return max_radius <= 0.25; }
};

namespace detail {

inline double rect_osc(const PointLattice& L, int a0, int b0, int na, int nb, std::vector<double>& buf) {
    buf.clear();
    for (int a = a0; a <= std::min(a0 + na, L.nt - 1); ++a)
        for (int b = b0; b <= std::min(b0 + nb, L.nx - 1); ++b) buf.insert(buf.end(), L.at(a, b), L.at(a, b) + L.d);
    return point_set_diameter(buf.data(), buf.size() / std::size_t(L.d), L.d);
}

}  // namespace detail

// Largest good rectangles first: each order-q rectangle of the window is kept
// if good, otherwise split into its 64 children, down to the finest order the
// lattice resolves; what is still bad there is tiled by order-2q rectangles.
inline CoverReport build_cover(const PointLattice& L, const AxisRect& window, int q, const GaugeConfig& cfg,
                               bool stops_triggered = false) {
    if (q < cfg.q0) throw DomainError("build_cover: q below q0");
    int max_order = std::min({2 * q, L.et / 4, L.ex / 2});
    if (max_order < q) throw GridError("build_cover: lattice does not resolve order-q rectangles");
    if (L.et > 8 * q || L.ex > 4 * q) throw GridError("build_cover: lattice finer than order-2q corners");
    double Hq_t = std::ldexp(1.0, -4 * q), Hq_x = std::ldexp(1.0, -2 * q);
    int nqt = aligned_index(window.t_hi - window.t_lo, 0, Hq_t, "window height");
    int nqx = aligned_index(window.x_hi - window.x_lo, 0, Hq_x, "window width");
    aligned_index(window.t_lo, 0, Hq_t, "window corner");
    aligned_index(window.x_lo, 0, Hq_x, "window corner");
    int a_off = aligned_index(window.t_lo, L.t_lo, L.ht(), "window vs lattice");
    int b_off = aligned_index(window.x_lo, L.x_lo, L.hx(), "window vs lattice");
    auto steps_t = [&](int ell) { return 1 << (L.et - 4 * ell); };
    auto steps_x = [&](int ell) { return 1 << (L.ex - 2 * ell); };
    if (a_off < 0 || b_off < 0 || a_off + nqt * steps_t(q) >= L.nt || b_off + nqx * steps_x(q) >= L.nx)
        throw GridError("build_cover: window not covered by the lattice");

    CoverReport R;
    R.q = q, R.max_order = max_order, R.window = window;
    R.sigma1 = cfg.sigma1, R.K_tilde = cfg.K_tilde, R.K2 = cfg.K2;
    R.degraded = stops_triggered;
    double rres = cfg.residual_radius(q);
    std::vector<double> buf;
    double good_area = 0;

    std::function<void(int, int, int)> visit = [&](int ell, int a, int b) {
        double dl = cfg.d_ell(ell);
        double o = detail::rect_osc(L, a, b, steps_t(ell), steps_x(ell), buf);
        if (o <= dl) {
            R.good.push_back({ell, a, b, dl, std::vector<double>(L.at(a, b), L.at(a, b) + L.d), true, 1});
            good_area += std::ldexp(1.0, -6 * ell);
            return;
        }
        if (ell < max_order) {
            for (int i = 0; i < 16; ++i)
                for (int j = 0; j < 4; ++j) visit(ell + 1, a + i * steps_t(ell + 1), b + j * steps_x(ell + 1));
            return;
        }
        double mult = std::ldexp(1.0, 6 * (2 * q - ell));
        R.residual.push_back({ell, a, b, rres, {}, false, mult});
        // every lattice point of the half-open block is the lower-left corner of one order-2q tile
        for (int i = 0; i < steps_t(ell); ++i)
            for (int j = 0; j < steps_x(ell); ++j) {
                std::size_t idx = std::size_t(a + i) * L.nx + (b + j);
                R.residual_centres.push_back({idx, std::vector<double>(L.at(a + i, b + j), L.at(a + i, b + j) + L.d)});
            }
    };
    for (int i = 0; i < nqt; ++i)
        for (int j = 0; j < nqx; ++j) visit(q, a_off + i * steps_t(q), b_off + j * steps_x(q));

    double area = window.area();
    double log2q = std::log2(double(q));
    bool per_radius = true;
    auto add = [&](double r, double mult) {
        R.sum_r6 += mult * std::pow(r, 6);
        R.max_radius = std::max(R.max_radius, r);
        if (r < 0.5) {
            double z = gauge_zeta(r);
            R.sum_zeta += mult * z;
            if (z < std::pow(r, 6) * log2q) per_radius = false;
        } else {
            R.zeta_undefined += std::size_t(mult);
            per_radius = false;
        }
    };
    for (auto& g : R.good) add(g.radius, 1);
    for (auto& s : R.residual) add(s.radius, s.multiplicity);
    R.n_good = double(R.good.size());
    for (auto& s : R.residual) R.n_residual += s.multiplicity;
    R.sum_r6_R0 = R.sum_r6 * unit_window.area() / area;
    R.sum_zeta_R0 = R.sum_zeta * unit_window.area() / area;
    R.good_area_fraction = good_area / area;
    R.omega_q1_proxy = R.good_area_fraction >= 1 - std::exp(-std::sqrt(double(q)) / 4);
    R.Nq_lhs = R.n_residual * std::ldexp(1.0, -12 * q);
    R.Nq_rhs = area * std::exp(-std::sqrt(double(q)) / 4);
    R.per_radius_ok = per_radius;
    R.sum_inequality_ok = R.zeta_undefined == 0 && R.sum_r6 <= R.sum_zeta / log2q;
    return R;
}

struct CoverViolation {
    int a = 0, b = 0;
    double distance = 0, radius = 0;
};

// Every lattice point of the half-open window must lie in the ball of a cover
// rectangle containing it (closed rectangles for good ones, the tile it
// anchors for residual blocks).
inline std::vector<CoverViolation> range_cover_check(const PointLattice& L, const CoverReport& R) {
    auto dist = [&](const double* p, const std::vector<double>& c) {
        double s = 0;
        for (int k = 0; k < L.d; ++k) s += (p[k] - c[k]) * (p[k] - c[k]);
        return std::sqrt(s);
    };
    int a_lo = aligned_index(R.window.t_lo, L.t_lo, L.ht(), "window"), a_hi = aligned_index(R.window.t_hi, L.t_lo, L.ht(), "window");
    int b_lo = aligned_index(R.window.x_lo, L.x_lo, L.hx(), "window"), b_hi = aligned_index(R.window.x_hi, L.x_lo, L.hx(), "window");
    // best (smallest) slack per point: -1 means not yet covered
    std::vector<double> best_d(std::size_t(L.nt) * L.nx, -1), best_r(best_d.size(), 0);
    auto offer = [&](std::size_t idx, double dd, double r) {
        if (best_d[idx] < 0 || dd - r < best_d[idx] - best_r[idx]) best_d[idx] = dd, best_r[idx] = r;
    };
    for (auto& g : R.good) {
        int na = 1 << (L.et - 4 * g.order), nb = 1 << (L.ex - 2 * g.order);
        for (int a = g.a; a <= std::min(g.a + na, L.nt - 1); ++a)
            for (int b = g.b; b <= std::min(g.b + nb, L.nx - 1); ++b)
                offer(std::size_t(a) * L.nx + b, dist(L.at(a, b), g.centre), g.radius);
    }
    double rres = R.residual.empty() ? 0 : R.residual.front().radius;
    for (auto& [idx, c] : R.residual_centres) offer(idx, dist(L.values.data() + idx * L.d, c), rres);
    std::vector<CoverViolation> out;
    for (int a = a_lo; a < a_hi; ++a)
        for (int b = b_lo; b < b_hi; ++b) {
            std::size_t idx = std::size_t(a) * L.nx + b;
            if (best_d[idx] < 0 || best_d[idx] > best_r[idx]) out.push_back({a, b, best_d[idx], best_r[idx]});
        }
    return out;
}

inline nlohmann::json to_json(const CoverReport& R) {
    nlohmann::json j;
    j["q"] = R.q;
    j["max_order"] = R.max_order;
    j["window"] = {R.window.t_lo, R.window.t_hi, R.window.x_lo, R.window.x_hi};
    j["sigma1"] = R.sigma1;
    j["K_tilde"] = R.K_tilde;
    j["K2"] = R.K2;
    auto rects = nlohmann::json::array();
    for (auto* fam : {&R.good, &R.residual})
        for (auto& c : *fam)
            rects.push_back({{"order", c.order}, {"a", c.a}, {"b", c.b}, {"radius", c.radius}, {"good", c.good},
                             {"multiplicity", c.multiplicity}});
    j["rects"] = rects;
    j["n_good"] = R.n_good;
    j["n_residual"] = R.n_residual;
    j["sum_r6"] = R.sum_r6;
    j["sum_zeta"] = R.sum_zeta;
    j["zeta_undefined"] = R.zeta_undefined;
    j["sum_r6_R0"] = R.sum_r6_R0;
    j["sum_zeta_R0"] = R.sum_zeta_R0;
    j["max_radius"] = R.max_radius;
    j["good_area_fraction"] = R.good_area_fraction;
    j["omega_q1_proxy"] = R.omega_q1_proxy;
    j["Nq_lhs"] = R.Nq_lhs;
    j["Nq_rhs"] = R.Nq_rhs;
    j["degraded"] = R.degraded;
    j["per_radius_ok"] = R.per_radius_ok;
    j["sum_inequality_ok"] = R.sum_inequality_ok;
    return j;
}

// ---------------------------------------------------------------------------
// Box counting in R^d.

struct BoxDimension {
    double slope = 0, slope_se = 0, r2 = 0;
    bool degenerate = false;
    std::vector<double> eps;
    std::vector<std::size_t> boxes;
};

inline BoxDimension box_dimension(const std::vector<double>& pts, int d, const std::vector<double>& radii) {
    if (d < 1 || pts.size() % std::size_t(d)) throw DomainError("box_dimension: bad point array");
    std::size_t n = pts.size() / std::size_t(d);
    if (n < 1000) throw DomainError("box_dimension: need at least 1000 points");
    if (radii.size() < 4) throw DomainError("box_dimension: need at least 4 radii");
    auto [rlo, rhi] = std::minmax_element(radii.begin(), radii.end());
    if (!(*rlo > 0) || *rhi / *rlo < 4) throw DomainError("box_dimension: radii must span two octaves");
    BoxDimension B;
    bool all_equal = true;
    for (std::size_t i = 1; i < n && all_equal; ++i)
        for (int k = 0; k < d; ++k)
            if (pts[i * d + k] != pts[k]) {
                all_equal = false;
                break;
            }
    if (all_equal) {
        B.degenerate = true;
        return B;
    }
    std::vector<double> x, y;
    std::vector<long long> key(static_cast<std::size_t>(d));
    for (double e : radii) {
        std::unordered_set<std::vector<long long>, boost::hash<std::vector<long long>>> boxes;
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < d; ++k) key[std::size_t(k)] = (long long)std::floor(pts[i * d + k] / e);
            boxes.insert(key);
        }
        B.eps.push_back(e);
        B.boxes.push_back(boxes.size());
        x.push_back(std::log(1 / e));
        y.push_back(std::log(double(boxes.size())));
    }
    auto f = least_squares(x, y);
    B.slope = f.slope;
    B.slope_se = f.slope_se;
    B.r2 = f.r2;
    return B;
}

}  // namespace shelab
