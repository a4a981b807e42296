#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "shelab/errors.hpp"
#include "shelab/geometry.hpp"
#include "shelab/heat_kernel.hpp"
#include "shelab/noise.hpp"
#include "shelab/sigma.hpp"

namespace shelab {

// Values of an R^d-valued field at time levels i_begin..i_end and all cell
// centres of a grid.
class FieldPath {
public:
    FieldPath() = default;
    FieldPath(const SpaceTimeGrid& g, int d, int i_begin, int i_end, std::string label)
        : grid_(g), d_(d), i_begin_(i_begin), i_end_(i_end), label_(std::move(label)),
          v_(std::size_t(i_end - i_begin + 1) * std::size_t(g.nx) * std::size_t(d), 0.0) {}

    const SpaceTimeGrid& grid() const { return grid_; }
    int dim() const { return d_; }
    int i_begin() const { return i_begin_; }
    int i_end() const { return i_end_; }
    const std::string& label() const { return label_; }
    void set_label(std::string s) { label_ = std::move(s); }
    bool has_time(int i) const { return i >= i_begin_ && i <= i_end_; }

    std::size_t offset(int i, int j) const {
        return (std::size_t(i - i_begin_) * std::size_t(grid_.nx) + std::size_t(j)) * std::size_t(d_);
    }
    double* at(int i, int j) { return v_.data() + offset(i, j); }
    const double* at(int i, int j) const { return v_.data() + offset(i, j); }
    double* slice(int i) { return at(i, 0); }
    const double* slice(int i) const { return at(i, 0); }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& mutable_values() { return v_; }

    // Noise provenance, checked by consumers that combine paths.
    std::uint64_t seed = 0, stream = 0;
    bool has_noise = false;

    double max_abs() const {
        double m = 0;
        for (std::size_t p = 0; p < v_.size(); p += std::size_t(d_)) {
            double s = 0;
            for (int k = 0; k < d_; ++k) s += v_[p + std::size_t(k)] * v_[p + std::size_t(k)];
            m = std::max(m, std::sqrt(s));
        }
        return m;
    }

private:
    SpaceTimeGrid grid_;
    int d_ = 1, i_begin_ = 0, i_end_ = 0;
    std::string label_;
    std::vector<double> v_;
};

enum class BoundaryKind { pinned, periodic, zero };

inline const char* to_string(BoundaryKind b) {
    switch (b) {
        case BoundaryKind::pinned: return "pinned";
        case BoundaryKind::periodic: return "periodic";
        case BoundaryKind::zero: return "zero";
    }
    return "?";
}

struct SolverOptions {
    BoundaryKind boundary = BoundaryKind::pinned;
};

// Ghost values just outside the domain for the pinned rule: the exact heat
// evolution of u0 evaluated at x_{-1} and x_{nx}. Layout [i][side][k].
inline std::vector<double> pinned_ghosts(const SpaceTimeGrid& g, const InitialCondition& ic, int i_begin, int i_end) {
    int d = ic.dim();
    std::vector<double> out(std::size_t(i_end - i_begin + 1) * 2 * std::size_t(d));
    for (int i = i_begin; i <= i_end; ++i) {
        double* p = out.data() + std::size_t(i - i_begin) * 2 * std::size_t(d);
        ic.heat_evolution(g.t(i), g.x(-1), p);
        ic.heat_evolution(g.t(i), g.x(g.nx), p + d);
    }
    return out;
}

namespace detail {

// next = cur + r (cur[j+1] - 2 cur[j] + cur[j-1]) with the given ghost values.
inline void heat_step(const double* cur, double* next, int nx, int d, double r, const double* g_lo,
                      const double* g_hi) {
    for (int j = 0; j < nx; ++j) {
        const double* c = cur + std::size_t(j) * d;
        const double* lo = j > 0 ? c - d : g_lo;
        const double* hi = j + 1 < nx ? c + d : g_hi;
        double* n = next + std::size_t(j) * d;
        for (int k = 0; k < d; ++k) n[k] = c[k] + r * (hi[k] - 2.0 * c[k] + lo[k]);
    }
}

inline void check_finite(const double* v, std::size_t n) {
    for (std::size_t p = 0; p < n; ++p)
        if (!std::isfinite(v[p])) throw NumericalError("blow-up");
}

}  // namespace detail

// Generic explicit march from `start` (values at time level i_begin) to
// i_end. source(i, cur, next) adds the stochastic increment of time cell i,
// having read only cur and noise row i; ghosts(i) returns a pointer to the
// 2*d ghost values at time level i (or nullptr for zero ghosts).
template <class Source, class Ghosts>
FieldPath march(const SpaceTimeGrid& g, int d, int i_begin, int i_end, const double* start, BoundaryKind bc,
                Ghosts&& ghosts, Source&& source, std::string label) {
    if (!g.stable()) throw NumericalError("stability violated: dt > dx^2/2");
    if (i_begin < 0 || i_end > g.nt || i_begin > i_end) throw GridError("march: time range outside grid");
    FieldPath out(g, d, i_begin, i_end, std::move(label));
    std::copy(start, start + std::size_t(g.nx) * d, out.slice(i_begin));
    std::vector<double> zeros(2 * std::size_t(d), 0.0);
    double r = g.ratio();
    for (int i = i_begin; i < i_end; ++i) {
        const double* cur = out.slice(i);
        double* next = out.slice(i + 1);
        const double *lo, *hi;
        if (bc == BoundaryKind::periodic) {
            lo = cur + std::size_t(g.nx - 1) * d;
            hi = cur;
        } else if (bc == BoundaryKind::zero) {
            lo = zeros.data();
            hi = zeros.data() + d;
        } else {
            const double* gp = ghosts(i);
            lo = gp;
            hi = gp + d;
        }
        detail::heat_step(cur, next, g.nx, d, r, lo, hi);
        source(i, cur, next);
        detail::check_finite(next, std::size_t(g.nx) * d);
    }
    return out;
}

inline std::vector<double> sample_initial(const SpaceTimeGrid& g, const InitialCondition& ic) {
    std::vector<double> v(std::size_t(g.nx) * ic.dim());
    for (int j = 0; j < g.nx; ++j) ic.evaluate(g.x(j), v.data() + std::size_t(j) * ic.dim());
    return v;
}

namespace detail {
inline void check_dims(const SigmaFunction& s, const InitialCondition& ic, const NoiseRealization& n) {
    if (s.dim() != ic.dim() || s.dim() != n.dim()) throw ConfigError("dimension mismatch between sigma, u0, noise");
}
}  // namespace detail

// Explicit scheme for du = u_xx dt + sigma(u) W(dx,dt), sigma at the left
// endpoint of each time cell.
inline FieldPath solve_fd(const SigmaFunction& sigma, const InitialCondition& ic, const NoiseRealization& noise,
                          SolverOptions opt = {}) {
    detail::check_dims(sigma, ic, noise);
    const auto& g = noise.grid();
    int d = ic.dim();
    auto u0 = sample_initial(g, ic);
    std::vector<double> ghosts;
    if (opt.boundary == BoundaryKind::pinned) ghosts = pinned_ghosts(g, ic, 0, g.nt);
    std::vector<double> w(d);
    double inv_dx = 1.0 / g.dx;
    auto source = [&](int i, const double* cur, double* next) {
        const double* row = noise.row(i);
        for (int j = 0; j < g.nx; ++j) {
            const double* dw = row + std::size_t(j) * d;
            for (int k = 0; k < d; ++k) w[k] = dw[k] * inv_dx;
            sigma.apply_add(cur + std::size_t(j) * d, w.data(), next + std::size_t(j) * d);
        }
    };
    auto gh = [&](int i) { return ghosts.data() + std::size_t(i) * 2 * d; };
    FieldPath p = march(g, d, 0, g.nt, u0.data(), opt.boundary, gh, source, "u");
    p.seed = noise.seed();
    p.stream = noise.stream();
    p.has_noise = true;
    return p;
}

// Same scheme with sigma evaluated on the clipped path u(min(i, tau_index)).
inline FieldPath solve_modified(const SigmaFunction& sigma, const InitialCondition& ic,
                                const NoiseRealization& noise, const FieldPath& u, int tau_index,
                                SolverOptions opt = {}) {
    detail::check_dims(sigma, ic, noise);
    const auto& g = noise.grid();
    if (!u.grid().same_as(g) || u.i_begin() != 0) throw GridError("solve_modified: u path on a different grid");
    if (u.has_noise && (u.seed != noise.seed() || u.stream != noise.stream()))
        throw GridError("solve_modified: u path built from a different noise realization");
    int d = ic.dim();
    auto u0 = sample_initial(g, ic);
    std::vector<double> ghosts;
    if (opt.boundary == BoundaryKind::pinned) ghosts = pinned_ghosts(g, ic, 0, g.nt);
    std::vector<double> w(d);
    double inv_dx = 1.0 / g.dx;
    auto source = [&](int i, const double*, double* next) {
        int ic_ = std::min(i, tau_index);
        if (!u.has_time(ic_)) throw GridError("solve_modified: u path too short");
        const double* row = noise.row(i);
        const double* us = u.slice(ic_);
        for (int j = 0; j < g.nx; ++j) {
            const double* dw = row + std::size_t(j) * d;
            for (int k = 0; k < d; ++k) w[k] = dw[k] * inv_dx;
            sigma.apply_add(us + std::size_t(j) * d, w.data(), next + std::size_t(j) * d);
        }
    };
    auto gh = [&](int i) { return ghosts.data() + std::size_t(i) * 2 * d; };
    FieldPath p = march(g, d, 0, g.nt, u0.data(), opt.boundary, gh, source, "u_tilde");
    p.seed = noise.seed();
    p.stream = noise.stream();
    p.has_noise = true;
    return p;
}

// v: the additive-noise equation (sigma = identity).
inline FieldPath solve_additive(const InitialCondition& ic, const NoiseRealization& noise, SolverOptions opt = {}) {
    FieldPath p = solve_fd(SigmaFunction::identity(ic.dim()), ic, noise, opt);
    p.set_label("v");
    return p;
}

// Deterministic evolution of a time slice from level i_begin to i_end.
inline FieldPath heat_evolve(const SpaceTimeGrid& g, int d, int i_begin, int i_end, const double* start,
                             BoundaryKind bc, const std::vector<double>& ghosts = {}, int ghost_i0 = 0,
                             std::string label = "heat") {
    auto gh = [&](int i) { return ghosts.data() + std::size_t(i - ghost_i0) * 2 * d; };
    auto none = [](int, const double*, double*) {};
    if (bc == BoundaryKind::pinned && ghosts.empty()) throw GridError("heat_evolve: pinned rule needs ghosts");
    return march(g, d, i_begin, i_end, start, bc, gh, none, std::move(label));
}

// phi(i, j, dw, out) adds phi(t_i, x_j) dw to out (d-vector).
using IntegrandApply = std::function<void(int i, int j, const double* dw, double* out)>;

// Discrete stochastic convolution int_{t_{i_begin}}^t int G(t-r,x-z) phi(r,z) W(dz,dr)
// over the cells of `view`, zero data at i_begin and zero boundary values.
// An empty phi means the identity.
inline FieldPath convolve_path(const NoiseView& view, int i_begin, int i_end, const IntegrandApply& phi,
                               std::string label = "conv") {
    const auto& n = view.parent();
    const auto& g = n.grid();
    int d = n.dim();
    std::vector<double> start(std::size_t(g.nx) * d, 0.0), w(d);
    double inv_dx = 1.0 / g.dx;
    const auto& ivs = view.space().intervals();
    auto source = [&](int i, const double*, double* next) {
        if (i < view.i_lo() || i >= view.i_hi()) return;
        const double* row = n.row(i);
        for (auto [a, b] : ivs)
            for (int j = a; j < b; ++j) {
                const double* dw = row + std::size_t(j) * d;
                double* out = next + std::size_t(j) * d;
                if (phi) {
                    for (int k = 0; k < d; ++k) w[k] = dw[k] * inv_dx;
                    phi(i, j, w.data(), out);
                } else {
                    for (int k = 0; k < d; ++k) out[k] += dw[k] * inv_dx;
                }
            }
    };
    auto none = [](int) -> const double* { return nullptr; };
    FieldPath p = march(g, d, i_begin, i_end, start.data(), BoundaryKind::zero, none, source, std::move(label));
    p.seed = n.seed();
    p.stream = n.stream();
    p.has_noise = true;
    return p;
}

struct ConvolutionSpec {
    IntegrandApply phi;  // empty: identity
    double phi1 = 1.0;   // declared sup |phi|
    double S0 = 0, S1 = 0, T = 0;
};

// N4(t,x,phi,S0,S1) at the requested grid points.
inline std::vector<std::vector<double>> convolve(const ConvolutionSpec& spec, const NoiseRealization& noise,
                                                 const std::vector<ParabolicPoint>& points) {
    const auto& g = noise.grid();
    if (!(spec.S0 <= spec.S1 && spec.S1 <= spec.T)) throw DomainError("convolve: need S0 <= S1 <= T");
    int i_last = 0;
    for (auto& p : points) {
        if (p.t < spec.S1 - 1e-12 || p.t > spec.T + 1e-12) throw DomainError("convolve: window violation");
        i_last = std::max(i_last, g.time_index(p.t));
    }
    if (i_last > g.nt) throw GridError("convolve: point beyond grid horizon");
    int i0 = g.time_index(spec.S0);
    NoiseView view(noise, i0, g.nt, IntervalSet(0, g.nx));
    FieldPath f = convolve_path(view, i0, std::max(i0, i_last), spec.phi, "N4");
    std::vector<std::vector<double>> out;
    for (auto& p : points) {
        const double* v = f.at(g.time_index(p.t), g.space_index(p.x));
        out.emplace_back(v, v + noise.dim());
    }
    return out;
}

// Discrete Duhamel sum. Kernel weights are cell averages in space of
// G(t_n - t_m - dt/2, x_j - y); sigma is explicit (left endpoint).
inline FieldPath solve_duhamel(const SigmaFunction& sigma, const InitialCondition& ic, const NoiseRealization& noise,
                               double budget = 4e9) {
    detail::check_dims(sigma, ic, noise);
    const auto& g = noise.grid();
    double cost = double(g.nt) * g.nt * double(g.nx) * g.nx / 2;
    if (cost > budget) throw GridError("solve_duhamel: grid too large for the O(nt^2 nx^2) budget");
    int d = ic.dim(), nx = g.nx;
    FieldPath out(g, d, 0, g.nt, "u_duhamel");
    auto u0 = sample_initial(g, ic);
    std::copy(u0.begin(), u0.end(), out.slice(0));
    // weights w[lag][|j-l|] = (1/dx) int_{cell} G(lag, x_j - y) dy
    auto cell_avg = [&](double lag, int off) {
        double s = std::sqrt(4.0 * lag);
        double a = (off - 0.5) * g.dx, b = (off + 0.5) * g.dx;
        return 0.5 * (std::erf(b / s) - std::erf(a / s)) / g.dx;
    };
    std::vector<double> W(std::size_t(g.nt) * nx);
    for (int m = 0; m < g.nt; ++m)
        for (int off = 0; off < nx; ++off) W[std::size_t(m) * nx + off] = cell_avg((m + 0.5) * g.dt, off);
    // source[m][l] = sigma(u(t_m, x_l)) dW[m,l], filled as the march proceeds
    std::vector<double> src(std::size_t(g.nt) * nx * d, 0.0);
    std::vector<double> tmp(d);
    for (int n = 1; n <= g.nt; ++n) {
        int m_new = n - 1;
        for (int l = 0; l < nx; ++l) {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            sigma.apply_add(out.at(m_new, l), noise.row(m_new) + std::size_t(l) * d, tmp.data());
            std::copy(tmp.begin(), tmp.end(), src.begin() + (std::size_t(m_new) * nx + l) * d);
        }
        double t = g.t(n);
        for (int j = 0; j < nx; ++j) {
            double* o = out.at(n, j);
            ic.heat_evolution(t, g.x(j), o);
            for (int m = 0; m < n; ++m) {
                const double* wrow = W.data() + std::size_t(n - 1 - m) * nx;
                const double* s = src.data() + std::size_t(m) * nx * d;
                for (int l = 0; l < nx; ++l) {
                    double wt = wrow[std::abs(j - l)];
                    for (int k = 0; k < d; ++k) o[k] += wt * s[std::size_t(l) * d + k];
                }
            }
        }
        detail::check_finite(out.slice(n), std::size_t(nx) * d);
    }
    out.seed = noise.seed();
    out.stream = noise.stream();
    out.has_noise = true;
    return out;
}

// Oscillation of a field over the grid points of a region (anything with
// contains(t,x) and bounds()).
template <class Region>
double oscillation(const FieldPath& f, const Region& region) {
    const auto& g = f.grid();
    AxisRect b = region.bounds();
    int i0 = std::max(f.i_begin(), int(std::ceil((b.t_lo - g.t0) / g.dt - 1e-9)));
    int i1 = std::min(f.i_end(), int(std::floor((b.t_hi - g.t0) / g.dt + 1e-9)));
    int j0 = std::max(0, int(std::ceil((b.x_lo - g.x0) / g.dx - 0.5 - 1e-9)));
    int j1 = std::min(g.nx - 1, int(std::floor((b.x_hi - g.x0) / g.dx - 0.5 + 1e-9)));
    std::vector<double> pts;
    int d = f.dim();
    for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j)
            if (region.contains(g.t(i), g.x(j))) pts.insert(pts.end(), f.at(i, j), f.at(i, j) + d);
    if (pts.empty()) throw GridError("rect outside grid");
    return point_set_diameter(pts.data(), pts.size() / std::size_t(d), d);
}

// sup of |f| over the region's grid points.
template <class Region>
double sup_norm(const FieldPath& f, const Region& region) {
    const auto& g = f.grid();
    AxisRect b = region.bounds();
    double m = 0;
    bool any = false;
    for (int i = std::max(f.i_begin(), 0); i <= f.i_end(); ++i) {
        if (g.t(i) < b.t_lo - 1e-12 || g.t(i) > b.t_hi + 1e-12) continue;
        for (int j = 0; j < g.nx; ++j) {
            if (!region.contains(g.t(i), g.x(j))) continue;
            any = true;
            double s = 0;
            for (int k = 0; k < f.dim(); ++k) s += f.at(i, j)[k] * f.at(i, j)[k];
            m = std::max(m, std::sqrt(s));
        }
    }
    if (!any) throw GridError("rect outside grid");
    return m;
}

// CSV export of selected time levels: t, x, u_1..u_d.
inline void write_slices_csv(const std::string& path, const FieldPath& f, const std::vector<int>& times) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "t,x";
    for (int k = 0; k < f.dim(); ++k) os << ",u_" << k + 1;
    os << "\n";
    os.precision(17);
    for (int i : times) {
        if (!f.has_time(i)) continue;
        for (int j = 0; j < f.grid().nx; ++j) {
            os << f.grid().t(i) << "," << f.grid().x(j);
            for (int k = 0; k < f.dim(); ++k) os << "," << f.at(i, j)[k];
            os << "\n";
        }
    }
}

inline void dump_field(const std::string& path, const FieldPath& f) {
    write_dump(path, make_header(f.grid(), f.dim(), f.seed, f.stream, 1, f.i_begin(), f.values().size()), f.values());
}

inline FieldPath load_field(const std::string& path) {
    auto [h, v] = read_dump(path);
    if (h.kind != 1) throw std::runtime_error("not a field dump: " + path);
    SpaceTimeGrid g{h.t0, h.t1, h.x0, h.x1, h.dt, h.dx, int(h.nt), int(h.nx)};
    auto rows = std::int64_t(v.size()) / (h.nx * h.d);
    FieldPath f(g, h.d, int(h.i_begin), int(h.i_begin + rows - 1), "loaded");
    f.mutable_values() = std::move(v);
    f.seed = h.seed;
    f.stream = h.stream;
    f.has_noise = true;
    return f;
}

}  // namespace shelab
