#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "shelab/errors.hpp"
#include "shelab/geometry.hpp"
#include "shelab/heat_kernel.hpp"
#include "shelab/noise.hpp"
#include "shelab/sigma.hpp"
#include "shelab/solver.hpp"
#include "shelab/stopping.hpp"

namespace shelab {

struct DecompositionConfig {
    double alpha = 0.55, beta = 0.60, kappa = 2.0;
    StoppingConfig stopping;

    void validate() const {
        if (!(alpha > 0.5 && alpha < 2.0 / 3.0)) throw ConfigError("decomposition: alpha must lie in (1/2, 2/3)");
        if (!(beta > alpha && beta < 2.0 / 3.0)) throw ConfigError("decomposition: beta must lie in (alpha, 2/3)");
        if (!(kappa > 1)) throw ConfigError("decomposition: kappa must exceed 1");
        stopping.validate();
    }
};

struct LocalFrame {
    double t0 = 0, x0 = 0, rho = 0;
    double t0_minus = 0, L1 = 0;
    ParabolicRect R_rho;
    AxisRect R_plus;
};

inline LocalFrame build_frame(double t0, double x0, double rho, const DecompositionConfig& cfg) {
    cfg.validate();
    if (!unit_window.contains(t0, x0)) throw DomainError("build_frame: (t0,x0) must lie in [1,2]x[0,1]");
    if (!(rho > 0 && rho <= 0.5)) throw DomainError("build_frame: rho must lie in (0, 1/2]");
    LocalFrame f;
    f.t0 = t0, f.x0 = x0, f.rho = rho;
    f.t0_minus = t0 - std::pow(rho, 4) - std::pow(rho, 4 * (1 - cfg.alpha));
    f.L1 = rho * rho + std::pow(rho, 2 * (1 - cfg.beta));
    if (!(f.t0_minus > 0.5)) throw DomainError("build_frame: t0_minus must exceed 1/2");
    f.R_rho = ParabolicRect({t0, x0}, rho);
    f.R_plus = {f.t0_minus, t0 + std::pow(rho, 4), x0 - f.L1, x0 + f.L1};
    return f;
}

// Frame edges moved onto the grid: time level of t0_minus, cell range of
// [x0-L1, x0+L1], cell of x0, and the top level inside R_rho.
struct SnappedFrame {
    int i_minus = 0, i_top = 0, j_x0 = 0, j_lo = 0, j_hi = 0;  // inside cells are [j_lo, j_hi)
    double dt_snap = 0, dx_snap = 0, x0_snap = 0;
};

inline SnappedFrame snap_frame(const LocalFrame& f, const SpaceTimeGrid& g) {
    SnappedFrame s;
    s.i_minus = int(std::lround((f.t0_minus - g.t0) / g.dt));
    s.dt_snap = std::abs(g.t(s.i_minus) - f.t0_minus);
    s.j_lo = int(std::lround((f.x0 - f.L1 - g.x0) / g.dx));
    s.j_hi = int(std::lround((f.x0 + f.L1 - g.x0) / g.dx));
    s.dx_snap = std::max(std::abs(g.x0 + s.j_lo * g.dx - (f.x0 - f.L1)), std::abs(g.x0 + s.j_hi * g.dx - (f.x0 + f.L1)));
    s.j_x0 = g.space_index(f.x0);
    s.x0_snap = std::abs(g.x(s.j_x0) - f.x0);
    double top = f.t0 + f.R_rho.t_half();
    s.i_top = int(std::ceil((top - g.t0) / g.dt - 1e-9));
    if (g.t(s.i_top) >= top) --s.i_top;  // R_rho is open
    if (s.i_minus < 0 || s.i_top > g.nt) throw GridError("decompose: frame outside the grid horizon");
    if (s.j_lo < 0 || s.j_hi > g.nx) throw GridError("decompose: frame wider than the grid");
    if (s.dt_snap >= g.dt || s.dx_snap >= g.dx || s.x0_snap >= g.dx) throw GridError("decompose: frame not resolved");
    return s;
}

struct DecompositionResult {
    LocalFrame frame;
    SnappedFrame snap;
    std::vector<double> sigma_frozen;  // d x d row-major
    bool u_hat_zeroed = false, v1_hat_zeroed = false;
    // All terms live on time levels [i_minus, i_top].
    FieldPath N0, N1, N2, N2a, N2b, v1, u_tilde_det, u_hat, v1_hat, E, w, u_tilde;
    double reconstruction_residual = 0;  // max over R_rho of |w - u_tilde| when hats are inactive
    double max_abs_u_tilde = 0;
    double split_residual = 0;           // max over R_rho of |N2 - (N2a - N2b)|
    double frozen_modulus_ratio = 0;     // max |sigma(u) - sigma_f| / (L K Delta(t0+rho^4-t0-, L1)^{1-delta})
    double v1_semigroup_residual = -1;   // filled by check_v1_semigroup
};

namespace detail {

inline FieldPath window(const FieldPath& f, int i_lo, int i_hi, const std::string& label) {
    if (!f.has_time(i_lo) || !f.has_time(i_hi)) throw GridError("decompose: path does not cover the frame");
    FieldPath out(f.grid(), f.dim(), i_lo, i_hi, label);
    std::copy(f.at(i_lo, 0), f.at(i_hi, 0) + std::size_t(f.grid().nx) * f.dim(), out.mutable_values().begin());
    out.seed = f.seed, out.stream = f.stream, out.has_noise = f.has_noise;
    return out;
}

template <class Op>
FieldPath combine(const FieldPath& a, const std::string& label, Op&& op) {
    FieldPath out(a.grid(), a.dim(), a.i_begin(), a.i_end(), label);
    auto& v = out.mutable_values();
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = op(p);
    out.seed = a.seed, out.stream = a.stream, out.has_noise = a.has_noise;
    return out;
}

// Max Euclidean distance between two fields over the grid points of a region.
template <class Region>
double max_diff(const FieldPath& a, const FieldPath& b, const Region& r) {
    const auto& g = a.grid();
    double m = 0;
    for (int i = std::max(a.i_begin(), b.i_begin()); i <= std::min(a.i_end(), b.i_end()); ++i)
        for (int j = 0; j < g.nx; ++j) {
            if (!r.contains(g.t(i), g.x(j))) continue;
            double s = 0;
            for (int k = 0; k < a.dim(); ++k) s += std::pow(a.at(i, j)[k] - b.at(i, j)[k], 2);
            m = std::max(m, std::sqrt(s));
        }
    return m;
}

inline void check_provenance(const FieldPath& p, const NoiseRealization& n, const char* what) {
    if (!p.grid().same_as(n.grid())) throw GridError(std::string("decompose: ") + what + " on a different grid");
    if (p.has_noise && (p.seed != n.seed() || p.stream != n.stream()))
        throw GridError(std::string("decompose: ") + what + " built from a different noise realization");
}

}  // namespace detail

// All local terms around (t0,x0,rho) from one realization. u and u_tilde come
// from solve_fd and solve_modified(..., stop.tau1.clip_index) on `noise`; ic
// provides the pinned boundary values of the deterministic part.
inline DecompositionResult decompose(const SigmaFunction& sigma, const InitialCondition& ic, const FieldPath& u,
                                     const FieldPath& u_tilde, const NoiseRealization& noise, const LocalFrame& frame,
                                     const DecompositionConfig& cfg, const StoppingResult& stop,
                                     const FieldPath* n0_full = nullptr) {
    cfg.validate();
    detail::check_provenance(u, noise, "u path");
    detail::check_provenance(u_tilde, noise, "u_tilde path");
    const auto& g = noise.grid();
    const int d = noise.dim(), nx = g.nx;
    const std::size_t dd = std::size_t(d) * d;
    DecompositionResult r;
    r.frame = frame;
    r.snap = snap_frame(frame, g);
    const auto& s = r.snap;
    const int im = s.i_minus, itop = s.i_top;
    const int clip = stop.tau1.clip_index;
    auto u_at = [&](int i, int j) { return u.at(std::min(i, clip), j); };
    if (!u.has_time(std::min(itop, clip)) || std::min(im, clip) < u.i_begin())
        throw GridError("decompose: u path does not cover the frame");

    r.sigma_frozen.resize(dd);
    sigma.matrix(u_at(im, s.j_x0), r.sigma_frozen.data());
    const std::vector<double>& sf = r.sigma_frozen;

    // phi applications: sigma(u(s^tau1, y)) - sigma_f, sigma(u(s^tau1, y)), sigma_f.
    std::vector<double> m(dd);
    double L = sigma.lipschitz(), ex = 1 - cfg.stopping.delta;
    double mod_den = L * cfg.stopping.K * std::pow(delta_metric(frame.t0 + std::pow(frame.rho, 4) - frame.t0_minus, frame.L1), ex);
    double fm_ratio = 0;
    auto diff_phi = [&](bool track) {
        return [&, track](int i, int j, const double* w, double* out) {
            sigma.matrix(u_at(i, j), m.data());
            double fr = 0;
            for (std::size_t p = 0; p < dd; ++p) {
                m[p] -= sf[p];
                fr += m[p] * m[p];
            }
            if (track && mod_den > 0) fm_ratio = std::max(fm_ratio, std::sqrt(fr) / mod_den);
            for (int k = 0; k < d; ++k)
                for (int l = 0; l < d; ++l) out[k] += m[std::size_t(k) * d + l] * w[l];
        };
    };
    IntegrandApply sigma_phi = [&](int i, int j, const double* w, double* out) { sigma.apply_add(u_at(i, j), w, out); };
    IntegrandApply frozen_phi = [&](int, int, const double* w, double* out) {
        for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l) out[k] += sf[std::size_t(k) * d + l] * w[l];
    };

    IntervalSet inside(s.j_lo, s.j_hi);
    NoiseView in_view(noise, im, g.nt, inside);
    NoiseView out_view = in_view.space_complement();
    NoiseView all_view(noise);

    if (n0_full) {
        detail::check_provenance(*n0_full, noise, "N0 path");
        r.N0 = detail::window(*n0_full, im, itop, "N0");
    } else {
        r.N0 = detail::window(convolve_path(all_view, 0, itop, {}, "N0"), im, itop, "N0");
    }
    r.N1 = convolve_path(in_view, im, itop, diff_phi(true), "N1");
    r.N2 = convolve_path(out_view, im, itop, diff_phi(false), "N2");
    r.N2a = convolve_path(out_view, im, itop, sigma_phi, "N2a");
    r.N2b = convolve_path(out_view, im, itop, frozen_phi, "N2b");
    r.frozen_modulus_ratio = fm_ratio;

    // v1: N0(t0-) carried forward by the zero-boundary heat flow.
    r.v1 = heat_evolve(g, d, im, itop, r.N0.slice(im), BoundaryKind::zero, {}, 0, "v1");
    r.v1.seed = noise.seed(), r.v1.stream = noise.stream(), r.v1.has_noise = true;
    // Deterministic part: u_tilde(t0-) under the pinned boundary.
    if (!u_tilde.has_time(im) || !u_tilde.has_time(itop)) throw GridError("decompose: u_tilde does not cover the frame");
    auto ghosts = pinned_ghosts(g, ic, im, itop);
    r.u_tilde_det = heat_evolve(g, d, im, itop, u_tilde.slice(im), BoundaryKind::pinned, ghosts, im, "u_tilde_det");

    r.u_hat_zeroed = stop.tau2.triggered && stop.tau2.index < im;
    r.v1_hat_zeroed = stop.tau3.triggered && stop.tau3.index < im;
    r.u_hat = detail::combine(r.u_tilde_det, "u_hat",
                              [&](std::size_t p) { return r.u_hat_zeroed ? 0.0 : r.u_tilde_det.values()[p]; });
    r.v1_hat = detail::combine(r.v1, "v1_hat", [&](std::size_t p) { return r.v1_hat_zeroed ? 0.0 : r.v1.values()[p]; });

    // E = N1 + N2 - sigma_f v1_hat + u_hat;  w = sigma_f N0 + E.
    std::vector<double> fv(std::size_t(itop - im + 1) * nx * d), fn(fv.size());
    for (int i = im; i <= itop; ++i)
        for (int j = 0; j < nx; ++j) {
            std::size_t o = (std::size_t(i - im) * nx + j) * d;
            for (int k = 0; k < d; ++k) {
                double a = 0, b = 0;
                for (int l = 0; l < d; ++l) {
                    a += sf[std::size_t(k) * d + l] * r.v1_hat.at(i, j)[l];
                    b += sf[std::size_t(k) * d + l] * r.N0.at(i, j)[l];
                }
                fv[o + k] = a;
                fn[o + k] = b;
            }
        }
    const auto &n1 = r.N1.values(), &n2 = r.N2.values(), &uh = r.u_hat.values();
    r.E = detail::combine(r.N1, "E", [&](std::size_t p) { return n1[p] + n2[p] - fv[p] + uh[p]; });
    r.w = detail::combine(r.N1, "w", [&](std::size_t p) { return fn[p] + r.E.values()[p]; });
    r.u_tilde = detail::window(u_tilde, im, itop, "u_tilde");

    r.max_abs_u_tilde = sup_norm(r.u_tilde, frame.R_rho);
    r.reconstruction_residual = detail::max_diff(r.w, r.u_tilde, frame.R_rho);
    FieldPath split = detail::combine(r.N2a, "N2a-N2b", [&](std::size_t p) { return r.N2a.values()[p] - r.N2b.values()[p]; });
    r.split_residual = detail::max_diff(r.N2, split, frame.R_rho);
    return r;
}

// Compares v1 on R_rho with the quadrature-free kernel sum
// sum_l G(t - t0-, x - y_l) N0(t0-, y_l) dx. Returns the max difference.
inline double check_v1_semigroup(DecompositionResult& r) {
    const auto& g = r.v1.grid();
    int d = r.v1.dim(), im = r.snap.i_minus;
    double m = 0;
    std::vector<double> acc(d);
    for (int i = im + 1; i <= r.snap.i_top; ++i)
        for (int j = 0; j < g.nx; ++j) {
            if (!r.frame.R_rho.contains(g.t(i), g.x(j))) continue;
            double lag = g.t(i) - g.t(im);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int l = 0; l < g.nx; ++l) {
                // cell average of the kernel, as in solve_duhamel
                double sd = std::sqrt(4 * lag), a = (g.x(j) - g.x(l) - 0.5 * g.dx) / sd, b = a + g.dx / sd;
                double wgt = 0.5 * (std::erf(b) - std::erf(a));
                for (int k = 0; k < d; ++k) acc[k] += wgt * r.N0.at(im, l)[k];
            }
            double s = 0;
            for (int k = 0; k < d; ++k) s += std::pow(acc[k] - r.v1.at(i, j)[k], 2);
            m = std::max(m, std::sqrt(s));
        }
    r.v1_semigroup_residual = m;
    return m;
}

struct OscillationReport {
    double N0 = 0, N1 = 0, N2 = 0, N2_sup = 0, N2a_sup = 0, u_hat = 0, v1_hat = 0, E = 0, w = 0, u_tilde = 0;
    double ratio(double v) const { return N0 > 0 ? v / N0 : 0.0; }
};

inline OscillationReport oscillation_report(const DecompositionResult& r) {
    const auto& R = r.frame.R_rho;
    OscillationReport o;
    o.N0 = oscillation(r.N0, R);
    o.N1 = oscillation(r.N1, R);
    o.N2 = oscillation(r.N2, R);
    o.N2_sup = sup_norm(r.N2, R);
    o.N2a_sup = sup_norm(r.N2a, R);
    o.u_hat = oscillation(r.u_hat, R);
    o.v1_hat = oscillation(r.v1_hat, R);
    o.E = oscillation(r.E, R);
    o.w = oscillation(r.w, R);
    o.u_tilde = oscillation(r.u_tilde, R);
    return o;
}

// One realization run through the stopped pipeline: u, tau1, u_tilde, v, N0
// and the growth stops.
struct PathBundle {
    FieldPath u, u_tilde, v, N0;
    StoppingResult stop;
};

inline PathBundle run_paths(const SigmaFunction& sigma, const InitialCondition& ic, const NoiseRealization& noise,
                            const StoppingConfig& cfg, SolverOptions opt = {}) {
    PathBundle b;
    b.u = solve_fd(sigma, ic, noise, opt);
    b.stop.tau1 = tau1(b.u, cfg);
    b.u_tilde = solve_modified(sigma, ic, noise, b.u, b.stop.tau1.clip_index, opt);
    b.v = solve_additive(InitialCondition::zero(ic.dim()), noise, opt);
    b.N0 = convolve_path(NoiseView(noise), 0, noise.grid().nt, {}, "N0");
    b.stop.tau2 = tau_growth(b.u_tilde, cfg.K);
    b.stop.tau3 = tau_growth(b.v, cfg.K);
    return b;
}

}  // namespace shelab
