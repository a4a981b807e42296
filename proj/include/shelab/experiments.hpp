#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "shelab/covering.hpp"
#include "shelab/decomposition.hpp"
#include "shelab/gaussian.hpp"
#include "shelab/noise.hpp"
#include "shelab/sigma.hpp"
#include "shelab/solver.hpp"
#include "shelab/stats.hpp"
#include "shelab/stopping.hpp"

namespace shelab {

// ---------------------------------------------------------------------------
// Configuration

struct SigmaSpec {
    std::string kind = "identity";  // zero | identity | bounded_sine | scaled_rotation
    double sigma1 = 0;              // bounded_sine; 0 means sqrt(d)
    double eps = 0.5;
    double scale = 1, angle = 0.3;
};

struct U0Spec {
    std::string kind = "zero";  // zero | constant | heat_kernel | bump
    std::vector<double> amp;    // one per component; empty means all ones
    double width = 0.1;         // t_init for heat_kernel, w for bump
};

struct GridSpec {
    double T0 = 2, X = 4, dx = 1.0 / 32, ratio = 0.25;
};

struct FrameSpec {
    double t0 = 1.5, x0 = 0.5, rho = 0.5;
};

struct ExperimentConfig {
    std::string scenario = "linear";
    int d = 2;
    SigmaSpec sigma;
    U0Spec u0;
    GridSpec grid;
    DecompositionConfig decomposition;  // carries the stopping config
    int q_min = 4, q_max = 6;
    GaugeConfig gauge;
    int replicates = 100;
    std::uint64_t seed = 2024;
    std::vector<double> lambda_grid;
    double lambda0 = 0;
    std::vector<FrameSpec> frames;
    std::vector<double> eps_grid;
    std::vector<int> d_list{1, 2, 6, 8};
    std::vector<std::vector<double>> z_list{{0.0}};  // hitting targets, zero-padded to the largest d
    std::string out = "out";
    int threads = 0;  // 0: hardware concurrency

    const StoppingConfig& stopping() const { return decomposition.stopping; }
    StoppingConfig& stopping() { return decomposition.stopping; }

    SigmaFunction make_sigma() const {
        if (sigma.kind == "zero") return SigmaFunction::zero(d);
        if (sigma.kind == "identity") return SigmaFunction::identity(d);
        if (sigma.kind == "bounded_sine")
            return SigmaFunction::bounded_sine(d, sigma.sigma1 > 0 ? sigma.sigma1 : std::sqrt(double(d)), sigma.eps);
        if (sigma.kind == "scaled_rotation") return SigmaFunction::scaled_rotation(d, sigma.scale, sigma.angle);
        throw ConfigError("unknown sigma kind: " + sigma.kind);
    }

    InitialCondition make_u0() const {
        std::vector<double> amp = u0.amp.empty() ? std::vector<double>(std::size_t(d), 1.0) : u0.amp;
        if (u0.kind != "zero" && amp.size() != std::size_t(d)) throw ConfigError("u0.amp must have d entries");
        if (u0.kind == "zero") return InitialCondition::zero(d);
        if (u0.kind == "constant") return InitialCondition::constant(amp);
        if (u0.kind == "heat_kernel") return InitialCondition::heat_kernel(amp, u0.width);
        if (u0.kind == "bump") return InitialCondition::bump(amp, u0.width);
        throw ConfigError("unknown u0 kind: " + u0.kind);
    }

    SpaceTimeGrid make_grid() const { return SpaceTimeGrid::centered(grid.T0, grid.X, grid.dx, grid.ratio); }

    void validate() const {
        if (d < 1 || d > 16) throw ConfigError("d must lie in [1, 16]");
        if (replicates < 1) throw ConfigError("replicates must be positive");
        if (q_min < gauge.q0 || q_max < q_min || q_max > 12) throw ConfigError("ladder: need q0 <= q_min <= q_max <= 12");
        if (!(gauge.K_tilde > 0 && gauge.K2 > 0)) throw ConfigError("gauge: K_tilde and K2 must be positive");
        if (z_list.empty()) throw ConfigError("z_list must not be empty");
        for (int v : d_list)
            if (v < 1) throw ConfigError("d_list entries must be positive");
        for (double e : eps_grid)
            if (!(e > 0)) throw ConfigError("eps_grid entries must be positive");
        decomposition.validate();
        make_grid();
        make_sigma();
        make_u0();
    }
};

// Named starting points; JSON fields override them.
inline ExperimentConfig scenario_defaults(const std::string& name) {
    ExperimentConfig c;
    c.scenario = name;
    if (name == "linear") return c;
    if (name == "nonlinear") {
        c.sigma.kind = "bounded_sine";
        c.sigma.sigma1 = std::sqrt(2.0);
        c.grid = {1.5625, 3, 1.0 / 32, 0.25};
        c.stopping().T0 = 1.5625;
        c.frames = {{1.5, 0.5, 0.5}, {1.5, 0.5, 0.35}, {1.5, 0.5, 0.25}, {1.5, 0.5, 0.18}};
        return c;
    }
    if (name == "constant") {
        c.sigma.kind = "scaled_rotation";
        return c;
    }
    if (name == "deterministic") {
        c.sigma.kind = "zero";
        c.d = 1;
        c.u0.kind = "heat_kernel";
        c.grid = {2, 4, 1.0 / 64, 0.5};
        return c;
    }
    throw ConfigError("unknown scenario: " + name);
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto* k : keys) ok = ok || it.key() == k;
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& v, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        v = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::take;
    detail::reject_unknown(j,
                           {"scenario", "d", "sigma", "u0", "grid", "stopping", "decomposition", "ladder", "gauge",
                            "replicates", "seed", "lambda_grid", "lambda0", "frames", "eps_grid", "d_list", "z_list", "out",
                            "threads"},
                           "config");
    std::string name = "linear";
    take(j, "scenario", name, "config");
    ExperimentConfig c = scenario_defaults(name);
    take(j, "d", c.d, "config");
    if (j.contains("sigma")) {
        auto& s = j["sigma"];
        detail::reject_unknown(s, {"kind", "sigma1", "eps", "scale", "angle"}, "sigma");
        take(s, "kind", c.sigma.kind, "sigma");
        take(s, "sigma1", c.sigma.sigma1, "sigma");
        take(s, "eps", c.sigma.eps, "sigma");
        take(s, "scale", c.sigma.scale, "sigma");
        take(s, "angle", c.sigma.angle, "sigma");
    }
    if (j.contains("u0")) {
        auto& s = j["u0"];
        detail::reject_unknown(s, {"kind", "amp", "width"}, "u0");
        take(s, "kind", c.u0.kind, "u0");
        take(s, "amp", c.u0.amp, "u0");
        take(s, "width", c.u0.width, "u0");
    }
    if (j.contains("grid")) {
        auto& s = j["grid"];
        detail::reject_unknown(s, {"T0", "X", "dx", "ratio"}, "grid");
        take(s, "T0", c.grid.T0, "grid");
        take(s, "X", c.grid.X, "grid");
        take(s, "dx", c.grid.dx, "grid");
        take(s, "ratio", c.grid.ratio, "grid");
    }
    c.stopping().T0 = c.grid.T0;
    if (j.contains("stopping")) {
        auto& s = j["stopping"];
        auto& st = c.stopping();
        detail::reject_unknown(s, {"K", "delta", "T0", "x_half", "t_start", "cap", "stride"}, "stopping");
        take(s, "K", st.K, "stopping");
        take(s, "delta", st.delta, "stopping");
        take(s, "T0", st.T0, "stopping");
        take(s, "x_half", st.x_half, "stopping");
        take(s, "t_start", st.t_start, "stopping");
        take(s, "cap", st.cap, "stopping");
        take(s, "stride", st.stride, "stopping");
    }
    if (j.contains("decomposition")) {
        auto& s = j["decomposition"];
        detail::reject_unknown(s, {"alpha", "beta", "kappa"}, "decomposition");
        take(s, "alpha", c.decomposition.alpha, "decomposition");
        take(s, "beta", c.decomposition.beta, "decomposition");
        take(s, "kappa", c.decomposition.kappa, "decomposition");
    }
    if (j.contains("ladder")) {
        auto& s = j["ladder"];
        detail::reject_unknown(s, {"q_min", "q_max"}, "ladder");
        take(s, "q_min", c.q_min, "ladder");
        take(s, "q_max", c.q_max, "ladder");
    }
    if (j.contains("gauge")) {
        auto& s = j["gauge"];
        detail::reject_unknown(s, {"K_tilde", "K2", "q0"}, "gauge");
        take(s, "K_tilde", c.gauge.K_tilde, "gauge");
        take(s, "K2", c.gauge.K2, "gauge");
        take(s, "q0", c.gauge.q0, "gauge");
    }
    take(j, "replicates", c.replicates, "config");
    take(j, "seed", c.seed, "config");
    take(j, "lambda_grid", c.lambda_grid, "config");
    take(j, "lambda0", c.lambda0, "config");
    if (j.contains("frames")) {
        c.frames.clear();
        for (auto& f : j["frames"]) {
            detail::reject_unknown(f, {"t0", "x0", "rho"}, "frames[]");
            FrameSpec s;
            take(f, "t0", s.t0, "frames[]");
            take(f, "x0", s.x0, "frames[]");
            take(f, "rho", s.rho, "frames[]");
            c.frames.push_back(s);
        }
    }
    take(j, "eps_grid", c.eps_grid, "config");
    take(j, "d_list", c.d_list, "config");
    take(j, "z_list", c.z_list, "config");
    take(j, "out", c.out, "config");
    take(j, "threads", c.threads, "config");
    c.gauge.sigma1 = c.make_sigma().sigma1();
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    const auto& st = c.stopping();
    nlohmann::json frames = nlohmann::json::array();
    for (auto& f : c.frames) frames.push_back({{"t0", f.t0}, {"x0", f.x0}, {"rho", f.rho}});
    return {{"scenario", c.scenario},
            {"d", c.d},
            {"sigma", {{"kind", c.sigma.kind}, {"sigma1", c.sigma.sigma1}, {"eps", c.sigma.eps}, {"scale", c.sigma.scale},
                       {"angle", c.sigma.angle}}},
            {"u0", {{"kind", c.u0.kind}, {"amp", c.u0.amp}, {"width", c.u0.width}}},
            {"grid", {{"T0", c.grid.T0}, {"X", c.grid.X}, {"dx", c.grid.dx}, {"ratio", c.grid.ratio}}},
            {"stopping", {{"K", st.K}, {"delta", st.delta}, {"T0", st.T0}, {"x_half", st.x_half},
                          {"t_start", st.t_start}, {"cap", st.cap}, {"stride", st.stride}}},
            {"decomposition",
             {{"alpha", c.decomposition.alpha}, {"beta", c.decomposition.beta}, {"kappa", c.decomposition.kappa}}},
            {"ladder", {{"q_min", c.q_min}, {"q_max", c.q_max}}},
            {"gauge", {{"K_tilde", c.gauge.K_tilde}, {"K2", c.gauge.K2}, {"q0", c.gauge.q0}}},
            {"replicates", c.replicates},
            {"seed", c.seed},
            {"lambda_grid", c.lambda_grid},
            {"lambda0", c.lambda0},
            {"frames", frames},
            {"eps_grid", c.eps_grid},
            {"d_list", c.d_list},
            {"z_list", c.z_list},
            {"out", c.out},
            {"threads", c.threads}};
}

// ---------------------------------------------------------------------------
// Replicates run in any order; results are stored by index, so output does
// not depend on the thread count.

inline void parallel_for(int n, const std::function<void(int)>& body, int threads = 0) {
    int hw = threads > 0 ? threads : int(std::max(1u, std::thread::hardware_concurrency()));
    hw = std::min(hw, n);
    if (hw <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex m;
    std::vector<std::thread> pool;
    for (int w = 0; w < hw; ++w)
        pool.emplace_back([&] {
            for (int i; (i = next++) < n;) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(m);
                    if (!err) err = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// Noise streams: replicate r of a batch uses stream r + offset.
inline constexpr std::uint64_t calibration_stream = 1u << 20;

// ---------------------------------------------------------------------------
// Per-replicate path summaries

struct ReplicateRecord {
    int replicate = 0;
    std::vector<double> u_probe;  // u(t_probe, x_probe)
    double max_modulus_ratio = 0;
    double tau1 = 0, tau2 = 0, tau3 = 0;
    bool triggered = false;
};

inline std::vector<ReplicateRecord> simulate(const ExperimentConfig& c, double t_probe = 1.0, double x_probe = 0.0,
                                             std::uint64_t stream0 = 0, bool with_stops = true) {
    auto g = c.make_grid();
    auto sigma = c.make_sigma();
    auto ic = c.make_u0();
    int ip = g.time_index(t_probe), jp = g.space_index(x_probe);
    if (ip < 0 || ip > g.nt || jp < 0 || jp >= g.nx) throw DomainError("simulate: probe outside the grid");
    std::vector<ReplicateRecord> out(std::size_t(c.replicates));
    parallel_for(c.replicates, [&](int r) {
        auto n = generate(g, c.d, c.seed, stream0 + std::uint64_t(r));
        ReplicateRecord rec;
        rec.replicate = r;
        if (with_stops) {
            auto b = run_paths(sigma, ic, n, c.stopping());
            rec.u_probe.assign(b.u.at(ip, jp), b.u.at(ip, jp) + c.d);
            rec.max_modulus_ratio = max_modulus_ratio(b.u, c.stopping());
            rec.tau1 = b.stop.tau1.tau, rec.tau2 = b.stop.tau2.tau, rec.tau3 = b.stop.tau3.tau;
            rec.triggered = b.stop.any_triggered();
        } else {
            auto u = solve_fd(sigma, ic, n);
            rec.u_probe.assign(u.at(ip, jp), u.at(ip, jp) + c.d);
        }
        out[std::size_t(r)] = std::move(rec);
    }, c.threads);
    return out;
}

// K as the q-quantile of the per-path maximal modulus ratio.
inline double calibrate_K(const ExperimentConfig& c, int reps, double q = 0.95) {
    auto g = c.make_grid();
    auto sigma = c.make_sigma();
    auto ic = c.make_u0();
    std::vector<double> m(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](int r) {
        auto n = generate(g, c.d, c.seed, calibration_stream + std::uint64_t(r));
        m[std::size_t(r)] = max_modulus_ratio(solve_fd(sigma, ic, n), c.stopping());
    }, c.threads);
    return quantile(m, q);
}

// ---------------------------------------------------------------------------
// Decomposition frames

struct FrameRecord {
    int replicate = 0;
    FrameSpec frame;
    OscillationReport osc;
    double reconstruction_residual = 0, max_abs_u_tilde = 0, split_residual = 0, frozen_modulus_ratio = 0;
    bool triggered = false, u_hat_zeroed = false, v1_hat_zeroed = false;
};

inline std::vector<FrameRecord> decompose_frames(const ExperimentConfig& c, std::uint64_t stream0 = 0) {
    if (c.frames.empty()) throw ConfigError("decompose: no frames configured");
    auto g = c.make_grid();
    auto sigma = c.make_sigma();
    auto ic = c.make_u0();
    std::vector<LocalFrame> frames;
    for (auto& f : c.frames) frames.push_back(build_frame(f.t0, f.x0, f.rho, c.decomposition));
    std::size_t nf = frames.size();
    std::vector<FrameRecord> out(std::size_t(c.replicates) * nf);
    parallel_for(c.replicates, [&](int r) {
        auto n = generate(g, c.d, c.seed, stream0 + std::uint64_t(r));
        auto b = run_paths(sigma, ic, n, c.stopping());
        for (std::size_t k = 0; k < nf; ++k) {
            auto res = decompose(sigma, ic, b.u, b.u_tilde, n, frames[k], c.decomposition, b.stop, &b.N0);
            FrameRecord& rec = out[std::size_t(r) * nf + k];
            rec.replicate = r;
            rec.frame = c.frames[k];
            rec.osc = oscillation_report(res);
            rec.reconstruction_residual = res.reconstruction_residual;
            rec.max_abs_u_tilde = res.max_abs_u_tilde;
            rec.split_residual = res.split_residual;
            rec.frozen_modulus_ratio = res.frozen_modulus_ratio;
            rec.triggered = b.stop.any_triggered();
            rec.u_hat_zeroed = res.u_hat_zeroed;
            rec.v1_hat_zeroed = res.v1_hat_zeroed;
        }
    }, c.threads);
    return out;
}

// ---------------------------------------------------------------------------
// Window search on exact ladder samples

inline std::vector<ParabolicPoint> probe_centres() {
    std::vector<ParabolicPoint> p;
    for (double t : {1.25, 1.5, 1.75})
        for (double x : {0.25, 0.5, 0.75}) p.push_back({t, x});
    return p;
}

struct WindowRecord {
    int q = 0, probe = 0, draw = 0;
    bool found = false;
    int ell = -1;
    double statistic = 0;  // min_l osc_l / f(r_l)
};

inline std::vector<WindowRecord> window_experiment(int q, int d, int reps, std::uint64_t seed, double sigma1,
                                                   double K_tilde, const std::vector<ParabolicPoint>& probes) {
    std::vector<WindowRecord> out;
    for (std::size_t p = 0; p < probes.size(); ++p) {
        LadderSampler S(probes[p], q, d);
        std::uint64_t s = seed ^ (std::uint64_t(q) << 40) ^ (std::uint64_t(p) << 32);
        for (int r = 0; r < reps; ++r) {
            auto w = S.search(s, std::uint64_t(r), sigma1, K_tilde);
            out.push_back({q, int(p), r, w.found, w.ell, ladder_statistic(w)});
        }
    }
    return out;
}

// Smallest K_tilde with found-frequency 1 - exp(-sqrt q) at level q: found
// means statistic <= 2 sigma1 K_tilde, so this is the quantile over 2 sigma1.
inline double calibrate_K_tilde(int q, int d, int reps, std::uint64_t seed, const std::vector<ParabolicPoint>& probes,
                                double sigma1) {
    if (!(sigma1 > 0)) throw DomainError("calibrate_K_tilde: sigma1 must be positive");
    auto recs = window_experiment(q, d, reps, seed, 1.0, 1.0, probes);
    std::vector<double> s;
    for (auto& r : recs) s.push_back(r.statistic);
    return quantile(s, 1 - std::exp(-std::sqrt(double(q)))) / (2 * sigma1);
}

// ---------------------------------------------------------------------------
// Covers of exact lattice samples: a window of 4 x 4 order-q rectangles at
// anchor, resolved by order-(q+1) corners.

struct LatticeSampler {
    int q = 0, d = 1, nt = 0, nx = 0;
    ParabolicPoint anchor;
    GaussianSampler sampler;

    LatticeSampler(const ParabolicPoint& a, int q_, int d_)
        : q(q_), d(d_), anchor(a), sampler(build(a, q_, &nt, &nx)) {}

    AxisRect window() const {
        return {anchor.t, anchor.t + 4 * std::ldexp(1.0, -4 * q), anchor.x, anchor.x + 4 * std::ldexp(1.0, -2 * q)};
    }

    PointLattice draw(std::uint64_t seed, std::uint64_t r) const {
        PointLattice L;
        L.t_lo = anchor.t, L.x_lo = anchor.x;
        L.et = 4 * (q + 1), L.ex = 2 * (q + 1);
        L.nt = nt, L.nx = nx, L.d = d;
        L.values.resize(std::size_t(nt) * nx * d);
        for (int k = 0; k < d; ++k) {
            Eigen::VectorXd z = sampler.sample(seed, r, k);
            for (Eigen::Index i = 0; i < z.size(); ++i) L.values[std::size_t(i) * d + k] = z(i);
        }
        return L;
    }

private:
    static GaussianSampler build(const ParabolicPoint& a, int q, int* nt, int* nx) {
        auto pts = cover_lattice_points(a, q, 4, 4, nt, nx);
        return GaussianSampler(n0_increment_covariance(pts, a));
    }
};

struct CoverOutcome {
    int q = 0, draw = 0;
    CoverReport report;
    std::size_t violations = 0;
};

inline std::vector<CoverOutcome> cover_experiment(int q, int d, int reps, std::uint64_t seed, const GaugeConfig& gauge,
                                                  ParabolicPoint anchor = {1.5, 0.5}) {
    LatticeSampler S(anchor, q, d);
    std::vector<CoverOutcome> out;
    std::uint64_t s = seed ^ (std::uint64_t(q) << 40);
    for (int r = 0; r < reps; ++r) {
        auto L = S.draw(s, std::uint64_t(r));
        CoverOutcome o;
        o.q = q, o.draw = r;
        o.report = build_cover(L, S.window(), q, gauge);
        o.violations = range_cover_check(L, o.report).size();
        o.report.residual_centres.clear();  // large; not needed downstream
        out.push_back(std::move(o));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oscillation tails on exact samples over the 9 x 9 closure lattice of R_rho.

struct TailSeries {
    double rho = 0;
    std::vector<double> samples;  // osc / rho
    TailFit fit;
};

inline TailSeries oscillation_tail(const ParabolicPoint& c, double rho, int d, int n, std::uint64_t seed,
                                   const std::vector<double>& mu_grid) {
    auto pts = rect_lattice(c, rho, 9);
    GaussianSampler S(n0_increment_covariance(pts, c));
    TailSeries t;
    t.rho = rho;
    std::vector<double> v(pts.size() * std::size_t(d));
    for (int r = 0; r < n; ++r) {
        for (int k = 0; k < d; ++k) {
            Eigen::VectorXd z = S.sample(seed, std::uint64_t(r), k);
            for (std::size_t i = 0; i < pts.size(); ++i) v[i * d + k] = z(Eigen::Index(i));
        }
        t.samples.push_back(point_set_diameter(v.data(), pts.size(), d) / rho);
    }
    // lambda^2 (T - S1)^{-1/2} with T - S1 = 2 rho^4 and lambda = mu rho is mu^2 / sqrt 2
    t.fit = tail_fit(t.samples, 1 / std::sqrt(2.0), mu_grid);
    return t;
}

// ---------------------------------------------------------------------------
// Hitting: nested coordinates of independent scalar linear paths. Dimension d
// of replicate r uses scalar paths r*dmax .. r*dmax + d - 1, so a hit in
// dimension d' > d implies a hit in dimension d on the same replicate.

struct HitScan {
    std::vector<int> d_list;
    std::vector<std::vector<double>> z_list;  // padded to the largest d
    std::vector<double> eps;
    int trials = 0;
    std::vector<std::vector<std::vector<double>>> min_dist;  // [z][d index][trial]
    std::vector<std::vector<std::vector<Proportion>>> p;      // [z][d index][eps index]
};

inline HitScan hitting_scan(const ExperimentConfig& c, const AxisRect& window = unit_window) {
    if (c.eps_grid.empty()) throw ConfigError("hit: eps_grid is empty");
    auto g = c.make_grid();
    int dmax = *std::max_element(c.d_list.begin(), c.d_list.end());
    int i0 = g.time_index(window.t_lo), i1 = g.time_index(window.t_hi);
    if (i1 > g.nt) throw GridError("hit: window beyond the horizon");
    std::vector<int> cols;
    for (int j = 0; j < g.nx; ++j)
        if (g.x(j) >= window.x_lo && g.x(j) <= window.x_hi) cols.push_back(j);
    if (cols.empty()) throw GridError("hit: window has no grid columns");
    std::size_t npts = std::size_t(i1 - i0 + 1) * cols.size();

    HitScan H;
    H.d_list = c.d_list;
    H.eps = c.eps_grid;
    H.trials = c.replicates;
    for (auto z : c.z_list) {
        if (z.size() > std::size_t(dmax)) throw ConfigError("hit: target longer than the largest d");
        z.resize(std::size_t(dmax), 0.0);
        H.z_list.push_back(z);
    }
    std::size_t nz = H.z_list.size();
    H.min_dist.assign(nz, std::vector<std::vector<double>>(c.d_list.size(), std::vector<double>(std::size_t(c.replicates))));
    auto ic = InitialCondition::zero(1);
    parallel_for(c.replicates, [&](int r) {
        std::vector<std::vector<double>> sq(nz, std::vector<double>(npts, 0.0));
        std::vector<std::vector<double>> best(nz, std::vector<double>(std::size_t(dmax + 1), 0.0));
        for (int k = 0; k < dmax; ++k) {
            auto n = generate(g, 1, c.seed, std::uint64_t(r) * std::uint64_t(dmax) + std::uint64_t(k));
            auto u = solve_additive(ic, n);
            for (std::size_t zi = 0; zi < nz; ++zi) {
                double zk = H.z_list[zi][std::size_t(k)];
                std::size_t p = 0;
                for (int i = i0; i <= i1; ++i)
                    for (int j : cols) {
                        double e = u.at(i, j)[0] - zk;
                        sq[zi][p++] += e * e;
                    }
                best[zi][std::size_t(k + 1)] = std::sqrt(*std::min_element(sq[zi].begin(), sq[zi].end()));
            }
        }
        for (std::size_t zi = 0; zi < nz; ++zi)
            for (std::size_t a = 0; a < c.d_list.size(); ++a)
                H.min_dist[zi][a][std::size_t(r)] = best[zi][std::size_t(c.d_list[a])];
    }, c.threads);
    H.p.resize(nz);
    for (std::size_t zi = 0; zi < nz; ++zi)
        for (auto& md : H.min_dist[zi]) {
            std::vector<Proportion> row;
            for (double e : H.eps) {
                std::size_t k = std::size_t(std::count_if(md.begin(), md.end(), [&](double v) { return v <= e; }));
                row.push_back(wilson(k, md.size()));
            }
            H.p[zi].push_back(row);
        }
    return H;
}

// log p against log eps over the grid points with p in (lo, hi).
inline LineFit hit_slope(const HitScan& H, std::size_t zi, std::size_t di, double lo = 0.01, double hi = 0.99) {
    std::vector<double> x, y;
    for (std::size_t e = 0; e < H.eps.size(); ++e) {
        double p = H.p[zi][di][e].p;
        if (p > lo && p < hi) {
            x.push_back(std::log(H.eps[e]));
            y.push_back(std::log(p));
        }
    }
    if (x.size() < 3) throw NumericalError("hit_slope: fewer than 3 grid points inside the fitting band");
    return least_squares(x, y);
}

// Range of the d-dimensional linear path over a window, as a flat point array.
inline std::vector<double> range_points(const FieldPath& f, const AxisRect& window) {
    const auto& g = f.grid();
    std::vector<double> pts;
    for (int i = f.i_begin(); i <= f.i_end(); ++i)
        for (int j = 0; j < g.nx; ++j)
            if (window.contains(g.t(i), g.x(j))) pts.insert(pts.end(), f.at(i, j), f.at(i, j) + f.dim());
    return pts;
}

// ---------------------------------------------------------------------------
// Output files

struct AggregateRow {
    std::string name;
    double value = 0, stderr_ = 0;
    std::size_t n = 0;
};

inline std::ofstream open_out(const std::string& path) {
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os.precision(10);
    return os;
}

inline void write_aggregate(const std::string& path, const std::vector<AggregateRow>& rows) {
    auto os = open_out(path);
    os << "name,value,stderr,n\n";
    for (auto& r : rows) os << r.name << ',' << r.value << ',' << r.stderr_ << ',' << r.n << '\n';
}

// kind=point rows carry the exceedance curve, kind=fit rows the fitted line
// log p = intercept + slope * lambda^2 * scale.
inline void write_tails(const std::string& path, const std::vector<TailSeries>& series) {
    auto os = open_out(path);
    os << "#schema=tails/1\n";
    os << "kind,series,rho,lambda,p_hat,ci_lo,ci_hi,slope,intercept,r2,scale,n\n";
    for (auto& s : series) {
        std::string id = "rho=" + std::to_string(s.rho);
        auto& f = s.fit;
        for (std::size_t i = 0; i < f.lambda.size(); ++i)
            os << "point," << id << ',' << s.rho << ',' << f.lambda[i] << ',' << f.p_hat[i] << ',' << f.ci_lo[i] << ','
               << f.ci_hi[i] << ",,,,," << f.n << '\n';
        os << "fit," << id << ',' << s.rho << ",,,,," << f.slope << ',' << f.intercept << ',' << f.r2 << ',' << f.scale
           << ',' << f.n << '\n';
    }
}

inline void write_hits(const std::string& path, const HitScan& H) {
    auto os = open_out(path);
    os << "#schema=hits/1\n";
    os << "d,z_id,eps,p_hat,ci_lo,ci_hi,hits,trials\n";
    for (std::size_t zi = 0; zi < H.z_list.size(); ++zi)
        for (std::size_t a = 0; a < H.d_list.size(); ++a)
            for (std::size_t e = 0; e < H.eps.size(); ++e) {
                auto& p = H.p[zi][a][e];
                os << H.d_list[a] << ',' << zi << ',' << H.eps[e] << ',' << p.p << ',' << p.lo << ',' << p.hi << ','
                   << p.hits << ',' << H.trials << '\n';
            }
}

inline void write_frames(const std::string& path, const std::vector<FrameRecord>& recs) {
    auto os = open_out(path);
    os << "#schema=frames/1\n";
    os << "replicate,t0,x0,rho,osc_N0,osc_N1,osc_N2,sup_N2,sup_N2a,osc_u_hat,osc_v1_hat,osc_E,osc_w,osc_u_tilde,"
          "ratio_N1,ratio_N2_sup,ratio_u_hat,ratio_v1_hat,reconstruction_residual,max_abs_u_tilde,split_residual,"
          "frozen_modulus_ratio,triggered\n";
    for (auto& r : recs) {
        auto& o = r.osc;
        os << r.replicate << ',' << r.frame.t0 << ',' << r.frame.x0 << ',' << r.frame.rho << ',' << o.N0 << ',' << o.N1
           << ',' << o.N2 << ',' << o.N2_sup << ',' << o.N2a_sup << ',' << o.u_hat << ',' << o.v1_hat << ',' << o.E << ','
           << o.w << ',' << o.u_tilde << ',' << o.ratio(o.N1) << ',' << o.ratio(o.N2_sup) << ',' << o.ratio(o.u_hat) << ','
           << o.ratio(o.v1_hat) << ',' << r.reconstruction_residual << ',' << r.max_abs_u_tilde << ','
           << r.split_residual << ',' << r.frozen_modulus_ratio << ',' << int(r.triggered) << '\n';
    }
}

inline void write_windows(const std::string& path, const std::vector<WindowRecord>& recs,
                          const std::vector<ParabolicPoint>& probes) {
    auto os = open_out(path);
    os << "#schema=windows/1\n";
    os << "q,probe,t0,x0,draw,found,ell,statistic\n";
    for (auto& r : recs)
        os << r.q << ',' << r.probe << ',' << probes[std::size_t(r.probe)].t << ',' << probes[std::size_t(r.probe)].x
           << ',' << r.draw << ',' << int(r.found) << ',' << r.ell << ',' << r.statistic << '\n';
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
}

inline nlohmann::json cover_summary(const std::vector<CoverOutcome>& outs, bool with_rects) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto& o : outs) {
        auto j = to_json(o.report);
        if (!with_rects) j.erase("rects");
        j["draw"] = o.draw;
        j["violations"] = o.violations;
        arr.push_back(j);
    }
    return arr;
}

}  // namespace shelab
