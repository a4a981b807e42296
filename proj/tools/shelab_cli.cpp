// shelab: Monte Carlo driver. Every subcommand reads one JSON config and
// writes its outputs under --out.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shelab/experiments.hpp"

using namespace shelab;

namespace {

struct Common {
    std::string config;
    std::string out;
    long long seed = -1;
    int replicates = 0;
    int threads = -1;
};

ExperimentConfig load(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? scenario_defaults("linear") : load_config(c.config);
    if (c.seed >= 0) cfg.seed = std::uint64_t(c.seed);
    if (c.replicates > 0) cfg.replicates = c.replicates;
    if (!c.out.empty()) cfg.out = c.out;
    if (c.threads >= 0) cfg.threads = c.threads;
    cfg.validate();
    return cfg;
}

std::string at(const ExperimentConfig& c, const std::string& name) { return (std::filesystem::path(c.out) / name).string(); }

AggregateRow proportion_row(const std::string& name, std::size_t k, std::size_t n) {
    auto p = wilson(k, n);
    return {name, p.p, p.se(), n};
}

void log(const std::string& s) { std::cerr << "[shelab] " << s << '\n'; }

// -- simulate ----------------------------------------------------------------

int cmd_simulate(const Common& cm, bool no_stops, bool dump, double t_probe, double x_probe) {
    auto c = load(cm);
    auto recs = simulate(c, t_probe, x_probe, 0, !no_stops);
    auto os = open_out(at(c, "replicates.csv"));
    os << "replicate";
    for (int k = 0; k < c.d; ++k) os << ",u_" << k + 1;
    os << ",max_modulus_ratio,tau1,tau2,tau3,triggered\n";
    for (auto& r : recs) {
        os << r.replicate;
        for (double v : r.u_probe) os << ',' << v;
        os << ',' << r.max_modulus_ratio << ',' << r.tau1 << ',' << r.tau2 << ',' << r.tau3 << ',' << int(r.triggered)
           << '\n';
    }
    std::vector<AggregateRow> rows;
    for (int k = 0; k < c.d; ++k) {
        std::vector<double> v;
        for (auto& r : recs) v.push_back(r.u_probe[std::size_t(k)]);
        auto mv = mean_var(v);
        auto ve = variance_with_se(v);
        rows.push_back({"mean_u_" + std::to_string(k + 1), mv.mean, std::sqrt(mv.var / double(v.size())), v.size()});
        rows.push_back({"var_u_" + std::to_string(k + 1), ve.var, ve.se, v.size()});
    }
    if (!no_stops) {
        std::size_t trig = 0;
        std::vector<double> m;
        for (auto& r : recs) trig += r.triggered, m.push_back(r.max_modulus_ratio);
        rows.push_back(proportion_row("stops_triggered", trig, recs.size()));
        rows.push_back({"median_max_modulus_ratio", median(m), 0, m.size()});
    }
    write_aggregate(at(c, "aggregate.csv"), rows);
    if (dump) {
        auto g = c.make_grid();
        auto n = generate(g, c.d, c.seed, 0);
        auto u = solve_fd(c.make_sigma(), c.make_u0(), n);
        dump_noise(at(c, "noise_r0.bin"), n);
        dump_field(at(c, "u_r0.bin"), u);
        std::vector<int> times;
        for (int s = 0; s <= 8; ++s) times.push_back(g.nt * s / 8);
        write_slices_csv(at(c, "slices_r0.csv"), u, times);
    }
    log("simulate: " + std::to_string(recs.size()) + " replicates -> " + c.out);
    return 0;
}

// -- decompose ---------------------------------------------------------------

std::vector<AggregateRow> frame_rows(const std::vector<FrameRecord>& recs) {
    std::vector<double> rhos;
    for (auto& r : recs)
        if (std::find(rhos.begin(), rhos.end(), r.frame.rho) == rhos.end()) rhos.push_back(r.frame.rho);
    std::vector<AggregateRow> rows;
    double worst = 0;
    for (auto& r : recs)
        if (!r.triggered && r.max_abs_u_tilde > 0) worst = std::max(worst, r.reconstruction_residual / r.max_abs_u_tilde);
    rows.push_back({"max_relative_reconstruction_residual", worst, 0, recs.size()});
    for (double rho : rhos) {
        std::vector<double> a, b, e, f;
        for (auto& r : recs)
            if (r.frame.rho == rho) {
                a.push_back(r.osc.ratio(r.osc.N1));
                b.push_back(r.osc.ratio(r.osc.N2_sup));
                e.push_back(r.osc.ratio(r.osc.u_hat));
                f.push_back(r.osc.ratio(r.osc.v1_hat));
            }
        std::string s = "rho=" + std::to_string(rho);
        rows.push_back({"median_ratio_N1[" + s + "]", median(a), 0, a.size()});
        rows.push_back({"median_ratio_N2_sup[" + s + "]", median(b), 0, b.size()});
        rows.push_back({"median_ratio_u_hat[" + s + "]", median(e), 0, e.size()});
        rows.push_back({"median_ratio_v1_hat[" + s + "]", median(f), 0, f.size()});
    }
    return rows;
}

int cmd_decompose(const Common& cm) {
    auto c = load(cm);
    auto recs = decompose_frames(c);
    write_frames(at(c, "frames.csv"), recs);
    write_aggregate(at(c, "aggregate.csv"), frame_rows(recs));
    log("decompose: " + std::to_string(recs.size()) + " frame records -> " + c.out);
    return 0;
}

// -- window ------------------------------------------------------------------

int cmd_window(const Common& cm) {
    auto c = load(cm);
    auto probes = probe_centres();
    std::vector<WindowRecord> all;
    std::vector<AggregateRow> rows;
    for (int q = c.q_min; q <= c.q_max; ++q) {
        auto recs = window_experiment(q, c.d, c.replicates, c.seed, c.gauge.sigma1, c.gauge.K_tilde, probes);
        std::size_t found = 0;
        for (auto& r : recs) found += r.found;
        rows.push_back(proportion_row("found_frequency[q=" + std::to_string(q) + "]", found, recs.size()));
        rows.push_back({"target[q=" + std::to_string(q) + "]", 1 - 2 * std::exp(-std::sqrt(double(q))), 0, 0});
        all.insert(all.end(), recs.begin(), recs.end());
    }
    write_windows(at(c, "windows.csv"), all, probes);
    write_aggregate(at(c, "aggregate.csv"), rows);
    log("window: " + std::to_string(all.size()) + " searches -> " + c.out);
    return 0;
}

// -- cover -------------------------------------------------------------------

std::vector<AggregateRow> cover_rows(const std::vector<std::vector<CoverOutcome>>& per_q) {
    std::vector<AggregateRow> rows;
    for (auto& outs : per_q) {
        if (outs.empty()) continue;
        std::string s = "[q=" + std::to_string(outs.front().q) + "]";
        std::vector<double> r6, ga;
        std::size_t viol = 0, ok = 0, small = 0;
        for (auto& o : outs) {
            r6.push_back(o.report.sum_r6_R0);
            ga.push_back(o.report.good_area_fraction);
            viol += o.violations;
            small += o.report.all_radii_le_quarter();
            ok += o.report.sum_inequality_ok;
        }
        rows.push_back({"median_sum_r6_R0" + s, median(r6), 0, r6.size()});
        rows.push_back({"median_good_area_fraction" + s, median(ga), 0, ga.size()});
        rows.push_back({"range_cover_violations" + s, double(viol), 0, outs.size()});
        rows.push_back(proportion_row("reports_with_radii_le_quarter" + s, small, outs.size()));
        rows.push_back(proportion_row("sum_inequality_holds" + s, ok, outs.size()));
    }
    return rows;
}

int cmd_cover(const Common& cm, bool rects) {
    auto c = load(cm);
    std::vector<std::vector<CoverOutcome>> per_q;
    nlohmann::json j = nlohmann::json::array();
    for (int q = c.q_min; q <= c.q_max; ++q) {
        per_q.push_back(cover_experiment(q, c.d, c.replicates, c.seed, c.gauge));
        for (auto& e : cover_summary(per_q.back(), rects)) j.push_back(e);
    }
    write_json(at(c, "cover.json"), {{"schema", "cover/1"}, {"reports", j}});
    write_aggregate(at(c, "aggregate.csv"), cover_rows(per_q));
    log("cover: q in [" + std::to_string(c.q_min) + ", " + std::to_string(c.q_max) + "] -> " + c.out);
    return 0;
}

// -- hit ---------------------------------------------------------------------

int cmd_hit(const Common& cm) {
    auto c = load(cm);
    auto H = hitting_scan(c);
    write_hits(at(c, "hits.csv"), H);
    std::vector<AggregateRow> rows;
    for (std::size_t z = 0; z < H.z_list.size(); ++z)
        for (std::size_t a = 0; a < H.d_list.size(); ++a) {
            std::string s = "[d=" + std::to_string(H.d_list[a]) + ",z=" + std::to_string(z) + "]";
            try {
                auto f = hit_slope(H, z, a);
                rows.push_back({"loglog_slope" + s, f.slope, f.slope_se, H.eps.size()});
            } catch (const NumericalError&) {
                rows.push_back({"loglog_slope" + s, std::nan(""), 0, 0});
            }
        }
    write_aggregate(at(c, "aggregate.csv"), rows);
    log("hit: " + std::to_string(H.trials) + " trials per d -> " + c.out);
    return 0;
}

// -- tails -------------------------------------------------------------------

std::vector<double> mu_grid(const ExperimentConfig& c) {
    std::vector<double> g = c.lambda_grid;
    if (g.empty())
        for (int i = 0; i < 12; ++i) g.push_back(2.0 + 0.25 * i);
    std::erase_if(g, [&](double v) { return v < c.lambda0; });
    return g;
}

std::vector<TailSeries> run_tails(const ExperimentConfig& c, std::vector<double> rhos) {
    if (rhos.empty()) rhos = {0.5, 0.35, 0.25};
    auto grid = mu_grid(c);
    std::vector<TailSeries> out;
    for (std::size_t k = 0; k < rhos.size(); ++k)
        out.push_back(oscillation_tail({1.5, 0.5}, rhos[k], 1, c.replicates, c.seed + k, grid));
    return out;
}

int cmd_tails(const Common& cm) {
    auto c = load(cm);
    std::vector<double> rhos;
    for (auto& f : c.frames) rhos.push_back(f.rho);
    auto series = run_tails(c, rhos);
    write_tails(at(c, "tails.csv"), series);
    std::vector<AggregateRow> rows;
    for (auto& s : series) {
        std::string id = "[rho=" + std::to_string(s.rho) + "]";
        rows.push_back({"C1" + id, s.fit.C1, 0, s.fit.n});
        rows.push_back({"r2" + id, s.fit.r2, 0, s.fit.n});
    }
    write_aggregate(at(c, "aggregate.csv"), rows);
    log("tails: " + std::to_string(series.size()) + " series -> " + c.out);
    return 0;
}

// -- calibrate ---------------------------------------------------------------

int cmd_calibrate(const Common& cm, int q) {
    auto c = load(cm);
    nlohmann::json j;
    double K = calibrate_K(c, c.replicates);
    double Kt = calibrate_K_tilde(q, c.d, c.replicates, c.seed, probe_centres(), c.gauge.sigma1);
    j["K"] = K;
    j["K_quantile"] = 0.95;
    j["K_tilde"] = Kt;
    j["K_tilde_q"] = q;
    j["K_tilde_quantile"] = 1 - std::exp(-std::sqrt(double(q)));
    j["replicates"] = c.replicates;
    j["seed"] = c.seed;
    write_json(at(c, "calibration.json"), j);
    write_aggregate(at(c, "aggregate.csv"),
                    {{"K", K, 0, std::size_t(c.replicates)}, {"K_tilde", Kt, 0, std::size_t(c.replicates) * 9}});
    log("calibrate: K=" + std::to_string(K) + " K_tilde=" + std::to_string(Kt));
    return 0;
}

// -- report-data -------------------------------------------------------------
// Small versions of every feed the plotting component reads.

int cmd_report_data(const Common& cm) {
    auto c = load(cm);
    std::vector<AggregateRow> rows;

    auto tc = c;
    tc.replicates = std::max(500, c.replicates);
    write_tails(at(c, "tails.csv"), run_tails(tc, {}));

    auto dc = scenario_defaults("nonlinear");
    dc.seed = c.seed, dc.threads = c.threads, dc.replicates = std::min(c.replicates, 40);
    dc.gauge.sigma1 = dc.make_sigma().sigma1();
    auto frames = decompose_frames(dc);
    write_frames(at(c, "frames.csv"), frames);
    for (auto& r : frame_rows(frames)) rows.push_back(r);

    auto gc = c.gauge;
    gc.sigma1 = std::sqrt(2.0);
    std::vector<std::vector<CoverOutcome>> per_q;
    nlohmann::json cj = nlohmann::json::array();
    for (int q = c.q_min; q <= c.q_max; ++q) {
        per_q.push_back(cover_experiment(q, 2, std::min(c.replicates, 50), c.seed, gc));
        for (auto& e : cover_summary(per_q.back(), false)) cj.push_back(e);
    }
    write_json(at(c, "cover.json"), {{"schema", "cover/1"}, {"reports", cj}});
    for (auto& r : cover_rows(per_q)) rows.push_back(r);

    auto hc = c;
    hc.grid = {2, 3, 1.0 / 16, 0.25};
    hc.replicates = std::min(c.replicates, 200);
    if (hc.eps_grid.empty())
        for (double e = 0.005; e < 3; e *= 1.25) hc.eps_grid.push_back(e);
    if (hc.z_list.size() == 1 && hc.z_list[0] == std::vector<double>{0.0}) hc.z_list = {{0.0}, {1.0}};
    write_hits(at(c, "hits.csv"), hitting_scan(hc));

    auto os = open_out(at(c, "dims.csv"));
    os << "#schema=dims/1\n";
    os << "d,slope,slope_se,r2,points\n";
    auto g = SpaceTimeGrid::centered(2, 3, 1.0 / 32, 0.25);
    for (int d : c.d_list) {
        auto u = solve_additive(InitialCondition::zero(d), generate(g, d, c.seed, 7));
        auto pts = range_points(u, unit_window);
        auto B = box_dimension(pts, d, {0.4, 0.2, 0.1, 0.05});
        os << d << ',' << B.slope << ',' << B.slope_se << ',' << B.r2 << ',' << pts.size() / std::size_t(d) << '\n';
    }
    write_aggregate(at(c, "aggregate.csv"), rows);
    write_json(at(c, "config.json"), to_json(c));
    log("report-data -> " + c.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"shelab: stochastic heat equation laboratory"};
    app.require_subcommand(1);
    Common cm;
    auto common = [&](CLI::App* s) {
        s->add_option("-c,--config", cm.config, "JSON config file")->check(CLI::ExistingFile);
        s->add_option("--seed", cm.seed, "base seed (overrides the config)");
        s->add_option("--replicates", cm.replicates, "replicate count (overrides the config)");
        s->add_option("--out", cm.out, "output directory");
        s->add_option("--threads", cm.threads, "worker threads, 0 = all cores");
    };

    bool no_stops = false, dump = false, rects = false;
    double t_probe = 1.0, x_probe = 0.0;
    int q_cal = 5;

    auto* sim = app.add_subcommand("simulate", "replicate paths, probe values and stopping times");
    common(sim);
    sim->add_flag("--no-stops", no_stops, "skip the stopping-time scans");
    sim->add_flag("--dump", dump, "write binary dumps of replicate 0");
    sim->add_option("--t-probe", t_probe, "probe time");
    sim->add_option("--x-probe", x_probe, "probe position");
    auto* dec = app.add_subcommand("decompose", "local decomposition at the configured frames");
    common(dec);
    auto* win = app.add_subcommand("window", "window search on exact ladder samples");
    common(win);
    auto* cov = app.add_subcommand("cover", "good-rectangle covers of exact lattice samples");
    common(cov);
    cov->add_flag("--rects", rects, "include every rectangle in cover.json");
    auto* hit = app.add_subcommand("hit", "hitting probabilities across d");
    common(hit);
    auto* tails = app.add_subcommand("tails", "oscillation tail fits");
    common(tails);
    auto* cal = app.add_subcommand("calibrate", "calibrate K and K_tilde");
    common(cal);
    cal->add_option("--q", q_cal, "ladder q for K_tilde");
    auto* rep = app.add_subcommand("report-data", "write every plotting input at small scale");
    common(rep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sim) return cmd_simulate(cm, no_stops, dump, t_probe, x_probe);
        if (*dec) return cmd_decompose(cm);
        if (*win) return cmd_window(cm);
        if (*cov) return cmd_cover(cm, rects);
        if (*hit) return cmd_hit(cm);
        if (*tails) return cmd_tails(cm);
        if (*cal) return cmd_calibrate(cm, q_cal);
        if (*rep) return cmd_report_data(cm);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const GridError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
