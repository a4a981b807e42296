#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "shelab/experiments.hpp"

using namespace shelab;
using nlohmann::json;

namespace {

ExperimentConfig small_config() {
    auto c = config_from_json(json::parse(R"({
        "scenario": "nonlinear", "d": 2,
        "grid": {"T0": 1.5625, "X": 2, "dx": 0.0625, "ratio": 0.25},
        "replicates": 6, "seed": 11, "threads": 1,
        "frames": [{"t0": 1.5, "x0": 0.5, "rho": 0.3}]
    })"));
    return c;
}

std::string first_line(const std::string& path) {
    std::ifstream is(path);
    std::string s;
    std::getline(is, s);
    return s;
}

}  // namespace

TEST(Config, ScenarioDefaultsAndOverrides) {
    auto c = small_config();
    EXPECT_EQ(c.sigma.kind, "bounded_sine");
    EXPECT_NEAR(c.gauge.sigma1, std::sqrt(2.0), 1e-15);
    EXPECT_EQ(c.frames.size(), 1u);
    EXPECT_DOUBLE_EQ(c.stopping().T0, 1.5625);
    EXPECT_EQ(c.make_grid().nx, 65);
    auto d = scenario_defaults("deterministic");
    EXPECT_EQ(d.d, 1);
    EXPECT_EQ(d.make_sigma().kind(), SigmaFunction::Kind::zero);
}

TEST(Config, JsonRoundTrip) {
    auto c = small_config();
    auto j = to_json(c);
    EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, StrictValidation) {
    auto bad = [](const char* text) { return config_from_json(json::parse(text)); };
    EXPECT_THROW(bad(R"({"colour": 1})"), ConfigError);
    EXPECT_THROW(bad(R"({"grid": {"dt": 0.1}})"), ConfigError);
    EXPECT_THROW(bad(R"({"d": "two"})"), ConfigError);
    EXPECT_THROW(bad(R"({"scenario": "chaotic"})"), ConfigError);
    EXPECT_THROW(bad(R"({"sigma": {"kind": "cubic"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"decomposition": {"alpha": 0.7}})"), ConfigError);
    EXPECT_THROW(bad(R"({"ladder": {"q_min": 1}})"), ConfigError);
    EXPECT_THROW(bad(R"({"grid": {"X": 1.01}})"), ConfigError);
    EXPECT_THROW(bad(R"({"u0": {"kind": "bump", "amp": [1, 2, 3]}})"), ConfigError);
    EXPECT_THROW(bad(R"({"eps_grid": [0.1, -1]})"), ConfigError);
    EXPECT_THROW(bad(R"({"z_list": []})"), ConfigError);
    EXPECT_THROW(bad(R"({"frames": [{"t": 1}]})"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
    auto path = (std::filesystem::temp_directory_path() / "shelab_bad_config.json").string();
    std::ofstream(path) << "{ not json";
    EXPECT_THROW(load_config(path), ConfigError);
    std::filesystem::remove(path);
}

TEST(Replicates, IndependentOfThreadCount) {
    auto c = small_config();
    auto a = simulate(c, 1.0, 0.0);
    c.threads = 3;
    auto b = simulate(c, 1.0, 0.0);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
        EXPECT_EQ(a[r].u_probe, b[r].u_probe);
        EXPECT_EQ(a[r].max_modulus_ratio, b[r].max_modulus_ratio);
        EXPECT_EQ(a[r].tau1, b[r].tau1);
    }
    EXPECT_NE(a[0].u_probe, a[1].u_probe);
    EXPECT_THROW(simulate(c, 9.0, 0.0), DomainError);
}

TEST(Replicates, ExceptionsPropagateFromWorkers) {
    EXPECT_THROW(parallel_for(20, [](int i) { if (i == 13) throw NumericalError("boom"); }, 4), NumericalError);
}

TEST(Replicates, CalibratedKLeavesTheQuantileUntriggered) {
    auto c = small_config();
    c.replicates = 10;
    c.stopping().K = calibrate_K(c, 10, 1.0);
    // the calibration draws use their own streams; with K at their maximum
    // and the same streams, nothing triggers
    auto recs = simulate(c, 1.0, 0.0, calibration_stream);
    for (auto& r : recs) EXPECT_LT(r.max_modulus_ratio, c.stopping().K * (1 + 1e-12));
    EXPECT_LE(calibrate_K(c, 10, 0.5), c.stopping().K);
}

TEST(Frames, RecordsCarryTheDecomposition) {
    auto c = small_config();
    c.stopping().K = 1e6;
    auto recs = decompose_frames(c);
    ASSERT_EQ(recs.size(), 6u);
    for (auto& r : recs) {
        EXPECT_LT(r.reconstruction_residual, 1e-12 * std::max(1.0, r.max_abs_u_tilde));
        EXPECT_GT(r.osc.N0, 0.0);
        EXPECT_FALSE(r.triggered);
    }
    c.frames.clear();
    EXPECT_THROW(decompose_frames(c), ConfigError);
}

TEST(Windows, FoundExactlyWhenStatisticIsBelowThreshold) {
    auto probes = probe_centres();
    probes.resize(2);
    double sigma1 = 1.3, Kt = 2.0;
    auto recs = window_experiment(4, 2, 40, 5, sigma1, Kt, probes);
    ASSERT_EQ(recs.size(), 80u);
    for (auto& r : recs) EXPECT_EQ(r.found, r.statistic <= 2 * sigma1 * Kt) << r.statistic;
    double K = calibrate_K_tilde(4, 2, 200, 5, probes, sigma1);
    std::size_t hits = 0;
    auto cal = window_experiment(4, 2, 200, 5, sigma1, K, probes);
    for (auto& r : cal) hits += r.found;
    // quantile calibration: the hit fraction is 1 - exp(-2) up to ties
    EXPECT_NEAR(double(hits) / double(cal.size()), 1 - std::exp(-2.0), 0.01);
}

TEST(Covers, ExactSamplesAreCovered) {
    GaugeConfig g;
    g.K_tilde = 1.0;
    g.sigma1 = std::sqrt(2.0);
    auto outs = cover_experiment(3, 2, 4, 9, g);
    ASSERT_EQ(outs.size(), 4u);
    for (auto& o : outs) {
        EXPECT_EQ(o.violations, 0u);
        EXPECT_GT(o.report.n_good, 0);
        EXPECT_TRUE(o.report.residual_centres.empty());
    }
    auto j = cover_summary(outs, false);
    EXPECT_FALSE(j[0].contains("rects"));
    EXPECT_EQ(j[0]["violations"], 0);
}

TEST(Tails, SeriesShape) {
    std::vector<double> mu{0.5, 1.0, 1.5, 2.0, 2.5};
    auto t = oscillation_tail({1.5, 0.5}, 0.25, 1, 600, 3, mu);
    EXPECT_EQ(t.samples.size(), 600u);
    EXPECT_EQ(t.fit.lambda.size(), mu.size());
    EXPECT_NEAR(t.fit.scale, 1 / std::sqrt(2.0), 1e-15);
    EXPECT_LT(t.fit.slope, 0.0);
}

TEST(Hitting, NestedCoordinatesMakeHitsMonotoneInD) {
    auto c = config_from_json(json::parse(R"({
        "d": 1, "grid": {"T0": 2, "X": 2, "dx": 0.125, "ratio": 0.25},
        "replicates": 40, "seed": 3, "threads": 1,
        "d_list": [1, 2, 3, 5], "z_list": [[0], [0.5, 0, 0]],
        "eps_grid": [0.05, 0.1, 0.2, 0.4, 0.8]
    })"));
    auto H = hitting_scan(c);
    ASSERT_EQ(H.z_list.size(), 2u);
    EXPECT_EQ(H.z_list[1].size(), 5u);
    for (std::size_t z = 0; z < 2; ++z)
        for (int r = 0; r < 40; ++r)
            for (std::size_t a = 1; a < 4; ++a) EXPECT_GE(H.min_dist[z][a][std::size_t(r)], H.min_dist[z][a - 1][std::size_t(r)]);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t e = 0; e < H.eps.size(); ++e)
            for (std::size_t a = 1; a < 4; ++a) EXPECT_LE(H.p[z][a][e].p, H.p[z][a - 1][e].p);
    // d = 1 at the origin: the scalar path crosses zero
    EXPECT_EQ(H.p[0][0][0].p, 1.0);
    c.z_list = {{1, 2, 3, 4, 5, 6}};
    EXPECT_THROW(hitting_scan(c), ConfigError);
}

TEST(Output, SchemaHeaders) {
    auto dir = std::filesystem::temp_directory_path() / "shelab_out_test";
    std::filesystem::remove_all(dir);
    auto p = [&](const char* f) { return (dir / "nested" / f).string(); };
    std::vector<double> mu{0.5, 1.0, 1.5, 2.0};
    write_tails(p("tails.csv"), {oscillation_tail({1.5, 0.5}, 0.25, 1, 500, 3, mu)});
    EXPECT_EQ(first_line(p("tails.csv")), "#schema=tails/1");
    auto c = config_from_json(json::parse(R"({"d": 1, "grid": {"T0": 2, "X": 1, "dx": 0.25, "ratio": 0.25},
        "replicates": 5, "d_list": [1, 2], "eps_grid": [0.1, 0.5], "threads": 1})"));
    write_hits(p("hits.csv"), hitting_scan(c));
    EXPECT_EQ(first_line(p("hits.csv")), "#schema=hits/1");
    write_frames(p("frames.csv"), {});
    EXPECT_EQ(first_line(p("frames.csv")), "#schema=frames/1");
    write_windows(p("windows.csv"), {}, {});
    EXPECT_EQ(first_line(p("windows.csv")), "#schema=windows/1");
    write_aggregate(p("aggregate.csv"), {{"x", 1.0, 0.1, 3}});
    EXPECT_EQ(first_line(p("aggregate.csv")), "name,value,stderr,n");
    std::ifstream hits(p("hits.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(hits, line)) ++rows;
    EXPECT_EQ(rows, 2 + 2 * 2);
    std::filesystem::remove_all(dir);
}

TEST(Range, PointsInsideTheWindow) {
    auto g = SpaceTimeGrid::centered(2.0, 2.0, 0.25, 0.25);
    FieldPath f(g, 3, 0, g.nt, "f");
    auto pts = range_points(f, unit_window);
    // t levels 1..2 at dt = 1/64 (65 levels), x = 0, .25, .., 1 (5 columns)
    EXPECT_EQ(pts.size(), std::size_t(65 * 5 * 3));
}
