#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "shelab/stopping.hpp"

using namespace shelab;

namespace {

FieldPath sample_path(std::uint64_t stream, int d = 2) {
    auto g = SpaceTimeGrid::centered(1.0, 2.0, 1.0 / 16, 0.25);
    return solve_fd(SigmaFunction::identity(d), InitialCondition::zero(d), generate(g, d, 99, stream));
}

StoppingConfig window() {
    StoppingConfig c;
    c.T0 = 1.0;
    c.x_half = 1.5;
    c.t_start = 0.5;
    return c;
}

// Direct loop over the strided window, no blocks or tables.
double naive_max_ratio(const FieldPath& u, const StoppingConfig& c) {
    const auto& g = u.grid();
    int s = c.stride;
    std::vector<int> is, js;
    for (int i = 0; i <= g.nt; ++i)
        if (g.t(i) >= c.t_start - 1e-12 && g.t(i) <= c.T0 + 1e-12) is.push_back(i);
    for (int j = 0; j < g.nx; ++j)
        if (std::abs(g.x(j)) <= c.x_half + 1e-12) js.push_back(j);
    double best = 0;
    for (std::size_t a = 0; a < is.size(); a += std::size_t(s))
        for (std::size_t a2 = 0; a2 <= a; a2 += std::size_t(s)) {
            double dt = g.t(is[a]) - g.t(is[a2]);
            if (std::pow(dt, 0.25) > c.cap) continue;
            for (std::size_t b = 0; b < js.size(); b += std::size_t(s))
                for (std::size_t b2 = 0; b2 < js.size(); b2 += std::size_t(s)) {
                    if (a == a2 && b == b2) continue;
                    double D = delta_metric(dt, g.x(js[b]) - g.x(js[b2]));
                    if (D > c.cap) continue;
                    double e = 0;
                    for (int k = 0; k < u.dim(); ++k) e += std::pow(u.at(is[a], js[b])[k] - u.at(is[a2], js[b2])[k], 2);
                    best = std::max(best, std::sqrt(e) / std::pow(D, 1 - c.delta));
                }
        }
    return best;
}

}  // namespace

TEST(Modulus, PrunedScanMatchesNaiveLoop) {
    for (std::uint64_t r : {0u, 1u, 2u}) {
        auto u = sample_path(r);
        auto c = window();
        double naive = naive_max_ratio(u, c);
        EXPECT_DOUBLE_EQ(max_modulus_ratio(u, c), naive);
        EXPECT_DOUBLE_EQ(max_modulus_ratio_bruteforce(u, c), naive);
    }
}

TEST(Modulus, StrideOneMatchesNaiveLoop) {
    auto u = sample_path(5, 1);
    auto c = window();
    c.stride = 1;
    c.T0 = 0.6;
    EXPECT_DOUBLE_EQ(max_modulus_ratio(u, c), naive_max_ratio(u, c));
}

TEST(Tau1, ThresholdIsTheMaxRatio) {
    auto u = sample_path(3);
    auto c = window();
    Witness arg;
    double m = max_modulus_ratio(u, c, &arg);
    c.K = m * (1 + 1e-9);
    auto quiet = tau1(u, c);
    EXPECT_FALSE(quiet.triggered);
    EXPECT_EQ(quiet.index, u.i_end());
    c.K = m * (1 - 1e-9);
    auto hit = tau1(u, c);
    ASSERT_TRUE(hit.triggered);
    EXPECT_GE(hit.witness.lhs, hit.witness.rhs);
    EXPECT_LE(hit.witness.q.t, hit.witness.p.t);
    EXPECT_LE(delta_metric(hit.witness.p, hit.witness.q), c.cap + 1e-12);
    EXPECT_DOUBLE_EQ(hit.tau, u.grid().t(hit.index));
    // before the stopping level the modulus holds; at it, it fails
    EXPECT_EQ(clipped_modulus_violations(u, c, hit.clip_index), 0u);
    EXPECT_GT(clipped_modulus_violations(u, c, hit.index), 0u);
    EXPECT_LE(hit.tau, arg.p.t);
}

TEST(Tau1, MonotoneInK) {
    auto u = sample_path(4);
    auto c = window();
    double m = max_modulus_ratio(u, c);
    double prev = 0;
    for (double f : {0.3, 0.5, 0.7, 0.9, 0.99}) {
        c.K = f * m;
        auto s = tau1(u, c);
        EXPECT_TRUE(s.triggered);
        EXPECT_GE(s.tau, prev);
        prev = s.tau;
    }
}

TEST(Tau1, WindowMustBeCovered) {
    auto u = sample_path(0);
    auto c = window();
    c.x_half = 3.0;
    EXPECT_THROW(tau1(u, c), GridError);
    c = window();
    c.t_start = 1.5;
    EXPECT_THROW(tau1(u, c), GridError);
    c = window();
    c.delta = 1.0;
    EXPECT_THROW(tau1(u, c), ConfigError);
}

TEST(TauGrowth, FirstCrossingOfLinearEnvelope) {
    auto g = SpaceTimeGrid::centered(1.0, 2.0, 1.0 / 16, 0.25);
    FieldPath f(g, 1, 0, g.nt, "ramp");
    // f(t,x) = 4t at x = 1, zero elsewhere: crosses K(1+|x|) = 2K at t = K/2
    int j = g.space_index(1.0);
    for (int i = 0; i <= g.nt; ++i) f.at(i, j)[0] = 4 * g.t(i);
    auto s = tau_growth(f, 1.0);
    ASSERT_TRUE(s.triggered);
    EXPECT_DOUBLE_EQ(s.tau, 0.5);
    EXPECT_EQ(s.clip_index, s.index - 1);
    EXPECT_DOUBLE_EQ(s.witness.rhs, 2.0);
    EXPECT_FALSE(tau_growth(f, 2.1).triggered);
    EXPECT_DOUBLE_EQ(tau_growth(f, 2.1).tau, 1.0);
}

TEST(EstimateZ, PrefixPropertyAndLowerBound) {
    auto u = sample_path(6);
    auto c = window();
    c.stride = 1;
    auto a = estimate_Z(u, c.delta, 2000, 17, c);
    auto b = estimate_Z(u, c.delta, 20000, 17, c);
    EXPECT_LE(a.Z_hat, b.Z_hat);
    EXPECT_GT(a.Z_hat, 0.0);
    // uniform pairs can exceed the cap, so only the local half is bounded by
    // the capped scan; the global value is at least the sample maximum of
    // those. Check the witness is consistent instead.
    EXPECT_NEAR(b.arg.lhs / b.arg.rhs, b.Z_hat, 1e-12);
    EXPECT_THROW(estimate_Z(u, c.delta, 0, 1, c), DomainError);
}
