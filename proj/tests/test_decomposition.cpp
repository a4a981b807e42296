#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "shelab/decomposition.hpp"

using namespace shelab;

namespace {

SpaceTimeGrid grid() { return SpaceTimeGrid::centered(1.5625, 2.0, 1.0 / 16, 0.25); }

DecompositionConfig quiet_config() {
    DecompositionConfig c;
    c.stopping.K = 1e6;  // no stop triggers
    return c;
}

}  // namespace

TEST(Frame, WorkedExamples) {
    DecompositionConfig c;
    c.alpha = 0.6;
    c.beta = 0.65;
    auto f = build_frame(1.5, 0.5, 0.5, c);
    // 1.5 - 1/16 - 2^{-1.6} and 1/4 + 2^{-0.7}
    EXPECT_NEAR(f.t0_minus, 1.10762302231, 1e-10);
    EXPECT_NEAR(f.L1, 0.86557220667, 1e-10);
    EXPECT_DOUBLE_EQ(f.R_plus.t_hi, 1.5625);
    EXPECT_DOUBLE_EQ(f.R_plus.x_lo, 0.5 - f.L1);
    // smaller rho: both margins shrink but stay much wider than R_rho
    auto s = build_frame(1.5, 0.5, 0.1, c);
    EXPECT_GT(s.t0_minus, f.t0_minus);
    EXPECT_GT(1.5 - s.t0_minus, 100 * s.R_rho.t_half());
    EXPECT_GT(s.L1, 10 * s.R_rho.x_half());
}

TEST(Frame, Validation) {
    DecompositionConfig c;
    c.alpha = 0.5;
    EXPECT_THROW(build_frame(1.5, 0.5, 0.25, c), ConfigError);
    c.alpha = 0.6;
    c.beta = 0.6;
    EXPECT_THROW(build_frame(1.5, 0.5, 0.25, c), ConfigError);
    c = DecompositionConfig{};
    EXPECT_THROW(build_frame(0.9, 0.5, 0.25, c), DomainError);
    EXPECT_THROW(build_frame(1.5, 0.5, 0.6, c), DomainError);
    EXPECT_THROW(build_frame(1.5, 1.2, 0.25, c), DomainError);
}

TEST(Frame, SnappingStaysWithinOneCell) {
    auto g = grid();
    auto f = build_frame(1.5, 0.5, 0.25, DecompositionConfig{});
    auto s = snap_frame(f, g);
    EXPECT_LE(s.dt_snap, g.dt / 2 + 1e-15);
    EXPECT_LE(s.dx_snap, g.dx / 2 + 1e-15);
    EXPECT_DOUBLE_EQ(g.x(s.j_x0), 0.5);
    EXPECT_LT(g.t(s.i_top), 1.5 + std::pow(0.25, 4));
    EXPECT_GE(g.t(s.i_top + 1), 1.5 + std::pow(0.25, 4));
    auto narrow = SpaceTimeGrid::centered(1.5625, 0.5, 1.0 / 16, 0.25);
    EXPECT_THROW(snap_frame(f, narrow), GridError);
}

TEST(Decompose, ReconstructsTheStoppedSolution) {
    auto g = grid();
    auto c = quiet_config();
    auto s = SigmaFunction::bounded_sine(2, std::sqrt(2.0), 0.5);
    auto ic = InitialCondition::bump({0.5, -0.3}, 0.5);
    auto n = generate(g, 2, 8, 1);
    auto b = run_paths(s, ic, n, c.stopping);
    ASSERT_FALSE(b.stop.any_triggered());
    EXPECT_EQ(b.u_tilde.values(), b.u.values());
    for (double rho : {0.5, 0.35, 0.25}) {
        auto f = build_frame(1.5, 0.5, rho, c);
        auto r = decompose(s, ic, b.u, b.u_tilde, n, f, c, b.stop, &b.N0);
        EXPECT_LT(r.reconstruction_residual, 1e-12 * std::max(1.0, r.max_abs_u_tilde)) << rho;
        EXPECT_LT(r.split_residual, 1e-13) << rho;
        EXPECT_FALSE(r.u_hat_zeroed);
        auto o = oscillation_report(r);
        EXPECT_GT(o.N0, 0.0);
        EXPECT_NEAR(o.w, o.u_tilde, 1e-12);
        // the N0 window is the same whether it is passed in or recomputed
        if (rho == 0.25) {
            auto r2 = decompose(s, ic, b.u, b.u_tilde, n, f, c, b.stop);
            EXPECT_EQ(r2.N0.values(), r.N0.values());
        }
    }
}

TEST(Decompose, ConstantSigmaHasNoCorrection) {
    auto g = grid();
    auto c = quiet_config();
    auto s = SigmaFunction::scaled_rotation(2, 0.9, 0.4);
    auto ic = InitialCondition::zero(2);
    auto n = generate(g, 2, 8, 2);
    auto b = run_paths(s, ic, n, c.stopping);
    auto r = decompose(s, ic, b.u, b.u_tilde, n, build_frame(1.25, 0.75, 0.3, c), c, b.stop, &b.N0);
    auto o = oscillation_report(r);
    EXPECT_EQ(o.N1, 0.0);
    EXPECT_EQ(o.N2, 0.0);
    EXPECT_EQ(r.frozen_modulus_ratio, 0.0);
    EXPECT_LT(r.reconstruction_residual, 1e-12);
}

TEST(Decompose, HatsSwitchOffWhenGrowthStopsEarly) {
    auto g = grid();
    auto c = quiet_config();
    auto s = SigmaFunction::identity(1);
    auto ic = InitialCondition::constant({1.0});
    auto n = generate(g, 1, 8, 3);
    auto b = run_paths(s, ic, n, c.stopping);
    auto tight = b.stop;
    tight.tau2 = tau_growth(b.u_tilde, 0.5);
    tight.tau3 = tau_growth(b.v, 1e-9);
    ASSERT_TRUE(tight.tau2.triggered);
    ASSERT_EQ(tight.tau2.index, 0);
    auto r = decompose(s, ic, b.u, b.u_tilde, n, build_frame(1.5, 0.5, 0.3, c), c, tight, &b.N0);
    EXPECT_TRUE(r.u_hat_zeroed);
    EXPECT_TRUE(r.v1_hat_zeroed);
    EXPECT_EQ(oscillation_report(r).u_hat, 0.0);
    EXPECT_EQ(oscillation_report(r).v1_hat, 0.0);
}

TEST(Decompose, RejectsPathsFromAnotherRealization) {
    auto g = grid();
    auto c = quiet_config();
    auto s = SigmaFunction::identity(1);
    auto ic = InitialCondition::zero(1);
    auto n = generate(g, 1, 8, 4), other = generate(g, 1, 8, 5);
    auto b = run_paths(s, ic, n, c.stopping);
    auto f = build_frame(1.5, 0.5, 0.3, c);
    EXPECT_THROW(decompose(s, ic, b.u, b.u_tilde, other, f, c, b.stop), GridError);
    auto n0_other = convolve_path(NoiseView(other), 0, g.nt, {});
    EXPECT_THROW(decompose(s, ic, b.u, b.u_tilde, n, f, c, b.stop, &n0_other), GridError);
}

TEST(Decompose, V1MatchesKernelSum) {
    // The zero-boundary finite-difference flow against cell-averaged kernel
    // weights; the gap is the scheme's discretisation error relative to the
    // size of N0.
    auto g = grid();
    auto c = quiet_config();
    auto s = SigmaFunction::identity(1);
    auto ic = InitialCondition::zero(1);
    auto n = generate(g, 1, 8, 6);
    auto b = run_paths(s, ic, n, c.stopping);
    auto r = decompose(s, ic, b.u, b.u_tilde, n, build_frame(1.5, 0.5, 0.5, c), c, b.stop, &b.N0);
    double res = check_v1_semigroup(r);
    double scale = sup_norm(r.N0, r.frame.R_rho);
    EXPECT_LT(res, 0.05 * scale);
    EXPECT_EQ(r.v1_semigroup_residual, res);
}

TEST(Decompose, ClippedModulusBoundsTheFrozenGap) {
    // With tau1 active the frozen-coefficient gap over the frame is
    // controlled by the modulus: ratio <= 1 up to the grid snap of t0-.
    auto g = grid();
    DecompositionConfig c;
    auto s = SigmaFunction::bounded_sine(1, 1.0, 0.5);
    auto ic = InitialCondition::zero(1);
    auto n = generate(g, 1, 8, 7);
    auto u = solve_fd(s, ic, n);
    c.stopping.K = 0.5 * max_modulus_ratio(u, c.stopping);
    auto b = run_paths(s, ic, n, c.stopping);
    ASSERT_TRUE(b.stop.tau1.triggered);
    auto f = build_frame(1.5, 0.5, 0.5, c);
    auto r = decompose(s, ic, b.u, b.u_tilde, n, f, c, b.stop, &b.N0);
    EXPECT_GT(r.frozen_modulus_ratio, 0.0);
    EXPECT_LE(r.frozen_modulus_ratio, 1.0);
}
