#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "shelab/sigma.hpp"

using namespace shelab;

TEST(Sigma, DeclaredConstantsHoldOnProbes) {
    for (int d : {1, 2, 3, 8}) {
        for (auto s : {SigmaFunction::zero(d), SigmaFunction::identity(d), SigmaFunction::scaled_rotation(d, 0.7, 0.3),
                       SigmaFunction::bounded_sine(d, std::sqrt(2.0), 0.5)}) {
            auto c = spot_check(s, 2000, 3);
            EXPECT_TRUE(c.ok()) << d << ' ' << int(s.kind()) << ' ' << c.max_lipschitz_ratio << ' ' << c.max_bound_ratio;
        }
    }
}

TEST(Sigma, BoundedSineBoundIsAttained) {
    auto s = SigmaFunction::bounded_sine(2, 1.5, 0.5);
    std::vector<double> u{std::numbers::pi / 2, std::numbers::pi / 2}, m(4);
    s.matrix(u.data(), m.data());
    EXPECT_NEAR(frobenius(m), 1.5, 1e-14);
    EXPECT_NEAR(s.lipschitz(), 1.5 / std::sqrt(2.0) * 0.5 / 1.5, 1e-15);
    EXPECT_THROW(SigmaFunction::bounded_sine(2, 0.0, 0.5), ConfigError);
}

TEST(Sigma, SpotCheckCatchesFalseClaims) {
    auto liar = SigmaFunction::custom(
        1, [](const double* u, double* m) { m[0] = 2 * std::sin(u[0]); }, 1.0, 2.0);
    EXPECT_GT(spot_check(liar, 500, 1).max_lipschitz_ratio, 1.5);
    auto big = SigmaFunction::custom(1, [](const double*, double* m) { m[0] = 3; }, 0.0, 1.0);
    EXPECT_FALSE(spot_check(big, 10, 1).ok());
}

TEST(Sigma, ApplyAddMatchesMatrixProduct) {
    for (auto s : {SigmaFunction::identity(3), SigmaFunction::scaled_rotation(3, 2.0, 0.4),
                   SigmaFunction::bounded_sine(3, 1.0, 0.3)}) {
        std::vector<double> u{0.3, -1.2, 2.0}, w{1.0, 0.5, -0.25}, out{1, 1, 1}, m(9);
        s.apply_add(u.data(), w.data(), out.data());
        s.matrix(u.data(), m.data());
        for (int k = 0; k < 3; ++k) {
            double e = 1;
            for (int l = 0; l < 3; ++l) e += m[k * 3 + l] * w[l];
            EXPECT_NEAR(out[k], e, 1e-15);
        }
    }
    EXPECT_THROW(SigmaFunction::constant(2, {1, 2, 3}), ConfigError);
}

TEST(Sigma, RotationIsScaledOrthogonal) {
    auto s = SigmaFunction::scaled_rotation(4, 0.5, 1.1);
    std::vector<double> u(4), m(16);
    s.matrix(u.data(), m.data());
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double g = 0;
            for (int k = 0; k < 4; ++k) g += m[k * 4 + a] * m[k * 4 + b];
            EXPECT_NEAR(g, a == b ? 0.25 : 0.0, 1e-15);
        }
    EXPECT_NEAR(s.sigma1(), 1.0, 1e-15);
}

TEST(InitialCondition, ClosedFormEvolutionMatchesQuadrature) {
    auto check = [](const InitialCondition& ic) {
        auto copy = InitialCondition::custom(
            ic.dim(), [&](double x, double* o) { ic.evaluate(x, o); }, ic.bound());
        for (double t : {0.05, 0.5, 2.0})
            for (double x : {-1.0, 0.0, 0.7}) {
                std::vector<double> a(ic.dim()), b(ic.dim());
                ic.heat_evolution(t, x, a.data());
                copy.heat_evolution(t, x, b.data());
                for (int k = 0; k < ic.dim(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
            }
    };
    check(InitialCondition::bump({1.0, -2.0}, 0.3));
    check(InitialCondition::heat_kernel({0.5}, 0.1));
    check(InitialCondition::constant({1.0, 2.0, 3.0}));
}

TEST(InitialCondition, BoundsAndValidation) {
    EXPECT_NEAR(InitialCondition::constant({3, 4}).bound(), 5.0, 1e-15);
    EXPECT_NEAR(InitialCondition::heat_kernel({1.0}, 0.25).bound(), 1 / std::sqrt(std::numbers::pi), 1e-15);
    EXPECT_NEAR(InitialCondition::bump({3, 4}, 1.0).bound(), 5.0, 1e-15);
    EXPECT_THROW(InitialCondition::bump({1}, 0.0), ConfigError);
    EXPECT_THROW(InitialCondition::heat_kernel({1}, -1.0), ConfigError);
    std::vector<double> out(2);
    InitialCondition::bump({3, 4}, 1.0).heat_evolution(0.0, 0.0, out.data());
    EXPECT_EQ(out[0], 3.0);
}
