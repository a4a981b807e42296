#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "shelab/rng.hpp"
#include "shelab/stats.hpp"

using namespace shelab;

TEST(Stats, MeanVarAndQuantiles) {
    std::vector<double> v{1, 2, 3, 4};
    auto m = mean_var(v);
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_DOUBLE_EQ(m.var, 5.0 / 3);
    EXPECT_DOUBLE_EQ(median(v), 2.5);
    EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
    EXPECT_THROW(quantile({}, 0.5), DomainError);
}

TEST(Stats, VarianceStandardErrorForNormals) {
    CounterStream s(1, 1);
    std::vector<double> v(40000);
    for (auto& x : v) x = 2 * s.normal();
    auto e = variance_with_se(v);
    EXPECT_NEAR(e.var, 4.0, 4 * e.se);
    // for normal data se = var sqrt(2/n)
    EXPECT_NEAR(e.se, 4.0 * std::sqrt(2.0 / 40000), 0.05 * e.se);
}

TEST(Stats, WilsonInterval) {
    auto w = wilson(5, 10);
    EXPECT_NEAR(w.lo, 0.2366, 1e-4);
    EXPECT_NEAR(w.hi, 0.7634, 1e-4);
    auto z = wilson(0, 20);
    EXPECT_EQ(z.lo, 0.0);
    EXPECT_NEAR(z.hi, 0.1611, 1e-4);
    EXPECT_EQ(wilson(0, 0).p, 0.0);
}

TEST(Stats, LeastSquares) {
    auto f = least_squares({0, 1, 2, 3}, {1, 3, 5, 7});
    EXPECT_DOUBLE_EQ(f.slope, 2.0);
    EXPECT_DOUBLE_EQ(f.intercept, 1.0);
    EXPECT_DOUBLE_EQ(f.r2, 1.0);
    EXPECT_EQ(f.slope_se, 0.0);
    // slope_se: y = (0,0,1), x = (0,1,2) -> slope 1/2, sse 1/6, sxx 2
    auto g = least_squares({0, 1, 2}, {0, 0, 1});
    EXPECT_NEAR(g.slope_se, std::sqrt(1.0 / 6 / 2), 1e-15);
    EXPECT_THROW(least_squares({1, 1}, {0, 1}), NumericalError);
    EXPECT_THROW(least_squares({1}, {0}), NumericalError);
}

TEST(Stats, KolmogorovDistribution) {
    // classical critical values
    EXPECT_NEAR(kolmogorov_q(1.3581), 0.05, 2e-4);
    EXPECT_NEAR(kolmogorov_q(1.2239), 0.10, 2e-4);
    EXPECT_NEAR(kolmogorov_q(1.6276), 0.01, 1e-4);
    EXPECT_EQ(kolmogorov_q(0.1), 1.0);
}

TEST(Stats, KsPowerAndSize) {
    CounterStream s(3, 3);
    std::vector<double> z(2000), u(2000), z2(2000), zs(2000);
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = s.normal();
        u[i] = std::sqrt(3.0) * (2 * s.uniform() - 1);  // same mean and variance
        z2[i] = s.normal();
        zs[i] = s.normal() + 0.15;
    }
    EXPECT_GT(ks_one_sample(z, normal_cdf).p, 0.01);
    EXPECT_LT(ks_one_sample(u, normal_cdf).p, 1e-3);
    EXPECT_GT(ks_two_sample(z, z2).p, 0.01);
    EXPECT_LT(ks_two_sample(z, zs).p, 1e-3);
    EXPECT_THROW(ks_one_sample({1, 2}, normal_cdf), DomainError);
}

TEST(Stats, TailFitOfAbsoluteNormal) {
    CounterStream s(4, 4);
    std::vector<double> v(1000000);
    for (auto& x : v) x = std::abs(s.normal());
    std::vector<double> grid;
    for (double l = 3.0; l <= 4.0 + 1e-12; l += 0.125) grid.push_back(l);
    auto f = tail_fit(v, 1.0, grid);
    // oracle: the same fit applied to the exact tail 2(1 - Phi)
    std::vector<double> x, y;
    for (double l : grid) {
        x.push_back(l * l);
        y.push_back(std::log(2 * (1 - normal_cdf(l))));
    }
    auto exact = least_squares(x, y);
    EXPECT_NEAR(f.slope, exact.slope, 0.05);
    EXPECT_NEAR(-exact.slope, 0.5, 0.06);
    EXPECT_GT(f.r2, 0.98);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double p = 2 * (1 - normal_cdf(grid[i]));
        EXPECT_LE(f.ci_lo[i], p * 1.001);
        EXPECT_GE(f.ci_hi[i], p * 0.999);
    }
}

TEST(Stats, TailFitRejectsBadInput) {
    std::vector<double> few(100, 1.0), flat(1000, 1.0), v(1000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i) / 1000;
    EXPECT_THROW(tail_fit(few, 1, {0.1}), DomainError);
    EXPECT_THROW(tail_fit(flat, 1, {0.1}), NumericalError);
    EXPECT_THROW(tail_fit(v, 1, {2, 3}), NumericalError);
    EXPECT_THROW(tail_fit(v, 1, {0.2, 0.5, 2.0, 3.0}), NumericalError);
    EXPECT_NO_THROW(tail_fit(v, 1, {0.2, 0.4, 0.6, 0.8}));
}
