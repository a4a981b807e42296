#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "shelab/noise.hpp"
#include "shelab/stats.hpp"

using namespace shelab;

TEST(Grid, CenteredPutsCentresOnMultiplesOfDx) {
    auto g = SpaceTimeGrid::centered(1.0, 2.0, 0.125, 0.25);
    EXPECT_EQ(g.nx, 33);
    EXPECT_EQ(g.nt, 256);
    EXPECT_DOUBLE_EQ(g.x(16), 0.0);
    EXPECT_DOUBLE_EQ(g.x(24), 1.0);
    EXPECT_EQ(g.space_index(1.0), 24);
    EXPECT_EQ(g.time_index(0.5), 128);
    EXPECT_TRUE(g.stable());
    EXPECT_FALSE(SpaceTimeGrid::centered(0.75, 2.0, 0.125, 0.75).stable());
    EXPECT_THROW(SpaceTimeGrid::centered(1.0, 2.01, 0.125, 0.25), ConfigError);
    EXPECT_THROW(SpaceTimeGrid::centered(1.001, 2.0, 0.125, 0.25), ConfigError);
    EXPECT_THROW(SpaceTimeGrid::centered(-1, 2.0, 0.125, 0.25), ConfigError);
}

TEST(Noise, CellVarianceIsCellArea) {
    auto g = SpaceTimeGrid::centered(1.0, 4.0, 1.0 / 16, 0.25);
    auto n = generate(g, 2, 5, 0);
    auto mv = mean_var(n.values());
    double area = g.dt * g.dx;
    EXPECT_NEAR(mv.mean, 0.0, 4 * std::sqrt(area / double(n.values().size())));
    // relative sd of a sample variance with n ~ 5e5 is about 2e-3
    EXPECT_NEAR(mv.var / area, 1.0, 0.01);
}

TEST(Noise, RandomAccessMatchesBulk) {
    auto g = SpaceTimeGrid::centered(0.25, 1.0, 1.0 / 8, 0.5);
    auto n = generate(g, 3, 9, 4);
    for (int i : {0, 3, g.nt - 1})
        for (int j : {0, 7, g.nx - 1})
            for (int k = 0; k < 3; ++k) EXPECT_EQ(n.at(i, j, k), noise_cell(g, 3, 9, 4, i, j, k));
    EXPECT_NE(generate(g, 3, 9, 5).at(0, 0, 0), n.at(0, 0, 0));
}

TEST(Noise, BlockSumsAreConsistentAcrossResolutions) {
    // The white-noise mass of a fixed rectangle has variance equal to its
    // area whatever the grid.
    for (double dx : {1.0 / 8, 1.0 / 32}) {
        auto g = SpaceTimeGrid::centered(0.5, 1.0, dx, 0.25);
        std::vector<double> mass;
        for (int r = 0; r < 400; ++r) {
            auto n = generate(g, 1, 77, r);
            auto v = restrict(n, 0.0, 0.5, g.x0, g.x0 + 0.5);
            double s = 0;
            for (int i = v.i_lo(); i < v.i_hi(); ++i)
                for (int j = 0; j < g.nx; ++j) s += v.at(i, j);
            mass.push_back(s);
        }
        auto ve = variance_with_se(mass);
        EXPECT_NEAR(ve.var, 0.25, 4 * ve.se) << dx;
    }
}

TEST(IntervalSet, AlgebraMatchesBruteForce) {
    IntervalSet a({{0, 5}, {8, 12}, {3, 6}}), b({{4, 9}, {11, 20}});
    auto in = a.intersect(b), mi = a.minus(b);
    for (int j = -2; j < 25; ++j) {
        EXPECT_EQ(in.contains(j), a.contains(j) && b.contains(j)) << j;
        EXPECT_EQ(mi.contains(j), a.contains(j) && !b.contains(j)) << j;
    }
    EXPECT_EQ(a.intervals().size(), 2u);
    EXPECT_TRUE(IntervalSet(3, 3).intervals().empty());
}

TEST(NoiseView, RestrictionAndComplementPartitionTheRow) {
    auto g = SpaceTimeGrid::centered(0.25, 1.0, 1.0 / 8, 0.5);
    auto n = generate(g, 1, 1, 1);
    auto v = restrict(n, 2 * g.dt, 4 * g.dt, g.x0 + 0.25, g.x0 + 1.0);
    auto c = v.space_complement();
    EXPECT_EQ(v.i_lo(), 2);
    EXPECT_EQ(v.i_hi(), 4);
    for (int i = 0; i < g.nt; ++i)
        for (int j = 0; j < g.nx; ++j) {
            bool in_t = i >= 2 && i < 4;
            EXPECT_EQ(v.at(i, j) + c.at(i, j), in_t ? n.at(i, j) : 0.0);
            EXPECT_FALSE(v.contains(i, j) && c.contains(i, j));
        }
    auto w = restrict(v, 0.0, 0.25, g.x0 + 0.5, g.x0 + 2.0);
    EXPECT_TRUE(w.contains(2, 4));
    EXPECT_FALSE(w.contains(2, 3));
    EXPECT_FALSE(w.contains(4, 4));
    EXPECT_THROW(restrict(n, 0.01, 0.125, g.x0, g.x1), GridError);
    EXPECT_THROW(restrict(n, 0.0, 0.125, 0.03, g.x1), GridError);
}

TEST(Dump, RoundTripIsBitExact) {
    auto g = SpaceTimeGrid::centered(0.25, 1.0, 1.0 / 8, 0.5);
    auto n = generate(g, 2, 31, 2);
    auto path = (std::filesystem::temp_directory_path() / "shelab_noise_roundtrip.bin").string();
    dump_noise(path, n);
    auto m = load_noise(path);
    EXPECT_TRUE(m.grid().same_as(g));
    EXPECT_EQ(m.dim(), 2);
    EXPECT_EQ(m.seed(), 31u);
    EXPECT_EQ(m.stream(), 2u);
    EXPECT_EQ(m.values(), n.values());
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputc('X', f);
        std::fclose(f);
    }
    EXPECT_THROW(load_noise(path), std::runtime_error);
    std::filesystem::remove(path);
    EXPECT_THROW(load_noise(path), std::runtime_error);
}
