#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "warp/warp.hpp"

using namespace warp;

namespace {

Observation random_obs(std::vector<std::size_t> sides, std::uint64_t seed, double scale = 1.0) {
    Grid g = Grid::from_sides(sides);
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    std::vector<double> v(g.size());
    for (double& x : v) x = nd(rng);
    return Observation(g, std::move(v));
}

}  // namespace

TEST(Observation, RejectsNonFiniteAndWrongSize) {
    Grid g({1, 1});
    EXPECT_THROW(Observation(g, {1.0, 2.0, 3.0}), InputError);
    EXPECT_THROW(Observation(g, {1.0, 2.0, NAN, 0.0}), InputError);
    EXPECT_THROW(Observation(g, {1.0, 2.0, INFINITY, 0.0}), InputError);
}

TEST(HaarCoefficient, Examples) {
    Observation obs(Grid({1, 0}), {1.0, 3.0});
    BlockStatsTable st(obs);
    EXPECT_NEAR(haar_coefficient(obs.grid.root(), 0, st), -1.41421356, 1e-8);
    EXPECT_THROW(haar_coefficient(obs.grid.atom(0), 0, st), InputError);

    Observation c(Grid({2, 3}), std::vector<double>(32, 2.5));
    BlockStatsTable sc(c);
    for (std::size_t f = 0; f < c.grid.node_count(); ++f) {
        auto a = c.grid.node(f);
        for (int d : divisible_dims(a, c.grid)) EXPECT_NEAR(haar_coefficient(a, d, sc), 0.0, 1e-12);
    }
}

TEST(ScaleCoefficient, Examples) {
    Observation ones(Grid({2, 2}), std::vector<double>(16, 1.0));
    BlockStatsTable s1(ones);
    EXPECT_NEAR(scale_coefficient(ones.grid.root(), s1), 4.0, 1e-12);
    Observation r = random_obs({4, 4}, 1);
    BlockStatsTable sr(r);
    for (std::size_t loc = 0; loc < 16; ++loc)
        EXPECT_NEAR(scale_coefficient(r.grid.atom(loc), sr), r.values[loc], 1e-12);
    Observation obs(Grid({1, 0}), {1.0, 3.0});
    EXPECT_NEAR(scale_coefficient(obs.grid.root(), BlockStatsTable(obs)), 2.82842712, 1e-8);
}

TEST(PrunedLikelihood, Examples) {
    Observation r = random_obs({4, 4}, 2);
    BlockStatsTable sr(r);
    EXPECT_DOUBLE_EQ(pruned_likelihood_log(r.grid.atom(3), 1.0, sr), 0.0);

    Observation two(Grid({1}), {1.0, 3.0});
    EXPECT_NEAR(pruned_likelihood_log(two.grid.root(), 1.0, BlockStatsTable(two)), -1.91894, 1e-5);

    Observation flat(Grid({2}), std::vector<double>(4, 0.7));
    EXPECT_NEAR(pruned_likelihood_log(flat.grid.root(), 1.0, BlockStatsTable(flat)), -2.75682, 1e-5);

    EXPECT_THROW(pruned_likelihood_log(two.grid.root(), 0.0, BlockStatsTable(two)), InputError);
    EXPECT_THROW(pruned_likelihood_log(two.grid.root(), -1.0, BlockStatsTable(two)), InputError);
}

TEST(BlockStatsTable, RootSumExactForIntegers) {
    Grid g({3, 4, 2});
    std::vector<double> v(g.size());
    Rng rng(4);
    std::uniform_int_distribution<int> u(-1000, 1000);
    double total = 0;
    for (double& x : v) total += x = u(rng);
    BlockStatsTable st(Observation(g, v));
    EXPECT_EQ(st.block_sum(g.root()), total);
}

TEST(BlockStatsTable, MatchesDirectSummation) {
    for (auto sides : std::vector<std::vector<std::size_t>>{{16, 16}, {8, 4}, {4, 4, 4}, {32}}) {
        Observation obs = random_obs(sides, 7, 3.0);
        for (int ext : {BlockStatsTable::kDefaultExtendedThreshold, 0}) {
            BlockStatsTable st(obs, ext);
            const Grid& g = obs.grid;
            for (std::size_t f = 0; f < g.node_count(); ++f) {
                auto a = g.node(f);
                double direct = oracle::block_sum(g, obs.values, a);
                ASSERT_NEAR(st.block_sum(a), direct, 1e-10 * (1.0 + std::abs(direct)));
                for (int d : divisible_dims(a, g)) {
                    double h = oracle::haar(g, obs.values, a, d);
                    ASSERT_NEAR(haar_coefficient(a, d, st), h, 1e-10 * (1.0 + std::abs(h)));
                }
            }
        }
    }
}

TEST(BlockStatsTable, CauchySchwarzAndNonnegativeSS) {
    Observation obs = random_obs({8, 8}, 9, 5.0);
    BlockStatsTable st(obs);
    // table queries carry roundoff on the scale of the whole-image totals
    const double tol = 1e-12 * st.block_sumsq(obs.grid.root());
    for (std::size_t f = 0; f < obs.grid.node_count(); ++f) {
        auto a = obs.grid.node(f);
        double s = st.block_sum(a);
        EXPECT_GE(st.block_sumsq(a) + tol, s * s / obs.grid.block_size(a));
        EXPECT_GE(st.centered_ss(a), 0.0);
    }
}

TEST(NodeMoments, AgreeWithTables) {
    Observation obs = random_obs({8, 4, 2}, 12, 2.0);
    BlockStatsTable st(obs);
    NodeMoments mom(obs);
    const Grid& g = obs.grid;
    for_each_node(g, NodeOrder::TopDown, [&](std::size_t f, std::span<const std::size_t> slots) {
        auto a = g.node(f);
        int depth = slots_depth(slots);
        EXPECT_NEAR(mom.sum[f], st.block_sum(a), 1e-10);
        EXPECT_NEAR(mom.css[f], st.centered_ss(a), 1e-9);
        EXPECT_NEAR(mom.scale(f, depth), scale_coefficient(a, st), 1e-10);
        for (int d : divisible_dims(a, g)) EXPECT_NEAR(mom.detail(f, d, slots[d], depth), haar_coefficient(a, d, st), 1e-10);
    });
}

TEST(Parseval, RandomTreesOnEightByEight) {
    Rng rng(21);
    for (int rep = 0; rep < 100; ++rep) {
        Observation obs = random_obs({8, 8}, 100 + rep, 1.0 + rep % 5);
        NodeMoments mom(obs);
        auto tree = complete_from_prior(RdpTree(obs.grid), rng);
        double energy = 0.0, total = 0.0;
        for (double w : tree_haar_details(tree, mom)) energy += w * w;
        double c = mom.scale(0, 0);
        energy += c * c;
        for (double y : obs.values) total += y * y;
        EXPECT_NEAR(energy, total, 1e-8 * total);
    }
}

TEST(Parseval, ChildScalesFromParent) {
    Observation obs = random_obs({4, 4}, 3);
    BlockStatsTable st(obs);
    const Grid& g = obs.grid;
    for (std::size_t f = 0; f < g.node_count(); ++f) {
        auto a = g.node(f);
        for (int d : divisible_dims(a, g)) {
            auto [l, r] = children(a, d, g);
            double c = scale_coefficient(a, st), w = haar_coefficient(a, d, st);
            EXPECT_NEAR(scale_coefficient(l, st), (c + w) / std::sqrt(2.0), 1e-12);
            EXPECT_NEAR(scale_coefficient(r, st), (c - w) / std::sqrt(2.0), 1e-12);
        }
    }
}

TEST(BlockStatsTable, LargeOffsetKeepsPrecision) {
    // a large constant offset cancels in detail coefficients
    Grid g({5, 5});
    Observation base = random_obs({32, 32}, 31, 0.01);
    std::vector<double> shifted = base.values;
    for (double& v : shifted) v += 1e6;
    BlockStatsTable a(base), b(Observation(g, shifted));
    for (std::size_t f = 0; f < g.node_count(); f += 7) {
        auto n = g.node(f);
        for (int d : divisible_dims(n, g))
            EXPECT_NEAR(haar_coefficient(n, d, a), haar_coefficient(n, d, b), 1e-6);
    }
}
