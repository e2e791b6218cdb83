#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracle.hpp"
#include "warp/warp.hpp"

using namespace warp;

namespace {

Observation noisy(std::vector<std::size_t> sides, std::uint64_t seed, double sigma = 1.0) {
    Grid g = Grid::from_sides(sides);
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, sigma);
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 5 < 2 ? 1.2 : 0.0) + nd(rng);
    return Observation(g, std::move(v));
}

HyperParams no_pruning() {
    HyperParams h;
    h.beta = 0.5;
    h.tau0 = 8.0;
    return h;
}

// Daubechies 6-tap low-pass filter.
const std::vector<double> kD6 = {0.33267055295008263, 0.8068915093110925,  0.45987750211849154,
                                 -0.1350110200102546, -0.08544127388202666, 0.03522629188570953};

WaveletFilter d6() {
    WaveletFilter f;
    f.lowpass = kD6;
    const std::size_t L = kD6.size();
    for (std::size_t t = 0; t < L; ++t) f.highpass.push_back((t % 2 ? -1.0 : 1.0) * kD6[L - 1 - t]);
    return f;
}

}  // namespace

TEST(WaveletFilter, BuiltInsAreOrthonormal) {
    for (const auto& f : {WaveletFilter::haar(), WaveletFilter::d4(), d6()}) {
        EXPECT_NO_THROW(f.validate());
        double hh = 0, gg = 0, hg = 0;
        for (std::size_t t = 0; t < f.lowpass.size(); ++t) {
            hh += f.highpass[t] * f.highpass[t];
            gg += f.lowpass[t] * f.lowpass[t];
            hg += f.highpass[t] * f.lowpass[t];
        }
        EXPECT_NEAR(hh, 1.0, 1e-12);
        EXPECT_NEAR(gg, 1.0, 1e-12);
        EXPECT_NEAR(hg, 0.0, 1e-12);
    }
    auto d4 = WaveletFilter::d4();
    EXPECT_NEAR(d4.lowpass[0], (1 + std::sqrt(3.0)) / (4 * std::sqrt(2.0)), 1e-15);
    EXPECT_EQ(d4.half_support(), 2);
}

TEST(WaveletFilter, ParseFileFormat) {
    std::ostringstream os;
    os.precision(17);
    auto ref = d6();
    os << 6 << "\n";
    for (double v : ref.highpass) os << v << ' ';
    os << "\n";
    for (double v : ref.lowpass) os << v << ' ';
    std::istringstream is(os.str());
    auto f = WaveletFilter::parse(is);
    EXPECT_EQ(f.half_support(), 3);
    for (int t = 0; t < 6; ++t) {
        EXPECT_DOUBLE_EQ(f.lowpass[t], ref.lowpass[t]);
        EXPECT_DOUBLE_EQ(f.highpass[t], ref.highpass[t]);
    }
    auto path = std::filesystem::temp_directory_path() / "warp_test_d6.txt";
    std::ofstream(path) << os.str();
    EXPECT_EQ(WaveletFilter::by_name(path.string()).lowpass, f.lowpass);
    std::filesystem::remove(path);
    EXPECT_EQ(WaveletFilter::by_name("haar").lowpass.size(), 2u);
    EXPECT_EQ(WaveletFilter::by_name("d4").lowpass.size(), 4u);
}

TEST(WaveletFilter, RejectsMalformed) {
    auto bad = [](const std::string& s) {
        std::istringstream is(s);
        return WaveletFilter::parse(is);
    };
    EXPECT_THROW(bad("3 1 0 0 1 0 0"), InputError);
    EXPECT_THROW(bad("2 0.7071067811865476 -0.7071067811865476 0.7071067811865476"), InputError);
    EXPECT_THROW(bad("2 1 0 1 0"), InputError);  // not orthogonal
    EXPECT_THROW(bad("2 2 0 0 2"), InputError);  // not normalized
    EXPECT_THROW(bad("x"), InputError);
    EXPECT_THROW(WaveletFilter::by_name("/nonexistent/filter.txt"), InputError);
}

TEST(PeriodicTransform, SynthesisInvertsAnalysis) {
    Rng rng(3);
    std::normal_distribution<double> nd;
    for (const auto& f : {WaveletFilter::haar(), WaveletFilter::d4(), d6()}) {
        for (std::size_t L : {2u, 4u, 8u, 32u}) {
            std::vector<double> row(L), c, w;
            for (double& v : row) v = nd(rng);
            periodic_analysis(f, row, c, w);
            double e0 = 0, e1 = 0;
            for (double v : row) e0 += v * v;
            for (std::size_t k = 0; k < c.size(); ++k) e1 += c[k] * c[k] + w[k] * w[k];
            EXPECT_NEAR(e0, e1, 1e-10 * e0);
            auto back = periodic_synthesis(f, c, w);
            for (std::size_t t = 0; t < L; ++t) EXPECT_NEAR(back[t], row[t], 1e-12);
        }
    }
}

TEST(Smc, HaarTargetGivesUniformWeightsAndExactEvidence) {
    for (auto sides : std::vector<std::vector<std::size_t>>{{8, 8}, {16, 4, 2}, {32, 32}}) {
        Observation obs = noisy(sides, 5);
        HyperParams h = no_pruning();
        NodeMoments mom(obs);
        auto maps = run_op(mom, h);
        SmcOptions opt;
        opt.particles = 25;
        opt.seed = 11;
        auto r = smc_run(mom, maps, h, WaveletFilter::haar(), opt);
        for (double w : r.weights) EXPECT_NEAR(w, 1.0 / 25, 1e-8);
        EXPECT_NEAR(r.log_evidence, maps.log_evidence(), 1e-6);
        EXPECT_EQ(r.resample_count, 0u);
    }
}

TEST(Smc, HaarParticleMeanIsTheTreeConditionalMean) {
    Observation obs = noisy({8, 4}, 2);
    HyperParams h = no_pruning();
    NodeMoments mom(obs);
    auto maps = run_op(mom, h);
    SmcOptions opt;
    opt.particles = 5;
    auto r = smc_run(mom, maps, h, WaveletFilter::haar(), opt);
    for (const auto& P : r.particles) {
        auto a = particle_conditional_mean(P, mom, h, WaveletFilter::haar());
        auto b = tree_conditional_mean(particle_tree(P, obs.grid), mom, h);
        for (std::size_t x = 0; x < a.size(); ++x) EXPECT_NEAR(a[x], b[x], 1e-12);
    }
}

TEST(Smc, IncrementalUpdatesMatchRecomputation) {
    for (const auto& f : {WaveletFilter::d4(), d6(), WaveletFilter::haar()}) {
        Observation obs = noisy({8, 8}, 9);
        HyperParams h = no_pruning();
        NodeMoments mom(obs);
        auto maps = run_op(mom, h);
        SmcOptions opt;
        opt.particles = 16;  // 16 particles x 63 moves > 1000 propagation steps
        opt.check_incremental = true;
        opt.ess_threshold = 0.5;
        auto r = smc_run(mom, maps, h, f, opt);
        EXPECT_GE(r.moves * opt.particles, 1000u);
        EXPECT_LT(r.max_incremental_error, 1e-10);
        EXPECT_LE(r.max_changed_per_level, 2 * f.half_support() - 1);
    }
}

TEST(Smc, ChangedCountBoundOnLargerGrids) {
    Observation obs = noisy({32, 16}, 4);
    HyperParams h = no_pruning();
    NodeMoments mom(obs);
    auto maps = run_op(mom, h);
    SmcOptions opt;
    opt.particles = 3;
    EXPECT_LE(smc_run(mom, maps, h, WaveletFilter::d4(), opt).max_changed_per_level, 3);
    EXPECT_LE(smc_run(mom, maps, h, d6(), opt).max_changed_per_level, 5);
}

TEST(Smc, SingleParticleWeightIsTheImportanceRatio) {
    Observation obs = noisy({4, 2}, 3);
    HyperParams h = no_pruning();
    NodeMoments mom(obs);
    auto maps = run_op(mom, h);
    const auto f = WaveletFilter::d4();
    for (auto mode : {SmcWeighting::Lookahead, SmcWeighting::Literal}) {
        SmcOptions opt;
        opt.particles = 1;
        opt.seed = 8;
        opt.weighting = mode;
        auto r = smc_run(mom, maps, h, f, opt);
        RdpTree t = particle_tree(r.particles[0], obs.grid);
        // proposal probability of the tree under the Haar posterior
        double log_q = 0.0;
        for (int k : oracle::internal_nodes(t, 0)) log_q += std::log(maps.lambda(obs.grid.flat(t[k].block), t[k].split));
        double expect = oracle::tree_log_prior(t, obs.grid) + oracle::tree_log_likelihood(t, obs.grid, obs.values, f, h) - log_q;
        EXPECT_NEAR(r.particles[0].log_weight, expect, 1e-10);
        EXPECT_NEAR(r.log_evidence, expect, 1e-10);
        EXPECT_DOUBLE_EQ(r.weights[0], 1.0);
    }
}

TEST(Smc, EvidenceEstimateIsUnbiased) {
    Observation obs = noisy({4, 2}, 6);
    HyperParams h = no_pruning();
    NodeMoments mom(obs);
    auto maps = run_op(mom, h);
    const auto f = WaveletFilter::d4();
    std::vector<double> terms;
    for (const auto& t : oracle::all_trees(obs.grid))
        terms.push_back(oracle::tree_log_prior(t, obs.grid) + oracle::tree_log_likelihood(t, obs.grid, obs.values, f, h));
    const double log_z = oracle::log_sum(terms);
    // Z-hat / Z averaged over seeds
    std::vector<double> ratio;
    for (std::uint64_t s = 0; s < 200; ++s) {
        SmcOptions opt;
        opt.particles = 4;
        opt.seed = 1000 + s;
        opt.ess_threshold = 0.7;
        ratio.push_back(std::exp(smc_run(mom, maps, h, f, opt).log_evidence - log_z));
    }
    double mean = 0, var = 0;
    for (double v : ratio) mean += v / ratio.size();
    for (double v : ratio) var += (v - mean) * (v - mean) / (ratio.size() - 1);
    const double se = std::sqrt(var / ratio.size());
    EXPECT_LE(std::abs(mean - 1.0), 2.0 * se + 1e-12) << "mean " << mean << " se " << se;
}

TEST(Smc, ResamplingResetsToEqualWeightsAndKeepsTotal) {
    Observation obs = noisy({8, 8}, 12);
    HyperParams h = no_pruning();
    NodeMoments mom(obs);
    auto maps = run_op(mom, h);
    for (auto scheme : {Resampling::Multinomial, Resampling::Systematic}) {
        SmcOptions opt;
        opt.particles = 12;
        opt.ess_threshold = 1.0;  // resample after every move whose weights are not uniform
        opt.resampling = scheme;
        auto r = smc_run(mom, maps, h, WaveletFilter::d4(), opt);
        EXPECT_GT(r.resample_count, 0u);
        double ess = 0;
        for (double w : r.weights) ess += w * w;
        EXPECT_NEAR(1.0 / ess, 12.0, 1e-9);
        for (double w : r.weights) EXPECT_NEAR(w, 1.0 / 12, 1e-12);
    }
}

TEST(Smc, RejectsBadInputs) {
    Observation obs = noisy({4, 4}, 1);
    HyperParams h = no_pruning();
    NodeMoments mom(obs);
    auto maps = run_op(mom, h);
    SmcOptions opt;
    opt.particles = 0;
    EXPECT_THROW(smc_run(mom, maps, h, WaveletFilter::d4(), opt), InputError);
    opt.particles = 4;
    opt.ess_threshold = 0.0;
    EXPECT_THROW(smc_run(mom, maps, h, WaveletFilter::d4(), opt), InputError);
    opt.ess_threshold = 0.1;
    HyperParams hp = h;
    hp.eta0 = 0.2;
    EXPECT_THROW(smc_run(mom, run_op(mom, hp), h, WaveletFilter::d4(), opt), InputError);
    Observation other = noisy({8, 2}, 1);
    EXPECT_THROW(smc_run(NodeMoments(other), maps, h, WaveletFilter::d4(), opt), InputError);
}

TEST(SmcDenoise, ConstantStaysConstant) {
    Grid g({3, 3});
    Observation obs(g, std::vector<double>(g.size(), 0.6));
    SmcOptions opt;
    opt.particles = 4;
    for (double v : smc_denoise(obs, no_pruning(), WaveletFilter::d4(), opt, {{0, 0}, {1, 2}})) EXPECT_NEAR(v, 0.6, 1e-12);
}

TEST(SmcDenoise, HaarTargetMatchesExactPipelineWithinMonteCarloError) {
    Observation obs = noisy({16, 16}, 21, 0.5);
    HyperParams h = no_pruning();
    h.sigma = 0.5;
    std::vector<std::vector<long>> shifts{{0, 0}, {1, 1}, {-2, 1}};
    auto exact = cycle_spin_denoise(obs, h, shifts);
    const int seeds = 10;
    std::vector<std::vector<double>> runs;
    for (int s = 0; s < seeds; ++s) {
        SmcOptions opt;
        opt.particles = 10;
        opt.seed = 500 + s;
        runs.push_back(smc_denoise(obs, h, WaveletFilter::haar(), opt, shifts));
    }
    int outside = 0;
    for (std::size_t x = 0; x < exact.size(); ++x) {
        double m = 0, v = 0;
        for (auto& r : runs) m += r[x] / seeds;
        for (auto& r : runs) v += (r[x] - m) * (r[x] - m) / (seeds - 1);
        outside += std::abs(m - exact[x]) > 3.0 * std::sqrt(v / seeds) + 1e-12;
    }
    // 256 pixels with standard errors estimated from 10 runs: allow the expected few exceedances
    EXPECT_LE(outside, 13);
}
