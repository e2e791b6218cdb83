#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "block_stats.hpp"
#include "error.hpp"
#include "estimation.hpp"
#include "index_space.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "posterior.hpp"
#include "rng.hpp"
#include "shrinkage.hpp"

namespace warp {

/// Orthonormal two-channel filter pair with support 2l. Scale coefficients are
/// c_j[k] = sum_t lowpass[t] c_{j+1}[2k+t], details use highpass the same way.
struct WaveletFilter {
    std::vector<double> highpass;
    std::vector<double> lowpass;

    int half_support() const { return static_cast<int>(lowpass.size() / 2); }

    void validate() const {
        if (lowpass.size() != highpass.size() || lowpass.empty() || lowpass.size() % 2 != 0)
            throw InputError("filter rows must have the same even length");
        double hh = 0.0, gg = 0.0, hg = 0.0;
        for (std::size_t t = 0; t < lowpass.size(); ++t) {
            hh += highpass[t] * highpass[t];
            gg += lowpass[t] * lowpass[t];
            hg += highpass[t] * lowpass[t];
        }
        if (std::abs(hh - 1.0) > 1e-12 || std::abs(gg - 1.0) > 1e-12 || std::abs(hg) > 1e-12)
            throw InputError("filter pair is not orthonormal");
    }

    static WaveletFilter haar() {
        const double r = 1.0 / std::numbers::sqrt2;
        return {{r, -r}, {r, r}};
    }

    /// Daubechies D4.
    static WaveletFilter d4() {
        const double s3 = std::sqrt(3.0), den = 4.0 * std::numbers::sqrt2;
        std::vector<double> lo{(1 + s3) / den, (3 + s3) / den, (3 - s3) / den, (1 - s3) / den};
        std::vector<double> hi{lo[3], -lo[2], lo[1], -lo[0]};
        return {hi, lo};
    }

    /// Plain text: support 2l, then the high-pass row, then the low-pass row.
    static WaveletFilter parse(std::istream& in) {
        long len = 0;
        if (!(in >> len) || len < 2 || len % 2 != 0) throw InputError("filter file: bad support length");
        WaveletFilter f;
        f.highpass.resize(len);
        f.lowpass.resize(len);
        for (auto& v : f.highpass)
            if (!(in >> v)) throw InputError("filter file: short high-pass row");
        for (auto& v : f.lowpass)
            if (!(in >> v)) throw InputError("filter file: short low-pass row");
        f.validate();
        return f;
    }

    static WaveletFilter load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open filter file " + path);
        return parse(in);
    }

    static WaveletFilter by_name(const std::string& name) {
        if (name == "haar") return haar();
        if (name == "d4") return d4();
        return load(name);
    }
};

/// Periodic single-level analysis of a row.
inline void periodic_analysis(const WaveletFilter& f, std::span<const double> row, std::vector<double>& c,
                              std::vector<double>& w) {
    const std::size_t L = row.size(), half = L / 2, T = f.lowpass.size();
    c.assign(half, 0.0);
    w.assign(half, 0.0);
    for (std::size_t p = 0; p < half; ++p)
        for (std::size_t t = 0; t < T; ++t) {
            double x = row[(2 * p + t) % L];
            c[p] += f.lowpass[t] * x;
            w[p] += f.highpass[t] * x;
        }
}

/// Adjoint of periodic_analysis (its inverse for orthonormal filters).
inline std::vector<double> periodic_synthesis(const WaveletFilter& f, std::span<const double> c,
                                              std::span<const double> w) {
    const std::size_t half = c.size(), L = 2 * half, T = f.lowpass.size();
    std::vector<double> out(L, 0.0);
    for (std::size_t p = 0; p < half; ++p)
        for (std::size_t t = 0; t < T; ++t) out[(2 * p + t) % L] += f.lowpass[t] * c[p] + f.highpass[t] * w[p];
    return out;
}

/// SMC state: a breadth-first partial tree with its coefficients under the
/// target basis. Level j holds the nodes at depth j in left-to-right order;
/// the first size(level j+1)/2 of them are expanded.
struct Particle {
    std::vector<std::vector<std::size_t>> node;  ///< [j][k] flat index of A_{j,k}
    std::vector<std::vector<int>> split;         ///< [j][k] split dimension, -1 if not expanded
    std::vector<std::vector<double>> c, w;       ///< scale / detail coefficients
    std::vector<std::vector<double>> log_m;      ///< per-node log-likelihood term, 0 at the frontier
    double log_weight = 0.0;

    std::size_t expanded(int j) const { return j + 1 < static_cast<int>(node.size()) ? node[j + 1].size() / 2 : 0; }
};

enum class SmcWeighting {
    Lookahead,  ///< intermediate targets carry the Haar evidence of the frontier blocks
    Literal,    ///< prior / proposal ratio times the target likelihood ratio only
};
enum class Resampling { Multinomial, Systematic };

struct SmcOptions {
    std::size_t particles = 10;
    double ess_threshold = 0.1;  ///< resample when ESS < ess_threshold * particles
    std::uint64_t seed = 0;
    SmcWeighting weighting = SmcWeighting::Lookahead;
    Resampling resampling = Resampling::Multinomial;
    bool check_incremental = false;  ///< compare against full recomputation after every move
};

struct SmcResult {
    std::vector<Particle> particles;
    std::vector<double> weights;  ///< normalized
    double log_evidence = 0.0;    ///< log(W / I)
    std::size_t resample_count = 0;
    std::size_t moves = 0;
    int max_changed_per_level = 0;
    double max_incremental_error = 0.0;  ///< filled when check_incremental is set
};

namespace detail {

inline void smc_recompute(const WaveletFilter& f, const Particle& P, int level, std::size_t k, double& c, double& w) {
    const auto& row = P.c[level + 1];
    const std::size_t L = row.size(), T = f.lowpass.size();
    c = 0.0;
    w = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double x = row[(2 * k + t) % L];
        c += f.lowpass[t] * x;
        w += f.highpass[t] * x;
    }
}

}  // namespace detail

/// Recomputes every coefficient of the partial tree from the data, without
/// the incremental bookkeeping. Returns {c, w} per level.
inline std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>> recompute_particle_coefficients(
    const Particle& P, const NodeMoments& mom, const WaveletFilter& f) {
    const int top = static_cast<int>(P.node.size()) - 1;
    std::vector<std::vector<double>> c(top + 1), w(top + 1);
    for (int j = top; j >= 0; --j) {
        const std::size_t len = P.node[j].size();
        c[j].assign(len, 0.0);
        w[j].assign(len, 0.0);
        const std::size_t e = j < top ? P.node[j + 1].size() / 2 : 0;
        const std::size_t L = j < top ? c[j + 1].size() : 0;
        for (std::size_t k = 0; k < len; ++k) {
            if (k >= e) {
                c[j][k] = mom.scale(P.node[j][k], j);
                continue;
            }
            for (std::size_t t = 0; t < f.lowpass.size(); ++t) {
                double x = c[j + 1][(2 * k + t) % L];
                c[j][k] += f.lowpass[t] * x;
                w[j][k] += f.highpass[t] * x;
            }
        }
    }
    return {std::move(c), std::move(w)};
}

/// Sequential Monte Carlo over trees under the target filter, with the
/// no-pruning Haar posterior as proposal. Nodes are expanded breadth-first.
inline SmcResult smc_run(const NodeMoments& mom, const PosteriorMaps& maps, const HyperParams& hyper,
                         const WaveletFilter& filter, const SmcOptions& opt) {
    filter.validate();
    const Grid& g = mom.grid;
    if (!(maps.grid == g)) throw InputError("posterior maps do not belong to this observation");
    if (opt.particles < 1) throw InputError("need at least one particle");
    if (!(opt.ess_threshold > 0.0 && opt.ess_threshold <= 1.0)) throw InputError("ESS threshold must lie in (0, 1]");
    for (double e : maps.eta_post)
        if (e > 0.0) throw InputError("SMC proposal maps must come from the model without pruning");
    const int m = g.dims(), J = g.total_level(), l = filter.half_support();
    const std::size_t I = opt.particles;
    const CoefficientModel cm(hyper, J);

    SmcResult res;
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < I; ++i) rngs.emplace_back(derive_seed(opt.seed, i));
    Rng resample_rng(derive_seed(opt.seed, I + 0x5eedULL));

    Particle init;
    init.node = {{0}};
    init.split = {{-1}};
    init.c = {{mom.scale(0, 0)}};
    init.w = {{0.0}};
    init.log_m = {{0.0}};
    init.log_weight = opt.weighting == SmcWeighting::Lookahead ? maps.log_evidence() : 0.0;
    res.particles.assign(I, init);

    std::vector<std::size_t> slots(m);
    std::vector<std::size_t> changed, parents;
    std::vector<double> logw(I);

    for (int j = 0; j < J; ++j) {
        const std::size_t count = std::size_t{1} << j;
        for (std::size_t k = 0; k < count; ++k) {
            for (std::size_t i = 0; i < I; ++i) {
                Particle& P = res.particles[i];
                if (static_cast<int>(P.node.size()) == j + 1) {
                    P.node.emplace_back();
                    P.split.emplace_back();
                    P.c.emplace_back();
                    P.w.emplace_back();
                    P.log_m.emplace_back();
                }
                const std::size_t f = P.node[j][k];
                std::size_t rest = f;
                for (int d = m - 1; d >= 0; --d) {
                    const std::size_t radix = 2 * g.side(d) - 1;
                    slots[d] = rest % radix;
                    rest /= radix;
                }
                // propose the split dimension from the Haar posterior
                const double u = uniform01(rngs[i]);
                const int d = detail::draw_index(m, [&](int q) { return maps.lambda(f, q); }, u);
                if (d < 0) throw NumericalError("no admissible split at node " + describe(g.node(f), g));
                P.split[j][k] = d;
                const std::size_t lf = f + (slots[d] + 1) * g.slot_stride(d), rf = lf + g.slot_stride(d);
                P.node[j + 1].push_back(lf);
                P.node[j + 1].push_back(rf);
                P.split[j + 1].push_back(-1);
                P.split[j + 1].push_back(-1);
                P.c[j + 1].push_back(mom.scale(lf, j + 1));
                P.c[j + 1].push_back(mom.scale(rf, j + 1));
                P.w[j + 1].push_back(0.0);
                P.w[j + 1].push_back(0.0);
                P.log_m[j + 1].push_back(0.0);
                P.log_m[j + 1].push_back(0.0);

                double delta = 0.0;
                changed.clear();
                const std::size_t first = k + 1 >= static_cast<std::size_t>(l) ? k + 1 - l : 0;
                for (std::size_t q = first; q <= k; ++q) changed.push_back(q);
                for (int lev = j; lev >= 0; --lev) {
                    res.max_changed_per_level = std::max(res.max_changed_per_level, static_cast<int>(changed.size()));
                    for (std::size_t q : changed) {
                        double cq, wq;
                        detail::smc_recompute(filter, P, lev, q, cq, wq);
                        P.c[lev][q] = cq;
                        P.w[lev][q] = wq;
                        double lm = cm.mixture(wq, lev).log_m;
                        delta += lm - P.log_m[lev][q];
                        P.log_m[lev][q] = lm;
                    }
                    if (lev == 0) break;
                    // parents reading any changed entry through the periodic window
                    parents.clear();
                    const std::size_t L = P.c[lev].size();
                    for (std::size_t q : changed)
                        for (std::size_t t = 0; t < 2 * static_cast<std::size_t>(l); ++t) {
                            std::size_t r = (q + L * 2 * l - t) % L;
                            if (r % 2 == 0) parents.push_back(r / 2);
                        }
                    std::sort(parents.begin(), parents.end());
                    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
                    changed.swap(parents);
                }

                double inc = delta;
                if (opt.weighting == SmcWeighting::Lookahead) {
                    // Psi ratio over the Haar factor lambda M_d Phi(l) Phi(r) / Phi(A) times prior / proposal
                    const double wh = mom.detail(f, d, slots[d], j);
                    inc -= cm.mixture(wh, j).log_m;
                } else {
                    const double lam = detail::prior_lambda(g, slots, f, maps.prior, d);
                    inc += std::log(lam) - std::log(maps.lambda(f, d));
                }
                P.log_weight += inc;

                if (opt.check_incremental) {
                    auto [rc, rw] = recompute_particle_coefficients(P, mom, filter);
                    for (std::size_t a = 0; a < rc.size(); ++a)
                        for (std::size_t b = 0; b < rc[a].size(); ++b) {
                            res.max_incremental_error = std::max(res.max_incremental_error, std::abs(rc[a][b] - P.c[a][b]));
                            res.max_incremental_error = std::max(res.max_incremental_error, std::abs(rw[a][b] - P.w[a][b]));
                        }
                }
            }
            ++res.moves;

            for (std::size_t i = 0; i < I; ++i) logw[i] = res.particles[i].log_weight;
            const double logW = num::log_sum(logw);
            if (!std::isfinite(logW))
                throw WeightCollapse("particle weights collapsed at node " +
                                     describe(g.node(res.particles[0].node[j][k]), g));
            double sum_sq = 0.0;
            for (double v : logw) sum_sq += std::exp(2.0 * (v - logW));
            const double ess = 1.0 / sum_sq;
            if (ess < opt.ess_threshold * static_cast<double>(I)) {
                std::vector<double> cdf(I);
                double acc = 0.0;
                for (std::size_t i = 0; i < I; ++i) cdf[i] = acc += std::exp(logw[i] - logW);
                std::vector<std::size_t> pick(I);
                const double u0 = uniform01(resample_rng);
                for (std::size_t i = 0; i < I; ++i) {
                    double u = opt.resampling == Resampling::Systematic ? (u0 + static_cast<double>(i)) / I
                                                                        : (i == 0 ? u0 : uniform01(resample_rng));
                    u *= acc;
                    pick[i] = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), I - 1);
                }
                std::vector<Particle> next;
                next.reserve(I);
                for (std::size_t i = 0; i < I; ++i) next.push_back(res.particles[pick[i]]);
                const double reset = logW - std::log(static_cast<double>(I));
                for (auto& p : next) p.log_weight = reset;
                res.particles.swap(next);
                ++res.resample_count;
            }
        }
    }
    for (std::size_t i = 0; i < I; ++i) logw[i] = res.particles[i].log_weight;
    const double logW = num::log_sum(logw);
    if (!std::isfinite(logW)) throw WeightCollapse("particle weights collapsed at the final node");
    res.weights.resize(I);
    for (std::size_t i = 0; i < I; ++i) res.weights[i] = std::exp(logw[i] - logW);
    res.log_evidence = logW - std::log(static_cast<double>(I));
    return res;
}

/// Converts a completed particle into an RdpTree.
inline RdpTree particle_tree(const Particle& P, const Grid& g) {
    RdpTree tree(g);
    std::vector<int> row{0};
    for (std::size_t j = 0; j + 1 < P.node.size(); ++j) {
        std::vector<int> next;
        for (std::size_t k = 0; k < row.size() && k < P.node[j + 1].size() / 2; ++k) {
            int li = tree.split(row[k], P.split[j][k]);
            next.push_back(li);
            next.push_back(li + 1);
        }
        row.swap(next);
    }
    return tree;
}

/// E(f | y, T, basis) for a completed particle: details shrunk to rho~ mu1(w),
/// inverse periodic transform, then placed at the tree's atoms.
inline std::vector<double> particle_conditional_mean(const Particle& P, const NodeMoments& mom,
                                                     const HyperParams& hyper, const WaveletFilter& filter) {
    const Grid& g = mom.grid;
    const int J = g.total_level();
    if (static_cast<int>(P.node.size()) != J + 1 || P.node[J].size() != g.size())
        throw InputError("particle is not fully expanded");
    const CoefficientModel cm(hyper, J);
    std::vector<double> row{P.c[0][0]};
    for (int j = 0; j < J; ++j) {
        std::vector<double> z(P.w[j].size());
        for (std::size_t k = 0; k < z.size(); ++k) {
            double w = P.w[j][k];
            z[k] = cm.mixture(w, j).rho_post * cm.mu1(w, j);
        }
        row = periodic_synthesis(filter, row, z);
    }
    std::vector<double> out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        DyadicNode a = g.node(P.node[J][k]);
        std::vector<std::size_t> coords(g.dims());
        for (int i = 0; i < g.dims(); ++i) coords[i] = a.dims[i].offset;
        out[g.location(coords)] = row[k];
    }
    return out;
}

inline std::vector<double> smc_weighted_mean(const SmcResult& r, const NodeMoments& mom, const HyperParams& hyper,
                                             const WaveletFilter& filter) {
    std::vector<double> out(mom.grid.size(), 0.0);
    for (std::size_t i = 0; i < r.particles.size(); ++i) {
        if (r.weights[i] == 0.0) continue;
        auto est = particle_conditional_mean(r.particles[i], mom, hyper, filter);
        for (std::size_t x = 0; x < out.size(); ++x) out[x] += r.weights[i] * est[x];
    }
    return out;
}

/// SMC reconstruction averaged over circular shifts; one independent particle
/// system per shift. Pruning is switched off in the proposal.
inline std::vector<double> smc_denoise(const Observation& obs, HyperParams hyper, const WaveletFilter& filter,
                                       const SmcOptions& opt, const std::vector<std::vector<long>>& shifts,
                                       unsigned threads = 1) {
    hyper.eta0 = 0.0;
    return cycle_spin(obs, shifts, threads, [&](const Observation& o, std::size_t k) {
        NodeMoments mom(o);
        PosteriorMaps maps = run_op(mom, hyper);
        SmcOptions local = opt;
        local.seed = derive_seed(opt.seed, k);
        SmcResult r = smc_run(mom, maps, hyper, filter, local);
        return smc_weighted_mean(r, mom, hyper, filter);
    });
}

}  // namespace warp
