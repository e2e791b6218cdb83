#pragma once

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "block_stats.hpp"
#include "error.hpp"
#include "index_space.hpp"
#include "parallel.hpp"
#include "posterior.hpp"
#include "rng.hpp"
#include "shrinkage.hpp"

namespace warp {

/// Top-down maps: psi0 = P(A in T, R(A)=0 | y), phi0 = E(c(A) 1{A in T, R=0} | y),
/// phi = E(c(A) 1{A in T} | y).
struct MeanMaps {
    std::vector<double> psi0, phi0, phi;
};

namespace detail {

inline double prior_lambda(const Grid& g, std::span<const std::size_t> slots, std::size_t flat,
                           const SplitPrior& prior, int d) {
    if (!prior) {
        int ndiv = 0;
        for (int i = 0; i < g.dims(); ++i) ndiv += slot_level(slots[i]) < g.level(i);
        return 1.0 / ndiv;
    }
    std::vector<double> loglam(g.dims());
    log_split_prior(g, slots, flat, prior, loglam);
    return std::exp(loglam[d]);
}

}  // namespace detail

inline MeanMaps posterior_mean_maps(const PosteriorMaps& maps, const NodeMoments& mom, const HyperParams& hyper) {
    const Grid& g = mom.grid;
    if (!(maps.grid == g) || maps.log_psi.size() != g.node_count() || maps.eta_post.size() != g.node_count())
        throw InputError("posterior maps do not belong to this observation");
    const int m = g.dims(), J = g.total_level();
    const CoefficientModel cm(hyper, J);
    MeanMaps mm;
    mm.psi0.assign(g.node_count(), 0.0);
    mm.phi0.assign(g.node_count(), 0.0);
    mm.phi.assign(g.node_count(), 0.0);
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    std::vector<std::size_t> pslots(m);
    for_each_node(g, NodeOrder::TopDown, [&](std::size_t f, std::span<const std::size_t> slots) {
        const double eta = maps.eta_post[f];
        if (f == 0) {
            double c = mom.scale(0, 0);
            mm.psi0[0] = 1.0 - eta;
            mm.phi0[0] = (1.0 - eta) * c;
            mm.phi[0] = c;
            return;
        }
        const int depth = slots_depth(slots);
        int ndiv = 0;
        if (!maps.prior)
            for (int i = 0; i < m; ++i) ndiv += slot_level(slots[i]) < g.level(i);
        double xi = 0.0, psi = 0.0, carry = 0.0;
        for (int d = 0; d < m; ++d) {
            const std::size_t s = slots[d];
            if (s == 0) continue;
            const std::size_t ps = (s - 1) / 2;
            const std::size_t p = f - (s - ps) * g.slot_stride(d);
            double lam;
            if (!maps.prior) {
                lam = 1.0 / (ndiv + (slot_level(s) == g.level(d) ? 1 : 0));
            } else {
                std::copy(slots.begin(), slots.end(), pslots.begin());
                pslots[d] = ps;
                lam = detail::prior_lambda(g, pslots, p, maps.prior, d);
            }
            carry += (mm.phi[p] - mm.phi0[p]) * lam;
            const double lt = maps.lambda(p, d);
            if (lt == 0.0) continue;
            const double w = mom.detail(p, d, ps, depth - 1);
            const double sgn = (s & 1) ? 1.0 : -1.0;  // odd slot = left child
            xi += lt * (mm.phi0[p] + sgn * maps.rho(p, d) * cm.mu1(w, depth - 1) * mm.psi0[p]);
            psi += mm.psi0[p] * lt;
        }
        xi *= inv_sqrt2;
        mm.psi0[f] = psi * (1.0 - eta);
        mm.phi0[f] = (1.0 - eta) * xi;
        mm.phi[f] = xi + carry * inv_sqrt2;
    });
    return mm;
}

/// Exact posterior mean E(f | y) in location order.
inline std::vector<double> posterior_mean(const PosteriorMaps& maps, const NodeMoments& mom, const HyperParams& hyper) {
    MeanMaps mm = posterior_mean_maps(maps, mom, hyper);
    const Grid& g = mom.grid;
    std::vector<double> out(g.size());
    for (std::size_t loc = 0; loc < g.size(); ++loc) out[loc] = mm.phi[g.atom_flat(loc)];
    return out;
}

/// Full pipeline for fixed hyperparameters.
inline std::vector<double> denoise(const Observation& obs, const HyperParams& hyper) {
    NodeMoments mom(obs);
    PosteriorMaps maps = run_op(mom, hyper);
    return posterior_mean(maps, mom, hyper);
}

/// Block sums over 2x..x2 cells divided by sqrt(cell size), repeated `steps`
/// times. The result has the same noise level and, node for node at equal
/// depth, the same detail coefficients as the coarse part of the input.
inline Observation haar_coarsen(const Observation& obs, int steps) {
    Observation cur = obs;
    for (int s = 0; s < steps; ++s) {
        const Grid& g = cur.grid;
        std::vector<int> levels(g.dims());
        int halved = 0;
        for (int i = 0; i < g.dims(); ++i) {
            levels[i] = std::max(g.level(i) - 1, 0);
            halved += g.level(i) > 0;
        }
        if (halved == 0) break;
        Grid coarse(levels);
        std::vector<double> v(coarse.size(), 0.0);
        for (std::size_t loc = 0; loc < g.size(); ++loc) {
            auto c = g.coords(loc);
            for (int i = 0; i < g.dims(); ++i)
                if (g.level(i) > 0) c[i] /= 2;
            v[coarse.location(c)] += cur.values[loc];
        }
        const double scale = std::pow(2.0, -0.5 * halved);
        for (double& x : v) x *= scale;
        cur = Observation(coarse, std::move(v), obs.sigma);
    }
    return cur;
}

namespace detail {

inline std::size_t child_flat(const Grid& g, const DyadicNode& a, std::size_t flat, int d) {
    return flat + (interval_slot(a.dims[d].level, a.dims[d].offset) + 1) * g.slot_stride(d);
}

// Inverse-CDF draw over weights in index order; zero-weight entries are never chosen.
template <class W>
int draw_index(int count, W&& weight, double u) {
    double acc = 0.0;
    int last = -1;
    for (int d = 0; d < count; ++d) {
        double p = weight(d);
        if (p <= 0.0) continue;
        last = d;
        acc += p;
        if (u < acc) return d;
    }
    return last;
}

}  // namespace detail

/// One exact posterior draw of (T, R, S): prune ~ Bern(eta~), split ~ lambda~,
/// slab ~ Bern(rho~_d), recursively from the root.
inline RdpTree sample_posterior_tree(const PosteriorMaps& maps, Rng& rng) {
    const Grid& g = maps.grid;
    const int m = g.dims();
    RdpTree tree(g);
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, f] = stack.back();
        stack.pop_back();
        if (g.is_atomic(tree[i].block)) continue;
        double u_prune = uniform01(rng), u_dim = uniform01(rng), u_slab = uniform01(rng);
        if (u_prune < maps.eta_post[f]) {
            tree[i].pruned = true;
            continue;
        }
        int d = detail::draw_index(m, [&](int k) { return maps.lambda(f, k); }, u_dim);
        if (d < 0) throw NumericalError("no admissible split at node " + describe(tree[i].block, g));
        tree[i].slab = u_slab < maps.rho(f, d);
        std::size_t lf = detail::child_flat(g, tree[i].block, f, d);
        int li = tree.split(i, d);
        stack.push_back({li + 1, lf + g.slot_stride(d)});
        stack.push_back({li, lf});
    }
    return tree;
}

inline std::vector<RdpTree> sample_posterior_trees(const PosteriorMaps& maps, std::size_t count, std::uint64_t seed) {
    std::vector<RdpTree> out;
    out.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        Rng rng(derive_seed(seed, b));
        out.push_back(sample_posterior_tree(maps, rng));
    }
    return out;
}

/// Grows every pruned or unexpanded leaf down to atoms with splits drawn from
/// the prior selection probabilities. Prune markers are cleared.
inline RdpTree complete_from_prior(RdpTree tree, Rng& rng, const SplitPrior& prior = {}) {
    const Grid& g = tree.grid();
    const int m = g.dims();
    std::vector<double> loglam(m);
    std::vector<std::size_t> slots(m);
    std::vector<int> stack{0};
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        tree[i].pruned = false;
        if (g.is_atomic(tree[i].block)) continue;
        if (tree[i].is_leaf()) {
            const auto& b = tree[i].block;
            for (int k = 0; k < m; ++k) slots[k] = interval_slot(b.dims[k].level, b.dims[k].offset);
            detail::log_split_prior(g, slots, g.flat(b), prior, loglam);
            int d = detail::draw_index(m, [&](int k) { return std::exp(loglam[k]); }, uniform01(rng));
            tree.split(i, d);
        }
        stack.push_back(tree[i].right);
        stack.push_back(tree[i].left);
    }
    return tree;
}

/// E(f | y, T, R) for one sampled tree: unpruned internal coefficients are
/// shrunk to rho~ mu1(w), pruned blocks are flat, c(Omega) is kept.
inline std::vector<double> tree_conditional_mean(const RdpTree& tree, const NodeMoments& mom, const HyperParams& hyper) {
    const Grid& g = mom.grid;
    const CoefficientModel cm(hyper, g.total_level());
    std::vector<double> out(g.size());
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    struct Item {
        int node;
        std::size_t flat;
        double c;
    };
    std::vector<Item> stack{{0, 0, mom.scale(0, 0)}};
    std::vector<std::size_t> lo(g.dims()), ext(g.dims()), cur(g.dims());
    while (!stack.empty()) {
        Item it = stack.back();
        stack.pop_back();
        const TreeNode& n = tree[it.node];
        const int depth = n.block.depth();
        if (n.is_leaf()) {
            // flat block (atomic, pruned, or frontier) carries c / sqrt|A| everywhere
            double v = it.c / std::sqrt(mom.block_size(depth));
            for (int i = 0; i < g.dims(); ++i) {
                lo[i] = g.lower(n.block, i);
                ext[i] = g.extent(n.block, i);
                cur[i] = 0;
            }
            for (std::size_t k = 0, total = g.block_size(n.block); k < total; ++k) {
                std::size_t loc = 0;
                for (int i = 0; i < g.dims(); ++i) loc += (lo[i] + cur[i]) * g.location_stride(i);
                out[loc] = v;
                for (int i = g.dims() - 1; i >= 0; --i) {
                    if (++cur[i] < ext[i]) break;
                    cur[i] = 0;
                }
            }
            continue;
        }
        const int d = n.split;
        const std::size_t sd = interval_slot(n.block.dims[d].level, n.block.dims[d].offset);
        const double w = mom.detail(it.flat, d, sd, depth);
        const double z = cm.mixture(w, depth).rho_post * cm.mu1(w, depth);
        const std::size_t lf = it.flat + (sd + 1) * g.slot_stride(d);
        stack.push_back({n.right, lf + g.slot_stride(d), (it.c - z) * inv_sqrt2});
        stack.push_back({n.left, lf, (it.c + z) * inv_sqrt2});
    }
    return out;
}

struct MonteCarloMean {
    std::vector<double> mean;
    std::vector<double> std_error;  ///< per-location Monte Carlo standard error
};

/// Average of E(f | y, T, R) over B posterior draws.
inline MonteCarloMean rao_blackwell_mean(const NodeMoments& mom, const PosteriorMaps& maps, const HyperParams& hyper,
                                         std::size_t B, std::uint64_t seed) {
    if (B < 1) throw InputError("B must be at least 1");
    const std::size_t n = mom.grid.size();
    std::vector<double> s1(n, 0.0), s2(n, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        Rng rng(derive_seed(seed, b));
        auto est = tree_conditional_mean(sample_posterior_tree(maps, rng), mom, hyper);
        for (std::size_t i = 0; i < n; ++i) {
            s1[i] += est[i];
            s2[i] += est[i] * est[i];
        }
    }
    MonteCarloMean out{std::vector<double>(n), std::vector<double>(n, 0.0)};
    const double Bd = static_cast<double>(B);
    for (std::size_t i = 0; i < n; ++i) {
        out.mean[i] = s1[i] / Bd;
        if (B > 1) {
            double var = std::max(0.0, (s2[i] - Bd * out.mean[i] * out.mean[i]) / (Bd - 1.0));
            out.std_error[i] = std::sqrt(var / Bd);
        }
    }
    return out;
}

/// Circular shift: out[x] = in[x - shift] per dimension.
inline std::vector<double> circular_shift(const Grid& g, std::span<const double> in, std::span<const long> shift) {
    const int m = g.dims();
    std::vector<double> out(in.size());
    std::vector<std::size_t> c(m, 0);
    std::vector<std::size_t> off(m);
    for (int i = 0; i < m; ++i) {
        long s = static_cast<long>(g.side(i));
        off[i] = static_cast<std::size_t>(((shift[i] % s) + s) % s);
    }
    for (std::size_t loc = 0; loc < in.size(); ++loc) {
        std::size_t dst = 0;
        for (int i = 0; i < m; ++i) dst += ((c[i] + off[i]) & (g.side(i) - 1)) * g.location_stride(i);
        out[dst] = in[loc];
        for (int i = m - 1; i >= 0; --i) {
            if (++c[i] < g.side(i)) break;
            c[i] = 0;
        }
    }
    return out;
}

/// Default shift set: offsets -r..r per dimension, r = 5 (1D, 2D), 2 (3D),
/// 1 beyond, capped so offsets stay distinct modulo each side length.
inline std::vector<std::vector<long>> default_shifts(const Grid& g) {
    const int m = g.dims();
    const long R = m <= 2 ? 5 : (m == 3 ? 2 : 1);
    std::vector<long> radius(m);
    for (int i = 0; i < m; ++i) radius[i] = std::min<long>(R, (static_cast<long>(g.side(i)) - 1) / 2);
    std::vector<std::vector<long>> out;
    std::vector<long> cur(m);
    for (int i = 0; i < m; ++i) cur[i] = -radius[i];
    while (true) {
        out.push_back(cur);
        int i = m - 1;
        for (; i >= 0; --i) {
            if (cur[i] < radius[i]) {
                ++cur[i];
                break;
            }
            cur[i] = -radius[i];
        }
        if (i < 0) break;
    }
    return out;
}

/// Averages the fixed-hyperparameter reconstruction over circularly shifted copies.
template <class Reconstruct>
std::vector<double> cycle_spin(const Observation& obs, const std::vector<std::vector<long>>& shifts, unsigned threads,
                               Reconstruct&& reconstruct) {
    if (shifts.empty()) throw InputError("empty shift set");
    const Grid& g = obs.grid;
    for (const auto& s : shifts)
        if (static_cast<int>(s.size()) != g.dims()) throw InputError("shift vector has wrong dimension");
    std::vector<double> out(g.size(), 0.0);
    // Batches of `threads` shifts, summed in shift order so the result does
    // not depend on the thread count.
    const std::size_t batch = std::max(1u, threads);
    std::vector<std::vector<double>> part(std::min(batch, shifts.size()));
    for (std::size_t start = 0; start < shifts.size(); start += batch) {
        const std::size_t n = std::min(batch, shifts.size() - start);
        parallel_for(n, threads, [&](std::size_t j) {
            const std::size_t k = start + j;
            std::vector<long> neg;
            for (long v : shifts[k]) neg.push_back(-v);
            Observation sh{g, circular_shift(g, obs.values, shifts[k]), obs.sigma};
            part[j] = circular_shift(g, reconstruct(sh, k), neg);
        });
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += part[j][i];
    }
    for (double& v : out) v /= static_cast<double>(shifts.size());
    return out;
}

inline std::vector<double> cycle_spin_denoise(const Observation& obs, const HyperParams& hyper,
                                              const std::vector<std::vector<long>>& shifts, unsigned threads = 1) {
    return cycle_spin(obs, shifts, threads, [&](const Observation& o, std::size_t) { return denoise(o, hyper); });
}

/// Empirical-Bayes denoising: sigma estimate, evidence grid search, then the
/// posterior mean averaged over circular shifts.
struct PipelineOptions {
    std::vector<HyperParams> candidates;  ///< empty: default_candidate_grid
    std::vector<std::vector<long>> shifts;  ///< empty: default_shifts
    int tune_coarsen = 0;                  ///< run the grid search on a coarsened copy
    unsigned threads = 1;
};

struct PipelineResult {
    HyperParams hyper;
    GridSearchResult search;
    std::vector<double> estimate;
};

inline PipelineResult empirical_bayes_denoise(const Observation& obs, HyperParams base, const PipelineOptions& opt = {}) {
    base.sigma = obs.sigma ? *obs.sigma : estimate_sigma(obs);
    PipelineResult r;
    auto cands = opt.candidates.empty() ? default_candidate_grid(base) : opt.candidates;
    for (auto& c : cands) c.sigma = base.sigma;
    Observation tune = haar_coarsen(obs, opt.tune_coarsen);
    r.search = grid_search_mmle(NodeMoments(tune), std::move(cands), opt.threads);
    r.hyper = r.search.best_params();
    r.estimate = cycle_spin_denoise(obs, r.hyper, opt.shifts.empty() ? default_shifts(obs.grid) : opt.shifts, opt.threads);
    return r;
}

// ---------------------------------------------------------------------------
// Energy concentration

enum class EnergyMode { WarpSample, Fixed1d, Fixed2d };

/// Haar detail coefficients of y under a fully refined tree.
inline std::vector<double> tree_haar_details(const RdpTree& tree, const NodeMoments& mom) {
    const Grid& g = mom.grid;
    std::vector<double> out;
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, f] = stack.back();
        stack.pop_back();
        const TreeNode& n = tree[i];
        if (n.is_leaf()) {
            if (!g.is_atomic(n.block)) throw InputError("tree is not fully refined");
            continue;
        }
        const int d = n.split;
        const std::size_t sd = interval_slot(n.block.dims[d].level, n.block.dims[d].offset);
        out.push_back(mom.detail(f, d, sd, n.block.depth()));
        std::size_t lf = f + (sd + 1) * g.slot_stride(d);
        stack.push_back({n.left, lf});
        stack.push_back({n.right, lf + g.slot_stride(d)});
    }
    return out;
}

namespace detail {

// Orthonormal 1D Haar pyramid; leaves the scale coefficient in buf[0] and
// appends the details.
inline void haar_1d_pyramid(std::vector<double>& buf, std::vector<double>& details) {
    std::size_t len = buf.size();
    std::vector<double> tmp(len);
    while (len > 1) {
        std::size_t half = len / 2;
        for (std::size_t t = 0; t < half; ++t) {
            tmp[t] = (buf[2 * t] + buf[2 * t + 1]) / std::numbers::sqrt2;
            details.push_back((buf[2 * t] - buf[2 * t + 1]) / std::numbers::sqrt2);
        }
        std::copy(tmp.begin(), tmp.begin() + half, buf.begin());
        len = half;
    }
}

}  // namespace detail

/// Detail coefficients of the row-major vectorization under the 1D Haar DWT.
inline std::vector<double> fixed_1d_details(const Observation& obs) {
    std::vector<double> buf = obs.values, details;
    detail::haar_1d_pyramid(buf, details);
    return details;
}

/// Detail coefficients of the separable (Mallat) 2D Haar pyramid.
inline std::vector<double> fixed_2d_details(const Observation& obs) {
    const Grid& g = obs.grid;
    if (g.dims() != 2) throw InputError("separable 2D Haar needs a 2D grid");
    std::size_t R = g.side(0), C = g.side(1);
    const std::size_t stride = C;
    std::vector<double> a = obs.values, details;
    while (R > 1 && C > 1) {
        std::size_t hr = R / 2, hc = C / 2;
        std::vector<double> ll(hr * hc);
        for (std::size_t r = 0; r < hr; ++r)
            for (std::size_t c = 0; c < hc; ++c) {
                double x00 = a[(2 * r) * stride + 2 * c], x01 = a[(2 * r) * stride + 2 * c + 1];
                double x10 = a[(2 * r + 1) * stride + 2 * c], x11 = a[(2 * r + 1) * stride + 2 * c + 1];
                ll[r * hc + c] = (x00 + x01 + x10 + x11) / 2.0;
                details.push_back((x00 - x01 + x10 - x11) / 2.0);
                details.push_back((x00 + x01 - x10 - x11) / 2.0);
                details.push_back((x00 - x01 - x10 + x11) / 2.0);
            }
        for (std::size_t r = 0; r < hr; ++r)
            for (std::size_t c = 0; c < hc; ++c) a[r * stride + c] = ll[r * hc + c];
        R = hr;
        C = hc;
    }
    // remaining band is a single row or column: finish in 1D
    std::vector<double> rest;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) rest.push_back(a[r * stride + c]);
    detail::haar_1d_pyramid(rest, details);
    return details;
}

struct EnergyCurve {
    std::vector<double> fractions;
    std::vector<std::size_t> counts;  ///< coefficients needed to reach each fraction
    double total = 0.0;               ///< centered energy
};

inline std::vector<double> default_energy_fractions() {
    std::vector<double> f;
    for (int k = 50; k <= 99; ++k) f.push_back(k / 100.0);
    f.push_back(0.995);
    f.push_back(0.999);
    return f;
}

/// Smallest k such that the k largest squared details reach fraction * total.
inline EnergyCurve energy_curve(std::vector<double> details, std::span<const double> fractions) {
    for (double& v : details) v *= v;
    std::sort(details.begin(), details.end(), std::greater<>());
    EnergyCurve ec;
    ec.fractions.assign(fractions.begin(), fractions.end());
    // cumulative sums with the smallest terms added last
    std::vector<double> cum(details.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < details.size(); ++i) cum[i] = acc += details[i];
    ec.total = acc;
    for (double fr : fractions) {
        double target = fr * ec.total;
        auto it = std::lower_bound(cum.begin(), cum.end(), target * (1.0 - 1e-12));
        std::size_t k = it == cum.end() ? cum.size() : static_cast<std::size_t>(it - cum.begin()) + 1;
        if (ec.total == 0.0) k = 0;
        ec.counts.push_back(k);
    }
    return ec;
}

/// Energy curve under a posterior-sampled WARP tree (pruned subtrees completed
/// from the prior) or a fixed Haar basis.
inline EnergyCurve fixed_dwt_energy(const Observation& obs, EnergyMode mode, const HyperParams& hyper,
                                    std::uint64_t seed, std::span<const double> fractions) {
    switch (mode) {
        case EnergyMode::Fixed1d: return energy_curve(fixed_1d_details(obs), fractions);
        case EnergyMode::Fixed2d: return energy_curve(fixed_2d_details(obs), fractions);
        case EnergyMode::WarpSample: break;
    }
    NodeMoments mom(obs);
    PosteriorMaps maps = run_op(mom, hyper);
    Rng rng(derive_seed(seed, 0));
    RdpTree tree = complete_from_prior(sample_posterior_tree(maps, rng), rng);
    return energy_curve(tree_haar_details(tree, mom), fractions);
}

struct EnergyReport {
    std::vector<double> fractions;
    std::vector<std::size_t> warp, fixed1d, fixed2d;  ///< fixed2d empty unless m = 2
    /// 100 * (1 - warp / fixed2d), or versus fixed1d when there is no 2D baseline
    std::vector<double> saving_pct;
};

inline EnergyReport energy_report(const Observation& obs, const HyperParams& hyper, std::uint64_t seed,
                                  std::span<const double> fractions) {
    EnergyReport r;
    r.fractions.assign(fractions.begin(), fractions.end());
    r.warp = fixed_dwt_energy(obs, EnergyMode::WarpSample, hyper, seed, fractions).counts;
    r.fixed1d = fixed_dwt_energy(obs, EnergyMode::Fixed1d, hyper, seed, fractions).counts;
    if (obs.grid.dims() == 2) r.fixed2d = fixed_dwt_energy(obs, EnergyMode::Fixed2d, hyper, seed, fractions).counts;
    const auto& base = r.fixed2d.empty() ? r.fixed1d : r.fixed2d;
    for (std::size_t i = 0; i < fractions.size(); ++i)
        r.saving_pct.push_back(base[i] == 0 ? 0.0 : 100.0 * (1.0 - static_cast<double>(r.warp[i]) / base[i]));
    return r;
}

inline void write_energy_csv(std::ostream& os, const EnergyReport& r) {
    os << "fraction,count_warp,count_fixed1d,count_fixed2d,saving_pct\n";
    for (std::size_t i = 0; i < r.fractions.size(); ++i) {
        os << r.fractions[i] << ',' << r.warp[i] << ',' << r.fixed1d[i] << ',';
        if (!r.fixed2d.empty()) os << r.fixed2d[i];
        os << ',' << r.saving_pct[i] << '\n';
    }
}

}  // namespace warp
