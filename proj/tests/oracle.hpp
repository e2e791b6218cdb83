// Brute-force reference implementations used by the tests. Everything here
// works from explicit trees and direct summation over blocks and shares no
// code with the recursions beyond the closed-form coefficient marginals.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "warp/warp.hpp"

namespace oracle {

using warp::DyadicNode;
using warp::Grid;
using warp::RdpTree;

inline double log_sum(const std::vector<double>& v) { return warp::num::log_sum(v); }

/// Every fully refined canonical RDP of the grid.
inline std::vector<RdpTree> all_trees(const Grid& g) {
    std::vector<RdpTree> done, work{RdpTree(g)};
    while (!work.empty()) {
        RdpTree t = std::move(work.back());
        work.pop_back();
        int open = -1;
        for (int i = 0; i < static_cast<int>(t.nodes().size()); ++i)
            if (t[i].is_leaf() && !g.is_atomic(t[i].block)) {
                open = i;
                break;
            }
        if (open < 0) {
            done.push_back(std::move(t));
            continue;
        }
        for (int d : warp::divisible_dims(t[open].block, g)) {
            RdpTree c = t;
            c.split(open, d);
            work.push_back(std::move(c));
        }
    }
    return done;
}

/// Locations of a block, by direct iteration over the whole grid.
inline std::vector<std::size_t> block_locations(const Grid& g, const DyadicNode& a) {
    std::vector<std::size_t> out;
    for (std::size_t loc = 0; loc < g.size(); ++loc) {
        auto c = g.coords(loc);
        bool in = true;
        for (int i = 0; i < g.dims(); ++i) {
            std::size_t w = g.side(i) >> a.dims[i].level;
            if (c[i] / w != a.dims[i].offset) in = false;
        }
        if (in) out.push_back(loc);
    }
    return out;
}

inline double block_sum(const Grid& g, const std::vector<double>& y, const DyadicNode& a) {
    double s = 0.0;
    for (auto loc : block_locations(g, a)) s += y[loc];
    return s;
}

/// w_d(A) by direct summation.
inline double haar(const Grid& g, const std::vector<double>& y, const DyadicNode& a, int d) {
    auto [l, r] = warp::children(a, d, g);
    return (block_sum(g, y, l) - block_sum(g, y, r)) / std::sqrt(static_cast<double>(block_locations(g, a).size()));
}

inline double uniform_log_lambda(const Grid& g, const DyadicNode& a) {
    return -std::log(static_cast<double>(warp::divisible_dims(a, g).size()));
}

/// Internal (split) nodes of the subtree rooted at i, i included.
inline std::vector<int> internal_nodes(const RdpTree& t, int i) {
    std::vector<int> out, stack{i};
    while (!stack.empty()) {
        int k = stack.back();
        stack.pop_back();
        if (t[k].is_leaf()) continue;
        out.push_back(k);
        stack.push_back(t[k].left);
        stack.push_back(t[k].right);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optional-pruning model by enumeration over (tree, prune configuration).

struct OpBrute {
    double log_evidence = 0.0;
    std::map<std::size_t, double> eta;                  ///< P(R=1 | A reached unpruned)
    std::map<std::pair<std::size_t, int>, double> lam;  ///< P(D=d | A in T, R(A)=0)
    std::map<std::pair<std::size_t, int>, double> rho;  ///< P(S=1 | A in T, R=0, D=d)
    std::vector<double> mean;                           ///< E(f | y)
};

// Prune states per tree node: 0 active, 1 top pruned, 2 below a pruned node.
// Calls emit() once per configuration; `pending` holds nodes still to decide.
inline void prune_configs(const RdpTree& t, const Grid& g, std::vector<char>& st, std::vector<int>& pending,
                          const std::function<void()>& emit) {
    if (pending.empty()) {
        emit();
        return;
    }
    int k = pending.back();
    pending.pop_back();
    if (g.is_atomic(t[k].block)) {
        prune_configs(t, g, st, pending, emit);
    } else {
        auto below = internal_nodes(t, k);
        st[k] = 1;
        for (int q : below)
            if (q != k) st[q] = 2;
        prune_configs(t, g, st, pending, emit);
        for (int q : below) st[q] = 0;
        pending.push_back(t[k].right);
        pending.push_back(t[k].left);
        prune_configs(t, g, st, pending, emit);
        pending.pop_back();
        pending.pop_back();
    }
    pending.push_back(k);
}

inline OpBrute op_brute_force(const Grid& g, const std::vector<double>& y, const warp::HyperParams& h) {
    struct Acc {
        std::vector<double> terms;
    };
    std::map<std::size_t, Acc> reach, pruned, active;
    std::map<std::pair<std::size_t, int>, Acc> split;
    std::map<std::pair<std::size_t, int>, double> rho;
    std::vector<double> all;
    std::vector<std::pair<double, std::vector<double>>> means;

    for (const RdpTree& t : all_trees(g)) {
        const int N = static_cast<int>(t.nodes().size());
        std::vector<double> w(N, 0.0), lam(N, 0.0), logm(N, 0.0), logspike(N, 0.0), rho_post(N, 0.0), mu(N, 0.0);
        for (int k = 0; k < N; ++k) {
            if (t[k].is_leaf()) continue;
            const auto& a = t[k].block;
            int j = a.depth();
            w[k] = haar(g, y, a, t[k].split);
            lam[k] = uniform_log_lambda(g, a);
            double ls = warp::log_marginal_slab(w[k], h.tau(j), h.sigma, h.slab);
            double l0 = warp::log_marginal_spike(w[k], h.sigma);
            double rj = h.rho(j);
            double a1 = rj > 0 ? std::log(rj) + ls : warp::num::kNegInf;
            double a0 = rj < 1 ? std::log1p(-rj) + l0 : warp::num::kNegInf;
            logm[k] = warp::num::log_add(a1, a0);
            logspike[k] = l0;
            rho_post[k] = a1 == warp::num::kNegInf ? 0.0 : std::exp(a1 - logm[k]);
            mu[k] = warp::posterior_mean_mu1(w[k], h.tau(j), h.sigma, h.slab);
            rho[{g.flat(a), t[k].split}] = rho_post[k];
        }
        double c_root = block_sum(g, y, g.root()) / std::sqrt(static_cast<double>(g.size()));
        double log_prior_tree = 0.0;
        for (int k = 0; k < N; ++k)
            if (!t[k].is_leaf()) log_prior_tree += lam[k];

        std::vector<char> st(N, 0);
        std::vector<int> pending{0};
        auto emit = [&] {
            double lw = log_prior_tree;
            for (int k = 0; k < N; ++k) {
                if (t[k].is_leaf()) continue;
                if (st[k] == 0) lw += (h.eta0 < 1 ? std::log1p(-h.eta0) : warp::num::kNegInf) + logm[k];
                if (st[k] == 1) lw += (h.eta0 > 0 ? std::log(h.eta0) : warp::num::kNegInf);
                if (st[k] != 0) lw += logspike[k];
            }
            if (lw == warp::num::kNegInf) return;
            all.push_back(lw);
            // conditional mean: explicit synthesis from the basis vectors
            std::vector<double> f(g.size(), c_root / std::sqrt(static_cast<double>(g.size())));
            for (int k = 0; k < N; ++k) {
                if (t[k].is_leaf() || st[k] != 0) continue;
                double z = rho_post[k] * mu[k];
                const auto& l = t[t[k].left].block;
                auto la = block_locations(g, l), ra = block_locations(g, t[t[k].right].block);
                double s = 1.0 / std::sqrt(static_cast<double>(la.size() + ra.size()));
                for (auto x : la) f[x] += z * s;
                for (auto x : ra) f[x] -= z * s;
            }
            means.push_back({lw, std::move(f)});
            for (int k = 0; k < N; ++k) {
                if (t[k].is_leaf() || st[k] == 2) continue;
                std::size_t fl = g.flat(t[k].block);
                reach[fl].terms.push_back(lw);
                if (st[k] == 1) pruned[fl].terms.push_back(lw);
                if (st[k] == 0) {
                    active[fl].terms.push_back(lw);
                    split[{fl, t[k].split}].terms.push_back(lw);
                }
            }
        };
        prune_configs(t, g, st, pending, emit);
    }
    OpBrute out;
    out.log_evidence = log_sum(all);
    for (auto& [fl, acc] : reach) {
        auto it = pruned.find(fl);
        out.eta[fl] = it == pruned.end() ? 0.0 : std::exp(log_sum(it->second.terms) - log_sum(acc.terms));
    }
    for (auto& [key, acc] : split) {
        auto it = active.find(key.first);
        out.lam[key] = std::exp(log_sum(acc.terms) - log_sum(it->second.terms));
    }
    out.rho = rho;
    out.mean.assign(g.size(), 0.0);
    for (auto& [lw, f] : means) {
        double p = std::exp(lw - out.log_evidence);
        for (std::size_t x = 0; x < f.size(); ++x) out.mean[x] += p * f[x];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generic Markov-tree latent states by enumeration over (tree, state labels).

struct MarkovSpec {
    int K;
    std::vector<double> root;                                         ///< pi
    std::function<double(int depth, int s, int s2)> transition;       ///< P(child state s2 | parent s)
    std::function<double(int s, std::size_t flat, int d, double w)> log_m;
};

inline double markov_brute_force(const Grid& g, const std::vector<double>& y, const MarkovSpec& ms) {
    std::vector<double> all;
    for (const RdpTree& t : all_trees(g)) {
        auto nodes = internal_nodes(t, 0);
        const int N = static_cast<int>(t.nodes().size());
        std::vector<int> parent(N, -1);
        for (int k : nodes) {
            parent[t[k].left] = k;
            parent[t[k].right] = k;
        }
        double log_prior_tree = 0.0;
        std::vector<double> w(N, 0.0);
        for (int k : nodes) {
            log_prior_tree += uniform_log_lambda(g, t[k].block);
            w[k] = haar(g, y, t[k].block, t[k].split);
        }
        std::size_t combos = 1;
        for (std::size_t q = 0; q < nodes.size(); ++q) combos *= ms.K;
        std::vector<int> state(N, 0);
        for (std::size_t c = 0; c < combos; ++c) {
            std::size_t r = c;
            for (int k : nodes) {
                state[k] = static_cast<int>(r % ms.K);
                r /= ms.K;
            }
            double lw = log_prior_tree;
            for (int k : nodes) {
                int s = state[k];
                double p = parent[k] < 0 ? ms.root[s] : ms.transition(t[k].block.depth(), state[parent[k]], s);
                lw += p > 0 ? std::log(p) : warp::num::kNegInf;
                lw += ms.log_m(s, g.flat(t[k].block), t[k].split, w[k]);
            }
            all.push_back(lw);
        }
    }
    return log_sum(all);
}

/// Independent shrinkage: sum over trees of prior times product of marginals.
inline double independent_brute_force(const Grid& g, const std::vector<double>& y,
                                      const std::function<double(std::size_t, int, double)>& log_m) {
    std::vector<double> all;
    for (const RdpTree& t : all_trees(g)) {
        double lw = 0.0;
        for (int k : internal_nodes(t, 0)) {
            lw += uniform_log_lambda(g, t[k].block);
            lw += log_m(g.flat(t[k].block), t[k].split, haar(g, y, t[k].block, t[k].split));
        }
        all.push_back(lw);
    }
    return log_sum(all);
}

// ---------------------------------------------------------------------------
// Posterior over the sampler's outputs (trees truncated at pruned nodes).

inline std::map<std::string, double> prune_tree_posterior(const Grid& g, const std::vector<double>& y,
                                                          const warp::HyperParams& h) {
    using Entry = std::pair<RdpTree, double>;
    std::vector<Entry> done, work{{RdpTree(g), 0.0}};
    while (!work.empty()) {
        auto [t, lw] = std::move(work.back());
        work.pop_back();
        int open = -1;
        for (int i = 0; i < static_cast<int>(t.nodes().size()); ++i)
            if (t[i].is_leaf() && !t[i].pruned && !g.is_atomic(t[i].block)) {
                open = i;
                break;
            }
        if (open < 0) {
            done.push_back({std::move(t), lw});
            continue;
        }
        const auto a = t[open].block;
        const int j = a.depth();
        // pruned: eta * product of spike densities over any completion = eta * p0
        {
            RdpTree c = t;
            c[open].pruned = true;
            auto locs = block_locations(g, a);
            double mean = 0.0;
            for (auto x : locs) mean += y[x];
            mean /= static_cast<double>(locs.size());
            double ss = 0.0;
            for (auto x : locs) ss += (y[x] - mean) * (y[x] - mean);
            double lp0 = -(static_cast<double>(locs.size()) - 1.0) * (warp::num::kLogSqrt2Pi + std::log(h.sigma)) -
                         ss / (2.0 * h.sigma2());
            if (h.eta0 > 0) work.push_back({std::move(c), lw + std::log(h.eta0) + lp0});
        }
        for (int d : warp::divisible_dims(a, g)) {
            RdpTree c = t;
            double w = haar(g, y, a, d);
            double rj = h.rho(j);
            double m = std::log(rj * std::exp(warp::log_marginal_slab(w, h.tau(j), h.sigma, h.slab)) +
                                (1 - rj) * std::exp(warp::log_marginal_spike(w, h.sigma)));
            c.split(open, d);
            double keep = h.eta0 < 1 ? std::log1p(-h.eta0) : warp::num::kNegInf;
            work.push_back({std::move(c), lw + keep + uniform_log_lambda(g, a) + m});
        }
    }
    std::vector<double> lws;
    for (auto& e : done) lws.push_back(e.second);
    double z = log_sum(lws);
    std::map<std::string, double> out;
    for (auto& [t, lw] : done) out[warp::tree_to_json(t).dump()] += std::exp(lw - z);
    return out;
}

/// Reference periodic DWT likelihood of a full tree under a target filter.
inline double tree_log_likelihood(const RdpTree& t, const Grid& g, const std::vector<double>& y,
                                  const warp::WaveletFilter& f, const warp::HyperParams& h) {
    auto perm = warp::permutation_of(t);
    std::vector<double> row = perm.apply<double>(y);
    double ll = 0.0;
    for (int j = g.total_level() - 1; j >= 0; --j) {
        std::vector<double> c, w;
        warp::periodic_analysis(f, row, c, w);
        for (double v : w) {
            double rj = h.rho(j);
            ll += std::log(rj * std::exp(warp::log_marginal_slab(v, h.tau(j), h.sigma, h.slab)) +
                           (1 - rj) * std::exp(warp::log_marginal_spike(v, h.sigma)));
        }
        row = c;
    }
    return ll;
}

inline double tree_log_prior(const RdpTree& t, const Grid& g) {
    double lp = 0.0;
    for (int k : internal_nodes(t, 0)) lp += uniform_log_lambda(g, t[k].block);
    return lp;
}

}  // namespace oracle
