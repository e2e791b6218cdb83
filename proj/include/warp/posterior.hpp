#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "block_stats.hpp"
#include "error.hpp"
#include "index_space.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "shrinkage.hpp"

namespace warp {

/// Prior split-selection override: fills lambda[d] for node A (entries for
/// non-divisible dimensions are ignored and treated as zero). An empty
/// function selects the uniform prior over divisible dimensions.
using SplitPrior = std::function<void(const DyadicNode&, std::span<double>)>;

/// Location of a node inside a recursion, handed to user marginal evaluators.
struct NodeSite {
    std::size_t flat;
    int depth;
};

namespace detail {

// Fills log lambda_d for the node; returns the number of divisible dimensions.
inline int log_split_prior(const Grid& g, std::span<const std::size_t> slots, std::size_t flat,
                           const SplitPrior& prior, std::span<double> loglam) {
    const int m = g.dims();
    int ndiv = 0;
    for (int d = 0; d < m; ++d) ndiv += slot_level(slots[d]) < g.level(d);
    if (!prior) {
        double u = -std::log(static_cast<double>(ndiv));
        for (int d = 0; d < m; ++d) loglam[d] = slot_level(slots[d]) < g.level(d) ? u : num::kNegInf;
        return ndiv;
    }
    std::vector<double> lam(m, 0.0);
    prior(g.node(flat), lam);
    double total = 0.0;
    for (int d = 0; d < m; ++d)
        if (slot_level(slots[d]) < g.level(d)) total += lam[d];
    if (!(total > 0.0)) throw InputError("split prior puts no mass on divisible dimensions at " + describe(g.node(flat), g));
    for (int d = 0; d < m; ++d)
        loglam[d] = slot_level(slots[d]) < g.level(d) ? num::safe_log(lam[d] / total) : num::kNegInf;
    return ndiv;
}

inline void require_finite(double v, const Grid& g, std::size_t flat, const char* what) {
    if (!std::isfinite(v))
        throw NumericalError(std::string("non-finite ") + what + " at node " + describe(g.node(flat), g));
}

}  // namespace detail

/// Bottom-up products of the optional-pruning recursion, one slot per node of
/// the universe (per node-and-dimension for the split quantities).
struct PosteriorMaps {
    Grid grid;
    std::vector<double> log_psi;      ///< log Psi(A)
    std::vector<double> eta_post;     ///< posterior pruning probability
    std::vector<double> lambda_post;  ///< [flat * m + d] split probability given not pruned
    std::vector<double> rho_post;     ///< [flat * m + d] slab probability given split in d
    SplitPrior prior;                 ///< prior split selection used to build the maps

    int dims() const { return grid.dims(); }
    double log_evidence() const { return log_psi[0]; }
    double lambda(std::size_t flat, int d) const { return lambda_post[flat * grid.dims() + d]; }
    double rho(std::size_t flat, int d) const { return rho_post[flat * grid.dims() + d]; }
};

/// Optional-pruning model expressed as a three-state Markov tree. States:
/// 0 = slab (S=1, R=0), 1 = spike (S=0, R=0), 2 = pruned (S=0, R=1, absorbing).
struct OpSpec {
    HyperParams hyper;
    SplitPrior prior;

    std::array<double, 9> transition(int j) const {
        double rho = hyper.rho(j), eta = hyper.eta(j);
        double a = rho * (1 - eta), b = (1 - rho) * (1 - eta);
        return {a, b, eta, a, b, eta, 0.0, 0.0, 1.0};
    }
    std::array<double, 3> root() const {
        auto t = transition(0);
        return {t[0], t[1], t[2]};
    }
};

namespace detail {

template <bool Store>
double op_pass(const NodeMoments& mom, const HyperParams& hyper, const SplitPrior& prior,
               std::vector<double>& log_psi, PosteriorMaps* out) {
    const Grid& g = mom.grid;
    const int m = g.dims(), J = g.total_level();
    const CoefficientModel cm(hyper, J);
    log_psi.assign(g.node_count(), 0.0);
    if constexpr (Store) {
        out->eta_post.assign(g.node_count(), 0.0);
        out->lambda_post.assign(g.node_count() * m, 0.0);
        out->rho_post.assign(g.node_count() * m, 0.0);
    }
    std::vector<double> loglam(m), lin(m), expo(m), rho(m);
    std::vector<double> inv_count(m + 1, 0.0);
    for (int k = 1; k <= m; ++k) inv_count[k] = 1.0 / k;
    const double log_eta = cm.log_eta(), log_keep = cm.log_1m_eta();
    for_each_node(g, NodeOrder::BottomUp, [&](std::size_t f, std::span<const std::size_t> slots) {
        const int depth = slots_depth(slots);
        if (depth == J) return;
        // lin[d] = lambda_d * scale_d, expo[d] = base_d + log Psi(l) + log Psi(r); term_d = log lin + expo
        if (prior) {
            log_split_prior(g, slots, f, prior, loglam);
        } else {
            int ndiv = 0;
            for (int d = 0; d < m; ++d) ndiv += slot_level(slots[d]) < g.level(d);
            for (int d = 0; d < m; ++d) loglam[d] = slot_level(slots[d]) < g.level(d) ? inv_count[ndiv] : 0.0;
        }
        const double size = mom.block_size(depth), inv_sqrt = 1.0 / std::sqrt(size);
        double hi = num::kNegInf;
        for (int d = 0; d < m; ++d) {
            lin[d] = 0.0;
            const double lam = prior ? (loglam[d] == num::kNegInf ? 0.0 : std::exp(loglam[d])) : loglam[d];
            if (lam == 0.0) continue;
            std::size_t l = f + (slots[d] + 1) * g.slot_stride(d), r = l + g.slot_stride(d);
            double w = (mom.sum[l] - mom.sum[r]) * inv_sqrt;
            auto mix = cm.mixture_parts(w, depth);
            rho[d] = mix.rho_post;
            lin[d] = lam * mix.scale;
            expo[d] = mix.base + log_psi[l] + log_psi[r];
            hi = std::max(hi, expo[d]);
        }
        double s = 0.0;
        for (int d = 0; d < m; ++d) {
            if (lin[d] == 0.0) continue;
            lin[d] *= expo[d] == hi ? 1.0 : std::exp(expo[d] - hi);
            s += lin[d];
        }
        const double split_total = hi + std::log(s);
        const double a = log_keep + split_total;
        const double b = log_eta == num::kNegInf ? num::kNegInf : log_eta + cm.log_pruned(size, mom.css[f]);
        double lp, eta_post;
        if (b == num::kNegInf) {
            lp = a;
            eta_post = 0.0;
        } else if (a == num::kNegInf) {
            lp = b;
            eta_post = 1.0;
        } else {
            const double e = std::exp(-std::abs(a - b));
            lp = std::max(a, b) + std::log1p(e);
            eta_post = b > a ? 1.0 / (1.0 + e) : e / (1.0 + e);
        }
        require_finite(lp, g, f, "log evidence");
        log_psi[f] = lp;
        if constexpr (Store) {
            out->eta_post[f] = eta_post;
            const double inv = 1.0 / s;
            for (int d = 0; d < m; ++d) {
                if (lin[d] == 0.0) continue;
                out->lambda_post[f * m + d] = lin[d] * inv;
                out->rho_post[f * m + d] = rho[d];
            }
        }
    });
    return log_psi.empty() ? 0.0 : log_psi[0];
}

}  // namespace detail

/// Exact bottom-up recursion for the spike-and-slab model with optional
/// pruning; eta0 = 0 gives the model without pruning.
inline PosteriorMaps run_op(const NodeMoments& mom, const OpSpec& spec) {
    PosteriorMaps maps;
    maps.grid = mom.grid;
    maps.prior = spec.prior;
    detail::op_pass<true>(mom, spec.hyper, spec.prior, maps.log_psi, &maps);
    return maps;
}

inline PosteriorMaps run_op(const NodeMoments& mom, const HyperParams& hyper) {
    return run_op(mom, OpSpec{hyper, {}});
}

/// log Psi(Omega) only, without materializing the maps.
inline double op_log_evidence(const NodeMoments& mom, const HyperParams& hyper, const SplitPrior& prior = {}) {
    std::vector<double> scratch;
    return detail::op_pass<false>(mom, hyper, prior, scratch, nullptr);
}

/// Marginal likelihood of the coefficient w = w_d(A), in log space.
using LogMarginal = std::function<double(const NodeSite&, int d, double w)>;

struct IndependentMaps {
    Grid grid;
    std::vector<double> log_phi;
    std::vector<double> lambda_post;  ///< [flat * m + d]

    double log_evidence() const { return log_phi[0]; }
    double lambda(std::size_t flat, int d) const { return lambda_post[flat * grid.dims() + d]; }
};

/// Independent shrinkage: Phi(A) = sum_d lambda_d M_d(A) Phi(A_l) Phi(A_r).
inline IndependentMaps run_independent_tree(const NodeMoments& mom, const LogMarginal& marginal, const SplitPrior& prior = {}) {
    const Grid& g = mom.grid;
    const int m = g.dims(), J = g.total_level();
    IndependentMaps out;
    out.grid = g;
    out.log_phi.assign(g.node_count(), 0.0);
    out.lambda_post.assign(g.node_count() * m, 0.0);
    std::vector<double> loglam(m), term(m);
    for_each_node(g, NodeOrder::BottomUp, [&](std::size_t f, std::span<const std::size_t> slots) {
        const int depth = slots_depth(slots);
        if (depth == J) return;
        detail::log_split_prior(g, slots, f, prior, loglam);
        for (int d = 0; d < m; ++d) {
            term[d] = num::kNegInf;
            if (loglam[d] == num::kNegInf) continue;
            std::size_t l = f + (slots[d] + 1) * g.slot_stride(d), r = l + g.slot_stride(d);
            double w = mom.detail(f, d, slots[d], depth);
            term[d] = loglam[d] + marginal({f, depth}, d, w) + out.log_phi[l] + out.log_phi[r];
        }
        double total = num::log_sum(term);
        detail::require_finite(total, g, f, "log Phi");
        out.log_phi[f] = total;
        for (int d = 0; d < m; ++d)
            if (term[d] != num::kNegInf) out.lambda_post[f * m + d] = std::exp(term[d] - total);
    });
    return out;
}

/// K-state top-down Markov tree on the latent coefficient states.
struct MarkovTreeSpec {
    int states = 1;
    /// transitions[j][s * K + s'] = P(S(A) = s' | S(parent) = s) for A at depth j; row 0 unused.
    std::vector<std::vector<double>> transitions;
    std::vector<double> root;  ///< distribution of S(Omega)
    std::function<double(int state, const NodeSite&, int d, double w)> log_marginal;

    void validate(int total_level) const {
        const int K = states;
        if (K < 1) throw InputError("Markov tree needs at least one state");
        if (static_cast<int>(root.size()) != K) throw InputError("root distribution has wrong size");
        if (static_cast<int>(transitions.size()) < total_level) throw InputError("missing transition matrices");
        auto check_row = [](std::span<const double> row) {
            double s = 0.0;
            for (double p : row) {
                if (p < 0.0) throw InputError("negative transition probability");
                s += p;
            }
            if (std::abs(s - 1.0) > 1e-12) throw InputError("transition row does not sum to one");
        };
        check_row(root);
        for (int j = 1; j < total_level; ++j) {
            if (static_cast<int>(transitions[j].size()) != K * K) throw InputError("transition matrix has wrong size");
            for (int s = 0; s < K; ++s) check_row(std::span(transitions[j]).subspan(s * K, K));
        }
        if (!log_marginal) throw InputError("Markov tree needs a marginal evaluator");
    }
};

struct MarkovTreeMaps {
    Grid grid;
    int states = 1;
    std::vector<double> log_g;       ///< [flat * K + s]: log sum_d lambda_d M^(s)_d Phi_s(A_l) Phi_s(A_r)
    std::vector<double> log_phi;     ///< [flat * K + s]: log Phi_s(A), s the parent's state
    std::vector<double> split_post;  ///< [(flat * K + s) * m + d]: P(D(A) = d | S(A) = s, y)
    double log_evidence = 0.0;

    /// P(S(A) = s' | S(parent) = s, A in T, y).
    double state_post(const MarkovTreeSpec& spec, std::size_t flat, int depth, int s, int s_next) const {
        const int K = states;
        double p = spec.transitions[depth][s * K + s_next];
        if (p == 0.0) return 0.0;
        return std::exp(std::log(p) + log_g[flat * K + s_next] - log_phi[flat * K + s]);
    }
};

inline MarkovTreeMaps run_markov_tree(const NodeMoments& mom, const MarkovTreeSpec& spec, const SplitPrior& prior = {}) {
    const Grid& g = mom.grid;
    const int m = g.dims(), J = g.total_level(), K = spec.states;
    spec.validate(J);
    MarkovTreeMaps out;
    out.grid = g;
    out.states = K;
    out.log_g.assign(g.node_count() * K, 0.0);
    out.log_phi.assign(g.node_count() * K, 0.0);
    out.split_post.assign(g.node_count() * K * m, 0.0);
    std::vector<double> loglam(m), term(m), gs(K);
    for_each_node(g, NodeOrder::BottomUp, [&](std::size_t f, std::span<const std::size_t> slots) {
        const int depth = slots_depth(slots);
        if (depth == J) return;
        detail::log_split_prior(g, slots, f, prior, loglam);
        for (int s = 0; s < K; ++s) {
            for (int d = 0; d < m; ++d) {
                term[d] = num::kNegInf;
                if (loglam[d] == num::kNegInf) continue;
                std::size_t l = f + (slots[d] + 1) * g.slot_stride(d), r = l + g.slot_stride(d);
                double w = mom.detail(f, d, slots[d], depth);
                term[d] = loglam[d] + spec.log_marginal(s, {f, depth}, d, w) + out.log_phi[l * K + s] +
                          out.log_phi[r * K + s];
            }
            double total = num::log_sum(term);
            gs[s] = total;
            out.log_g[f * K + s] = total;
            for (int d = 0; d < m; ++d)
                if (term[d] != num::kNegInf && total != num::kNegInf)
                    out.split_post[(f * K + s) * m + d] = std::exp(term[d] - total);
        }
        if (depth == 0) return;
        const auto& P = spec.transitions[depth];
        std::vector<double> acc(K);
        for (int s = 0; s < K; ++s) {
            for (int t = 0; t < K; ++t) acc[t] = num::safe_log(P[s * K + t]) + gs[t];
            double v = num::log_sum(acc);
            out.log_phi[f * K + s] = v;
        }
    });
    std::vector<double> acc(K);
    for (int s = 0; s < K; ++s) acc[s] = num::safe_log(spec.root[s]) + out.log_g[s];
    out.log_evidence = num::log_sum(acc);
    detail::require_finite(out.log_evidence, g, 0, "log evidence");
    return out;
}

/// The optional-pruning model as a generic Markov tree, for cross-checking run_op.
inline MarkovTreeSpec op_markov_tree(const OpSpec& op, int total_level) {
    MarkovTreeSpec spec;
    spec.states = 3;
    spec.transitions.resize(std::max(total_level, 1));
    for (int j = 0; j < static_cast<int>(spec.transitions.size()); ++j) {
        auto t = op.transition(j);
        spec.transitions[j].assign(t.begin(), t.end());
    }
    auto r = op.root();
    spec.root.assign(r.begin(), r.end());
    HyperParams h = op.hyper;
    spec.log_marginal = [h, total_level](int s, const NodeSite& site, int, double w) {
        // slab only in state 0; spike and pruned states carry pure noise
        if (s == 0) return log_marginal_slab(w, h.tau(site.depth), h.sigma, h.slab);
        return log_marginal_spike(w, h.sigma);
    };
    return spec;
}

struct GridSearchResult {
    std::vector<HyperParams> candidates;
    std::vector<double> log_evidence;
    std::size_t best = 0;

    const HyperParams& best_params() const { return candidates[best]; }
};

/// Default candidate grid; sigma and slab are taken from `base`. beta = 0 keeps
/// the slab probability constant across depths.
inline std::vector<HyperParams> default_candidate_grid(const HyperParams& base) {
    std::vector<HyperParams> out;
    for (double alpha : {0.5, 1.0, 1.5, 2.0})
        for (double tau0 : {1.0, 4.0, 16.0, 64.0, 256.0, 1024.0})
            for (double beta : {0.0, 0.5, 1.0})
                for (double C : {0.5, 1.0})
                    for (double eta0 : {0.0, 0.1, 0.3, 0.5}) {
                        HyperParams h = base;
                        h.alpha = alpha;
                        h.tau0 = tau0;
                        h.beta = beta;
                        h.C = C;
                        h.eta0 = eta0;
                        out.push_back(h);
                    }
    return out;
}

namespace detail {

// Candidates that define the same prior share one evaluation (the quasi-Cauchy
// slab ignores alpha and tau0).
inline std::tuple<double, double, double, double, double, double, int> prior_key(const HyperParams& h) {
    const bool qc = h.slab == SlabFamily::QuasiCauchy;
    return {qc ? 0.0 : h.alpha, qc ? 0.0 : h.tau0, h.beta, h.C, h.eta0, h.sigma, static_cast<int>(h.slab)};
}

}  // namespace detail

/// Empirical Bayes: argmax of log Psi(Omega) over the candidates; ties keep
/// the earliest candidate.
inline GridSearchResult grid_search_mmle(const NodeMoments& mom, std::vector<HyperParams> candidates,
                                         unsigned threads = 1, const SplitPrior& prior = {}) {
    if (candidates.empty()) throw InputError("empty hyperparameter grid");
    GridSearchResult res;
    res.candidates = std::move(candidates);
    res.log_evidence.assign(res.candidates.size(), 0.0);
    std::map<decltype(detail::prior_key(HyperParams{})), std::size_t> first;
    std::vector<std::size_t> unique, source(res.candidates.size());
    for (std::size_t i = 0; i < res.candidates.size(); ++i) {
        auto [it, fresh] = first.try_emplace(detail::prior_key(res.candidates[i]), i);
        if (fresh) unique.push_back(i);
        source[i] = it->second;
    }
    parallel_for(unique.size(), threads, [&](std::size_t k) {
        const std::size_t i = unique[k];
        res.log_evidence[i] = op_log_evidence(mom, res.candidates[i], prior);
    });
    for (std::size_t i = 0; i < res.candidates.size(); ++i) res.log_evidence[i] = res.log_evidence[source[i]];
    for (std::size_t i = 1; i < res.log_evidence.size(); ++i)
        if (res.log_evidence[i] > res.log_evidence[res.best]) res.best = i;
    return res;
}

inline void write_evidence_csv(std::ostream& os, const GridSearchResult& res) {
    os << "alpha,tau0,beta,C,eta0,sigma,slab,log_evidence,selected\n";
    os.precision(17);
    for (std::size_t i = 0; i < res.candidates.size(); ++i) {
        const auto& h = res.candidates[i];
        os << h.alpha << ',' << h.tau0 << ',' << h.beta << ',' << h.C << ',' << h.eta0 << ',' << h.sigma << ','
           << to_string(h.slab) << ',' << res.log_evidence[i] << ',' << (i == res.best ? 1 : 0) << '\n';
    }
}

}  // namespace warp
