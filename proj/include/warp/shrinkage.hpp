#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "block_stats.hpp"
#include "error.hpp"
#include "numeric.hpp"

namespace warp {

enum class SlabFamily { Normal, Laplace, QuasiCauchy };

inline std::string to_string(SlabFamily s) {
    switch (s) {
        case SlabFamily::Normal: return "normal";
        case SlabFamily::Laplace: return "laplace";
        case SlabFamily::QuasiCauchy: return "quasi_cauchy";
    }
    return "normal";
}

inline SlabFamily slab_from_string(const std::string& s) {
    if (s == "normal") return SlabFamily::Normal;
    if (s == "laplace") return SlabFamily::Laplace;
    if (s == "quasi_cauchy" || s == "quasi-cauchy") return SlabFamily::QuasiCauchy;
    throw InputError("unknown slab family '" + s + "'");
}

/// Spike-and-slab prior with optional pruning. Schedules are indexed by node
/// depth j (0 at the root).
struct HyperParams {
    double alpha = 1.0;  ///< slab scale decay, tau_j = 2^{-alpha j} tau0
    double tau0 = 4.0;
    double beta = 1.0;  ///< slab probability decay, rho_j = min(1, 2^{-beta j} C)
    double C = 1.0;
    double eta0 = 0.0;  ///< pruning probability at every node
    double sigma = 1.0;
    SlabFamily slab = SlabFamily::Normal;

    double tau(int j) const {
        return slab == SlabFamily::QuasiCauchy ? 1.0 : std::exp2(-alpha * j) * tau0;
    }
    double rho(int j) const { return std::min(1.0, std::exp2(-beta * j) * C); }
    double eta(int /*j*/) const { return eta0; }
    double sigma2() const { return sigma * sigma; }

    void validate() const {
        if (!(sigma > 0.0)) throw InputError("sigma must be positive");
        if (!(tau0 > 0.0)) throw InputError("tau0 must be positive");
        if (!(C > 0.0)) throw InputError("C must be positive");
        if (!(eta0 >= 0.0 && eta0 <= 1.0)) throw InputError("eta0 must lie in [0, 1]");
        if (!std::isfinite(alpha) || !std::isfinite(beta)) throw InputError("alpha and beta must be finite");
    }
};

inline void require_positive_sigma(double sigma) {
    if (!(sigma > 0.0)) throw InputError("sigma must be positive");
}

/// log N(w | 0, sigma^2): the coefficient carries no signal.
inline double log_marginal_spike(double w, double sigma) {
    require_positive_sigma(sigma);
    return num::log_normal_pdf(w, sigma);
}

namespace detail {

// Laplace convolution terms in sigma units, x = w / sigma:
//   l1 = -a x + log Phi(x - a),  l2 = a x + log Phi(-x - a)
inline void laplace_terms(double x, double a, double& l1, double& l2) {
    l1 = -a * x + num::log_ndtr(x - a);
    l2 = a * x + num::log_ndtr(-x - a);
}

inline double laplace_log_marginal(double x, double a) {
    double l1, l2;
    laplace_terms(x, a, l1, l2);
    return std::log(a / 2.0) + 0.5 * a * a + num::log_add(l1, l2);
}

inline double laplace_mean(double x, double a) {
    double l1, l2;
    laplace_terms(x, a, l1, l2);
    return x - a * std::tanh(0.5 * (l1 - l2));
}

// g(x) = (2 pi)^{-1/2} (1 - exp(-x^2/2)) / x^2
inline double quasi_cauchy_log_marginal(double x) {
    double u = 0.5 * x * x;
    if (u < 1e-8) return -num::kLogSqrt2Pi + std::log(0.5 * (1.0 - 0.5 * u + u * u / 6.0));
    return -num::kLogSqrt2Pi + std::log(-std::expm1(-u)) - 2.0 * std::log(std::abs(x));
}

inline double quasi_cauchy_mean(double x) {
    if (std::abs(x) < 1e-3) return x / 2.0 + x * x * x / 24.0;
    return x / -std::expm1(-0.5 * x * x) - 2.0 / x;
}

}  // namespace detail

/// log of the slab marginal, the convolution of N(0, sigma^2) noise with the slab density.
inline double log_marginal_slab(double w, double tau, double sigma, SlabFamily slab) {
    require_positive_sigma(sigma);
    switch (slab) {
        case SlabFamily::Normal:
            if (!(tau > 0.0)) throw InputError("tau must be positive");
            return num::log_normal_pdf(w, sigma * std::sqrt(1.0 + tau));
        case SlabFamily::Laplace:
            if (!(tau > 0.0)) throw InputError("tau must be positive");
            return detail::laplace_log_marginal(w / sigma, std::sqrt(2.0 / tau)) - std::log(sigma);
        case SlabFamily::QuasiCauchy:
            return detail::quasi_cauchy_log_marginal(w / sigma) - std::log(sigma);
    }
    return 0.0;
}

/// Posterior mean of the coefficient signal given it is drawn from the slab.
inline double posterior_mean_mu1(double w, double tau, double sigma, SlabFamily slab) {
    require_positive_sigma(sigma);
    switch (slab) {
        case SlabFamily::Normal:
            if (!(tau > 0.0)) throw InputError("tau must be positive");
            return w / (1.0 + 1.0 / tau);
        case SlabFamily::Laplace:
            if (!(tau > 0.0)) throw InputError("tau must be positive");
            return sigma * detail::laplace_mean(w / sigma, std::sqrt(2.0 / tau));
        case SlabFamily::QuasiCauchy:
            return sigma * detail::quasi_cauchy_mean(w / sigma);
    }
    return 0.0;
}

/// Per-depth constants of the spike/slab mixture for the hot recursions.
class CoefficientModel {
public:
    CoefficientModel(const HyperParams& h, int total_level) : h_(h) {
        h_.validate();
        levels_.resize(std::max(total_level, 1));
        for (int j = 0; j < static_cast<int>(levels_.size()); ++j) {
            auto& L = levels_[j];
            L.tau = h.tau(j);
            double rho = h.rho(j);
            L.rho = rho;
            L.log_rho = num::safe_log(rho);
            L.log_1m_rho = num::safe_log(1.0 - rho);
            L.normal_var = h.sigma2() * (1.0 + L.tau);
            L.normal_scale = 1.0 / std::sqrt(1.0 + L.tau);
            L.normal_shrink = L.tau / (1.0 + L.tau);
            L.normal_const = -num::kLogSqrt2Pi - 0.5 * std::log(L.normal_var);
            L.laplace_a = std::sqrt(2.0 / L.tau);
        }
        spike_const_ = -num::kLogSqrt2Pi - std::log(h.sigma);
        inv_2s2_ = 1.0 / (2.0 * h.sigma2());
        log_sigma_ = std::log(h.sigma);
        log_eta_ = num::safe_log(h.eta0);
        log_1m_eta_ = num::safe_log(1.0 - h.eta0);
    }

    const HyperParams& hyper() const { return h_; }
    double sigma() const { return h_.sigma; }
    double tau(int j) const { return levels_[j].tau; }
    double log_eta() const { return log_eta_; }
    double log_1m_eta() const { return log_1m_eta_; }

    double log_spike(double w) const { return spike_const_ - w * w * inv_2s2_; }

    double log_slab(double w, int j) const {
        const auto& L = levels_[j];
        switch (h_.slab) {
            case SlabFamily::Normal: return L.normal_const - 0.5 * w * w / L.normal_var;
            case SlabFamily::Laplace: return detail::laplace_log_marginal(w / h_.sigma, L.laplace_a) - log_sigma_;
            case SlabFamily::QuasiCauchy: return detail::quasi_cauchy_log_marginal(w / h_.sigma) - log_sigma_;
        }
        return 0.0;
    }

    struct Mixture {
        double log_m;     ///< log M_d(A) = log(rho M1 + (1 - rho) M0)
        double rho_post;  ///< posterior slab probability
    };

    /// log M = base + log(scale); scale is a finite positive multiplier, 1
    /// when the mixture had to be evaluated fully in log space.
    struct MixtureParts {
        double base;
        double scale;
        double rho_post;
    };

    MixtureParts mixture_parts(double w, int j) const {
        const auto& L = levels_[j];
        const double l0 = log_spike(w);
        if (L.rho == 0.0) return {l0, 1.0, 0.0};
        // slab/spike density ratio r; the closed forms need one transcendental
        const double x = w / h_.sigma, u = 0.5 * x * x;
        double r = -1.0;
        if (h_.slab == SlabFamily::Normal && u * L.normal_shrink < 700.0) {
            r = L.normal_scale * std::exp(u * L.normal_shrink);
        } else if (h_.slab == SlabFamily::QuasiCauchy && u < 700.0) {
            r = u < 1e-8 ? 0.5 * (1.0 + 0.5 * u) : std::expm1(u) / (x * x);
        }
        if (r >= 0.0) {
            const double a = L.rho * r, s = a + (1.0 - L.rho);
            return {l0, s, a / s};
        }
        double a = L.log_rho + log_slab(w, j);
        double b = L.log_1m_rho + l0;
        double lm = num::log_add(a, b);
        return {lm, 1.0, a == num::kNegInf ? 0.0 : std::exp(a - lm)};
    }

    Mixture mixture(double w, int j) const {
        auto p = mixture_parts(w, j);
        return {p.scale == 1.0 ? p.base : p.base + std::log(p.scale), p.rho_post};
    }

    double mu1(double w, int j) const {
        switch (h_.slab) {
            case SlabFamily::Normal: return w / (1.0 + 1.0 / levels_[j].tau);
            case SlabFamily::Laplace: return h_.sigma * detail::laplace_mean(w / h_.sigma, levels_[j].laplace_a);
            case SlabFamily::QuasiCauchy: return h_.sigma * detail::quasi_cauchy_mean(w / h_.sigma);
        }
        return 0.0;
    }

    double log_pruned(double block_size, double css) const {
        return -(block_size - 1.0) * (num::kLogSqrt2Pi + log_sigma_) - css * inv_2s2_;
    }

private:
    struct Level {
        double tau, rho, log_rho, log_1m_rho, normal_var, normal_const, normal_scale, normal_shrink, laplace_a;
    };
    HyperParams h_;
    std::vector<Level> levels_;
    double spike_const_, inv_2s2_, log_sigma_, log_eta_, log_1m_eta_;
};

inline constexpr double kDefaultSigmaFloor = 1e-6;

/// Noise level from the finest-scale Haar differences (y[2t] - y[2t+1]) / sqrt(2)
/// along the last dimension: median(|d|) / 0.6745.
inline double estimate_sigma(const Observation& obs, double sigma_floor = kDefaultSigmaFloor) {
    const Grid& g = obs.grid;
    if (g.size() < 2) throw InputError("sigma estimation needs at least two locations");
    std::vector<double> d;
    d.reserve(g.size() / 2);
    const std::size_t last = g.side(g.dims() - 1);
    if (last >= 2) {
        for (std::size_t t = 0; t + 1 < g.size(); t += 2)
            d.push_back(std::abs(obs.values[t] - obs.values[t + 1]) / std::numbers::sqrt2);
    } else {
        // last dimension is a singleton; pair along the finest divisible dimension instead
        int dim = g.dims() - 1;
        while (dim >= 0 && g.side(dim) < 2) --dim;
        const std::size_t stride = g.location_stride(dim);
        for (std::size_t t = 0; t < g.size(); ++t)
            if ((t / stride) % 2 == 0)
                d.push_back(std::abs(obs.values[t] - obs.values[t + stride]) / std::numbers::sqrt2);
    }
    auto mid = d.begin() + d.size() / 2;
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) {
        double lower = *std::max_element(d.begin(), mid);
        med = 0.5 * (med + lower);
    }
    double s = med / 0.6745;
    return s > sigma_floor ? s : sigma_floor;
}

}  // namespace warp
