#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "index_space.hpp"
#include "numeric.hpp"

namespace warp {

/// Noisy measurements y on a grid, stored row-major.
struct Observation {
    Grid grid;
    std::vector<double> values;
    std::optional<double> sigma;

    Observation() = default;
    Observation(Grid g, std::vector<double> v, std::optional<double> s = std::nullopt)
        : grid(std::move(g)), values(std::move(v)), sigma(s) {
        if (values.size() != grid.size()) throw InputError("value count does not match grid size");
        for (double x : values)
            if (!std::isfinite(x)) throw InputError("observation contains non-finite values");
    }
};

inline std::string describe(const DyadicNode& a, const Grid& g) {
    std::string s;
    for (int i = 0; i < g.dims(); ++i) {
        if (i) s += "x";
        std::size_t lo = g.lower(a, i);
        s += "[" + std::to_string(lo) + "," + std::to_string(lo + g.extent(a, i) - 1) + "]";
    }
    return s;
}

/// Integral volumes of y and y^2 giving O(2^m) block sums for any rectangle.
/// Tables are accumulated with compensated summation; switching to extended
/// precision happens when m*J exceeds `extended_threshold`.
class BlockStatsTable {
public:
    static constexpr int kDefaultExtendedThreshold = 64;

    explicit BlockStatsTable(const Observation& obs, int extended_threshold = kDefaultExtendedThreshold)
        : grid_(obs.grid) {
        const int m = grid_.dims();
        extended_ = m * grid_.total_level() > extended_threshold;
        stride_.assign(m, 1);
        for (int i = m - 2; i >= 0; --i) stride_[i] = stride_[i + 1] * (grid_.side(i + 1) + 1);
        std::size_t total = stride_[0] * (grid_.side(0) + 1);
        if (extended_) {
            sum_x_.assign(total, 0.0L);
            sq_x_.assign(total, 0.0L);
            fill(obs, sum_x_, sq_x_);
        } else {
            sum_d_.assign(total, 0.0);
            sq_d_.assign(total, 0.0);
            fill(obs, sum_d_, sq_d_);
        }
    }

    const Grid& grid() const { return grid_; }
    bool extended() const { return extended_; }

    double block_sum(const DyadicNode& a) const {
        return extended_ ? query(sum_x_, a) : query(sum_d_, a);
    }
    double block_sumsq(const DyadicNode& a) const {
        return extended_ ? query(sq_x_, a) : query(sq_d_, a);
    }

    /// Sum of squared deviations from the block mean. Roundoff negatives below
    /// 1e-9 * sumsq clamp to zero, larger ones are a consistency failure.
    double centered_ss(const DyadicNode& a) const {
        double s = block_sum(a), q = block_sumsq(a);
        double ss = q - s * s / static_cast<double>(grid_.block_size(a));
        if (ss < 0.0) {
            if (-ss <= 1e-9 * std::abs(q) + 1e-300) return 0.0;
            throw NumericalError("negative centered sum of squares at node " + describe(a, grid_));
        }
        return ss;
    }

private:
    template <class T>
    void fill(const Observation& obs, std::vector<T>& sum, std::vector<T>& sq) {
        const int m = grid_.dims();
        std::vector<std::size_t> c(m);
        for (std::size_t loc = 0; loc < grid_.size(); ++loc) {
            std::size_t rem = loc, idx = 0;
            for (int i = 0; i < m; ++i) {
                std::size_t ci = rem / grid_.location_stride(i);
                rem %= grid_.location_stride(i);
                idx += (ci + 1) * stride_[i];
            }
            T v = obs.values[loc];
            sum[idx] = v;
            sq[idx] = v * v;
        }
        for (int axis = 0; axis < m; ++axis) {
            prefix_along(sum, axis);
            prefix_along(sq, axis);
        }
    }

    // Neumaier-compensated running sums along every line parallel to `axis`.
    template <class T>
    void prefix_along(std::vector<T>& t, int axis) const {
        const std::size_t len = grid_.side(axis) + 1, step = stride_[axis];
        const std::size_t total = t.size();
        for (std::size_t start = 0; start < total; ++start) {
            if ((start / step) % len != 0) continue;
            T s = 0, comp = 0;
            for (std::size_t k = 0, idx = start; k < len; ++k, idx += step) {
                T x = t[idx];
                T u = s + x;
                if (std::abs(s) >= std::abs(x)) comp += (s - u) + x;
                else comp += (x - u) + s;
                s = u;
                t[idx] = s + comp;
            }
        }
    }

    template <class T>
    double query(const std::vector<T>& t, const DyadicNode& a) const {
        const int m = grid_.dims();
        T acc = 0;
        for (unsigned mask = 0; mask < (1u << m); ++mask) {
            std::size_t idx = 0;
            int lows = 0;
            for (int i = 0; i < m; ++i) {
                std::size_t lo = grid_.lower(a, i);
                if (mask & (1u << i)) {
                    idx += (lo + grid_.extent(a, i)) * stride_[i];
                } else {
                    idx += lo * stride_[i];
                    ++lows;
                }
            }
            if (lows % 2) acc -= t[idx];
            else acc += t[idx];
        }
        return static_cast<double>(acc);
    }

    Grid grid_;
    bool extended_ = false;
    std::vector<std::size_t> stride_;
    std::vector<double> sum_d_, sq_d_;
    std::vector<long double> sum_x_, sq_x_;
};

inline double haar_coefficient(const DyadicNode& a, int d, const BlockStatsTable& stats) {
    const Grid& g = stats.grid();
    if (g.is_atomic(a)) throw InputError("atomic node has no wavelet coefficient");
    auto [l, r] = children(a, d, g);
    return (stats.block_sum(l) - stats.block_sum(r)) / std::sqrt(static_cast<double>(g.block_size(a)));
}

inline double scale_coefficient(const DyadicNode& a, const BlockStatsTable& stats) {
    return stats.block_sum(a) / std::sqrt(static_cast<double>(stats.grid().block_size(a)));
}

/// log p0(A): density of the |A|-1 detail coefficients of a pruned block, all pure noise.
inline double log_pruned_likelihood(double block_size, double centered_ss, double sigma) {
    return -(block_size - 1.0) * (num::kLogSqrt2Pi + std::log(sigma)) - centered_ss / (2.0 * sigma * sigma);
}

inline double pruned_likelihood_log(const DyadicNode& a, double sigma, const BlockStatsTable& stats) {
    if (!(sigma > 0.0)) throw InputError("sigma must be positive");
    return log_pruned_likelihood(static_cast<double>(stats.grid().block_size(a)), stats.centered_ss(a), sigma);
}

/// Dense per-node block sums and centered sums of squares for the whole node
/// universe, aggregated child-to-parent. The centered SS uses the exact
/// decomposition SS(A) = SS(left) + SS(right) + w(A)^2, which cannot go negative.
struct NodeMoments {
    Grid grid;
    std::vector<double> sum;
    std::vector<double> css;

    explicit NodeMoments(const Observation& obs) : grid(obs.grid) {
        const int m = grid.dims();
        const int J = grid.total_level();
        sum.assign(grid.node_count(), 0.0);
        css.assign(grid.node_count(), 0.0);
        for (std::size_t loc = 0; loc < grid.size(); ++loc) sum[grid.atom_flat(loc)] = obs.values[loc];
        for_each_node(grid, NodeOrder::BottomUp, [&](std::size_t f, std::span<const std::size_t> slots) {
            int depth = slots_depth(slots);
            if (depth == J) return;
            for (int d = 0; d < m; ++d) {
                if (slot_level(slots[d]) >= grid.level(d)) continue;
                std::size_t l = f + (slots[d] + 1) * grid.slot_stride(d);
                std::size_t r = l + grid.slot_stride(d);
                double diff = sum[l] - sum[r];
                sum[f] = sum[l] + sum[r];
                css[f] = css[l] + css[r] + diff * diff / std::ldexp(1.0, J - depth);
                break;
            }
        });
    }

    double block_size(int depth) const { return std::ldexp(1.0, grid.total_level() - depth); }

    /// w_d(A) for the node at `flat` whose slot in dimension d is `slot_d`.
    double detail(std::size_t flat, int d, std::size_t slot_d, int depth) const {
        std::size_t l = flat + (slot_d + 1) * grid.slot_stride(d);
        return (sum[l] - sum[l + grid.slot_stride(d)]) / std::sqrt(block_size(depth));
    }
    double scale(std::size_t flat, int depth) const { return sum[flat] / std::sqrt(block_size(depth)); }
};

}  // namespace warp
