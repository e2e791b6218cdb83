#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "error.hpp"

namespace warp {

/// A dyadic interval in one dimension: [offset * 2^(J-level), (offset+1) * 2^(J-level) - 1].
struct Interval {
    int level = 0;
    std::size_t offset = 0;

    friend bool operator==(const Interval&, const Interval&) = default;
    friend auto operator<=>(const Interval&, const Interval&) = default;
};

/// A rectangle of the canonical RDP node universe: one dyadic interval per dimension.
struct DyadicNode {
    std::vector<Interval> dims;

    int depth() const {
        int j = 0;
        for (const auto& iv : dims) j += iv.level;
        return j;
    }

    friend bool operator==(const DyadicNode&, const DyadicNode&) = default;
};

// Per-dimension slot of a dyadic interval in heap order: the two halves of
// slot i are slots 2i+1 and 2i+2, so the slot space of a side of length n
// has exactly 2n-1 entries.
inline std::size_t interval_slot(int level, std::size_t offset) {
    return (std::size_t{1} << level) - 1 + offset;
}
inline int slot_level(std::size_t slot) { return std::bit_width(slot + 1) - 1; }
inline std::size_t slot_offset(std::size_t slot) {
    return slot + 1 - (std::size_t{1} << slot_level(slot));
}

/// The index space: an m-dimensional grid with 2^J_i points along dimension i.
/// Locations are stored row-major (the last dimension varies fastest).
class Grid {
public:
    Grid() = default;

    explicit Grid(std::vector<int> levels) : levels_(std::move(levels)) {
        if (levels_.empty()) throw InputError("grid needs at least one dimension");
        for (std::size_t i = 0; i < levels_.size(); ++i)
            if (levels_[i] < 0 || levels_[i] > 30)
                throw InputError("dimension " + std::to_string(i) + ": level out of range");
        const int m = dims();
        loc_stride_.assign(m, 1);
        slot_stride_.assign(m, 1);
        for (int i = m - 2; i >= 0; --i) {
            loc_stride_[i] = loc_stride_[i + 1] * side(i + 1);
            slot_stride_[i] = slot_stride_[i + 1] * (2 * side(i + 1) - 1);
        }
    }

    /// Builds a grid from side lengths; every side must be a power of two.
    static Grid from_sides(std::span<const std::size_t> sides) {
        std::vector<int> levels;
        for (std::size_t i = 0; i < sides.size(); ++i) {
            if (sides[i] == 0 || !std::has_single_bit(sides[i]))
                throw InputError("dimension " + std::to_string(i) + " has non-dyadic size " +
                                 std::to_string(sides[i]));
            levels.push_back(std::countr_zero(sides[i]));
        }
        return Grid(std::move(levels));
    }

    int dims() const { return static_cast<int>(levels_.size()); }
    int level(int i) const { return levels_[i]; }
    const std::vector<int>& levels() const { return levels_; }
    std::size_t side(int i) const { return std::size_t{1} << levels_[i]; }
    std::vector<std::size_t> sides() const {
        std::vector<std::size_t> s;
        for (int i = 0; i < dims(); ++i) s.push_back(side(i));
        return s;
    }
    int total_level() const { return std::accumulate(levels_.begin(), levels_.end(), 0); }
    std::size_t size() const { return std::size_t{1} << total_level(); }

    /// |A| for the node universe: prod(2 n_i - 1).
    std::size_t node_count() const { return slot_stride_[0] * (2 * side(0) - 1); }

    std::size_t location_stride(int i) const { return loc_stride_[i]; }
    std::size_t slot_stride(int i) const { return slot_stride_[i]; }

    std::size_t location(std::span<const std::size_t> coords) const {
        std::size_t t = 0;
        for (int i = 0; i < dims(); ++i) t += coords[i] * loc_stride_[i];
        return t;
    }
    std::vector<std::size_t> coords(std::size_t location) const {
        std::vector<std::size_t> c(dims());
        for (int i = 0; i < dims(); ++i) {
            c[i] = location / loc_stride_[i];
            location %= loc_stride_[i];
        }
        return c;
    }

    bool contains(const DyadicNode& a) const {
        if (static_cast<int>(a.dims.size()) != dims()) return false;
        for (int i = 0; i < dims(); ++i) {
            const auto& iv = a.dims[i];
            if (iv.level < 0 || iv.level > levels_[i]) return false;
            if (iv.offset >= (std::size_t{1} << iv.level)) return false;
        }
        return true;
    }

    std::size_t flat(const DyadicNode& a) const {
        std::size_t f = 0;
        for (int i = 0; i < dims(); ++i)
            f += interval_slot(a.dims[i].level, a.dims[i].offset) * slot_stride_[i];
        return f;
    }

    DyadicNode node(std::size_t flat) const {
        DyadicNode a;
        a.dims.resize(dims());
        for (int i = 0; i < dims(); ++i) {
            std::size_t slot = flat / slot_stride_[i];
            flat %= slot_stride_[i];
            a.dims[i] = {slot_level(slot), slot_offset(slot)};
        }
        return a;
    }

    DyadicNode root() const {
        DyadicNode a;
        a.dims.assign(dims(), Interval{});
        return a;
    }

    /// The atomic node holding a single location.
    DyadicNode atom(std::size_t location) const {
        auto c = coords(location);
        DyadicNode a;
        for (int i = 0; i < dims(); ++i) a.dims.push_back({levels_[i], c[i]});
        return a;
    }
    std::size_t atom_flat(std::size_t location) const {
        std::size_t f = 0;
        for (int i = 0; i < dims(); ++i) {
            std::size_t c = location / loc_stride_[i];
            location %= loc_stride_[i];
            f += (side(i) - 1 + c) * slot_stride_[i];
        }
        return f;
    }

    std::size_t lower(const DyadicNode& a, int i) const {
        return a.dims[i].offset << (levels_[i] - a.dims[i].level);
    }
    std::size_t extent(const DyadicNode& a, int i) const {
        return std::size_t{1} << (levels_[i] - a.dims[i].level);
    }
    std::size_t block_size(const DyadicNode& a) const {
        return std::size_t{1} << (total_level() - a.depth());
    }
    bool is_atomic(const DyadicNode& a) const { return a.depth() == total_level(); }

    friend bool operator==(const Grid& a, const Grid& b) { return a.levels_ == b.levels_; }

private:
    std::vector<int> levels_;
    std::vector<std::size_t> loc_stride_;
    std::vector<std::size_t> slot_stride_;
};

inline std::vector<int> divisible_dims(const DyadicNode& a, const Grid& grid) {
    std::vector<int> out;
    for (int i = 0; i < grid.dims(); ++i)
        if (a.dims[i].level < grid.level(i)) out.push_back(i);
    return out;
}

inline std::pair<DyadicNode, DyadicNode> children(const DyadicNode& a, int d, const Grid& grid) {
    if (d < 0 || d >= grid.dims() || a.dims[d].level >= grid.level(d))
        throw InputError("node is not divisible in dimension " + std::to_string(d));
    DyadicNode left = a, right = a;
    left.dims[d] = {a.dims[d].level + 1, 2 * a.dims[d].offset};
    right.dims[d] = {a.dims[d].level + 1, 2 * a.dims[d].offset + 1};
    return {std::move(left), std::move(right)};
}

inline DyadicNode parent(const DyadicNode& a, int d) {
    if (d < 0 || d >= static_cast<int>(a.dims.size()) || a.dims[d].level == 0)
        throw InputError("node has full support in dimension " + std::to_string(d));
    DyadicNode p = a;
    p.dims[d] = {a.dims[d].level - 1, a.dims[d].offset / 2};
    return p;
}

enum class NodeOrder { TopDown, BottomUp };

/// Every node of the universe exactly once, grouped by depth. Within a depth
/// nodes are sorted lexicographically by (level vector, offset vector).
inline std::vector<DyadicNode> enumerate_nodes(const Grid& grid, NodeOrder order = NodeOrder::TopDown) {
    std::vector<DyadicNode> out;
    out.reserve(grid.node_count());
    for (std::size_t f = 0; f < grid.node_count(); ++f) out.push_back(grid.node(f));
    auto key_less = [](const DyadicNode& a, const DyadicNode& b) {
        int ja = a.depth(), jb = b.depth();
        if (ja != jb) return ja < jb;
        for (std::size_t i = 0; i < a.dims.size(); ++i)
            if (a.dims[i].level != b.dims[i].level) return a.dims[i].level < b.dims[i].level;
        for (std::size_t i = 0; i < a.dims.size(); ++i)
            if (a.dims[i].offset != b.dims[i].offset) return a.dims[i].offset < b.dims[i].offset;
        return false;
    };
    std::sort(out.begin(), out.end(), key_less);
    if (order == NodeOrder::BottomUp) {
        // reverse depth groups but keep the within-depth order
        std::stable_sort(out.begin(), out.end(),
                         [](const DyadicNode& a, const DyadicNode& b) { return a.depth() > b.depth(); });
    }
    return out;
}

using BigInt = boost::multiprecision::cpp_int;

/// Number of canonical RDPs of a grid; memoized on the (sorted) level vector
/// since the count depends only on the shape.
inline BigInt count_rdp_trees(std::vector<int> levels) {
    std::map<std::vector<int>, BigInt> memo;
    auto rec = [&](auto&& self, std::vector<int> shape) -> BigInt {
        std::sort(shape.begin(), shape.end());
        int divisible = 0;
        for (int l : shape) divisible += l > 0;
        if (divisible <= 1) return 1;
        if (auto it = memo.find(shape); it != memo.end()) return it->second;
        BigInt total = 0;
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (shape[d] == 0) continue;
            if (d > 0 && shape[d] == shape[d - 1]) continue;  // identical after sorting
            std::size_t same = std::count(shape.begin(), shape.end(), shape[d]);
            auto child = shape;
            --child[d];
            BigInt c = self(self, child);
            total += c * c * static_cast<unsigned>(same);
        }
        memo.emplace(shape, total);
        return total;
    };
    return rec(rec, std::move(levels));
}

inline BigInt count_rdp_trees(const Grid& grid) { return count_rdp_trees(grid.levels()); }

/// One node of a (possibly partial) recursive dyadic partition.
struct TreeNode {
    DyadicNode block;
    int split = -1;  ///< split dimension, -1 for leaves
    int left = -1;
    int right = -1;
    bool pruned = false;  ///< leaf whose subtree is shrunk to the block mean
    bool slab = false;    ///< latent slab (signal) state of the node's coefficient

    bool is_leaf() const { return split < 0; }
};

/// A recursive dyadic partition stored as an explicit binary tree, root at index 0.
class RdpTree {
public:
    RdpTree() = default;
    explicit RdpTree(Grid grid) : grid_(std::move(grid)) { nodes_.push_back({grid_.root()}); }

    const Grid& grid() const { return grid_; }
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& operator[](int i) const { return nodes_[i]; }
    TreeNode& operator[](int i) { return nodes_[i]; }

    /// Splits leaf `node` in dimension d; returns the index of the left child.
    int split(int node, int d) {
        if (!nodes_[node].is_leaf()) throw InputError("node already split");
        auto [l, r] = children(nodes_[node].block, d, grid_);
        int li = static_cast<int>(nodes_.size());
        nodes_.push_back({std::move(l)});
        nodes_.push_back({std::move(r)});
        nodes_[node].split = d;
        nodes_[node].left = li;
        nodes_[node].right = li + 1;
        return li;
    }

    /// True when every leaf is atomic and unpruned (depth J everywhere).
    bool fully_refined() const {
        for (const auto& n : nodes_)
            if (n.is_leaf() && (n.pruned || !grid_.is_atomic(n.block))) return false;
        return true;
    }

    /// Leaves in left-first order, which is the order of the induced vectorization.
    std::vector<int> leaves() const {
        std::vector<int> out, stack{0};
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            if (nodes_[i].is_leaf()) {
                out.push_back(i);
            } else {
                stack.push_back(nodes_[i].right);
                stack.push_back(nodes_[i].left);
            }
        }
        return out;
    }

    /// Structural equality: same splits and prune markers (latent slab draws ignored).
    bool same_structure(const RdpTree& o, int a = 0, int b = 0) const {
        const auto& x = nodes_[a];
        const auto& y = o.nodes_[b];
        if (x.split != y.split || x.pruned != y.pruned) return false;
        if (x.is_leaf()) return true;
        return same_structure(o, x.left, y.left) && same_structure(o, x.right, y.right);
    }

private:
    Grid grid_;
    std::vector<TreeNode> nodes_;
};

/// The bijection between grid locations and positions of the vectorization
/// induced by a fully refined tree.
struct Permutation {
    std::vector<std::size_t> position;  ///< location -> vector position t(s)
    std::vector<std::size_t> location;  ///< vector position -> location

    template <class T>
    std::vector<T> apply(std::span<const T> by_location) const {
        std::vector<T> out(location.size());
        for (std::size_t t = 0; t < location.size(); ++t) out[t] = by_location[location[t]];
        return out;
    }
    template <class T>
    std::vector<T> invert(std::span<const T> by_position) const {
        std::vector<T> out(location.size());
        for (std::size_t t = 0; t < location.size(); ++t) out[location[t]] = by_position[t];
        return out;
    }
};

inline Permutation permutation_of(const RdpTree& tree) {
    if (!tree.fully_refined()) throw InputError("permutation requires a fully refined tree");
    const Grid& g = tree.grid();
    Permutation p;
    p.position.assign(g.size(), 0);
    p.location.reserve(g.size());
    for (int leaf : tree.leaves()) {
        const auto& b = tree[leaf].block;
        std::vector<std::size_t> c;
        for (int i = 0; i < g.dims(); ++i) c.push_back(b.dims[i].offset);
        std::size_t loc = g.location(c);
        p.position[loc] = p.location.size();
        p.location.push_back(loc);
    }
    return p;
}

}  // namespace warp

namespace warp {

/// Visits every node flat index with its per-dimension slots. Descending flat
/// order visits both children of a node before the node itself (children
/// always have a larger slot in the split dimension), ascending order visits
/// parents first.
template <class F>
void for_each_node(const Grid& grid, NodeOrder order, F&& f) {
    const int m = grid.dims();
    std::vector<std::size_t> slot(m), top(m);
    for (int i = 0; i < m; ++i) top[i] = 2 * grid.side(i) - 2;
    const std::size_t count = grid.node_count();
    if (order == NodeOrder::BottomUp) {
        slot = top;
        for (std::size_t f_ = count; f_-- > 0;) {
            f(f_, std::span<const std::size_t>(slot));
            for (int i = m - 1; i >= 0; --i) {
                if (slot[i] > 0) { --slot[i]; break; }
                slot[i] = top[i];
            }
        }
    } else {
        for (std::size_t f_ = 0; f_ < count; ++f_) {
            f(f_, std::span<const std::size_t>(slot));
            for (int i = m - 1; i >= 0; --i) {
                if (slot[i] < top[i]) { ++slot[i]; break; }
                slot[i] = 0;
            }
        }
    }
}

inline int slots_depth(std::span<const std::size_t> slots) {
    int j = 0;
    for (auto s : slots) j += slot_level(s);
    return j;
}

}  // namespace warp
