#pragma once

#include <string>

#include <json.hpp>

#include "index_space.hpp"

namespace warp {

/// Canonical nested form: {"dim": d, "left": ..., "right": ...} for splits
/// (0-based dimension), {"leaf": true} for leaves, plus "pruned": true on
/// pruned leaves.
inline nlohmann::ordered_json tree_to_json(const RdpTree& tree, int node = 0) {
    const auto& n = tree[node];
    nlohmann::ordered_json j;
    if (n.is_leaf()) {
        j["leaf"] = true;
        if (n.pruned) j["pruned"] = true;
        return j;
    }
    j["dim"] = n.split;
    j["left"] = tree_to_json(tree, n.left);
    j["right"] = tree_to_json(tree, n.right);
    return j;
}

inline RdpTree tree_from_json(const nlohmann::json& j, const Grid& grid) {
    RdpTree tree(grid);
    auto rec = [&](auto&& self, const nlohmann::json& obj, int node) -> void {
        if (obj.contains("leaf")) {
            tree[node].pruned = obj.value("pruned", false);
            return;
        }
        int d = obj.at("dim").get<int>();
        int l = tree.split(node, d);
        self(self, obj.at("left"), l);
        self(self, obj.at("right"), l + 1);
    };
    rec(rec, j, 0);
    return tree;
}

}  // namespace warp
