// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "kangaroo/core.hpp"
#include "kangaroo/tree.hpp"

namespace kangaroo::model {

// ---------------------------------------------------------------------------
// Obfuscated tree: dummy-padded, coin-flipped, heap-indexed. The stored
// structure is post-swap; leaf arrays follow left-to-right DFS order over it.

struct ObNode {
    u32 feature = 1;
    u64 threshold_q = 0;   // quantized
    int flip = 1;          // upsilon: +1 kept, -1 swapped
    bool real = true;      // psi
    ChildRef left = 0;
    ChildRef right = 0;
    u64 heap_index = 0;    // root 1, children 2i / 2i+1
};

struct ObfuscatedTree {
    u32 feature_count = 0;
    u32 tau_star = 0;
    u32 frac_bits = 12;
    std::vector<ObNode> nodes;       // index 0 is the root
    std::vector<double> leaf_raw;    // DFS order
    std::vector<i64> leaf_fixed;     // round(w * 2^frac_bits), DFS order

    u32 depth() const {
        u32 best = 0;
        walk(0, 1, best);
        return best;
    }

private:
    void walk(ChildRef r, u32 d, u32& best) const {
        if (is_leaf(r)) {
            best = std::max(best, d);
            return;
        }
        const auto& n = nodes[static_cast<size_t>(r)];
        walk(n.left, d + 1, best);
        walk(n.right, d + 1, best);
    }
};

/// Padding policy: either grow to the node count of a full tree of depth
/// ceil(log2(tau+1)) (capped), or to a fixed published count.
struct PaddingPolicy {
    enum class Kind { full_depth, fixed_count } kind = Kind::full_depth;
    u32 fixed_tau = 0;
    u32 cap = 0;  // 0 = uncapped (full_depth only)

    static PaddingPolicy full(u32 cap = 0) { return {Kind::full_depth, 0, cap}; }
    static PaddingPolicy fixed(u32 tau_star) { return {Kind::fixed_count, tau_star, 0}; }

    u32 target(u32 tau) const {
        if (kind == Kind::fixed_count) {
            if (fixed_tau < tau) throw Error(Stage::model, "fixed tau* below decision count");
            return fixed_tau;
        }
        u64 full_nodes = next_power_of_two(u64(tau) + 1) - 1;
        u64 t = std::max<u64>(tau, full_nodes);
        if (cap != 0) t = std::max<u64>(tau, std::min<u64>(t, cap));
        return static_cast<u32>(t);
    }
};

/// Construction record kept by the server for audits: which nodes are
/// dummies and the weight each dummy's pre-swap left child inherited.
struct HidingRecord {
    struct Dummy {
        size_t node;            // index into ObfuscatedTree::nodes
        double inherited;       // weight the replaced leaf carried
    };
    std::vector<Dummy> dummies;
    std::vector<int> coin_flips;  // per node, in creation order
};

struct HiddenTree {
    ObfuscatedTree tree;
    HidingRecord record;
};

namespace detail {

inline u32 ref_depth(const std::vector<ObNode>& nodes, ChildRef r) {
    if (is_leaf(r)) return 0;
    const auto& n = nodes[static_cast<size_t>(r)];
    return 1 + std::max(ref_depth(nodes, n.left), ref_depth(nodes, n.right));
}

}  // namespace detail

/// Which nodes the hiding coin may swap. The outsourced pipeline pins dummy
/// nodes to +1 (its comparison correction has no swapped-dummy rule);
/// `none` is a test hook for identity obfuscation.
enum class SwapPolicy { all, real_only, none };

/// Model hiding: pad with dummy decision nodes (shallowest leaves first),
/// flip children by per-node coin, heap-number the result, quantize
/// thresholds, and fix leaf weights to signed fixed point.
inline HiddenTree hide_model(const DecisionTree& src, const PaddingPolicy& policy,
                             const QuantizationSpec& spec, u32 frac_bits, Rng& rng,
                             SwapPolicy swaps = SwapPolicy::all) {
    src.validate();
    ObfuscatedTree ot;
    ot.feature_count = src.feature_count;
    ot.frac_bits = frac_bits;
    HidingRecord rec;

    // Copy the source with quantized thresholds; leaf refs point into a
    // working weight vector.
    std::vector<double> weights = src.leaf_weights;
    ot.nodes.reserve(src.nodes.size());
    for (const auto& n : src.nodes) {
        ObNode on;
        on.feature = n.feature;
        on.threshold_q = spec.quantize(n.threshold, n.feature);
        on.left = n.left;
        on.right = n.right;
        ot.nodes.push_back(on);
    }

    double wlo = *std::min_element(weights.begin(), weights.end());
    double whi = *std::max_element(weights.begin(), weights.end());

    // Padding: expand the shallowest leaf (leftmost on ties) into a dummy
    // whose left child inherits the weight and whose right child is fresh.
    u32 tau_star = policy.target(src.decision_count());
    while (ot.nodes.size() < tau_star) {
        // collect leaf positions with depths; DFS keeps left-to-right order,
        // so min_element picks the leftmost shallowest leaf
        struct Cand {
            size_t node;
            bool right;
            u32 depth;
        };
        std::vector<Cand> leaves;
        std::function<void(ChildRef, u32)> visit = [&](ChildRef r, u32 d) {
            const auto& n = ot.nodes[static_cast<size_t>(r)];
            if (is_leaf(n.left))
                leaves.push_back({static_cast<size_t>(r), false, d + 1});
            else
                visit(n.left, d + 1);
            if (is_leaf(n.right))
                leaves.push_back({static_cast<size_t>(r), true, d + 1});
            else
                visit(n.right, d + 1);
        };
        visit(0, 1);
        auto best = std::min_element(leaves.begin(), leaves.end(),
                                     [](const Cand& a, const Cand& b) { return a.depth < b.depth; });

        ObNode dummy;
        dummy.real = false;
        dummy.feature = static_cast<u32>(rng.uniform_range(1, ot.feature_count));
        dummy.threshold_q = rng.uniform(spec.zeta + 1);
        ChildRef old_leaf = best->right ? ot.nodes[best->node].right : ot.nodes[best->node].left;
        size_t fresh = weights.size();
        weights.push_back(wlo + (whi - wlo) * rng.unit_real());
        dummy.left = old_leaf;  // inherits the replaced leaf's weight
        dummy.right = leaf_ref(fresh);
        size_t idx = ot.nodes.size();
        ot.nodes.push_back(dummy);
        if (best->right)
            ot.nodes[best->node].right = static_cast<ChildRef>(idx);
        else
            ot.nodes[best->node].left = static_cast<ChildRef>(idx);
        rec.dummies.push_back({idx, weights[leaf_index(old_leaf)]});
    }
    ot.tau_star = static_cast<u32>(ot.nodes.size());

    // Coin flips: -1 swaps children.
    for (auto& n : ot.nodes) {
        bool swap = rng.coin();
        if (swaps == SwapPolicy::none || (swaps == SwapPolicy::real_only && !n.real)) swap = false;
        n.flip = swap ? -1 : 1;
        rec.coin_flips.push_back(n.flip);
        if (swap) std::swap(n.left, n.right);
    }

    // Heap numbering over the post-swap structure.
    std::function<void(ChildRef, u64)> number = [&](ChildRef r, u64 h) {
        if (is_leaf(r)) return;
        auto& n = ot.nodes[static_cast<size_t>(r)];
        n.heap_index = h;
        number(n.left, 2 * h);
        number(n.right, 2 * h + 1);
    };
    number(0, 1);

    // Leaf arrays in left-to-right DFS order over the post-swap tree;
    // remap leaf refs to that order.
    std::vector<double> dfs_weights;
    std::function<void(ChildRef)> relabel = [&](ChildRef r) {
        auto& n = ot.nodes[static_cast<size_t>(r)];
        for (ChildRef* c : {&n.left, &n.right}) {
            if (is_leaf(*c)) {
                size_t new_idx = dfs_weights.size();
                dfs_weights.push_back(weights[leaf_index(*c)]);
                *c = leaf_ref(new_idx);
            } else {
                relabel(*c);
            }
        }
    };
    relabel(0);
    ot.leaf_raw = dfs_weights;
    ot.leaf_fixed.resize(dfs_weights.size());
    for (size_t i = 0; i < dfs_weights.size(); ++i)
        ot.leaf_fixed[i] = std::llround(dfs_weights[i] * std::exp2(double(frac_bits)));

    return {std::move(ot), std::move(rec)};
}

// ---------------------------------------------------------------------------
// Extraction: breadth-first arrays over decision nodes (= ascending heap
// index), depth-first leaf weights, and the published structure index.

struct ExtractedModel {
    std::vector<u64> thresholds;   // y, BFS
    std::vector<u32> features;     // m, BFS
    std::vector<int> flips;        // upsilon, BFS
    std::vector<u8> statuses;      // psi, BFS
    std::vector<i64> weights;      // w fixed-point, DFS
    std::vector<u64> structure;    // T*_s: heap indices of decision nodes, ascending
};

/// BFS position (0-based) of every decision node: ascending heap index.
inline std::vector<size_t> bfs_order(const ObfuscatedTree& ot) {
    std::vector<size_t> idx(ot.nodes.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return ot.nodes[a].heap_index < ot.nodes[b].heap_index;
    });
    return idx;
}

inline ExtractedModel extract(const ObfuscatedTree& ot) {
    ExtractedModel ex;
    for (size_t i : bfs_order(ot)) {
        const auto& n = ot.nodes[i];
        ex.thresholds.push_back(n.threshold_q);
        ex.features.push_back(n.feature);
        ex.flips.push_back(n.flip);
        ex.statuses.push_back(n.real ? 1 : 0);
        ex.structure.push_back(n.heap_index);
    }
    ex.weights = ot.leaf_fixed;
    return ex;
}

// ---------------------------------------------------------------------------
// Flip-aware evaluation over the obfuscated (post-swap) tree: at real nodes
// the branch bit is x >= y, inverted when the node was swapped; at dummy
// nodes go left when upsilon = +1, right otherwise. This must reproduce the
// source tree's evaluation exactly.

inline size_t flip_aware_leaf(const ObfuscatedTree& ot, const std::vector<u64>& xq) {
    ChildRef cur = 0;
    while (!is_leaf(cur)) {
        const auto& n = ot.nodes[static_cast<size_t>(cur)];
        bool go_right;
        if (n.real) {
            bool raw = xq[n.feature - 1] >= n.threshold_q;
            go_right = n.flip == -1 ? !raw : raw;
        } else {
            go_right = n.flip == -1;
        }
        cur = go_right ? n.right : n.left;
    }
    return leaf_index(cur);
}

inline double flip_aware_evaluate(const ObfuscatedTree& ot, const std::vector<u64>& xq) {
    return ot.leaf_raw[flip_aware_leaf(ot, xq)];
}

/// Per-node protocol branch bit: what the adjusted oblivious comparison must
/// produce at this node for input xq (real unswapped: raw; real swapped:
/// inverted; dummy unswapped: 0; dummy swapped: 1).
inline u8 adjusted_branch_bit(const ObNode& n, const std::vector<u64>& xq) {
    if (!n.real) return n.flip == -1 ? 1 : 0;
    bool raw = xq[n.feature - 1] >= n.threshold_q;
    return static_cast<u8>(n.flip == -1 ? !raw : raw);
}

}  // namespace kangaroo::model
