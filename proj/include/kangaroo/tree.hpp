// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "kangaroo/core.hpp"

namespace kangaroo::model {

/// Child reference: non-negative values index decision nodes, negative values
/// encode leaf index l as ~l.
using ChildRef = i64;

inline ChildRef leaf_ref(size_t leaf_index) { return ~static_cast<i64>(leaf_index); }
inline bool is_leaf(ChildRef r) { return r < 0; }
inline size_t leaf_index(ChildRef r) { return static_cast<size_t>(~r); }

struct TreeNode {
    u32 feature = 1;  // 1-based
    double threshold = 0.0;
    ChildRef left = 0;
    ChildRef right = 0;
};

struct DecisionTree {
    u32 feature_count = 0;
    std::vector<TreeNode> nodes;  // index 0 is the root
    std::vector<double> leaf_weights;

    u32 decision_count() const { return static_cast<u32>(nodes.size()); }

    u32 depth() const {
        if (nodes.empty()) return 0;
        u32 best = 0;
        walk_depth(0, 1, best);
        return best;
    }

    void validate() const {
        if (nodes.empty()) throw Error(Stage::model, "tree has no decision nodes");
        if (leaf_weights.size() != nodes.size() + 1)
            throw Error(Stage::model, "leaf count must be decision count + 1");
        std::vector<int> node_seen(nodes.size(), 0), leaf_seen(leaf_weights.size(), 0);
        for (const auto& n : nodes) {
            if (n.feature < 1 || n.feature > feature_count)
                throw Error(Stage::model, "feature index out of range");
            for (ChildRef c : {n.left, n.right}) {
                if (is_leaf(c)) {
                    if (leaf_index(c) >= leaf_weights.size())
                        throw Error(Stage::model, "leaf reference out of range");
                    ++leaf_seen[leaf_index(c)];
                } else {
                    if (c == 0 || static_cast<size_t>(c) >= nodes.size())
                        throw Error(Stage::model, "node reference out of range");
                    ++node_seen[static_cast<size_t>(c)];
                }
            }
        }
        for (size_t i = 1; i < node_seen.size(); ++i)
            if (node_seen[i] != 1) throw Error(Stage::model, "decision node not referenced exactly once");
        for (int s : leaf_seen)
            if (s != 1) throw Error(Stage::model, "leaf not referenced exactly once");
    }

private:
    void walk_depth(ChildRef r, u32 d, u32& best) const {
        if (is_leaf(r)) {
            best = std::max(best, d);
            return;
        }
        const auto& n = nodes[static_cast<size_t>(r)];
        walk_depth(n.left, d + 1, best);
        walk_depth(n.right, d + 1, best);
    }
};

// ---------------------------------------------------------------------------
// Quantization

struct QuantizationSpec {
    std::vector<double> x_min;  // per feature, published
    std::vector<double> x_max;
    u64 zeta = 0;

    QuantizationSpec() = default;
    QuantizationSpec(std::vector<double> mins, std::vector<double> maxs, u64 z)
        : x_min(std::move(mins)), x_max(std::move(maxs)), zeta(z) {
        if (x_min.size() != x_max.size()) throw Error(Stage::model, "quantization range size mismatch");
        for (size_t j = 0; j < x_min.size(); ++j)
            if (!(x_max[j] > x_min[j]))
                throw Error(Stage::model, "degenerate feature range for feature " + std::to_string(j + 1));
    }

    /// Clamp into the published range, then round-half-up onto [0, zeta].
    /// feature is 1-based.
    u64 quantize(double x, u32 feature) const {
        const double lo = x_min[feature - 1];
        const double hi = x_max[feature - 1];
        double v = std::clamp(x, lo, hi);
        double scaled = (v - lo) / (hi - lo) * static_cast<double>(zeta);
        auto q = static_cast<u64>(std::llround(scaled));
        return std::min(q, zeta);
    }

    std::vector<u64> quantize_vector(const std::vector<double>& x) const {
        if (x.size() != x_min.size()) throw Error(Stage::model, "feature vector size mismatch");
        std::vector<u64> out(x.size());
        for (size_t j = 0; j < x.size(); ++j) out[j] = quantize(x[j], static_cast<u32>(j + 1));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Plaintext evaluation. Ties route right: comparison bit is 1 iff x >= y.

inline double evaluate_raw(const DecisionTree& t, const std::vector<double>& x) {
    ChildRef cur = 0;
    while (!is_leaf(cur)) {
        const auto& n = t.nodes[static_cast<size_t>(cur)];
        if (n.feature < 1 || n.feature > x.size()) throw Error(Stage::model, "feature index out of range");
        cur = x[n.feature - 1] < n.threshold ? n.left : n.right;
    }
    return t.leaf_weights[leaf_index(cur)];
}

/// Quantized-domain evaluation: both the input and the thresholds pass
/// through the same quantizer. This is the protocol-equivalence oracle.
inline double evaluate_quantized(const DecisionTree& t, const std::vector<u64>& xq,
                                 const QuantizationSpec& spec) {
    ChildRef cur = 0;
    while (!is_leaf(cur)) {
        const auto& n = t.nodes[static_cast<size_t>(cur)];
        if (n.feature < 1 || n.feature > xq.size())
            throw Error(Stage::model, "feature index out of range");
        u64 yq = spec.quantize(n.threshold, n.feature);
        cur = xq[n.feature - 1] < yq ? n.left : n.right;
    }
    return t.leaf_weights[leaf_index(cur)];
}

// ---------------------------------------------------------------------------
// Synthetic models for tests and benchmarks: random topology grown by
// expanding random leaves, seeded and deterministic.

struct TreeShape {
    u32 feature_count = 4;
    u32 decision_count = 3;
    u32 max_depth = 8;
    double weight_lo = -10.0;
    double weight_hi = 10.0;
};

inline DecisionTree random_tree(const TreeShape& shape, Rng& rng) {
    if (shape.decision_count == 0) throw Error(Stage::model, "need at least one decision node");
    DecisionTree t;
    t.feature_count = shape.feature_count;
    auto rand_weight = [&] {
        return shape.weight_lo + (shape.weight_hi - shape.weight_lo) * rng.unit_real();
    };
    auto rand_node = [&] {
        TreeNode n;
        n.feature = static_cast<u32>(rng.uniform_range(1, shape.feature_count));
        n.threshold = rng.unit_real();  // ranges are [0,1] per feature
        return n;
    };

    t.nodes.push_back(rand_node());
    t.leaf_weights.push_back(rand_weight());
    t.leaf_weights.push_back(rand_weight());
    t.nodes[0].left = leaf_ref(0);
    t.nodes[0].right = leaf_ref(1);

    // (node, which-side, depth-of-child) candidates for expansion
    struct Slot {
        size_t node;
        bool right;
        u32 depth;
    };
    std::vector<Slot> fringe = {{0, false, 2}, {0, true, 2}};
    while (t.nodes.size() < shape.decision_count) {
        std::vector<size_t> ok;
        for (size_t i = 0; i < fringe.size(); ++i)
            if (fringe[i].depth < shape.max_depth) ok.push_back(i);
        if (ok.empty()) break;  // depth-capped
        size_t pick = ok[rng.uniform(ok.size())];
        Slot s = fringe[pick];
        fringe.erase(fringe.begin() + static_cast<i64>(pick));

        TreeNode fresh = rand_node();
        ChildRef old_leaf = s.right ? t.nodes[s.node].right : t.nodes[s.node].left;
        size_t new_leaf = t.leaf_weights.size();
        t.leaf_weights.push_back(rand_weight());
        fresh.left = old_leaf;
        fresh.right = leaf_ref(new_leaf);
        size_t idx = t.nodes.size();
        t.nodes.push_back(fresh);
        if (s.right)
            t.nodes[s.node].right = static_cast<ChildRef>(idx);
        else
            t.nodes[s.node].left = static_cast<ChildRef>(idx);
        fringe.push_back({idx, false, s.depth + 1});
        fringe.push_back({idx, true, s.depth + 1});
    }
    t.validate();
    return t;
}

inline QuantizationSpec unit_ranges(u32 feature_count, u64 zeta) {
    return QuantizationSpec(std::vector<double>(feature_count, 0.0),
                            std::vector<double>(feature_count, 1.0), zeta);
}

/// Fixed-point forest oracle: the sum the protocol must reproduce exactly.
inline i64 forest_oracle_fixed(const std::vector<DecisionTree>& trees, const std::vector<double>& x,
                               const QuantizationSpec& spec, u32 frac_bits) {
    auto xq = spec.quantize_vector(x);
    i64 acc = 0;
    for (const auto& t : trees)
        acc += std::llround(evaluate_quantized(t, xq, spec) * std::exp2(double(frac_bits)));
    return acc;
}

inline std::vector<double> random_input(u32 feature_count, Rng& rng) {
    std::vector<double> x(feature_count);
    for (auto& v : x) v = rng.unit_real();
    return x;
}

}  // namespace kangaroo::model
