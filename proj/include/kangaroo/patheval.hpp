// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <vector>

#include "kangaroo/compare.hpp"

namespace kangaroo::protocol {

// ---------------------------------------------------------------------------
// Path-cost evaluation over the published structure index. Both parties
// rebuild the heap-numbered skeleton from T*_s: node i's children live at
// 2i and 2i+1, a child position absent from the set is a leaf. BFS node
// order is ascending heap index; leaves are numbered by left-to-right DFS.

struct PathCosts {
    /// Per-leaf sums (DFS order) of per-node edge costs: take left_cost[n]
    /// on a left edge and right_cost[n] on a right edge, all mod q.
    static std::vector<u64> accumulate(const std::vector<u64>& structure,
                                       const std::vector<u64>& left_cost,
                                       const std::vector<u64>& right_cost, u64 q) {
        std::map<u64, size_t> bfs_pos;
        for (size_t i = 0; i < structure.size(); ++i) bfs_pos.emplace(structure[i], i);
        if (!bfs_pos.count(1)) throw Error(Stage::path_eval, "structure index lacks a root");
        std::vector<u64> sums;
        sums.reserve(structure.size() + 1);
        walk(1, 0, bfs_pos, left_cost, right_cost, q, sums);
        if (sums.size() != structure.size() + 1)
            throw Error(Stage::path_eval, "structure index is not a binary tree");
        return sums;
    }

private:
    static void walk(u64 heap, u64 acc, const std::map<u64, size_t>& bfs_pos,
                     const std::vector<u64>& lc, const std::vector<u64>& rc, u64 q,
                     std::vector<u64>& sums) {
        size_t n = bfs_pos.at(heap);
        u64 left_acc = add_mod(acc, lc[n], q);
        u64 right_acc = add_mod(acc, rc[n], q);
        if (bfs_pos.count(2 * heap))
            walk(2 * heap, left_acc, bfs_pos, lc, rc, q, sums);
        else
            sums.push_back(left_acc);
        if (bfs_pos.count(2 * heap + 1))
            walk(2 * heap + 1, right_acc, bfs_pos, lc, rc, q, sums);
        else
            sums.push_back(right_acc);
    }
};

/// Server-side path blinding: R' uniform over every slot; R'' accumulates
/// (-R' left, +R' right) into leaf slots so that I'' + R'' recovers the true
/// path costs.
struct PathBlinding {
    PlainVec rprime;  // uniform, all slots
    PlainVec rsums;   // per-leaf sums at leaf slots, zero elsewhere
    bool used = false;

    void consume() {
        if (used) throw Error(Stage::path_eval, "path blinding reused");
        used = true;
    }
};

/// Layout-aware view of one tree for path evaluation: published structure
/// plus the node/leaf slot positions (group-global).
struct TreeView {
    const std::vector<u64>* structure;
    const std::vector<u64>* node_slots;
    const std::vector<u64>* leaf_slots;
};

inline PathBlinding sample_path_blinding(const phe::PheParams& p, u32 group_count,
                                         const std::vector<TreeView>& trees, Rng& rng) {
    const u64 q = p.plain_modulus;
    const u64 total = u64(p.slot_count) * group_count;
    PathBlinding bl;
    bl.rprime = PlainVec(static_cast<u32>(total), 0);
    for (auto& s : bl.rprime.slots) s = rng.uniform(q);
    bl.rsums = PlainVec(static_cast<u32>(total), 0);
    for (const auto& t : trees) {
        std::vector<u64> lc(t.structure->size()), rc(t.structure->size());
        for (size_t n = 0; n < t.structure->size(); ++n) {
            u64 rp = bl.rprime.slots[(*t.node_slots)[n]];
            lc[n] = neg_mod(rp, q);
            rc[n] = rp;
        }
        auto sums = PathCosts::accumulate(*t.structure, lc, rc, q);
        for (size_t l = 0; l < sums.size(); ++l) bl.rsums.slots[(*t.leaf_slots)[l]] = sums[l];
    }
    return bl;
}

/// Client side: read blinded branch bits at node slots, assign left cost
/// I'[n] and right cost 1 - I'[n], and place per-leaf path sums at leaf
/// slots (zero elsewhere).
inline PlainVec path_costs_response(const std::vector<PlainVec>& iprime_groups, u32 slot_count,
                                    const std::vector<TreeView>& trees, u64 q) {
    const u64 total = u64(slot_count) * iprime_groups.size();
    PlainVec out(static_cast<u32>(total), 0);
    auto read = [&](u64 gslot) {
        return iprime_groups[gslot / slot_count].slots[gslot % slot_count];
    };
    for (const auto& t : trees) {
        std::vector<u64> lc(t.structure->size()), rc(t.structure->size());
        for (size_t n = 0; n < t.structure->size(); ++n) {
            u64 bit = read((*t.node_slots)[n]);
            lc[n] = bit;
            rc[n] = sub_mod(1, bit, q);
        }
        auto sums = PathCosts::accumulate(*t.structure, lc, rc, q);
        for (size_t l = 0; l < sums.size(); ++l) out.slots[(*t.leaf_slots)[l]] = sums[l];
    }
    return out;
}

/// Slice a flat multi-group vector into per-group PlainVecs.
inline std::vector<PlainVec> split_groups(const PlainVec& flat, u32 slot_count) {
    std::vector<PlainVec> out;
    for (size_t off = 0; off < flat.size(); off += slot_count) {
        PlainVec g(slot_count, 0);
        for (u32 i = 0; i < slot_count; ++i) g.slots[i] = flat.slots[off + i];
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace kangaroo::protocol
