// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <vector>

#include "kangaroo/hiding.hpp"
#include "kangaroo/phe.hpp"

namespace kangaroo::model {

using phe::PheParams;
using phe::PlainVec;

// ---------------------------------------------------------------------------
// Slot layout: maps (tree, decision node) and (tree, leaf) onto (group, slot).
// Global slot g lives in group g / S at in-group slot g % S.
//
// Interleaved: trees grouped M* to a ciphertext group, all with one tau*;
// node n of the m-th grouped tree sits at (n-1)*M* + (m-1), leaf l at
// (l-1)*M* + (m-1).
//
// Adaptive: trees packed back-to-back over a flat stream of M*-sized blocks,
// one block per decision node; leaves are packed densely from the tree's
// first block slot onward (node-phase and leaf-phase values travel in
// different ciphertexts, so the overlap is harmless).

struct SlotLayout {
    enum class Mode { interleaved, adaptive };
    Mode mode = Mode::interleaved;
    u32 block = 1;        // M*
    u32 slot_count = 0;   // S, per group
    u32 group_count = 0;  // Gamma
    std::vector<std::vector<u64>> node_slots;  // [tree][bfs node] -> global slot
    std::vector<std::vector<u64>> leaf_slots;  // [tree][dfs leaf] -> global slot

    u32 group_of(u64 global_slot) const { return static_cast<u32>(global_slot / slot_count); }
    u32 slot_in_group(u64 global_slot) const { return static_cast<u32>(global_slot % slot_count); }

    /// Brute-force audit: no slot assigned twice within either map.
    void audit() const {
        std::set<u64> nodes, leaves;
        for (const auto& per_tree : node_slots)
            for (u64 s : per_tree)
                if (!nodes.insert(s).second) throw CapacityError("node slot assigned twice");
        for (const auto& per_tree : leaf_slots)
            for (u64 s : per_tree)
                if (!leaves.insert(s).second) throw CapacityError("leaf slot assigned twice");
        u64 limit = u64(group_count) * slot_count;
        for (u64 s : nodes)
            if (s >= limit) throw CapacityError("node slot beyond capacity");
        for (u64 s : leaves)
            if (s >= limit) throw CapacityError("leaf slot beyond capacity");
    }
};

inline const char* layout_mode_name(SlotLayout::Mode m) {
    return m == SlotLayout::Mode::interleaved ? "interleaved" : "adaptive";
}

inline SlotLayout plan_layout(const std::vector<ObfuscatedTree>& trees, u32 slot_count, u32 feature_count,
                              SlotLayout::Mode mode, u32 block_override = 0) {
    if (trees.empty()) throw CapacityError("no trees to lay out");
    SlotLayout lay;
    lay.mode = mode;
    lay.slot_count = slot_count;
    lay.block = block_override != 0 ? block_override
                                    : static_cast<u32>(next_power_of_two(feature_count));
    if (lay.block > slot_count) throw CapacityError("block size exceeds slot count");
    const u32 mstar = lay.block;

    if (mode == SlotLayout::Mode::interleaved) {
        u32 tau = trees[0].tau_star;
        for (const auto& t : trees)
            if (t.tau_star != tau)
                throw CapacityError("interleaved layout requires uniform tau* across grouped trees");
        if ((u64(tau) + 1) * mstar > slot_count)
            throw CapacityError("tree does not fit: (tau*+1) * M* exceeds slot count");
        u32 per_group = mstar;  // M* trees per ciphertext group
        lay.group_count = static_cast<u32>((trees.size() + per_group - 1) / per_group);
        for (size_t k = 0; k < trees.size(); ++k) {
            u64 group = k / per_group;
            u64 m = k % per_group;  // 0-based position within the group
            std::vector<u64> ns(tau), ls(tau + 1);
            for (u32 n = 0; n < tau; ++n) ns[n] = group * slot_count + u64(n) * mstar + m;
            for (u32 l = 0; l <= tau; ++l) ls[l] = group * slot_count + u64(l) * mstar + m;
            lay.node_slots.push_back(std::move(ns));
            lay.leaf_slots.push_back(std::move(ls));
        }
    } else {
        if (slot_count % mstar != 0) throw CapacityError("block size must divide slot count");
        u64 next_block = 0;
        for (const auto& t : trees) {
            u64 span = std::max<u64>(t.tau_star, (u64(t.tau_star) + 1 + mstar - 1) / mstar);
            std::vector<u64> ns(t.tau_star), ls(t.tau_star + 1);
            for (u32 n = 0; n < t.tau_star; ++n) ns[n] = (next_block + n) * mstar;
            for (u32 l = 0; l <= t.tau_star; ++l) ls[l] = next_block * mstar + l;
            lay.node_slots.push_back(std::move(ns));
            lay.leaf_slots.push_back(std::move(ls));
            next_block += span;
        }
        u64 blocks_per_group = slot_count / mstar;
        lay.group_count = static_cast<u32>((next_block + blocks_per_group - 1) / blocks_per_group);
    }
    lay.audit();
    return lay;
}

// ---------------------------------------------------------------------------
// Packed model: per-group encoded plaintext vectors plus per-tree feature
// masks and the published structure indices.

struct PackedModel {
    u32 feature_count = 0;
    u32 frac_bits = 12;
    u64 plain_modulus = 0;
    u64 zeta = 0;
    SlotLayout layout;
    std::vector<PlainVec> thresholds;  // Y^pack, per group
    std::vector<PlainVec> weights;     // W^pack, per group
    std::vector<PlainVec> flips;       // Upsilon^pack: 1 / q-1 at node slots
    std::vector<PlainVec> statuses;    // Psi^pack: 0/1 at node slots
    std::vector<PlainVec> node_mask;   // block-start keep mask E, per group
    // Interleaved: one selection mask per tree (group-local slots).
    // Adaptive: one combined selection mask per group.
    std::vector<PlainVec> selection_masks;
    std::vector<std::vector<u64>> structure;  // T*_s per tree
    std::vector<u32> tau_star;                // per tree

    u32 tree_count() const { return static_cast<u32>(structure.size()); }
};

inline PackedModel encode_pack(const std::vector<ObfuscatedTree>& trees, const SlotLayout& layout,
                               const PheParams& params) {
    PackedModel pm;
    pm.feature_count = trees[0].feature_count;
    pm.frac_bits = trees[0].frac_bits;
    pm.plain_modulus = params.plain_modulus;
    pm.zeta = params.zeta;
    pm.layout = layout;
    const u64 q = params.plain_modulus;
    const u32 S = layout.slot_count;

    // Aggregation overflow guard: sum of all selected weights must stay in
    // (-q/2, q/2).
    u128 bound = 0;
    for (const auto& t : trees) {
        i64 worst = 0;
        for (i64 w : t.leaf_fixed) worst = std::max(worst, std::abs(w));
        bound += u128(worst);
    }
    if (!(bound < u128(q) / 2))
        throw CapacityError("aggregated fixed-point weights would overflow q/2");

    auto zero_group = [&] { return PlainVec(S, 0); };
    pm.thresholds.assign(layout.group_count, zero_group());
    pm.weights.assign(layout.group_count, zero_group());
    pm.flips.assign(layout.group_count, zero_group());
    pm.statuses.assign(layout.group_count, zero_group());
    pm.node_mask.assign(layout.group_count, zero_group());
    if (layout.mode == SlotLayout::Mode::adaptive)
        pm.selection_masks.assign(layout.group_count, zero_group());
    if (layout.mode == SlotLayout::Mode::interleaved) {
        // Keep mask E over the unrotated block grid: per-tree selections are
        // E-masked at block starts before the pack rotation places them.
        u32 tau = trees[0].tau_star;
        for (u32 g = 0; g < layout.group_count; ++g)
            for (u32 n = 0; n < tau; ++n) pm.node_mask[g].slots[u64(n) * layout.block] = 1;
    }

    for (size_t k = 0; k < trees.size(); ++k) {
        const auto& ot = trees[k];
        if (ot.feature_count != pm.feature_count)
            throw CapacityError("feature count differs across trees");
        if (ot.frac_bits != pm.frac_bits) throw CapacityError("frac_bits differs across trees");
        auto ex = extract(ot);
        pm.structure.push_back(ex.structure);
        pm.tau_star.push_back(ot.tau_star);

        PlainVec tree_mask(S, 0);  // interleaved per-tree selection mask
        for (u32 n = 0; n < ot.tau_star; ++n) {
            if (ex.thresholds[n] > params.zeta)
                throw CapacityError("quantized threshold outside [0, zeta]");
            u64 gslot = layout.node_slots[k][n];
            u32 g = layout.group_of(gslot);
            u32 s = layout.slot_in_group(gslot);
            pm.thresholds[g].slots[s] = ex.thresholds[n];
            pm.flips[g].slots[s] = ex.flips[n] == 1 ? 1 : q - 1;
            pm.statuses[g].slots[s] = ex.statuses[n];
            if (layout.mode == SlotLayout::Mode::interleaved) {
                // per-tree selection mask over the unrotated block grid:
                // one-hot at (n-1)*M* + (feature-1).
                u64 base = u64(n) * layout.block;
                if (base + ex.features[n] - 1 >= S)
                    throw CapacityError("selection mask outside slot range");
                tree_mask.slots[base + ex.features[n] - 1] = 1;
            } else {
                // adaptive: node slots are block starts; the combined mask
                // selects every tree's feature in one pass, and the keep
                // mask E marks the occupied block starts.
                pm.node_mask[g].slots[s] = 1;
                u64 sel_slot = gslot + (ex.features[n] - 1);
                u32 gsel = layout.group_of(sel_slot);
                u32 ssel = layout.slot_in_group(sel_slot);
                pm.selection_masks[gsel].slots[ssel] = 1;
            }
        }
        if (layout.mode == SlotLayout::Mode::interleaved) pm.selection_masks.push_back(tree_mask);

        for (u32 l = 0; l <= ot.tau_star; ++l) {
            u64 gslot = layout.leaf_slots[k][l];
            u32 g = layout.group_of(gslot);
            u32 s = layout.slot_in_group(gslot);
            pm.weights[g].slots[s] = from_centered(ot.leaf_fixed[l], q);
        }
    }
    return pm;
}

}  // namespace kangaroo::model
