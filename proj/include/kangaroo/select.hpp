// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "kangaroo/layout.hpp"
#include "kangaroo/phe.hpp"

namespace kangaroo::protocol {

using phe::Ciphertext;
using phe::PlainVec;

/// Backend plus the public evaluation material a party computes with.
struct Evaluator {
    const phe::Backend& be;
    const phe::PublicKey& pk;
    const phe::RotationKeys& rk;

    u64 q() const { return be.params().plain_modulus; }
    u32 slots() const { return be.params().slot_count; }
};

inline u32 ceil_log2(u64 x) {
    u32 l = 0;
    while ((u64(1) << l) < x) ++l;
    return l;
}

/// Non-interactive packed feature selection. After the mask product, every
/// slot accumulates the sum of the `block` slots starting at it, so each
/// block-start slot ends up holding that block's selected value. Power-of-two
/// blocks use plain rotate-and-sum; otherwise adjacent pairs are folded with
/// the division approach.
inline Ciphertext feature_select_I(const Evaluator& ev, const Ciphertext& x, u32 block,
                                   const PlainVec& mask) {
    Ciphertext cur = ev.be.mul_plain(x, mask);
    if (block <= 1) return cur;
    if (is_power_of_two(block)) {
        for (u32 i = 0; (u32(1) << i) < block; ++i)
            cur = ev.be.add_ct(cur, ev.be.rotate(ev.rk, cur, -(i64(1) << i)));
        return cur;
    }
    Ciphertext pairs = ev.be.add_ct(cur, ev.be.rotate(ev.rk, cur, -1));
    u32 m = block;
    if (m % 2 == 0) cur = pairs;
    const u32 rounds = ceil_log2(block);
    for (u32 i = 1; i + 1 < rounds; ++i) {
        m = m - m / 2;
        if (m % 2 == 0) cur = ev.be.add_ct(pairs, ev.be.rotate(ev.rk, cur, -(i64(1) << i)));
        pairs = ev.be.add_ct(pairs, ev.be.rotate(ev.rk, pairs, -(i64(1) << i)));
    }
    return ev.be.add_ct(pairs, ev.be.rotate(ev.rk, cur, -(i64(1) << (rounds - 1))));
}

/// The plaintext mirror of feature_select_I, used by the interactive variant
/// and as a test oracle: every slot gets the sum of `block` consecutive slots.
inline PlainVec block_window_sums(const PlainVec& v, u32 block, u64 q) {
    const size_t n = v.size();
    PlainVec out(static_cast<u32>(n), 0);
    for (size_t i = 0; i < n; ++i) {
        u64 acc = 0;
        for (u32 j = 0; j < block; ++j) acc = add_mod(acc, v.slots[(i + j) % n], q);
        out.slots[i] = acc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Interactive variant: one round, no rotations. The server masks the
// selection with uniform E; the client decrypts, sums each block into its
// start slot, and returns the sums; the server strips its own block sums.

struct SelectIIServer {
    Ciphertext blinded;  // to the client
    PlainVec mask_e;     // kept by the server
};

inline SelectIIServer feature_select_II_start(const Evaluator& ev, const Ciphertext& x,
                                              const PlainVec& mask, Rng& rng,
                                              const PlainVec* e_override = nullptr) {
    PlainVec e(ev.slots(), 0);
    if (e_override)
        e = *e_override;
    else
        for (auto& s : e.slots) s = rng.uniform(ev.q());
    SelectIIServer out{ev.be.add_plain(ev.be.mul_plain(x, mask), e), std::move(e)};
    return out;
}

inline Ciphertext feature_select_II_respond(const phe::Backend& be, const phe::SecretKey& sk,
                                            const phe::PublicKey& pk, const Ciphertext& blinded,
                                            u32 block, Rng& rng) {
    PlainVec seen = be.decrypt(sk, blinded);
    const u64 q = be.params().plain_modulus;
    PlainVec sums(be.params().slot_count, 0);
    for (u32 start = 0; start + block <= be.params().slot_count; start += block) {
        u64 acc = 0;
        for (u32 j = 0; j < block; ++j) acc = add_mod(acc, seen.slots[start + j], q);
        sums.slots[start] = acc;
    }
    return be.encrypt(pk, sums, rng);
}

inline Ciphertext feature_select_II_finish(const Evaluator& ev, const Ciphertext& response,
                                           const PlainVec& mask_e, u32 block) {
    const u64 q = ev.q();
    PlainVec strip(ev.slots(), 0);
    for (u32 start = 0; start + block <= ev.slots(); start += block) {
        u64 acc = 0;
        for (u32 j = 0; j < block; ++j) acc = add_mod(acc, mask_e.slots[start + j], q);
        strip.slots[start] = neg_mod(acc, q);
    }
    return ev.be.add_plain(response, strip);
}

// ---------------------------------------------------------------------------
// Fully amortized selection for an interleaved group: run the non-interactive
// selection per tree, keep only block starts, and rotate tree m's results to
// the +(m-1) lane before summing.

inline Ciphertext feature_sel_pack_group(const Evaluator& ev, const Ciphertext& x,
                                         const std::vector<const PlainVec*>& tree_masks,
                                         const PlainVec& keep_mask, u32 block) {
    Ciphertext acc;
    for (size_t m = 0; m < tree_masks.size(); ++m) {
        Ciphertext sel = feature_select_I(ev, x, block, *tree_masks[m]);
        sel = ev.be.mul_plain(sel, keep_mask);
        if (m > 0) sel = ev.be.rotate(ev.rk, sel, static_cast<i64>(m));
        acc = m == 0 ? sel : ev.be.add_ct(acc, sel);
    }
    return acc;
}

/// Selection stage over a whole packed model: per group, either the rotated
/// per-tree sum (interleaved) or a single combined-mask pass (adaptive).
inline std::vector<Ciphertext> feature_sel_pack(const Evaluator& ev, const Ciphertext& x,
                                                const model::PackedModel& pm) {
    const auto& lay = pm.layout;
    std::vector<Ciphertext> out;
    if (lay.mode == model::SlotLayout::Mode::adaptive) {
        for (u32 g = 0; g < lay.group_count; ++g) {
            Ciphertext sel = feature_select_I(ev, x, lay.block, pm.selection_masks[g]);
            out.push_back(ev.be.mul_plain(sel, pm.node_mask[g]));
        }
        return out;
    }
    const u32 per_group = lay.block;
    const u32 trees = pm.tree_count();
    for (u32 g = 0; g < lay.group_count; ++g) {
        std::vector<const PlainVec*> masks;
        for (u32 m = 0; m < per_group && g * per_group + m < trees; ++m)
            masks.push_back(&pm.selection_masks[g * per_group + m]);
        out.push_back(feature_sel_pack_group(ev, x, masks, pm.node_mask[g], lay.block));
    }
    return out;
}

}  // namespace kangaroo::protocol
