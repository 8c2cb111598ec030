// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "kangaroo/select.hpp"

namespace kangaroo::protocol {

// ---------------------------------------------------------------------------
// Packed oblivious comparison. The server blinds the difference d = X' - Y
// as V = A.R.d + B.R per slot; the client only reports sign bits of V; the
// server recovers C = C' + R.V' with C' = 1 exactly where R = -1. Active
// slot of C is 0 iff d < 0, else 1 (ties land on 1).

struct ComparisonBlinding {
    PlainVec a;  // zeta > a > b > 0 per slot
    PlainVec b;
    PlainVec r;  // 1 or q-1 per slot
    bool used = false;

    void consume() {
        if (used) throw Error(Stage::comparison, "blinding material reused");
        used = true;
    }
};

/// Fresh per-query blinding over every slot; B_min = 1, so a in [3, zeta-1]
/// and b in [1, a-1].
inline ComparisonBlinding sample_comparison_blinding(const phe::PheParams& p, Rng& rng) {
    ComparisonBlinding bl;
    bl.a = PlainVec(p.slot_count, 0);
    bl.b = PlainVec(p.slot_count, 0);
    bl.r = PlainVec(p.slot_count, 0);
    for (u32 i = 0; i < p.slot_count; ++i) {
        bl.a.slots[i] = rng.uniform_range(3, p.zeta - 1);
        bl.b.slots[i] = rng.uniform_range(1, bl.a.slots[i] - 1);
        bl.r.slots[i] = rng.coin() ? 1 : p.plain_modulus - 1;
    }
    return bl;
}

/// Uniform residues at inactive slots (zero at active ones) so decrypted
/// views carry no structure outside the protocol's active positions.
inline PlainVec inactive_filler(u32 slots, const std::vector<bool>& active, u64 q, Rng& rng) {
    PlainVec u(slots, 0);
    for (u32 i = 0; i < slots; ++i)
        if (!active[i]) u.slots[i] = rng.uniform(q);
    return u;
}

/// Server step: V = A.R.(X' - Y) + B.R + filler, folded so the ciphertext
/// sees exactly one plain multiplication.
inline Ciphertext compare_start(const Evaluator& ev, const Ciphertext& x, const PlainVec& y,
                                ComparisonBlinding& bl, const PlainVec* filler = nullptr) {
    bl.consume();
    const u64 q = ev.q();
    PlainVec ar = phe::pv_mul(bl.a, bl.r, q);
    PlainVec plain = phe::pv_sub(phe::pv_mul(bl.b, bl.r, q), phe::pv_mul(ar, y, q), q);
    if (filler) plain = phe::pv_add(plain, *filler, q);
    return ev.be.add_plain(ev.be.mul_plain(x, ar), plain);
}

/// Ciphertext-Y variant (encrypted-model mode; also the Remark-1 form).
inline Ciphertext compare_start_ct(const Evaluator& ev, const Ciphertext& x, const Ciphertext& y,
                                   ComparisonBlinding& bl, const PlainVec* filler = nullptr) {
    bl.consume();
    const u64 q = ev.q();
    PlainVec ar = phe::pv_mul(bl.a, bl.r, q);
    Ciphertext v = ev.be.mul_plain(ev.be.sub_ct(x, y), ar);
    PlainVec plain = phe::pv_mul(bl.b, bl.r, q);
    if (filler) plain = phe::pv_add(plain, *filler, q);
    return ev.be.add_plain(v, plain);
}

/// Client step: report the sign of every slot (0 for negative, 1 otherwise).
inline PlainVec compare_sign_bits(const PlainVec& v, u64 q) {
    PlainVec out(static_cast<u32>(v.size()), 0);
    for (size_t i = 0; i < v.size(); ++i) out.slots[i] = centered(v.slots[i], q) < 0 ? 0 : 1;
    return out;
}

inline Ciphertext compare_respond(const phe::Backend& be, const phe::SecretKey& sk,
                                  const phe::PublicKey& pk, const Ciphertext& v, Rng& rng) {
    return be.encrypt(pk, compare_sign_bits(be.decrypt(sk, v), be.params().plain_modulus), rng);
}

/// Recovery material: sign mask applied to V' plus the constant C'.
struct Recovery {
    PlainVec r;       // in {1, q-1, 0}
    PlainVec cprime;  // in {0, 1}
};

inline Recovery base_recovery(const ComparisonBlinding& bl, u64 q) {
    Recovery rec;
    rec.r = bl.r;
    rec.cprime = PlainVec(static_cast<u32>(bl.r.size()), 0);
    for (size_t i = 0; i < bl.r.size(); ++i) rec.cprime.slots[i] = bl.r.slots[i] == q - 1 ? 1 : 0;
    return rec;
}

/// Forest adjustment over the packed model: R picks up the per-node flip and
/// is zeroed at dummy and filler slots; C' additionally covers swapped
/// dummies, whose comparison bit must come out constant 1.
inline Recovery forest_compare_adjust(const ComparisonBlinding& bl, const PlainVec& flips,
                                      const PlainVec& statuses, u64 q) {
    Recovery rec;
    rec.r = phe::pv_mul(bl.r, flips, q);
    rec.cprime = PlainVec(static_cast<u32>(bl.r.size()), 0);
    for (size_t i = 0; i < bl.r.size(); ++i) {
        if (statuses.slots[i] == 0) rec.r.slots[i] = 0;
        bool minus = rec.r.slots[i] == q - 1;
        bool swapped_dummy = flips.slots[i] == q - 1 && statuses.slots[i] == 0;
        rec.cprime.slots[i] = (minus || swapped_dummy) ? 1 : 0;
    }
    return rec;
}

/// Server step: C = C' + R.V'.
inline Ciphertext compare_finish(const Evaluator& ev, const Ciphertext& vprime, const Recovery& rec) {
    return ev.be.add_plain(ev.be.mul_plain(vprime, rec.r), rec.cprime);
}

// ---------------------------------------------------------------------------
// Enhanced comparison: operands premapped to 2X' and 2Y-1 (both in [0, zeta])
// so the blinded difference term 2(X'-Y)+1 is odd and never zero. Two sign
// coins R and R' are sampled; the A-term carries R.R' while the B-term
// carries R alone, so recovery must use the combined mask R.R' (using R alone
// fails whenever R' = -1).

struct EnhancedBlinding {
    ComparisonBlinding base;  // a, b, r
    PlainVec r2;              // second sign vector
};

inline EnhancedBlinding sample_enhanced_blinding(const phe::PheParams& p, Rng& rng) {
    EnhancedBlinding bl;
    bl.base = sample_comparison_blinding(p, rng);
    bl.r2 = PlainVec(p.slot_count, 0);
    for (u32 i = 0; i < p.slot_count; ++i) bl.r2.slots[i] = rng.coin() ? 1 : p.plain_modulus - 1;
    return bl;
}

/// V = A.(R.R').(2(X'-Y)+1) + B.R where x2 already carries 2X' and y2m1
/// carries 2Y-1.
inline Ciphertext compare_plus_start(const Evaluator& ev, const Ciphertext& x2, const PlainVec& y2m1,
                                     EnhancedBlinding& bl) {
    bl.base.consume();
    const u64 q = ev.q();
    PlainVec sign = phe::pv_mul(bl.base.r, bl.r2, q);
    PlainVec asign = phe::pv_mul(bl.base.a, sign, q);
    PlainVec plain = phe::pv_sub(phe::pv_mul(bl.base.b, bl.base.r, q), phe::pv_mul(asign, y2m1, q), q);
    return ev.be.add_plain(ev.be.mul_plain(x2, asign), plain);
}

/// Recovery with the combined sign mask R.R'.
inline Recovery enhanced_recovery(const EnhancedBlinding& bl, u64 q) {
    Recovery rec;
    rec.r = phe::pv_mul(bl.base.r, bl.r2, q);
    rec.cprime = PlainVec(static_cast<u32>(rec.r.size()), 0);
    for (size_t i = 0; i < rec.r.size(); ++i) rec.cprime.slots[i] = rec.r.slots[i] == q - 1 ? 1 : 0;
    return rec;
}

}  // namespace kangaroo::protocol
