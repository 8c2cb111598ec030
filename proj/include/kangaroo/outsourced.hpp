// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "kangaroo/bundle.hpp"
#include "kangaroo/patheval.hpp"

namespace kangaroo::protocol {

// ---------------------------------------------------------------------------
// Outsourced inference: the model owner (key holder) encrypts the packed
// model under its own key and ships it to a cloud service provider; users
// submit encrypted inputs plus a plain mask vector T'. The CSP evaluates on
// ciphertexts (needing ciphertext products, hence transparent backend only),
// the key holder answers the two sign rounds and applies the flip correction
// V' <- 1 - V' wherever upsilon = -1, and dummy nodes are silenced by
// multiplying both recovery terms with the encrypted status vector.
//
// Dummies are pinned unswapped during hiding for this mode: with C forced to
// 0 at every dummy, the inherited weight must sit on the dummy's left child.

struct EncryptedModel {
    std::vector<phe::Ciphertext> thresholds;  // per group
    std::vector<phe::Ciphertext> weights;
    std::vector<phe::Ciphertext> statuses;
    std::vector<phe::Ciphertext> selection_masks;  // per tree (interleaved) or group (adaptive)
    std::vector<PlainVec> node_mask;               // block-start keep mask (public structure)
    model::PublicBundle bundle;
};

/// Key holder's setup step: encrypt the packed model vectors.
inline EncryptedModel outsource_model(const phe::Backend& be, const phe::PublicKey& pk,
                                      const model::PackedModel& pm,
                                      const model::PublicBundle& bundle, Rng& rng) {
    if (be.params().backend_id != phe::BackendId::transparent)
        throw Error(Stage::evaluate,
                    "outsourced inference requires ciphertext products: transparent backend only");
    EncryptedModel em;
    for (const auto& v : pm.thresholds) em.thresholds.push_back(be.encrypt(pk, v, rng));
    for (const auto& v : pm.weights) em.weights.push_back(be.encrypt(pk, v, rng));
    for (const auto& v : pm.statuses) em.statuses.push_back(be.encrypt(pk, v, rng));
    for (const auto& v : pm.selection_masks) em.selection_masks.push_back(be.encrypt(pk, v, rng));
    em.node_mask = pm.node_mask;
    em.bundle = bundle;
    return em;
}

/// Ciphertext-mask variant of the non-interactive selection (outsourced
/// mode): identical rotation structure, ciphertext product for the mask.
inline phe::Ciphertext feature_select_I_ct(const Evaluator& ev, const phe::Ciphertext& x, u32 block,
                                           const phe::Ciphertext& mask) {
    phe::Ciphertext cur = ev.be.mul_ct(x, mask);
    if (block <= 1) return cur;
    if (is_power_of_two(block)) {
        for (u32 i = 0; (u32(1) << i) < block; ++i)
            cur = ev.be.add_ct(cur, ev.be.rotate(ev.rk, cur, -(i64(1) << i)));
        return cur;
    }
    phe::Ciphertext pairs = ev.be.add_ct(cur, ev.be.rotate(ev.rk, cur, -1));
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

/// Full outsourced run, composed in-process. `flips` stays with the key
/// holder; `user_mask` is the user's plain T'.
struct OutsourcedResult {
    i64 pi_fixed = 0;
    double pi = 0;
};

inline OutsourcedResult outsourced_infer(const phe::Backend& be, const phe::KeyMaterial& server_keys,
                                         const EncryptedModel& em,
                                         const std::vector<PlainVec>& flips,
                                         const std::vector<double>& user_features,
                                         const PlainVec& user_mask, u64 seed,
                                         bool apply_flip_correction = true) {
    if (be.params().backend_id != phe::BackendId::transparent)
        throw Error(Stage::evaluate,
                    "outsourced inference requires ciphertext products: transparent backend only");
    const auto& bundle = em.bundle;
    const u64 q = be.params().plain_modulus;
    const u32 S = be.params().slot_count;
    Rng rng_csp(mix_seed(seed, 21));
    Rng rng_user(mix_seed(seed, 22));
    Evaluator ev{be, server_keys.public_key, server_keys.rotation_keys};

    // --- user: encrypt the replicated quantized input
    auto spec = bundle.quantization();
    auto xq = spec.quantize_vector(user_features);
    PlainVec x(S, 0);
    for (u32 s = 0; s < S; ++s) {
        u32 j = s % bundle.block;
        x.slots[s] = j < xq.size() ? xq[j] : 0;
    }
    auto cx = be.encrypt(server_keys.public_key, x, rng_user);

    // --- CSP: feature selection with encrypted masks, then comparison
    const u32 groups = bundle.group_count;
    std::vector<phe::Ciphertext> selected(groups);
    for (u32 g = 0; g < groups; ++g) {
        if (bundle.mode == model::SlotLayout::Mode::adaptive) {
            auto sel = feature_select_I_ct(ev, cx, bundle.block, em.selection_masks[g]);
            selected[g] = be.mul_plain(sel, em.node_mask[g]);
        } else {
            bool first = true;
            for (u32 m = 0; m < bundle.block; ++m) {
                u32 k = g * bundle.block + m;
                if (k >= bundle.tree_count()) break;
                auto sel = feature_select_I_ct(ev, cx, bundle.block, em.selection_masks[k]);
                sel = be.mul_plain(sel, em.node_mask[g]);
                if (m > 0) sel = be.rotate(server_keys.rotation_keys, sel, i64(m));
                selected[g] = first ? sel : be.add_ct(selected[g], sel);
                first = false;
            }
        }
    }

    std::vector<ComparisonBlinding> cmp;
    std::vector<phe::Ciphertext> vprime(groups);
    for (u32 g = 0; g < groups; ++g) {
        cmp.push_back(sample_comparison_blinding(be.params(), rng_csp));
        auto v = compare_start_ct(ev, selected[g], em.thresholds[g], cmp[g]);
        // --- key holder: sign bits plus the swap correction
        auto seen = be.decrypt(server_keys.secret_key, v);
        auto bits = compare_sign_bits(seen, q);
        if (apply_flip_correction)
            for (u32 s = 0; s < S; ++s)
                if (flips[g].slots[s] == q - 1) bits.slots[s] = sub_mod(1, bits.slots[s], q);
        vprime[g] = be.encrypt(server_keys.public_key, bits, rng_user);
    }

    // --- CSP: dummy correction and recovery with encrypted statuses
    std::vector<phe::Ciphertext> branch(groups);
    for (u32 g = 0; g < groups; ++g) {
        Recovery rec = base_recovery(cmp[g], q);
        auto cprime_ct = be.mul_plain(em.statuses[g], rec.cprime);       // C'.psi
        auto r_ct = be.mul_plain(em.statuses[g], rec.r);                 // R.psi
        branch[g] = be.add_ct(cprime_ct, be.mul_ct(r_ct, vprime[g]));
    }

    // --- path evaluation with the encrypted weight vector
    std::vector<TreeView> views;
    for (size_t k = 0; k < bundle.structure.size(); ++k)
        views.push_back(
            TreeView{&bundle.structure[k], &bundle.node_slots[k], &bundle.leaf_slots[k]});
    auto pb = sample_path_blinding(be.params(), groups, views, rng_csp);
    auto rp_groups = split_groups(pb.rprime, S);
    auto rsum_groups = split_groups(pb.rsums, S);

    std::vector<PlainVec> iprime_views;
    for (u32 g = 0; g < groups; ++g) {
        auto iprime = be.add_plain(branch[g], rp_groups[g]);
        // key holder decrypts and computes the path sums
        iprime_views.push_back(be.decrypt(server_keys.secret_key, iprime));
    }
    PlainVec flat = path_costs_response(iprime_views, S, views, q);
    auto cost_groups = split_groups(flat, S);

    phe::Ciphertext total;
    for (u32 g = 0; g < groups; ++g) {
        auto costs_ct = be.encrypt(server_keys.public_key, cost_groups[g], rng_user);
        auto i_ct = be.add_plain(costs_ct, rsum_groups[g]);
        auto bl2 = sample_comparison_blinding(be.params(), rng_csp);
        PlainVec neg_ar = phe::pv_neg(phe::pv_mul(bl2.a, bl2.r, q), q);
        auto v2 = be.add_plain(be.mul_plain(i_ct, neg_ar), phe::pv_mul(bl2.b, bl2.r, q));
        auto bits = compare_sign_bits(be.decrypt(server_keys.secret_key, v2), q);
        auto v2p = be.encrypt(server_keys.public_key, bits, rng_user);
        Recovery rec2 = base_recovery(bl2, q);
        auto indicator = be.add_plain(be.mul_plain(v2p, rec2.r), rec2.cprime);
        auto t = be.mul_ct(indicator, em.weights[g]);
        total = g == 0 ? t : be.add_ct(total, t);
    }

    // --- response: CSP masks with the user's T', key holder opens the sum
    auto masked = be.add_plain(total, user_mask);
    auto opened = be.decrypt(server_keys.secret_key, masked);
    u64 sum = 0;
    for (u64 v : opened.slots) sum = add_mod(sum, v, q);
    u64 mask_sum = 0;
    for (u64 v : user_mask.slots) mask_sum = add_mod(mask_sum, v, q);

    OutsourcedResult out;
    out.pi_fixed = centered(sub_mod(sum, mask_sum, q), q);
    out.pi = static_cast<double>(out.pi_fixed) / std::exp2(double(bundle.frac_bits));
    return out;
}

}  // namespace kangaroo::protocol
