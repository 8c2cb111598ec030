// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <deque>
#include <optional>
#include <vector>

#include "kangaroo/bundle.hpp"
#include "kangaroo/patheval.hpp"
#include "kangaroo/wire.hpp"

namespace kangaroo::protocol {

using transport::Message;
using transport::MsgType;
using transport::PayloadReader;

// ---------------------------------------------------------------------------
// Both sessions derive two independent RNG streams from the session seed
// (core.hpp mix_seed): one for protocol-level blinding, whose semantics are
// shared across backends so transcripts agree between transparent and
// lattice runs, and one for encryption randomness.

/// Stage timing collected by both endpoints (milliseconds).
struct StageTimings {
    double encrypt_ms = 0;
    double select_ms = 0;
    double compare_ms = 0;
    double path_ms = 0;
    double respond_ms = 0;
};

class StageTimer {
public:
    explicit StageTimer(double& slot) : slot_(slot), start_(clock::now()) {}
    ~StageTimer() {
        slot_ += std::chrono::duration<double, std::milli>(clock::now() - start_).count();
    }

private:
    using clock = std::chrono::steady_clock;
    double& slot_;
    clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Server session: holds the packed model, owns per-query blinding, and walks
// the Query -> Response state machine. One query per session.

class ServerSession {
public:
    ServerSession(const phe::Backend& be, const model::PackedModel& pm,
                  const model::PublicBundle& bundle, u64 seed)
        : be_(be),
          pm_(pm),
          bundle_(bundle),
          digest_(model::bundle_digest(bundle)),
          rng_proto_(mix_seed(seed, 1)),
          rng_crypto_(mix_seed(seed, 2)) {
        const auto& lay = pm_.layout;
        if (be_.params().slot_count != lay.slot_count)
            throw StateError("packed model laid out for a different slot count");
        node_active_.assign(lay.group_count, std::vector<bool>(lay.slot_count, false));
        leaf_active_.assign(lay.group_count, std::vector<bool>(lay.slot_count, false));
        for (const auto& per_tree : lay.node_slots)
            for (u64 s : per_tree) node_active_[lay.group_of(s)][lay.slot_in_group(s)] = true;
        for (const auto& per_tree : lay.leaf_slots)
            for (u64 s : per_tree) leaf_active_[lay.group_of(s)][lay.slot_in_group(s)] = true;
        for (size_t k = 0; k < pm_.structure.size(); ++k)
            views_.push_back(TreeView{&pm_.structure[k], &pm_.layout.node_slots[k],
                                      &pm_.layout.leaf_slots[k]});
    }

    bool finished() const { return state_ == State::finished; }
    const StageTimings& timings() const { return timings_; }
    u64 bundle_digest() const { return digest_; }

    /// Latency-aware hook: pre-generate the next stage's blinding while the
    /// peer is busy. Handlers call the same ensure_* functions, so the
    /// protocol RNG draws in one fixed order either way.
    void precompute() {
        switch (state_) {
            case State::await_hello:
            case State::await_query: ensure_compare_material(); break;
            case State::await_compare_result: ensure_path_material(); break;
            case State::await_path_costs: ensure_path_cmp_material(); break;
            case State::await_path_cmp_result: ensure_response_material(); break;
            case State::finished: break;
        }
    }

    std::vector<Message> on_message(const Message& in) {
        check_seq(in.seq);
        switch (in.type) {
            case MsgType::hello: return on_hello(in);
            case MsgType::query: return on_query(in);
            case MsgType::compare_result: return on_compare_result(in);
            case MsgType::path_costs: return on_path_costs(in);
            case MsgType::path_cmp_result: return on_path_cmp_result(in);
            default:
                throw StateError(std::string("unexpected message ") +
                                 transport::msg_type_name(in.type));
        }
    }

private:
    enum class State {
        await_hello,
        await_query,
        await_compare_result,
        await_path_costs,
        await_path_cmp_result,
        finished,
    };

    Message make(MsgType t, std::vector<u8> payload) {
        return Message{t, next_seq_++, std::move(payload)};
    }

    void check_seq(u64 seq) {
        if (last_in_seq_ && seq <= *last_in_seq_) throw StateError("sequence number not increasing");
        last_in_seq_ = seq;
    }

    void require_state(State s, const char* what) {
        if (state_ != s) throw StateError(std::string("unexpected message ") + what);
    }

    std::vector<Message> on_hello(const Message& in) {
        PayloadReader r(in.payload);
        u8 kind = r.get_u8();
        if (kind == 0) {
            require_state(State::await_hello, "Hello");
            u8 backend = r.get_u8();
            u32 slots = r.get_u32();
            u64 q = r.get_u64();
            r.get_u32();  // ring degree, informational
            if (backend != static_cast<u8>(be_.params().backend_id))
                throw StateError("client backend does not match server backend");
            if (slots != be_.params().slot_count || q != be_.params().plain_modulus)
                throw StateError("client parameters do not match server parameters");
            client_pk_ = phe::deserialize_public_key(r.get_blob());
            r.expect_end();
            client_rk_.backend_id = be_.params().backend_id;
            state_ = State::await_query;
            return {make(MsgType::public_bundle, model::bundle_to_bytes(bundle_))};
        }
        if (kind == 1) {
            // rotation key chunks may arrive between the bundle and the query
            require_state(State::await_query, "Hello");
            i64 shift = static_cast<i64>(r.get_u64());
            auto blob = r.get_blob();
            r.expect_end();
            client_rk_.declared.insert(shift);
            if (!blob.empty()) {
                auto chunk = phe::deserialize_rotation_keys(blob);
                for (auto& [s, key] : chunk.keys) client_rk_.keys[s] = std::move(key);
            }
            return {};
        }
        throw WireError("unknown hello kind");
    }

    std::vector<Message> on_query(const Message& in) {
        require_state(State::await_query, "Query");
        PayloadReader r(in.payload);
        u64 digest = r.get_u64();
        if (digest != digest_)
            throw Error(Stage::session, "public bundle mismatch between client and server");
        auto cts = transport::unpack_ct_list(be_, r);
        r.expect_end();
        if (cts.size() != 1) throw WireError("query must carry one ciphertext");

        ensure_compare_material();
        Evaluator ev{be_, client_pk_, client_rk_};
        const auto& lay = pm_.layout;
        const u64 q = ev.q();
        std::vector<phe::Ciphertext> blinded;
        {
            StageTimer timer(timings_.select_ms);
            for (u32 g = 0; g < lay.group_count; ++g) {
                auto& bl = compare_blinding_[g];
                PlainVec ar = phe::pv_mul(bl.a, bl.r, q);
                phe::Ciphertext acc;
                if (lay.mode == model::SlotLayout::Mode::adaptive) {
                    auto sel = feature_select_I(ev, cts[0], lay.block, pm_.selection_masks[g]);
                    acc = ev.be.mul_plain(sel, phe::pv_mul(pm_.node_mask[g], ar, q));
                } else {
                    const u32 per_group = lay.block;
                    bool first = true;
                    for (u32 m = 0; m < per_group; ++m) {
                        u32 k = g * per_group + m;
                        if (k >= pm_.tree_count()) break;
                        auto sel = feature_select_I(ev, cts[0], lay.block, pm_.selection_masks[k]);
                        PlainVec fold =
                            phe::pv_mul(pm_.node_mask[g], phe::plain_rotate(ar, -i64(m)), q);
                        auto term = ev.be.mul_plain(sel, fold);
                        if (m > 0) term = ev.be.rotate(ev.rk, term, i64(m));
                        acc = first ? term : ev.be.add_ct(acc, term);
                        first = false;
                    }
                }
                // plain part: B.R - A.R.Y plus uniform filler off the node slots
                PlainVec plain = phe::pv_sub(phe::pv_mul(bl.b, bl.r, q),
                                             phe::pv_mul(ar, pm_.thresholds[g], q), q);
                plain = phe::pv_add(plain, compare_filler_[g], q);
                blinded.push_back(ev.be.add_plain(acc, plain));
            }
        }
        state_ = State::await_compare_result;
        return {make(MsgType::compare_blinded, transport::pack_ct_list(be_, blinded))};
    }

    std::vector<Message> on_compare_result(const Message& in) {
        require_state(State::await_compare_result, "CompareResult");
        PayloadReader r(in.payload);
        auto vprime = transport::unpack_ct_list(be_, r);
        r.expect_end();
        if (vprime.size() != pm_.layout.group_count) throw WireError("group count mismatch");

        ensure_path_material();
        Evaluator ev{be_, client_pk_, client_rk_};
        const u64 q = ev.q();
        const u32 S = pm_.layout.slot_count;
        std::vector<phe::Ciphertext> iprime;
        {
            StageTimer timer(timings_.compare_ms);
            auto rp_groups = split_groups(path_blinding_->rprime, S);
            for (u32 g = 0; g < pm_.layout.group_count; ++g) {
                Recovery rec =
                    forest_compare_adjust(compare_blinding_[g], pm_.flips[g], pm_.statuses[g], q);
                // I' = C + R' = R.V' + (C' + R'), one plain product deep
                PlainVec plain = phe::pv_add(rec.cprime, rp_groups[g], q);
                iprime.push_back(ev.be.add_plain(ev.be.mul_plain(vprime[g], rec.r), plain));
            }
        }
        state_ = State::await_path_costs;
        return {make(MsgType::path_blinded, transport::pack_ct_list(be_, iprime))};
    }

    std::vector<Message> on_path_costs(const Message& in) {
        require_state(State::await_path_costs, "PathCosts");
        PayloadReader r(in.payload);
        auto costs = transport::unpack_ct_list(be_, r);
        r.expect_end();
        if (costs.size() != pm_.layout.group_count) throw WireError("group count mismatch");

        ensure_path_cmp_material();
        Evaluator ev{be_, client_pk_, client_rk_};
        const u64 q = ev.q();
        const u32 S = pm_.layout.slot_count;
        std::vector<phe::Ciphertext> blinded;
        {
            StageTimer timer(timings_.path_ms);
            auto rsum_groups = split_groups(path_blinding_->rsums, S);
            for (u32 g = 0; g < pm_.layout.group_count; ++g) {
                auto& bl = path_cmp_blinding_[g];
                // V2 = A.R.(-I) + B.R with I = I'' + R'':
                //    = I''.(-A.R) + (B.R - A.R.R'') + filler
                PlainVec ar = phe::pv_mul(bl.a, bl.r, q);
                PlainVec neg_ar = phe::pv_neg(ar, q);
                PlainVec plain = phe::pv_sub(phe::pv_mul(bl.b, bl.r, q),
                                             phe::pv_mul(ar, rsum_groups[g], q), q);
                plain = phe::pv_add(plain, path_cmp_filler_[g], q);
                blinded.push_back(ev.be.add_plain(ev.be.mul_plain(costs[g], neg_ar), plain));
            }
        }
        state_ = State::await_path_cmp_result;
        return {make(MsgType::path_cmp_blinded, transport::pack_ct_list(be_, blinded))};
    }

    std::vector<Message> on_path_cmp_result(const Message& in) {
        require_state(State::await_path_cmp_result, "PathCmpResult");
        PayloadReader r(in.payload);
        auto vprime = transport::unpack_ct_list(be_, r);
        r.expect_end();
        if (vprime.size() != pm_.layout.group_count) throw WireError("group count mismatch");

        ensure_response_material();
        Evaluator ev{be_, client_pk_, client_rk_};
        const u64 q = ev.q();
        phe::Ciphertext sum;
        u64 scalar = 0;
        {
            StageTimer timer(timings_.respond_ms);
            for (u32 g = 0; g < pm_.layout.group_count; ++g) {
                Recovery rec = base_recovery(path_cmp_blinding_[g], q);
                // T = C2.W = V2'.(R2.W) + C2'.W
                PlainVec rw = phe::pv_mul(rec.r, pm_.weights[g], q);
                PlainVec cw = phe::pv_mul(rec.cprime, pm_.weights[g], q);
                auto t = ev.be.add_plain(ev.be.mul_plain(vprime[g], rw), cw);
                sum = g == 0 ? t : ev.be.add_ct(sum, t);
            }
            sum = ev.be.add_plain(sum, *response_mask_);
            for (u64 v : response_mask_->slots) scalar = add_mod(scalar, v, q);
        }
        state_ = State::finished;
        std::vector<u8> payload = transport::pack_ct_list(be_, {sum});
        phe::put_u64(payload, scalar);
        return {make(MsgType::response, std::move(payload))};
    }

    // -- per-stage material, generated exactly once in a fixed order ---------

    void ensure_compare_material() {
        if (!compare_blinding_.empty()) return;
        const auto& p = be_.params();
        for (u32 g = 0; g < pm_.layout.group_count; ++g)
            compare_blinding_.push_back(sample_comparison_blinding(p, rng_proto_));
        for (u32 g = 0; g < pm_.layout.group_count; ++g)
            compare_filler_.push_back(
                inactive_filler(p.slot_count, node_active_[g], p.plain_modulus, rng_proto_));
    }

    void ensure_path_material() {
        if (path_blinding_) return;
        path_blinding_ =
            sample_path_blinding(be_.params(), pm_.layout.group_count, views_, rng_proto_);
    }

    void ensure_path_cmp_material() {
        if (!path_cmp_blinding_.empty()) return;
        const auto& p = be_.params();
        for (u32 g = 0; g < pm_.layout.group_count; ++g)
            path_cmp_blinding_.push_back(sample_comparison_blinding(p, rng_proto_));
        for (u32 g = 0; g < pm_.layout.group_count; ++g)
            path_cmp_filler_.push_back(
                inactive_filler(p.slot_count, leaf_active_[g], p.plain_modulus, rng_proto_));
    }

    void ensure_response_material() {
        if (response_mask_) return;
        PlainVec mask(be_.params().slot_count, 0);
        for (auto& s : mask.slots) s = rng_proto_.uniform(be_.params().plain_modulus);
        response_mask_ = std::move(mask);
    }

    const phe::Backend& be_;
    const model::PackedModel& pm_;
    const model::PublicBundle& bundle_;
    u64 digest_;
    Rng rng_proto_;
    Rng rng_crypto_;
    State state_ = State::await_hello;
    u64 next_seq_ = 0;
    std::optional<u64> last_in_seq_;
    phe::PublicKey client_pk_;
    phe::RotationKeys client_rk_;
    std::vector<std::vector<bool>> node_active_, leaf_active_;
    std::vector<TreeView> views_;
    StageTimings timings_;

    std::vector<ComparisonBlinding> compare_blinding_;
    std::vector<PlainVec> compare_filler_;
    std::optional<PathBlinding> path_blinding_;
    std::vector<ComparisonBlinding> path_cmp_blinding_;
    std::vector<PlainVec> path_cmp_filler_;
    std::optional<PlainVec> response_mask_;
};

// ---------------------------------------------------------------------------
// Client session: quantizes and encrypts the feature vector, answers the
// blinded sign queries and the path-cost round, and unmasks the response.

class ClientSession {
public:
    ClientSession(const phe::Backend& be, std::vector<double> features, u64 seed)
        : be_(be),
          features_(std::move(features)),
          rng_proto_(mix_seed(seed, 11)),
          rng_crypto_(mix_seed(seed, 12)) {
        keys_ = be_.keygen({}, rng_crypto_);
    }

    /// Pre-generated key material (e.g. loaded from keygen output). Rotation
    /// keys are reused when they cover the published block's shift set and
    /// regenerated otherwise.
    ClientSession(const phe::Backend& be, phe::KeyMaterial keys, std::vector<double> features,
                  u64 seed)
        : be_(be),
          features_(std::move(features)),
          rng_proto_(mix_seed(seed, 11)),
          rng_crypto_(mix_seed(seed, 12)),
          keys_(std::move(keys)) {}

    /// Setup opener: parameters and public key.
    Message start() {
        const auto& p = be_.params();
        std::vector<u8> payload;
        payload.push_back(0);  // hello kind 0
        payload.push_back(static_cast<u8>(p.backend_id));
        phe::put_u32(payload, p.slot_count);
        phe::put_u64(payload, p.plain_modulus);
        phe::put_u32(payload, p.ring_degree);
        transport::put_blob(payload, phe::serialize_public_key(keys_.public_key));
        state_ = State::await_bundle;
        return make(MsgType::hello, std::move(payload));
    }

    std::vector<Message> on_message(const Message& in) {
        check_seq(in.seq);
        switch (in.type) {
            case MsgType::public_bundle: return on_bundle(in);
            case MsgType::compare_blinded: return on_compare_blinded(in);
            case MsgType::path_blinded: return on_path_blinded(in);
            case MsgType::path_cmp_blinded: return on_path_cmp_blinded(in);
            case MsgType::response: return on_response(in);
            case MsgType::error: {
                PayloadReader r(in.payload);
                u8 stage = r.get_u8();
                auto blob = r.get_blob();
                throw Error(static_cast<Stage>(stage), std::string(blob.begin(), blob.end()));
            }
            default:
                throw StateError(std::string("unexpected message ") +
                                 transport::msg_type_name(in.type));
        }
    }

    /// Latency-aware hook: keep a fresh zero ciphertext ready so responses
    /// are add_plain over a precomputed encryption.
    void precompute() {
        const u32 want = state_ == State::finished ? 0 : 2;
        while (zero_cts_.size() < want)
            zero_cts_.push_back(be_.encrypt(keys_.public_key, PlainVec(be_.params().slot_count, 0),
                                            rng_crypto_));
    }

    bool finished() const { return state_ == State::finished; }

    i64 result_fixed() const {
        if (!finished()) throw StateError("result not available yet");
        return result_fixed_;
    }
    u64 result_residue() const {
        if (!finished()) throw StateError("result not available yet");
        return result_residue_;
    }
    double result() const {
        return static_cast<double>(result_fixed()) / std::exp2(double(bundle_->frac_bits));
    }

    const model::PublicBundle& bundle() const {
        if (!bundle_) throw StateError("bundle not received yet");
        return *bundle_;
    }

    /// Decrypted values at every decryption point, in protocol order.
    const std::vector<PlainVec>& decrypt_trace() const { return trace_; }

private:
    enum class State { await_bundle, await_compare, await_path, await_path_cmp, await_response, finished };

    Message make(MsgType t, std::vector<u8> payload) {
        return Message{t, next_seq_++, std::move(payload)};
    }

    void check_seq(u64 seq) {
        if (last_in_seq_ && seq <= *last_in_seq_) throw StateError("sequence number not increasing");
        last_in_seq_ = seq;
    }

    void require_state(State s, const char* what) {
        if (state_ != s) throw StateError(std::string("unexpected message ") + what);
    }

    phe::Ciphertext encrypt_fast(const PlainVec& v) {
        StageTimer timer(timings_.encrypt_ms);
        if (!zero_cts_.empty()) {
            auto ct = be_.add_plain(zero_cts_.front(), v);
            zero_cts_.pop_front();
            return ct;
        }
        return be_.encrypt(keys_.public_key, v, rng_crypto_);
    }

    PlainVec decrypt_traced(const phe::Ciphertext& c) {
        auto v = be_.decrypt(keys_.secret_key, c);
        trace_.push_back(v);
        return v;
    }

    std::vector<Message> on_bundle(const Message& in) {
        require_state(State::await_bundle, "PublicBundle");
        bundle_ = model::bundle_from_bytes(in.payload);
        const auto& p = be_.params();
        if (bundle_->plain_modulus != p.plain_modulus || bundle_->slot_count != p.slot_count)
            throw StateError("bundle parameters do not match session parameters");
        if (bundle_->x_min.size() != features_.size())
            throw StateError("feature vector size does not match the published ranges");

        // rotation keys now that M* is known; reuse injected keys when they
        // already cover the shift set
        auto shifts = phe::default_shift_set(p.slot_count, bundle_->block);
        bool covered = true;
        for (i64 s : shifts) {
            try {
                (void)phe::rotation_steps(keys_.rotation_keys, p.slot_count, s);
            } catch (const KeyError&) {
                covered = false;
                break;
            }
        }
        if (!covered)
            keys_.rotation_keys = be_.make_rotation_keys(keys_.secret_key, shifts, rng_crypto_);

        std::vector<Message> out;
        for (const auto& [shift, blob] : keys_.rotation_keys.keys) {
            std::vector<u8> payload;
            payload.push_back(1);
            phe::put_u64(payload, static_cast<u64>(shift));
            phe::RotationKeys single;
            single.backend_id = p.backend_id;
            single.declared = {shift};
            single.keys[shift] = blob;
            transport::put_blob(payload, phe::serialize_rotation_keys(single));
            out.push_back(make(MsgType::hello, std::move(payload)));
        }
        // transparent backends carry no key blobs but still declare shifts
        if (keys_.rotation_keys.keys.empty()) {
            for (i64 shift : keys_.rotation_keys.declared) {
                std::vector<u8> payload;
                payload.push_back(1);
                phe::put_u64(payload, static_cast<u64>(shift));
                transport::put_blob(payload, {});
                out.push_back(make(MsgType::hello, std::move(payload)));
            }
        }

        // quantize, replicate per block, and encrypt
        auto spec = bundle_->quantization();
        auto xq = spec.quantize_vector(features_);
        PlainVec x(p.slot_count, 0);
        for (u32 s = 0; s < p.slot_count; ++s) {
            u32 j = s % bundle_->block;
            x.slots[s] = j < xq.size() ? xq[j] : 0;
        }
        precompute();
        auto ct = encrypt_fast(x);
        std::vector<u8> payload;
        phe::put_u64(payload, model::bundle_digest(*bundle_));
        auto blob = transport::pack_ct_list(be_, {ct});
        payload.insert(payload.end(), blob.begin(), blob.end());
        out.push_back(make(MsgType::query, std::move(payload)));
        state_ = State::await_compare;
        return out;
    }

    std::vector<Message> on_compare_blinded(const Message& in) {
        require_state(State::await_compare, "CompareBlinded");
        PayloadReader r(in.payload);
        auto cts = transport::unpack_ct_list(be_, r);
        r.expect_end();
        StageTimer timer(timings_.compare_ms);
        const u64 q = be_.params().plain_modulus;
        std::vector<phe::Ciphertext> out;
        for (const auto& c : cts) out.push_back(encrypt_fast(compare_sign_bits(decrypt_traced(c), q)));
        state_ = State::await_path;
        return {make(MsgType::compare_result, transport::pack_ct_list(be_, out))};
    }

    std::vector<Message> on_path_blinded(const Message& in) {
        require_state(State::await_path, "PathBlinded");
        PayloadReader r(in.payload);
        auto cts = transport::unpack_ct_list(be_, r);
        r.expect_end();
        StageTimer timer(timings_.path_ms);
        const u64 q = be_.params().plain_modulus;
        const u32 S = be_.params().slot_count;
        std::vector<PlainVec> iprime;
        for (const auto& c : cts) iprime.push_back(decrypt_traced(c));
        std::vector<TreeView> views;
        for (size_t k = 0; k < bundle_->structure.size(); ++k)
            views.push_back(TreeView{&bundle_->structure[k], &bundle_->node_slots[k],
                                     &bundle_->leaf_slots[k]});
        PlainVec flat = path_costs_response(iprime, S, views, q);
        auto groups = split_groups(flat, S);
        std::vector<phe::Ciphertext> out;
        for (const auto& g : groups) out.push_back(encrypt_fast(g));
        state_ = State::await_path_cmp;
        return {make(MsgType::path_costs, transport::pack_ct_list(be_, out))};
    }

    std::vector<Message> on_path_cmp_blinded(const Message& in) {
        require_state(State::await_path_cmp, "PathCmpBlinded");
        PayloadReader r(in.payload);
        auto cts = transport::unpack_ct_list(be_, r);
        r.expect_end();
        StageTimer timer(timings_.compare_ms);
        const u64 q = be_.params().plain_modulus;
        std::vector<phe::Ciphertext> out;
        for (const auto& c : cts) out.push_back(encrypt_fast(compare_sign_bits(decrypt_traced(c), q)));
        state_ = State::await_response;
        return {make(MsgType::path_cmp_result, transport::pack_ct_list(be_, out))};
    }

    std::vector<Message> on_response(const Message& in) {
        require_state(State::await_response, "Response");
        PayloadReader r(in.payload);
        auto cts = transport::unpack_ct_list(be_, r);
        u64 scalar = r.get_u64();
        r.expect_end();
        if (cts.size() != 1) throw WireError("response must carry one ciphertext");
        StageTimer timer(timings_.respond_ms);
        const u64 q = be_.params().plain_modulus;
        auto masked = decrypt_traced(cts[0]);
        u64 total = 0;
        for (u64 v : masked.slots) total = add_mod(total, v, q);
        result_residue_ = sub_mod(total, scalar, q);
        result_fixed_ = centered(result_residue_, q);
        state_ = State::finished;
        return {};
    }

    const phe::Backend& be_;
    std::vector<double> features_;
    Rng rng_proto_;
    Rng rng_crypto_;
    phe::KeyMaterial keys_;
    std::optional<model::PublicBundle> bundle_;
    State state_ = State::await_bundle;
    u64 next_seq_ = 0;
    std::optional<u64> last_in_seq_;
    std::deque<phe::Ciphertext> zero_cts_;
    std::vector<PlainVec> trace_;
    StageTimings timings_;
    u64 result_residue_ = 0;
    i64 result_fixed_ = 0;

public:
    const StageTimings& timings() const { return timings_; }
};

// ---------------------------------------------------------------------------
// In-process driver: shuttles messages between the two sessions without a
// transport. Used by tests and by transports-free benchmarks.

struct ExchangeLog {
    std::vector<Message> to_server;  // client -> server, in order
    std::vector<Message> to_client;  // server -> client, in order

    u32 post_setup_messages() const {
        u32 n = 0;
        for (const auto& m : to_server)
            if (!transport::is_setup_type(m.type)) ++n;
        for (const auto& m : to_client)
            if (!transport::is_setup_type(m.type)) ++n;
        return n;
    }
};

inline ExchangeLog drive_inprocess(ServerSession& server, ClientSession& client) {
    ExchangeLog log;
    std::deque<Message> inbox_server, inbox_client;
    inbox_server.push_back(client.start());
    while (!client.finished()) {
        bool progressed = false;
        while (!inbox_server.empty()) {
            Message m = std::move(inbox_server.front());
            inbox_server.pop_front();
            log.to_server.push_back(m);
            for (auto& reply : server.on_message(m)) inbox_client.push_back(std::move(reply));
            server.precompute();
            progressed = true;
        }
        while (!inbox_client.empty()) {
            Message m = std::move(inbox_client.front());
            inbox_client.pop_front();
            log.to_client.push_back(m);
            for (auto& reply : client.on_message(m)) inbox_server.push_back(std::move(reply));
            client.precompute();
            progressed = true;
        }
        if (!progressed) throw StateError("protocol stalled");
    }
    return log;
}

}  // namespace kangaroo::protocol
