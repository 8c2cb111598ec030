// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gmpxx.h>

#include <cmath>
#include <cstring>
#include <map>
#include <vector>

#include "kangaroo/core.hpp"
#include "kangaroo/ntt.hpp"
#include "kangaroo/phe.hpp"

namespace kangaroo::bfv {

using phe::BackendId;
using phe::Ciphertext;
using phe::KeyMaterial;
using phe::PheParams;
using phe::PlainVec;
using phe::PublicKey;
using phe::RotationKeys;
using phe::SecretKey;

/// HE-standard ceiling on log2(Q) for classical 128-bit security.
inline u32 max_coeff_modulus_bits(u32 degree) {
    switch (degree) {
        case 1024: return 27;
        case 2048: return 54;
        case 4096: return 109;
        case 8192: return 218;
        case 16384: return 438;
        case 32768: return 881;
    }
    throw ParamError("no security entry for ring degree " + std::to_string(degree));
}

/// RNS limb plan per degree: limb sizes are chosen so the full chain stays
/// within the security ceiling while leaving budget for the protocol's
/// two plain multiplications plus rotations. The last limb is picked to
/// minimize r_t = Q mod t, which drives plain-multiplication noise.
inline std::vector<u64> default_coeff_modulus(u32 degree, u64 plain_modulus) {
    u32 limb_bits, limbs;
    switch (degree) {
        case 1024: limb_bits = 27; limbs = 1; break;
        case 2048: limb_bits = 27; limbs = 2; break;
        case 4096: limb_bits = 27; limbs = 4; break;
        case 8192: limb_bits = 54; limbs = 4; break;
        case 16384: limb_bits = 54; limbs = 8; break;
        default: throw ParamError("unsupported ring degree");
    }
    auto primes = ntt::find_primes_down((u64(1) << limb_bits) - 1, 2 * u64(degree),
                                        static_cast<int>(limbs), {plain_modulus});
    // Minimize Q mod t over candidates for the final limb.
    u64 t = plain_modulus;
    u64 head = 1;
    for (u32 i = 0; i + 1 < limbs; ++i) head = mul_mod(head, primes[i] % t, t);
    u64 cand = primes.back();
    u64 best = cand;
    u64 best_rt = mul_mod(head, cand % t, t);
    for (int tries = 0; tries < 512 && best_rt > t >> 12; ++tries) {
        cand = ntt::find_prime_down(cand - 1, 2 * u64(degree));
        bool dup = cand == plain_modulus;
        for (u32 i = 0; i + 1 < limbs; ++i) dup |= (cand == primes[i]);
        if (dup) continue;
        u64 rt = mul_mod(head, cand % t, t);
        if (rt < best_rt) {
            best_rt = rt;
            best = cand;
        }
    }
    primes.back() = best;
    u32 total = 0;
    for (u64 p : primes) total += bit_length(p);
    if (total > max_coeff_modulus_bits(degree))
        throw ParamError("coefficient modulus exceeds 128-bit security ceiling");
    return primes;
}

// ---------------------------------------------------------------------------
// RingPoly: one residue polynomial per RNS limb, flagged coefficient or
// evaluation (NTT) representation. Stored flat: limb-major, N words per limb.

struct RingPoly {
    std::vector<u64> words;  // k * N
    bool ntt_form = false;
};

// ---------------------------------------------------------------------------
// Lattice backend

class LatticeBackend : public phe::Backend {
public:
    explicit LatticeBackend(PheParams p) : params_(std::move(p)) {
        if (params_.backend_id != BackendId::lattice)
            throw ParamError("LatticeBackend requires lattice params");
        params_.validate();
        degree_ = params_.ring_degree;
        t_ = params_.plain_modulus;
        primes_ = default_coeff_modulus(degree_, t_);
        k_ = static_cast<u32>(primes_.size());
        for (u64 p : primes_) tables_.emplace_back(degree_, p);
        t_tables_ = ntt::NttTables(degree_, t_);
        build_index_map();
        build_crt();
        // Noise constants, log2 of phase-error magnitude. Fresh ciphertexts
        // carry the sampled error terms plus the Delta-rounding error
        // r_t * ||m|| / t <= r_t.
        fresh_noise_bits_ = std::log2(double(kErrBound) * (2.0 * degree_ + 1.0) + double(rt_) + 1.0);
        double sum_p = 0;
        for (u64 p : primes_) sum_p += double(p);
        keyswitch_noise_bits_ = std::log2(double(degree_) * kErrBound * sum_p);
        noise_ceiling_bits_ = log2_Q_ - std::log2(double(t_)) - 2.0;
    }

    const PheParams& params() const override { return params_; }
    u32 limb_count() const { return k_; }
    const std::vector<u64>& coeff_modulus() const { return primes_; }
    double log2_coeff_modulus() const { return log2_Q_; }

    double noise_budget_bits(const Ciphertext& c) const { return noise_ceiling_bits_ - c.noise_bits; }

    // -- key generation -----------------------------------------------------

    KeyMaterial keygen(const std::set<i64>& shifts, Rng& rng) const override {
        KeyMaterial km;
        km.secret_key.backend_id = BackendId::lattice;
        km.public_key.backend_id = BackendId::lattice;
        km.rotation_keys.backend_id = BackendId::lattice;
        km.rotation_keys.declared = shifts;

        RingPoly s = sample_ternary(rng);
        to_ntt(s);
        km.secret_key.data = s.words;

        RingPoly a = sample_uniform(rng);  // already evaluation form
        RingPoly e = sample_error(rng);
        to_ntt(e);
        // b = -(a*s + e)
        RingPoly b = a;
        pointwise_mul(b, s);
        pointwise_add(b, e);
        negate(b);
        km.public_key.data.reserve(2 * size_t(k_) * degree_);
        km.public_key.data.insert(km.public_key.data.end(), b.words.begin(), b.words.end());
        km.public_key.data.insert(km.public_key.data.end(), a.words.begin(), a.words.end());

        km.rotation_keys = make_rotation_keys(km.secret_key, shifts, rng);
        return km;
    }

    RotationKeys make_rotation_keys(const SecretKey& sk, const std::set<i64>& shifts,
                                    Rng& rng) const override {
        check_backend(sk.backend_id);
        if (sk.data.size() != size_t(k_) * degree_) throw KeyError("secret key size mismatch");
        RingPoly s;
        s.words = sk.data;
        s.ntt_form = true;
        RotationKeys rk;
        rk.backend_id = BackendId::lattice;
        rk.declared = shifts;
        std::set<u32> normalized;
        u32 S = params_.slot_count;
        for (i64 sh : shifts) {
            u32 n = static_cast<u32>(((sh % i64(S)) + i64(S)) % i64(S));
            if (n != 0) normalized.insert(n);
        }
        for (u32 n : normalized) rk.keys.emplace(static_cast<i64>(n), make_galois_key(s, n, rng));
        return rk;
    }

    // -- encryption / decryption --------------------------------------------

    Ciphertext encrypt(const PublicKey& pk, const PlainVec& v, Rng& rng) const override {
        check_backend(pk.backend_id);
        v.check(params_);
        if (pk.data.size() != 2 * size_t(k_) * degree_) throw KeyError("public key size mismatch");
        std::vector<u64> m = encode_batch(v);

        RingPoly r = sample_ternary(rng);
        to_ntt(r);
        RingPoly e1 = sample_error(rng);
        RingPoly e2 = sample_error(rng);
        // c0 = b*r + ntt(delta*m + e1) ; c1 = a*r + ntt(e2)
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            u64 dj = delta_mod_[j];
            u64* e1j = e1.words.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i)
                e1j[i] = add_mod(e1j[i], mul_mod(dj, m[i] % p, p), p);
        }
        to_ntt(e1);
        to_ntt(e2);

        Ciphertext c;
        c.backend_id = BackendId::lattice;
        c.data.resize(2 * size_t(k_) * degree_);
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            const u64* bj = pk.data.data() + size_t(j) * degree_;
            const u64* aj = pk.data.data() + (size_t(k_) + j) * degree_;
            const u64* rj = r.words.data() + size_t(j) * degree_;
            const u64* e1j = e1.words.data() + size_t(j) * degree_;
            const u64* e2j = e2.words.data() + size_t(j) * degree_;
            u64* c0 = c.data.data() + size_t(j) * degree_;
            u64* c1 = c.data.data() + (size_t(k_) + j) * degree_;
            for (u32 i = 0; i < degree_; ++i) {
                c0[i] = add_mod(mul_mod(bj[i], rj[i], p), e1j[i], p);
                c1[i] = add_mod(mul_mod(aj[i], rj[i], p), e2j[i], p);
            }
        }
        c.noise_bits = fresh_noise_bits_;
        return c;
    }

    PlainVec decrypt(const SecretKey& sk, const Ciphertext& c) const override {
        check_backend(sk.backend_id);
        check_backend(c.backend_id);
        check_ct(c);
        if (noise_budget_bits(c) <= 0)
            throw NoiseBudgetError("noise budget exhausted; refusing to decrypt");
        // phase = c0 + c1 * s, back to coefficient form
        RingPoly phase;
        phase.words.resize(size_t(k_) * degree_);
        phase.ntt_form = true;
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            const u64* c0 = c.data.data() + size_t(j) * degree_;
            const u64* c1 = c.data.data() + (size_t(k_) + j) * degree_;
            const u64* sj = sk.data.data() + size_t(j) * degree_;
            u64* out = phase.words.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i) out[i] = add_mod(c0[i], mul_mod(c1[i], sj[i], p), p);
        }
        from_ntt(phase);

        // CRT-reconstruct each coefficient and scale-round by t/Q.
        std::vector<u64> m(degree_);
        mpz_class acc, tmp;
        for (u32 i = 0; i < degree_; ++i) {
            acc = 0;
            for (u32 j = 0; j < k_; ++j) {
                u64 xj = phase.words[size_t(j) * degree_ + i];
                u64 term = mul_mod(xj, y_[j], primes_[j]);
                mpz_addmul_ui(acc.get_mpz_t(), Qi_[j].get_mpz_t(), term);
            }
            mpz_mod(acc.get_mpz_t(), acc.get_mpz_t(), Q_.get_mpz_t());
            // m_i = round(t * acc / Q) mod t
            mpz_mul_ui(acc.get_mpz_t(), acc.get_mpz_t(), static_cast<unsigned long>(t_));
            mpz_add(acc.get_mpz_t(), acc.get_mpz_t(), halfQ_.get_mpz_t());
            mpz_fdiv_q(tmp.get_mpz_t(), acc.get_mpz_t(), Q_.get_mpz_t());
            u64 mi = mpz_get_ui(tmp.get_mpz_t());
            m[i] = mi == t_ ? 0 : mi;
        }
        return decode_batch(m);
    }

    // -- homomorphic operations ----------------------------------------------

    Ciphertext add_ct(const Ciphertext& a, const Ciphertext& b) const override {
        check_backend(a.backend_id);
        check_backend(b.backend_id);
        check_ct(a);
        check_ct(b);
        Ciphertext c = a;
        for (size_t i = 0; i < c.data.size(); ++i) {
            u64 p = primes_[(i / degree_) % k_];
            c.data[i] = add_mod(c.data[i], b.data[i], p);
        }
        bump_noise(c, std::max(a.noise_bits, b.noise_bits) + 1.0);
        return c;
    }

    Ciphertext sub_ct(const Ciphertext& a, const Ciphertext& b) const override {
        check_backend(a.backend_id);
        check_backend(b.backend_id);
        check_ct(a);
        check_ct(b);
        Ciphertext c = a;
        for (size_t i = 0; i < c.data.size(); ++i) {
            u64 p = primes_[(i / degree_) % k_];
            c.data[i] = sub_mod(c.data[i], b.data[i], p);
        }
        bump_noise(c, std::max(a.noise_bits, b.noise_bits) + 1.0);
        return c;
    }

    Ciphertext add_plain(const Ciphertext& a, const PlainVec& v) const override {
        check_backend(a.backend_id);
        check_ct(a);
        v.check(params_);
        std::vector<u64> m = encode_batch(v);
        Ciphertext c = a;
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            u64 dj = delta_mod_[j];
            std::vector<u64> dm(degree_);
            for (u32 i = 0; i < degree_; ++i) dm[i] = mul_mod(dj, m[i] % p, p);
            tables_[j].forward(dm);
            u64* c0 = c.data.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i) c0[i] = add_mod(c0[i], dm[i], p);
        }
        bump_noise(c, std::log2(std::exp2(a.noise_bits) + double(rt_) + 1.0));
        return c;
    }

    Ciphertext mul_plain(const Ciphertext& a, const PlainVec& v) const override {
        check_backend(a.backend_id);
        check_ct(a);
        v.check(params_);
        std::vector<u64> m = encode_batch(v);
        // Noise growth of a plain product: the existing error convolves with
        // the centered encoding w (bounded by min of the absolute l1 bound and
        // a high-probability sqrt(N) bound), and the Delta-rounding of the
        // new message contributes r_t * ||kappa|| with kappa ~ m*w/t.
        double l1 = 1.0, sq = 0.0;
        for (u32 i = 0; i < degree_; ++i) {
            double cm = std::abs(double(centered(m[i], t_)));
            l1 += cm;
            sq += cm * cm;
        }
        double rms = std::sqrt(sq / double(degree_)) + 1.0;
        double conv = std::min(l1, 8.0 * std::sqrt(double(degree_)) * rms);
        double kappa = std::min(l1, 4.0 * std::sqrt(double(degree_)) * rms);
        Ciphertext c = a;
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            std::vector<u64> mj(degree_);
            for (u32 i = 0; i < degree_; ++i) {
                i64 cm = centered(m[i], t_);
                mj[i] = cm >= 0 ? u64(cm) % p : p - (u64(-cm) % p);
            }
            tables_[j].forward(mj);
            u64* c0 = c.data.data() + size_t(j) * degree_;
            u64* c1 = c.data.data() + (size_t(k_) + j) * degree_;
            for (u32 i = 0; i < degree_; ++i) {
                c0[i] = mul_mod(c0[i], mj[i], p);
                c1[i] = mul_mod(c1[i], mj[i], p);
            }
        }
        bump_noise(c, std::log2(std::exp2(a.noise_bits) * conv + double(rt_) * kappa + 1.0));
        return c;
    }

    Ciphertext rotate(const RotationKeys& rk, const Ciphertext& c, i64 r) const override {
        check_backend(c.backend_id);
        check_ct(c);
        auto steps = phe::rotation_steps(rk, params_.slot_count, r);
        Ciphertext out = c;
        for (i64 step : steps) out = rotate_one(rk, out, static_cast<u32>(step));
        return out;
    }

    // -- serialization --------------------------------------------------------

    std::vector<u8> serialize_ct(const Ciphertext& c) const override {
        check_backend(c.backend_id);
        check_ct(c);
        std::vector<u64> words = c.data;
        u64 noise_word;
        double nb = c.noise_bits;
        static_assert(sizeof(double) == sizeof(u64));
        std::memcpy(&noise_word, &nb, 8);
        words.push_back(noise_word);
        return phe::wrap_container(BackendId::lattice, phe::words_to_bytes(words));
    }

    Ciphertext deserialize_ct(const std::vector<u8>& bytes) const override {
        phe::ContainerView v = phe::parse_container(bytes);
        if (v.backend_id != BackendId::lattice) throw WireError("expected lattice ciphertext");
        std::vector<u64> words = phe::bytes_to_words(v.payload, v.payload_len);
        if (words.size() != 2 * size_t(k_) * degree_ + 1) throw WireError("ciphertext size mismatch");
        Ciphertext c;
        c.backend_id = BackendId::lattice;
        u64 noise_word = words.back();
        words.pop_back();
        c.data = std::move(words);
        double nb;
        std::memcpy(&nb, &noise_word, 8);
        c.noise_bits = nb;
        for (size_t i = 0; i < c.data.size(); ++i)
            if (c.data[i] >= primes_[(i / degree_) % k_]) throw WireError("ciphertext limb out of range");
        return c;
    }

    // -- diagnostics ------------------------------------------------------------

    /// Exact noise measurement (requires the secret key): log2 of the largest
    /// centered phase error against the decrypted message. Used in tests to
    /// confirm the tracked estimate is an upper bound.
    double measured_noise_bits(const SecretKey& sk, const Ciphertext& c) const {
        PlainVec v = decrypt(sk, c);
        std::vector<u64> m = encode_batch(v);
        RingPoly phase;
        phase.words.resize(size_t(k_) * degree_);
        phase.ntt_form = true;
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            const u64* c0 = c.data.data() + size_t(j) * degree_;
            const u64* c1 = c.data.data() + (size_t(k_) + j) * degree_;
            const u64* sj = sk.data.data() + size_t(j) * degree_;
            u64* out = phase.words.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i) out[i] = add_mod(c0[i], mul_mod(c1[i], sj[i], p), p);
        }
        from_ntt(phase);
        mpz_class acc, delta, err, worst = 0;
        delta = Q_ / mpz_class(static_cast<unsigned long>(t_));
        for (u32 i = 0; i < degree_; ++i) {
            acc = 0;
            for (u32 j = 0; j < k_; ++j) {
                u64 xj = phase.words[size_t(j) * degree_ + i];
                u64 term = mul_mod(xj, y_[j], primes_[j]);
                mpz_addmul_ui(acc.get_mpz_t(), Qi_[j].get_mpz_t(), term);
            }
            mpz_mod(acc.get_mpz_t(), acc.get_mpz_t(), Q_.get_mpz_t());
            err = acc - delta * mpz_class(static_cast<unsigned long>(m[i]));
            mpz_mod(err.get_mpz_t(), err.get_mpz_t(), Q_.get_mpz_t());
            if (err > halfQ_) err = Q_ - err;
            if (err > worst) worst = err;
        }
        if (worst == 0) return 0.0;
        long exp2v;
        double d = mpz_get_d_2exp(&exp2v, worst.get_mpz_t());
        return std::log2(d) + double(exp2v);
    }

    // -- encoder (exposed for tests) ------------------------------------------

    /// Batching encode: slot vector -> plaintext polynomial coefficients.
    std::vector<u64> encode_batch(const PlainVec& v) const {
        std::vector<u64> m(degree_, 0);
        for (u32 i = 0; i < params_.slot_count; ++i) m[index_map_[i]] = v.slots[i];
        t_tables_.inverse(m);
        return m;
    }

    PlainVec decode_batch(std::vector<u64> m) const {
        t_tables_.forward(m);
        PlainVec v(params_.slot_count, 0);
        for (u32 i = 0; i < params_.slot_count; ++i) v.slots[i] = m[index_map_[i]];
        return v;
    }

private:
    static constexpr int kErrEta = 21;    // centered binomial: sigma ~ 3.24
    static constexpr int kErrBound = 21;  // |e| <= eta

    PheParams params_;
    u32 degree_ = 0;
    u32 k_ = 0;
    u64 t_ = 0;
    std::vector<u64> primes_;
    std::vector<ntt::NttTables> tables_;
    ntt::NttTables t_tables_;
    std::vector<u32> index_map_;

    mpz_class Q_, halfQ_;
    std::vector<mpz_class> Qi_;  // Q / p_j
    std::vector<u64> y_;         // (Q/p_j)^-1 mod p_j
    std::vector<u64> delta_mod_; // floor(Q/t) mod p_j
    u64 rt_ = 0;                 // Q mod t
    double log2_Q_ = 0;
    double fresh_noise_bits_ = 0;
    double keyswitch_noise_bits_ = 0;
    double noise_ceiling_bits_ = 0;

    void build_index_map() {
        u32 n = degree_;
        u32 logn = log2_exact(n);
        u64 m = 2 * u64(n);
        index_map_.assign(n, 0);
        u64 pos = 1;
        for (u32 i = 0; i < n / 2; ++i) {
            u64 idx1 = (pos - 1) >> 1;
            u64 idx2 = (m - pos - 1) >> 1;
            index_map_[i] = ntt::NttTables::reverse_bits(static_cast<u32>(idx1), logn);
            index_map_[i + n / 2] = ntt::NttTables::reverse_bits(static_cast<u32>(idx2), logn);
            pos = (pos * 3) & (m - 1);
        }
    }

    void build_crt() {
        Q_ = 1;
        for (u64 p : primes_) Q_ *= mpz_class(static_cast<unsigned long>(p));
        halfQ_ = Q_ / 2;
        mpz_class delta = Q_ / mpz_class(static_cast<unsigned long>(t_));
        mpz_class rt = Q_ % mpz_class(static_cast<unsigned long>(t_));
        rt_ = mpz_get_ui(rt.get_mpz_t());
        log2_Q_ = 0;
        for (u64 p : primes_) log2_Q_ += std::log2(double(p));
        for (u64 p : primes_) {
            mpz_class qi = Q_ / mpz_class(static_cast<unsigned long>(p));
            Qi_.push_back(qi);
            mpz_class qi_mod = qi % mpz_class(static_cast<unsigned long>(p));
            y_.push_back(inv_mod(mpz_get_ui(qi_mod.get_mpz_t()), p));
            mpz_class dm = delta % mpz_class(static_cast<unsigned long>(p));
            delta_mod_.push_back(mpz_get_ui(dm.get_mpz_t()));
        }
    }

    void check_ct(const Ciphertext& c) const {
        if (c.data.size() != 2 * size_t(k_) * degree_) throw Error(Stage::evaluate, "ciphertext size mismatch");
    }

    void bump_noise(Ciphertext& c, double bits) const {
        if (bits >= noise_ceiling_bits_)
            throw NoiseBudgetError("noise budget exhausted by homomorphic operation");
        c.noise_bits = bits;
    }

    // -- sampling -------------------------------------------------------------

    RingPoly sample_ternary(Rng& rng) const {
        RingPoly p;
        p.words.resize(size_t(k_) * degree_);
        for (u32 i = 0; i < degree_; ++i) {
            u64 d = rng.uniform(3);  // 0,1,2 -> -1,0,1
            for (u32 j = 0; j < k_; ++j) {
                u64 pj = primes_[j];
                p.words[size_t(j) * degree_ + i] = d == 0 ? pj - 1 : d - 1;
            }
        }
        return p;
    }

    RingPoly sample_error(Rng& rng) const {
        RingPoly p;
        p.words.resize(size_t(k_) * degree_);
        for (u32 i = 0; i < degree_; ++i) {
            int e = rng.cbd(kErrEta);
            for (u32 j = 0; j < k_; ++j) {
                u64 pj = primes_[j];
                p.words[size_t(j) * degree_ + i] = e >= 0 ? u64(e) : pj - u64(-e);
            }
        }
        return p;
    }

    RingPoly sample_uniform(Rng& rng) const {
        RingPoly p;
        p.ntt_form = true;  // uniform in either representation
        p.words.resize(size_t(k_) * degree_);
        for (u32 j = 0; j < k_; ++j)
            for (u32 i = 0; i < degree_; ++i) p.words[size_t(j) * degree_ + i] = rng.uniform(primes_[j]);
        return p;
    }

    // -- representation helpers ----------------------------------------------

    void to_ntt(RingPoly& p) const {
        if (p.ntt_form) return;
        for (u32 j = 0; j < k_; ++j) tables_[j].forward(p.words.data() + size_t(j) * degree_);
        p.ntt_form = true;
    }

    void from_ntt(RingPoly& p) const {
        if (!p.ntt_form) return;
        for (u32 j = 0; j < k_; ++j) tables_[j].inverse(p.words.data() + size_t(j) * degree_);
        p.ntt_form = false;
    }

    void pointwise_mul(RingPoly& a, const RingPoly& b) const {
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            u64* aj = a.words.data() + size_t(j) * degree_;
            const u64* bj = b.words.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i) aj[i] = mul_mod(aj[i], bj[i], p);
        }
    }

    void pointwise_add(RingPoly& a, const RingPoly& b) const {
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            u64* aj = a.words.data() + size_t(j) * degree_;
            const u64* bj = b.words.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i) aj[i] = add_mod(aj[i], bj[i], p);
        }
    }

    void negate(RingPoly& a) const {
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            u64* aj = a.words.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i) aj[i] = neg_mod(aj[i], p);
        }
    }

    /// x -> x^elt on coefficient-form limbs (negacyclic sign folding).
    void apply_galois(const u64* in, u64* out, u64 elt, u64 p) const {
        u64 m = 2 * u64(degree_);
        std::fill(out, out + degree_, 0);
        for (u32 i = 0; i < degree_; ++i) {
            u64 e = (u64(i) * elt) % m;
            if (e < degree_)
                out[e] = add_mod(out[e], in[i], p);
            else
                out[e - degree_] = sub_mod(out[e - degree_], in[i], p);
        }
    }

    u64 galois_elt_for_step(u32 step) const {
        // rotate right by `step`: sigma(x) = x^(3^(S - step)) with exponent mod 2N
        u32 S = params_.slot_count;
        u64 m = 2 * u64(degree_);
        u64 e = 1;
        u64 g = 3;
        u64 rem = (S - (step % S)) % S;
        for (u64 i = 0; i < rem; ++i) e = (e * g) & (m - 1);
        return e;
    }

    /// Galois key for one normalized step: k digit keys, each (b_j, a_j) with
    /// b_j = -(a_j s + e_j) + crt_unit_j * sigma(s). Layout: per digit j,
    /// b_j limbs then a_j limbs.
    std::vector<u64> make_galois_key(const RingPoly& s_ntt, u32 step, Rng& rng) const {
        u64 elt = galois_elt_for_step(step);
        RingPoly s = s_ntt;
        from_ntt(s);
        RingPoly sg;
        sg.words.resize(size_t(k_) * degree_);
        for (u32 j = 0; j < k_; ++j)
            apply_galois(s.words.data() + size_t(j) * degree_, sg.words.data() + size_t(j) * degree_,
                         elt, primes_[j]);
        to_ntt(sg);

        std::vector<u64> key(2 * size_t(k_) * k_ * degree_);
        for (u32 dig = 0; dig < k_; ++dig) {
            RingPoly a = sample_uniform(rng);
            RingPoly e = sample_error(rng);
            to_ntt(e);
            u64* bpos = key.data() + size_t(dig) * 2 * k_ * degree_;
            u64* apos = bpos + size_t(k_) * degree_;
            for (u32 j = 0; j < k_; ++j) {
                u64 p = primes_[j];
                const u64* aj = a.words.data() + size_t(j) * degree_;
                const u64* ej = e.words.data() + size_t(j) * degree_;
                const u64* s_ = s_ntt.words.data() + size_t(j) * degree_;
                const u64* sgj = sg.words.data() + size_t(j) * degree_;
                for (u32 i = 0; i < degree_; ++i) {
                    u64 b = neg_mod(add_mod(mul_mod(aj[i], s_[i], p), ej[i], p), p);
                    if (j == dig) b = add_mod(b, sgj[i], p);  // CRT unit: 1 mod p_dig, 0 elsewhere
                    bpos[size_t(j) * degree_ + i] = b;
                    apos[size_t(j) * degree_ + i] = aj[i];
                }
            }
        }
        return key;
    }

    Ciphertext rotate_one(const RotationKeys& rk, const Ciphertext& c, u32 step) const {
        auto it = rk.keys.find(static_cast<i64>(step));
        if (it == rk.keys.end()) throw KeyError("missing rotation key for step " + std::to_string(step));
        const std::vector<u64>& key = it->second;
        if (key.size() != 2 * size_t(k_) * k_ * degree_) throw KeyError("rotation key size mismatch");
        u64 elt = galois_elt_for_step(step);

        // Bring both polys to coefficient form and apply the automorphism.
        RingPoly c0, c1;
        c0.words.assign(c.data.begin(), c.data.begin() + size_t(k_) * degree_);
        c1.words.assign(c.data.begin() + size_t(k_) * degree_, c.data.end());
        c0.ntt_form = c1.ntt_form = true;
        from_ntt(c0);
        from_ntt(c1);
        RingPoly d0, d1;
        d0.words.resize(size_t(k_) * degree_);
        d1.words.resize(size_t(k_) * degree_);
        for (u32 j = 0; j < k_; ++j) {
            apply_galois(c0.words.data() + size_t(j) * degree_, d0.words.data() + size_t(j) * degree_,
                         elt, primes_[j]);
            apply_galois(c1.words.data() + size_t(j) * degree_, d1.words.data() + size_t(j) * degree_,
                         elt, primes_[j]);
        }

        // Key switch d1 from sigma(s) to s via RNS-prime decomposition.
        Ciphertext out;
        out.backend_id = BackendId::lattice;
        out.data.assign(2 * size_t(k_) * degree_, 0);
        std::vector<u64> digit(size_t(k_) * degree_);
        for (u32 dig = 0; dig < k_; ++dig) {
            const u64* d1d = d1.words.data() + size_t(dig) * degree_;
            for (u32 j = 0; j < k_; ++j) {
                u64 p = primes_[j];
                u64* dj = digit.data() + size_t(j) * degree_;
                for (u32 i = 0; i < degree_; ++i) dj[i] = d1d[i] % p;
                tables_[j].forward(dj);
            }
            const u64* bpos = key.data() + size_t(dig) * 2 * k_ * degree_;
            const u64* apos = bpos + size_t(k_) * degree_;
            for (u32 j = 0; j < k_; ++j) {
                u64 p = primes_[j];
                const u64* dj = digit.data() + size_t(j) * degree_;
                u64* o0 = out.data.data() + size_t(j) * degree_;
                u64* o1 = out.data.data() + (size_t(k_) + j) * degree_;
                const u64* bj = bpos + size_t(j) * degree_;
                const u64* aj = apos + size_t(j) * degree_;
                for (u32 i = 0; i < degree_; ++i) {
                    o0[i] = add_mod(o0[i], mul_mod(dj[i], bj[i], p), p);
                    o1[i] = add_mod(o1[i], mul_mod(dj[i], aj[i], p), p);
                }
            }
        }
        // Add sigma(c0) back into the b component.
        to_ntt(d0);
        for (u32 j = 0; j < k_; ++j) {
            u64 p = primes_[j];
            const u64* dj = d0.words.data() + size_t(j) * degree_;
            u64* o0 = out.data.data() + size_t(j) * degree_;
            for (u32 i = 0; i < degree_; ++i) o0[i] = add_mod(o0[i], dj[i], p);
        }
        double nb = c.noise_bits;
        out.noise_bits = 0;
        bump_noise(out, std::log2(std::exp2(nb) + std::exp2(keyswitch_noise_bits_)));
        return out;
    }
};

}  // namespace kangaroo::bfv
