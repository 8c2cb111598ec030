// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "kangaroo/core.hpp"
#include "kangaroo/ntt.hpp"

namespace kangaroo::phe {

enum class BackendId : u8 { transparent = 0, lattice = 1 };

inline const char* backend_name(BackendId b) {
    return b == BackendId::transparent ? "transparent" : "lattice";
}

// ---------------------------------------------------------------------------
// Parameters

struct PheParams {
    BackendId backend_id = BackendId::transparent;
    u32 slot_count = 0;    // S: usable SIMD slots, single-cycle rotation semantics
    u64 plain_modulus = 0;  // q, prime
    u32 ring_degree = 0;    // N (lattice backends only)
    u32 security_level = 128;
    u64 zeta = 0;           // comparison precision: 2^(bits(q)/2 - 1)

    static u64 zeta_for(u64 q) { return u64(1) << (bit_length(q) / 2 - 1); }

    static PheParams transparent(u32 slots, u64 q) {
        PheParams p;
        p.backend_id = BackendId::transparent;
        p.slot_count = slots;
        p.plain_modulus = q;
        p.zeta = zeta_for(q);
        p.validate();
        return p;
    }

    /// Lattice parameters with a deterministically derived plain modulus:
    /// the smallest q_bits-bit prime q = 1 (mod 2N) with zeta^2 + zeta < q/2.
    static PheParams lattice(u32 degree, u32 q_bits) {
        PheParams p;
        p.backend_id = BackendId::lattice;
        p.ring_degree = degree;
        p.slot_count = degree / 2;  // one batching row; see backend notes
        u64 zeta = u64(1) << (q_bits / 2 - 1);
        u64 lo = std::max(u64(1) << (q_bits - 1), 2 * (zeta * zeta + zeta) + 1);
        p.plain_modulus = ntt::find_prime_up(lo, 2 * u64(degree));
        if (bit_length(p.plain_modulus) != q_bits)
            throw ParamError("no suitable plain modulus of requested bit length");
        p.zeta = zeta;
        p.validate();
        return p;
    }

    void validate() const {
        if (slot_count < 2) throw ParamError("slot_count must be >= 2");
        if (!ntt::miller_rabin(plain_modulus)) throw ParamError("plain modulus must be prime");
        if (zeta == 0 || zeta != zeta_for(plain_modulus)) throw ParamError("zeta inconsistent with q");
        // Comparison range safety: the blinded value A*d + B must stay inside
        // (-q/2, q/2) for |d| <= zeta, A,B < zeta.
        if (!(u128(zeta) * zeta + zeta < u128(plain_modulus) / 2))
            throw ParamError("zeta^2 + zeta >= q/2");
        if (backend_id == BackendId::lattice) {
            if (!is_power_of_two(ring_degree)) throw ParamError("ring degree must be a power of two");
            if (plain_modulus % (2 * u64(ring_degree)) != 1)
                throw ParamError("q != 1 mod 2N: batching unavailable");
            if (slot_count != ring_degree / 2) throw ParamError("lattice slot_count must be N/2");
        }
    }

    bool operator==(const PheParams&) const = default;
};

/// Named presets. "paper-default" matches the evaluation setup (N=8192,
/// 50-bit q); "desk-small" is the fast-test preset; "toy" is a transparent
/// 16-slot configuration.
inline PheParams preset_params(const std::string& name, BackendId backend) {
    auto lattice_or_mirror = [&](u32 degree, u32 q_bits) {
        PheParams lat = PheParams::lattice(degree, q_bits);
        if (backend == BackendId::lattice) return lat;
        return PheParams::transparent(lat.slot_count, lat.plain_modulus);
    };
    if (name == "paper-default") return lattice_or_mirror(8192, 50);
    if (name == "desk-small") return lattice_or_mirror(4096, 20);
    if (name == "toy") {
        if (backend == BackendId::lattice) throw ParamError("toy preset is transparent-only");
        return PheParams::transparent(16, 65537);
    }
    throw ParamError("unknown params preset: " + name);
}

// ---------------------------------------------------------------------------
// Plain and encrypted vectors

struct PlainVec {
    std::vector<u64> slots;

    PlainVec() = default;
    explicit PlainVec(std::vector<u64> s) : slots(std::move(s)) {}
    PlainVec(u32 n, u64 fill) : slots(n, fill) {}

    u64& operator[](size_t i) { return slots[i]; }
    u64 operator[](size_t i) const { return slots[i]; }
    size_t size() const { return slots.size(); }

    void check(const PheParams& p) const {
        if (slots.size() != p.slot_count) throw ParamError("PlainVec slot count mismatch");
        for (u64 v : slots)
            if (v >= p.plain_modulus) throw ParamError("PlainVec entry out of range");
    }
};

inline PlainVec pv_add(const PlainVec& a, const PlainVec& b, u64 q) {
    PlainVec out = a;
    for (size_t i = 0; i < out.size(); ++i) out.slots[i] = add_mod(out.slots[i], b.slots[i], q);
    return out;
}

inline PlainVec pv_sub(const PlainVec& a, const PlainVec& b, u64 q) {
    PlainVec out = a;
    for (size_t i = 0; i < out.size(); ++i) out.slots[i] = sub_mod(out.slots[i], b.slots[i], q);
    return out;
}

inline PlainVec pv_mul(const PlainVec& a, const PlainVec& b, u64 q) {
    PlainVec out = a;
    for (size_t i = 0; i < out.size(); ++i) out.slots[i] = mul_mod(out.slots[i], b.slots[i], q);
    return out;
}

inline PlainVec pv_neg(const PlainVec& a, u64 q) {
    PlainVec out = a;
    for (auto& s : out.slots) s = neg_mod(s, q);
    return out;
}

/// Cyclic slot shift: output slot i holds input slot (i - r) mod S, so r > 0
/// moves values to the right.
inline PlainVec plain_rotate(const PlainVec& v, i64 r) {
    size_t n = v.size();
    i64 s = static_cast<i64>(n);
    i64 rr = ((r % s) + s) % s;
    PlainVec out(static_cast<u32>(n), 0);
    for (size_t i = 0; i < n; ++i) out.slots[(i + rr) % n] = v.slots[i];
    return out;
}

struct Ciphertext {
    BackendId backend_id = BackendId::transparent;
    std::vector<u64> data;     // transparent: S slots; lattice: 2*k*N limb words
    double noise_bits = 0.0;   // lattice: conservative log2 bound on noise
    u64 op_count = 0;          // transparent: homomorphic operation counter

    bool empty() const { return data.empty(); }
};

// ---------------------------------------------------------------------------
// Key material

struct PublicKey {
    BackendId backend_id = BackendId::transparent;
    std::vector<u64> data;
};

struct SecretKey {
    BackendId backend_id = BackendId::transparent;
    std::vector<u64> data;
};

struct RotationKeys {
    BackendId backend_id = BackendId::transparent;
    std::set<i64> declared;             // shift set the keys were generated for
    std::map<i64, std::vector<u64>> keys;  // normalized shift -> key blob (lattice)
};

struct KeyMaterial {
    SecretKey secret_key;
    PublicKey public_key;
    RotationKeys rotation_keys;
};

/// Default shift set: signed powers of two up to S/2, plus the small
/// positive shifts 1..block-1 used when packing per-tree selections.
inline std::set<i64> default_shift_set(u32 slot_count, u32 block = 0) {
    std::set<i64> shifts;
    for (u64 p = 1; p <= slot_count / 2; p <<= 1) {
        shifts.insert(static_cast<i64>(p));
        shifts.insert(-static_cast<i64>(p));
    }
    for (u32 m = 1; m < block; ++m) shifts.insert(static_cast<i64>(m));
    return shifts;
}

/// Decompose a normalized shift into declared steps (single step if declared,
/// else binary decomposition over declared powers of two).
inline std::vector<i64> rotation_steps(const RotationKeys& rk, u32 slot_count, i64 r) {
    i64 s = static_cast<i64>(slot_count);
    i64 n = ((r % s) + s) % s;
    if (n == 0) return {};
    auto covered = [&](i64 shift) {
        for (i64 d : rk.declared) {
            if (((d % s) + s) % s == shift) return true;
        }
        return false;
    };
    if (covered(n)) return {n};
    std::vector<i64> steps;
    for (u32 b = 0; (i64(1) << b) <= n; ++b) {
        i64 p = i64(1) << b;
        if (n & p) {
            if (!covered(p)) throw KeyError("rotation by " + std::to_string(r) + " not covered by keys");
            steps.push_back(p);
        }
    }
    return steps;
}

// ---------------------------------------------------------------------------
// Backend contract

class Backend {
public:
    virtual ~Backend() = default;

    virtual const PheParams& params() const = 0;

    virtual KeyMaterial keygen(const std::set<i64>& shifts, Rng& rng) const = 0;

    /// Rotation keys for an existing secret key (used when the shift set is
    /// only known after setup, e.g. once the block size is published).
    virtual RotationKeys make_rotation_keys(const SecretKey& sk, const std::set<i64>& shifts,
                                            Rng& rng) const = 0;

    virtual Ciphertext encrypt(const PublicKey& pk, const PlainVec& v, Rng& rng) const = 0;
    virtual PlainVec decrypt(const SecretKey& sk, const Ciphertext& c) const = 0;

    virtual Ciphertext add_ct(const Ciphertext& a, const Ciphertext& b) const = 0;
    virtual Ciphertext sub_ct(const Ciphertext& a, const Ciphertext& b) const = 0;
    virtual Ciphertext add_plain(const Ciphertext& a, const PlainVec& p) const = 0;
    virtual Ciphertext mul_plain(const Ciphertext& a, const PlainVec& p) const = 0;
    virtual Ciphertext rotate(const RotationKeys& rk, const Ciphertext& c, i64 r) const = 0;

    /// Ciphertext-ciphertext product. Only the transparent backend supports
    /// it; it is needed by the outsourced variant alone.
    virtual Ciphertext mul_ct(const Ciphertext& a, const Ciphertext& b) const {
        (void)a;
        (void)b;
        throw Error(Stage::evaluate, "ciphertext-ciphertext multiplication unsupported on this backend");
    }

    virtual std::vector<u8> serialize_ct(const Ciphertext& c) const = 0;
    virtual Ciphertext deserialize_ct(const std::vector<u8>& bytes) const = 0;

    Ciphertext sub_plain(const Ciphertext& a, const PlainVec& p) const {
        PlainVec neg(static_cast<u32>(p.size()), 0);
        for (size_t i = 0; i < p.size(); ++i) neg.slots[i] = neg_mod(p.slots[i], params().plain_modulus);
        return add_plain(a, neg);
    }

    void check_backend(BackendId id) const {
        if (id != params().backend_id) throw Error(Stage::evaluate, "backend mismatch");
    }
};

// ---------------------------------------------------------------------------
// Versioned binary container: 8-byte magic, 1-byte version, 1-byte
// backend_id, 4-byte little-endian payload length, payload.

inline constexpr u8 kContainerVersion = 1;
inline constexpr char kContainerMagic[8] = {'K', 'A', 'N', 'G', 'A', 'P', 'H', 'E'};

inline void put_u32(std::vector<u8>& out, u32 v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

inline void put_u64(std::vector<u8>& out, u64 v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

inline u32 get_u32(const u8* p) {
    u32 v = 0;
    for (int i = 0; i < 4; ++i) v |= u32(p[i]) << (8 * i);
    return v;
}

inline u64 get_u64(const u8* p) {
    u64 v = 0;
    for (int i = 0; i < 8; ++i) v |= u64(p[i]) << (8 * i);
    return v;
}

inline std::vector<u8> wrap_container(BackendId backend, const std::vector<u8>& payload) {
    std::vector<u8> out;
    out.reserve(14 + payload.size());
    out.insert(out.end(), kContainerMagic, kContainerMagic + 8);
    out.push_back(kContainerVersion);
    out.push_back(static_cast<u8>(backend));
    put_u32(out, static_cast<u32>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

struct ContainerView {
    BackendId backend_id;
    const u8* payload;
    u32 payload_len;
};

inline ContainerView parse_container(const std::vector<u8>& bytes) {
    if (bytes.size() < 14) throw WireError("container truncated");
    for (int i = 0; i < 8; ++i)
        if (bytes[i] != static_cast<u8>(kContainerMagic[i])) throw WireError("bad container magic");
    if (bytes[8] != kContainerVersion) throw WireError("unsupported container version");
    u8 backend = bytes[9];
    if (backend > 1) throw WireError("unknown backend id");
    u32 len = get_u32(bytes.data() + 10);
    if (bytes.size() != 14 + size_t(len)) throw WireError("container length mismatch");
    return ContainerView{static_cast<BackendId>(backend), bytes.data() + 14, len};
}

inline std::vector<u8> words_to_bytes(const std::vector<u64>& words) {
    std::vector<u8> out;
    out.reserve(words.size() * 8);
    for (u64 w : words) put_u64(out, w);
    return out;
}

inline std::vector<u64> bytes_to_words(const u8* p, u32 len) {
    if (len % 8 != 0) throw WireError("payload not a whole number of 64-bit words");
    std::vector<u64> out(len / 8);
    for (size_t i = 0; i < out.size(); ++i) out[i] = get_u64(p + 8 * i);
    return out;
}

// Keys share the container format; payloads are word blobs (public/secret)
// or a shift-indexed table (rotation keys), identical across backends.

inline std::vector<u8> serialize_public_key(const PublicKey& pk) {
    return wrap_container(pk.backend_id, words_to_bytes(pk.data));
}

inline PublicKey deserialize_public_key(const std::vector<u8>& bytes) {
    ContainerView v = parse_container(bytes);
    return PublicKey{v.backend_id, bytes_to_words(v.payload, v.payload_len)};
}

inline std::vector<u8> serialize_secret_key(const SecretKey& sk) {
    return wrap_container(sk.backend_id, words_to_bytes(sk.data));
}

inline SecretKey deserialize_secret_key(const std::vector<u8>& bytes) {
    ContainerView v = parse_container(bytes);
    return SecretKey{v.backend_id, bytes_to_words(v.payload, v.payload_len)};
}

inline std::vector<u8> serialize_rotation_keys(const RotationKeys& rk) {
    std::vector<u8> payload;
    put_u32(payload, static_cast<u32>(rk.declared.size()));
    for (i64 s : rk.declared) put_u64(payload, static_cast<u64>(s));
    put_u32(payload, static_cast<u32>(rk.keys.size()));
    for (const auto& [shift, blob] : rk.keys) {
        put_u64(payload, static_cast<u64>(shift));
        put_u32(payload, static_cast<u32>(blob.size()));
        for (u64 w : blob) put_u64(payload, w);
    }
    return wrap_container(rk.backend_id, payload);
}

inline RotationKeys deserialize_rotation_keys(const std::vector<u8>& bytes) {
    ContainerView v = parse_container(bytes);
    RotationKeys rk;
    rk.backend_id = v.backend_id;
    const u8* p = v.payload;
    const u8* end = v.payload + v.payload_len;
    auto need = [&](size_t n) {
        if (p + n > end) throw WireError("rotation key payload truncated");
    };
    need(4);
    u32 nd = get_u32(p);
    p += 4;
    for (u32 i = 0; i < nd; ++i) {
        need(8);
        rk.declared.insert(static_cast<i64>(get_u64(p)));
        p += 8;
    }
    need(4);
    u32 nk = get_u32(p);
    p += 4;
    for (u32 i = 0; i < nk; ++i) {
        need(12);
        i64 shift = static_cast<i64>(get_u64(p));
        p += 8;
        u32 words = get_u32(p);
        p += 4;
        need(size_t(words) * 8);
        std::vector<u64> blob(words);
        for (u32 j = 0; j < words; ++j) blob[j] = get_u64(p + 8 * j);
        p += size_t(words) * 8;
        rk.keys.emplace(shift, std::move(blob));
    }
    if (p != end) throw WireError("rotation key payload trailing bytes");
    return rk;
}

// ---------------------------------------------------------------------------
// Transparent backend: exact slot arithmetic, no security. Ciphertext payload
// is the raw slot array; an operation counter stands in for noise budget.

class TransparentBackend : public Backend {
public:
    explicit TransparentBackend(PheParams p) : params_(std::move(p)) {
        if (params_.backend_id != BackendId::transparent)
            throw ParamError("TransparentBackend requires transparent params");
        params_.validate();
    }

    const PheParams& params() const override { return params_; }

    KeyMaterial keygen(const std::set<i64>& shifts, Rng& rng) const override {
        (void)rng;
        KeyMaterial km;
        km.secret_key.backend_id = BackendId::transparent;
        km.public_key.backend_id = BackendId::transparent;
        km.rotation_keys.backend_id = BackendId::transparent;
        km.rotation_keys.declared = shifts;
        return km;
    }

    RotationKeys make_rotation_keys(const SecretKey& sk, const std::set<i64>& shifts,
                                    Rng&) const override {
        check_backend(sk.backend_id);
        RotationKeys rk;
        rk.backend_id = BackendId::transparent;
        rk.declared = shifts;
        return rk;
    }

    Ciphertext encrypt(const PublicKey& pk, const PlainVec& v, Rng&) const override {
        check_backend(pk.backend_id);
        v.check(params_);
        Ciphertext c;
        c.backend_id = BackendId::transparent;
        c.data = v.slots;
        return c;
    }

    PlainVec decrypt(const SecretKey& sk, const Ciphertext& c) const override {
        check_backend(sk.backend_id);
        check_backend(c.backend_id);
        return PlainVec(c.data);
    }

    Ciphertext add_ct(const Ciphertext& a, const Ciphertext& b) const override {
        check_backend(a.backend_id);
        check_backend(b.backend_id);
        Ciphertext c = a;
        for (size_t i = 0; i < c.data.size(); ++i)
            c.data[i] = add_mod(c.data[i], b.data[i], params_.plain_modulus);
        c.op_count = a.op_count + b.op_count + 1;
        return c;
    }

    Ciphertext sub_ct(const Ciphertext& a, const Ciphertext& b) const override {
        check_backend(a.backend_id);
        check_backend(b.backend_id);
        Ciphertext c = a;
        for (size_t i = 0; i < c.data.size(); ++i)
            c.data[i] = sub_mod(c.data[i], b.data[i], params_.plain_modulus);
        c.op_count = a.op_count + b.op_count + 1;
        return c;
    }

    Ciphertext add_plain(const Ciphertext& a, const PlainVec& p) const override {
        check_backend(a.backend_id);
        p.check(params_);
        Ciphertext c = a;
        for (size_t i = 0; i < c.data.size(); ++i)
            c.data[i] = add_mod(c.data[i], p.slots[i], params_.plain_modulus);
        c.op_count = a.op_count + 1;
        return c;
    }

    Ciphertext mul_plain(const Ciphertext& a, const PlainVec& p) const override {
        check_backend(a.backend_id);
        p.check(params_);
        Ciphertext c = a;
        for (size_t i = 0; i < c.data.size(); ++i)
            c.data[i] = mul_mod(c.data[i], p.slots[i], params_.plain_modulus);
        c.op_count = a.op_count + 1;
        return c;
    }

    Ciphertext mul_ct(const Ciphertext& a, const Ciphertext& b) const override {
        check_backend(a.backend_id);
        check_backend(b.backend_id);
        Ciphertext c = a;
        for (size_t i = 0; i < c.data.size(); ++i)
            c.data[i] = mul_mod(c.data[i], b.data[i], params_.plain_modulus);
        c.op_count = a.op_count + b.op_count + 1;
        return c;
    }

    Ciphertext rotate(const RotationKeys& rk, const Ciphertext& c, i64 r) const override {
        check_backend(c.backend_id);
        auto steps = rotation_steps(rk, params_.slot_count, r);
        Ciphertext out = c;
        PlainVec v(out.data);
        for (i64 step : steps) v = plain_rotate(v, step);
        out.data = v.slots;
        out.op_count = c.op_count + steps.size();
        return out;
    }

    std::vector<u8> serialize_ct(const Ciphertext& c) const override {
        check_backend(c.backend_id);
        return wrap_container(BackendId::transparent, words_to_bytes(c.data));
    }

    Ciphertext deserialize_ct(const std::vector<u8>& bytes) const override {
        ContainerView v = parse_container(bytes);
        if (v.backend_id != BackendId::transparent) throw WireError("expected transparent ciphertext");
        Ciphertext c;
        c.backend_id = BackendId::transparent;
        c.data = bytes_to_words(v.payload, v.payload_len);
        if (c.data.size() != params_.slot_count) throw WireError("ciphertext slot count mismatch");
        return c;
    }

private:
    PheParams params_;
};

}  // namespace kangaroo::phe
