// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kangaroo {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;
using u128 = unsigned __int128;

/// Protocol stage tags used to classify failures across modules.
enum class Stage : u8 {
    params,
    keygen,
    encode,
    encrypt,
    decrypt,
    evaluate,
    model,
    layout,
    selection,
    comparison,
    path_eval,
    response,
    wire,
    session,
    io,
};

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::params: return "params";
        case Stage::keygen: return "keygen";
        case Stage::encode: return "encode";
        case Stage::encrypt: return "encrypt";
        case Stage::decrypt: return "decrypt";
        case Stage::evaluate: return "evaluate";
        case Stage::model: return "model";
        case Stage::layout: return "layout";
        case Stage::selection: return "selection";
        case Stage::comparison: return "comparison";
        case Stage::path_eval: return "path-eval";
        case Stage::response: return "response";
        case Stage::wire: return "wire";
        case Stage::session: return "session";
        case Stage::io: return "io";
    }
    return "unknown";
}

/// Base error type; every failure carries the stage it was raised in so
/// session aborts can be surfaced with a stage name.
class Error : public std::runtime_error {
public:
    Error(Stage stage, const std::string& what)
        : std::runtime_error(std::string(stage_name(stage)) + ": " + what), stage_(stage) {}
    Stage stage() const noexcept { return stage_; }

private:
    Stage stage_;
};

struct ParamError : Error {
    explicit ParamError(const std::string& w) : Error(Stage::params, w) {}
};
struct KeyError : Error {
    explicit KeyError(const std::string& w) : Error(Stage::keygen, w) {}
};
struct NoiseBudgetError : Error {
    explicit NoiseBudgetError(const std::string& w) : Error(Stage::decrypt, w) {}
};
struct CapacityError : Error {
    explicit CapacityError(const std::string& w) : Error(Stage::layout, w) {}
};
struct WireError : Error {
    explicit WireError(const std::string& w) : Error(Stage::wire, w) {}
};
struct StateError : Error {
    explicit StateError(const std::string& w) : Error(Stage::session, w) {}
};

// ---------------------------------------------------------------------------
// Modular scalar arithmetic (64-bit moduli, 128-bit intermediates).

inline u64 add_mod(u64 a, u64 b, u64 m) {
    u64 s = a + b;
    if (s >= m || s < a) s -= m;
    return s;
}

inline u64 sub_mod(u64 a, u64 b, u64 m) { return a >= b ? a - b : a + (m - b); }

inline u64 neg_mod(u64 a, u64 m) { return a == 0 ? 0 : m - a; }

inline u64 mul_mod(u64 a, u64 b, u64 m) { return static_cast<u64>((u128(a) * b) % m); }

inline u64 pow_mod(u64 base, u64 exp, u64 m) {
    u64 r = 1 % m;
    base %= m;
    while (exp) {
        if (exp & 1) r = mul_mod(r, base, m);
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    return r;
}

inline u64 inv_mod(u64 a, u64 p) {
    // p prime
    return pow_mod(a % p, p - 2, p);
}

/// Signed representative of x in (-q/2, q/2]; the sign test used by the
/// comparison protocols. Bijection between [0,q) and [-floor(q/2), ceil(q/2)-1].
inline i64 centered(u64 x, u64 q) {
    return x <= (q - 1) / 2 ? static_cast<i64>(x) : static_cast<i64>(x) - static_cast<i64>(q);
}

inline u64 from_centered(i64 v, u64 q) {
    i64 m = static_cast<i64>(q);
    i64 r = v % m;
    if (r < 0) r += m;
    return static_cast<u64>(r);
}

inline bool is_power_of_two(u64 x) { return x != 0 && (x & (x - 1)) == 0; }

inline u32 log2_exact(u64 x) {
    u32 l = 0;
    while ((u64(1) << l) < x) ++l;
    return l;
}

inline u64 next_power_of_two(u64 x) {
    u64 p = 1;
    while (p < x) p <<= 1;
    return p;
}

inline u32 bit_length(u64 x) {
    u32 n = 0;
    while (x) {
        ++n;
        x >>= 1;
    }
    return n;
}

/// splitmix-style finalizer: derives independent named streams from one seed.
inline u64 mix_seed(u64 seed, u64 tag) {
    u64 x = seed ^ (tag * 0x9e3779b97f4a7c15ull);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 has a fully specified sequence; the
// rejection sampler below keeps draws reproducible across platforms
// (uniform_int_distribution is implementation-defined).

class Rng {
public:
    explicit Rng(u64 seed) : gen_(seed) {}

    u64 next() { return gen_(); }

    /// Uniform in [0, n).
    u64 uniform(u64 n) {
        if (n == 0) throw std::invalid_argument("uniform(0)");
        u64 limit = ~u64(0) - (~u64(0) % n);
        u64 v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    /// Uniform in [lo, hi] inclusive.
    u64 uniform_range(u64 lo, u64 hi) { return lo + uniform(hi - lo + 1); }

    bool coin() { return (gen_() & 1) != 0; }

    double unit_real() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Centered binomial with 2*eta coin flips: sigma = sqrt(eta/2).
    /// eta=21 gives sigma ~ 3.24, the usual error width.
    int cbd(int eta = 21) {
        int acc = 0;
        int need = 2 * eta;
        while (need > 0) {
            int take = need > 64 ? 64 : need;
            u64 bits = gen_();
            for (int i = 0; i + 1 < take; i += 2) {
                acc += static_cast<int>((bits >> i) & 1);
                acc -= static_cast<int>((bits >> (i + 1)) & 1);
            }
            need -= take;
        }
        return acc;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace kangaroo
