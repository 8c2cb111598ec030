// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "kangaroo/core.hpp"

namespace kangaroo::ntt {

// ---------------------------------------------------------------------------
// Primality and prime search.

inline bool miller_rabin(u64 n) {
    if (n < 2) return false;
    for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        if (n % p == 0) return n == p;
    }
    u64 d = n - 1;
    int r = 0;
    while ((d & 1) == 0) {
        d >>= 1;
        ++r;
    }
    // Deterministic witness set for 64-bit integers.
    for (u64 a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        u64 x = pow_mod(a, d, n);
        if (x == 1 || x == n - 1) continue;
        bool witness = true;
        for (int i = 1; i < r; ++i) {
            x = mul_mod(x, x, n);
            if (x == n - 1) {
                witness = false;
                break;
            }
        }
        if (witness) return false;
    }
    return true;
}

/// Smallest prime p >= lo with p = 1 (mod step). Deterministic, so both
/// parties derive identical parameters from a preset.
inline u64 find_prime_up(u64 lo, u64 step) {
    u64 p = ((lo + step - 1) / step) * step + 1;
    if (p < lo) p += step;
    while (!miller_rabin(p)) p += step;
    return p;
}

/// Largest prime p <= hi with p = 1 (mod step).
inline u64 find_prime_down(u64 hi, u64 step) {
    u64 p = (hi / step) * step + 1;
    while (p > hi) p -= step;
    while (!miller_rabin(p)) p -= step;
    return p;
}

/// First `count` distinct primes = 1 (mod step) below `hi`, skipping any in
/// `exclude`, descending.
inline std::vector<u64> find_primes_down(u64 hi, u64 step, int count, const std::vector<u64>& exclude = {}) {
    std::vector<u64> out;
    u64 p = hi + step;
    while (static_cast<int>(out.size()) < count) {
        p = find_prime_down(p - step, step);
        bool skip = false;
        for (u64 e : exclude) skip |= (e == p);
        if (!skip) out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Negacyclic number-theoretic transform over Z_p[x]/(x^N + 1), N a power of
// two, p = 1 (mod 2N). Standard Cooley-Tukey / Gentleman-Sande pair with the
// psi twisting folded into the twiddle tables; output of forward() is in
// bit-reversed order, which inverse() consumes, so round trips are identity.

struct NttTables {
    u64 modulus = 0;
    u32 degree = 0;  // N
    u64 psi = 0;     // primitive 2N-th root of unity
    std::vector<u64> roots;      // psi^brv(i), Cooley-Tukey order
    std::vector<u64> inv_roots;  // inverse counterparts
    u64 inv_degree = 0;          // N^-1 mod p

    NttTables() = default;

    NttTables(u32 degree_, u64 modulus_) : modulus(modulus_), degree(degree_) {
        if (!is_power_of_two(degree)) throw ParamError("NTT degree must be a power of two");
        if (modulus % (2 * u64(degree)) != 1)
            throw ParamError("modulus not NTT-friendly: q != 1 mod 2N");
        psi = find_primitive_2n_root(degree, modulus);
        build_tables();
    }

    /// Any x with x^N = -1 has order exactly 2N when N is a power of two.
    static u64 find_primitive_2n_root(u32 degree, u64 p) {
        u64 exp = (p - 1) / (2 * u64(degree));
        // Deterministic scan keeps parameter derivation reproducible.
        for (u64 x = 2;; ++x) {
            u64 cand = pow_mod(x, exp, p);
            if (cand == 0 || cand == 1) continue;
            if (pow_mod(cand, degree, p) == p - 1) return cand;
        }
    }

    void build_tables() {
        u32 n = degree;
        roots.resize(n);
        inv_roots.resize(n);
        u64 inv_psi = inv_mod(psi, modulus);
        u32 bits = log2_exact(n);
        for (u32 i = 0; i < n; ++i) {
            u32 rev = reverse_bits(i, bits);
            roots[i] = pow_mod(psi, rev, modulus);
            inv_roots[i] = pow_mod(inv_psi, rev, modulus);
        }
        inv_degree = inv_mod(n, modulus);
    }

    static u32 reverse_bits(u32 v, u32 bits) {
        u32 r = 0;
        for (u32 i = 0; i < bits; ++i) r |= ((v >> i) & 1) << (bits - 1 - i);
        return r;
    }

    /// In-place forward transform: coefficient order in, bit-reversed
    /// evaluation order out.
    void forward(u64* a) const {
        u64 p = modulus;
        u32 n = degree;
        u32 t = n;
        for (u32 m = 1; m < n; m <<= 1) {
            t >>= 1;
            for (u32 i = 0; i < m; ++i) {
                u64 w = roots[m + i];
                u64* lo = a + 2 * i * t;
                u64* hi = lo + t;
                for (u32 j = 0; j < t; ++j) {
                    u64 u = lo[j];
                    u64 v = mul_mod(hi[j], w, p);
                    lo[j] = add_mod(u, v, p);
                    hi[j] = sub_mod(u, v, p);
                }
            }
        }
    }

    /// In-place inverse transform: bit-reversed evaluation order in,
    /// coefficient order out.
    void inverse(u64* a) const {
        u64 p = modulus;
        u32 n = degree;
        u32 t = 1;
        for (u32 m = n; m > 1; m >>= 1) {
            u32 h = m >> 1;
            for (u32 i = 0; i < h; ++i) {
                u64 w = inv_roots[h + i];
                u64* lo = a + 2 * i * t;
                u64* hi = lo + t;
                for (u32 j = 0; j < t; ++j) {
                    u64 u = lo[j];
                    u64 v = hi[j];
                    lo[j] = add_mod(u, v, p);
                    hi[j] = mul_mod(sub_mod(u, v, p), w, p);
                }
            }
            t <<= 1;
        }
        for (u32 j = 0; j < n; ++j) a[j] = mul_mod(a[j], inv_degree, p);
    }

    void forward(std::vector<u64>& a) const { forward(a.data()); }
    void inverse(std::vector<u64>& a) const { inverse(a.data()); }
};

/// Schoolbook negacyclic product, used as the independent oracle in tests and
/// nowhere on the hot path.
inline std::vector<u64> negacyclic_mul_schoolbook(const std::vector<u64>& a, const std::vector<u64>& b,
                                                  u64 p) {
    size_t n = a.size();
    std::vector<u64> out(n, 0);
    for (size_t i = 0; i < n; ++i) {
        if (a[i] == 0) continue;
        for (size_t j = 0; j < n; ++j) {
            u64 prod = mul_mod(a[i], b[j], p);
            size_t k = i + j;
            if (k < n)
                out[k] = add_mod(out[k], prod, p);
            else
                out[k - n] = sub_mod(out[k - n], prod, p);
        }
    }
    return out;
}

}  // namespace kangaroo::ntt
