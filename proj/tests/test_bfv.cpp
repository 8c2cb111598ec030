// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "kangaroo/bfv.hpp"

using namespace kangaroo;
using namespace kangaroo::phe;
using kangaroo::bfv::LatticeBackend;

namespace {

PlainVec random_vec(const PheParams& p, Rng& rng) {
    PlainVec v(p.slot_count, 0);
    for (auto& s : v.slots) s = rng.uniform(p.plain_modulus);
    return v;
}

}  // namespace

TEST_CASE("negacyclic NTT") {
    u64 p = 12289;  // 1 mod 2N for N up to 1024 here
    u32 n = 8;
    ntt::NttTables tables(n, p);

    SECTION("round trip is identity") {
        Rng rng(1);
        for (int t = 0; t < 20; ++t) {
            std::vector<u64> a(n);
            for (auto& x : a) x = rng.uniform(p);
            auto b = a;
            tables.forward(b);
            tables.inverse(b);
            REQUIRE(b == a);
        }
    }

    SECTION("constant polynomial transforms to the constant vector") {
        std::vector<u64> a(n, 0);
        a[0] = 7;
        tables.forward(a);
        for (u64 x : a) CHECK(x == 7);
    }

    SECTION("x*x = x^2") {
        std::vector<u64> x(n, 0), want(n, 0);
        x[1] = 1;
        want[2] = 1;
        auto fx = x;
        tables.forward(fx);
        std::vector<u64> prod(n);
        for (u32 i = 0; i < n; ++i) prod[i] = mul_mod(fx[i], fx[i], p);
        tables.inverse(prod);
        CHECK(prod == want);
    }

    SECTION("x^(N-1) * x = -1 (negacyclic wraparound)") {
        std::vector<u64> a(n, 0), b(n, 0);
        a[n - 1] = 1;
        b[1] = 1;
        auto fa = a, fb = b;
        tables.forward(fa);
        tables.forward(fb);
        std::vector<u64> prod(n);
        for (u32 i = 0; i < n; ++i) prod[i] = mul_mod(fa[i], fb[i], p);
        tables.inverse(prod);
        std::vector<u64> want(n, 0);
        want[0] = p - 1;
        CHECK(prod == want);
    }

    SECTION("pointwise product equals schoolbook negacyclic convolution") {
        Rng rng(2);
        for (int t = 0; t < 20; ++t) {
            std::vector<u64> a(n), b(n);
            for (auto& x : a) x = rng.uniform(p);
            for (auto& x : b) x = rng.uniform(p);
            auto want = ntt::negacyclic_mul_schoolbook(a, b, p);
            auto fa = a, fb = b;
            tables.forward(fa);
            tables.forward(fb);
            std::vector<u64> got(n);
            for (u32 i = 0; i < n; ++i) got[i] = mul_mod(fa[i], fb[i], p);
            tables.inverse(got);
            REQUIRE(got == want);
        }
    }

    SECTION("non-NTT-friendly modulus is rejected") {
        CHECK_THROWS_AS(ntt::NttTables(8, 13), ParamError);  // 13 != 1 mod 16
    }
}

TEST_CASE("lattice parameter validation") {
    // q = 12 at degree 8192 fails the batching congruence (and primality)
    PheParams bad;
    bad.backend_id = BackendId::lattice;
    bad.ring_degree = 8192;
    bad.slot_count = 4096;
    bad.plain_modulus = 12;
    bad.zeta = 2;
    CHECK_THROWS_AS(bad.validate(), ParamError);

    PheParams notcong;
    notcong.backend_id = BackendId::lattice;
    notcong.ring_degree = 8192;
    notcong.slot_count = 4096;
    notcong.plain_modulus = 1125899906842679ull;  // prime but != 1 mod 16384
    notcong.zeta = PheParams::zeta_for(notcong.plain_modulus);
    if (ntt::miller_rabin(notcong.plain_modulus)) {
        CHECK_THROWS_AS(notcong.validate(), ParamError);
    }
}

TEST_CASE("paper-default parameters have 128-bit material") {
    auto params = PheParams::lattice(8192, 50);
    CHECK(params.ring_degree == 8192);
    CHECK(bit_length(params.plain_modulus) == 50);
    CHECK(params.plain_modulus % 16384 == 1);
    CHECK(params.zeta == (u64(1) << 24));
    CHECK(params.security_level == 128);
    // coefficient modulus respects the security ceiling
    auto primes = bfv::default_coeff_modulus(8192, params.plain_modulus);
    u32 total = 0;
    for (u64 p : primes) total += bit_length(p);
    CHECK(total <= bfv::max_coeff_modulus_bits(8192));
}

TEST_CASE("lattice backend on a small ring") {
    // N=2048 keeps these fast; rotation tests use desk-small below.
    auto params = PheParams::lattice(2048, 14);
    LatticeBackend backend(params);
    Rng rng(7);
    auto km = backend.keygen({1}, rng);

    SECTION("all-zero and ramp round trips") {
        PlainVec zero(params.slot_count, 0);
        CHECK(backend.decrypt(km.secret_key, backend.encrypt(km.public_key, zero, rng)).slots ==
              zero.slots);
        PlainVec ramp(params.slot_count, 0);
        for (u32 i = 0; i < params.slot_count; ++i) ramp.slots[i] = (i + 1) % params.plain_modulus;
        CHECK(backend.decrypt(km.secret_key, backend.encrypt(km.public_key, ramp, rng)).slots ==
              ramp.slots);
    }

    SECTION("random round trips (batching encode/decode under the hood)") {
        for (int i = 0; i < 25; ++i) {
            auto v = random_vec(params, rng);
            auto got = backend.decrypt(km.secret_key, backend.encrypt(km.public_key, v, rng));
            REQUIRE(got.slots == v.slots);
        }
    }

    SECTION("slotwise homomorphism oracle") {
        u64 q = params.plain_modulus;
        for (int i = 0; i < 10; ++i) {
            auto a = random_vec(params, rng);
            auto b = random_vec(params, rng);
            auto p = random_vec(params, rng);
            auto ca = backend.encrypt(km.public_key, a, rng);
            auto cb = backend.encrypt(km.public_key, b, rng);
            auto sum = backend.decrypt(km.secret_key, backend.add_ct(ca, cb));
            auto aplus = backend.decrypt(km.secret_key, backend.add_plain(ca, p));
            auto amul = backend.decrypt(km.secret_key, backend.mul_plain(ca, p));
            for (u32 s = 0; s < params.slot_count; ++s) {
                REQUIRE(sum.slots[s] == add_mod(a.slots[s], b.slots[s], q));
                REQUIRE(aplus.slots[s] == add_mod(a.slots[s], p.slots[s], q));
                REQUIRE(amul.slots[s] == mul_mod(a.slots[s], p.slots[s], q));
            }
        }
    }

    SECTION("fresh ciphertext has positive budget; estimate bounds reality") {
        auto v = random_vec(params, rng);
        auto c = backend.encrypt(km.public_key, v, rng);
        CHECK(backend.noise_budget_bits(c) > 0);
        CHECK(backend.measured_noise_bits(km.secret_key, c) <= c.noise_bits);
        auto p = random_vec(params, rng);
        auto c2 = backend.mul_plain(c, p);
        CHECK(backend.noise_budget_bits(c2) > 0);
        CHECK(backend.noise_budget_bits(c2) < backend.noise_budget_bits(c));
        CHECK(backend.measured_noise_bits(km.secret_key, c2) <= c2.noise_bits);
    }

    SECTION("budget exhaustion raises before corruption") {
        auto v = random_vec(params, rng);
        auto c = backend.encrypt(km.public_key, v, rng);
        auto p = random_vec(params, rng);
        bool threw = false;
        for (int i = 0; i < 8; ++i) {
            try {
                c = backend.mul_plain(c, p);
            } catch (const NoiseBudgetError&) {
                threw = true;
                break;
            }
        }
        CHECK(threw);
    }

    SECTION("ciphertext serialization round trip") {
        auto v = random_vec(params, rng);
        auto c = backend.encrypt(km.public_key, v, rng);
        auto bytes = backend.serialize_ct(c);
        auto c2 = backend.deserialize_ct(bytes);
        CHECK(c2.noise_bits == c.noise_bits);
        CHECK(backend.decrypt(km.secret_key, c2).slots == v.slots);
    }
}

TEST_CASE("lattice rotations follow the plaintext oracle") {
    auto params = preset_params("desk-small", BackendId::lattice);
    LatticeBackend backend(params);
    Rng rng(11);
    auto km = backend.keygen(default_shift_set(params.slot_count, 8), rng);

    auto v = random_vec(params, rng);
    auto c = backend.encrypt(km.public_key, v, rng);

    SECTION("rotate by 0 is identity") {
        auto got = backend.decrypt(km.secret_key, backend.rotate(km.rotation_keys, c, 0));
        CHECK(got.slots == v.slots);
    }

    SECTION("single power-of-two steps, both signs") {
        for (i64 r : {1, -1, 2, -2, 64, -64}) {
            auto got = backend.decrypt(km.secret_key, backend.rotate(km.rotation_keys, c, r));
            auto want = plain_rotate(v, r);
            REQUIRE(got.slots == want.slots);
        }
    }

    SECTION("composite shifts via decomposition, random cases") {
        for (int i = 0; i < 8; ++i) {
            i64 r = static_cast<i64>(rng.uniform(2 * params.slot_count)) -
                    static_cast<i64>(params.slot_count);
            auto got = backend.decrypt(km.secret_key, backend.rotate(km.rotation_keys, c, r));
            auto want = plain_rotate(v, r);
            REQUIRE(got.slots == want.slots);
        }
    }

    SECTION("rotation composition") {
        auto a = backend.rotate(km.rotation_keys, backend.rotate(km.rotation_keys, c, 5), 9);
        auto b = backend.rotate(km.rotation_keys, c, 14);
        CHECK(backend.decrypt(km.secret_key, a).slots == backend.decrypt(km.secret_key, b).slots);
    }
}

TEST_CASE("paper-default budget trace across the deepest chain") {
    // selection: 1 plain-mul + log2(M*) rotations, then the comparison
    // plain-mul; budget must stay positive at N=8192, 50-bit q.
    auto params = preset_params("paper-default", BackendId::lattice);
    LatticeBackend backend(params);
    Rng rng(13);
    auto km = backend.keygen({-1, -2, -4, -8}, rng);

    auto v = random_vec(params, rng);
    auto mask = random_vec(params, rng);
    auto blind = random_vec(params, rng);

    auto c = backend.encrypt(km.public_key, v, rng);
    std::vector<double> budgets{backend.noise_budget_bits(c)};
    c = backend.mul_plain(c, mask);
    budgets.push_back(backend.noise_budget_bits(c));
    for (i64 r : {-1, -2, -4, -8}) {
        c = backend.rotate(km.rotation_keys, c, r);
        budgets.push_back(backend.noise_budget_bits(c));
    }
    c = backend.mul_plain(c, blind);
    budgets.push_back(backend.noise_budget_bits(c));

    for (size_t i = 1; i < budgets.size(); ++i) REQUIRE(budgets[i] <= budgets[i - 1]);
    REQUIRE(budgets.back() > 0);
    // the estimate stays above the measured noise
    CHECK(backend.measured_noise_bits(km.secret_key, c) <= c.noise_bits);
    // and the chain still decrypts exactly
    auto got = backend.decrypt(km.secret_key, c);
    u64 q = params.plain_modulus;
    PlainVec shifted = v;
    shifted = plain_rotate(
        [&] {
            PlainVec t = v;
            for (u32 i = 0; i < params.slot_count; ++i)
                t.slots[i] = mul_mod(v.slots[i], mask.slots[i], q);
            return t;
        }(),
        -15);
    for (u32 i = 0; i < params.slot_count; ++i)
        REQUIRE(got.slots[i] == mul_mod(shifted.slots[i], blind.slots[i], q));
}
