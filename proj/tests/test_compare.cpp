// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "kangaroo/compare.hpp"
#include "testutil.hpp"

using namespace kangaroo;
using namespace kangaroo::protocol;
using phe::PheParams;
using phe::PlainVec;
using phe::TransparentBackend;

namespace {

struct Fixture {
    PheParams params;
    TransparentBackend backend;
    Rng rng;
    phe::KeyMaterial km;

    explicit Fixture(u32 slots = 16)
        : params(PheParams::transparent(slots, 65537)),
          backend(params),
          rng(7),
          km(backend.keygen(phe::default_shift_set(slots), rng)) {}

    Evaluator ev() { return Evaluator{backend, km.public_key, km.rotation_keys}; }

    PlainVec run_compare(const PlainVec& x, const PlainVec& y, ComparisonBlinding bl,
                         PlainVec* v_seen = nullptr) {
        auto ev_ = ev();
        auto cx = backend.encrypt(km.public_key, x, rng);
        auto v = compare_start(ev_, cx, y, bl);
        if (v_seen) *v_seen = backend.decrypt(km.secret_key, v);
        auto vp = compare_respond(backend, km.secret_key, km.public_key, v, rng);
        auto c = compare_finish(ev_, vp, base_recovery(bl, params.plain_modulus));
        return backend.decrypt(km.secret_key, c);
    }
};

}  // namespace

TEST_CASE("oblivious comparison truth table") {
    Fixture fx;
    const u64 q = fx.params.plain_modulus;

    // fixed blinding, both signs forced per slot; slots 0..3 carry the four
    // (sign of d, R) combinations
    auto bl = sample_comparison_blinding(fx.params, fx.rng);
    for (u32 i = 0; i < 16; ++i) bl.r.slots[i] = (i % 2 == 0) ? q - 1 : 1;

    PlainVec x(16, 0), y(16, 0);
    // d < 0 at slots 0,1 ; d >= 0 at slots 2,3
    x.slots[0] = 3;  y.slots[0] = 10;   // d<0, R=-1 -> V>0, V'=1, C'=1, C=0
    x.slots[1] = 3;  y.slots[1] = 10;   // d<0, R=+1 -> V<0, V'=0, C'=0, C=0
    x.slots[2] = 10; y.slots[2] = 3;    // d>=0, R=-1 -> V<0, V'=0, C'=1, C=1
    x.slots[3] = 10; y.slots[3] = 3;    // d>=0, R=+1 -> V>0, V'=1, C'=0, C=1

    PlainVec v_seen(16, 0);
    auto blc = bl;
    auto c = fx.run_compare(x, y, blc, &v_seen);
    CHECK(centered(v_seen.slots[0], q) > 0);
    CHECK(centered(v_seen.slots[1], q) < 0);
    CHECK(centered(v_seen.slots[2], q) < 0);
    CHECK(centered(v_seen.slots[3], q) > 0);
    CHECK(c.slots[0] == 0);
    CHECK(c.slots[1] == 0);
    CHECK(c.slots[2] == 1);
    CHECK(c.slots[3] == 1);
}

TEST_CASE("ties compare to 1 under both sign masks") {
    Fixture fx;
    const u64 q = fx.params.plain_modulus;
    auto bl = sample_comparison_blinding(fx.params, fx.rng);
    for (u32 i = 0; i < 16; ++i) bl.r.slots[i] = (i % 2 == 0) ? q - 1 : 1;
    PlainVec x(16, 42), y(16, 42);
    auto c = fx.run_compare(x, y, bl);
    for (u32 i = 0; i < 16; ++i) REQUIRE(c.slots[i] == 1);
}

TEST_CASE("exhaustive scalar comparison against the oracle") {
    // all (x, y) pairs over a small range, both R signs, random A/B
    Fixture fx(64);
    const u64 q = fx.params.plain_modulus;
    const u64 zeta = fx.params.zeta;  // 128
    for (u64 xv = 0; xv <= zeta; xv += 3) {
        PlainVec x(64, 0), y(64, 0);
        std::vector<u8> want(64);
        auto bl = sample_comparison_blinding(fx.params, fx.rng);
        for (u32 i = 0; i < 64; ++i) {
            u64 yv = (u64(i) * 2) % (zeta + 1);
            x.slots[i] = xv;
            y.slots[i] = yv;
            bl.r.slots[i] = (i % 2 == 0) ? 1 : q - 1;
            want[i] = xv >= yv ? 1 : 0;
        }
        auto c = fx.run_compare(x, y, bl);
        for (u32 i = 0; i < 64; ++i) REQUIRE(c.slots[i] == want[i]);
    }
}

TEST_CASE("blinding reuse is rejected") {
    Fixture fx;
    auto bl = sample_comparison_blinding(fx.params, fx.rng);
    PlainVec x(16, 5), y(16, 3);
    auto cx = fx.backend.encrypt(fx.km.public_key, x, fx.rng);
    auto ev = fx.ev();
    (void)compare_start(ev, cx, y, bl);
    CHECK_THROWS_AS(compare_start(ev, cx, y, bl), kangaroo::Error);
}

TEST_CASE("ciphertext-Y comparison matches the plain-Y route") {
    Fixture fx;
    auto ev = fx.ev();
    PlainVec x(16, 0), y(16, 0);
    for (u32 i = 0; i < 16; ++i) {
        x.slots[i] = fx.rng.uniform(fx.params.zeta + 1);
        y.slots[i] = fx.rng.uniform(fx.params.zeta + 1);
    }
    auto bl1 = sample_comparison_blinding(fx.params, fx.rng);
    auto bl2 = bl1;
    bl2.used = false;
    auto cx = fx.backend.encrypt(fx.km.public_key, x, fx.rng);
    auto cy = fx.backend.encrypt(fx.km.public_key, y, fx.rng);
    auto v_plain = compare_start(ev, cx, y, bl1);
    auto v_ct = compare_start_ct(ev, cx, cy, bl2);
    CHECK(fx.backend.decrypt(fx.km.secret_key, v_plain).slots ==
          fx.backend.decrypt(fx.km.secret_key, v_ct).slots);
}

TEST_CASE("forest adjustment covers all status/flip/sign combinations") {
    Fixture fx;
    const u64 q = fx.params.plain_modulus;
    // slots 0..7: (psi, upsilon, sign) in binary order
    PlainVec x(16, 0), y(16, 0), flips(16, 0), statuses(16, 0);
    std::vector<u8> expect(16, 0);
    for (u32 i = 0; i < 8; ++i) {
        bool real = (i & 4) != 0;
        bool swapped = (i & 2) != 0;
        bool ge = (i & 1) != 0;
        x.slots[i] = ge ? 9 : 2;
        y.slots[i] = 5;
        flips.slots[i] = swapped ? q - 1 : 1;
        statuses.slots[i] = real ? 1 : 0;
        u8 raw = ge ? 1 : 0;
        expect[i] = real ? (swapped ? 1 - raw : raw) : (swapped ? 1 : 0);
    }
    for (int trial = 0; trial < 20; ++trial) {
        auto bl = sample_comparison_blinding(fx.params, fx.rng);
        auto ev = fx.ev();
        auto cx = fx.backend.encrypt(fx.km.public_key, x, fx.rng);
        auto v = compare_start(ev, cx, y, bl);
        auto vp = compare_respond(fx.backend, fx.km.secret_key, fx.km.public_key, v, fx.rng);
        auto rec = forest_compare_adjust(bl, flips, statuses, q);
        auto c = fx.backend.decrypt(fx.km.secret_key, compare_finish(ev, vp, rec));
        for (u32 i = 0; i < 8; ++i) REQUIRE(c.slots[i] == expect[i]);
    }
}

TEST_CASE("forest adjustment agrees with the flip-aware branch oracle") {
    Rng rng(31);
    Fixture fx(64);
    const u64 q = fx.params.plain_modulus;
    auto spec = model::unit_ranges(3, fx.params.zeta);
    model::TreeShape shape;
    shape.feature_count = 3;
    shape.decision_count = 9;
    shape.max_depth = 6;
    auto tree = model::random_tree(shape, rng);
    auto hidden = model::hide_model(tree, model::PaddingPolicy::fixed(15), spec, 8, rng);
    auto ex = model::extract(hidden.tree);

    for (int trial = 0; trial < 25; ++trial) {
        auto xq = spec.quantize_vector(model::random_input(3, rng));
        PlainVec x(64, 0), y(64, 0), flips(64, 0), statuses(64, 0);
        auto order = model::bfs_order(hidden.tree);
        for (u32 n = 0; n < 15; ++n) {
            x.slots[n] = xq[ex.features[n] - 1];
            y.slots[n] = ex.thresholds[n];
            flips.slots[n] = ex.flips[n] == 1 ? 1 : q - 1;
            statuses.slots[n] = ex.statuses[n];
        }
        auto bl = sample_comparison_blinding(fx.params, fx.rng);
        auto ev = fx.ev();
        auto cx = fx.backend.encrypt(fx.km.public_key, x, fx.rng);
        auto v = compare_start(ev, cx, y, bl);
        auto vp = compare_respond(fx.backend, fx.km.secret_key, fx.km.public_key, v, fx.rng);
        auto rec = forest_compare_adjust(bl, flips, statuses, q);
        auto c = fx.backend.decrypt(fx.km.secret_key, compare_finish(ev, vp, rec));
        for (u32 n = 0; n < 15; ++n) {
            const auto& node = hidden.tree.nodes[order[n]];
            REQUIRE(c.slots[n] == model::adjusted_branch_bit(node, xq));
        }
    }
}

TEST_CASE("enhanced comparison") {
    Fixture fx(64);
    const u64 q = fx.params.plain_modulus;
    const u64 zeta = fx.params.zeta;
    auto ev = fx.ev();

    SECTION("tie maps to +1 difference and C = 1, V strictly nonzero") {
        // premapped: 2x' = 2v, 2y-1 = 2v-1 for x' = y = v
        u64 v = 31;
        PlainVec x2(64, 2 * v), y2m1(64, 2 * v - 1);
        auto bl = sample_enhanced_blinding(fx.params, fx.rng);
        auto cx = fx.backend.encrypt(fx.km.public_key, x2, fx.rng);
        auto vb = compare_plus_start(ev, cx, y2m1, bl);
        auto seen = fx.backend.decrypt(fx.km.secret_key, vb);
        for (u32 i = 0; i < 64; ++i) REQUIRE(centered(seen.slots[i], q) != 0);
        auto vp = compare_respond(fx.backend, fx.km.secret_key, fx.km.public_key, vb, fx.rng);
        auto c = fx.backend.decrypt(fx.km.secret_key,
                                    compare_finish(ev, vp, enhanced_recovery(bl, q)));
        for (u32 i = 0; i < 64; ++i) REQUIRE(c.slots[i] == 1);
    }

    SECTION("all four sign-mask combinations match the truth table") {
        PlainVec x2(64, 0), y2m1(64, 0);
        std::vector<u8> want(64);
        auto bl = sample_enhanced_blinding(fx.params, fx.rng);
        for (u32 i = 0; i < 64; ++i) {
            bool ge = (i & 1) != 0;
            u64 xv = ge ? 20 : 6;  // x' vs y = 10
            x2.slots[i] = 2 * xv;
            y2m1.slots[i] = 2 * 10 - 1;
            bl.base.r.slots[i] = (i & 2) ? q - 1 : 1;
            bl.r2.slots[i] = (i & 4) ? q - 1 : 1;
            want[i] = ge ? 1 : 0;
        }
        auto cx = fx.backend.encrypt(fx.km.public_key, x2, fx.rng);
        auto vb = compare_plus_start(ev, cx, y2m1, bl);
        auto vp = compare_respond(fx.backend, fx.km.secret_key, fx.km.public_key, vb, fx.rng);
        auto c = fx.backend.decrypt(fx.km.secret_key,
                                    compare_finish(ev, vp, enhanced_recovery(bl, q)));
        for (u32 i = 0; i < 64; ++i) REQUIRE(c.slots[i] == want[i]);
    }

    SECTION("random slots: oracle agreement, nonzero bound, range bound") {
        u64 min_abs = ~u64(0);
        u64 max_abs = 0;
        Rng rng(515);
        for (int trial = 0; trial < 200; ++trial) {  // 200*64 = 12800 slots
            PlainVec x2(64, 0), y2m1(64, 0);
            std::vector<u8> want(64);
            for (u32 i = 0; i < 64; ++i) {
                u64 xv = rng.uniform(zeta / 2 + 1);
                u64 yv = 1 + rng.uniform(zeta / 2);
                x2.slots[i] = 2 * xv;
                y2m1.slots[i] = 2 * yv - 1;
                want[i] = xv >= yv ? 1 : 0;
            }
            auto bl = sample_enhanced_blinding(fx.params, rng);
            auto cx = fx.backend.encrypt(fx.km.public_key, x2, rng);
            auto vb = compare_plus_start(ev, cx, y2m1, bl);
            auto seen = fx.backend.decrypt(fx.km.secret_key, vb);
            for (u32 i = 0; i < 64; ++i) {
                u64 mag = static_cast<u64>(std::abs(centered(seen.slots[i], q)));
                min_abs = std::min(min_abs, mag);
                max_abs = std::max(max_abs, mag);
            }
            auto vp = compare_respond(fx.backend, fx.km.secret_key, fx.km.public_key, vb, rng);
            auto c = fx.backend.decrypt(fx.km.secret_key,
                                        compare_finish(ev, vp, enhanced_recovery(bl, q)));
            for (u32 i = 0; i < 64; ++i) REQUIRE(c.slots[i] == want[i]);
        }
        CHECK(min_abs >= 1);                     // B_min
        CHECK(max_abs <= zeta * zeta + zeta);    // Theorem range
    }
}

TEST_CASE("blinded view hides the sign: P(V'=1) near 1/2") {
    Fixture fx(64);
    const u64 q = fx.params.plain_modulus;
    auto ev = fx.ev();
    // fixed comparison inputs, fresh blinding each query
    PlainVec x(64, 100), y(64, 7);  // always d >= 0
    auto cx = fx.backend.encrypt(fx.km.public_key, x, fx.rng);
    u64 ones = 0, total = 0;
    Rng rng(31337);
    while (total < 12800) {
        auto bl = sample_comparison_blinding(fx.params, rng);
        auto v = compare_start(ev, cx, y, bl);
        auto bits = compare_sign_bits(fx.backend.decrypt(fx.km.secret_key, v), q);
        for (u64 b : bits.slots) ones += b;
        total += 64;
    }
    double p = double(ones) / double(total);
    CHECK(p > 0.45);
    CHECK(p < 0.55);
}
