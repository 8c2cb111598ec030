// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "kangaroo/select.hpp"
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

    explicit Fixture(u32 slots, u32 block)
        : params(PheParams::transparent(slots, 65537)),
          backend(params),
          rng(99),
          km(backend.keygen(phe::default_shift_set(slots, block), rng)) {}

    Evaluator ev() { return Evaluator{backend, km.public_key, km.rotation_keys}; }
};

}  // namespace

TEST_CASE("feature_select_I with block 1 degenerates to the mask product") {
    Fixture fx(16, 1);
    auto v = testutil::random_vec(fx.params, fx.rng);
    auto mask = testutil::random_vec(fx.params, fx.rng);
    auto c = fx.backend.encrypt(fx.km.public_key, v, fx.rng);
    auto got = fx.backend.decrypt(fx.km.secret_key,
                                  feature_select_I(fx.ev(), c, 1, mask));
    auto want = fx.backend.decrypt(fx.km.secret_key, fx.backend.mul_plain(c, mask));
    CHECK(got.slots == want.slots);
}

TEST_CASE("feature_select_I places selected features at block starts") {
    // blocks select features 3, 1, 4 of x = [5,7,2,9]
    Fixture fx(16, 4);
    std::vector<u64> xq{5, 7, 2, 9};
    auto x = testutil::replicate_features(xq, 4, 16);
    PlainVec mask(16, 0);
    mask.slots[0 * 4 + 2] = 1;  // feature 3
    mask.slots[1 * 4 + 0] = 1;  // feature 1
    mask.slots[2 * 4 + 3] = 1;  // feature 4
    auto c = fx.backend.encrypt(fx.km.public_key, x, fx.rng);
    auto out = fx.backend.decrypt(fx.km.secret_key, feature_select_I(fx.ev(), c, 4, mask));
    CHECK(out.slots[0] == 2);
    CHECK(out.slots[4] == 5);
    CHECK(out.slots[8] == 9);
}

TEST_CASE("feature_select_I equals the blockwise sum oracle for awkward block sizes") {
    for (u32 block : {2u, 3u, 5u, 8u, 12u, 16u, 57u}) {
        u32 slots = 128;
        while (slots < 2 * block) slots *= 2;
        Fixture fx(slots, block);
        for (int trial = 0; trial < 20; ++trial) {
            auto v = testutil::random_vec(fx.params, fx.rng);
            auto mask = testutil::random_vec(fx.params, fx.rng);
            auto c = fx.backend.encrypt(fx.km.public_key, v, fx.rng);
            auto got = fx.backend.decrypt(fx.km.secret_key,
                                          feature_select_I(fx.ev(), c, block, mask));
            auto want = block_window_sums(phe::pv_mul(v, mask, fx.params.plain_modulus), block,
                                          fx.params.plain_modulus);
            REQUIRE(got.slots == want.slots);
        }
    }
}

TEST_CASE("feature_select_II") {
    Fixture fx(32, 4);
    auto ev = fx.ev();
    std::vector<u64> xq{11, 22, 33, 44};
    auto x = testutil::replicate_features(xq, 4, 32);
    PlainVec mask(32, 0);
    for (u32 b = 0; b < 8; ++b) mask.slots[b * 4 + (b % 4)] = 1;  // block b picks feature b%4+1
    auto cx = fx.backend.encrypt(fx.km.public_key, x, fx.rng);

    SECTION("zero E test hook: output equals client block sums directly") {
        PlainVec zero_e(32, 0);
        auto st = feature_select_II_start(ev, cx, mask, fx.rng, &zero_e);
        auto resp =
            feature_select_II_respond(fx.backend, fx.km.secret_key, fx.km.public_key, st.blinded, 4, fx.rng);
        auto out = fx.backend.decrypt(fx.km.secret_key,
                                      feature_select_II_finish(ev, resp, st.mask_e, 4));
        for (u32 b = 0; b < 8; ++b) REQUIRE(out.slots[b * 4] == xq[b % 4]);
    }

    SECTION("random E: block starts agree with feature_select_I") {
        auto st = feature_select_II_start(ev, cx, mask, fx.rng);
        auto resp =
            feature_select_II_respond(fx.backend, fx.km.secret_key, fx.km.public_key, st.blinded, 4, fx.rng);
        auto got = fx.backend.decrypt(fx.km.secret_key,
                                      feature_select_II_finish(ev, resp, st.mask_e, 4));
        auto want = fx.backend.decrypt(fx.km.secret_key, feature_select_I(ev, cx, 4, mask));
        for (u32 b = 0; b < 8; ++b) REQUIRE(got.slots[b * 4] == want.slots[b * 4]);
    }

    SECTION("client's decrypted view is uniform (chi-square at 0.01)") {
        std::vector<u64> samples;
        Rng rng2(4242);
        while (samples.size() < 20000) {
            auto st = feature_select_II_start(ev, cx, mask, rng2);
            auto seen = fx.backend.decrypt(fx.km.secret_key, st.blinded);
            samples.insert(samples.end(), seen.slots.begin(), seen.slots.end());
        }
        double stat = testutil::chi_square_uniform(samples, fx.params.plain_modulus, 64);
        CHECK(stat < testutil::kChi2Crit63_01);
    }
}

TEST_CASE("feature_sel_pack places each tree's selection in its lane") {
    // two single-feature... rather: 2 trees, M*=2, one decision node each
    Fixture fx(8, 2);
    auto ev = fx.ev();
    std::vector<u64> xq{5, 9};
    auto x = testutil::replicate_features(xq, 2, 8);
    auto cx = fx.backend.encrypt(fx.km.public_key, x, fx.rng);

    PlainVec mask_a(8, 0), mask_b(8, 0), keep(8, 0);
    mask_a.slots[1] = 1;  // tree a, node 1 selects feature 2
    mask_b.slots[0] = 1;  // tree b, node 1 selects feature 1
    keep.slots[0] = 1;    // single node: block start 0

    auto out = fx.backend.decrypt(
        fx.km.secret_key, feature_sel_pack_group(ev, cx, {&mask_a, &mask_b}, keep, 2));
    CHECK(out.slots[0] == 9);  // tree a at lane 0
    CHECK(out.slots[1] == 5);  // tree b at lane 1
    for (u32 s = 2; s < 8; ++s) CHECK(out.slots[s] == 0);
}

TEST_CASE("feature_sel_pack with K=1 equals masked feature_select_I") {
    Fixture fx(16, 4);
    auto ev = fx.ev();
    auto v = testutil::random_vec(fx.params, fx.rng);
    PlainVec mask(16, 0);
    mask.slots[2] = 1;
    mask.slots[5] = 1;
    PlainVec keep(16, 0);
    keep.slots[0] = keep.slots[4] = 1;
    auto c = fx.backend.encrypt(fx.km.public_key, v, fx.rng);
    auto got = fx.backend.decrypt(fx.km.secret_key,
                                  feature_sel_pack_group(ev, c, {&mask}, keep, 4));
    auto base = fx.backend.decrypt(
        fx.km.secret_key,
        fx.backend.mul_plain(feature_select_I(ev, c, 4, mask), keep));
    CHECK(got.slots == base.slots);
}
