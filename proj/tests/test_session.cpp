// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "kangaroo/bfv.hpp"
#include "kangaroo/session.hpp"
#include "testutil.hpp"

using namespace kangaroo;
using namespace kangaroo::protocol;
using phe::PheParams;
using phe::PlainVec;
using phe::TransparentBackend;

namespace {

struct Setup {
    model::PackedModel pm;
    model::PublicBundle bundle;
};

Setup pack_forest(const testutil::ForestFixture& fx, const PheParams& params,
                  model::SlotLayout::Mode mode) {
    auto lay = model::plan_layout(fx.hidden, params.slot_count, fx.trees[0].feature_count, mode);
    Setup s{model::encode_pack(fx.hidden, lay, params), {}};
    s.bundle = model::make_public_bundle(s.pm, fx.spec);
    return s;
}

i64 run_once(const phe::Backend& be, const Setup& s, const std::vector<double>& x, u64 seed,
             ExchangeLog* log_out = nullptr, std::vector<PlainVec>* trace_out = nullptr) {
    ServerSession server(be, s.pm, s.bundle, seed);
    ClientSession client(be, x, seed + 1);
    auto log = drive_inprocess(server, client);
    if (log_out) *log_out = log;
    if (trace_out) *trace_out = client.decrypt_trace();
    return client.result_fixed();
}

}  // namespace

TEST_CASE("single depth-1 tree end to end") {
    Rng rng(1);
    model::DecisionTree t;
    t.feature_count = 1;
    model::TreeNode n;
    n.feature = 1;
    n.threshold = 0.5;
    n.left = model::leaf_ref(0);
    n.right = model::leaf_ref(1);
    t.nodes.push_back(n);
    t.leaf_weights = {10.0, 20.0};

    auto params = PheParams::transparent(16, 65537);
    TransparentBackend backend(params);
    testutil::ForestFixture fx;
    fx.spec = model::unit_ranges(1, params.zeta);
    fx.frac_bits = 8;
    fx.trees = {t};
    fx.hidden = {model::hide_model(t, model::PaddingPolicy::full(), fx.spec, 8, rng).tree};
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);

    // below threshold -> left weight
    CHECK(run_once(backend, setup, {0.2}, 7) == 10 * 256);
    // above threshold -> right weight
    CHECK(run_once(backend, setup, {0.9}, 8) == 20 * 256);
    // exactly at the threshold: tie goes right
    CHECK(run_once(backend, setup, {0.5}, 9) == 20 * 256);
}

TEST_CASE("two trees aggregate to the oracle sum") {
    Rng rng(2);
    auto params = PheParams::transparent(64, 65537);
    TransparentBackend backend(params);
    auto fx = testutil::random_forest(2, 3, 6, 5, params.zeta, 8, rng, true);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    for (int i = 0; i < 10; ++i) {
        auto x = model::random_input(3, rng);
        i64 want = model::forest_oracle_fixed(fx.trees, x, fx.spec, 8);
        REQUIRE(run_once(backend, setup, x, 100 + i) == want);
    }
}

TEST_CASE("random forests match the oracle in both layout modes") {
    Rng rng(3);
    auto params = PheParams::transparent(256, 65537);
    TransparentBackend backend(params);
    for (auto mode : {model::SlotLayout::Mode::interleaved, model::SlotLayout::Mode::adaptive}) {
        for (int trial = 0; trial < 10; ++trial) {
            u32 K = 1 + static_cast<u32>(rng.uniform(6));
            u32 M = 2 + static_cast<u32>(rng.uniform(4));
            auto fx = testutil::random_forest(K, M, 10, 6, params.zeta, 8, rng,
                                              mode == model::SlotLayout::Mode::interleaved);
            auto setup = pack_forest(fx, params, mode);
            for (int i = 0; i < 3; ++i) {
                auto x = model::random_input(M, rng);
                i64 want = model::forest_oracle_fixed(fx.trees, x, fx.spec, 8);
                REQUIRE(run_once(backend, setup, x, rng.next()) == want);
            }
        }
    }
}

TEST_CASE("post-setup exchange is exactly eight messages") {
    Rng rng(4);
    auto params = PheParams::transparent(128, 65537);
    TransparentBackend backend(params);
    auto fx = testutil::random_forest(4, 3, 8, 5, params.zeta, 8, rng, true);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    ExchangeLog log;
    run_once(backend, setup, model::random_input(3, rng), 5, &log);
    CHECK(log.post_setup_messages() == 8);
    // schedule: Query, CompareBlinded, CompareResult, PathBlinded, PathCosts,
    // PathCmpBlinded, PathCmpResult, Response
    std::vector<transport::MsgType> up, down;
    for (const auto& m : log.to_server)
        if (!transport::is_setup_type(m.type)) up.push_back(m.type);
    for (const auto& m : log.to_client)
        if (!transport::is_setup_type(m.type)) down.push_back(m.type);
    REQUIRE(up == std::vector<transport::MsgType>{transport::MsgType::query,
                                                  transport::MsgType::compare_result,
                                                  transport::MsgType::path_costs,
                                                  transport::MsgType::path_cmp_result});
    REQUIRE(down == std::vector<transport::MsgType>{transport::MsgType::compare_blinded,
                                                    transport::MsgType::path_blinded,
                                                    transport::MsgType::path_cmp_blinded,
                                                    transport::MsgType::response});
}

TEST_CASE("comparison stage ships ceil(K/M*) ciphertexts per direction") {
    Rng rng(5);
    auto params = PheParams::transparent(64, 65537);
    TransparentBackend backend(params);
    u32 mstar = 4;
    for (u32 K : {1u, 4u, 9u}) {  // 1, M*, 2M*+1
        auto fx = testutil::random_forest(K, 3, 3, 4, params.zeta, 8, rng, true);
        auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
        REQUIRE(setup.pm.layout.block == mstar);
        ExchangeLog log;
        run_once(backend, setup, model::random_input(3, rng), 50 + K, &log);
        u32 want = (K + mstar - 1) / mstar;
        for (const auto& m : log.to_client) {
            if (m.type == transport::MsgType::compare_blinded) {
                PayloadReader r(m.payload);
                REQUIRE(r.get_u32() == want);
            }
        }
        for (const auto& m : log.to_server) {
            if (m.type == transport::MsgType::compare_result) {
                PayloadReader r(m.payload);
                REQUIRE(r.get_u32() == want);
            }
        }
    }
}

TEST_CASE("out-of-order messages abort with a state error") {
    Rng rng(6);
    auto params = PheParams::transparent(16, 65537);
    TransparentBackend backend(params);
    auto fx = testutil::random_forest(1, 2, 2, 3, params.zeta, 8, rng, true);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    ServerSession server(backend, setup.pm, setup.bundle, 1);
    ClientSession client(backend, model::random_input(2, rng), 2);
    auto hello = client.start();
    (void)server.on_message(hello);
    // CompareResult before Query
    Message bogus{transport::MsgType::compare_result, 99, {}};
    CHECK_THROWS_AS(server.on_message(bogus), StateError);
}

TEST_CASE("mismatched public bundles abort with a stage tag") {
    Rng rng(7);
    auto params = PheParams::transparent(32, 65537);
    TransparentBackend backend(params);
    auto fx = testutil::random_forest(1, 2, 3, 4, params.zeta, 8, rng, true);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    auto tampered = setup;
    tampered.bundle.x_max[0] += 1.0;  // client sees a different bundle

    ServerSession server(backend, setup.pm, setup.bundle, 1);
    ClientSession client(backend, model::random_input(2, rng), 2);
    std::deque<Message> to_server{client.start()};
    bool aborted = false;
    try {
        // hand-drive: server replies with ITS bundle; substitute the tampered
        // one on the client so the digests disagree
        auto replies = server.on_message(to_server.front());
        Message bundle_msg = replies.at(0);
        bundle_msg.payload = model::bundle_to_bytes(tampered.bundle);
        auto out = client.on_message(bundle_msg);
        for (auto& m : out) server.on_message(m);
    } catch (const Error& e) {
        aborted = true;
        CHECK(e.stage() == Stage::session);
    }
    CHECK(aborted);
}

TEST_CASE("desk-small lattice session matches the oracle") {
    Rng rng(8);
    auto params = phe::preset_params("desk-small", phe::BackendId::lattice);
    bfv::LatticeBackend backend(params);
    auto fx = testutil::random_forest(3, 4, 12, 6, params.zeta, 12, rng, true);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    for (int i = 0; i < 2; ++i) {
        auto x = model::random_input(4, rng);
        i64 want = model::forest_oracle_fixed(fx.trees, x, fx.spec, 12);
        REQUIRE(run_once(backend, setup, x, 600 + i) == want);
    }
}

TEST_CASE("transparent and lattice transcripts decrypt identically") {
    Rng rng(9);
    auto lat_params = phe::preset_params("desk-small", phe::BackendId::lattice);
    auto tra_params = phe::preset_params("desk-small", phe::BackendId::transparent);
    bfv::LatticeBackend lattice(lat_params);
    TransparentBackend transparent(tra_params);
    REQUIRE(lat_params.plain_modulus == tra_params.plain_modulus);
    REQUIRE(lat_params.slot_count == tra_params.slot_count);

    auto fx = testutil::random_forest(2, 3, 8, 5, lat_params.zeta, 12, rng, true);
    auto setup_lat = pack_forest(fx, lat_params, model::SlotLayout::Mode::interleaved);
    auto setup_tra = pack_forest(fx, tra_params, model::SlotLayout::Mode::interleaved);

    auto x = model::random_input(3, rng);
    std::vector<PlainVec> trace_lat, trace_tra;
    i64 pi_lat = run_once(lattice, setup_lat, x, 42, nullptr, &trace_lat);
    i64 pi_tra = run_once(transparent, setup_tra, x, 42, nullptr, &trace_tra);
    REQUIRE(pi_lat == pi_tra);
    REQUIRE(trace_lat.size() == trace_tra.size());
    for (size_t i = 0; i < trace_lat.size(); ++i) REQUIRE(trace_lat[i].slots == trace_tra[i].slots);
}

TEST_CASE("fresh seeds produce fresh blinded payloads") {
    Rng rng(10);
    auto params = PheParams::transparent(64, 65537);
    TransparentBackend backend(params);
    auto fx = testutil::random_forest(2, 3, 6, 5, params.zeta, 8, rng, true);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    auto x = model::random_input(3, rng);
    ExchangeLog a, b;
    i64 pa = run_once(backend, setup, x, 1000, &a);
    i64 pb = run_once(backend, setup, x, 2000, &b);
    REQUIRE(pa == pb);  // same result
    auto payload_of = [](const ExchangeLog& log, transport::MsgType t) {
        for (const auto& m : log.to_client)
            if (m.type == t) return m.payload;
        for (const auto& m : log.to_server)
            if (m.type == t) return m.payload;
        throw std::logic_error("message not found");
    };
    CHECK(payload_of(a, transport::MsgType::compare_blinded) !=
          payload_of(b, transport::MsgType::compare_blinded));
    CHECK(payload_of(a, transport::MsgType::path_blinded) !=
          payload_of(b, transport::MsgType::path_blinded));
    CHECK(payload_of(a, transport::MsgType::response) !=
          payload_of(b, transport::MsgType::response));
}

TEST_CASE("client's decrypted path view is uniform") {
    Rng rng(11);
    auto params = PheParams::transparent(128, 65537);
    TransparentBackend backend(params);
    auto fx = testutil::random_forest(2, 3, 6, 5, params.zeta, 8, rng, true);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    auto x = model::random_input(3, rng);
    std::vector<u64> samples;
    u64 seed = 3000;
    while (samples.size() < 12800) {
        std::vector<PlainVec> trace;
        run_once(backend, setup, x, seed++, nullptr, &trace);
        // trace: [V x groups, I' x groups, V2 x groups, response]; grab I'
        u32 groups = setup.pm.layout.group_count;
        for (u32 g = 0; g < groups; ++g) {
            const auto& iprime = trace.at(groups + g);
            samples.insert(samples.end(), iprime.slots.begin(), iprime.slots.end());
        }
    }
    double stat = testutil::chi_square_uniform(samples, params.plain_modulus, 64);
    CHECK(stat < testutil::kChi2Crit63_01);
}

#include "kangaroo/outsourced.hpp"

namespace {

testutil::ForestFixture outsourced_fixture(u32 K, u32 M, Rng& rng, const PheParams& params) {
    // dummies stay unswapped in the outsourced pipeline
    return testutil::random_forest(K, M, 8, 5, params.zeta, 8, rng, true,
                                   model::SwapPolicy::real_only);
}

}  // namespace

TEST_CASE("outsourced inference equals the client-server result") {
    Rng rng(21);
    auto params = PheParams::transparent(64, 65537);
    TransparentBackend backend(params);
    auto fx = outsourced_fixture(1, 2, rng, params);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);

    Rng krng(5);
    auto keys = backend.keygen(phe::default_shift_set(64, setup.pm.layout.block), krng);
    auto em = outsource_model(backend, keys.public_key, setup.pm, setup.bundle, krng);

    for (int i = 0; i < 5; ++i) {
        auto x = model::random_input(2, rng);
        PlainVec user_mask(64, 0);
        for (auto& s : user_mask.slots) s = rng.uniform(params.plain_modulus);
        auto got = outsourced_infer(backend, keys, em, setup.pm.flips, x, user_mask, 900 + i);
        i64 want = run_once(backend, setup, x, 900 + i);
        REQUIRE(got.pi_fixed == want);
    }
}

TEST_CASE("outsourced inference matches the forest oracle on K=4") {
    Rng rng(22);
    auto params = PheParams::transparent(256, 65537);
    TransparentBackend backend(params);
    auto fx = outsourced_fixture(4, 3, rng, params);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);

    Rng krng(6);
    auto keys = backend.keygen(phe::default_shift_set(256, setup.pm.layout.block), krng);
    auto em = outsource_model(backend, keys.public_key, setup.pm, setup.bundle, krng);

    for (int i = 0; i < 5; ++i) {
        auto x = model::random_input(3, rng);
        PlainVec user_mask(256, 0);
        for (auto& s : user_mask.slots) s = rng.uniform(params.plain_modulus);
        auto got = outsourced_infer(backend, keys, em, setup.pm.flips, x, user_mask, 1100 + i);
        REQUIRE(got.pi_fixed == model::forest_oracle_fixed(fx.trees, x, fx.spec, 8));
    }
}

TEST_CASE("flip correction is load-bearing for swapped real nodes") {
    Rng rng(23);
    auto params = PheParams::transparent(64, 65537);
    TransparentBackend backend(params);

    // find a fixture with at least one swapped real node and an input whose
    // path crosses it (result differs without the correction)
    for (int attempt = 0;; ++attempt) {
        REQUIRE(attempt < 200);
        auto fx = outsourced_fixture(1, 2, rng, params);
        bool has_swap = false;
        for (const auto& n : fx.hidden[0].nodes) has_swap |= (n.real && n.flip == -1);
        if (!has_swap) continue;
        auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
        Rng krng(7);
        auto keys = backend.keygen(phe::default_shift_set(64, setup.pm.layout.block), krng);
        auto em = outsource_model(backend, keys.public_key, setup.pm, setup.bundle, krng);
        auto x = model::random_input(2, rng);
        PlainVec user_mask(64, 0);
        for (auto& s : user_mask.slots) s = rng.uniform(params.plain_modulus);
        i64 want = model::forest_oracle_fixed(fx.trees, x, fx.spec, 8);
        auto with = outsourced_infer(backend, keys, em, setup.pm.flips, x, user_mask, 42, true);
        REQUIRE(with.pi_fixed == want);
        auto without = outsourced_infer(backend, keys, em, setup.pm.flips, x, user_mask, 42, false);
        if (without.pi_fixed != want) break;  // ablation visible; done
    }
}

TEST_CASE("outsourced mode rejects the lattice backend") {
    Rng rng(24);
    auto params = phe::preset_params("desk-small", phe::BackendId::lattice);
    bfv::LatticeBackend backend(params);
    Rng krng(8);
    auto keys = backend.keygen({1}, krng);
    auto fx = outsourced_fixture(1, 2, rng, params);
    auto setup = pack_forest(fx, params, model::SlotLayout::Mode::interleaved);
    CHECK_THROWS_AS(outsource_model(backend, keys.public_key, setup.pm, setup.bundle, krng),
                    kangaroo::Error);
}
