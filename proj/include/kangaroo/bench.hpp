// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kangaroo/bfv.hpp"
#include "kangaroo/model_io.hpp"
#include "kangaroo/runner.hpp"

namespace kangaroo::bench {

using protocol::ClientSession;
using protocol::ServerSession;
using transport::NetProfile;

struct BenchReport {
    std::string scenario;
    std::string backend;
    std::string net;
    u32 features = 0;
    u32 depth = 0;
    u32 decisions = 0;   // tau (source model)
    u32 trees = 0;       // K
    u32 block = 0;       // M*
    u32 groups = 0;      // comparison ciphertexts per direction
    u32 rounds = 0;
    u64 setup_bytes = 0;
    u64 query_bytes = 0;
    double amortized_kb_per_tree = 0;
    double sim_wall_ms = 0;
    protocol::StageTimings client;
    protocol::StageTimings server;
    std::map<std::string, double> extra;

    static std::string csv_header() {
        return "scenario,backend,net,M,D,tau,K,Mstar,groups,rounds,setup_bytes,query_bytes,"
               "amortized_kb_per_tree,sim_wall_ms,client_encrypt_ms,client_compare_ms,"
               "client_path_ms,server_select_ms,server_compare_ms,server_path_ms,"
               "server_respond_ms,extra";
    }

    std::string csv_row() const {
        std::ostringstream os;
        os << scenario << ',' << backend << ',' << net << ',' << features << ',' << depth << ','
           << decisions << ',' << trees << ',' << block << ',' << groups << ',' << rounds << ','
           << setup_bytes << ',' << query_bytes << ',' << amortized_kb_per_tree << ','
           << sim_wall_ms << ',' << client.encrypt_ms << ',' << client.compare_ms << ','
           << client.path_ms << ',' << server.select_ms << ',' << server.compare_ms << ','
           << server.path_ms << ',' << server.respond_ms << ',';
        bool first = true;
        for (const auto& [k, v] : extra) {
            if (!first) os << ';';
            os << k << '=' << v;
            first = false;
        }
        return os.str();
    }
};

inline std::string reports_to_csv(const std::vector<BenchReport>& reports) {
    std::ostringstream os;
    os << BenchReport::csv_header() << '\n';
    for (const auto& r : reports) os << r.csv_row() << '\n';
    return os.str();
}

inline std::string reports_to_markdown(const std::vector<BenchReport>& reports) {
    std::ostringstream os;
    os << "| scenario | backend | net | M | D | tau | K | M* | groups | rounds | setup KB | "
          "query KB | KB/tree | sim ms |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : reports) {
        os << "| " << r.scenario << " | " << r.backend << " | " << r.net << " | " << r.features
           << " | " << r.depth << " | " << r.decisions << " | " << r.trees << " | " << r.block
           << " | " << r.groups << " | " << r.rounds << " | " << double(r.setup_bytes) / 1024.0
           << " | " << double(r.query_bytes) / 1024.0 << " | " << r.amortized_kb_per_tree << " | "
           << r.sim_wall_ms << " |\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Scenario runner

struct BenchConfig {
    phe::BackendId backend = phe::BackendId::transparent;
    std::string params_preset = "desk-small";
    u64 seed = 1;
    std::vector<NetProfile> nets = {NetProfile::parse("wan")};
};

inline std::unique_ptr<phe::Backend> make_backend(const phe::PheParams& p) {
    if (p.backend_id == phe::BackendId::lattice)
        return std::make_unique<bfv::LatticeBackend>(p);
    return std::make_unique<phe::TransparentBackend>(p);
}

/// Run one inference over the simulator and fill the common report fields.
inline BenchReport run_scenario(const std::string& name, const phe::Backend& be,
                                const model::ModelDocument& doc, const model::PackedModel& pm,
                                const model::PublicBundle& bundle, const NetProfile& net,
                                u64 seed) {
    ServerSession server(be, pm, bundle, seed);
    u32 M = doc.feature_count;
    std::vector<double> x(M);
    Rng rng(mix_seed(seed, 77));
    for (u32 j = 0; j < M; ++j)
        x[j] = doc.x_min[j] + (doc.x_max[j] - doc.x_min[j]) * rng.unit_real();
    ClientSession client(be, x, seed + 1);
    auto out = transport::run_session_sim(server, client, net);

    i64 want = model::forest_oracle_fixed(doc.trees, x, bundle.quantization(), bundle.frac_bits);
    if (out.pi_fixed != want) throw Error(Stage::session, "benchmark result disagrees with oracle");

    BenchReport r;
    r.scenario = name;
    r.backend = phe::backend_name(be.params().backend_id);
    r.net = net.name;
    r.features = M;
    u32 depth = 0, tau = 0;
    for (const auto& t : doc.trees) {
        depth = std::max(depth, t.depth());
        tau = std::max(tau, t.decision_count());
    }
    r.depth = depth;
    r.decisions = tau;
    r.trees = static_cast<u32>(doc.trees.size());
    r.block = pm.layout.block;
    r.groups = pm.layout.group_count;
    r.rounds = out.transcript.round_trips();
    r.setup_bytes = out.transcript.total_bytes(true);
    r.query_bytes = out.transcript.total_bytes(false);
    r.amortized_kb_per_tree = double(r.query_bytes) / 1024.0 / double(r.trees);
    r.sim_wall_ms = out.transcript.duration_ms();
    r.client = out.client_timings;
    r.server = out.server_timings;
    return r;
}

inline model::PackedModel pack_document(const model::ModelDocument& doc, const phe::PheParams& params,
                                        model::SlotLayout::Mode mode, u32 frac_bits, u64 seed,
                                        model::PublicBundle* bundle_out,
                                        model::SwapPolicy swaps = model::SwapPolicy::all) {
    Rng rng(seed);
    auto spec = doc.quantization(params.zeta);
    std::vector<model::ObfuscatedTree> hidden;
    u32 tau_max = 0;
    for (const auto& t : doc.trees) tau_max = std::max(tau_max, t.decision_count());
    for (const auto& t : doc.trees) {
        auto policy = mode == model::SlotLayout::Mode::interleaved
                          ? model::PaddingPolicy::fixed(model::PaddingPolicy::full().target(tau_max))
                          : model::PaddingPolicy::full();
        hidden.push_back(model::hide_model(t, policy, spec, frac_bits, rng, swaps).tree);
    }
    auto lay = model::plan_layout(hidden, params.slot_count, doc.feature_count, mode);
    auto pm = model::encode_pack(hidden, lay, params);
    if (bundle_out) *bundle_out = model::make_public_bundle(pm, spec);
    return pm;
}

// ---------------------------------------------------------------------------
// Suites

/// forest-scaling: sweeps K and reports amortized per-tree figures; the
/// groups column carries the ceil(K/M*) comparison-ciphertext count.
inline std::vector<BenchReport> suite_forest_scaling(const BenchConfig& cfg) {
    auto params = phe::preset_params(cfg.params_preset, cfg.backend);
    auto be = make_backend(params);
    std::vector<BenchReport> out;
    Rng rng(cfg.seed);
    for (u32 K : {1u, 4u, 16u, 64u, 256u}) {
        model::DatasetShape shape{"forest", 8, 6, 20};
        // small weights and few fractional bits keep the K=256 aggregate
        // inside (-q/2, q/2) on the fast-test preset
        auto doc = model::synthetic_model(shape, K, rng, -4.0, 4.0);
        model::PublicBundle bundle;
        auto pm = pack_document(doc, params, model::SlotLayout::Mode::interleaved, 6, cfg.seed + K,
                                &bundle);
        for (const auto& net : cfg.nets) {
            auto r = run_scenario("forest-scaling/K=" + std::to_string(K), *be, doc, pm, bundle, net,
                                  cfg.seed + K);
            r.extra["compare_cts_per_direction"] = r.groups;
            out.push_back(std::move(r));
        }
    }
    return out;
}

/// single-tree-large: dataset-shaped single trees (paper-scale shapes).
inline std::vector<BenchReport> suite_single_tree_large(const BenchConfig& cfg) {
    auto params = phe::preset_params(cfg.params_preset, cfg.backend);
    auto be = make_backend(params);
    std::vector<BenchReport> out;
    Rng rng(cfg.seed);
    for (const char* name : {"digits", "diabetes", "boston"}) {
        auto shape = model::dataset_shape(name);
        auto doc = model::synthetic_model(shape, 1, rng);
        model::PublicBundle bundle;
        auto pm =
            pack_document(doc, params, model::SlotLayout::Mode::adaptive, 12, cfg.seed, &bundle);
        for (const auto& net : cfg.nets) {
            out.push_back(run_scenario(std::string("single-tree-large/") + name, *be, doc, pm,
                                       bundle, net, cfg.seed));
        }
    }
    return out;
}

/// selection-micro: non-interactive selection cost across block sizes.
inline std::vector<BenchReport> suite_selection_micro(const BenchConfig& cfg) {
    auto params = phe::preset_params(cfg.params_preset, cfg.backend);
    auto be = make_backend(params);
    std::vector<BenchReport> out;
    Rng rng(cfg.seed);
    for (u32 block : {1u, 2u, 8u, 12u, 16u, 57u, 64u}) {
        auto km = be->keygen(phe::default_shift_set(params.slot_count, block), rng);
        protocol::Evaluator ev{*be, km.public_key, km.rotation_keys};
        phe::PlainVec v(params.slot_count, 0), mask(params.slot_count, 0);
        for (auto& s : v.slots) s = rng.uniform(params.plain_modulus);
        for (u32 b = 0; b + block <= params.slot_count; b += block)
            mask.slots[b + rng.uniform(block)] = 1;
        auto ct = be->encrypt(km.public_key, v, rng);
        auto t0 = std::chrono::steady_clock::now();
        int reps = cfg.backend == phe::BackendId::lattice ? 3 : 20;
        for (int i = 0; i < reps; ++i) (void)protocol::feature_select_I(ev, ct, block, mask);
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count() /
                    reps;
        BenchReport r;
        r.scenario = "selection-micro/M*=" + std::to_string(block);
        r.backend = phe::backend_name(cfg.backend);
        r.net = "-";
        r.block = block;
        r.extra["op_ms"] = ms;
        r.extra["amortized_us_per_selection"] = ms * 1000.0 / (double(params.slot_count) / block);
        out.push_back(std::move(r));
    }
    return out;
}

/// comparison-micro: packed comparison cost; per-slot time falls as 1/S.
inline std::vector<BenchReport> suite_comparison_micro(const BenchConfig& cfg) {
    std::vector<BenchReport> out;
    Rng rng(cfg.seed);
    std::vector<u32> sweep = {16u, 64u, 256u, 1024u, 4096u};
    if (cfg.backend == phe::BackendId::lattice)
        sweep = {phe::preset_params(cfg.params_preset, cfg.backend).slot_count};
    for (u32 slots : sweep) {
        auto params = cfg.backend == phe::BackendId::lattice
                          ? phe::preset_params(cfg.params_preset, cfg.backend)
                          : phe::PheParams::transparent(slots, 65537);
        auto be = make_backend(params);
        auto km = be->keygen({1}, rng);
        protocol::Evaluator ev{*be, km.public_key, km.rotation_keys};
        phe::PlainVec x(params.slot_count, 0), y(params.slot_count, 0);
        for (u32 i = 0; i < params.slot_count; ++i) {
            x.slots[i] = rng.uniform(params.zeta + 1);
            y.slots[i] = rng.uniform(params.zeta + 1);
        }
        auto cx = be->encrypt(km.public_key, x, rng);
        auto t0 = std::chrono::steady_clock::now();
        const int reps = 20;
        for (int i = 0; i < reps; ++i) {
            auto bl = protocol::sample_comparison_blinding(params, rng);
            auto v = protocol::compare_start(ev, cx, y, bl);
            auto vp = protocol::compare_respond(*be, km.secret_key, km.public_key, v, rng);
            (void)protocol::compare_finish(ev, vp, protocol::base_recovery(bl, params.plain_modulus));
        }
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count() /
                    reps;
        BenchReport r;
        r.scenario = "comparison-micro/S=" + std::to_string(params.slot_count);
        r.backend = phe::backend_name(cfg.backend);
        r.net = "-";
        r.extra["op_ms"] = ms;
        r.extra["per_slot_us"] = ms * 1000.0 / params.slot_count;
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<BenchReport> run_suite(const std::string& suite, const BenchConfig& cfg) {
    if (suite == "forest-scaling") return suite_forest_scaling(cfg);
    if (suite == "single-tree-large") return suite_single_tree_large(cfg);
    if (suite == "selection-micro") return suite_selection_micro(cfg);
    if (suite == "comparison-micro") return suite_comparison_micro(cfg);
    throw ParamError("unknown bench suite: " + suite);
}

}  // namespace kangaroo::bench
