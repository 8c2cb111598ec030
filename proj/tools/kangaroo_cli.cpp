// SPDX-License-Identifier: Apache-2.0
//
// Operator CLI: key generation, model conversion and packing, server and
// client endpoints, and the benchmark harness.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kangaroo/bench.hpp"
#include "kangaroo/model_io.hpp"
#include "kangaroo/runner.hpp"

using namespace kangaroo;
namespace fs = std::filesystem;

namespace {

int log_level() {
    const char* env = std::getenv("KANGAROO_LOG");
    if (!env) return 1;
    std::string v = env;
    if (v == "quiet" || v == "0") return 0;
    if (v == "debug" || v == "2") return 2;
    return 1;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[kangaroo] " << msg << "\n";
}

struct CommonOpts {
    std::string params = "desk-small";
    std::string backend = "transparent";
    u64 seed = 1;

    phe::BackendId backend_id() const {
        if (backend == "transparent") return phe::BackendId::transparent;
        if (backend == "lattice") return phe::BackendId::lattice;
        throw ParamError("backend must be transparent or lattice");
    }

    phe::PheParams make_params() const { return phe::preset_params(params, backend_id()); }

    std::unique_ptr<phe::Backend> make_backend() const {
        return bench::make_backend(make_params());
    }
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--params", opts.params, "parameter preset: paper-default | desk-small | toy");
    cmd->add_option("--backend", opts.backend, "transparent | lattice");
    cmd->add_option("--seed", opts.seed, "RNG seed");
}

std::vector<double> read_features_csv(const std::string& path_or_list) {
    std::string text;
    if (fs::exists(path_or_list)) {
        std::ifstream f(path_or_list);
        std::getline(f, text);
    } else {
        text = path_or_list;  // inline comma-separated values
    }
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty()) out.push_back(std::stod(cell));
    }
    if (out.empty()) throw Error(Stage::io, "no feature values in " + path_or_list);
    return out;
}

model::SlotLayout::Mode parse_mode(const std::string& s) {
    if (s == "interleaved") return model::SlotLayout::Mode::interleaved;
    if (s == "adaptive") return model::SlotLayout::Mode::adaptive;
    throw ParamError("mode must be interleaved or adaptive");
}

model::PublicBundle load_bundle_for(const std::string& packed_path) {
    fs::path bundle_path = fs::path(packed_path).parent_path() / "public.json";
    std::ifstream bf(bundle_path);
    if (!bf) throw Error(Stage::io, "cannot read " + bundle_path.string());
    nlohmann::json bj;
    bf >> bj;
    return model::bundle_from_json(bj);
}

// --- keygen -----------------------------------------------------------------

int cmd_keygen(const CommonOpts& opts, const std::string& out_dir, u32 block) {
    auto params = opts.make_params();
    auto backend = opts.make_backend();
    Rng rng(opts.seed);
    auto km = backend->keygen(phe::default_shift_set(params.slot_count, block), rng);
    fs::create_directories(out_dir);
    model::write_file(out_dir + "/secret.key", phe::serialize_secret_key(km.secret_key));
    model::write_file(out_dir + "/public.key", phe::serialize_public_key(km.public_key));
    model::write_file(out_dir + "/rotation.keys", phe::serialize_rotation_keys(km.rotation_keys));
    log_info("wrote secret.key, public.key, rotation.keys to " + out_dir);
    std::cout << "keygen: backend=" << opts.backend << " preset=" << opts.params
              << " slots=" << params.slot_count << " q=" << params.plain_modulus
              << " rotation_keys=" << km.rotation_keys.declared.size() << "\n";
    return 0;
}

// --- convert ----------------------------------------------------------------

int cmd_convert(const std::string& in_path, const std::string& out_path) {
    auto doc = model::load_model(in_path);
    u32 depth = 0, tau = 0;
    for (const auto& t : doc.trees) {
        depth = std::max(depth, t.depth());
        tau = std::max(tau, t.decision_count());
    }
    std::ofstream f(out_path);
    if (!f) throw Error(Stage::io, "cannot write " + out_path);
    f << model::model_to_json(doc).dump(2) << "\n";
    std::cout << "convert: trees=" << doc.trees.size() << " M=" << doc.feature_count
              << " max_depth=" << depth << " max_tau=" << tau << " -> " << out_path << "\n";
    return 0;
}

// --- pack -------------------------------------------------------------------

int cmd_pack(const CommonOpts& opts, const std::string& model_path, const std::string& mode_s,
             const std::string& policy_s, u32 frac_bits, const std::string& out_dir) {
    auto params = opts.make_params();
    auto doc = model::load_model(model_path);
    auto mode = parse_mode(mode_s);

    Rng rng(opts.seed);
    auto spec = doc.quantization(params.zeta);
    u32 tau_max = 0;
    for (const auto& t : doc.trees) tau_max = std::max(tau_max, t.decision_count());
    std::vector<model::ObfuscatedTree> hidden;
    for (const auto& t : doc.trees) {
        model::PaddingPolicy policy = model::PaddingPolicy::full();
        if (policy_s.rfind("fixed:", 0) == 0)
            policy = model::PaddingPolicy::fixed(static_cast<u32>(std::stoul(policy_s.substr(6))));
        else if (policy_s != "full")
            throw ParamError("policy must be full or fixed:<tau*>");
        if (mode == model::SlotLayout::Mode::interleaved && policy_s == "full")
            policy = model::PaddingPolicy::fixed(model::PaddingPolicy::full().target(tau_max));
        hidden.push_back(model::hide_model(t, policy, spec, frac_bits, rng).tree);
    }
    auto lay = model::plan_layout(hidden, params.slot_count, doc.feature_count, mode);
    auto pm = model::encode_pack(hidden, lay, params);
    auto bundle = model::make_public_bundle(pm, spec);

    fs::create_directories(out_dir);
    model::write_file(out_dir + "/packed.bin", model::packed_model_to_bytes(pm));
    std::ofstream f(out_dir + "/public.json");
    f << model::bundle_to_json(bundle).dump(2) << "\n";
    std::cout << "pack: trees=" << pm.tree_count() << " mode=" << mode_s
              << " M*=" << pm.layout.block << " groups=" << pm.layout.group_count
              << " slots_per_group=" << pm.layout.slot_count
              << " digest=" << model::bundle_digest(bundle) << " -> " << out_dir << "\n";
    return 0;
}

// --- serve ------------------------------------------------------------------

int cmd_serve(const CommonOpts& opts, const std::string& packed_path, u16 port, u32 max_sessions) {
    auto params = opts.make_params();
    auto backend = opts.make_backend();
    auto pm = model::packed_model_from_bytes(model::read_file(packed_path));
    if (pm.plain_modulus != params.plain_modulus)
        throw ParamError("packed model was built for a different plain modulus");
    auto bundle = load_bundle_for(packed_path);

    transport::TcpListener listener(port);
    std::cout << "serving on 127.0.0.1:" << listener.port() << " (trees=" << pm.tree_count()
              << ", groups=" << pm.layout.group_count << ")\n"
              << std::flush;
    u64 session_seed = opts.seed;
    for (u32 n = 0; max_sessions == 0 || n < max_sessions; ++n) {
        auto stream = listener.accept();
        try {
            protocol::ServerSession session(*backend, pm, bundle, session_seed++);
            transport::serve_session_tcp(stream, session);
            log_info("session " + std::to_string(n) + " completed");
        } catch (const Error& e) {
            log_info(std::string("session aborted: ") + e.what());
        }
    }
    return 0;
}

// --- infer ------------------------------------------------------------------

void print_outcome(const transport::SessionOutcome& out, u32 frac_bits,
                   const std::string& transcript_path) {
    std::cout << "pi = " << out.pi << " (raw residue " << out.pi_residue << ", fixed-point "
              << out.pi_fixed << " at " << frac_bits << " fractional bits)\n";
    std::cout << "rounds = " << out.transcript.round_trips()
              << ", query bytes = " << out.transcript.total_bytes(false)
              << ", setup bytes = " << out.transcript.total_bytes(true)
              << ", sim wall ms = " << out.transcript.duration_ms() << "\n";
    if (!transcript_path.empty()) {
        out.transcript.write_csv(transcript_path);
        log_info("transcript written to " + transcript_path);
    }
}

int cmd_infer(const CommonOpts& opts, const std::string& connect, const std::string& packed_path,
              const std::string& net, const std::string& features_arg, const std::string& keys_dir,
              const std::string& transcript_path) {
    auto backend = opts.make_backend();
    auto features = read_features_csv(features_arg);

    auto make_client = [&]() {
        if (!keys_dir.empty()) {
            phe::KeyMaterial km;
            km.secret_key = phe::deserialize_secret_key(model::read_file(keys_dir + "/secret.key"));
            km.public_key = phe::deserialize_public_key(model::read_file(keys_dir + "/public.key"));
            km.rotation_keys =
                phe::deserialize_rotation_keys(model::read_file(keys_dir + "/rotation.keys"));
            return protocol::ClientSession(*backend, std::move(km), features, opts.seed);
        }
        return protocol::ClientSession(*backend, features, opts.seed);
    };

    if (!connect.empty()) {
        auto colon = connect.rfind(':');
        if (colon == std::string::npos) throw ParamError("--connect expects host:port");
        std::string host = connect.substr(0, colon);
        u16 port = static_cast<u16>(std::stoul(connect.substr(colon + 1)));
        auto client = make_client();
        auto stream = transport::tcp_connect(host, port);
        auto out = transport::run_session_tcp(stream, client);
        print_outcome(out, client.bundle().frac_bits, transcript_path);
        return 0;
    }

    // simulated transport against a local server instance
    if (packed_path.empty()) throw ParamError("infer needs --connect or --packed");
    auto pm = model::packed_model_from_bytes(model::read_file(packed_path));
    auto bundle = load_bundle_for(packed_path);
    protocol::ServerSession server(*backend, pm, bundle, opts.seed + 1000);
    auto client = make_client();
    auto out = transport::run_session_sim(server, client, transport::NetProfile::parse(net));
    print_outcome(out, bundle.frac_bits, transcript_path);
    return 0;
}

// --- bench ------------------------------------------------------------------

int cmd_bench(const CommonOpts& opts, const std::string& suite, const std::string& nets,
              const std::string& out_dir) {
    bench::BenchConfig cfg;
    cfg.backend = opts.backend_id();
    cfg.params_preset = opts.params;
    cfg.seed = opts.seed;
    cfg.nets.clear();
    std::stringstream ss(nets);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) cfg.nets.push_back(transport::NetProfile::parse(item));
    if (cfg.nets.empty()) cfg.nets.push_back(transport::NetProfile::parse("wan"));

    std::vector<std::string> suites;
    if (suite == "all") {
        suites = {"selection-micro", "comparison-micro", "forest-scaling", "single-tree-large"};
    } else {
        suites = {suite};
    }
    std::vector<bench::BenchReport> all;
    for (const auto& s : suites) {
        log_info("running suite " + s);
        auto reports = bench::run_suite(s, cfg);
        all.insert(all.end(), reports.begin(), reports.end());
    }
    std::cout << bench::reports_to_markdown(all);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream csv(out_dir + "/bench.csv");
        csv << bench::reports_to_csv(all);
        std::ofstream md(out_dir + "/bench.md");
        md << bench::reports_to_markdown(all);
        log_info("reports written to " + out_dir);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"private decision-tree inference over packed homomorphic encryption"};
    app.require_subcommand(1);

    CommonOpts keygen_opts, pack_opts, serve_opts, infer_opts, bench_opts;

    auto* keygen = app.add_subcommand("keygen", "generate key material files");
    std::string keygen_out = "keys";
    u32 keygen_block = 16;
    add_common(keygen, keygen_opts);
    keygen->add_option("--out", keygen_out, "output directory");
    keygen->add_option("--block", keygen_block, "block size M* the rotation keys must cover");

    auto* convert = app.add_subcommand("convert", "validate and normalize a model JSON file");
    std::string convert_in, convert_out = "model.normalized.json";
    convert->add_option("--model", convert_in, "input model JSON")->required();
    convert->add_option("--out", convert_out, "output path");

    auto* pack = app.add_subcommand("pack", "hide, lay out, and encode a model");
    std::string pack_model, pack_mode = "interleaved", pack_policy = "full", pack_out = "bundle";
    u32 pack_frac = 12;
    add_common(pack, pack_opts);
    pack->add_option("--model", pack_model, "model JSON path")->required();
    pack->add_option("--mode", pack_mode, "interleaved | adaptive");
    pack->add_option("--policy", pack_policy, "padding policy: full | fixed:<tau*>");
    pack->add_option("--frac-bits", pack_frac, "fixed-point fractional bits for weights");
    pack->add_option("--out", pack_out, "output directory");

    auto* serve = app.add_subcommand("serve", "run the evaluation server");
    std::string serve_packed = "bundle/packed.bin";
    u16 serve_port = 0;
    u32 serve_max = 0;
    add_common(serve, serve_opts);
    serve->add_option("--packed", serve_packed, "packed model path");
    serve->add_option("--port", serve_port, "TCP port (0 = ephemeral)");
    serve->add_option("--max-sessions", serve_max, "stop after N sessions (0 = run forever)");

    auto* infer = app.add_subcommand("infer", "run one inference as the client");
    std::string infer_connect, infer_packed, infer_net = "lan", infer_features, infer_keys,
                infer_transcript = "transcript.csv";
    add_common(infer, infer_opts);
    infer->add_option("--connect", infer_connect, "server address host:port (TCP transport)");
    infer->add_option("--packed", infer_packed, "packed model path (simulated transport)");
    infer->add_option("--net", infer_net, "network profile: lan|man|wan|name:bps:rtt_ms");
    infer->add_option("--features", infer_features, "feature CSV file or inline comma list")
        ->required();
    infer->add_option("--keys", infer_keys, "directory with pre-generated key files");
    infer->add_option("--transcript", infer_transcript, "transcript CSV output path");

    auto* benchc = app.add_subcommand("bench", "run benchmark suites");
    std::string bench_suite = "all", bench_nets = "lan,man,wan", bench_out = "bench-out";
    add_common(benchc, bench_opts);
    benchc->add_option("--suite", bench_suite,
                       "single-tree-large | forest-scaling | selection-micro | comparison-micro | all");
    benchc->add_option("--net", bench_nets, "comma-separated network profiles");
    benchc->add_option("--out", bench_out, "output directory for CSV and markdown");

    CLI11_PARSE(app, argc, argv);

    try {
        if (keygen->parsed()) return cmd_keygen(keygen_opts, keygen_out, keygen_block);
        if (convert->parsed()) return cmd_convert(convert_in, convert_out);
        if (pack->parsed())
            return cmd_pack(pack_opts, pack_model, pack_mode, pack_policy, pack_frac, pack_out);
        if (serve->parsed()) return cmd_serve(serve_opts, serve_packed, serve_port, serve_max);
        if (infer->parsed())
            return cmd_infer(infer_opts, infer_connect, infer_packed, infer_net, infer_features,
                             infer_keys, infer_transcript);
        if (benchc->parsed()) return cmd_bench(bench_opts, bench_suite, bench_nets, bench_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
