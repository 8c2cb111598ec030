// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kangaroo/layout.hpp"

namespace kangaroo::model {

/// Everything the server publishes to clients: structure indices, the slot
/// map, quantization ranges, and the precision parameter. Carries no
/// thresholds, weights, flips, or statuses.
struct PublicBundle {
    u32 feature_count = 0;
    u32 block = 1;  // M*
    u32 frac_bits = 12;
    SlotLayout::Mode mode = SlotLayout::Mode::interleaved;
    u32 slot_count = 0;
    u32 group_count = 0;
    u64 zeta = 0;
    u64 plain_modulus = 0;
    std::vector<double> x_min, x_max;
    std::vector<std::vector<u64>> structure;   // T*_s per tree
    std::vector<std::vector<u64>> node_slots;  // per tree, global slots
    std::vector<std::vector<u64>> leaf_slots;  // per tree, global slots

    u32 tree_count() const { return static_cast<u32>(structure.size()); }

    QuantizationSpec quantization() const { return QuantizationSpec(x_min, x_max, zeta); }
};

inline PublicBundle make_public_bundle(const PackedModel& pm, const QuantizationSpec& spec) {
    PublicBundle b;
    b.feature_count = pm.feature_count;
    b.block = pm.layout.block;
    b.frac_bits = pm.frac_bits;
    b.mode = pm.layout.mode;
    b.slot_count = pm.layout.slot_count;
    b.group_count = pm.layout.group_count;
    b.zeta = pm.zeta;
    b.plain_modulus = pm.plain_modulus;
    b.x_min = spec.x_min;
    b.x_max = spec.x_max;
    b.structure = pm.structure;
    b.node_slots = pm.layout.node_slots;
    b.leaf_slots = pm.layout.leaf_slots;
    return b;
}

inline nlohmann::json bundle_to_json(const PublicBundle& b) {
    nlohmann::json j;
    j["version"] = 1;
    j["feature_count"] = b.feature_count;
    j["block"] = b.block;
    j["frac_bits"] = b.frac_bits;
    j["mode"] = b.mode == SlotLayout::Mode::interleaved ? "interleaved" : "adaptive";
    j["slot_count"] = b.slot_count;
    j["group_count"] = b.group_count;
    j["zeta"] = b.zeta;
    j["plain_modulus"] = b.plain_modulus;
    j["x_min"] = b.x_min;
    j["x_max"] = b.x_max;
    j["trees"] = nlohmann::json::array();
    for (size_t k = 0; k < b.structure.size(); ++k) {
        nlohmann::json t;
        t["structure"] = b.structure[k];
        t["node_slots"] = b.node_slots[k];
        t["leaf_slots"] = b.leaf_slots[k];
        j["trees"].push_back(std::move(t));
    }
    return j;
}

inline PublicBundle bundle_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw Error(Stage::io, "unsupported bundle version");
    PublicBundle b;
    b.feature_count = j.at("feature_count").get<u32>();
    b.block = j.at("block").get<u32>();
    b.frac_bits = j.at("frac_bits").get<u32>();
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "interleaved")
        b.mode = SlotLayout::Mode::interleaved;
    else if (mode == "adaptive")
        b.mode = SlotLayout::Mode::adaptive;
    else
        throw Error(Stage::io, "unknown layout mode " + mode);
    b.slot_count = j.at("slot_count").get<u32>();
    b.group_count = j.at("group_count").get<u32>();
    b.zeta = j.at("zeta").get<u64>();
    b.plain_modulus = j.at("plain_modulus").get<u64>();
    b.x_min = j.at("x_min").get<std::vector<double>>();
    b.x_max = j.at("x_max").get<std::vector<double>>();
    for (const auto& t : j.at("trees")) {
        b.structure.push_back(t.at("structure").get<std::vector<u64>>());
        b.node_slots.push_back(t.at("node_slots").get<std::vector<u64>>());
        b.leaf_slots.push_back(t.at("leaf_slots").get<std::vector<u64>>());
    }
    return b;
}

inline std::vector<u8> bundle_to_bytes(const PublicBundle& b) {
    std::string s = bundle_to_json(b).dump();
    return std::vector<u8>(s.begin(), s.end());
}

inline PublicBundle bundle_from_bytes(const std::vector<u8>& bytes) {
    return bundle_from_json(nlohmann::json::parse(std::string(bytes.begin(), bytes.end())));
}

/// FNV-1a digest of the canonical bundle encoding; both parties compare it
/// before evaluating so mismatched bundles abort with a stage tag instead of
/// producing garbage.
inline u64 bundle_digest(const PublicBundle& b) {
    auto bytes = bundle_to_bytes(b);
    u64 h = 1469598103934665603ull;
    for (u8 c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace kangaroo::model
