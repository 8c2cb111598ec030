// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "kangaroo/bundle.hpp"
#include "kangaroo/wire.hpp"

namespace kangaroo::model {

// ---------------------------------------------------------------------------
// Model ingestion: JSON document with feature ranges and explicit-id trees.
//
// { "feature_count": M,
//   "features": [ {"name": "...", "min": a, "max": b}, ... ],
//   "trees": [ { "nodes":  [ {"id", "feature", "threshold", "left", "right"}, ... ],
//               "leaves": [ {"id", "weight"}, ... ] }, ... ] }
//
// left/right reference node or leaf ids; the root is the node no other node
// references.

struct ModelDocument {
    u32 feature_count = 0;
    std::vector<std::string> feature_names;
    std::vector<double> x_min, x_max;
    std::vector<DecisionTree> trees;

    QuantizationSpec quantization(u64 zeta) const { return QuantizationSpec(x_min, x_max, zeta); }
};

inline DecisionTree tree_from_json(const nlohmann::json& jt, u32 feature_count) {
    DecisionTree t;
    t.feature_count = feature_count;
    std::map<i64, size_t> node_by_id, leaf_by_id;
    const auto& jnodes = jt.at("nodes");
    const auto& jleaves = jt.at("leaves");
    for (size_t i = 0; i < jnodes.size(); ++i) {
        i64 id = jnodes[i].at("id").get<i64>();
        if (!node_by_id.emplace(id, i).second)
            throw Error(Stage::model, "duplicate node id " + std::to_string(id));
    }
    for (size_t i = 0; i < jleaves.size(); ++i) {
        i64 id = jleaves[i].at("id").get<i64>();
        if (node_by_id.count(id) || !leaf_by_id.emplace(id, i).second)
            throw Error(Stage::model, "duplicate leaf id " + std::to_string(id));
        t.leaf_weights.push_back(jleaves[i].at("weight").get<double>());
    }

    std::vector<int> referenced(jnodes.size(), 0);
    auto resolve = [&](i64 id) -> ChildRef {
        if (auto it = node_by_id.find(id); it != node_by_id.end()) {
            ++referenced[it->second];
            return static_cast<ChildRef>(it->second);
        }
        if (auto it = leaf_by_id.find(id); it != leaf_by_id.end()) return leaf_ref(it->second);
        throw Error(Stage::model, "child id " + std::to_string(id) + " not found");
    };
    t.nodes.resize(jnodes.size());
    for (size_t i = 0; i < jnodes.size(); ++i) {
        TreeNode n;
        n.feature = jnodes[i].at("feature").get<u32>();
        n.threshold = jnodes[i].at("threshold").get<double>();
        n.left = resolve(jnodes[i].at("left").get<i64>());
        n.right = resolve(jnodes[i].at("right").get<i64>());
        t.nodes[i] = n;
    }

    // root = the unreferenced node; rotate it to index 0
    size_t root = jnodes.size();
    for (size_t i = 0; i < referenced.size(); ++i) {
        if (referenced[i] == 0) {
            if (root != jnodes.size()) throw Error(Stage::model, "multiple root candidates");
            root = i;
        }
    }
    if (root == jnodes.size()) throw Error(Stage::model, "no root node (reference cycle?)");
    if (root != 0) {
        std::swap(t.nodes[0], t.nodes[root]);
        for (auto& n : t.nodes) {
            for (ChildRef* c : {&n.left, &n.right}) {
                if (!is_leaf(*c)) {
                    if (*c == 0)
                        *c = static_cast<ChildRef>(root);
                    else if (*c == static_cast<ChildRef>(root))
                        *c = 0;
                }
            }
        }
    }
    t.validate();
    return t;
}

inline ModelDocument model_from_json(const nlohmann::json& j) {
    ModelDocument doc;
    doc.feature_count = j.at("feature_count").get<u32>();
    const auto& jf = j.at("features");
    if (jf.size() != doc.feature_count)
        throw Error(Stage::model, "features array size disagrees with feature_count");
    for (const auto& f : jf) {
        doc.feature_names.push_back(f.value("name", ""));
        doc.x_min.push_back(f.at("min").get<double>());
        doc.x_max.push_back(f.at("max").get<double>());
        if (!(doc.x_max.back() > doc.x_min.back()))
            throw Error(Stage::model, "degenerate range for feature " + doc.feature_names.back());
    }
    for (const auto& jt : j.at("trees")) doc.trees.push_back(tree_from_json(jt, doc.feature_count));
    if (doc.trees.empty()) throw Error(Stage::model, "model has no trees");
    return doc;
}

inline nlohmann::json model_to_json(const ModelDocument& doc) {
    nlohmann::json j;
    j["feature_count"] = doc.feature_count;
    j["features"] = nlohmann::json::array();
    for (size_t f = 0; f < doc.feature_count; ++f) {
        j["features"].push_back({{"name", f < doc.feature_names.size() ? doc.feature_names[f] : ""},
                                 {"min", doc.x_min[f]},
                                 {"max", doc.x_max[f]}});
    }
    j["trees"] = nlohmann::json::array();
    for (const auto& t : doc.trees) {
        nlohmann::json jt;
        jt["nodes"] = nlohmann::json::array();
        jt["leaves"] = nlohmann::json::array();
        // node ids 1..tau, leaf ids tau+1..
        i64 leaf_base = static_cast<i64>(t.nodes.size()) + 1;
        auto encode_ref = [&](ChildRef c) -> i64 {
            return is_leaf(c) ? leaf_base + static_cast<i64>(leaf_index(c))
                              : static_cast<i64>(c) + 1;
        };
        for (size_t i = 0; i < t.nodes.size(); ++i) {
            const auto& n = t.nodes[i];
            jt["nodes"].push_back({{"id", static_cast<i64>(i) + 1},
                                   {"feature", n.feature},
                                   {"threshold", n.threshold},
                                   {"left", encode_ref(n.left)},
                                   {"right", encode_ref(n.right)}});
        }
        for (size_t l = 0; l < t.leaf_weights.size(); ++l)
            jt["leaves"].push_back(
                {{"id", leaf_base + static_cast<i64>(l)}, {"weight", t.leaf_weights[l]}});
        j["trees"].push_back(std::move(jt));
    }
    return j;
}

inline ModelDocument load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(Stage::io, "cannot open model file " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Stage::model, std::string("model JSON parse error: ") + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Stage::model, std::string("model schema violation: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Packed model bundle: versioned binary container.

inline std::vector<u8> packed_model_to_bytes(const PackedModel& pm) {
    std::vector<u8> p;
    auto put_vec = [&](const phe::PlainVec& v) {
        phe::put_u32(p, static_cast<u32>(v.size()));
        for (u64 x : v.slots) phe::put_u64(p, x);
    };
    auto put_u64vec = [&](const std::vector<u64>& v) {
        phe::put_u32(p, static_cast<u32>(v.size()));
        for (u64 x : v) phe::put_u64(p, x);
    };
    phe::put_u32(p, pm.feature_count);
    phe::put_u32(p, pm.frac_bits);
    phe::put_u64(p, pm.plain_modulus);
    phe::put_u64(p, pm.zeta);
    p.push_back(pm.layout.mode == SlotLayout::Mode::interleaved ? 0 : 1);
    phe::put_u32(p, pm.layout.block);
    phe::put_u32(p, pm.layout.slot_count);
    phe::put_u32(p, pm.layout.group_count);
    phe::put_u32(p, static_cast<u32>(pm.thresholds.size()));
    for (size_t g = 0; g < pm.thresholds.size(); ++g) {
        put_vec(pm.thresholds[g]);
        put_vec(pm.weights[g]);
        put_vec(pm.flips[g]);
        put_vec(pm.statuses[g]);
        put_vec(pm.node_mask[g]);
    }
    phe::put_u32(p, static_cast<u32>(pm.selection_masks.size()));
    for (const auto& m : pm.selection_masks) put_vec(m);
    phe::put_u32(p, pm.tree_count());
    for (u32 k = 0; k < pm.tree_count(); ++k) {
        phe::put_u32(p, pm.tau_star[k]);
        put_u64vec(pm.structure[k]);
        put_u64vec(pm.layout.node_slots[k]);
        put_u64vec(pm.layout.leaf_slots[k]);
    }
    return phe::wrap_container(phe::BackendId::transparent, p);
}

inline PackedModel packed_model_from_bytes(const std::vector<u8>& bytes) {
    auto view = phe::parse_container(bytes);
    transport::PayloadReader r(bytes);
    r.pos = 14;  // past the container header
    (void)view;
    auto get_vec = [&]() {
        u32 n = r.get_u32();
        phe::PlainVec v(n, 0);
        for (u32 i = 0; i < n; ++i) v.slots[i] = r.get_u64();
        return v;
    };
    auto get_u64vec = [&]() {
        u32 n = r.get_u32();
        std::vector<u64> v(n);
        for (u32 i = 0; i < n; ++i) v[i] = r.get_u64();
        return v;
    };
    PackedModel pm;
    pm.feature_count = r.get_u32();
    pm.frac_bits = r.get_u32();
    pm.plain_modulus = r.get_u64();
    pm.zeta = r.get_u64();
    pm.layout.mode = r.get_u8() == 0 ? SlotLayout::Mode::interleaved : SlotLayout::Mode::adaptive;
    pm.layout.block = r.get_u32();
    pm.layout.slot_count = r.get_u32();
    pm.layout.group_count = r.get_u32();
    u32 groups = r.get_u32();
    for (u32 g = 0; g < groups; ++g) {
        pm.thresholds.push_back(get_vec());
        pm.weights.push_back(get_vec());
        pm.flips.push_back(get_vec());
        pm.statuses.push_back(get_vec());
        pm.node_mask.push_back(get_vec());
    }
    u32 masks = r.get_u32();
    for (u32 i = 0; i < masks; ++i) pm.selection_masks.push_back(get_vec());
    u32 trees = r.get_u32();
    for (u32 k = 0; k < trees; ++k) {
        pm.tau_star.push_back(r.get_u32());
        pm.structure.push_back(get_u64vec());
        pm.layout.node_slots.push_back(get_u64vec());
        pm.layout.leaf_slots.push_back(get_u64vec());
    }
    r.expect_end();
    pm.layout.audit();
    return pm;
}

inline void write_file(const std::string& path, const std::vector<u8>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Stage::io, "cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<u8> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Stage::io, "cannot read " + path);
    return std::vector<u8>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Shape-matched synthetic models: tree shapes, not learned splits, drive the
// protocol cost, so benchmarks generate (M, D, tau)-shaped forests with
// seeded randomness.

struct DatasetShape {
    std::string name;
    u32 features;
    u32 depth;
    u32 decision_nodes;
};

inline DatasetShape dataset_shape(const std::string& name) {
    if (name == "digits") return {"digits", 47, 15, 168};
    if (name == "diabetes") return {"diabetes", 10, 28, 393};
    if (name == "boston") return {"boston", 13, 30, 425};
    throw ParamError("unknown dataset shape: " + name);
}

inline ModelDocument synthetic_model(const DatasetShape& shape, u32 tree_count, Rng& rng,
                                     double weight_lo = -10.0, double weight_hi = 10.0) {
    ModelDocument doc;
    doc.feature_count = shape.features;
    for (u32 f = 0; f < shape.features; ++f) {
        doc.feature_names.push_back("f" + std::to_string(f + 1));
        doc.x_min.push_back(0.0);
        doc.x_max.push_back(1.0);
    }
    for (u32 k = 0; k < tree_count; ++k) {
        TreeShape ts;
        ts.feature_count = shape.features;
        ts.decision_count = shape.decision_nodes;
        ts.max_depth = shape.depth + 1;  // leaves one level below the deepest node
        ts.weight_lo = weight_lo;
        ts.weight_hi = weight_hi;
        doc.trees.push_back(random_tree(ts, rng));
    }
    return doc;
}

}  // namespace kangaroo::model
