// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "kangaroo/core.hpp"
#include "kangaroo/phe.hpp"

namespace kangaroo::transport {

enum class MsgType : u8 {
    hello = 1,
    public_bundle = 2,
    query = 3,
    compare_blinded = 4,
    compare_result = 5,
    path_blinded = 6,
    path_costs = 7,
    path_cmp_blinded = 8,
    path_cmp_result = 9,
    response = 10,
    error = 11,
};

inline const char* msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::hello: return "Hello";
        case MsgType::public_bundle: return "PublicBundle";
        case MsgType::query: return "Query";
        case MsgType::compare_blinded: return "CompareBlinded";
        case MsgType::compare_result: return "CompareResult";
        case MsgType::path_blinded: return "PathBlinded";
        case MsgType::path_costs: return "PathCosts";
        case MsgType::path_cmp_blinded: return "PathCmpBlinded";
        case MsgType::path_cmp_result: return "PathCmpResult";
        case MsgType::response: return "Response";
        case MsgType::error: return "Error";
    }
    return "Unknown";
}

inline bool is_setup_type(MsgType t) { return t == MsgType::hello || t == MsgType::public_bundle; }

struct Message {
    MsgType type = MsgType::error;
    u64 seq = 0;
    std::vector<u8> payload;
};

inline constexpr u32 kDefaultMaxFrame = 64u << 20;  // 64 MiB payload cap

/// Bit-exact framing: 4-byte little-endian payload length, 1-byte type tag,
/// 8-byte sequence number, payload.
inline std::vector<u8> frame(const Message& m, u32 max_payload = kDefaultMaxFrame) {
    if (m.payload.size() > max_payload) throw WireError("frame payload exceeds configured maximum");
    std::vector<u8> out;
    out.reserve(13 + m.payload.size());
    phe::put_u32(out, static_cast<u32>(m.payload.size()));
    out.push_back(static_cast<u8>(m.type));
    phe::put_u64(out, m.seq);
    out.insert(out.end(), m.payload.begin(), m.payload.end());
    return out;
}

inline bool known_tag(u8 t) { return t >= 1 && t <= 11; }

/// Deframe from a whole buffer; returns bytes consumed via `used`.
inline Message deframe(const std::vector<u8>& bytes, size_t offset, size_t* used,
                       u32 max_payload = kDefaultMaxFrame) {
    if (bytes.size() - offset < 13) throw WireError("truncated frame header");
    u32 len = phe::get_u32(bytes.data() + offset);
    if (len > max_payload) throw WireError("frame length overflow");
    u8 tag = bytes[offset + 4];
    if (!known_tag(tag)) throw WireError("unknown frame tag " + std::to_string(int(tag)));
    if (bytes.size() - offset - 13 < len) throw WireError("truncated frame payload");
    Message m;
    m.type = static_cast<MsgType>(tag);
    m.seq = phe::get_u64(bytes.data() + offset + 5);
    m.payload.assign(bytes.begin() + static_cast<i64>(offset) + 13,
                     bytes.begin() + static_cast<i64>(offset) + 13 + len);
    *used = 13 + size_t(len);
    return m;
}

/// Incremental reader driven by an "exactly n bytes" callback (TCP path).
inline Message read_frame(const std::function<void(u8*, size_t)>& read_exact,
                          u32 max_payload = kDefaultMaxFrame) {
    u8 header[13];
    read_exact(header, 13);
    u32 len = phe::get_u32(header);
    if (len > max_payload) throw WireError("frame length overflow");
    if (!known_tag(header[4])) throw WireError("unknown frame tag " + std::to_string(int(header[4])));
    Message m;
    m.type = static_cast<MsgType>(header[4]);
    m.seq = phe::get_u64(header + 5);
    m.payload.resize(len);
    if (len) read_exact(m.payload.data(), len);
    return m;
}

// ---------------------------------------------------------------------------
// Payload helpers: lists of ciphertext blobs, and small scalar fields.

inline void put_blob(std::vector<u8>& out, const std::vector<u8>& blob) {
    phe::put_u32(out, static_cast<u32>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
}

struct PayloadReader {
    const std::vector<u8>& bytes;
    size_t pos = 0;

    explicit PayloadReader(const std::vector<u8>& b) : bytes(b) {}

    void need(size_t n) const {
        if (bytes.size() - pos < n) throw WireError("payload truncated");
    }
    u8 get_u8() {
        need(1);
        return bytes[pos++];
    }
    u32 get_u32() {
        need(4);
        u32 v = phe::get_u32(bytes.data() + pos);
        pos += 4;
        return v;
    }
    u64 get_u64() {
        need(8);
        u64 v = phe::get_u64(bytes.data() + pos);
        pos += 8;
        return v;
    }
    std::vector<u8> get_blob() {
        u32 len = get_u32();
        need(len);
        std::vector<u8> out(bytes.begin() + static_cast<i64>(pos),
                            bytes.begin() + static_cast<i64>(pos) + len);
        pos += len;
        return out;
    }
    void expect_end() const {
        if (pos != bytes.size()) throw WireError("payload trailing bytes");
    }
};

inline std::vector<u8> pack_ct_list(const phe::Backend& be, const std::vector<phe::Ciphertext>& cts) {
    std::vector<u8> out;
    phe::put_u32(out, static_cast<u32>(cts.size()));
    for (const auto& c : cts) put_blob(out, be.serialize_ct(c));
    return out;
}

inline std::vector<phe::Ciphertext> unpack_ct_list(const phe::Backend& be,
                                                   PayloadReader& reader) {
    u32 n = reader.get_u32();
    std::vector<phe::Ciphertext> out;
    out.reserve(n);
    for (u32 i = 0; i < n; ++i) out.push_back(be.deserialize_ct(reader.get_blob()));
    return out;
}

}  // namespace kangaroo::transport
