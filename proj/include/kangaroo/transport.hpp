// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kangaroo/wire.hpp"

namespace kangaroo::transport {

// ---------------------------------------------------------------------------
// Network profiles

struct NetProfile {
    std::string name = "lan";
    double bandwidth_bps = 1e9;
    double rtt_ms = 0.1;

    void validate() const {
        if (bandwidth_bps <= 0) throw ParamError("bandwidth must be positive");
        if (rtt_ms < 0) throw ParamError("RTT must be nonnegative");
    }

    /// "lan" | "man" | "wan" | "name:bandwidth_bps:rtt_ms"
    static NetProfile parse(const std::string& s) {
        if (s == "lan") return {"lan", 1e9, 0.1};
        if (s == "man") return {"man", 100e6, 6.0};
        if (s == "wan") return {"wan", 40e6, 80.0};
        auto c1 = s.find(':');
        auto c2 = s.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ParamError("network profile must be lan|man|wan or name:bps:rtt_ms");
        NetProfile p;
        p.name = s.substr(0, c1);
        p.bandwidth_bps = std::stod(s.substr(c1 + 1, c2 - c1 - 1));
        p.rtt_ms = std::stod(s.substr(c2 + 1));
        p.validate();
        return p;
    }
};

/// One-way delivery delay in milliseconds: half the RTT plus serialization.
inline double send_delay_ms(const NetProfile& p, u64 bytes) {
    return p.rtt_ms / 2.0 + double(bytes) * 8.0 * 1000.0 / p.bandwidth_bps;
}

// ---------------------------------------------------------------------------
// Transcript

struct TranscriptEntry {
    u64 seq = 0;
    bool client_to_server = true;
    MsgType type = MsgType::error;
    u64 bytes = 0;  // framed size
    double t_send_ms = 0;
    double t_recv_ms = 0;

    bool setup() const { return is_setup_type(type); }
};

struct Transcript {
    std::vector<TranscriptEntry> entries;

    u64 total_bytes(bool setup_traffic) const {
        u64 n = 0;
        for (const auto& e : entries)
            if (e.setup() == setup_traffic) n += e.bytes;
        return n;
    }
    u64 bytes_up(bool setup_traffic) const {
        u64 n = 0;
        for (const auto& e : entries)
            if (e.setup() == setup_traffic && e.client_to_server) n += e.bytes;
        return n;
    }
    u64 bytes_down(bool setup_traffic) const {
        u64 n = 0;
        for (const auto& e : entries)
            if (e.setup() == setup_traffic && !e.client_to_server) n += e.bytes;
        return n;
    }

    u32 query_messages() const {
        u32 n = 0;
        for (const auto& e : entries)
            if (!e.setup()) ++n;
        return n;
    }

    /// Wall time of the query exchange alone: first query-phase departure to
    /// last arrival. For the strictly alternating 8-message schedule this is
    /// exactly the sum of per-message RTT/2 + serialization delays.
    double query_duration_ms() const {
        double first = -1, last = 0;
        for (const auto& e : entries) {
            if (e.setup()) continue;
            if (first < 0) first = e.t_send_ms;
            last = std::max(last, e.t_recv_ms);
        }
        return first < 0 ? 0 : last - first;
    }

    /// Round trips of the query phase: direction runs / 2.
    u32 round_trips() const {
        u32 runs = 0;
        bool have_prev = false;
        bool prev_dir = false;
        for (const auto& e : entries) {
            if (e.setup()) continue;
            if (!have_prev || e.client_to_server != prev_dir) ++runs;
            prev_dir = e.client_to_server;
            have_prev = true;
        }
        return runs / 2;
    }

    double duration_ms() const {
        double t = 0;
        for (const auto& e : entries) t = std::max(t, e.t_recv_ms);
        return t;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "seq,direction,type,bytes,t_send_ms,t_recv_ms\n";
        for (const auto& e : entries)
            os << e.seq << ',' << (e.client_to_server ? "c2s" : "s2c") << ','
               << msg_type_name(e.type) << ',' << e.bytes << ',' << e.t_send_ms << ','
               << e.t_recv_ms << '\n';
        return os.str();
    }

    void write_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw Error(Stage::io, "cannot write transcript to " + path);
        f << to_csv();
    }
};

// ---------------------------------------------------------------------------
// Shaped in-process simulator on a single virtual clock. The link is
// full-duplex; sends from one endpoint serialize on its transmitter, so
// back-to-back messages queue while opposite directions never contend.

class SimNetwork {
public:
    explicit SimNetwork(NetProfile profile) : profile_(std::move(profile)) { profile_.validate(); }

    struct Delivery {
        double depart_ms;
        double arrive_ms;
    };

    /// Sends a frame from an endpoint whose local clock is `sender_clock_ms`;
    /// advances the clock past the serialization time.
    Delivery deliver(u64 framed_bytes, double& sender_clock_ms) const {
        double start = sender_clock_ms;
        double tx = double(framed_bytes) * 8.0 * 1000.0 / profile_.bandwidth_bps;
        sender_clock_ms = start + tx;
        return {start, start + tx + profile_.rtt_ms / 2.0};
    }

    const NetProfile& profile() const { return profile_; }

private:
    NetProfile profile_;
};

// ---------------------------------------------------------------------------
// TCP byte-stream transport (blocking sockets, frame-delimited).

class TcpStream {
public:
    TcpStream() = default;
    explicit TcpStream(int fd) : fd_(fd) {}
    TcpStream(TcpStream&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    TcpStream& operator=(TcpStream&& other) noexcept {
        if (this != &other) {
            close_fd();
            fd_ = other.fd_;
            other.fd_ = -1;
        }
        return *this;
    }
    ~TcpStream() { close_fd(); }

    bool valid() const { return fd_ >= 0; }

    void send_message(const Message& m, u32 max_payload = kDefaultMaxFrame) {
        auto bytes = frame(m, max_payload);
        size_t off = 0;
        while (off < bytes.size()) {
            ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n <= 0) throw WireError("tcp send failed");
            off += static_cast<size_t>(n);
        }
    }

    Message recv_message(u32 max_payload = kDefaultMaxFrame) {
        return read_frame(
            [this](u8* dst, size_t n) {
                size_t off = 0;
                while (off < n) {
                    ssize_t got = ::recv(fd_, dst + off, n - off, 0);
                    if (got == 0) throw WireError("tcp connection closed mid-frame");
                    if (got < 0) throw WireError("tcp recv failed");
                    off += static_cast<size_t>(got);
                }
            },
            max_payload);
    }

private:
    void close_fd() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }
    int fd_ = -1;
};

class TcpListener {
public:
    explicit TcpListener(u16 port = 0) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw WireError("socket() failed");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
            throw WireError("bind() failed");
        if (::listen(fd_, 16) != 0) throw WireError("listen() failed");
        socklen_t len = sizeof(addr);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }
    ~TcpListener() {
        if (fd_ >= 0) ::close(fd_);
    }

    u16 port() const { return port_; }

    TcpStream accept() {
        int c = ::accept(fd_, nullptr, nullptr);
        if (c < 0) throw WireError("accept() failed");
        return TcpStream(c);
    }

private:
    int fd_ = -1;
    u16 port_ = 0;
};

inline TcpStream tcp_connect(const std::string& host, u16 port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw WireError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw WireError("invalid address " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw WireError("connect() to " + host + ":" + std::to_string(port) + " failed");
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpStream(fd);
}

}  // namespace kangaroo::transport
