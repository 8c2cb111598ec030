// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <thread>

#include "kangaroo/session.hpp"
#include "kangaroo/transport.hpp"

namespace kangaroo::transport {

using protocol::ClientSession;
using protocol::ServerSession;

struct SessionOutcome {
    i64 pi_fixed = 0;
    u64 pi_residue = 0;
    double pi = 0;
    Transcript transcript;
    protocol::StageTimings client_timings;
    protocol::StageTimings server_timings;
    std::vector<phe::PlainVec> decrypt_trace;
};

// ---------------------------------------------------------------------------
// Simulated transport: single virtual clock, transit-only time model. The
// endpoint compute time is reported separately in the stage timings.

inline SessionOutcome run_session_sim(ServerSession& server, ClientSession& client,
                                      const NetProfile& profile) {
    SimNetwork net(profile);
    SessionOutcome out;
    double client_clock = 0, server_clock = 0;

    std::deque<Message> inbox_server, inbox_client;
    inbox_server.push_back(client.start());
    while (!client.finished()) {
        bool progressed = false;
        while (!inbox_server.empty()) {
            Message m = std::move(inbox_server.front());
            inbox_server.pop_front();
            u64 framed = 13 + m.payload.size();
            auto d = net.deliver(framed, client_clock);
            server_clock = std::max(server_clock, d.arrive_ms);
            out.transcript.entries.push_back(
                {m.seq, true, m.type, framed, d.depart_ms, d.arrive_ms});
            for (auto& reply : server.on_message(m)) inbox_client.push_back(std::move(reply));
            server.precompute();
            progressed = true;
        }
        while (!inbox_client.empty()) {
            Message m = std::move(inbox_client.front());
            inbox_client.pop_front();
            u64 framed = 13 + m.payload.size();
            auto d = net.deliver(framed, server_clock);
            client_clock = std::max(client_clock, d.arrive_ms);
            out.transcript.entries.push_back(
                {m.seq, false, m.type, framed, d.depart_ms, d.arrive_ms});
            for (auto& reply : client.on_message(m)) inbox_server.push_back(std::move(reply));
            client.precompute();
            progressed = true;
        }
        if (!progressed) throw StateError("protocol stalled");
    }
    out.pi_fixed = client.result_fixed();
    out.pi_residue = client.result_residue();
    out.pi = client.result();
    out.client_timings = client.timings();
    out.server_timings = server.timings();
    out.decrypt_trace = client.decrypt_trace();
    return out;
}

// ---------------------------------------------------------------------------
// TCP transport: the server side pumps one session over an accepted stream;
// the client drives its session over a connected stream. Timestamps are real
// wall-clock milliseconds from the client's start.

inline void serve_session_tcp(TcpStream& stream, ServerSession& server) {
    while (!server.finished()) {
        Message in = stream.recv_message();
        try {
            for (auto& reply : server.on_message(in)) stream.send_message(reply);
        } catch (const Error& e) {
            Message err;
            err.type = MsgType::error;
            err.seq = ~u64(0);
            err.payload.push_back(static_cast<u8>(e.stage()));
            std::string what = e.what();
            put_blob(err.payload, std::vector<u8>(what.begin(), what.end()));
            stream.send_message(err);
            throw;
        }
        server.precompute();
    }
}

inline SessionOutcome run_session_tcp(TcpStream& stream, ClientSession& client) {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    auto now_ms = [&] {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };
    SessionOutcome out;

    auto send_all = [&](std::vector<Message> msgs) {
        for (auto& m : msgs) {
            double t = now_ms();
            stream.send_message(m);
            out.transcript.entries.push_back(
                {m.seq, true, m.type, 13 + m.payload.size(), t, now_ms()});
        }
    };

    send_all({client.start()});
    while (!client.finished()) {
        double t = now_ms();
        Message in = stream.recv_message();
        out.transcript.entries.push_back(
            {in.seq, false, in.type, 13 + in.payload.size(), t, now_ms()});
        send_all(client.on_message(in));
        client.precompute();
    }
    out.pi_fixed = client.result_fixed();
    out.pi_residue = client.result_residue();
    out.pi = client.result();
    out.client_timings = client.timings();
    out.decrypt_trace = client.decrypt_trace();
    return out;
}

/// Loopback convenience: spawns the server on a thread and runs one query.
inline SessionOutcome run_session_loopback(ServerSession& server, ClientSession& client) {
    TcpListener listener(0);
    std::exception_ptr server_error;
    std::thread server_thread([&] {
        try {
            TcpStream s = listener.accept();
            serve_session_tcp(s, server);
        } catch (...) {
            server_error = std::current_exception();
        }
    });
    SessionOutcome out;
    std::exception_ptr client_error;
    try {
        TcpStream c = tcp_connect("127.0.0.1", listener.port());
        out = run_session_tcp(c, client);
    } catch (...) {
        client_error = std::current_exception();
    }
    server_thread.join();
    if (client_error) std::rethrow_exception(client_error);
    if (server_error && !client.finished()) std::rethrow_exception(server_error);
    return out;
}

}  // namespace kangaroo::transport
