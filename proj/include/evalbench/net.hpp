// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Persistent TCP connections carrying protocol frames. Many requests may be
// in flight per connection; responses are matched by request id and may
// arrive out of order. A streamed call is a request frame followed by
// stream_item frames and one end_of_stream frame, all sharing the request id,
// in both directions.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evalbench/channel.hpp"
#include "evalbench/protocol.hpp"

namespace evalbench::net {

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port"; throws Error(Errc::validation).
    static Endpoint parse(std::string_view text);
    std::string to_string() const { return host + ":" + std::to_string(port); }
    friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// Handle to one server-side call. Streaming handlers read inbound items with
/// next_input() and may emit outbound items with send_item().
class CallContext {
public:
    const std::string& method() const noexcept { return method_; }
    const Json& params() const noexcept { return params_; }

    /// Blocks for the next inbound stream item; nullopt after end_of_stream.
    std::optional<Json> next_input();
    void send_item(const Json& item);

private:
    friend class RpcServer;
    friend class ServerConnection;
    std::string method_;
    Json params_;
    std::shared_ptr<Channel<Json>> inbound_;
    std::function<void(const Json&)> emit_;
};

using Handler = std::function<Json(CallContext&)>;

class ServerConnection;

class RpcServer {
public:
    explicit RpcServer(Endpoint bind = {});
    ~RpcServer();

    RpcServer(const RpcServer&) = delete;
    RpcServer& operator=(const RpcServer&) = delete;

    /// Unary handlers answer with a response frame; streaming handlers answer
    /// with stream items followed by end_of_stream carrying the return value.
    void handle(const std::string& method, Handler handler, bool streaming = false);

    void start();
    void stop();

    Endpoint endpoint() const;
    std::uint16_t port() const noexcept { return port_; }

private:
    friend class ServerConnection;
    struct Route {
        Handler handler;
        bool streaming = false;
    };
    const Route* route(const std::string& method) const;
    void accept_loop();

    Endpoint bind_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::map<std::string, Route> routes_;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex conns_mu_;
    std::vector<std::shared_ptr<ServerConnection>> conns_;
};

class RpcClient;

/// Client side of a streamed call.
class CallStream {
public:
    void send(const Json& item);
    /// Sends end_of_stream for the outbound direction.
    void finish();
    /// Next inbound item; nullopt once the server terminated the stream.
    std::optional<Json> next_item();
    /// Terminal body; throws the remote Error if the call failed.
    Json result();
    std::uint64_t request_id() const noexcept { return id_; }

private:
    friend class RpcClient;
    struct State;
    std::shared_ptr<RpcClient> client_;
    std::shared_ptr<State> state_;
    std::uint64_t id_ = 0;
    bool finished_ = false;
};

class RpcClient : public std::enable_shared_from_this<RpcClient> {
public:
    /// Throws Error(Errc::transport) if the endpoint cannot be reached.
    static std::shared_ptr<RpcClient> connect(const Endpoint& ep,
                                              std::chrono::milliseconds timeout = std::chrono::seconds(5));
    ~RpcClient();

    RpcClient(const RpcClient&) = delete;
    RpcClient& operator=(const RpcClient&) = delete;

    /// Unary call. Remote failures rethrow as Error with the remote code.
    Json call(const std::string& method, const Json& params,
              std::chrono::milliseconds timeout = std::chrono::seconds(60));
    std::future<Json> call_async(const std::string& method, const Json& params);
    std::unique_ptr<CallStream> open_stream(const std::string& method, const Json& params);

    bool connected() const noexcept { return connected_.load(); }
    void close();
    const Endpoint& endpoint() const noexcept { return endpoint_; }

private:
    friend class CallStream;
    RpcClient() = default;
    void read_loop();
    void write_frame(const Frame& f);
    void fail_all(const std::string& why);

    Endpoint endpoint_;
    int fd_ = -1;
    std::atomic<bool> connected_{false};
    std::atomic<std::uint64_t> next_id_{1};
    std::mutex write_mu_;
    std::mutex pending_mu_;
    std::map<std::uint64_t, std::shared_ptr<std::promise<Json>>> unary_;
    std::map<std::uint64_t, std::shared_ptr<CallStream::State>> streams_;
    std::thread reader_;
};

/// Raises the Error encoded in an error frame body.
[[noreturn]] void throw_remote_error(const std::string& body);

} // namespace evalbench::net
