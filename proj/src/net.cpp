// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstring>

#include "evalbench/error.hpp"

namespace evalbench::net {

namespace {

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

Json parse_body(const std::string& body) {
    if (body.empty()) return Json::object();
    return Json::parse(body);
}

} // namespace

Endpoint Endpoint::parse(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
        throw Error(Errc::validation, "endpoint must be host:port, got '" + std::string(text) + "'");
    }
    Endpoint ep;
    ep.host = std::string(text.substr(0, colon));
    auto port_text = text.substr(colon + 1);
    unsigned port = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
        throw Error(Errc::validation, "bad port in '" + std::string(text) + "'");
    }
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

[[noreturn]] void throw_remote_error(const std::string& body) {
    Json j;
    try {
        j = Json::parse(body);
    } catch (...) {
        throw Error(Errc::transport, "malformed error frame");
    }
    throw Error(errc_from_name(j.value("code", std::string("InternalError"))), j.value("message", std::string{}));
}

// ---------------------------------------------------------------------------
// CallContext

std::optional<Json> CallContext::next_input() {
    if (!inbound_) return std::nullopt;
    return inbound_->pop();
}

void CallContext::send_item(const Json& item) {
    if (emit_) emit_(item);
}

// ---------------------------------------------------------------------------
// Server side

class ServerConnection : public std::enable_shared_from_this<ServerConnection> {
public:
    ServerConnection(RpcServer& server, int fd) : server_(server), fd_(fd) {}
    ~ServerConnection() {
        if (fd_ >= 0) ::close(fd_);
    }

    void start() { reader_ = std::thread([self = shared_from_this()] { self->read_loop(); }); }

    void shutdown() { ::shutdown(fd_, SHUT_RDWR); }

    void join() {
        if (reader_.joinable()) reader_.join();
        std::unique_lock lock(mu_);
        idle_.wait(lock, [&] { return active_ == 0; });
    }

    bool done() const { return finished_.load(); }

private:
    void send(const Frame& f) {
        std::lock_guard lock(write_mu_);
        send_all(fd_, encode_frame(f));
    }

    void read_loop() {
        FrameDecoder decoder;
        char buf[64 * 1024];
        try {
            while (true) {
                ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
                if (n < 0 && errno == EINTR) continue;
                if (n <= 0) break;
                decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
                while (auto frame = decoder.next()) dispatch(std::move(*frame));
            }
        } catch (const std::exception&) {
            // malformed stream: drop the connection
        }
        std::lock_guard lock(mu_);
        for (auto& [id, ch] : inbound_) ch->close();
        inbound_.clear();
        finished_ = true;
    }

    void dispatch(Frame frame) {
        switch (frame.kind) {
        case FrameKind::request: start_call(std::move(frame)); break;
        case FrameKind::stream_item: {
            std::shared_ptr<Channel<Json>> ch;
            {
                std::lock_guard lock(mu_);
                auto it = inbound_.find(frame.request_id);
                if (it != inbound_.end()) ch = it->second;
            }
            if (ch) {
                try {
                    ch->push(parse_body(frame.body));
                } catch (const Json::exception&) {
                    ch->close();
                }
            }
            break;
        }
        case FrameKind::end_of_stream: {
            std::lock_guard lock(mu_);
            auto it = inbound_.find(frame.request_id);
            if (it != inbound_.end()) {
                it->second->close();
                inbound_.erase(it);
            }
            break;
        }
        default: break;
        }
    }

    void start_call(Frame frame) {
        const std::uint64_t id = frame.request_id;
        auto ctx = std::make_shared<CallContext>();
        Json body;
        try {
            body = parse_body(frame.body);
            ctx->method_ = body.at("method").get<std::string>();
            ctx->params_ = body.value("params", Json::object());
        } catch (const Json::exception& e) {
            send(Frame{id, FrameKind::error, encode_error_body("DecodeError", e.what())});
            return;
        }
        const RpcServer::Route* route = server_.route(ctx->method_);
        if (!route) {
            send(Frame{id, FrameKind::error, encode_error_body("NotFound", "unknown method '" + ctx->method_ + "'")});
            return;
        }
        const bool streaming = route->streaming;
        if (streaming) {
            ctx->inbound_ = std::make_shared<Channel<Json>>();
            std::lock_guard lock(mu_);
            inbound_[id] = ctx->inbound_;
        }
        std::weak_ptr<ServerConnection> weak = weak_from_this();
        ctx->emit_ = [weak, id](const Json& item) {
            if (auto self = weak.lock()) self->send(Frame{id, FrameKind::stream_item, item.dump()});
        };
        {
            std::lock_guard lock(mu_);
            ++active_;
        }
        Handler handler = route->handler;
        std::thread([self = shared_from_this(), ctx, handler, id, streaming] {
            Frame reply{id, streaming ? FrameKind::end_of_stream : FrameKind::response, {}};
            try {
                reply.body = handler(*ctx).dump();
            } catch (const Error& e) {
                reply = Frame{id, FrameKind::error, encode_error_body(errc_name(e.code()), e.what())};
            } catch (const std::exception& e) {
                reply = Frame{id, FrameKind::error, encode_error_body("InternalError", e.what())};
            }
            if (ctx->inbound_) {
                ctx->inbound_->close();
                std::lock_guard lock(self->mu_);
                self->inbound_.erase(id);
            }
            self->send(reply);
            std::lock_guard lock(self->mu_);
            if (--self->active_ == 0) self->idle_.notify_all();
        }).detach();
    }

    RpcServer& server_;
    int fd_;
    std::thread reader_;
    std::mutex write_mu_;
    std::mutex mu_;
    std::condition_variable idle_;
    int active_ = 0;
    std::map<std::uint64_t, std::shared_ptr<Channel<Json>>> inbound_;
    std::atomic<bool> finished_{false};
};

RpcServer::RpcServer(Endpoint bind) : bind_(std::move(bind)) {}

RpcServer::~RpcServer() { stop(); }

void RpcServer::handle(const std::string& method, Handler handler, bool streaming) {
    routes_[method] = Route{std::move(handler), streaming};
}

const RpcServer::Route* RpcServer::route(const std::string& method) const {
    auto it = routes_.find(method);
    return it == routes_.end() ? nullptr : &it->second;
}

void RpcServer::start() {
    if (running_) return;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(bind_.port);
    if (::getaddrinfo(bind_.host.empty() ? nullptr : bind_.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw Error(Errc::transport, "cannot resolve bind address " + bind_.to_string());
    }
    listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (listen_fd_ < 0 || ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 128) != 0) {
        int err = errno;
        ::freeaddrinfo(res);
        if (listen_fd_ >= 0) ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(Errc::transport, "cannot listen on " + bind_.to_string() + ": " + std::strerror(err));
    }
    ::freeaddrinfo(res);
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void RpcServer::accept_loop() {
    while (running_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        int r = ::poll(&pfd, 1, 100);
        if (r <= 0) continue;
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        set_nodelay(fd);
        auto conn = std::make_shared<ServerConnection>(*this, fd);
        std::lock_guard lock(conns_mu_);
        // reap finished connections
        for (auto it = conns_.begin(); it != conns_.end();) {
            if ((*it)->done()) {
                (*it)->join();
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
        conns_.push_back(conn);
        conn->start();
    }
}

void RpcServer::stop() {
    if (!running_.exchange(false)) return;
    if (acceptor_.joinable()) acceptor_.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
    std::vector<std::shared_ptr<ServerConnection>> conns;
    {
        std::lock_guard lock(conns_mu_);
        conns.swap(conns_);
    }
    for (auto& c : conns) c->shutdown();
    for (auto& c : conns) c->join();
}

Endpoint RpcServer::endpoint() const {
    Endpoint ep = bind_;
    if (ep.host.empty() || ep.host == "0.0.0.0") ep.host = "127.0.0.1";
    ep.port = port_;
    return ep;
}

// ---------------------------------------------------------------------------
// Client side

struct CallStream::State {
    Channel<Json> items;
    std::promise<Json> terminal;
    std::shared_future<Json> result = terminal.get_future().share();
};

std::shared_ptr<RpcClient> RpcClient::connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw Error(Errc::transport, "cannot resolve " + ep.to_string());
    }
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
        ::freeaddrinfo(res);
        throw Error(Errc::transport, "socket() failed");
    }
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 && errno != EINPROGRESS) {
        int err = errno;
        ::close(fd);
        throw Error(Errc::transport, "cannot connect to " + ep.to_string() + ": " + std::strerror(err));
    }
    if (rc != 0) {
        pollfd pfd{fd, POLLOUT, 0};
        int r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        int soerr = 0;
        socklen_t len = sizeof(soerr);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &soerr, &len);
        if (r <= 0 || soerr != 0) {
            ::close(fd);
            throw Error(Errc::transport, "cannot connect to " + ep.to_string() + ": " +
                                            (r <= 0 ? std::string("timeout") : std::string(std::strerror(soerr))));
        }
    }
    ::fcntl(fd, F_SETFL, flags);
    set_nodelay(fd);

    std::shared_ptr<RpcClient> client(new RpcClient());
    client->endpoint_ = ep;
    client->fd_ = fd;
    client->connected_ = true;
    client->reader_ = std::thread([raw = client.get()] { raw->read_loop(); });
    return client;
}

RpcClient::~RpcClient() {
    close();
    if (fd_ >= 0) ::close(fd_);
}

void RpcClient::close() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
}

void RpcClient::write_frame(const Frame& f) {
    std::lock_guard lock(write_mu_);
    if (!connected_ || !send_all(fd_, encode_frame(f))) {
        throw Error(Errc::transport, "connection to " + endpoint_.to_string() + " lost");
    }
}

void RpcClient::fail_all(const std::string& why) {
    std::map<std::uint64_t, std::shared_ptr<std::promise<Json>>> unary;
    std::map<std::uint64_t, std::shared_ptr<CallStream::State>> streams;
    {
        std::lock_guard lock(pending_mu_);
        unary.swap(unary_);
        streams.swap(streams_);
    }
    auto err = std::make_exception_ptr(Error(Errc::transport, why));
    for (auto& [id, p] : unary) p->set_exception(err);
    for (auto& [id, s] : streams) {
        s->terminal.set_exception(err);
        s->items.close();
    }
}

void RpcClient::read_loop() {
    FrameDecoder decoder;
    char buf[64 * 1024];
    try {
        while (true) {
            ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            while (auto frame = decoder.next()) {
                std::shared_ptr<std::promise<Json>> unary;
                std::shared_ptr<CallStream::State> stream;
                {
                    std::lock_guard lock(pending_mu_);
                    if (auto it = unary_.find(frame->request_id); it != unary_.end()) {
                        unary = it->second;
                        if (frame->kind != FrameKind::stream_item) unary_.erase(it);
                    } else if (auto st = streams_.find(frame->request_id); st != streams_.end()) {
                        stream = st->second;
                        if (frame->kind != FrameKind::stream_item) streams_.erase(st);
                    }
                }
                if (unary) {
                    if (frame->kind == FrameKind::error) {
                        try {
                            throw_remote_error(frame->body);
                        } catch (...) {
                            unary->set_exception(std::current_exception());
                        }
                    } else if (frame->kind != FrameKind::stream_item) {
                        try {
                            unary->set_value(parse_body(frame->body));
                        } catch (...) {
                            unary->set_exception(std::current_exception());
                        }
                    }
                } else if (stream) {
                    switch (frame->kind) {
                    case FrameKind::stream_item:
                        try {
                            stream->items.push(parse_body(frame->body));
                        } catch (const Json::exception&) {
                        }
                        break;
                    case FrameKind::error:
                        try {
                            throw_remote_error(frame->body);
                        } catch (...) {
                            stream->terminal.set_exception(std::current_exception());
                        }
                        stream->items.close();
                        break;
                    default:
                        try {
                            stream->terminal.set_value(parse_body(frame->body));
                        } catch (...) {
                            stream->terminal.set_exception(std::current_exception());
                        }
                        stream->items.close();
                        break;
                    }
                }
            }
        }
    } catch (const std::exception&) {
    }
    connected_ = false;
    fail_all("connection to " + endpoint_.to_string() + " closed");
}

Json RpcClient::call(const std::string& method, const Json& params, std::chrono::milliseconds timeout) {
    auto fut = call_async(method, params);
    if (fut.wait_for(timeout) != std::future_status::ready) {
        throw Error(Errc::transport, "timeout waiting for " + method);
    }
    return fut.get();
}

std::future<Json> RpcClient::call_async(const std::string& method, const Json& params) {
    auto promise = std::make_shared<std::promise<Json>>();
    auto fut = promise->get_future();
    const std::uint64_t id = next_id_++;
    {
        std::lock_guard lock(pending_mu_);
        if (!connected_) throw Error(Errc::transport, "not connected to " + endpoint_.to_string());
        unary_[id] = promise;
    }
    try {
        write_frame(Frame{id, FrameKind::request, Json{{"method", method}, {"params", params}}.dump()});
    } catch (...) {
        std::lock_guard lock(pending_mu_);
        unary_.erase(id);
        throw;
    }
    return fut;
}

std::unique_ptr<CallStream> RpcClient::open_stream(const std::string& method, const Json& params) {
    auto stream = std::make_unique<CallStream>();
    stream->client_ = shared_from_this();
    stream->state_ = std::make_shared<CallStream::State>();
    stream->id_ = next_id_++;
    {
        std::lock_guard lock(pending_mu_);
        if (!connected_) throw Error(Errc::transport, "not connected to " + endpoint_.to_string());
        streams_[stream->id_] = stream->state_;
    }
    write_frame(Frame{stream->id_, FrameKind::request, Json{{"method", method}, {"params", params}}.dump()});
    return stream;
}

void CallStream::send(const Json& item) { client_->write_frame(Frame{id_, FrameKind::stream_item, item.dump()}); }

void CallStream::finish() {
    if (finished_) return;
    finished_ = true;
    client_->write_frame(Frame{id_, FrameKind::end_of_stream, "{}"});
}

std::optional<Json> CallStream::next_item() { return state_->items.pop(); }

Json CallStream::result() { return state_->result.get(); }

} // namespace evalbench::net
