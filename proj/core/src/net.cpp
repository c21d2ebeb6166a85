#include "dcs/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>

namespace dcs::net {

using namespace wire;

Endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
        throw Error(Errc::Malformed, "endpoint must be host:port");
    Endpoint ep;
    ep.host = text.substr(0, colon);
    const std::string port = text.substr(colon + 1);
    char* end = nullptr;
    const unsigned long v = std::strtoul(port.c_str(), &end, 10);
    if (!end || *end != '\0' || v > 65535)
        throw Error(Errc::Malformed, "bad port: " + port);
    ep.port = static_cast<std::uint16_t>(v);
    return ep;
}

TcpConn& TcpConn::operator=(TcpConn&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

void TcpConn::write_all(ByteView data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n =
            ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw Error(Errc::SyncUnreachable, std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::size_t TcpConn::read_some(std::uint8_t* dst, std::size_t n) {
    while (true) {
        const ssize_t r = ::recv(fd_, dst, n, 0);
        if (r >= 0)
            return static_cast<std::size_t>(r);
        if (errno == EINTR)
            continue;
        throw Error(Errc::SyncUnreachable, std::strerror(errno));
    }
}

std::string TcpConn::read_line(std::size_t max) {
    std::string line;
    std::uint8_t c = 0;
    while (line.size() < max) {
        if (read_some(&c, 1) == 0)
            throw Error(Errc::SyncUnreachable, "connection closed");
        line.push_back(static_cast<char>(c));
        if (c == '\n')
            return line;
    }
    throw Error(Errc::Malformed, "handshake line too long");
}

void TcpConn::shutdown_both() {
    if (fd_ >= 0)
        ::shutdown(fd_, SHUT_RDWR);
}

void TcpConn::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

TcpConn tcp_connect(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0)
        throw Error(Errc::SyncUnreachable, "cannot resolve " + ep.host);
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0)
            continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
            break;
        ::close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0)
        throw Error(Errc::SyncUnreachable,
                    ep.host + ":" + port + " unreachable");
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return TcpConn(fd);
}

TcpListener TcpListener::bind(const Endpoint& ep) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        throw Error(Errc::SyncUnreachable, std::strerror(errno));
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (ep.host == "0.0.0.0" || ep.host.empty()) {
        addr.sin_addr.s_addr = INADDR_ANY;
    } else if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw Error(Errc::Malformed, "listen host must be an IPv4 address");
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(fd, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(fd);
        throw Error(Errc::SyncUnreachable, "bind failed: " + why);
    }
    socklen_t len = sizeof addr;
    getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    return TcpListener(fd, ntohs(addr.sin_port));
}

TcpConn TcpListener::accept() {
    while (true) {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd >= 0) {
            int one = 1;
            setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return TcpConn(fd);
        }
        if (errno == EINTR)
            continue;
        return TcpConn();
    }
}

void TcpListener::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

void client_handshake(TcpConn& conn, const std::string& suite_id) {
    const std::string line = "DC1 " + suite_id + "\n";
    conn.write_all(to_bytes(line));
    const std::string reply = conn.read_line();
    if (reply != line)
        throw Error(Errc::SuiteMismatch, reply);
}

bool server_handshake(TcpConn& conn, const std::string& suite_id) {
    const std::string line = conn.read_line();
    conn.write_all(to_bytes("DC1 " + suite_id + "\n"));
    return line == "DC1 " + suite_id + "\n";
}

wire::Message TcpTransport::roundtrip(const Message& request) {
    if (!conn_.valid()) {
        conn_ = tcp_connect(ep_);
        client_handshake(conn_, suite_id_);
    }
    try {
        conn_.write_all(frame(canonical_encode(request)));
        auto payload = deframe(
            [&](std::uint8_t* dst, std::size_t n) { return conn_.read_some(dst, n); });
        if (!payload)
            throw Error(Errc::SyncUnreachable, "connection closed");
        return decode(*payload);
    } catch (const Error&) {
        conn_.close(); // force reconnect on the next call
        throw;
    }
}

void SyncServer::run() {
    while (!stopping_.load()) {
        TcpConn conn = listener_.accept();
        if (!conn.valid())
            break;
        std::lock_guard lock(threads_mu_);
        if (stopping_.load())
            break;
        live_fds_.push_back(conn.fd());
        threads_.emplace_back(
            [this](TcpConn c) { serve_conn(std::move(c)); }, std::move(conn));
    }
    std::vector<std::thread> joining;
    {
        std::lock_guard lock(threads_mu_);
        joining.swap(threads_);
    }
    for (std::thread& t : joining)
        t.join();
}

void SyncServer::stop() {
    stopping_.store(true);
    listener_.close();
    std::lock_guard lock(threads_mu_);
    for (int fd : live_fds_)
        ::shutdown(fd, SHUT_RDWR);
}

void SyncServer::serve_conn(TcpConn conn) {
    try {
        if (!server_handshake(conn, suite_id_))
            return;
        while (!stopping_.load()) {
            std::optional<Bytes> payload;
            try {
                payload = deframe([&](std::uint8_t* dst, std::size_t n) {
                    return conn.read_some(dst, n);
                });
            } catch (const Error& e) {
                if (e.code() == Errc::FrameTooLarge) {
                    conn.write_all(
                        frame(canonical_encode(err_of(e.code(), e.detail()))));
                }
                return; // stream is unrecoverable past a framing error
            }
            if (!payload)
                return; // clean end of stream
            Message response;
            try {
                response = service_.handle(decode(*payload));
            } catch (const Error& e) {
                // a malformed payload gets an Err; the connection stays usable
                response = err_of(e.code(), e.detail());
            }
            conn.write_all(frame(canonical_encode(response)));
        }
    } catch (const Error&) {
        // connection-level failure; drop the connection
    }
}

} // namespace dcs::net
