// net.hpp -- framed TCP transport and the plaintext suite handshake
#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "dcs/bytes.hpp"
#include "dcs/errors.hpp"
#include "dcs/synchronizer.hpp"
#include "dcs/wire.hpp"

namespace dcs::net {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

// "host:port" -> Endpoint; throws Malformed on bad input.
Endpoint parse_endpoint(const std::string& text);

class TcpConn {
  public:
    TcpConn() = default;
    explicit TcpConn(int fd) : fd_(fd) {}
    ~TcpConn() { close(); }

    TcpConn(TcpConn&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    TcpConn& operator=(TcpConn&& other) noexcept;
    TcpConn(const TcpConn&) = delete;
    TcpConn& operator=(const TcpConn&) = delete;

    bool valid() const { return fd_ >= 0; }
    void write_all(ByteView data);
    std::size_t read_some(std::uint8_t* dst, std::size_t n);
    // Reads bytes until '\n' (inclusive); caps the line length.
    std::string read_line(std::size_t max = 256);
    void shutdown_both();
    void close();
    int fd() const { return fd_; }

  private:
    int fd_ = -1;
};

TcpConn tcp_connect(const Endpoint& ep);

class TcpListener {
  public:
    static TcpListener bind(const Endpoint& ep);
    ~TcpListener() { close(); }

    TcpListener(TcpListener&& other) noexcept
        : fd_(other.fd_), port_(other.port_) {
        other.fd_ = -1;
    }
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    // Invalid conn on shutdown/interrupt.
    TcpConn accept();
    void close();

  private:
    TcpListener(int fd, std::uint16_t port) : fd_(fd), port_(port) {}
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

// Client side: sends "DC1 <suite>\n", expects the same line echoed.
// Throws SuiteMismatch when the server disagrees.
void client_handshake(TcpConn& conn, const std::string& suite_id);

// Server side: replies with its own line; returns false when the client's
// suite differs (caller should drop the connection).
bool server_handshake(TcpConn& conn, const std::string& suite_id);

// Request/response channel to a synchronizer.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual wire::Message roundtrip(const wire::Message& request) = 0;
};

// Lazily connects on first use; one framed request/response at a time.
class TcpTransport final : public Transport {
  public:
    TcpTransport(Endpoint ep, std::string suite_id)
        : ep_(std::move(ep)), suite_id_(std::move(suite_id)) {}

    wire::Message roundtrip(const wire::Message& request) override;

  private:
    Endpoint ep_;
    std::string suite_id_;
    TcpConn conn_;
};

// Serves a SyncService over TCP: accept loop, one thread per connection,
// responses in request order per connection.
class SyncServer {
  public:
    SyncServer(SyncService& service, TcpListener listener, std::string suite_id)
        : service_(service), listener_(std::move(listener)),
          suite_id_(std::move(suite_id)) {}

    std::uint16_t port() const { return listener_.port(); }

    // Blocks until stop() is called.
    void run();
    void stop();

  private:
    void serve_conn(TcpConn conn);

    SyncService& service_;
    TcpListener listener_;
    std::string suite_id_;
    std::atomic<bool> stopping_{false};
    std::mutex threads_mu_;
    std::vector<std::thread> threads_;
    std::vector<int> live_fds_;
};

} // namespace dcs::net
