#pragma once

// Thin blocking TCP wrappers (POSIX sockets) used by the cloud server and
// the remote clients. Addresses are "host:port" strings; binding to port 0
// picks an ephemeral port readable via TcpListener::port().

#include <cstddef>
#include <string>
#include <utility>

namespace svs {

std::pair<std::string, int> split_host_port(const std::string& addr);

class TcpConn {
  public:
    TcpConn() = default;
    explicit TcpConn(int fd) : fd_(fd) {}
    TcpConn(TcpConn&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    TcpConn& operator=(TcpConn&& other) noexcept;
    TcpConn(const TcpConn&) = delete;
    TcpConn& operator=(const TcpConn&) = delete;
    ~TcpConn() { close(); }

    // Throws RuntimeError when the host cannot be resolved or connected.
    static TcpConn connect(const std::string& addr);

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    // Writes the whole buffer; throws RuntimeError on a broken connection.
    void send_all(const std::string& bytes);

    // Reads up to cap bytes; returns 0 on orderly EOF, throws on error.
    std::size_t recv_some(char* buf, std::size_t cap);

    // Half-close for writing (signals EOF to the peer's reader).
    void shutdown_write();

    // Full shutdown without releasing the fd: wakes a recv() blocked in
    // another thread, which is not guaranteed by close() alone.
    void shutdown_both();

    void close();

  private:
    int fd_ = -1;
};

class TcpListener {
  public:
    TcpListener() = default;
    TcpListener(TcpListener&& other) noexcept : fd_(other.fd_), port_(other.port_) { other.fd_ = -1; }
    TcpListener& operator=(TcpListener&& other) noexcept;
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener() { close(); }

    static TcpListener bind_listen(const std::string& addr, int backlog = 64);

    bool valid() const { return fd_ >= 0; }
    int port() const { return port_; }

    // Blocks until a client connects; throws RuntimeError once closed.
    TcpConn accept();

    void close();

  private:
    int fd_ = -1;
    int port_ = 0;
};

}  // namespace svs
