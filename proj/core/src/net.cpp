#include "svs/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>

#include "svs/errors.hpp"

namespace svs {

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
    throw RuntimeError(what + ": " + std::strerror(errno));
}

struct AddrInfo {
    addrinfo* head = nullptr;
    ~AddrInfo() {
        if (head) ::freeaddrinfo(head);
    }
};

AddrInfo resolve(const std::string& host, int port, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    AddrInfo out;
    const std::string service = std::to_string(port);
    const char* node = host.empty() ? nullptr : host.c_str();
    const int rc = ::getaddrinfo(node, service.c_str(), &hints, &out.head);
    if (rc != 0) {
        throw RuntimeError("cannot resolve " + (host.empty() ? std::string("*") : host) + ":" +
                           service + ": " + ::gai_strerror(rc));
    }
    return out;
}

}  // namespace

std::pair<std::string, int> split_host_port(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon + 1 == addr.size()) {
        throw ValidationError("address must be host:port, got: " + addr);
    }
    const std::string host = addr.substr(0, colon);
    const std::string port_str = addr.substr(colon + 1);
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(port_str, &used);
        if (used != port_str.size()) throw std::invalid_argument(port_str);
    } catch (const std::exception&) {
        throw ValidationError("invalid port in address: " + addr);
    }
    if (port < 0 || port > 65535) {
        throw ValidationError("port out of range in address: " + addr);
    }
    return {host, port};
}

TcpConn& TcpConn::operator=(TcpConn&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

TcpConn TcpConn::connect(const std::string& addr) {
    const auto [host, port] = split_host_port(addr);
    AddrInfo ai = resolve(host.empty() ? "127.0.0.1" : host, port, false);
    int last_errno = 0;
    for (addrinfo* p = ai.head; p; p = p->ai_next) {
        const int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) {
            last_errno = errno;
            continue;
        }
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) {
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            return TcpConn(fd);
        }
        last_errno = errno;
        ::close(fd);
    }
    errno = last_errno ? last_errno : ECONNREFUSED;
    throw_errno("cannot connect to " + addr);
}

void TcpConn::send_all(const std::string& bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("send failed");
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::size_t TcpConn::recv_some(char* buf, std::size_t cap) {
    while (true) {
        const ssize_t n = ::recv(fd_, buf, cap, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("recv failed");
        }
        return static_cast<std::size_t>(n);
    }
}

void TcpConn::shutdown_write() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void TcpConn::shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void TcpConn::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        port_ = other.port_;
        other.fd_ = -1;
    }
    return *this;
}

TcpListener TcpListener::bind_listen(const std::string& addr, int backlog) {
    const auto [host, port] = split_host_port(addr);
    AddrInfo ai = resolve(host, port, true);
    int last_errno = 0;
    for (addrinfo* p = ai.head; p; p = p->ai_next) {
        const int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) {
            last_errno = errno;
            continue;
        }
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        if (::bind(fd, p->ai_addr, p->ai_addrlen) == 0 && ::listen(fd, backlog) == 0) {
            TcpListener out;
            out.fd_ = fd;
            sockaddr_storage ss{};
            socklen_t slen = sizeof(ss);
            if (::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &slen) == 0) {
                if (ss.ss_family == AF_INET) {
                    out.port_ = ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
                } else if (ss.ss_family == AF_INET6) {
                    out.port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
                }
            }
            return out;
        }
        last_errno = errno;
        ::close(fd);
    }
    errno = last_errno ? last_errno : EADDRNOTAVAIL;
    throw_errno("cannot bind/listen on " + addr);
}

TcpConn TcpListener::accept() {
    while (true) {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            throw_errno("accept failed");
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return TcpConn(fd);
    }
}

void TcpListener::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

}  // namespace svs
