// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/mcp_router.hpp"

namespace ctmmcp {

/// In-process transport: every sent frame is answered synchronously by `peer`.
class LoopbackTransport final : public Transport {
 public:
  using Peer = std::function<std::string(std::string_view)>;

  explicit LoopbackTransport(Peer peer) : peer_(std::move(peer)) {}
  explicit LoopbackTransport(const ToolServer& server)
      : peer_([&server](std::string_view f) { return server.handle_frame(f); }) {}

  void send_frame(std::string_view frame) override {
    if (closed_) throw Error(ErrorKind::TransportClosed, "loopback closed");
    pending_ = peer_(frame);
  }

  std::optional<std::string> recv_frame() override {
    if (closed_ || !pending_) return std::nullopt;
    return std::exchange(pending_, std::nullopt);
  }

  void close() noexcept { closed_ = true; }

 private:
  Peer peer_;
  std::optional<std::string> pending_;
  bool closed_ = false;
};

/// Newline-framed transport over a pair of iostreams (stdio in `serve`).
class StreamTransport final : public Transport {
 public:
  StreamTransport(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  void send_frame(std::string_view frame) override {
    if (!out_) throw Error(ErrorKind::TransportClosed, "output stream");
    out_ << frame << '\n';
    out_.flush();
  }

  std::optional<std::string> recv_frame() override {
    std::string line;
    if (!std::getline(in_, line)) return std::nullopt;
    return line;
  }

 private:
  std::istream& in_;
  std::ostream& out_;
};

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::pair<std::string, std::uint16_t> split_addr(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos) throw Error(ErrorKind::ConfigError, "expected HOST:PORT", std::string(addr));
  const std::string port_text(addr.substr(colon + 1));
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) port = -1;
  } catch (const std::exception&) {
  }
  if (port < 0 || port > 65535) throw Error(ErrorKind::ConfigError, "bad port", std::string(addr));
  return {std::string(addr.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

inline sockaddr_in resolve_ipv4(const std::string& host, std::uint16_t port) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  const std::string h = host.empty() || host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &sa.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (::getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || !res)
      throw Error(ErrorKind::IoError, "cannot resolve host", h);
    sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return sa;
}

}  // namespace detail

/// Newline-framed transport over a connected TCP socket.
class TcpTransport final : public Transport {
 public:
  explicit TcpTransport(detail::Fd fd) : fd_(std::move(fd)) {}

  static TcpTransport connect(std::string_view addr) {
    const auto [host, port] = detail::split_addr(addr);
    const sockaddr_in sa = detail::resolve_ipv4(host, port);
    detail::Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd) throw Error(ErrorKind::IoError, std::strerror(errno), "socket");
    if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0)
      throw Error(ErrorKind::IoError, std::strerror(errno), std::string(addr));
    return TcpTransport(std::move(fd));
  }

  void send_frame(std::string_view frame) override {
    std::string buf(frame);
    buf.push_back('\n');
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::send(fd_.get(), buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        throw Error(ErrorKind::TransportClosed, "send failed");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> recv_frame() override {
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string frame = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return frame;
      }
      char chunk[4096];
      const ssize_t n = ::recv(fd_.get(), chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  detail::Fd fd_;
  std::string buffer_;
};

/// Listening socket. Port 0 picks an ephemeral port; see `port()`.
class TcpListener {
 public:
  explicit TcpListener(std::string_view addr) {
    const auto [host, port] = detail::split_addr(addr);
    const sockaddr_in sa = detail::resolve_ipv4(host, port);
    fd_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd_) throw Error(ErrorKind::IoError, std::strerror(errno), "socket");
    const int one = 1;
    ::setsockopt(fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_.get(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0)
      throw Error(ErrorKind::IoError, std::strerror(errno), std::string(addr));
    if (::listen(fd_.get(), 8) != 0) throw Error(ErrorKind::IoError, std::strerror(errno), "listen");
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd_.get(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  std::uint16_t port() const noexcept { return port_; }

  TcpTransport accept() {
    for (;;) {
      const int c = ::accept(fd_.get(), nullptr, nullptr);
      if (c >= 0) return TcpTransport(detail::Fd(c));
      if (errno != EINTR) throw Error(ErrorKind::IoError, std::strerror(errno), "accept");
    }
  }

 private:
  detail::Fd fd_;
  std::uint16_t port_ = 0;
};

/// Answers frames until the peer closes. Returns the number of frames served.
inline std::size_t serve_connection(const ToolServer& server, Transport& transport) {
  std::size_t served = 0;
  while (auto frame = transport.recv_frame()) {
    if (frame->empty()) continue;
    transport.send_frame(server.handle_frame(*frame));
    ++served;
  }
  return served;
}

}  // namespace ctmmcp
