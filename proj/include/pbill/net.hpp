#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>

#include "pbill/fd.hpp"
#include "pbill/wire.hpp"

namespace pbill::net {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
  bool operator==(const Endpoint&) const = default;
};

// "host:port"; port 0 is allowed (bind to an ephemeral port).
inline Endpoint parse_endpoint(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error(ErrorCode::kConfig, "endpoint must be host:port, got '" + std::string(text) + "'");
  }
  std::string host(text.substr(0, colon));
  std::string port_text(text.substr(colon + 1));
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument("junk");
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, "bad port in endpoint '" + std::string(text) + "'");
  }
  if (port > 65535) throw Error(ErrorCode::kConfig, "port out of range in '" + std::string(text) + "'");
  return {std::move(host), static_cast<std::uint16_t>(port)};
}

using Clock = std::chrono::steady_clock;
inline constexpr std::chrono::milliseconds kDefaultTimeout{5000};

namespace detail {

[[noreturn]] inline void throw_errno(const std::string& what) {
  throw Error(ErrorCode::kNetwork, what + ": " + std::strerror(errno));
}

inline addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) {
    throw Error(ErrorCode::kNetwork, "cannot resolve " + ep.str() + ": " + ::gai_strerror(rc));
  }
  return res;
}

// Waits for `events` on fd; false on timeout.
inline bool wait_for(int fd, short events, std::chrono::milliseconds timeout) {
  pollfd p{fd, events, 0};
  for (;;) {
    int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) throw_errno("poll");
  }
}

}  // namespace detail

class Listener {
 public:
  explicit Listener(const Endpoint& ep) {
    addrinfo* res = detail::resolve(ep, true);
    fd_ = FileDescriptor(::socket(res->ai_family, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd_.valid()) {
      ::freeaddrinfo(res);
      detail::throw_errno("socket");
    }
    int one = 1;
    ::setsockopt(fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    int rc = ::bind(fd_.get(), res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) detail::throw_errno("bind " + ep.str());
    if (::listen(fd_.get(), 64) != 0) detail::throw_errno("listen " + ep.str());
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    endpoint_ = {ep.host.empty() ? "0.0.0.0" : ep.host, ntohs(addr.sin_port)};
  }

  const Endpoint& endpoint() const { return endpoint_; }

  // Next connection, or nullopt when nothing arrived within `timeout`.
  std::optional<FileDescriptor> accept(std::chrono::milliseconds timeout) {
    if (!detail::wait_for(fd_.get(), POLLIN, timeout)) return std::nullopt;
    int c = ::accept4(fd_.get(), nullptr, nullptr, SOCK_CLOEXEC);
    if (c < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return std::nullopt;
      detail::throw_errno("accept");
    }
    int one = 1;
    ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return FileDescriptor(c);
  }

 private:
  FileDescriptor fd_;
  Endpoint endpoint_;
};

// One framed link. Every failure surfaces as Error(kNetwork), except
// malformed frames, which throw DecodeError.
class Connection {
 public:
  explicit Connection(FileDescriptor fd, std::chrono::milliseconds timeout = kDefaultTimeout)
      : fd_(std::move(fd)), timeout_(timeout) {}

  static Connection connect(const Endpoint& ep,
                            std::chrono::milliseconds timeout = kDefaultTimeout) {
    addrinfo* res = detail::resolve(ep, false);
    FileDescriptor fd(::socket(res->ai_family, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
    if (!fd.valid()) {
      ::freeaddrinfo(res);
      detail::throw_errno("socket");
    }
    int rc = ::connect(fd.get(), res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 && errno != EINPROGRESS) detail::throw_errno("connect " + ep.str());
    if (rc != 0) {
      if (!detail::wait_for(fd.get(), POLLOUT, timeout)) {
        throw Error(ErrorCode::kNetwork, "connect " + ep.str() + ": timed out");
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
      if (err != 0) {
        errno = err;
        detail::throw_errno("connect " + ep.str());
      }
    }
    int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Connection(std::move(fd), timeout);
  }

  void send(const wire::Message& msg) { send_frame(wire::encode_message(msg)); }

  // True once data (or EOF) is waiting.
  bool readable(std::chrono::milliseconds timeout) {
    return detail::wait_for(fd_.get(), POLLIN, timeout);
  }

  void send_frame(ByteView frame) {
    std::size_t off = 0;
    while (off < frame.size()) {
      ssize_t w = ::send(fd_.get(), frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) {
          if (!detail::wait_for(fd_.get(), POLLOUT, timeout_)) {
            throw Error(ErrorCode::kNetwork, "send timed out");
          }
          continue;
        }
        detail::throw_errno("send");
      }
      off += static_cast<std::size_t>(w);
    }
  }

  // Reads one whole frame. nullopt when the peer closed the link cleanly
  // between frames.
  std::optional<Bytes> receive_frame() {
    Bytes frame(wire::kHeaderBytes);
    if (!read_exact(frame.data(), frame.size(), true)) return std::nullopt;
    const std::uint32_t length = wire::payload_length(frame);
    frame.resize(wire::kHeaderBytes + length);
    read_exact(frame.data() + wire::kHeaderBytes, length, false);
    return frame;
  }

  std::optional<wire::Message> receive() {
    auto frame = receive_frame();
    if (!frame) return std::nullopt;
    return wire::decode_message(*frame);
  }

  // Request/response helper: a closed link counts as a network failure.
  wire::Message exchange(const wire::Message& request) {
    send(request);
    auto reply = receive();
    if (!reply) throw Error(ErrorCode::kNetwork, "peer closed the connection");
    return std::move(*reply);
  }

 private:
  bool read_exact(std::uint8_t* out, std::size_t n, bool eof_ok) {
    std::size_t got = 0;
    while (got < n) {
      if (!detail::wait_for(fd_.get(), POLLIN, timeout_)) {
        throw Error(ErrorCode::kNetwork, "receive timed out");
      }
      ssize_t r = ::recv(fd_.get(), out + got, n - got, 0);
      if (r < 0) {
        if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
        detail::throw_errno("recv");
      }
      if (r == 0) {
        if (got == 0 && eof_ok) return false;
        throw Error(ErrorCode::kNetwork, "connection closed mid-frame");
      }
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

  FileDescriptor fd_;
  std::chrono::milliseconds timeout_;
};

}  // namespace pbill::net
