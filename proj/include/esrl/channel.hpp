#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "esrl/protocol.hpp"

namespace esrl {

// One end of a bidirectional message stream. Both transports carry the same
// JSON message objects, one per frame.
class MessageChannel {
 public:
  virtual ~MessageChannel() = default;
  // false once the peer is gone
  virtual bool send(const json& m) = 0;
  // nullopt on timeout or close; check closed() to tell them apart.
  // timeout_ms < 0 blocks until a message or close.
  virtual std::optional<json> recv(int timeout_ms) = 0;
  virtual bool closed() const = 0;
  virtual void close() = 0;
  // Wakes blocked readers without releasing resources; safe to call while
  // another thread sits in recv(). Full close happens after joins.
  virtual void begin_close() { close(); }
};

// ---- in-process transport ----

namespace detail {

struct MsgQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<json> items;
  bool closed = false;

  void push(json m) {
    {
      std::lock_guard lk(mu);
      if (closed) return;
      items.push_back(std::move(m));
    }
    cv.notify_one();
  }

  std::optional<json> pop(int timeout_ms) {
    std::unique_lock lk(mu);
    auto ready = [this] { return !items.empty() || closed; };
    if (timeout_ms < 0) {
      cv.wait(lk, ready);
    } else if (!cv.wait_for(lk, std::chrono::milliseconds(timeout_ms), ready)) {
      return std::nullopt;
    }
    if (items.empty()) return std::nullopt;
    json m = std::move(items.front());
    items.pop_front();
    return m;
  }

  void close() {
    {
      std::lock_guard lk(mu);
      closed = true;
    }
    cv.notify_all();
  }

  bool is_closed() {
    std::lock_guard lk(mu);
    return closed && items.empty();
  }
};

}  // namespace detail

class InProcChannel : public MessageChannel {
 public:
  InProcChannel(std::shared_ptr<detail::MsgQueue> in, std::shared_ptr<detail::MsgQueue> out)
      : in_(std::move(in)), out_(std::move(out)) {}

  bool send(const json& m) override {
    if (out_->is_closed()) return false;
    out_->push(m);
    return true;
  }

  std::optional<json> recv(int timeout_ms) override { return in_->pop(timeout_ms); }

  bool closed() const override { return in_->is_closed(); }

  void close() override {
    in_->close();
    out_->close();
  }

 private:
  std::shared_ptr<detail::MsgQueue> in_;
  std::shared_ptr<detail::MsgQueue> out_;
};

inline std::pair<std::unique_ptr<MessageChannel>, std::unique_ptr<MessageChannel>>
make_inproc_pair() {
  auto a_to_b = std::make_shared<detail::MsgQueue>();
  auto b_to_a = std::make_shared<detail::MsgQueue>();
  return {std::make_unique<InProcChannel>(b_to_a, a_to_b),
          std::make_unique<InProcChannel>(a_to_b, b_to_a)};
}

// ---- TCP transport ----

class TcpChannel : public MessageChannel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  ~TcpChannel() override { close(); }

  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  bool send(const json& m) override {
    if (fd_ < 0 || down_) return false;
    const std::string frame = encode_frame(m.dump());
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n =
          ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) {
        down_ = true;
        return false;
      }
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  std::optional<json> recv(int timeout_ms) override {
    unsigned char header[4];
    if (!read_exact(header, 4, timeout_ms, true)) return std::nullopt;
    const std::uint32_t len = decode_frame_length(header);
    if (len > kMaxFrameBytes) {
      down_ = true;
      throw ProtocolError("oversized frame: " + std::to_string(len));
    }
    std::string payload(len, '\0');
    // header seen: finish the frame even if it straddles the deadline
    if (!read_exact(reinterpret_cast<unsigned char*>(payload.data()), len, -1, false))
      return std::nullopt;
    try {
      return json::parse(payload);
    } catch (const json::parse_error&) {
      down_ = true;
      throw ProtocolError("frame payload is not valid JSON");
    }
  }

  bool closed() const override { return fd_ < 0 || down_; }

  // Half-close wakes any thread blocked in recv; the fd stays valid until
  // close() so concurrent poll()s never race a reused descriptor.
  void begin_close() override {
    down_ = true;
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void close() override {
    down_ = true;
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  // Reads exactly n bytes. With allow_empty_timeout, a timeout before the
  // first byte returns false without closing.
  bool read_exact(unsigned char* buf, std::size_t n, int timeout_ms,
                  bool allow_empty_timeout) {
    std::size_t got = 0;
    while (got < n) {
      if (fd_ < 0 || down_) return false;
      pollfd p{fd_, POLLIN, 0};
      const int pr = ::poll(&p, 1, got == 0 ? timeout_ms : -1);
      if (pr == 0) {
        if (allow_empty_timeout && got == 0) return false;
        continue;
      }
      if (pr < 0) {
        if (errno == EINTR) continue;
        down_ = true;
        return false;
      }
      const ssize_t r = ::read(fd_, buf + got, n - got);
      if (r <= 0) {
        down_ = true;
        return false;
      }
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

  int fd_ = -1;
  std::atomic<bool> down_{false};
};

struct HostPort {
  std::string host;
  int port = 0;

  static HostPort parse(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos)
      throw ValidationError("expected host:port, got '" + s + "'");
    HostPort hp;
    hp.host = s.substr(0, colon);
    hp.port = static_cast<int>(parse_int(s.substr(colon + 1)));
    if (hp.port < 0 || hp.port > 65535) throw ValidationError("port out of range");
    return hp;
  }
};

class TcpListener {
 public:
  explicit TcpListener(const HostPort& at) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ProtocolError("socket() failed");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(at.port));
    if (::inet_pton(AF_INET, at.host.c_str(), &addr.sin_addr) != 1)
      throw ValidationError("bad listen address: " + at.host);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw ProtocolError("bind failed on " + at.host + ":" + std::to_string(at.port));
    if (::listen(fd_, 64) != 0) throw ProtocolError("listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  int port() const { return port_; }

  std::unique_ptr<TcpChannel> accept(int timeout_ms = -1) {
    pollfd p{fd_, POLLIN, 0};
    const int pr = ::poll(&p, 1, timeout_ms);
    if (pr <= 0) return nullptr;
    const int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) return nullptr;
    return std::make_unique<TcpChannel>(cfd);
  }

 private:
  int fd_ = -1;
  int port_ = 0;
};

inline std::unique_ptr<TcpChannel> tcp_connect(const HostPort& to, int timeout_ms = 10000) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ProtocolError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(to.port));
  if (::inet_pton(AF_INET, to.host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw ValidationError("bad connect address: " + to.host);
  }
  (void)timeout_ms;
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw ProtocolError("connect failed to " + to.host + ":" + std::to_string(to.port));
  }
  return std::make_unique<TcpChannel>(fd);
}

}  // namespace esrl
