#include "asop/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <ctime>

namespace asop::net {

Result<Endpoint> Endpoint::parse(std::string_view text) {
  const size_t colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 >= text.size())
    return Err::BindFail;
  Endpoint e;
  e.host = std::string(text.substr(0, colon));
  unsigned long port = 0;
  for (char c : text.substr(colon + 1)) {
    if (c < '0' || c > '9') return Err::BindFail;
    port = port * 10 + static_cast<unsigned long>(c - '0');
    if (port > 65535) return Err::BindFail;
  }
  // Port 0 is allowed: for a listener it means "pick a free port".
  e.port = static_cast<uint16_t>(port);
  return e;
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

namespace {

Result<int> resolve_and(const std::string& host, uint16_t port, bool listen_mode) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (listen_mode) hints.ai_flags = AI_PASSIVE;

  const std::string port_str = std::to_string(port);
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0)
    return listen_mode ? Err::BindFail : Err::ConnectionClosed;

  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (listen_mode) {
      int one = 1;
      setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
      if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 16) == 0)
        break;
    } else {
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    }
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0) return listen_mode ? Err::BindFail : Err::ConnectionClosed;
  return fd;
}

Err wait_readable(int fd, int timeout_ms) {
  pollfd pfd{fd, POLLIN, 0};
  const int r = ::poll(&pfd, 1, timeout_ms);
  if (r == 0) return Err::Timeout;
  if (r < 0) return Err::ConnectionClosed;
  return Err::Ok;
}

Err read_exact(int fd, uint8_t* buf, size_t n, int timeout_ms) {
  size_t got = 0;
  while (got < n) {
    if (Err e = wait_readable(fd, timeout_ms); e != Err::Ok) return e;
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) return Err::ConnectionClosed;
    if (r < 0) {
      if (errno == EINTR) continue;
      return Err::ConnectionClosed;
    }
    got += static_cast<size_t>(r);
  }
  return Err::Ok;
}

Err write_all(int fd, const uint8_t* buf, size_t n) {
  size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r <= 0) {
      if (r < 0 && errno == EINTR) continue;
      return Err::ConnectionClosed;
    }
    sent += static_cast<size_t>(r);
  }
  return Err::Ok;
}

}  // namespace

Result<Socket> tcp_connect(const std::string& host, uint16_t port) {
  auto fd = resolve_and(host, port, false);
  if (!fd) return fd.error();
  return Socket(fd.value());
}

Err write_frame(int fd, ByteSpan frame) {
  if (frame.size() > kMaxFrame) return Err::FrameTooLarge;
  uint8_t prefix[4];
  prefix[0] = static_cast<uint8_t>(frame.size() >> 24);
  prefix[1] = static_cast<uint8_t>(frame.size() >> 16);
  prefix[2] = static_cast<uint8_t>(frame.size() >> 8);
  prefix[3] = static_cast<uint8_t>(frame.size());
  if (Err e = write_all(fd, prefix, 4); e != Err::Ok) return e;
  return write_all(fd, frame.data(), frame.size());
}

Result<Bytes> read_frame(int fd, int timeout_ms) {
  uint8_t prefix[4];
  if (Err e = read_exact(fd, prefix, 4, timeout_ms); e != Err::Ok) return e;
  const uint32_t len = get_u32be(prefix);
  if (len > kMaxFrame) return Err::FrameTooLarge;
  Bytes frame(len);
  // The header arrived, so the sender is live; allow it a beat to finish.
  const int body_timeout = timeout_ms < 0 ? -1 : std::max(timeout_ms, 5000);
  if (len > 0) {
    if (Err e = read_exact(fd, frame.data(), len, body_timeout); e != Err::Ok)
      return e;
  }
  return frame;
}

Err send_message(Socket& s, const wire::Message& m) {
  auto enc = wire::encode(m);
  if (!enc) return enc.error();
  return write_frame(s.fd(), enc.value());
}

Result<wire::Message> read_message(Socket& s, int timeout_ms) {
  auto frame = read_frame(s.fd(), timeout_ms);
  if (!frame) return frame.error();
  return wire::decode(frame.value());
}

Result<wire::Message> request_reply(Socket& s, const wire::Message& m,
                                    int timeout_ms) {
  if (Err e = send_message(s, m); e != Err::Ok) return e;
  return read_message(s, timeout_ms);
}

Result<Listener> Listener::bind(const std::string& host, uint16_t port) {
  auto fd = resolve_and(host, port, true);
  if (!fd) return fd.error();

  Listener l;
  l.sock_ = Socket(fd.value());
  sockaddr_storage addr{};
  socklen_t len = sizeof(addr);
  if (getsockname(fd.value(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    return Err::BindFail;
  if (addr.ss_family == AF_INET)
    l.port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  else if (addr.ss_family == AF_INET6)
    l.port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  else
    return Err::BindFail;
  return l;
}

Result<Socket> Listener::accept(int timeout_ms) {
  if (Err e = wait_readable(sock_.fd(), timeout_ms); e != Err::Ok) return e;
  const int fd = ::accept(sock_.fd(), nullptr, nullptr);
  if (fd < 0) return Err::ConnectionClosed;
  return Socket(fd);
}

// ---------------------------------------------------------------------------
// ServerDaemon
// ---------------------------------------------------------------------------

ServerDaemon::ServerDaemon(DaemonConfig cfg) : cfg_(std::move(cfg)) {}

Result<std::unique_ptr<ServerDaemon>> ServerDaemon::start(DaemonConfig cfg) {
  auto daemon = std::unique_ptr<ServerDaemon>(new ServerDaemon(std::move(cfg)));
  DaemonConfig& c = daemon->cfg_;

  if (c.backend_override) {
    daemon->backend_ = c.backend_override;
  } else {
    BackendOptions opts;
    opts.toy_key_directory = c.toy_key_directory;
    auto b = make_backend(c.backend, opts);
    if (!b) return b.error();
    daemon->backend_ = std::move(b).value();
  }

  if (!c.store_path.empty() && std::filesystem::exists(c.store_path)) {
    auto loaded = store::Store::load(c.store_path);
    if (!loaded) return loaded.error();
    daemon->store_ = std::move(loaded).value();
  }

  auto listener = Listener::bind(c.host, c.port);
  if (!listener) return listener.error();
  daemon->listener_ = std::move(listener).value();

  daemon->api_ = c.api;
  if (daemon->api_.host.empty()) {
    daemon->api_.host = c.host;
    daemon->api_.port = daemon->listener_.port();
    daemon->api_.path = "/api";
  }

  daemon->engine_ = std::make_unique<proto::ServerEngine>(
      daemon->backend_, daemon->store_, daemon->api_, c.seed, c.protocol);
  daemon->accept_thread_ = std::thread([d = daemon.get()] { d->accept_loop(); });
  return daemon;
}

ServerDaemon::~ServerDaemon() { stop(); }

void ServerDaemon::stop() {
  if (stopping_.exchange(true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(threads_mu_);
    workers.swap(conn_threads_);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
  if (!cfg_.store_path.empty()) {
    std::lock_guard lock(engine_mu_);
    (void)store_.persist(cfg_.store_path);
  }
}

uint64_t ServerDaemon::now() const {
  return cfg_.time_base != 0 ? cfg_.time_base
                             : static_cast<uint64_t>(::time(nullptr));
}

void ServerDaemon::reply_error(int fd, Err code) {
  auto enc = wire::encode(wire::make_error(code));
  if (enc) (void)write_frame(fd, enc.value());
}

void ServerDaemon::accept_loop() {
  while (!stopping_.load()) {
    auto sock = listener_.accept(200);
    if (!sock) {
      if (sock.error() == Err::Timeout) continue;
      break;
    }
    std::lock_guard lock(threads_mu_);
    conn_threads_.emplace_back(
        [this, s = std::make_shared<Socket>(std::move(sock).value())]() mutable {
          handle_connection(std::move(*s));
        });
  }
}

void ServerDaemon::handle_connection(Socket sock) {
  std::string notify_account;  // account this connection waits on, if any
  const int fd = sock.fd();

  for (;;) {
    auto frame = read_frame(fd, 200);
    if (!frame) {
      if (frame.error() == Err::Timeout) {
        if (stopping_.load()) break;
        continue;
      }
      if (frame.error() == Err::FrameTooLarge) reply_error(fd, Err::FrameTooLarge);
      break;  // closed, oversized, or broken stream
    }

    auto decoded = wire::decode(frame.value());
    if (!decoded) {
      reply_error(fd, decoded.error());
      continue;
    }
    const wire::Message& m = decoded.value();

    switch (m.type) {
      case wire::MsgType::RegisterInit: {
        std::unique_lock lock(engine_mu_);
        auto r = engine_->register_account(m, now());
        lock.unlock();
        if (r) (void)send_message(sock, r.value());
        else reply_error(fd, r.error());
        break;
      }
      case wire::MsgType::AddDeviceRequest: {
        std::unique_lock lock(engine_mu_);
        auto r = engine_->add_device(m, now());
        lock.unlock();
        if (r) {
          if (const Bytes* account = m.field(0x01)) {
            std::lock_guard nlock(notify_mu_);
            notify_account = to_string(*account);
            notify_fds_[notify_account] = fd;
          }
          (void)send_message(sock, r.value());
        } else {
          reply_error(fd, r.error());
        }
        break;
      }
      case wire::MsgType::DeviceRegister: {
        std::unique_lock lock(engine_mu_);
        auto r = engine_->device_register(m, now());
        if (r && !cfg_.store_path.empty()) (void)store_.persist(cfg_.store_path);
        lock.unlock();
        if (!r) {
          reply_error(fd, r.error());
          break;
        }
        auto accept_enc = wire::encode(r.value().accept);
        if (accept_enc) (void)write_frame(fd, accept_enc.value());
        auto notify_enc = wire::encode(r.value().notify);
        if (notify_enc) {
          std::lock_guard nlock(notify_mu_);
          auto it = notify_fds_.find(r.value().account_id);
          if (it != notify_fds_.end()) (void)write_frame(it->second, notify_enc.value());
        }
        break;
      }
      default:
        reply_error(fd, Err::ProtocolViolation);
    }
  }

  if (!notify_account.empty()) {
    std::lock_guard nlock(notify_mu_);
    auto it = notify_fds_.find(notify_account);
    if (it != notify_fds_.end() && it->second == fd) notify_fds_.erase(it);
  }
}

}  // namespace asop::net
