#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "asop/bytes.hpp"
#include "asop/error.hpp"
#include "asop/protocol.hpp"
#include "asop/registry.hpp"
#include "asop/wire.hpp"

namespace asop::net {

inline constexpr size_t kMaxFrame = 1u << 20;  // 1 MiB

struct Endpoint {
  std::string host;
  uint16_t port = 0;

  static Result<Endpoint> parse(std::string_view text);  // "host:port"
};

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();

 private:
  int fd_ = -1;
};

Result<Socket> tcp_connect(const std::string& host, uint16_t port);

// Each frame crosses the wire as a 4-byte big-endian length prefix followed
// by exactly that many bytes.
[[nodiscard]] Err write_frame(int fd, ByteSpan frame);
Result<Bytes> read_frame(int fd, int timeout_ms = -1);

[[nodiscard]] Err send_message(Socket& s, const wire::Message& m);
Result<wire::Message> read_message(Socket& s, int timeout_ms = -1);
// send_message then read_message.
Result<wire::Message> request_reply(Socket& s, const wire::Message& m,
                                    int timeout_ms = -1);

class Listener {
 public:
  static Result<Listener> bind(const std::string& host, uint16_t port);
  Result<Socket> accept(int timeout_ms);
  uint16_t port() const { return port_; }
  bool valid() const { return sock_.valid(); }

 private:
  Socket sock_;
  uint16_t port_ = 0;
};

struct DaemonConfig {
  std::string host = "127.0.0.1";
  uint16_t port = 0;  // 0: pick a free port
  std::filesystem::path store_path;  // empty: no persistence
  std::string backend = "toy";
  std::array<uint8_t, 32> seed{};
  uint64_t time_base = 0;  // 0: wall clock; otherwise frozen at this instant
  proto::ProtocolConfig protocol;
  proto::ServerApiAddress api;  // empty host: derived from the bound address
  std::filesystem::path toy_key_directory;
  std::shared_ptr<Backend> backend_override;  // in-process tests share one
};

// The server side over real sockets: one thread per connection, all protocol
// and registry work serialized through one engine lock, store persisted
// after every registration and at shutdown.
class ServerDaemon {
 public:
  static Result<std::unique_ptr<ServerDaemon>> start(DaemonConfig cfg);
  ~ServerDaemon();

  void stop();  // idempotent
  uint16_t port() const { return listener_.port(); }
  const proto::ServerApiAddress& api() const { return api_; }

 private:
  explicit ServerDaemon(DaemonConfig cfg);
  void accept_loop();
  void handle_connection(Socket sock);
  uint64_t now() const;
  void reply_error(int fd, Err code);

  DaemonConfig cfg_;
  proto::ServerApiAddress api_;
  std::shared_ptr<Backend> backend_;
  store::Store store_;
  std::unique_ptr<proto::ServerEngine> engine_;
  std::mutex engine_mu_;
  Listener listener_;

  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex threads_mu_;
  std::vector<std::thread> conn_threads_;

  // account -> connection waiting for ONBOARD_NOTIFY
  std::mutex notify_mu_;
  std::map<std::string, int> notify_fds_;
};

}  // namespace asop::net
