#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <variant>

namespace asop {

// Protocol-visible error codes. The numeric values are the 2-byte codes
// carried by ERROR frames and are stable across releases.
enum class Err : uint16_t {
  Ok = 0x0000,

  // frame / TLV codec
  BadMagic = 0x0001,
  BadVersion = 0x0002,
  UnknownType = 0x0003,
  DuplicateField = 0x0004,
  NonCanonicalOrder = 0x0005,
  Truncated = 0x0006,
  TrailingBytes = 0x0007,
  ValueTooLong = 0x0008,
  MissingField = 0x0009,

  // crypto
  DecryptFail = 0x0101,
  BadSignature = 0x0102,
  MalformedKey = 0x0103,
  KeyExpired = 0x0104,
  CounterOverflow = 0x0105,
  BackendUnavailable = 0x0106,

  // protocol state machines
  WrongPhase = 0x0201,
  SessionExpired = 0x0202,
  NoSession = 0x0203,
  DuplicateSession = 0x0204,
  TokenExpired = 0x0205,
  TokenReplayed = 0x0206,
  ProtocolViolation = 0x0207,

  // registry
  DuplicateDevice = 0x0301,
  UnknownDevice = 0x0302,
  RevokedDevice = 0x0303,
  StoreCorrupt = 0x0304,
  IoError = 0x0305,

  // transport
  ConnectionClosed = 0x0401,
  FrameTooLarge = 0x0402,
  Dropped = 0x0403,
  Timeout = 0x0404,
  BindFail = 0x0405,
  UnknownScenario = 0x0406,
};

std::string_view err_name(Err e);

// Minimal expected-like result: either a value or an error code.
template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T v) : v_(std::move(v)) {}
  Result(Err e) : v_(e) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<T>(v_); }
  const T& value() const& { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }

  Err error() const { return ok() ? Err::Ok : std::get<Err>(v_); }

 private:
  std::variant<T, Err> v_;
};

}  // namespace asop
