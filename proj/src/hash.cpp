#include "asop/hash.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <array>
#include <cstdio>

#include "asop/error.hpp"

namespace asop {

std::string to_hex(ByteSpan b) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (uint8_t c : b) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0x0F]);
  }
  return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<uint8_t>((hi << 4) | lo));
  }
  return out;
}

Bytes sha256(ByteSpan data) {
  Bytes out(32);
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr);
  out.resize(len);
  return out;
}

static Bytes hmac_md(const EVP_MD* md, ByteSpan key, ByteSpan data) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  HMAC(md, key.data(), static_cast<int>(key.size()), data.data(), data.size(),
       out.data(), &len);
  out.resize(len);
  return out;
}

Bytes hmac_sha256(ByteSpan key, ByteSpan data) { return hmac_md(EVP_sha256(), key, data); }
Bytes hmac_sha1(ByteSpan key, ByteSpan data) { return hmac_md(EVP_sha1(), key, data); }

Bytes hkdf_sha256(ByteSpan ikm, ByteSpan salt, ByteSpan info, size_t length) {
  static const std::array<uint8_t, 32> zero_salt{};
  ByteSpan use_salt = salt.empty() ? ByteSpan{zero_salt} : salt;
  Bytes prk = hmac_sha256(use_salt, ikm);

  Bytes okm;
  okm.reserve(length);
  Bytes t;
  uint8_t block = 1;
  while (okm.size() < length) {
    Bytes input = t;
    input.insert(input.end(), info.begin(), info.end());
    input.push_back(block++);
    t = hmac_sha256(prk, input);
    okm.insert(okm.end(), t.begin(), t.end());
  }
  okm.resize(length);
  return okm;
}

namespace {

struct Crc32cTable {
  uint32_t t[256];
  Crc32cTable() {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? (0x82F63B78u ^ (c >> 1)) : (c >> 1);
      t[i] = c;
    }
  }
};

}  // namespace

uint32_t crc32c(ByteSpan data) {
  static const Crc32cTable table;
  uint32_t crc = 0xFFFFFFFFu;
  for (uint8_t b : data) crc = table.t[(crc ^ b) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

bool constant_time_eq(ByteSpan a, ByteSpan b) {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::string_view err_name(Err e) {
  switch (e) {
    case Err::Ok: return "ok";
    case Err::BadMagic: return "BadMagic";
    case Err::BadVersion: return "BadVersion";
    case Err::UnknownType: return "UnknownType";
    case Err::DuplicateField: return "DuplicateField";
    case Err::NonCanonicalOrder: return "NonCanonicalOrder";
    case Err::Truncated: return "Truncated";
    case Err::TrailingBytes: return "TrailingBytes";
    case Err::ValueTooLong: return "ValueTooLong";
    case Err::MissingField: return "MissingField";
    case Err::DecryptFail: return "DecryptFail";
    case Err::BadSignature: return "BadSignature";
    case Err::MalformedKey: return "MalformedKey";
    case Err::KeyExpired: return "KeyExpired";
    case Err::CounterOverflow: return "CounterOverflow";
    case Err::BackendUnavailable: return "BackendUnavailable";
    case Err::WrongPhase: return "WrongPhase";
    case Err::SessionExpired: return "SessionExpired";
    case Err::NoSession: return "NoSession";
    case Err::DuplicateSession: return "DuplicateSession";
    case Err::TokenExpired: return "TokenExpired";
    case Err::TokenReplayed: return "TokenReplayed";
    case Err::ProtocolViolation: return "ProtocolViolation";
    case Err::DuplicateDevice: return "DuplicateDevice";
    case Err::UnknownDevice: return "UnknownDevice";
    case Err::RevokedDevice: return "RevokedDevice";
    case Err::StoreCorrupt: return "StoreCorrupt";
    case Err::IoError: return "IoError";
    case Err::ConnectionClosed: return "ConnectionClosed";
    case Err::FrameTooLarge: return "FrameTooLarge";
    case Err::Dropped: return "Dropped";
    case Err::Timeout: return "Timeout";
    case Err::BindFail: return "BindFail";
    case Err::UnknownScenario: return "UnknownScenario";
  }
  return "unknown";
}

}  // namespace asop
