#pragma once

#include <cstdint>

#include "asop/bytes.hpp"

namespace asop {

Bytes sha256(ByteSpan data);
Bytes hmac_sha256(ByteSpan key, ByteSpan data);
Bytes hmac_sha1(ByteSpan key, ByteSpan data);

// RFC 5869. Empty salt behaves as a zeroed HashLen salt.
Bytes hkdf_sha256(ByteSpan ikm, ByteSpan salt, ByteSpan info, size_t length);

// CRC-32C (Castagnoli), used by the registry store file.
uint32_t crc32c(ByteSpan data);

bool constant_time_eq(ByteSpan a, ByteSpan b);

}  // namespace asop
