#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "asop/bytes.hpp"
#include "asop/crypto.hpp"
#include "asop/error.hpp"

namespace asop::wire {

// One wire message per protocol arrow, plus account registration and errors.
enum class MsgType : uint8_t {
  RegisterInit = 0x01,      // A -> S: account id, A kem pk, A sig pk
  RegisterAck = 0x02,       // S -> A: S kem pk, validity
  AddDeviceRequest = 0x03,  // A -> S: account id
  OnboardOffer = 0x04,      // S -> A: sealed (token, api address)
  DeviceProvision = 0x05,   // A -> D: C_K envelope (api, server pk, token, sig)
  DeviceRegister = 0x06,    // D -> S: sealed (device pk, uuid, token, sig)
  DeviceAccept = 0x07,      // S -> D: sealed (long-lived token, S^D pk)
  OnboardNotify = 0x08,     // S -> A: sealed (uuid, "connected")
  Error = 0x09,             // code (2 bytes) + optional detail
};

std::string_view msg_type_name(MsgType t);

struct Field {
  uint8_t id = 0;
  Bytes value;

  bool operator==(const Field&) const = default;
};

struct Message {
  MsgType type = MsgType::Error;
  std::vector<Field> fields;  // canonical form: ids strictly ascending

  const Bytes* field(uint8_t id) const;
  Message& set(uint8_t id, Bytes value);

  bool operator==(const Message&) const = default;
};

inline constexpr std::string_view kMagic = "ASOP";
inline constexpr uint8_t kVersion = 0x01;
inline constexpr size_t kHeaderLen = 6;  // magic + version + msg_type

// Frame bytes: "ASOP" | 0x01 | msg_type | fields, each id(1) len(4 BE) value.
Result<Bytes> encode(const Message& m);
Result<Message> decode(ByteSpan frame);

// Bare TLV sequences, used for structured payloads inside sealed envelopes.
// Same canonical rules as frames, but no header.
Result<Bytes> tlv_encode(const std::vector<Field>& fields);
Result<std::vector<Field>> tlv_decode(ByteSpan data);

const Bytes* find_field(const std::vector<Field>& fields, uint8_t id);

// ---------------------------------------------------------------------------
// Blob helpers for composite values carried inside TLV fields.
// ---------------------------------------------------------------------------

Bytes encode_hybrid(const HybridCiphertext& ct);
Result<HybridCiphertext> decode_hybrid(ByteSpan data);

Bytes encode_kem_pair(const KemKeyPair& kp);
Result<KemKeyPair> decode_kem_pair(ByteSpan data);

Bytes encode_sig_pair(const SigKeyPair& kp);
Result<SigKeyPair> decode_sig_pair(ByteSpan data);

Bytes encode_token(const LongLivedToken& t);
Result<LongLivedToken> decode_token(ByteSpan data);

// ---------------------------------------------------------------------------
// ERROR messages.
// ---------------------------------------------------------------------------

struct WireError {
  Err code = Err::Ok;
  std::string detail;
};

Message make_error(Err code, std::string_view detail = {});
Result<WireError> parse_error(const Message& m);

}  // namespace asop::wire
