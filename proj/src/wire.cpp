#include "asop/wire.hpp"

#include <algorithm>

namespace asop::wire {

std::string_view msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::RegisterInit: return "REGISTER_INIT";
    case MsgType::RegisterAck: return "REGISTER_ACK";
    case MsgType::AddDeviceRequest: return "ADD_DEVICE_REQUEST";
    case MsgType::OnboardOffer: return "ONBOARD_OFFER";
    case MsgType::DeviceProvision: return "DEVICE_PROVISION";
    case MsgType::DeviceRegister: return "DEVICE_REGISTER";
    case MsgType::DeviceAccept: return "DEVICE_ACCEPT";
    case MsgType::OnboardNotify: return "ONBOARD_NOTIFY";
    case MsgType::Error: return "ERROR";
  }
  return "UNKNOWN";
}

const Bytes* Message::field(uint8_t id) const { return find_field(fields, id); }

Message& Message::set(uint8_t id, Bytes value) {
  auto it = std::lower_bound(fields.begin(), fields.end(), id,
                             [](const Field& f, uint8_t v) { return f.id < v; });
  if (it != fields.end() && it->id == id) {
    it->value = std::move(value);
  } else {
    fields.insert(it, Field{id, std::move(value)});
  }
  return *this;
}

const Bytes* find_field(const std::vector<Field>& fields, uint8_t id) {
  for (const auto& f : fields) {
    if (f.id == id) return &f.value;
  }
  return nullptr;
}

Result<Bytes> tlv_encode(const std::vector<Field>& fields) {
  Bytes out;
  int last = -1;
  for (const auto& f : fields) {
    if (static_cast<int>(f.id) == last) return Err::DuplicateField;
    if (static_cast<int>(f.id) < last) return Err::NonCanonicalOrder;
    if (f.value.size() > 0xFFFFFFFFull) return Err::ValueTooLong;
    out.push_back(f.id);
    put_u32be(out, static_cast<uint32_t>(f.value.size()));
    out.insert(out.end(), f.value.begin(), f.value.end());
    last = f.id;
  }
  return out;
}

Result<std::vector<Field>> tlv_decode(ByteSpan data) {
  std::vector<Field> fields;
  size_t off = 0;
  int last = -1;
  while (off < data.size()) {
    if (data.size() - off < 5) return Err::TrailingBytes;  // not even a field header
    const uint8_t id = data[off];
    const uint32_t len = get_u32be(data.data() + off + 1);
    off += 5;
    if (data.size() - off < len) return Err::Truncated;
    if (static_cast<int>(id) == last) return Err::DuplicateField;
    if (static_cast<int>(id) < last) return Err::NonCanonicalOrder;
    fields.push_back(Field{id, Bytes(data.begin() + static_cast<long>(off),
                                     data.begin() + static_cast<long>(off + len))});
    last = id;
    off += len;
  }
  return fields;
}

Result<Bytes> encode(const Message& m) {
  Bytes out = to_bytes(kMagic);
  out.push_back(kVersion);
  out.push_back(static_cast<uint8_t>(m.type));
  auto tlv = tlv_encode(m.fields);
  if (!tlv) return tlv.error();
  const Bytes& body = tlv.value();
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Result<Message> decode(ByteSpan frame) {
  const auto magic = as_span(kMagic);
  const size_t check = std::min(frame.size(), magic.size());
  if (!std::equal(magic.begin(), magic.begin() + static_cast<long>(check), frame.begin()))
    return Err::BadMagic;
  if (frame.size() < kHeaderLen) return Err::Truncated;
  if (frame[4] != kVersion) return Err::BadVersion;
  const uint8_t t = frame[5];
  if (t < static_cast<uint8_t>(MsgType::RegisterInit) ||
      t > static_cast<uint8_t>(MsgType::Error))
    return Err::UnknownType;

  auto fields = tlv_decode(frame.subspan(kHeaderLen));
  if (!fields) return fields.error();

  Message m;
  m.type = static_cast<MsgType>(t);
  m.fields = std::move(fields).value();
  return m;
}

// ---------------------------------------------------------------------------
// Blob helpers
// ---------------------------------------------------------------------------

Bytes encode_hybrid(const HybridCiphertext& ct) {
  std::vector<Field> fields;
  fields.push_back({0x01, ct.kem_ct});
  fields.push_back({0x02, Bytes(ct.nonce.begin(), ct.nonce.end())});
  fields.push_back({0x03, ct.aead_ct});
  return std::move(tlv_encode(fields)).value();
}

Result<HybridCiphertext> decode_hybrid(ByteSpan data) {
  auto fields = tlv_decode(data);
  if (!fields) return fields.error();
  const Bytes* kem_ct = find_field(fields.value(), 0x01);
  const Bytes* nonce = find_field(fields.value(), 0x02);
  const Bytes* aead_ct = find_field(fields.value(), 0x03);
  if (!kem_ct || !nonce || !aead_ct) return Err::MissingField;
  if (nonce->size() != 12) return Err::MalformedKey;

  HybridCiphertext ct;
  ct.kem_ct = *kem_ct;
  std::copy(nonce->begin(), nonce->end(), ct.nonce.begin());
  ct.aead_ct = *aead_ct;
  return ct;
}

Bytes encode_kem_pair(const KemKeyPair& kp) {
  std::vector<Field> fields;
  fields.push_back({0x01, kp.public_key});
  fields.push_back({0x02, kp.secret_key});
  fields.push_back({0x03, Bytes{static_cast<uint8_t>(kp.owner_role)}});
  fields.push_back({0x04, Bytes{static_cast<uint8_t>(kp.peer_role)}});
  Bytes created;
  put_u64be(created, kp.created_at);
  fields.push_back({0x05, std::move(created)});
  Bytes validity;
  put_u64be(validity, kp.validity);
  fields.push_back({0x06, std::move(validity)});
  return std::move(tlv_encode(fields)).value();
}

Result<KemKeyPair> decode_kem_pair(ByteSpan data) {
  auto fields = tlv_decode(data);
  if (!fields) return fields.error();
  const Bytes* pk = find_field(fields.value(), 0x01);
  const Bytes* sk = find_field(fields.value(), 0x02);
  const Bytes* owner = find_field(fields.value(), 0x03);
  const Bytes* peer = find_field(fields.value(), 0x04);
  const Bytes* created = find_field(fields.value(), 0x05);
  const Bytes* validity = find_field(fields.value(), 0x06);
  if (!pk || !sk || !owner || !peer || !created || !validity) return Err::MissingField;
  if (owner->size() != 1 || peer->size() != 1 || created->size() != 8 ||
      validity->size() != 8)
    return Err::MalformedKey;

  KemKeyPair kp;
  kp.public_key = *pk;
  kp.secret_key = *sk;
  kp.owner_role = static_cast<Role>((*owner)[0]);
  kp.peer_role = static_cast<Role>((*peer)[0]);
  kp.created_at = get_u64be(created->data());
  kp.validity = get_u64be(validity->data());
  return kp;
}

Bytes encode_sig_pair(const SigKeyPair& kp) {
  std::vector<Field> fields;
  fields.push_back({0x01, kp.public_key});
  fields.push_back({0x02, kp.secret_key});
  fields.push_back({0x03, Bytes{static_cast<uint8_t>(kp.owner_role)}});
  return std::move(tlv_encode(fields)).value();
}

Result<SigKeyPair> decode_sig_pair(ByteSpan data) {
  auto fields = tlv_decode(data);
  if (!fields) return fields.error();
  const Bytes* pk = find_field(fields.value(), 0x01);
  const Bytes* sk = find_field(fields.value(), 0x02);
  const Bytes* owner = find_field(fields.value(), 0x03);
  if (!pk || !sk || !owner) return Err::MissingField;
  if (owner->size() != 1) return Err::MalformedKey;

  SigKeyPair kp;
  kp.public_key = *pk;
  kp.secret_key = *sk;
  kp.owner_role = static_cast<Role>((*owner)[0]);
  return kp;
}

Bytes encode_token(const LongLivedToken& t) {
  std::vector<Field> fields;
  fields.push_back({0x01, Bytes(t.value.begin(), t.value.end())});
  Bytes counter;
  put_u64be(counter, t.counter);
  fields.push_back({0x02, std::move(counter)});
  fields.push_back({0x03, Bytes(t.chain_key.begin(), t.chain_key.end())});
  return std::move(tlv_encode(fields)).value();
}

Result<LongLivedToken> decode_token(ByteSpan data) {
  auto fields = tlv_decode(data);
  if (!fields) return fields.error();
  const Bytes* value = find_field(fields.value(), 0x01);
  const Bytes* counter = find_field(fields.value(), 0x02);
  const Bytes* chain_key = find_field(fields.value(), 0x03);
  if (!value || !counter || !chain_key) return Err::MissingField;
  if (value->size() != 32 || counter->size() != 8 || chain_key->size() != 32)
    return Err::MalformedKey;

  LongLivedToken t;
  std::copy(value->begin(), value->end(), t.value.begin());
  t.counter = get_u64be(counter->data());
  std::copy(chain_key->begin(), chain_key->end(), t.chain_key.begin());
  return t;
}

// ---------------------------------------------------------------------------
// ERROR messages
// ---------------------------------------------------------------------------

Message make_error(Err code, std::string_view detail) {
  Message m;
  m.type = MsgType::Error;
  Bytes code_bytes;
  put_u16be(code_bytes, static_cast<uint16_t>(code));
  m.set(0x01, std::move(code_bytes));
  if (!detail.empty()) m.set(0x02, to_bytes(detail));
  return m;
}

Result<WireError> parse_error(const Message& m) {
  if (m.type != MsgType::Error) return Err::UnknownType;
  const Bytes* code = m.field(0x01);
  if (!code || code->size() != 2) return Err::MissingField;

  WireError e;
  e.code = static_cast<Err>(get_u16be(code->data()));
  if (const Bytes* detail = m.field(0x02)) e.detail = to_string(*detail);
  return e;
}

}  // namespace asop::wire
