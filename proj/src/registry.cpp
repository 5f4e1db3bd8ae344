#include "asop/registry.hpp"

#include <cstdio>
#include <fstream>

#include "asop/hash.hpp"
#include "asop/wire.hpp"

namespace asop {

Bytes uuid_v4_from_seed(ByteSpan seed) {
  Bytes uuid(seed.begin(), seed.begin() + 16);
  uuid[6] = static_cast<uint8_t>((uuid[6] & 0x0F) | 0x40);  // version 4
  uuid[8] = static_cast<uint8_t>((uuid[8] & 0x3F) | 0x80);  // variant 10
  return uuid;
}

std::string uuid_to_string(ByteSpan uuid) {
  const std::string hex = to_hex(uuid);
  std::string out;
  out.reserve(36);
  for (size_t i = 0; i < hex.size(); ++i) {
    if (i == 8 || i == 12 || i == 16 || i == 20) out.push_back('-');
    out.push_back(hex[i]);
  }
  return out;
}

std::optional<Bytes> uuid_from_string(std::string_view text) {
  // Only the canonical dashed form is accepted: 8-4-4-4-12 hex groups.
  if (text.size() != 36) return std::nullopt;
  std::string hex;
  hex.reserve(32);
  for (size_t i = 0; i < text.size(); ++i) {
    const bool dash_slot = (i == 8 || i == 13 || i == 18 || i == 23);
    if (dash_slot != (text[i] == '-')) return std::nullopt;
    if (!dash_slot) hex.push_back(text[i]);
  }
  auto bytes = from_hex(hex);
  if (!bytes || bytes->size() != 16) return std::nullopt;
  return bytes;
}

}  // namespace asop

namespace asop::store {

namespace {

Bytes encode_record(const DeviceRecord& rec) {
  std::vector<wire::Field> fields;
  fields.push_back({0x01, rec.device_uuid});
  fields.push_back({0x02, rec.d_s_pk});
  fields.push_back({0x03, wire::encode_kem_pair(rec.s_d_pair)});
  fields.push_back({0x04, wire::encode_token(rec.t_d_head)});
  fields.push_back({0x05, Bytes{static_cast<uint8_t>(rec.status)}});
  Bytes at;
  put_u64be(at, rec.onboarded_at);
  fields.push_back({0x06, std::move(at)});
  return std::move(wire::tlv_encode(fields)).value();
}

Result<DeviceRecord> decode_record(ByteSpan data) {
  auto fields = wire::tlv_decode(data);
  if (!fields) return Err::StoreCorrupt;
  const Bytes* uuid = wire::find_field(fields.value(), 0x01);
  const Bytes* d_s_pk = wire::find_field(fields.value(), 0x02);
  const Bytes* pair = wire::find_field(fields.value(), 0x03);
  const Bytes* token = wire::find_field(fields.value(), 0x04);
  const Bytes* status = wire::find_field(fields.value(), 0x05);
  const Bytes* at = wire::find_field(fields.value(), 0x06);
  if (!uuid || !d_s_pk || !pair || !token || !status || !at) return Err::StoreCorrupt;
  if (uuid->size() != 16 || status->size() != 1 || at->size() != 8)
    return Err::StoreCorrupt;

  auto kem_pair = wire::decode_kem_pair(*pair);
  auto t_d = wire::decode_token(*token);
  if (!kem_pair || !t_d) return Err::StoreCorrupt;
  const uint8_t st = (*status)[0];
  if (st != static_cast<uint8_t>(DeviceStatus::Active) &&
      st != static_cast<uint8_t>(DeviceStatus::Revoked))
    return Err::StoreCorrupt;

  DeviceRecord rec;
  rec.device_uuid = *uuid;
  rec.d_s_pk = *d_s_pk;
  rec.s_d_pair = std::move(kem_pair).value();
  rec.t_d_head = std::move(t_d).value();
  rec.status = static_cast<DeviceStatus>(st);
  rec.onboarded_at = get_u64be(at->data());
  return rec;
}

constexpr std::string_view kStoreMagic = "ASOPSTOR";

}  // namespace

Err Store::insert(DeviceRecord rec) {
  if (records_.contains(rec.device_uuid)) return Err::DuplicateDevice;
  Bytes key = rec.device_uuid;
  records_.emplace(std::move(key), std::move(rec));
  ++insert_count_;
  return Err::Ok;
}

const DeviceRecord* Store::lookup(ByteSpan device_uuid) const {
  auto it = records_.find(Bytes(device_uuid.begin(), device_uuid.end()));
  return it == records_.end() ? nullptr : &it->second;
}

Result<LongLivedToken> Store::advance_token(ByteSpan device_uuid) {
  auto it = records_.find(Bytes(device_uuid.begin(), device_uuid.end()));
  if (it == records_.end()) return Err::UnknownDevice;
  if (opts_.enforce_revocation && it->second.status == DeviceStatus::Revoked)
    return Err::RevokedDevice;
  auto next = chain_next(it->second.t_d_head);
  if (!next) return next.error();
  it->second.t_d_head = next.value();
  return next;
}

Err Store::revoke(ByteSpan device_uuid) {
  auto it = records_.find(Bytes(device_uuid.begin(), device_uuid.end()));
  if (it == records_.end()) return Err::UnknownDevice;
  it->second.status = DeviceStatus::Revoked;
  return Err::Ok;
}

Bytes Store::serialize() const {
  Bytes out = to_bytes(kStoreMagic);
  for (const auto& [uuid, rec] : records_) {
    Bytes blob = encode_record(rec);
    put_u32be(out, static_cast<uint32_t>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
  }
  put_u32be(out, crc32c(out));
  return out;
}

Result<Store> Store::deserialize(ByteSpan data, StoreOptions opts) {
  const auto magic = as_span(kStoreMagic);
  if (data.size() < magic.size() + 4) return Err::StoreCorrupt;
  if (!std::equal(magic.begin(), magic.end(), data.begin())) return Err::StoreCorrupt;

  const size_t body_len = data.size() - 4;
  const uint32_t declared = get_u32be(data.data() + body_len);
  if (crc32c(data.first(body_len)) != declared) return Err::StoreCorrupt;

  Store s(opts);
  size_t off = magic.size();
  while (off < body_len) {
    if (body_len - off < 4) return Err::StoreCorrupt;
    const uint32_t len = get_u32be(data.data() + off);
    off += 4;
    if (body_len - off < len) return Err::StoreCorrupt;
    auto rec = decode_record(data.subspan(off, len));
    if (!rec) return rec.error();
    off += len;
    if (s.insert(std::move(rec).value()) != Err::Ok) return Err::StoreCorrupt;
  }
  s.insert_count_ = 0;  // counts only inserts made after load
  return s;
}

Err Store::persist(const std::filesystem::path& path) const {
  const Bytes data = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return Err::IoError;
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<long>(data.size()));
  f.flush();
  return f.good() ? Err::Ok : Err::IoError;
}

Result<Store> Store::load(const std::filesystem::path& path, StoreOptions opts) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return Err::IoError;
  Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(data, opts);
}

}  // namespace asop::store
