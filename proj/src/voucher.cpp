#include "asop/voucher.hpp"

#include "asop/wire.hpp"

namespace asop::voucher {

Bytes transfer_payload(ByteSpan device_guid, ByteSpan next_owner_pk) {
  std::vector<wire::Field> fields;
  fields.push_back({0x01, Bytes(device_guid.begin(), device_guid.end())});
  fields.push_back({0x02, Bytes(next_owner_pk.begin(), next_owner_pk.end())});
  return std::move(wire::tlv_encode(fields)).value();
}

Result<Voucher> extend(Backend& b, const Voucher& v, ByteSpan next_owner_pk,
                       ByteSpan current_owner_sk) {
  const Bytes& owner_pk = v.entries.empty() ? v.anchor_pk : v.entries.back().owner_pk;

  const Bytes payload = transfer_payload(v.device_guid, next_owner_pk);
  auto sig = b.sign(current_owner_sk, payload);
  if (!sig) return sig.error();
  // A signature that the current owner's public key rejects means the caller
  // does not hold that owner's key.
  if (!b.verify(owner_pk, payload, sig.value())) return Err::BadSignature;

  Voucher out = v;
  out.entries.push_back(
      VoucherEntry{Bytes(next_owner_pk.begin(), next_owner_pk.end()),
                   std::move(sig).value()});
  return out;
}

bool verify_chain(Backend& b, const Voucher& v) {
  if (v.device_guid.size() != 16 || v.anchor_pk.empty()) return false;
  const Bytes* signer = &v.anchor_pk;
  for (const auto& entry : v.entries) {
    if (!b.verify(*signer, transfer_payload(v.device_guid, entry.owner_pk),
                  entry.signature))
      return false;
    signer = &entry.owner_pk;
  }
  return true;
}

}  // namespace asop::voucher
