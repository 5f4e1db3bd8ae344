#pragma once

#include <vector>

#include "asop/bytes.hpp"
#include "asop/crypto.hpp"
#include "asop/error.hpp"

namespace asop::voucher {

// One ownership transfer: the previous owner signs (device_guid, owner_pk).
struct VoucherEntry {
  Bytes owner_pk;
  Bytes signature;

  bool operator==(const VoucherEntry&) const = default;
};

// Manufacturer-anchored chain of ownership transfers. An empty entry list is
// a valid voucher (device still with the manufacturer).
struct Voucher {
  Bytes device_guid;  // 16 bytes
  Bytes anchor_pk;    // manufacturer key
  std::vector<VoucherEntry> entries;

  bool operator==(const Voucher&) const = default;
};

// Signature payload for one transfer, TLV-encoded so parsing is unambiguous.
Bytes transfer_payload(ByteSpan device_guid, ByteSpan next_owner_pk);

// Appends a transfer signed by the current owner (last entry, or the anchor
// for an empty chain). The signing key must match the current owner's public
// key or the call fails.
Result<Voucher> extend(Backend& b, const Voucher& v, ByteSpan next_owner_pk,
                       ByteSpan current_owner_sk);

// True iff every link verifies in order from the anchor. Malformed -> false.
bool verify_chain(Backend& b, const Voucher& v);

}  // namespace asop::voucher
