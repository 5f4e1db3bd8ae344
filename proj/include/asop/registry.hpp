#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "asop/bytes.hpp"
#include "asop/crypto.hpp"
#include "asop/error.hpp"

namespace asop {

// UUIDv4 layout over deterministic bytes: first 16 bytes of the seed with
// version/variant bits forced.
Bytes uuid_v4_from_seed(ByteSpan seed);
std::string uuid_to_string(ByteSpan uuid);
std::optional<Bytes> uuid_from_string(std::string_view text);

}  // namespace asop

namespace asop::store {

enum class DeviceStatus : uint8_t { Active = 1, Revoked = 2 };

struct DeviceRecord {
  Bytes device_uuid;  // 16 bytes
  Bytes d_s_pk;
  KemKeyPair s_d_pair;
  LongLivedToken t_d_head;
  DeviceStatus status = DeviceStatus::Active;
  uint64_t onboarded_at = 0;

  bool operator==(const DeviceRecord&) const = default;
};

struct StoreOptions {
  // Cleared only by the harness mutation twins, to prove the revocation
  // tests detect a regression.
  bool enforce_revocation = true;
};

// Single-writer device registry with canonical file persistence:
//   "ASOPSTOR" | (u32be record length | record TLV)* | CRC-32C (4 bytes BE)
class Store {
 public:
  explicit Store(StoreOptions opts = {}) : opts_(opts) {}

  [[nodiscard]] Err insert(DeviceRecord rec);
  const DeviceRecord* lookup(ByteSpan device_uuid) const;
  Result<LongLivedToken> advance_token(ByteSpan device_uuid);
  [[nodiscard]] Err revoke(ByteSpan device_uuid);  // idempotent, terminal

  size_t size() const { return records_.size(); }
  uint64_t insert_count() const { return insert_count_; }
  const std::map<Bytes, DeviceRecord>& records() const { return records_; }

  Bytes serialize() const;
  static Result<Store> deserialize(ByteSpan data, StoreOptions opts = {});

  [[nodiscard]] Err persist(const std::filesystem::path& path) const;
  static Result<Store> load(const std::filesystem::path& path, StoreOptions opts = {});

 private:
  StoreOptions opts_;
  std::map<Bytes, DeviceRecord> records_;  // keyed by uuid; map order = file order
  uint64_t insert_count_ = 0;
};

}  // namespace asop::store
