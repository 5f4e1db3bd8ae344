#pragma once

#include <map>
#include <memory>
#include <string>

#include "asop/bytes.hpp"
#include "asop/crypto.hpp"
#include "asop/error.hpp"
#include "asop/registry.hpp"
#include "asop/wire.hpp"

namespace asop::proto {

// S_a: where the device should reach the server. Carried end to end for
// fidelity; the demo transport only uses host and port.
struct ServerApiAddress {
  std::string host;
  uint16_t port = 0;
  std::string path;

  bool operator==(const ServerApiAddress&) const = default;
};

Bytes encode_api_address(const ServerApiAddress& a);
Result<ServerApiAddress> decode_api_address(ByteSpan data);

struct ProtocolConfig {
  uint64_t session_validity = 24 * 60 * 60;  // root key pair lifetime, seconds
  uint32_t totp_step = 30;
  uint32_t totp_skew_steps = 1;
  int totp_digits = 8;
  TotpHash totp_hash = TotpHash::Sha1;
};

// Deliberate defense regressions, used only by the harness mutation twins to
// prove each scenario's predicate actually detects a broken defense.
struct MutationSwitches {
  bool disable_token_consumption = false;
  bool disable_totp_validation = false;
  bool disable_signature_check = false;
  bool disable_session_expiry = false;
};

// Sealed-payload context labels. Each doubles as the AEAD associated data,
// so a ciphertext cut from one message type cannot be replayed into another.
inline constexpr std::string_view kCtxOffer = "offer";
inline constexpr std::string_view kCtxProvision = "provision";
inline constexpr std::string_view kCtxRegister = "register";
inline constexpr std::string_view kCtxAccept = "accept";
inline constexpr std::string_view kCtxNotify = "notify";
inline constexpr std::string_view kCtxToken = "tok";

inline constexpr std::string_view kConnectedStatus = "connected";

// ---------------------------------------------------------------------------
// Authenticator (the user's phone app)
// ---------------------------------------------------------------------------

enum class AuthPhase : uint8_t {
  Idle = 0,
  Registered = 1,
  AwaitOffer = 2,
  OfferForwarded = 3,
  Done = 4,
};

std::string_view auth_phase_name(AuthPhase p);

class Authenticator {
 public:
  Authenticator(std::shared_ptr<Backend> backend, std::string account_id,
                NetworkSessionKey ck, ByteSpan seed32, ProtocolConfig cfg = {});

  // -> REGISTER_INIT. Draws the A-side root key pairs.
  Result<wire::Message> begin_register(uint64_t now);
  // <- REGISTER_ACK: stores the server root public key and session expiry.
  [[nodiscard]] Err process_register_ack(const wire::Message& m, uint64_t now);
  // -> ADD_DEVICE_REQUEST.
  Result<wire::Message> request_add_device(uint64_t now);
  // <- ONBOARD_OFFER -> DEVICE_PROVISION: re-seals the token to the server
  // key, signs it, and wraps everything for the device under C_K.
  Result<wire::Message> process_offer(const wire::Message& m);
  // <- ONBOARD_NOTIFY: surfaces the onboarded device uuid.
  [[nodiscard]] Err process_notify(const wire::Message& m);

  AuthPhase phase() const { return phase_; }
  const std::string& account_id() const { return account_id_; }
  const KemKeyPair& kem_pair() const { return kem_pair_; }
  const SigKeyPair& sig_pair() const { return sig_pair_; }
  const Bytes& server_kem_pk() const { return server_kem_pk_; }
  uint64_t session_expiry() const { return session_expiry_; }
  const Bytes& onboarded_uuid() const { return onboarded_uuid_; }

  // Full state round-trip so a CLI client can span several invocations.
  Bytes save_state() const;
  static Result<Authenticator> restore(std::shared_ptr<Backend> backend,
                                       ByteSpan blob, ProtocolConfig cfg = {});

 private:
  std::shared_ptr<Backend> backend_;
  std::string account_id_;
  NetworkSessionKey ck_;
  ProtocolConfig cfg_;
  SeedSequence seq_;
  NonceCounter nonces_;

  AuthPhase phase_ = AuthPhase::Idle;
  KemKeyPair kem_pair_;   // A^S
  SigKeyPair sig_pair_;   // A's signing pair
  Bytes server_kem_pk_;   // S^A_p
  uint64_t session_expiry_ = 0;
  Bytes onboarded_uuid_;
};

// ---------------------------------------------------------------------------
// Device
// ---------------------------------------------------------------------------

enum class DevicePhase : uint8_t {
  Unprovisioned = 0,
  Provisioned = 1,  // reserved intermediate state; provision handling emits
                    // the registration in the same step and lands on Registered
  Registered = 2,
  Onboarded = 3,
};

std::string_view device_phase_name(DevicePhase p);

class Device {
 public:
  Device(std::shared_ptr<Backend> backend, NetworkSessionKey ck, ByteSpan seed32,
         ProtocolConfig cfg = {});

  // <- DEVICE_PROVISION -> DEVICE_REGISTER: opens the C_K envelope, draws the
  // device key pair and uuid, and seals the registration to the server key.
  Result<wire::Message> process_provision(const wire::Message& m, uint64_t now);
  // <- DEVICE_ACCEPT: stores the long-lived token and S^D public key.
  [[nodiscard]] Err process_accept(const wire::Message& m);

  DevicePhase phase() const { return phase_; }
  const Bytes& device_uuid() const { return device_uuid_; }
  const KemKeyPair& kem_pair() const { return kem_pair_; }
  const ServerApiAddress& server_api() const { return server_api_; }
  const LongLivedToken& long_token() const { return long_token_; }
  const Bytes& server_device_pk() const { return server_device_pk_; }

  // Ratchets the local token copy, mirroring the server-side chain.
  Result<LongLivedToken> advance_token();

  Bytes save_state() const;
  static Result<Device> restore(std::shared_ptr<Backend> backend, ByteSpan blob,
                                ProtocolConfig cfg = {});

 private:
  std::shared_ptr<Backend> backend_;
  NetworkSessionKey ck_;
  ProtocolConfig cfg_;
  SeedSequence seq_;
  NonceCounter nonces_;

  DevicePhase phase_ = DevicePhase::Unprovisioned;
  ServerApiAddress server_api_;
  Bytes server_kem_pk_;  // S^A_p as forwarded by the authenticator
  KemKeyPair kem_pair_;  // D^S
  Bytes device_uuid_;    // D_u
  LongLivedToken long_token_;   // T_D, set at Onboarded
  Bytes server_device_pk_;      // S^D_p, set at Onboarded
};

// ---------------------------------------------------------------------------
// Server engine
// ---------------------------------------------------------------------------

struct ServerSession {
  std::string account_id;
  Bytes a_kem_pk;
  Bytes a_sig_pk;
  KemKeyPair s_kem_pair;  // S^A
  Bytes totp_secret;      // 20 bytes
  uint64_t issued_token_time = 0;
  bool token_issued = false;
  bool token_consumed = false;
  uint64_t key_expiry = 0;
};

// Result of a successful device registration: the two outbound messages plus
// routing data for the transport.
struct RegisterOutcome {
  wire::Message accept;  // to the device
  wire::Message notify;  // to the authenticator that requested the add
  std::string account_id;
  Bytes device_uuid;
};

class ServerEngine {
 public:
  ServerEngine(std::shared_ptr<Backend> backend, store::Store& registry,
               ServerApiAddress api, ByteSpan seed32, ProtocolConfig cfg = {},
               MutationSwitches mutations = {});

  // <- REGISTER_INIT -> REGISTER_ACK. Creates the account session and the
  // S^A root pair with the configured validity.
  Result<wire::Message> register_account(const wire::Message& m, uint64_t now);
  // <- ADD_DEVICE_REQUEST -> ONBOARD_OFFER. Issues a fresh transient token.
  Result<wire::Message> add_device(const wire::Message& m, uint64_t now);
  // <- DEVICE_REGISTER -> (DEVICE_ACCEPT, ONBOARD_NOTIFY). Validates in
  // order: seal, signature, sealed token, token freshness, single use,
  // uuid uniqueness; nothing is mutated unless every check passes.
  Result<RegisterOutcome> device_register(const wire::Message& m, uint64_t now);

  const ServerSession* session(const std::string& account_id) const;
  store::Store& registry() { return registry_; }
  const ServerApiAddress& api() const { return api_; }

  // Deterministic serialization of all mutable engine state, for
  // no-mutation-on-error checks.
  Bytes snapshot() const;

 private:
  std::shared_ptr<Backend> backend_;
  store::Store& registry_;
  ServerApiAddress api_;
  ProtocolConfig cfg_;
  MutationSwitches mutations_;
  SeedSequence seq_;
  NonceCounter nonces_;

  std::map<std::string, ServerSession> sessions_;  // ordered: deterministic scans
};

}  // namespace asop::proto
