#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "asop/bytes.hpp"
#include "asop/error.hpp"

namespace asop {

enum class Role : uint8_t { Server = 1, Authenticator = 2, Device = 3 };

std::string_view role_name(Role r);

// One KEM key pair (X^Y_s, X^Y_p): generated by `owner_role` for use with
// `peer_role`. created_at + validity gives the expiry instant; validity 0
// means the pair does not expire on its own (session bookkeeping governs).
struct KemKeyPair {
  Bytes public_key;
  Bytes secret_key;
  Role owner_role = Role::Server;
  Role peer_role = Role::Server;
  uint64_t created_at = 0;
  uint64_t validity = 0;

  bool operator==(const KemKeyPair&) const = default;

  bool expired(uint64_t now) const {
    return validity != 0 && now >= created_at + validity;
  }
};

struct SigKeyPair {
  Bytes public_key;
  Bytes secret_key;
  Role owner_role = Role::Authenticator;

  bool operator==(const SigKeyPair&) const = default;
};

// C_K: the symmetric key the authenticator and device already share when the
// onboarding flow starts (established by the network-layer step).
struct NetworkSessionKey {
  std::array<uint8_t, 32> key{};
};

// T_n: single-use TOTP token riding one onboarding attempt.
struct TransientToken {
  std::string code;       // 8 ASCII digits
  uint64_t issued_at = 0;
  uint32_t step = 30;
  Bytes secret_id;        // opaque reference to the server-local TOTP secret
};

// T_D: long-lived token ratcheted forward once per use.
struct LongLivedToken {
  std::array<uint8_t, 32> value{};
  uint64_t counter = 0;
  std::array<uint8_t, 32> chain_key{};

  bool operator==(const LongLivedToken&) const = default;
};

// KEM ciphertext + AEAD envelope produced by seal(). aead_ct carries the
// 16-byte tag at its end.
struct HybridCiphertext {
  Bytes kem_ct;
  std::array<uint8_t, 12> nonce{};
  Bytes aead_ct;

  bool operator==(const HybridCiphertext&) const = default;
};

constexpr std::string_view kHkdfInfoPrefix = "ASOP-v1";  // normative, 7 bytes

// ---------------------------------------------------------------------------
// Backend: every primitive the protocol needs, swappable by name.
// "toy" is fully deterministic and NOT secure; it exists so transcripts and
// tests are reproducible byte-for-byte. "pqc" is reserved for a build with a
// real ML-KEM/ML-DSA provider.
// ---------------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string_view name() const = 0;

  virtual Result<KemKeyPair> kem_keygen(ByteSpan seed32, Role owner, Role peer,
                                        uint64_t created_at, uint64_t validity) = 0;
  // Returns (kem_ct, shared32).
  virtual Result<std::pair<Bytes, Bytes>> kem_encapsulate(ByteSpan pk,
                                                          ByteSpan eph_seed32) = 0;
  virtual Result<Bytes> kem_decapsulate(ByteSpan sk, ByteSpan kem_ct) = 0;

  virtual Result<SigKeyPair> sig_keygen(ByteSpan seed32, Role owner) = 0;
  virtual Result<Bytes> sign(ByteSpan sk, ByteSpan message) = 0;
  virtual bool verify(ByteSpan pk, ByteSpan message, ByteSpan sig) = 0;

  virtual Result<Bytes> aead_seal(ByteSpan key32, ByteSpan nonce12,
                                  ByteSpan plaintext, ByteSpan aad) = 0;
  virtual Result<Bytes> aead_open(ByteSpan key32, ByteSpan nonce12,
                                  ByteSpan ciphertext, ByteSpan aad) = 0;
};

struct BackendOptions {
  // When set, the toy backend mirrors its signature key directory to this
  // file so a verifier in another process can resolve secrets (demo only).
  std::filesystem::path toy_key_directory;
};

Result<std::shared_ptr<Backend>> make_backend(std::string_view name,
                                              const BackendOptions& opts = {});

// Deterministic stand-in for the PQC suite:
//   kem sk = SHA-256(seed), pk = SHA-256(sk || "pk")
//   encap: ct = SHA-256(pk || eph), shared = SHA-256(pk || ct)
//   sig  sk = seed, pk = SHA-256(sk), sign = HMAC-SHA-256(sk, m); the
//   verifier resolves sk from a key directory keyed by pk.
// AEAD is real AES-256-GCM.
class ToyBackend : public Backend {
 public:
  explicit ToyBackend(BackendOptions opts = {});

  std::string_view name() const override { return "toy"; }

  Result<KemKeyPair> kem_keygen(ByteSpan seed32, Role owner, Role peer,
                                uint64_t created_at, uint64_t validity) override;
  Result<std::pair<Bytes, Bytes>> kem_encapsulate(ByteSpan pk, ByteSpan eph) override;
  Result<Bytes> kem_decapsulate(ByteSpan sk, ByteSpan kem_ct) override;

  Result<SigKeyPair> sig_keygen(ByteSpan seed32, Role owner) override;
  Result<Bytes> sign(ByteSpan sk, ByteSpan message) override;
  bool verify(ByteSpan pk, ByteSpan message, ByteSpan sig) override;

  Result<Bytes> aead_seal(ByteSpan key32, ByteSpan nonce12, ByteSpan plaintext,
                          ByteSpan aad) override;
  Result<Bytes> aead_open(ByteSpan key32, ByteSpan nonce12, ByteSpan ciphertext,
                          ByteSpan aad) override;

 private:
  Bytes lookup_sig_secret(const std::string& pk_hex);
  void remember_sig_secret(const std::string& pk_hex, const Bytes& sk);

  BackendOptions opts_;
  mutable std::shared_mutex dir_mutex_;
  std::unordered_map<std::string, Bytes> sig_directory_;
};

// ---------------------------------------------------------------------------
// Hybrid public-key sealing: KEM encapsulation, HKDF-SHA-256 with info
// "ASOP-v1" || context, then AEAD with aad = context.
// ---------------------------------------------------------------------------

Result<HybridCiphertext> seal(Backend& b, ByteSpan recipient_pk, ByteSpan plaintext,
                              ByteSpan context, ByteSpan eph_seed32, ByteSpan nonce12);
Result<Bytes> open(Backend& b, ByteSpan recipient_sk, const HybridCiphertext& ct,
                   ByteSpan context);

// ---------------------------------------------------------------------------
// TOTP (RFC 6238) and the long-lived token ratchet.
// ---------------------------------------------------------------------------

enum class TotpHash : uint8_t { Sha1 = 1, Sha256 = 2 };

std::string totp_generate(ByteSpan secret, uint64_t unix_time, uint32_t step,
                          int digits, TotpHash hash);
bool totp_validate(ByteSpan secret, std::string_view code, uint64_t now,
                   uint32_t step, uint32_t skew_steps, int digits, TotpHash hash);

// value' = HMAC-SHA-256(chain_key, value || counter as 8-byte BE), counter+1.
Result<LongLivedToken> chain_next(const LongLivedToken& token);

// ---------------------------------------------------------------------------
// Deterministic randomness plumbing for test mode: each draw is
// HKDF(seed, "ASOP-seq" || label || draw index).
// ---------------------------------------------------------------------------

class SeedSequence {
 public:
  explicit SeedSequence(ByteSpan seed32, uint64_t start = 0);

  std::array<uint8_t, 32> next(std::string_view label);

  uint64_t position() const { return n_; }
  const std::array<uint8_t, 32>& seed() const { return seed_; }

 private:
  std::array<uint8_t, 32> seed_{};
  uint64_t n_ = 0;
};

// Per-key monotonic AEAD nonce: 4 zero bytes then a 64-bit BE counter.
class NonceCounter {
 public:
  explicit NonceCounter(uint64_t start = 0) : n_(start) {}

  std::array<uint8_t, 12> next();
  uint64_t position() const { return n_; }

 private:
  uint64_t n_ = 0;
};

}  // namespace asop
