#include "asop/crypto.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "asop/hash.hpp"

namespace asop {

std::string_view role_name(Role r) {
  switch (r) {
    case Role::Server: return "server";
    case Role::Authenticator: return "authenticator";
    case Role::Device: return "device";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// AES-256-GCM
// ---------------------------------------------------------------------------

namespace {

constexpr size_t kTagLen = 16;

Result<Bytes> gcm_seal(ByteSpan key, ByteSpan nonce, ByteSpan pt, ByteSpan aad) {
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  if (!ctx) return Err::DecryptFail;

  Bytes out(pt.size() + kTagLen);
  int len = 0;
  bool ok = EVP_EncryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) == 1 &&
            EVP_EncryptInit_ex(ctx, nullptr, nullptr, key.data(), nonce.data()) == 1;
  if (ok && !aad.empty()) {
    ok = EVP_EncryptUpdate(ctx, nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  }
  if (ok && !pt.empty()) {
    ok = EVP_EncryptUpdate(ctx, out.data(), &len, pt.data(), static_cast<int>(pt.size())) == 1;
  }
  int fin = 0;
  ok = ok && EVP_EncryptFinal_ex(ctx, out.data() + pt.size(), &fin) == 1 &&
       EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, kTagLen, out.data() + pt.size()) == 1;
  EVP_CIPHER_CTX_free(ctx);
  if (!ok) return Err::DecryptFail;
  return out;
}

Result<Bytes> gcm_open(ByteSpan key, ByteSpan nonce, ByteSpan ct, ByteSpan aad) {
  if (ct.size() < kTagLen) return Err::DecryptFail;
  const size_t pt_len = ct.size() - kTagLen;

  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  if (!ctx) return Err::DecryptFail;

  Bytes out(pt_len);
  Bytes tag(ct.begin() + static_cast<long>(pt_len), ct.end());
  int len = 0;
  bool ok = EVP_DecryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) == 1 &&
            EVP_DecryptInit_ex(ctx, nullptr, nullptr, key.data(), nonce.data()) == 1;
  if (ok && !aad.empty()) {
    ok = EVP_DecryptUpdate(ctx, nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  }
  if (ok && pt_len > 0) {
    ok = EVP_DecryptUpdate(ctx, out.data(), &len, ct.data(), static_cast<int>(pt_len)) == 1;
  }
  int fin = 0;
  ok = ok && EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, kTagLen, tag.data()) == 1 &&
       EVP_DecryptFinal_ex(ctx, out.data() + pt_len, &fin) == 1;
  EVP_CIPHER_CTX_free(ctx);
  if (!ok) return Err::DecryptFail;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ToyBackend
// ---------------------------------------------------------------------------

ToyBackend::ToyBackend(BackendOptions opts) : opts_(std::move(opts)) {}

Result<KemKeyPair> ToyBackend::kem_keygen(ByteSpan seed, Role owner, Role peer,
                                          uint64_t created_at, uint64_t validity) {
  if (seed.size() != 32) return Err::MalformedKey;
  KemKeyPair kp;
  kp.secret_key = sha256(seed);
  Bytes pk_input = kp.secret_key;
  const auto tag = as_span("pk");
  pk_input.insert(pk_input.end(), tag.begin(), tag.end());
  kp.public_key = sha256(pk_input);
  kp.owner_role = owner;
  kp.peer_role = peer;
  kp.created_at = created_at;
  kp.validity = validity;
  return kp;
}

Result<std::pair<Bytes, Bytes>> ToyBackend::kem_encapsulate(ByteSpan pk, ByteSpan eph) {
  if (pk.size() != 32 || eph.size() != 32) return Err::MalformedKey;
  Bytes ct_input(pk.begin(), pk.end());
  ct_input.insert(ct_input.end(), eph.begin(), eph.end());
  Bytes kem_ct = sha256(ct_input);

  Bytes sh_input(pk.begin(), pk.end());
  sh_input.insert(sh_input.end(), kem_ct.begin(), kem_ct.end());
  Bytes shared = sha256(sh_input);
  return std::make_pair(std::move(kem_ct), std::move(shared));
}

Result<Bytes> ToyBackend::kem_decapsulate(ByteSpan sk, ByteSpan kem_ct) {
  if (sk.size() != 32 || kem_ct.size() != 32) return Err::MalformedKey;
  Bytes pk_input(sk.begin(), sk.end());
  const auto tag = as_span("pk");
  pk_input.insert(pk_input.end(), tag.begin(), tag.end());
  Bytes pk = sha256(pk_input);

  Bytes sh_input = pk;
  sh_input.insert(sh_input.end(), kem_ct.begin(), kem_ct.end());
  return sha256(sh_input);
}

Result<SigKeyPair> ToyBackend::sig_keygen(ByteSpan seed, Role owner) {
  if (seed.size() != 32) return Err::MalformedKey;
  SigKeyPair kp;
  kp.secret_key = Bytes(seed.begin(), seed.end());
  kp.public_key = sha256(kp.secret_key);
  kp.owner_role = owner;
  remember_sig_secret(to_hex(kp.public_key), kp.secret_key);
  return kp;
}

Result<Bytes> ToyBackend::sign(ByteSpan sk, ByteSpan message) {
  if (sk.size() != 32) return Err::MalformedKey;
  return hmac_sha256(sk, message);
}

bool ToyBackend::verify(ByteSpan pk, ByteSpan message, ByteSpan sig) {
  if (pk.size() != 32 || sig.size() != 32) return false;
  Bytes sk = lookup_sig_secret(to_hex(pk));
  if (sk.empty()) return false;
  return constant_time_eq(hmac_sha256(sk, message), sig);
}

Result<Bytes> ToyBackend::aead_seal(ByteSpan key, ByteSpan nonce, ByteSpan pt, ByteSpan aad) {
  if (key.size() != 32 || nonce.size() != 12) return Err::MalformedKey;
  return gcm_seal(key, nonce, pt, aad);
}

Result<Bytes> ToyBackend::aead_open(ByteSpan key, ByteSpan nonce, ByteSpan ct, ByteSpan aad) {
  if (key.size() != 32 || nonce.size() != 12) return Err::MalformedKey;
  return gcm_open(key, nonce, ct, aad);
}

void ToyBackend::remember_sig_secret(const std::string& pk_hex, const Bytes& sk) {
  std::unique_lock lock(dir_mutex_);
  sig_directory_[pk_hex] = sk;
  if (!opts_.toy_key_directory.empty()) {
    std::ofstream f(opts_.toy_key_directory, std::ios::app);
    if (f) f << pk_hex << ' ' << to_hex(sk) << '\n';
  }
}

Bytes ToyBackend::lookup_sig_secret(const std::string& pk_hex) {
  {
    std::shared_lock lock(dir_mutex_);
    auto it = sig_directory_.find(pk_hex);
    if (it != sig_directory_.end()) return it->second;
  }
  if (opts_.toy_key_directory.empty()) return {};

  // Miss: another process may have registered the key since we last looked.
  std::unique_lock lock(dir_mutex_);
  std::ifstream f(opts_.toy_key_directory);
  std::string pk_col, sk_col;
  while (f >> pk_col >> sk_col) {
    auto sk = from_hex(sk_col);
    if (sk) sig_directory_[pk_col] = *sk;
  }
  auto it = sig_directory_.find(pk_hex);
  return it != sig_directory_.end() ? it->second : Bytes{};
}

Result<std::shared_ptr<Backend>> make_backend(std::string_view name,
                                              const BackendOptions& opts) {
  if (name == "toy") return std::shared_ptr<Backend>(std::make_shared<ToyBackend>(opts));
  if (name == "pqc") {
    // Reserved: needs a build with an ML-KEM-768/ML-DSA provider linked in.
    return Err::BackendUnavailable;
  }
  return Err::BackendUnavailable;
}

// ---------------------------------------------------------------------------
// Hybrid sealing
// ---------------------------------------------------------------------------

static Bytes derive_seal_key(ByteSpan shared, ByteSpan context) {
  Bytes info = to_bytes(kHkdfInfoPrefix);
  info.insert(info.end(), context.begin(), context.end());
  return hkdf_sha256(shared, {}, info, 32);
}

Result<HybridCiphertext> seal(Backend& b, ByteSpan recipient_pk, ByteSpan plaintext,
                              ByteSpan context, ByteSpan eph_seed, ByteSpan nonce) {
  if (nonce.size() != 12) return Err::MalformedKey;
  auto enc = b.kem_encapsulate(recipient_pk, eph_seed);
  if (!enc) return enc.error();
  auto& [kem_ct, shared] = enc.value();

  Bytes key = derive_seal_key(shared, context);
  auto ct = b.aead_seal(key, nonce, plaintext, context);
  if (!ct) return ct.error();

  HybridCiphertext out;
  out.kem_ct = std::move(kem_ct);
  std::copy(nonce.begin(), nonce.end(), out.nonce.begin());
  out.aead_ct = std::move(ct).value();
  return out;
}

Result<Bytes> open(Backend& b, ByteSpan recipient_sk, const HybridCiphertext& ct,
                   ByteSpan context) {
  auto shared = b.kem_decapsulate(recipient_sk, ct.kem_ct);
  if (!shared) return Err::DecryptFail;
  Bytes key = derive_seal_key(shared.value(), context);
  auto pt = b.aead_open(key, ct.nonce, ct.aead_ct, context);
  if (!pt) return Err::DecryptFail;
  return pt;
}

// ---------------------------------------------------------------------------
// TOTP / token chain
// ---------------------------------------------------------------------------

std::string totp_generate(ByteSpan secret, uint64_t unix_time, uint32_t step,
                          int digits, TotpHash hash) {
  const uint64_t counter = unix_time / step;
  const auto counter_be = be64(counter);
  Bytes mac = (hash == TotpHash::Sha1) ? hmac_sha1(secret, counter_be)
                                       : hmac_sha256(secret, counter_be);
  const size_t off = mac.back() & 0x0F;
  uint32_t bin = (static_cast<uint32_t>(mac[off] & 0x7F) << 24) |
                 (static_cast<uint32_t>(mac[off + 1]) << 16) |
                 (static_cast<uint32_t>(mac[off + 2]) << 8) |
                 static_cast<uint32_t>(mac[off + 3]);
  uint32_t mod = 1;
  for (int i = 0; i < digits; ++i) mod *= 10;
  std::string code = std::to_string(bin % mod);
  while (code.size() < static_cast<size_t>(digits)) code.insert(code.begin(), '0');
  return code;
}

bool totp_validate(ByteSpan secret, std::string_view code, uint64_t now,
                   uint32_t step, uint32_t skew_steps, int digits, TotpHash hash) {
  const int64_t skew = static_cast<int64_t>(skew_steps);
  for (int64_t i = -skew; i <= skew; ++i) {
    const int64_t t = static_cast<int64_t>(now) + i * static_cast<int64_t>(step);
    if (t < 0) continue;
    if (totp_generate(secret, static_cast<uint64_t>(t), step, digits, hash) == code)
      return true;
  }
  return false;
}

Result<LongLivedToken> chain_next(const LongLivedToken& token) {
  if (token.counter == UINT64_MAX) return Err::CounterOverflow;
  Bytes input(token.value.begin(), token.value.end());
  const auto counter_be = be64(token.counter);
  input.insert(input.end(), counter_be.begin(), counter_be.end());
  Bytes next = hmac_sha256(token.chain_key, input);

  LongLivedToken out;
  std::copy(next.begin(), next.end(), out.value.begin());
  out.counter = token.counter + 1;
  out.chain_key = token.chain_key;
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic sequences
// ---------------------------------------------------------------------------

SeedSequence::SeedSequence(ByteSpan seed, uint64_t start) : n_(start) {
  std::copy(seed.begin(), seed.end(), seed_.begin());
}

std::array<uint8_t, 32> SeedSequence::next(std::string_view label) {
  Bytes info = to_bytes("ASOP-seq");
  info.insert(info.end(), label.begin(), label.end());
  const auto idx = be64(n_++);
  info.insert(info.end(), idx.begin(), idx.end());
  Bytes out = hkdf_sha256(seed_, {}, info, 32);
  std::array<uint8_t, 32> arr{};
  std::copy(out.begin(), out.end(), arr.begin());
  return arr;
}

std::array<uint8_t, 12> NonceCounter::next() {
  std::array<uint8_t, 12> out{};
  const auto ctr = be64(n_++);
  std::copy(ctr.begin(), ctr.end(), out.begin() + 4);
  return out;
}

}  // namespace asop
