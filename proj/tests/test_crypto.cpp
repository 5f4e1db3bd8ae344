#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "asop/crypto.hpp"
#include "asop/hash.hpp"
#include "oracle_totp.hpp"

using namespace asop;

namespace {

Bytes hex(const std::string& s) {
  auto r = from_hex(s);
  REQUIRE(r.has_value());
  return *r;
}

std::array<uint8_t, 32> zeros32() { return {}; }

std::shared_ptr<Backend> toy() {
  auto b = make_backend("toy");
  REQUIRE(b.ok());
  return b.value();
}

}  // namespace

// ---------------------------------------------------------------------------
// Hash / MAC / KDF wrappers against published vectors
// ---------------------------------------------------------------------------

TEST_CASE("sha256 matches published vectors") {
  CHECK(to_hex(sha256({})) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(sha256(to_bytes("abc"))) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("hmac-sha256 matches RFC 4231 case 1") {
  Bytes key(20, 0x0b);
  CHECK(to_hex(hmac_sha256(key, to_bytes("Hi There"))) ==
        "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
}

TEST_CASE("hmac-sha1 matches RFC 2202 case 1") {
  Bytes key(20, 0x0b);
  CHECK(to_hex(hmac_sha1(key, to_bytes("Hi There"))) ==
        "b617318655057264e28bc0b6fb378c8ef146be00");
}

TEST_CASE("hkdf-sha256 matches RFC 5869 test case 1") {
  Bytes ikm(22, 0x0b);
  Bytes salt = hex("000102030405060708090a0b0c");
  Bytes info = hex("f0f1f2f3f4f5f6f7f8f9");
  Bytes okm = hkdf_sha256(ikm, salt, info, 42);
  CHECK(to_hex(okm) ==
        "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf"
        "34007208d5b887185865");
}

TEST_CASE("crc32c matches the canonical check value") {
  CHECK(crc32c(to_bytes("123456789")) == 0xe3069283u);
}

TEST_CASE("reference hashes agree with the production wrappers") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    Bytes msg(rng() % 200);
    for (auto& b : msg) b = static_cast<uint8_t>(rng());
    Bytes key(1 + rng() % 100);
    for (auto& b : key) b = static_cast<uint8_t>(rng());
    oracle::Bytes omsg(msg.begin(), msg.end());
    oracle::Bytes okey(key.begin(), key.end());
    CHECK(to_hex(sha256(msg)) == to_hex(oracle::sha256(omsg)));
    CHECK(to_hex(hmac_sha256(key, msg)) ==
          to_hex(oracle::hmac_sha256(okey, omsg)));
    CHECK(to_hex(hmac_sha1(key, msg)) == to_hex(oracle::hmac_sha1(okey, omsg)));
  }
}

// ---------------------------------------------------------------------------
// Toy KEM
// ---------------------------------------------------------------------------

TEST_CASE("toy kem derives the frozen deterministic values") {
  auto b = toy();
  auto kp = b->kem_keygen(zeros32(), Role::Server, Role::Authenticator, 0, 0);
  REQUIRE(kp.ok());
  CHECK(to_hex(kp.value().secret_key) ==
        "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925");
  CHECK(to_hex(kp.value().public_key) ==
        "2a8dc1e6bfe958bd10747bb1f2dbf491cb7d74061f76b030ace17094296d42ed");

  auto enc = b->kem_encapsulate(kp.value().public_key, zeros32());
  REQUIRE(enc.ok());
  CHECK(to_hex(enc.value().first) ==
        "28a267dc042436087568c9391eb70ee0929959ca9b8c8a85c63700a9db6f6bf6");
  CHECK(to_hex(enc.value().second) ==
        "f6c2a36c9fe6cc89ab419dcdf5691c1b33b4743425097d6a98d9b2ed5453bf53");

  auto dec = b->kem_decapsulate(kp.value().secret_key, enc.value().first);
  REQUIRE(dec.ok());
  CHECK(dec.value() == enc.value().second);
}

TEST_CASE("toy kem rejects malformed key sizes") {
  auto b = toy();
  Bytes short_seed(16, 0);
  CHECK(b->kem_keygen(short_seed, Role::Server, Role::Device, 0, 0).error() ==
        Err::MalformedKey);
  Bytes pk(31, 0);
  CHECK(b->kem_encapsulate(pk, zeros32()).error() == Err::MalformedKey);
  Bytes sk(33, 0);
  Bytes ct(32, 0);
  CHECK(b->kem_decapsulate(sk, ct).error() == Err::MalformedKey);
}

TEST_CASE("kem pair expiry boundary") {
  auto b = toy();
  auto kp = b->kem_keygen(zeros32(), Role::Server, Role::Authenticator, 100, 50);
  REQUIRE(kp.ok());
  CHECK_FALSE(kp.value().expired(100));
  CHECK_FALSE(kp.value().expired(149));
  CHECK(kp.value().expired(150));
  CHECK(kp.value().expired(10000));

  auto forever = b->kem_keygen(zeros32(), Role::Server, Role::Authenticator,
                               100, 0);
  CHECK_FALSE(forever.value().expired(UINT64_MAX));
}

// ---------------------------------------------------------------------------
// Toy signatures
// ---------------------------------------------------------------------------

TEST_CASE("toy signature sign/verify round trip and rejections") {
  auto b = toy();
  auto kp = b->sig_keygen(zeros32(), Role::Authenticator);
  REQUIRE(kp.ok());
  Bytes msg = to_bytes("attest this");
  auto sig = b->sign(kp.value().secret_key, msg);
  REQUIRE(sig.ok());
  CHECK(b->verify(kp.value().public_key, msg, sig.value()));

  Bytes bad_sig = sig.value();
  bad_sig[0] ^= 0x01;
  CHECK_FALSE(b->verify(kp.value().public_key, msg, bad_sig));

  Bytes bad_msg = msg;
  bad_msg[0] ^= 0x01;
  CHECK_FALSE(b->verify(kp.value().public_key, bad_msg, sig.value()));

  std::array<uint8_t, 32> other{};
  other[0] = 1;
  auto kp2 = b->sig_keygen(other, Role::Authenticator);
  CHECK_FALSE(b->verify(kp2.value().public_key, msg, sig.value()));
}

TEST_CASE("toy signature key directory can be shared through a file") {
  const auto path = std::filesystem::temp_directory_path() /
                    "asop-test-sigdir.txt";
  std::filesystem::remove(path);
  BackendOptions opts;
  opts.toy_key_directory = path;

  auto signer = make_backend("toy", opts).value();
  auto verifier = make_backend("toy", opts).value();  // separate directory map

  auto kp = signer->sig_keygen(zeros32(), Role::Authenticator);
  REQUIRE(kp.ok());
  Bytes msg = to_bytes("cross process");
  auto sig = signer->sign(kp.value().secret_key, msg);
  REQUIRE(sig.ok());
  // The verifier never saw the keygen; it resolves the key via the file.
  CHECK(verifier->verify(kp.value().public_key, msg, sig.value()));
  std::filesystem::remove(path);
}

TEST_CASE("unknown and reserved backends are unavailable") {
  CHECK(make_backend("pqc").error() == Err::BackendUnavailable);
  CHECK(make_backend("nope").error() == Err::BackendUnavailable);
  CHECK(make_backend("toy").ok());
}

// ---------------------------------------------------------------------------
// AEAD
// ---------------------------------------------------------------------------

TEST_CASE("aead matches an independently computed AES-256-GCM vector") {
  auto b = toy();
  Bytes nonce(12, 0);
  auto ct = b->aead_seal(zeros32(), nonce, to_bytes("hello"), to_bytes("ctx"));
  REQUIRE(ct.ok());
  CHECK(to_hex(ct.value()) == "a6c22c51228be08f29e069c31836b31608b7736167");
  auto pt = b->aead_open(zeros32(), nonce, ct.value(), to_bytes("ctx"));
  REQUIRE(pt.ok());
  CHECK(to_string(pt.value()) == "hello");
}

TEST_CASE("aead rejects any modification") {
  auto b = toy();
  std::array<uint8_t, 32> key{};
  key[5] = 9;
  Bytes nonce(12, 3);
  Bytes aad = to_bytes("label");
  auto ct = b->aead_seal(key, nonce, to_bytes("payload bytes"), aad);
  REQUIRE(ct.ok());

  for (size_t i = 0; i < ct.value().size(); ++i) {
    Bytes bad = ct.value();
    bad[i] ^= 0x80;
    CHECK(b->aead_open(key, nonce, bad, aad).error() == Err::DecryptFail);
  }
  Bytes other_nonce(12, 4);
  CHECK(b->aead_open(key, other_nonce, ct.value(), aad).error() ==
        Err::DecryptFail);
  CHECK(b->aead_open(key, nonce, ct.value(), to_bytes("other")).error() ==
        Err::DecryptFail);
  std::array<uint8_t, 32> other_key = key;
  other_key[0] ^= 1;
  CHECK(b->aead_open(other_key, nonce, ct.value(), aad).error() ==
        Err::DecryptFail);
  Bytes tiny(10, 0);  // shorter than one tag
  CHECK(b->aead_open(key, nonce, tiny, aad).error() == Err::DecryptFail);
}

TEST_CASE("aead rejects malformed key and nonce sizes") {
  auto b = toy();
  Bytes key31(31, 0);
  Bytes nonce(12, 0);
  CHECK(b->aead_seal(key31, nonce, to_bytes("x"), {}).error() ==
        Err::MalformedKey);
  Bytes nonce11(11, 0);
  std::array<uint8_t, 32> key{};
  CHECK(b->aead_seal(key, nonce11, to_bytes("x"), {}).error() ==
        Err::MalformedKey);
}

// ---------------------------------------------------------------------------
// Hybrid seal/open
// ---------------------------------------------------------------------------

TEST_CASE("seal/open round trip binds the context label") {
  auto b = toy();
  auto kp = b->kem_keygen(zeros32(), Role::Server, Role::Device, 0, 0);
  REQUIRE(kp.ok());
  std::array<uint8_t, 32> eph{};
  eph[1] = 0x77;
  Bytes nonce(12, 1);
  Bytes pt = to_bytes("the transient token");

  auto ct = seal(*b, kp.value().public_key, pt, as_span("tok"), eph, nonce);
  REQUIRE(ct.ok());
  auto back = open(*b, kp.value().secret_key, ct.value(), as_span("tok"));
  REQUIRE(back.ok());
  CHECK(back.value() == pt);

  CHECK(open(*b, kp.value().secret_key, ct.value(), as_span("offer")).error() ==
        Err::DecryptFail);

  auto other = b->kem_keygen(std::array<uint8_t, 32>{1}, Role::Server,
                             Role::Device, 0, 0);
  CHECK(open(*b, other.value().secret_key, ct.value(), as_span("tok")).error() ==
        Err::DecryptFail);
}

TEST_CASE("seal/open rejects tampering with any envelope part") {
  auto b = toy();
  auto kp = b->kem_keygen(zeros32(), Role::Server, Role::Device, 0, 0);
  std::array<uint8_t, 32> eph{};
  Bytes nonce(12, 1);
  auto ct = seal(*b, kp.value().public_key, to_bytes("secret"), as_span("tok"),
                 eph, nonce);
  REQUIRE(ct.ok());

  auto flipped = ct.value();
  flipped.kem_ct[3] ^= 1;
  CHECK(open(*b, kp.value().secret_key, flipped, as_span("tok")).error() ==
        Err::DecryptFail);

  flipped = ct.value();
  flipped.nonce[0] ^= 1;
  CHECK(open(*b, kp.value().secret_key, flipped, as_span("tok")).error() ==
        Err::DecryptFail);

  flipped = ct.value();
  flipped.aead_ct[0] ^= 1;
  CHECK(open(*b, kp.value().secret_key, flipped, as_span("tok")).error() ==
        Err::DecryptFail);
}

// ---------------------------------------------------------------------------
// TOTP
// ---------------------------------------------------------------------------

TEST_CASE("totp matches the published 8-digit SHA-1 vectors") {
  Bytes secret = to_bytes("12345678901234567890");
  CHECK(totp_generate(secret, 59, 30, 8, TotpHash::Sha1) == "94287082");
  CHECK(totp_generate(secret, 1111111109, 30, 8, TotpHash::Sha1) == "07081804");
}

TEST_CASE("totp is constant within one step") {
  Bytes secret = to_bytes("12345678901234567890");
  const std::string first = totp_generate(secret, 0, 30, 8, TotpHash::Sha1);
  for (uint64_t t = 1; t < 30; ++t)
    CHECK(totp_generate(secret, t, 30, 8, TotpHash::Sha1) == first);
  CHECK(totp_generate(secret, 30, 30, 8, TotpHash::Sha1) != first);
}

TEST_CASE("totp_validate window arithmetic") {
  Bytes secret = to_bytes("12345678901234567890");
  const uint64_t t = 1700000010;  // mid-window
  const std::string code = totp_generate(secret, t, 30, 8, TotpHash::Sha1);

  CHECK(totp_validate(secret, code, t, 30, 1, 8, TotpHash::Sha1));
  CHECK(totp_validate(secret, code, t + 30, 30, 1, 8, TotpHash::Sha1));
  CHECK(totp_validate(secret, code, t - 30, 30, 1, 8, TotpHash::Sha1));
  // skew 1 covers one step either side; two steps away is out.
  CHECK_FALSE(totp_validate(secret, code, t + 60, 30, 1, 8, TotpHash::Sha1));
  CHECK_FALSE(totp_validate(secret, code, t - 60, 30, 1, 8, TotpHash::Sha1));
  // skew 0: same counter only.
  CHECK(totp_validate(secret, code, t, 30, 0, 8, TotpHash::Sha1));
  CHECK_FALSE(totp_validate(secret, code, t + 30, 30, 0, 8, TotpHash::Sha1));
  // wrong code shape never validates.
  CHECK_FALSE(totp_validate(secret, "0000000", t, 30, 1, 8, TotpHash::Sha1));
  CHECK_FALSE(totp_validate(secret, "", t, 30, 1, 8, TotpHash::Sha1));
}

TEST_CASE("totp near zero does not underflow the skew window") {
  Bytes secret = to_bytes("12345678901234567890");
  const std::string code = totp_generate(secret, 10, 30, 8, TotpHash::Sha1);
  CHECK(totp_validate(secret, code, 10, 30, 1, 8, TotpHash::Sha1));
  CHECK(totp_validate(secret, code, 10, 30, 5, 8, TotpHash::Sha1));
}

TEST_CASE("totp agrees with the independent oracle on random inputs") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    Bytes secret(10 + rng() % 30);
    for (auto& b : secret) b = static_cast<uint8_t>(rng());
    const uint64_t t = rng() % 4102444800ull;  // through year 2100
    oracle::Bytes osecret(secret.begin(), secret.end());
    CHECK(totp_generate(secret, t, 30, 8, TotpHash::Sha1) ==
          oracle::totp(osecret, t, 30, 8, false));
    CHECK(totp_generate(secret, t, 30, 8, TotpHash::Sha256) ==
          oracle::totp(osecret, t, 30, 8, true));
  }
}

// ---------------------------------------------------------------------------
// Long-lived token chain
// ---------------------------------------------------------------------------

TEST_CASE("chain_next matches the frozen ratchet vector") {
  LongLivedToken t{};  // all-zero value, counter, chain key
  auto t1 = chain_next(t);
  REQUIRE(t1.ok());
  CHECK(to_hex(t1.value().value) ==
        "63d8b645f91022e5bc4ac56793c4197753f24b78584eef717817ab23e65c8be0");
  CHECK(t1.value().counter == 1);
  CHECK(t1.value().chain_key == t.chain_key);

  auto t2 = chain_next(t1.value());
  REQUIRE(t2.ok());
  CHECK(to_hex(t2.value().value) ==
        "7fd8769a07ad8a0e516f90fd2aa26229e6394b9afa20479c50a4144e2dc3814c");
  CHECK(t2.value().counter == 2);
}

TEST_CASE("chain steps never repeat over a long run") {
  LongLivedToken t{};
  t.chain_key[0] = 0xAB;
  std::set<std::string> seen;
  for (int i = 0; i < 500; ++i) {
    auto next = chain_next(t);
    REQUIRE(next.ok());
    t = next.value();
    CHECK(seen.insert(to_hex(t.value)).second);
    CHECK(t.counter == static_cast<uint64_t>(i) + 1);
  }
}

TEST_CASE("chain_next refuses to wrap the counter") {
  LongLivedToken t{};
  t.counter = UINT64_MAX;
  CHECK(chain_next(t).error() == Err::CounterOverflow);
}

// ---------------------------------------------------------------------------
// Deterministic draw plumbing
// ---------------------------------------------------------------------------

TEST_CASE("seed sequence draws the frozen values and resumes by position") {
  SeedSequence seq(zeros32());
  CHECK(to_hex(seq.next("x")) ==
        "aaa7700e82383809f464e0836445d0a1d8ad036985fa29b45e08ddac0676c4dd");
  CHECK(to_hex(seq.next("x")) ==
        "2f3673017775828b54448c3a51e5a9625983d84d0fbe576e0a986d4c05c55d7e");
  CHECK(seq.position() == 2);

  // A sequence restored at position 1 reproduces the second draw.
  SeedSequence resumed(zeros32(), 1);
  CHECK(to_hex(resumed.next("x")) ==
        "2f3673017775828b54448c3a51e5a9625983d84d0fbe576e0a986d4c05c55d7e");
}

TEST_CASE("seed sequence separates labels and seeds") {
  SeedSequence a(zeros32());
  SeedSequence b(zeros32());
  CHECK(a.next("kem") != b.next("sig"));
  std::array<uint8_t, 32> seed2{};
  seed2[0] = 1;
  SeedSequence c(zeros32());
  SeedSequence d(seed2);
  CHECK(c.next("kem") != d.next("kem"));
}

TEST_CASE("nonce counter is monotonic and resumable") {
  NonceCounter n;
  auto n0 = n.next();
  auto n1 = n.next();
  CHECK(to_hex(n0) == "000000000000000000000000");
  CHECK(to_hex(n1) == "000000000000000000000001");
  CHECK(n.position() == 2);
  NonceCounter resumed(2);
  CHECK(to_hex(resumed.next()) == "000000000000000000000002");
}
