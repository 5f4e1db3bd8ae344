#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "asop/hash.hpp"
#include "asop/protocol.hpp"
#include "asop/wire.hpp"

using namespace asop;

namespace {

wire::Message random_message(std::mt19937_64& rng) {
  wire::Message m;
  m.type = static_cast<wire::MsgType>(1 + rng() % 9);
  const int nfields = static_cast<int>(rng() % 5);
  uint8_t id = 0;
  for (int i = 0; i < nfields; ++i) {
    id = static_cast<uint8_t>(id + 1 + rng() % 40);  // strictly ascending
    Bytes value(rng() % 64);
    for (auto& b : value) b = static_cast<uint8_t>(rng());
    m.fields.push_back({id, std::move(value)});
    if (id > 200) break;
  }
  return m;
}

Bytes frame_of(const wire::Message& m) {
  auto f = wire::encode(m);
  REQUIRE(f.ok());
  return std::move(f).value();
}

}  // namespace

// ---------------------------------------------------------------------------
// Canonical encoding
// ---------------------------------------------------------------------------

TEST_CASE("error frame has the frozen canonical bytes") {
  // ERROR carrying code 0x0001 and no detail.
  auto frame = frame_of(wire::make_error(Err::BadMagic));
  CHECK(to_hex(frame) == "41534f50010901000000020001");
}

TEST_CASE("header layout: magic, version, type") {
  auto frame = frame_of(wire::Message{wire::MsgType::RegisterInit, {}});
  REQUIRE(frame.size() == wire::kHeaderLen);
  CHECK(frame[0] == 'A');
  CHECK(frame[1] == 'S');
  CHECK(frame[2] == 'O');
  CHECK(frame[3] == 'P');
  CHECK(frame[4] == wire::kVersion);
  CHECK(frame[5] == 0x01);
}

TEST_CASE("round trip: 1000 random canonical messages") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    wire::Message m = random_message(rng);
    Bytes frame = frame_of(m);
    auto back = wire::decode(frame);
    REQUIRE(back.ok());
    CHECK(back.value() == m);
    // Re-encoding reproduces the exact bytes (canonical form is unique).
    CHECK(frame_of(back.value()) == frame);
  }
}

TEST_CASE("encode rejects non-canonical field lists") {
  wire::Message dup{wire::MsgType::RegisterInit,
                    {{0x01, to_bytes("a")}, {0x01, to_bytes("b")}}};
  CHECK(wire::encode(dup).error() == Err::DuplicateField);
  wire::Message unordered{wire::MsgType::RegisterInit,
                          {{0x02, to_bytes("a")}, {0x01, to_bytes("b")}}};
  CHECK(wire::encode(unordered).error() == Err::NonCanonicalOrder);
}

TEST_CASE("Message::set keeps fields sorted and replaces in place") {
  wire::Message m{wire::MsgType::RegisterInit, {}};
  m.set(0x05, to_bytes("e")).set(0x01, to_bytes("a")).set(0x03, to_bytes("c"));
  REQUIRE(m.fields.size() == 3);
  CHECK(m.fields[0].id == 0x01);
  CHECK(m.fields[1].id == 0x03);
  CHECK(m.fields[2].id == 0x05);
  m.set(0x03, to_bytes("replaced"));
  REQUIRE(m.fields.size() == 3);
  CHECK(*m.field(0x03) == to_bytes("replaced"));
  CHECK(m.field(0x07) == nullptr);
}

// ---------------------------------------------------------------------------
// Decode error taxonomy: every malformation maps to one specific error
// ---------------------------------------------------------------------------

TEST_CASE("decode: wrong magic") {
  Bytes frame = frame_of(wire::make_error(Err::BadMagic));
  frame[0] = 'B';
  CHECK(wire::decode(frame).error() == Err::BadMagic);
  Bytes just_garbage = to_bytes("nope");
  CHECK(wire::decode(just_garbage).error() == Err::BadMagic);
  Bytes short_garbage = to_bytes("zz");
  CHECK(wire::decode(short_garbage).error() == Err::BadMagic);
}

TEST_CASE("decode: truncated header with valid magic prefix") {
  Bytes frame = to_bytes("ASOP");
  CHECK(wire::decode(frame).error() == Err::Truncated);
  frame.push_back(0x01);  // magic + version, still no type
  CHECK(wire::decode(frame).error() == Err::Truncated);
  CHECK(wire::decode(Bytes{}).error() == Err::Truncated);
}

TEST_CASE("decode: wrong version") {
  Bytes frame = frame_of(wire::make_error(Err::BadMagic));
  frame[4] = 0x02;
  CHECK(wire::decode(frame).error() == Err::BadVersion);
}

TEST_CASE("decode: unknown message type") {
  Bytes frame = frame_of(wire::make_error(Err::BadMagic));
  frame[5] = 0x00;
  CHECK(wire::decode(frame).error() == Err::UnknownType);
  frame[5] = 0x0A;
  CHECK(wire::decode(frame).error() == Err::UnknownType);
  frame[5] = 0xFF;
  CHECK(wire::decode(frame).error() == Err::UnknownType);
}

TEST_CASE("decode: duplicate and misordered fields") {
  // Hand-build the TLV section: id 1 len 0, id 1 len 0 -> duplicate.
  Bytes frame = frame_of(wire::Message{wire::MsgType::RegisterInit, {}});
  auto push_field = [&frame](uint8_t id) {
    frame.push_back(id);
    for (int i = 0; i < 4; ++i) frame.push_back(0x00);
  };
  push_field(0x01);
  push_field(0x01);
  CHECK(wire::decode(frame).error() == Err::DuplicateField);

  frame.resize(wire::kHeaderLen);
  push_field(0x02);
  push_field(0x01);
  CHECK(wire::decode(frame).error() == Err::NonCanonicalOrder);
}

TEST_CASE("decode: truncated TLV bodies") {
  Bytes frame = frame_of(wire::Message{wire::MsgType::RegisterInit, {}});
  // Declared length 5, only 2 bytes present.
  frame.push_back(0x01);
  frame.push_back(0x00);
  frame.push_back(0x00);
  frame.push_back(0x00);
  frame.push_back(0x05);
  frame.push_back(0xAA);
  frame.push_back(0xBB);
  CHECK(wire::decode(frame).error() == Err::Truncated);
}

TEST_CASE("decode: trailing bytes shorter than any field header") {
  Bytes frame = frame_of(wire::Message{wire::MsgType::RegisterInit, {}});
  frame.push_back(0x01);  // 1..4 leftover bytes cannot open a field
  CHECK(wire::decode(frame).error() == Err::TrailingBytes);
  frame.push_back(0x00);
  frame.push_back(0x00);
  frame.push_back(0x00);
  CHECK(wire::decode(frame).error() == Err::TrailingBytes);
}

TEST_CASE("fuzz: ten thousand mutated inputs only produce defined errors") {
  std::mt19937_64 rng(99);
  const Bytes seed_frame = frame_of(
      wire::Message{wire::MsgType::DeviceRegister,
                    {{0x01, Bytes(40, 0xAA)}, {0x07, Bytes(3, 0xBB)}}});
  for (int i = 0; i < 10000; ++i) {
    Bytes input;
    if (i % 2 == 0) {
      input.resize(rng() % 128);
      for (auto& b : input) b = static_cast<uint8_t>(rng());
    } else {
      input = seed_frame;
      const int edits = 1 + static_cast<int>(rng() % 4);
      for (int e = 0; e < edits; ++e) {
        switch (rng() % 3) {
          case 0:
            if (!input.empty()) input[rng() % input.size()] =
                static_cast<uint8_t>(rng());
            break;
          case 1:
            input.insert(input.begin() + static_cast<long>(rng() % (input.size() + 1)),
                         static_cast<uint8_t>(rng()));
            break;
          default:
            if (!input.empty()) input.resize(rng() % input.size());
            break;
        }
      }
    }
    auto r = wire::decode(input);
    if (r.ok()) {
      // Anything that decodes must re-encode to a canonical frame.
      auto again = wire::encode(r.value());
      REQUIRE(again.ok());
      CHECK(wire::decode(again.value()).ok());
    }
  }
}

// ---------------------------------------------------------------------------
// Composite blob helpers
// ---------------------------------------------------------------------------

TEST_CASE("hybrid ciphertext blob round trip") {
  HybridCiphertext ct;
  ct.kem_ct = Bytes(32, 0x11);
  ct.nonce.fill(0x22);
  ct.aead_ct = Bytes(48, 0x33);
  auto back = wire::decode_hybrid(wire::encode_hybrid(ct));
  REQUIRE(back.ok());
  CHECK(back.value() == ct);

  Bytes garbage(5, 0xFF);
  CHECK_FALSE(wire::decode_hybrid(garbage).ok());
}

TEST_CASE("kem pair blob round trip preserves every field") {
  KemKeyPair kp;
  kp.public_key = Bytes(32, 0x01);
  kp.secret_key = Bytes(32, 0x02);
  kp.owner_role = Role::Device;
  kp.peer_role = Role::Server;
  kp.created_at = 1700000010;
  kp.validity = 86400;
  auto back = wire::decode_kem_pair(wire::encode_kem_pair(kp));
  REQUIRE(back.ok());
  CHECK(back.value().public_key == kp.public_key);
  CHECK(back.value().secret_key == kp.secret_key);
  CHECK(back.value().owner_role == kp.owner_role);
  CHECK(back.value().peer_role == kp.peer_role);
  CHECK(back.value().created_at == kp.created_at);
  CHECK(back.value().validity == kp.validity);
}

TEST_CASE("sig pair and token blobs round trip") {
  SigKeyPair sp;
  sp.public_key = Bytes(32, 0x0A);
  sp.secret_key = Bytes(32, 0x0B);
  sp.owner_role = Role::Authenticator;
  auto sig_back = wire::decode_sig_pair(wire::encode_sig_pair(sp));
  REQUIRE(sig_back.ok());
  CHECK(sig_back.value().public_key == sp.public_key);
  CHECK(sig_back.value().secret_key == sp.secret_key);
  CHECK(sig_back.value().owner_role == sp.owner_role);

  LongLivedToken t;
  t.value.fill(0x5C);
  t.counter = 41;
  t.chain_key.fill(0x6D);
  auto tok_back = wire::decode_token(wire::encode_token(t));
  REQUIRE(tok_back.ok());
  CHECK(tok_back.value() == t);
}

TEST_CASE("api address blob round trip and validation") {
  proto::ServerApiAddress api{"bridge.example.com", 8443, "/api/v1"};
  auto back = proto::decode_api_address(proto::encode_api_address(api));
  REQUIRE(back.ok());
  CHECK(back.value() == api);

  proto::ServerApiAddress no_host{"", 8443, "/"};
  CHECK(proto::decode_api_address(proto::encode_api_address(no_host)).error() ==
        Err::ProtocolViolation);
  proto::ServerApiAddress no_port{"h", 0, "/"};
  CHECK(proto::decode_api_address(proto::encode_api_address(no_port)).error() ==
        Err::ProtocolViolation);
}

// ---------------------------------------------------------------------------
// ERROR messages
// ---------------------------------------------------------------------------

TEST_CASE("error frames carry code and optional detail") {
  auto with_detail = wire::make_error(Err::TokenReplayed, "second attempt");
  auto parsed = wire::parse_error(with_detail);
  REQUIRE(parsed.ok());
  CHECK(parsed.value().code == Err::TokenReplayed);
  CHECK(parsed.value().detail == "second attempt");

  auto bare = wire::make_error(Err::Truncated);
  auto parsed_bare = wire::parse_error(bare);
  REQUIRE(parsed_bare.ok());
  CHECK(parsed_bare.value().code == Err::Truncated);
  CHECK(parsed_bare.value().detail.empty());
  // No detail -> no detail field on the wire.
  CHECK(bare.field(0x02) == nullptr);

  wire::Message not_error{wire::MsgType::RegisterAck, {}};
  CHECK_FALSE(wire::parse_error(not_error).ok());
}

TEST_CASE("message type names are stable") {
  CHECK(wire::msg_type_name(wire::MsgType::RegisterInit) == "REGISTER_INIT");
  CHECK(wire::msg_type_name(wire::MsgType::OnboardOffer) == "ONBOARD_OFFER");
  CHECK(wire::msg_type_name(wire::MsgType::Error) == "ERROR");
}
