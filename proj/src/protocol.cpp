#include "asop/protocol.hpp"

#include <algorithm>

#include "asop/hash.hpp"

namespace asop::proto {

Bytes encode_api_address(const ServerApiAddress& a) {
  std::vector<wire::Field> fields;
  fields.push_back({0x01, to_bytes(a.host)});
  Bytes port;
  put_u16be(port, a.port);
  fields.push_back({0x02, std::move(port)});
  fields.push_back({0x03, to_bytes(a.path)});
  return std::move(wire::tlv_encode(fields)).value();
}

Result<ServerApiAddress> decode_api_address(ByteSpan data) {
  auto fields = wire::tlv_decode(data);
  if (!fields) return fields.error();
  const Bytes* host = wire::find_field(fields.value(), 0x01);
  const Bytes* port = wire::find_field(fields.value(), 0x02);
  const Bytes* path = wire::find_field(fields.value(), 0x03);
  if (!host || !port || !path) return Err::MissingField;
  if (host->empty() || port->size() != 2) return Err::ProtocolViolation;

  ServerApiAddress a;
  a.host = to_string(*host);
  a.port = get_u16be(port->data());
  a.path = to_string(*path);
  if (a.port == 0) return Err::ProtocolViolation;
  return a;
}

std::string_view auth_phase_name(AuthPhase p) {
  switch (p) {
    case AuthPhase::Idle: return "idle";
    case AuthPhase::Registered: return "registered";
    case AuthPhase::AwaitOffer: return "await-offer";
    case AuthPhase::OfferForwarded: return "offer-forwarded";
    case AuthPhase::Done: return "done";
  }
  return "unknown";
}

std::string_view device_phase_name(DevicePhase p) {
  switch (p) {
    case DevicePhase::Unprovisioned: return "unprovisioned";
    case DevicePhase::Provisioned: return "provisioned";
    case DevicePhase::Registered: return "registered";
    case DevicePhase::Onboarded: return "onboarded";
  }
  return "unknown";
}

namespace {

Bytes u64_field(uint64_t v) {
  Bytes out;
  put_u64be(out, v);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Authenticator
// ---------------------------------------------------------------------------

Authenticator::Authenticator(std::shared_ptr<Backend> backend, std::string account_id,
                             NetworkSessionKey ck, ByteSpan seed32, ProtocolConfig cfg)
    : backend_(std::move(backend)),
      account_id_(std::move(account_id)),
      ck_(ck),
      cfg_(cfg),
      seq_(seed32) {}

Result<wire::Message> Authenticator::begin_register(uint64_t now) {
  if (phase_ != AuthPhase::Idle) return Err::WrongPhase;

  auto kem = backend_->kem_keygen(seq_.next("auth-kem"), Role::Authenticator,
                                  Role::Server, now, 0);
  if (!kem) return kem.error();
  auto sig = backend_->sig_keygen(seq_.next("auth-sig"), Role::Authenticator);
  if (!sig) return sig.error();
  kem_pair_ = std::move(kem).value();
  sig_pair_ = std::move(sig).value();

  wire::Message m;
  m.type = wire::MsgType::RegisterInit;
  m.set(0x01, to_bytes(account_id_));
  m.set(0x02, kem_pair_.public_key);
  m.set(0x03, sig_pair_.public_key);
  return m;
}

Err Authenticator::process_register_ack(const wire::Message& m, uint64_t now) {
  if (phase_ != AuthPhase::Idle) return Err::WrongPhase;
  if (m.type != wire::MsgType::RegisterAck) return Err::ProtocolViolation;
  const Bytes* pk = m.field(0x01);
  const Bytes* validity = m.field(0x02);
  if (!pk || !validity || validity->size() != 8) return Err::MissingField;

  server_kem_pk_ = *pk;
  session_expiry_ = now + get_u64be(validity->data());
  phase_ = AuthPhase::Registered;
  return Err::Ok;
}

Result<wire::Message> Authenticator::request_add_device(uint64_t now) {
  if (phase_ != AuthPhase::Registered) return Err::WrongPhase;
  if (now >= session_expiry_) return Err::SessionExpired;

  wire::Message m;
  m.type = wire::MsgType::AddDeviceRequest;
  m.set(0x01, to_bytes(account_id_));
  phase_ = AuthPhase::AwaitOffer;
  return m;
}

Result<wire::Message> Authenticator::process_offer(const wire::Message& m) {
  if (phase_ != AuthPhase::AwaitOffer) return Err::WrongPhase;
  if (m.type != wire::MsgType::OnboardOffer) return Err::ProtocolViolation;
  const Bytes* blob = m.field(0x01);
  if (!blob) return Err::MissingField;

  auto hybrid = wire::decode_hybrid(*blob);
  if (!hybrid) return Err::DecryptFail;
  auto pt = open(*backend_, kem_pair_.secret_key, hybrid.value(), as_span(kCtxOffer));
  if (!pt) return Err::DecryptFail;

  auto inner = wire::tlv_decode(pt.value());
  if (!inner) return Err::ProtocolViolation;
  const Bytes* code = wire::find_field(inner.value(), 0x01);
  const Bytes* api = wire::find_field(inner.value(), 0x02);
  if (!code || !api) return Err::ProtocolViolation;
  if (!decode_api_address(*api)) return Err::ProtocolViolation;

  // Re-seal the transient token to the server root key, then sign the sealed
  // bytes (encrypt-then-sign).
  auto enc_tok = seal(*backend_, server_kem_pk_, *code, as_span(kCtxToken),
                      seq_.next("tok-eph"), nonces_.next());
  if (!enc_tok) return enc_tok.error();
  const Bytes enc_tok_bytes = wire::encode_hybrid(enc_tok.value());
  auto sig = backend_->sign(sig_pair_.secret_key, enc_tok_bytes);
  if (!sig) return sig.error();

  std::vector<wire::Field> provision;
  provision.push_back({0x01, *api});
  provision.push_back({0x02, server_kem_pk_});
  provision.push_back({0x03, enc_tok_bytes});
  provision.push_back({0x04, std::move(sig).value()});
  const Bytes payload = std::move(wire::tlv_encode(provision)).value();

  const auto nonce = nonces_.next();
  auto sealed = backend_->aead_seal(ck_.key, nonce, payload, as_span(kCtxProvision));
  if (!sealed) return sealed.error();

  wire::Message out;
  out.type = wire::MsgType::DeviceProvision;
  out.set(0x01, Bytes(nonce.begin(), nonce.end()));
  out.set(0x02, std::move(sealed).value());
  phase_ = AuthPhase::OfferForwarded;
  return out;
}

Err Authenticator::process_notify(const wire::Message& m) {
  if (phase_ != AuthPhase::OfferForwarded) return Err::WrongPhase;
  if (m.type != wire::MsgType::OnboardNotify) return Err::ProtocolViolation;
  const Bytes* blob = m.field(0x01);
  if (!blob) return Err::MissingField;

  auto hybrid = wire::decode_hybrid(*blob);
  if (!hybrid) return Err::DecryptFail;
  auto pt = open(*backend_, kem_pair_.secret_key, hybrid.value(), as_span(kCtxNotify));
  if (!pt) return Err::DecryptFail;

  auto inner = wire::tlv_decode(pt.value());
  if (!inner) return Err::ProtocolViolation;
  const Bytes* uuid = wire::find_field(inner.value(), 0x01);
  const Bytes* status = wire::find_field(inner.value(), 0x02);
  if (!uuid || uuid->size() != 16 || !status) return Err::ProtocolViolation;
  if (to_string(*status) != kConnectedStatus) return Err::ProtocolViolation;

  onboarded_uuid_ = *uuid;
  phase_ = AuthPhase::Done;
  return Err::Ok;
}

Bytes Authenticator::save_state() const {
  std::vector<wire::Field> fields;
  fields.push_back({0x01, to_bytes(account_id_)});
  fields.push_back({0x02, Bytes(ck_.key.begin(), ck_.key.end())});
  fields.push_back({0x03, Bytes(seq_.seed().begin(), seq_.seed().end())});
  fields.push_back({0x04, u64_field(seq_.position())});
  fields.push_back({0x05, u64_field(nonces_.position())});
  fields.push_back({0x06, Bytes{static_cast<uint8_t>(phase_)}});
  if (!kem_pair_.public_key.empty())
    fields.push_back({0x07, wire::encode_kem_pair(kem_pair_)});
  if (!sig_pair_.public_key.empty())
    fields.push_back({0x08, wire::encode_sig_pair(sig_pair_)});
  if (!server_kem_pk_.empty()) fields.push_back({0x09, server_kem_pk_});
  fields.push_back({0x0A, u64_field(session_expiry_)});
  if (!onboarded_uuid_.empty()) fields.push_back({0x0B, onboarded_uuid_});
  return std::move(wire::tlv_encode(fields)).value();
}

Result<Authenticator> Authenticator::restore(std::shared_ptr<Backend> backend,
                                             ByteSpan blob, ProtocolConfig cfg) {
  auto fields = wire::tlv_decode(blob);
  if (!fields) return fields.error();
  const auto& fs = fields.value();
  const Bytes* account = wire::find_field(fs, 0x01);
  const Bytes* ck = wire::find_field(fs, 0x02);
  const Bytes* seed = wire::find_field(fs, 0x03);
  const Bytes* seq_pos = wire::find_field(fs, 0x04);
  const Bytes* nonce_pos = wire::find_field(fs, 0x05);
  const Bytes* phase = wire::find_field(fs, 0x06);
  const Bytes* expiry = wire::find_field(fs, 0x0A);
  if (!account || !ck || !seed || !seq_pos || !nonce_pos || !phase || !expiry)
    return Err::MissingField;
  if (ck->size() != 32 || seed->size() != 32 || seq_pos->size() != 8 ||
      nonce_pos->size() != 8 || phase->size() != 1 || expiry->size() != 8)
    return Err::ProtocolViolation;

  NetworkSessionKey key;
  std::copy(ck->begin(), ck->end(), key.key.begin());
  Authenticator a(std::move(backend), to_string(*account), key, *seed, cfg);
  a.seq_ = SeedSequence(*seed, get_u64be(seq_pos->data()));
  a.nonces_ = NonceCounter(get_u64be(nonce_pos->data()));
  if ((*phase)[0] > static_cast<uint8_t>(AuthPhase::Done)) return Err::ProtocolViolation;
  a.phase_ = static_cast<AuthPhase>((*phase)[0]);
  a.session_expiry_ = get_u64be(expiry->data());

  if (const Bytes* pair = wire::find_field(fs, 0x07)) {
    auto kp = wire::decode_kem_pair(*pair);
    if (!kp) return kp.error();
    a.kem_pair_ = std::move(kp).value();
  }
  if (const Bytes* pair = wire::find_field(fs, 0x08)) {
    auto sp = wire::decode_sig_pair(*pair);
    if (!sp) return sp.error();
    a.sig_pair_ = std::move(sp).value();
  }
  if (const Bytes* pk = wire::find_field(fs, 0x09)) a.server_kem_pk_ = *pk;
  if (const Bytes* uuid = wire::find_field(fs, 0x0B)) a.onboarded_uuid_ = *uuid;
  return a;
}

// ---------------------------------------------------------------------------
// Device
// ---------------------------------------------------------------------------

Device::Device(std::shared_ptr<Backend> backend, NetworkSessionKey ck,
               ByteSpan seed32, ProtocolConfig cfg)
    : backend_(std::move(backend)), ck_(ck), cfg_(cfg), seq_(seed32) {}

Result<wire::Message> Device::process_provision(const wire::Message& m, uint64_t now) {
  if (phase_ != DevicePhase::Unprovisioned) return Err::WrongPhase;
  if (m.type != wire::MsgType::DeviceProvision) return Err::ProtocolViolation;
  const Bytes* nonce = m.field(0x01);
  const Bytes* ct = m.field(0x02);
  if (!nonce || nonce->size() != 12 || !ct) return Err::MissingField;

  auto pt = backend_->aead_open(ck_.key, *nonce, *ct, as_span(kCtxProvision));
  if (!pt) return Err::DecryptFail;

  auto inner = wire::tlv_decode(pt.value());
  if (!inner) return Err::ProtocolViolation;
  const Bytes* api_blob = wire::find_field(inner.value(), 0x01);
  const Bytes* server_pk = wire::find_field(inner.value(), 0x02);
  const Bytes* enc_tok = wire::find_field(inner.value(), 0x03);
  const Bytes* sig = wire::find_field(inner.value(), 0x04);
  if (!api_blob || !server_pk || !enc_tok || !sig) return Err::ProtocolViolation;
  auto api = decode_api_address(*api_blob);
  if (!api) return Err::ProtocolViolation;

  auto kem = backend_->kem_keygen(seq_.next("dev-kem"), Role::Device, Role::Server,
                                  now, 0);
  if (!kem) return kem.error();
  Bytes uuid = uuid_v4_from_seed(seq_.next("uuid"));

  std::vector<wire::Field> reg;
  reg.push_back({0x01, kem.value().public_key});
  reg.push_back({0x02, uuid});
  reg.push_back({0x03, *enc_tok});
  reg.push_back({0x04, *sig});
  const Bytes payload = std::move(wire::tlv_encode(reg)).value();

  auto sealed = seal(*backend_, *server_pk, payload, as_span(kCtxRegister),
                     seq_.next("reg-eph"), nonces_.next());
  if (!sealed) return sealed.error();

  server_api_ = std::move(api).value();
  server_kem_pk_ = *server_pk;
  kem_pair_ = std::move(kem).value();
  device_uuid_ = std::move(uuid);
  phase_ = DevicePhase::Registered;

  wire::Message out;
  out.type = wire::MsgType::DeviceRegister;
  out.set(0x01, wire::encode_hybrid(sealed.value()));
  return out;
}

Err Device::process_accept(const wire::Message& m) {
  if (phase_ != DevicePhase::Registered) return Err::WrongPhase;
  if (m.type != wire::MsgType::DeviceAccept) return Err::ProtocolViolation;
  const Bytes* blob = m.field(0x01);
  if (!blob) return Err::MissingField;

  auto hybrid = wire::decode_hybrid(*blob);
  if (!hybrid) return Err::DecryptFail;
  auto pt = open(*backend_, kem_pair_.secret_key, hybrid.value(), as_span(kCtxAccept));
  if (!pt) return Err::DecryptFail;

  auto inner = wire::tlv_decode(pt.value());
  if (!inner) return Err::ProtocolViolation;
  const Bytes* token_blob = wire::find_field(inner.value(), 0x01);
  const Bytes* s_d_pk = wire::find_field(inner.value(), 0x02);
  if (!token_blob || !s_d_pk) return Err::ProtocolViolation;
  auto token = wire::decode_token(*token_blob);
  if (!token) return Err::ProtocolViolation;

  long_token_ = std::move(token).value();
  server_device_pk_ = *s_d_pk;
  phase_ = DevicePhase::Onboarded;
  return Err::Ok;
}

Result<LongLivedToken> Device::advance_token() {
  if (phase_ != DevicePhase::Onboarded) return Err::WrongPhase;
  auto next = chain_next(long_token_);
  if (!next) return next.error();
  long_token_ = next.value();
  return next;
}

Bytes Device::save_state() const {
  std::vector<wire::Field> fields;
  fields.push_back({0x01, Bytes(ck_.key.begin(), ck_.key.end())});
  fields.push_back({0x02, Bytes(seq_.seed().begin(), seq_.seed().end())});
  fields.push_back({0x03, u64_field(seq_.position())});
  fields.push_back({0x04, u64_field(nonces_.position())});
  fields.push_back({0x05, Bytes{static_cast<uint8_t>(phase_)}});
  if (!server_api_.host.empty()) fields.push_back({0x06, encode_api_address(server_api_)});
  if (!server_kem_pk_.empty()) fields.push_back({0x07, server_kem_pk_});
  if (!kem_pair_.public_key.empty())
    fields.push_back({0x08, wire::encode_kem_pair(kem_pair_)});
  if (!device_uuid_.empty()) fields.push_back({0x09, device_uuid_});
  if (phase_ == DevicePhase::Onboarded) {
    fields.push_back({0x0A, wire::encode_token(long_token_)});
    fields.push_back({0x0B, server_device_pk_});
  }
  return std::move(wire::tlv_encode(fields)).value();
}

Result<Device> Device::restore(std::shared_ptr<Backend> backend, ByteSpan blob,
                               ProtocolConfig cfg) {
  auto fields = wire::tlv_decode(blob);
  if (!fields) return fields.error();
  const auto& fs = fields.value();
  const Bytes* ck = wire::find_field(fs, 0x01);
  const Bytes* seed = wire::find_field(fs, 0x02);
  const Bytes* seq_pos = wire::find_field(fs, 0x03);
  const Bytes* nonce_pos = wire::find_field(fs, 0x04);
  const Bytes* phase = wire::find_field(fs, 0x05);
  if (!ck || !seed || !seq_pos || !nonce_pos || !phase) return Err::MissingField;
  if (ck->size() != 32 || seed->size() != 32 || seq_pos->size() != 8 ||
      nonce_pos->size() != 8 || phase->size() != 1)
    return Err::ProtocolViolation;

  NetworkSessionKey key;
  std::copy(ck->begin(), ck->end(), key.key.begin());
  Device d(std::move(backend), key, *seed, cfg);
  d.seq_ = SeedSequence(*seed, get_u64be(seq_pos->data()));
  d.nonces_ = NonceCounter(get_u64be(nonce_pos->data()));
  if ((*phase)[0] > static_cast<uint8_t>(DevicePhase::Onboarded))
    return Err::ProtocolViolation;
  d.phase_ = static_cast<DevicePhase>((*phase)[0]);

  if (const Bytes* api = wire::find_field(fs, 0x06)) {
    auto decoded = decode_api_address(*api);
    if (!decoded) return decoded.error();
    d.server_api_ = std::move(decoded).value();
  }
  if (const Bytes* pk = wire::find_field(fs, 0x07)) d.server_kem_pk_ = *pk;
  if (const Bytes* pair = wire::find_field(fs, 0x08)) {
    auto kp = wire::decode_kem_pair(*pair);
    if (!kp) return kp.error();
    d.kem_pair_ = std::move(kp).value();
  }
  if (const Bytes* uuid = wire::find_field(fs, 0x09)) d.device_uuid_ = *uuid;
  if (const Bytes* token = wire::find_field(fs, 0x0A)) {
    auto t = wire::decode_token(*token);
    if (!t) return t.error();
    d.long_token_ = std::move(t).value();
  }
  if (const Bytes* pk = wire::find_field(fs, 0x0B)) d.server_device_pk_ = *pk;
  return d;
}

// ---------------------------------------------------------------------------
// Server engine
// ---------------------------------------------------------------------------

ServerEngine::ServerEngine(std::shared_ptr<Backend> backend, store::Store& registry,
                           ServerApiAddress api, ByteSpan seed32, ProtocolConfig cfg,
                           MutationSwitches mutations)
    : backend_(std::move(backend)),
      registry_(registry),
      api_(std::move(api)),
      cfg_(cfg),
      mutations_(mutations),
      seq_(seed32) {}

const ServerSession* ServerEngine::session(const std::string& account_id) const {
  auto it = sessions_.find(account_id);
  return it == sessions_.end() ? nullptr : &it->second;
}

Result<wire::Message> ServerEngine::register_account(const wire::Message& m,
                                                     uint64_t now) {
  if (m.type != wire::MsgType::RegisterInit) return Err::ProtocolViolation;
  const Bytes* account = m.field(0x01);
  const Bytes* a_kem_pk = m.field(0x02);
  const Bytes* a_sig_pk = m.field(0x03);
  if (!account || account->empty() || !a_kem_pk || !a_sig_pk) return Err::MissingField;

  const std::string account_id = to_string(*account);
  auto it = sessions_.find(account_id);
  if (it != sessions_.end() && now < it->second.key_expiry)
    return Err::DuplicateSession;

  const auto totp_draw = seq_.next("totp-secret");
  auto kem = backend_->kem_keygen(seq_.next("srv-kem"), Role::Server,
                                  Role::Authenticator, now, cfg_.session_validity);
  if (!kem) return kem.error();

  ServerSession s;
  s.account_id = account_id;
  s.a_kem_pk = *a_kem_pk;
  s.a_sig_pk = *a_sig_pk;
  s.s_kem_pair = std::move(kem).value();
  s.totp_secret = Bytes(totp_draw.begin(), totp_draw.begin() + 20);
  s.key_expiry = now + cfg_.session_validity;
  sessions_[account_id] = std::move(s);

  wire::Message ack;
  ack.type = wire::MsgType::RegisterAck;
  ack.set(0x01, sessions_[account_id].s_kem_pair.public_key);
  ack.set(0x02, u64_field(cfg_.session_validity));
  return ack;
}

Result<wire::Message> ServerEngine::add_device(const wire::Message& m, uint64_t now) {
  if (m.type != wire::MsgType::AddDeviceRequest) return Err::ProtocolViolation;
  const Bytes* account = m.field(0x01);
  if (!account) return Err::MissingField;

  auto it = sessions_.find(to_string(*account));
  if (it == sessions_.end()) return Err::NoSession;
  ServerSession& s = it->second;
  if (!mutations_.disable_session_expiry && now >= s.key_expiry)
    return Err::SessionExpired;

  const std::string code = totp_generate(s.totp_secret, now, cfg_.totp_step,
                                         cfg_.totp_digits, cfg_.totp_hash);

  std::vector<wire::Field> offer;
  offer.push_back({0x01, to_bytes(code)});
  offer.push_back({0x02, encode_api_address(api_)});
  const Bytes payload = std::move(wire::tlv_encode(offer)).value();

  auto sealed = seal(*backend_, s.a_kem_pk, payload, as_span(kCtxOffer),
                     seq_.next("offer-eph"), nonces_.next());
  if (!sealed) return sealed.error();

  s.issued_token_time = now;
  s.token_issued = true;
  s.token_consumed = false;

  wire::Message out;
  out.type = wire::MsgType::OnboardOffer;
  out.set(0x01, wire::encode_hybrid(sealed.value()));
  return out;
}

Result<RegisterOutcome> ServerEngine::device_register(const wire::Message& m,
                                                      uint64_t now) {
  if (m.type != wire::MsgType::DeviceRegister) return Err::ProtocolViolation;
  const Bytes* blob = m.field(0x01);
  if (!blob) return Err::MissingField;
  auto hybrid = wire::decode_hybrid(*blob);
  if (!hybrid) return Err::DecryptFail;

  // The registration is sealed to one session's S^A key; find it.
  ServerSession* sess = nullptr;
  Bytes payload;
  for (auto& [account, s] : sessions_) {
    if (!mutations_.disable_session_expiry && now >= s.key_expiry) continue;
    auto pt = open(*backend_, s.s_kem_pair.secret_key, hybrid.value(),
                   as_span(kCtxRegister));
    if (pt) {
      sess = &s;
      payload = std::move(pt).value();
      break;
    }
  }
  if (!sess) return Err::DecryptFail;

  auto inner = wire::tlv_decode(payload);
  if (!inner) return Err::DecryptFail;
  const Bytes* d_s_pk = wire::find_field(inner.value(), 0x01);
  const Bytes* d_u = wire::find_field(inner.value(), 0x02);
  const Bytes* enc_tok = wire::find_field(inner.value(), 0x03);
  const Bytes* sig = wire::find_field(inner.value(), 0x04);
  if (!d_s_pk || !d_u || d_u->size() != 16 || !enc_tok || !sig)
    return Err::DecryptFail;

  if (!mutations_.disable_signature_check &&
      !backend_->verify(sess->a_sig_pk, *enc_tok, *sig))
    return Err::BadSignature;

  auto tok_hybrid = wire::decode_hybrid(*enc_tok);
  if (!tok_hybrid) return Err::DecryptFail;
  auto tok_pt = open(*backend_, sess->s_kem_pair.secret_key, tok_hybrid.value(),
                     as_span(kCtxToken));
  if (!tok_pt) return Err::DecryptFail;
  const std::string code = to_string(tok_pt.value());

  if (!mutations_.disable_totp_validation &&
      !totp_validate(sess->totp_secret, code, now, cfg_.totp_step,
                     cfg_.totp_skew_steps, cfg_.totp_digits, cfg_.totp_hash))
    return Err::TokenExpired;

  if (!mutations_.disable_token_consumption &&
      (!sess->token_issued || sess->token_consumed))
    return Err::TokenReplayed;

  if (registry_.lookup(*d_u)) return Err::DuplicateDevice;

  // All checks passed; everything below must succeed before any mutation of
  // the session or the registry.
  LongLivedToken t_d;
  t_d.value = seq_.next("td-value");
  t_d.chain_key = seq_.next("td-chain");
  t_d.counter = 0;

  auto s_d_pair = backend_->kem_keygen(seq_.next("sd-kem"), Role::Server,
                                       Role::Device, now, 0);
  if (!s_d_pair) return s_d_pair.error();

  std::vector<wire::Field> accept_inner;
  accept_inner.push_back({0x01, wire::encode_token(t_d)});
  accept_inner.push_back({0x02, s_d_pair.value().public_key});
  auto accept_sealed = seal(*backend_, *d_s_pk,
                            std::move(wire::tlv_encode(accept_inner)).value(),
                            as_span(kCtxAccept), seq_.next("accept-eph"),
                            nonces_.next());
  if (!accept_sealed) return accept_sealed.error();

  std::vector<wire::Field> notify_inner;
  notify_inner.push_back({0x01, *d_u});
  notify_inner.push_back({0x02, to_bytes(kConnectedStatus)});
  auto notify_sealed = seal(*backend_, sess->a_kem_pk,
                            std::move(wire::tlv_encode(notify_inner)).value(),
                            as_span(kCtxNotify), seq_.next("notify-eph"),
                            nonces_.next());
  if (!notify_sealed) return notify_sealed.error();

  store::DeviceRecord rec;
  rec.device_uuid = *d_u;
  rec.d_s_pk = *d_s_pk;
  rec.s_d_pair = std::move(s_d_pair).value();
  rec.t_d_head = t_d;
  rec.status = store::DeviceStatus::Active;
  rec.onboarded_at = now;

  sess->token_consumed = true;
  if (Err e = registry_.insert(std::move(rec)); e != Err::Ok) return e;

  RegisterOutcome out;
  out.accept.type = wire::MsgType::DeviceAccept;
  out.accept.set(0x01, wire::encode_hybrid(accept_sealed.value()));
  out.notify.type = wire::MsgType::OnboardNotify;
  out.notify.set(0x01, wire::encode_hybrid(notify_sealed.value()));
  out.account_id = sess->account_id;
  out.device_uuid = *d_u;
  return out;
}

Bytes ServerEngine::snapshot() const {
  Bytes out;
  for (const auto& [account, s] : sessions_) {
    std::vector<wire::Field> fields;
    fields.push_back({0x01, to_bytes(account)});
    fields.push_back({0x02, s.a_kem_pk});
    fields.push_back({0x03, s.a_sig_pk});
    fields.push_back({0x04, wire::encode_kem_pair(s.s_kem_pair)});
    fields.push_back({0x05, s.totp_secret});
    fields.push_back({0x06, u64_field(s.issued_token_time)});
    fields.push_back({0x07, Bytes{static_cast<uint8_t>(s.token_issued),
                                  static_cast<uint8_t>(s.token_consumed)}});
    fields.push_back({0x08, u64_field(s.key_expiry)});
    Bytes blob = std::move(wire::tlv_encode(fields)).value();
    put_u32be(out, static_cast<uint32_t>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
  }
  put_u64be(out, seq_.position());
  put_u64be(out, nonces_.position());
  const Bytes reg = registry_.serialize();
  out.insert(out.end(), reg.begin(), reg.end());
  return out;
}

}  // namespace asop::proto
