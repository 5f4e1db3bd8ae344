#include "asop/sim.hpp"

#include <json.hpp>

#include <random>

#include "asop/hash.hpp"

namespace asop::sim {

std::string Transcript::to_jsonl() const {
  std::string out;
  for (const auto& e : entries) {
    nlohmann::json j;
    j["t"] = e.t;
    j["from"] = e.from;
    j["to"] = e.to;
    j["type"] = wire::msg_type_name(e.type);
    j["outcome"] = e.outcome == Err::Ok ? "accepted" : std::string(err_name(e.outcome));
    j["frame_hex"] = to_hex(e.frame);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Bytes> Transcript::frames() const {
  std::vector<Bytes> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.frame);
  return out;
}

SimConfig default_config() {
  SimConfig cfg;
  cfg.server_seed.fill(0x51);
  cfg.auth_seed.fill(0xA7);
  cfg.device_seed.fill(0xDE);
  cfg.ck.key.fill(0xC1);
  return cfg;
}

std::string_view verdict_name(Verdict v) {
  return v == Verdict::DefenseHeld ? "DefenseHeld" : "DefenseBreached";
}

// ---------------------------------------------------------------------------
// Passthrough AEAD decorator (deliberately broken crypto for twin runs)
// ---------------------------------------------------------------------------

namespace {

class NullAeadBackend : public Backend {
 public:
  explicit NullAeadBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  std::string_view name() const override { return "toy+null-aead"; }

  Result<KemKeyPair> kem_keygen(ByteSpan seed, Role owner, Role peer,
                                uint64_t created_at, uint64_t validity) override {
    return inner_->kem_keygen(seed, owner, peer, created_at, validity);
  }
  Result<std::pair<Bytes, Bytes>> kem_encapsulate(ByteSpan pk, ByteSpan eph) override {
    return inner_->kem_encapsulate(pk, eph);
  }
  Result<Bytes> kem_decapsulate(ByteSpan sk, ByteSpan kem_ct) override {
    return inner_->kem_decapsulate(sk, kem_ct);
  }
  Result<SigKeyPair> sig_keygen(ByteSpan seed, Role owner) override {
    return inner_->sig_keygen(seed, owner);
  }
  Result<Bytes> sign(ByteSpan sk, ByteSpan message) override {
    return inner_->sign(sk, message);
  }
  bool verify(ByteSpan pk, ByteSpan message, ByteSpan sig) override {
    return inner_->verify(pk, message, sig);
  }
  Result<Bytes> aead_seal(ByteSpan, ByteSpan, ByteSpan plaintext, ByteSpan) override {
    Bytes out(plaintext.begin(), plaintext.end());
    out.resize(out.size() + 16, 0);
    return out;
  }
  Result<Bytes> aead_open(ByteSpan, ByteSpan, ByteSpan ciphertext, ByteSpan) override {
    if (ciphertext.size() < 16) return Err::DecryptFail;
    return Bytes(ciphertext.begin(), ciphertext.end() - 16);
  }

 private:
  std::shared_ptr<Backend> inner_;
};

constexpr std::string_view kServer = "server";
constexpr std::string_view kAuth = "authenticator";
constexpr std::string_view kDevice = "device";
constexpr std::string_view kAdversary = "adversary";

std::array<uint8_t, 32> seed_from_label(std::string_view label) {
  Bytes h = sha256(as_span(label));
  std::array<uint8_t, 32> out{};
  std::copy(h.begin(), h.end(), out.begin());
  return out;
}

}  // namespace

std::shared_ptr<Backend> make_null_aead_backend(std::shared_ptr<Backend> inner) {
  return std::make_shared<NullAeadBackend>(std::move(inner));
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

World::World(const SimConfig& cfg) : cfg_(cfg), store_(cfg.store_options) {
  backend_ = std::move(make_backend("toy")).value();
  if (cfg.null_aead) backend_ = make_null_aead_backend(backend_);
  clock_.now = cfg.start_time;

  server_ = std::make_unique<proto::ServerEngine>(backend_, store_, cfg.api,
                                                  cfg.server_seed, cfg.protocol,
                                                  cfg.mutations);
  auth_ = std::make_unique<proto::Authenticator>(backend_, cfg.account_id, cfg.ck,
                                                 cfg.auth_seed, cfg.protocol);
  NetworkSessionKey device_ck = cfg.ck;
  if (cfg.device_wrong_ck) device_ck.key[0] ^= 0xFF;
  device_ = std::make_unique<proto::Device>(backend_, device_ck, cfg.device_seed,
                                            cfg.protocol);
}

World::Delivery World::deliver(const std::string& from, const std::string& to,
                               Bytes frame) {
  TranscriptEntry entry;
  entry.t = clock_.now;
  entry.from = from;
  entry.to = to;
  entry.frame = frame;

  Delivery d;
  auto decoded = wire::decode(frame);
  if (!decoded) {
    entry.outcome = d.outcome = decoded.error();
    transcript_.entries.push_back(std::move(entry));
    return d;
  }
  const wire::Message& m = decoded.value();
  entry.type = m.type;

  auto reply = [&](std::string_view reply_to, const wire::Message& msg) {
    d.replies.push_back(
        Pending{to, std::string(reply_to), std::move(wire::encode(msg)).value()});
  };

  Err outcome = Err::Ok;
  if (to == kServer) {
    switch (m.type) {
      case wire::MsgType::RegisterInit: {
        auto r = server_->register_account(m, clock_.now);
        if (r) reply(kAuth, r.value());
        else outcome = r.error();
        break;
      }
      case wire::MsgType::AddDeviceRequest: {
        auto r = server_->add_device(m, clock_.now);
        if (r) reply(kAuth, r.value());
        else outcome = r.error();
        break;
      }
      case wire::MsgType::DeviceRegister: {
        auto r = server_->device_register(m, clock_.now);
        if (r) {
          reply(kDevice, r.value().accept);
          reply(kAuth, r.value().notify);
        } else {
          outcome = r.error();
        }
        break;
      }
      default:
        outcome = Err::ProtocolViolation;
    }
  } else if (to == kAuth) {
    switch (m.type) {
      case wire::MsgType::RegisterAck:
        outcome = auth_->process_register_ack(m, clock_.now);
        break;
      case wire::MsgType::OnboardOffer: {
        auto r = auth_->process_offer(m);
        if (r) reply(kDevice, r.value());
        else outcome = r.error();
        break;
      }
      case wire::MsgType::OnboardNotify:
        outcome = auth_->process_notify(m);
        break;
      default:
        outcome = Err::ProtocolViolation;
    }
  } else if (to == kDevice) {
    switch (m.type) {
      case wire::MsgType::DeviceProvision: {
        auto r = device_->process_provision(m, clock_.now);
        if (r) reply(kServer, r.value());
        else outcome = r.error();
        break;
      }
      case wire::MsgType::DeviceAccept:
        outcome = device_->process_accept(m);
        break;
      default:
        outcome = Err::ProtocolViolation;
    }
  } else {
    outcome = Err::ProtocolViolation;
  }

  entry.outcome = d.outcome = outcome;
  transcript_.entries.push_back(std::move(entry));
  for (const auto& r : d.replies) queue_.push_back(r);
  return d;
}

Err World::send_register_init() {
  auto m = auth_->begin_register(clock_.now);
  if (!m) return m.error();
  queue_.push_back(Pending{std::string(kAuth), std::string(kServer),
                           std::move(wire::encode(m.value())).value()});
  return Err::Ok;
}

Err World::send_add_device_request(std::optional<uint64_t> now_override) {
  auto m = auth_->request_add_device(now_override.value_or(clock_.now));
  if (!m) return m.error();
  queue_.push_back(Pending{std::string(kAuth), std::string(kServer),
                           std::move(wire::encode(m.value())).value()});
  return Err::Ok;
}

Err World::pump_all() {
  Err first = Err::Ok;
  while (!queue_.empty()) {
    Pending p = std::move(queue_.front());
    queue_.pop_front();
    auto d = deliver(p.from, p.to, std::move(p.frame));
    if (first == Err::Ok) first = d.outcome;
  }
  return first;
}

std::optional<Pending> World::pump_one() {
  if (queue_.empty()) return std::nullopt;
  Pending p = std::move(queue_.front());
  queue_.pop_front();
  deliver(p.from, p.to, p.frame);
  return p;
}

Result<Pending> World::pump_until(wire::MsgType type) {
  while (!queue_.empty()) {
    if (queue_.front().frame.size() >= wire::kHeaderLen &&
        queue_.front().frame[5] == static_cast<uint8_t>(type)) {
      Pending p = std::move(queue_.front());
      queue_.pop_front();
      return p;
    }
    Pending p = std::move(queue_.front());
    queue_.pop_front();
    deliver(p.from, p.to, std::move(p.frame));
  }
  return Err::ProtocolViolation;  // flow never produced the wanted frame
}

void World::record_dropped(const Pending& p) {
  TranscriptEntry entry;
  entry.t = clock_.now;
  entry.from = p.from;
  entry.to = p.to;
  if (p.frame.size() >= wire::kHeaderLen)
    entry.type = static_cast<wire::MsgType>(p.frame[5]);
  entry.outcome = Err::Dropped;
  entry.frame = p.frame;
  transcript_.entries.push_back(std::move(entry));
}

Err World::run_happy_path() {
  if (Err e = send_register_init(); e != Err::Ok) return e;
  if (Err e = pump_all(); e != Err::Ok) return e;
  if (Err e = send_add_device_request(); e != Err::Ok) return e;
  if (Err e = pump_all(); e != Err::Ok) return e;
  if (auth_->phase() != proto::AuthPhase::Done) return Err::ProtocolViolation;
  if (device_->phase() != proto::DevicePhase::Onboarded) return Err::ProtocolViolation;
  return Err::Ok;
}

bool World::mutation_invariant_holds() const {
  uint64_t accepted = 0;
  for (const auto& e : transcript_.entries) {
    if (e.type == wire::MsgType::DeviceRegister && e.to == kServer &&
        e.outcome == Err::Ok)
      ++accepted;
  }
  return accepted == store_.insert_count();
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

namespace {

// Drives the fault-free flow until a frame of the wanted type is next on the
// network, returning it undelivered.
Result<Pending> run_flow_until(World& w, wire::MsgType stop) {
  if (Err e = w.send_register_init(); e != Err::Ok) return e;
  if (stop == wire::MsgType::RegisterInit || stop == wire::MsgType::RegisterAck)
    return w.pump_until(stop);
  if (Err e = w.pump_all(); e != Err::Ok) return e;
  if (Err e = w.send_add_device_request(); e != Err::Ok) return e;
  return w.pump_until(stop);
}

std::string describe(Err e) { return std::string(err_name(e)); }

ScenarioResult finish(World& w, bool held, std::string note) {
  ScenarioResult r;
  r.verdict = held ? Verdict::DefenseHeld : Verdict::DefenseBreached;
  r.transcript = w.transcript();
  r.note = std::move(note);
  return r;
}

// A second DEVICE_REGISTER with the same bytes must bounce off the consumed
// token, at any point the adversary chooses inside the accept window.
ScenarioResult scenario_replay_register(const SimConfig& cfg) {
  World w(cfg);
  std::mt19937_64 rng(cfg.scenario_rng);

  auto reg = run_flow_until(w, wire::MsgType::DeviceRegister);
  if (!reg) return finish(w, false, "flow failed: " + describe(reg.error()));
  const Bytes original = reg.value().frame;

  auto first = w.deliver_now(reg.value());
  const size_t deliver_before_replay = rng() % 3;  // 0..2 of {accept, notify}
  for (size_t i = 0; i < deliver_before_replay; ++i) w.pump_one();
  w.clock().advance(rng() % 29);  // still inside the token window

  auto second = w.deliver(std::string(kAdversary), std::string(kServer), original);
  (void)w.pump_all();

  const bool held = first.outcome == Err::Ok &&
                    second.outcome == Err::TokenReplayed &&
                    w.registry().insert_count() == 1 &&
                    w.device().phase() == proto::DevicePhase::Onboarded &&
                    w.mutation_invariant_holds();
  return finish(w, held,
                "first=" + describe(first.outcome) + " second=" +
                    describe(second.outcome) +
                    " inserts=" + std::to_string(w.registry().insert_count()));
}

// Holding DEVICE_REGISTER beyond the token window must yield TokenExpired.
ScenarioResult scenario_expired_token(const SimConfig& cfg) {
  World w(cfg);
  auto reg = run_flow_until(w, wire::MsgType::DeviceRegister);
  if (!reg) return finish(w, false, "flow failed: " + describe(reg.error()));

  w.clock().advance(61);  // past one step plus one step of skew
  auto d = w.deliver_now(reg.value());
  (void)w.pump_all();

  const bool held = d.outcome == Err::TokenExpired &&
                    w.registry().insert_count() == 0 &&
                    w.device().phase() == proto::DevicePhase::Registered &&
                    w.mutation_invariant_holds();
  return finish(w, held,
                "delayed outcome=" + describe(d.outcome) +
                    " inserts=" + std::to_string(w.registry().insert_count()));
}

// A compromised device that knows C_K forwards the token with a corrupted
// signature; the server must refuse it before touching the registry.
ScenarioResult scenario_tamper_signature(const SimConfig& cfg) {
  World w(cfg);
  std::mt19937_64 rng(cfg.scenario_rng);

  auto prov = run_flow_until(w, wire::MsgType::DeviceProvision);
  if (!prov) return finish(w, false, "flow failed: " + describe(prov.error()));

  auto msg = wire::decode(prov.value().frame);
  if (!msg) return finish(w, false, "provision frame undecodable");
  const Bytes* nonce = msg.value().field(0x01);
  const Bytes* ct = msg.value().field(0x02);
  if (!nonce || !ct) return finish(w, false, "provision frame missing fields");
  auto pt = w.backend().aead_open(cfg.ck.key, *nonce, *ct, as_span(proto::kCtxProvision));
  if (!pt) return finish(w, false, "adversary could not open provision");
  auto fields = wire::tlv_decode(pt.value());
  if (!fields) return finish(w, false, "provision payload undecodable");
  const Bytes* server_pk = wire::find_field(fields.value(), 0x02);
  const Bytes* enc_tok = wire::find_field(fields.value(), 0x03);
  const Bytes* sig_field = wire::find_field(fields.value(), 0x04);
  if (!server_pk || !enc_tok || !sig_field || sig_field->empty())
    return finish(w, false, "provision payload missing fields");
  Bytes sig = *sig_field;
  const size_t bit = rng() % (sig.size() * 8);
  sig[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));

  auto adv_kem = w.backend().kem_keygen(seed_from_label("adversary-kem"), Role::Device,
                                        Role::Server, w.clock().now, 0);
  if (!adv_kem) return finish(w, false, "adversary keygen failed");
  std::vector<wire::Field> payload;
  payload.push_back({0x01, adv_kem.value().public_key});
  payload.push_back({0x02, uuid_v4_from_seed(seed_from_label("adversary-uuid"))});
  payload.push_back({0x03, *enc_tok});
  payload.push_back({0x04, sig});
  const std::array<uint8_t, 12> adv_nonce{};
  auto payload_bytes = wire::tlv_encode(payload);
  if (!payload_bytes) return finish(w, false, "forged payload encode failed");
  auto sealed = seal(w.backend(), *server_pk, payload_bytes.value(),
                     as_span(proto::kCtxRegister), seed_from_label("adversary-eph"),
                     adv_nonce);
  if (!sealed) return finish(w, false, "adversary seal failed");

  wire::Message forged;
  forged.type = wire::MsgType::DeviceRegister;
  forged.set(0x01, wire::encode_hybrid(sealed.value()));
  auto d = w.deliver(std::string(kAdversary), std::string(kServer),
                     std::move(wire::encode(forged)).value());

  const bool held = d.outcome == Err::BadSignature &&
                    w.registry().insert_count() == 0 && w.mutation_invariant_holds();
  return finish(w, held,
                "forged outcome=" + describe(d.outcome) +
                    " inserts=" + std::to_string(w.registry().insert_count()));
}

// A device holding the wrong C_K must not be able to read the provision, so
// no registration ever reaches the server.
ScenarioResult scenario_wrong_ck(const SimConfig& cfg) {
  SimConfig c = cfg;
  c.device_wrong_ck = true;
  World w(c);

  auto prov = run_flow_until(w, wire::MsgType::DeviceProvision);
  if (!prov) return finish(w, false, "flow failed: " + describe(prov.error()));
  auto d = w.deliver_now(prov.value());
  (void)w.pump_all();

  bool register_seen = false;
  for (const auto& e : w.transcript().entries)
    if (e.type == wire::MsgType::DeviceRegister) register_seen = true;

  const bool held = d.outcome == Err::DecryptFail && !register_seen &&
                    w.device().phase() == proto::DevicePhase::Unprovisioned &&
                    w.registry().insert_count() == 0;
  return finish(w, held,
                "provision outcome=" + describe(d.outcome) +
                    (register_seen ? " register-sent" : " no-register"));
}

// Root keys past their validity must force a re-login instead of an offer.
ScenarioResult scenario_stale_session(const SimConfig& cfg) {
  World w(cfg);
  if (Err e = w.send_register_init(); e != Err::Ok)
    return finish(w, false, "flow failed: " + describe(e));
  if (Err e = w.pump_all(); e != Err::Ok)
    return finish(w, false, "flow failed: " + describe(e));

  const uint64_t stale_now = w.clock().now;  // the app's frozen view of time
  w.clock().advance(cfg.protocol.session_validity + 1);
  if (Err e = w.send_add_device_request(stale_now); e != Err::Ok)
    return finish(w, false, "request refused locally: " + describe(e));
  Err outcome = w.pump_all();

  bool offer_seen = false;
  for (const auto& e : w.transcript().entries)
    if (e.type == wire::MsgType::OnboardOffer) offer_seen = true;

  const bool held = outcome == Err::SessionExpired && !offer_seen;
  return finish(w, held,
                "add-device outcome=" + describe(outcome) +
                    (offer_seen ? " offer-sent" : " no-offer"));
}

// A passive adversary recording ONBOARD_OFFER must not recover the token.
ScenarioResult scenario_eavesdrop_offer(const SimConfig& cfg) {
  World w(cfg);
  auto offer = run_flow_until(w, wire::MsgType::OnboardOffer);
  if (!offer) return finish(w, false, "flow failed: " + describe(offer.error()));
  const Bytes captured = offer.value().frame;
  w.deliver_now(offer.value());
  (void)w.pump_all();

  bool recovered = false;
  auto msg = wire::decode(captured);
  if (msg) {
    if (const Bytes* blob = msg.value().field(0x01)) {
      auto hybrid = wire::decode_hybrid(*blob);
      auto adv_kem = w.backend().kem_keygen(seed_from_label("adversary-kem"),
                                            Role::Authenticator, Role::Server,
                                            w.clock().now, 0);
      if (hybrid && adv_kem) {
        auto pt = open(w.backend(), adv_kem.value().secret_key, hybrid.value(),
                       as_span(proto::kCtxOffer));
        if (pt) {
          auto fields = wire::tlv_decode(pt.value());
          recovered = fields.ok() &&
                      wire::find_field(fields.value(), 0x01) != nullptr;
        }
      }
    }
  }

  const bool held = !recovered &&
                    w.device().phase() == proto::DevicePhase::Onboarded &&
                    w.registry().insert_count() == 1;
  return finish(w, held, recovered ? "token recovered" : "token not recovered");
}

// After revocation the token chain must be dead, permanently.
ScenarioResult scenario_revoked_device(const SimConfig& cfg) {
  World w(cfg);
  if (Err e = w.run_happy_path(); e != Err::Ok)
    return finish(w, false, "flow failed: " + describe(e));

  const Bytes uuid = w.device().device_uuid();
  if (w.registry().revoke(uuid) != Err::Ok)
    return finish(w, false, "revoke failed");
  auto advanced = w.registry().advance_token(uuid);
  const auto* rec = w.registry().lookup(uuid);
  const Err second_revoke = w.registry().revoke(uuid);

  const bool held = !advanced.ok() && advanced.error() == Err::RevokedDevice &&
                    rec != nullptr && rec->status == store::DeviceStatus::Revoked &&
                    second_revoke == Err::Ok;
  return finish(w, held,
                "advance after revoke=" +
                    describe(advanced.ok() ? Err::Ok : advanced.error()));
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "replay_register", "expired_token",   "tamper_signature", "wrong_ck",
      "stale_session",   "eavesdrop_offer", "revoked_device",
  };
  return names;
}

Result<SimConfig> mutation_twin(const SimConfig& cfg, std::string_view name) {
  SimConfig out = cfg;
  if (name == "replay_register") out.mutations.disable_token_consumption = true;
  else if (name == "expired_token") out.mutations.disable_totp_validation = true;
  else if (name == "tamper_signature") out.mutations.disable_signature_check = true;
  else if (name == "wrong_ck") out.null_aead = true;
  else if (name == "stale_session") out.mutations.disable_session_expiry = true;
  else if (name == "eavesdrop_offer") out.null_aead = true;
  else if (name == "revoked_device") out.store_options.enforce_revocation = false;
  else return Err::UnknownScenario;
  return out;
}

Result<ScenarioResult> run_scenario(std::string_view name, const SimConfig& cfg) {
  if (name == "replay_register") return scenario_replay_register(cfg);
  if (name == "expired_token") return scenario_expired_token(cfg);
  if (name == "tamper_signature") return scenario_tamper_signature(cfg);
  if (name == "wrong_ck") return scenario_wrong_ck(cfg);
  if (name == "stale_session") return scenario_stale_session(cfg);
  if (name == "eavesdrop_offer") return scenario_eavesdrop_offer(cfg);
  if (name == "revoked_device") return scenario_revoked_device(cfg);
  return Err::UnknownScenario;
}

Result<DelayedRegisterResult> run_delayed_register(const SimConfig& cfg,
                                                   uint64_t delay_seconds) {
  World w(cfg);
  auto reg = run_flow_until(w, wire::MsgType::DeviceRegister);
  if (!reg) return reg.error();

  DelayedRegisterResult out;
  const auto* session = w.server().session(cfg.account_id);
  out.issued_at = session ? session->issued_token_time : 0;
  w.clock().advance(delay_seconds);
  out.delivered_at = w.clock().now;
  out.outcome = w.deliver_now(reg.value()).outcome;
  (void)w.pump_all();
  out.inserts = w.registry().insert_count();
  return out;
}

Result<FlipSweepResult> flip_bit_sweep(const SimConfig& cfg, wire::MsgType target,
                                       int flips, uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  FlipSweepResult res;
  for (int i = 0; i < flips; ++i) {
    World w(cfg);
    auto p = run_flow_until(w, target);
    if (!p) return p.error();

    Bytes frame = p.value().frame;
    const size_t bit = rng() % (frame.size() * 8);
    frame[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));

    auto d = w.deliver(std::string(kAdversary), p.value().to, std::move(frame));
    ++res.delivered;
    if (d.outcome == Err::Ok) ++res.accepted;
    (void)w.pump_all();
    if (!w.mutation_invariant_holds()) res.invariant_held = false;
  }
  return res;
}

}  // namespace asop::sim
