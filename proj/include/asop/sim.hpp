#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "asop/bytes.hpp"
#include "asop/crypto.hpp"
#include "asop/error.hpp"
#include "asop/protocol.hpp"
#include "asop/registry.hpp"
#include "asop/wire.hpp"

namespace asop::sim {

// Time in the harness only moves when a scenario says so.
struct VirtualClock {
  uint64_t now = 0;
  void advance(uint64_t seconds) { now += seconds; }
};

struct TranscriptEntry {
  uint64_t t = 0;
  std::string from;
  std::string to;
  wire::MsgType type = wire::MsgType::Error;
  Err outcome = Err::Ok;  // Ok = accepted by the recipient
  Bytes frame;

  bool operator==(const TranscriptEntry&) const = default;
};

struct Transcript {
  std::vector<TranscriptEntry> entries;

  // One JSON object per line: t, from, to, type, outcome, frame_hex.
  std::string to_jsonl() const;
  std::vector<Bytes> frames() const;

  bool operator==(const Transcript&) const = default;
};

struct SimConfig {
  std::array<uint8_t, 32> server_seed{};
  std::array<uint8_t, 32> auth_seed{};
  std::array<uint8_t, 32> device_seed{};
  NetworkSessionKey ck;
  // Multiple of the TOTP step so expiry boundaries land exactly on the
  // documented offsets.
  uint64_t start_time = 1700000010;
  std::string account_id = "user@example.com";
  proto::ServerApiAddress api{"127.0.0.1", 7450, "/api"};
  proto::ProtocolConfig protocol;
  proto::MutationSwitches mutations;
  store::StoreOptions store_options;
  bool null_aead = false;     // passthrough AEAD, a deliberate crypto break
  bool device_wrong_ck = false;  // device holds a different C_K
  uint64_t scenario_rng = 0;  // varies adversary interleavings
};

// Distinct, fixed seeds for every party.
SimConfig default_config();

enum class Verdict { DefenseHeld, DefenseBreached };
std::string_view verdict_name(Verdict v);

// A frame waiting on the simulated network.
struct Pending {
  std::string from;
  std::string to;
  Bytes frame;
};

// One server + one authenticator + one device wired through an in-memory
// network, all draws deterministic from the config seeds.
class World {
 public:
  explicit World(const SimConfig& cfg);

  struct Delivery {
    Err outcome = Err::Ok;
    std::vector<Pending> replies;
  };

  // Records the delivery in the transcript, dispatches to the recipient, and
  // returns the recipient's replies (already queued for the pump).
  Delivery deliver(const std::string& from, const std::string& to, Bytes frame);

  // Authenticator-initiated sends (the "user" pressing buttons).
  [[nodiscard]] Err send_register_init();
  [[nodiscard]] Err send_add_device_request(
      std::optional<uint64_t> now_override = std::nullopt);

  // Pump the queued frames in order. pump_until stops when the frame at the
  // head of the queue has the wanted type and hands it over undelivered.
  [[nodiscard]] Err pump_all();
  std::optional<Pending> pump_one();
  Result<Pending> pump_until(wire::MsgType type);
  Delivery deliver_now(const Pending& p) { return deliver(p.from, p.to, p.frame); }
  void record_dropped(const Pending& p);
  bool queue_empty() const { return queue_.empty(); }

  // M1..M8 with no interference; Ok iff every frame accepted and all three
  // parties ended in their terminal phases.
  [[nodiscard]] Err run_happy_path();

  // Accepted DEVICE_REGISTER frames must equal registry insertions.
  bool mutation_invariant_holds() const;

  VirtualClock& clock() { return clock_; }
  Backend& backend() { return *backend_; }
  const std::shared_ptr<Backend>& backend_ptr() { return backend_; }
  proto::ServerEngine& server() { return *server_; }
  proto::Authenticator& authenticator() { return *auth_; }
  proto::Device& device() { return *device_; }
  store::Store& registry() { return store_; }
  Transcript& transcript() { return transcript_; }
  const SimConfig& config() const { return cfg_; }

 private:
  SimConfig cfg_;
  std::shared_ptr<Backend> backend_;
  VirtualClock clock_;
  store::Store store_;
  std::unique_ptr<proto::ServerEngine> server_;
  std::unique_ptr<proto::Authenticator> auth_;
  std::unique_ptr<proto::Device> device_;
  Transcript transcript_;
  std::deque<Pending> queue_;
};

// Wraps a backend with a passthrough AEAD (ciphertext = plaintext plus a
// zero tag, never rejects). Exists so mutation twins can prove the scenarios
// detect broken crypto.
std::shared_ptr<Backend> make_null_aead_backend(std::shared_ptr<Backend> inner);

struct ScenarioResult {
  Verdict verdict = Verdict::DefenseBreached;
  Transcript transcript;
  std::string note;  // one line: what the predicate saw
};

const std::vector<std::string>& scenario_names();

// Applies the defense regression that the named scenario is designed to
// catch; running the scenario on the result must yield DefenseBreached.
Result<SimConfig> mutation_twin(const SimConfig& cfg, std::string_view name);

Result<ScenarioResult> run_scenario(std::string_view name, const SimConfig& cfg);

// Holds DEVICE_REGISTER for `delay_seconds`, then delivers it. Returns the
// server's outcome for that single delayed frame.
struct DelayedRegisterResult {
  Err outcome = Err::Ok;
  uint64_t issued_at = 0;
  uint64_t delivered_at = 0;
  uint64_t inserts = 0;
};
Result<DelayedRegisterResult> run_delayed_register(const SimConfig& cfg,
                                                   uint64_t delay_seconds);

// Repeatedly runs the flow, flipping one random bit of the frame of the
// given type before delivery. Counts deliveries the recipient accepted.
struct FlipSweepResult {
  int delivered = 0;
  int accepted = 0;
  bool invariant_held = true;  // registry-vs-accepted invariant in every run
};
Result<FlipSweepResult> flip_bit_sweep(const SimConfig& cfg, wire::MsgType target,
                                       int flips, uint64_t rng_seed);

}  // namespace asop::sim
