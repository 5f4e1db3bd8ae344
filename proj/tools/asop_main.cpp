// asop: device onboarding over TCP, plus the offline registry tools and the
// adversarial simulation harness. Every subcommand exits 0 on success and 1
// on any failure (protocol errors are printed as `error: <name> (0x....)`).

#include <openssl/rand.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "asop/crypto.hpp"
#include "asop/error.hpp"
#include "asop/hash.hpp"
#include "asop/protocol.hpp"
#include "asop/registry.hpp"
#include "asop/sim.hpp"
#include "asop/transport.hpp"
#include "asop/wire.hpp"

namespace {

using namespace asop;

std::atomic<int> g_signal{0};

void handle_signal(int sig) { g_signal.store(sig); }

int fail(Err e, const std::string& what = {}) {
  std::fprintf(stderr, "error: %.*s (0x%04x)%s%s\n",
               static_cast<int>(err_name(e).size()), err_name(e).data(),
               static_cast<unsigned>(e), what.empty() ? "" : " ",
               what.c_str());
  return 1;
}

int fail_msg(const std::string& what) {
  std::fprintf(stderr, "error: %s\n", what.c_str());
  return 1;
}

Result<std::array<uint8_t, 32>> parse_key32(const std::string& hex) {
  auto raw = from_hex(hex);
  if (!raw || raw.value().size() != 32) return Err::MalformedKey;
  std::array<uint8_t, 32> out{};
  std::copy(raw.value().begin(), raw.value().end(), out.begin());
  return out;
}

std::array<uint8_t, 32> random_key32() {
  std::array<uint8_t, 32> out{};
  RAND_bytes(out.data(), static_cast<int>(out.size()));
  return out;
}

uint64_t wall_or(uint64_t time_base) {
  return time_base != 0 ? time_base
                        : static_cast<uint64_t>(::time(nullptr));
}

Result<Bytes> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return Err::IoError;
  Bytes data((std::istreambuf_iterator<char>(in)),
             std::istreambuf_iterator<char>());
  return data;
}

[[nodiscard]] Err write_file(const std::filesystem::path& p, ByteSpan data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) return Err::IoError;
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  return out.good() ? Err::Ok : Err::IoError;
}

// Sends `m`, reads one reply, and unwraps a server ERROR frame into its
// carried code so callers see the protocol error, not just "wrong type".
Result<wire::Message> expect_reply(net::Socket& sock, const wire::Message& m,
                                   wire::MsgType want, int timeout_ms) {
  auto reply = net::request_reply(sock, m, timeout_ms);
  if (!reply) return reply.error();
  if (reply.value().type == wire::MsgType::Error) {
    auto we = wire::parse_error(reply.value());
    return we ? we.value().code : Err::ProtocolViolation;
  }
  if (reply.value().type != want) return Err::ProtocolViolation;
  return reply;
}

std::shared_ptr<Backend> open_backend(const std::string& name,
                                      const std::string& keydir, Err& err) {
  BackendOptions opts;
  if (!keydir.empty()) opts.toy_key_directory = keydir;
  auto b = make_backend(name, opts);
  if (!b) {
    err = b.error();
    return nullptr;
  }
  err = Err::Ok;
  return std::move(b).value();
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string bind = "127.0.0.1:7450";
  std::string store;
  std::string backend = "toy";
  std::string seed_hex;
  std::string keydir;
  std::string port_file;
  uint64_t time_base = 0;
};

int run_serve(const ServeArgs& a) {
  auto ep = net::Endpoint::parse(a.bind);
  if (!ep) return fail(ep.error(), "(--bind)");

  net::DaemonConfig cfg;
  cfg.host = ep.value().host;
  cfg.port = ep.value().port;
  if (!a.store.empty()) cfg.store_path = a.store;
  cfg.backend = a.backend;
  cfg.time_base = a.time_base;
  if (!a.keydir.empty()) cfg.toy_key_directory = a.keydir;
  if (a.seed_hex.empty()) {
    cfg.seed = random_key32();
  } else {
    auto seed = parse_key32(a.seed_hex);
    if (!seed) return fail(seed.error(), "(--seed wants 64 hex chars)");
    cfg.seed = seed.value();
  }

  auto daemon = net::ServerDaemon::start(std::move(cfg));
  if (!daemon) return fail(daemon.error(), "(start)");

  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);

  std::printf("listening on %s:%u\n", ep.value().host.c_str(),
              daemon.value()->port());
  if (!a.store.empty()) std::printf("store: %s\n", a.store.c_str());
  std::fflush(stdout);

  if (!a.port_file.empty()) {
    std::string line = std::to_string(daemon.value()->port()) + "\n";
    if (write_file(a.port_file, as_span(line)) != Err::Ok)
      return fail(Err::IoError, "(--port-file)");
  }

  while (g_signal.load() == 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(100));

  daemon.value()->stop();
  std::printf("stopped\n");
  return 0;
}

// ---------------------------------------------------------------------------
// register
// ---------------------------------------------------------------------------

struct RegisterArgs {
  std::string server;
  std::string account;
  std::string seed_hex;
  std::string ck_hex;
  std::string state_path;
  std::string backend = "toy";
  std::string keydir;
  uint64_t time_base = 0;
  int timeout_ms = 10000;
};

int run_register(const RegisterArgs& a) {
  auto ep = net::Endpoint::parse(a.server);
  if (!ep) return fail(ep.error(), "(--server)");
  auto ck = parse_key32(a.ck_hex);
  if (!ck) return fail(ck.error(), "(--ck wants 64 hex chars)");
  std::array<uint8_t, 32> seed =
      a.seed_hex.empty() ? random_key32() : std::array<uint8_t, 32>{};
  if (!a.seed_hex.empty()) {
    auto parsed = parse_key32(a.seed_hex);
    if (!parsed) return fail(parsed.error(), "(--seed wants 64 hex chars)");
    seed = parsed.value();
  }

  Err berr = Err::Ok;
  auto backend = open_backend(a.backend, a.keydir, berr);
  if (!backend) return fail(berr, "(--backend)");

  const uint64_t now = wall_or(a.time_base);
  proto::Authenticator auth(backend, a.account, NetworkSessionKey{ck.value()},
                            seed);
  auto init = auth.begin_register(now);
  if (!init) return fail(init.error(), "(begin register)");

  auto sock = net::tcp_connect(ep.value().host, ep.value().port);
  if (!sock) return fail(sock.error(), "(connect)");
  auto ack = expect_reply(sock.value(), init.value(),
                          wire::MsgType::RegisterAck, a.timeout_ms);
  if (!ack) return fail(ack.error(), "(register)");
  if (Err e = auth.process_register_ack(ack.value(), now); e != Err::Ok)
    return fail(e, "(register ack)");

  Bytes state = auth.save_state();
  if (write_file(a.state_path, state) != Err::Ok)
    return fail(Err::IoError, "(--auth-state)");

  std::printf("registered %s: session valid until t=%llu\n", a.account.c_str(),
              static_cast<unsigned long long>(auth.session_expiry()));
  return 0;
}

// ---------------------------------------------------------------------------
// add-device
// ---------------------------------------------------------------------------

struct AddDeviceArgs {
  std::string server;
  std::string device;
  std::string state_path;
  std::string backend = "toy";
  std::string keydir;
  uint64_t time_base = 0;
  int timeout_ms = 30000;
};

int run_add_device(const AddDeviceArgs& a) {
  auto server_ep = net::Endpoint::parse(a.server);
  if (!server_ep) return fail(server_ep.error(), "(--server)");
  auto device_ep = net::Endpoint::parse(a.device);
  if (!device_ep) return fail(device_ep.error(), "(--device)");

  Err berr = Err::Ok;
  auto backend = open_backend(a.backend, a.keydir, berr);
  if (!backend) return fail(berr, "(--backend)");

  auto blob = read_file(a.state_path);
  if (!blob) return fail(blob.error(), "(--auth-state)");
  auto restored = proto::Authenticator::restore(backend, blob.value());
  if (!restored) return fail(restored.error(), "(--auth-state)");
  proto::Authenticator auth = std::move(restored).value();

  const uint64_t now = wall_or(a.time_base);
  auto request = auth.request_add_device(now);
  if (!request) return fail(request.error(), "(add device)");

  auto server_sock = net::tcp_connect(server_ep.value().host,
                                      server_ep.value().port);
  if (!server_sock) return fail(server_sock.error(), "(connect server)");
  auto offer = expect_reply(server_sock.value(), request.value(),
                            wire::MsgType::OnboardOffer, a.timeout_ms);
  if (!offer) return fail(offer.error(), "(offer)");

  auto provision = auth.process_offer(offer.value());
  if (!provision) return fail(provision.error(), "(offer)");

  {
    auto device_sock = net::tcp_connect(device_ep.value().host,
                                        device_ep.value().port);
    if (!device_sock) return fail(device_sock.error(), "(connect device)");
    if (Err e = net::send_message(device_sock.value(), provision.value());
        e != Err::Ok)
      return fail(e, "(provision)");
  }

  // The server routes ONBOARD_NOTIFY back over this connection once the
  // device's registration commits.
  auto notify = net::read_message(server_sock.value(), a.timeout_ms);
  if (!notify) return fail(notify.error(), "(waiting for notify)");
  if (notify.value().type == wire::MsgType::Error) {
    auto we = wire::parse_error(notify.value());
    return fail(we ? we.value().code : Err::ProtocolViolation, "(notify)");
  }
  if (Err e = auth.process_notify(notify.value()); e != Err::Ok)
    return fail(e, "(notify)");

  Bytes state = auth.save_state();
  if (write_file(a.state_path, state) != Err::Ok)
    return fail(Err::IoError, "(--auth-state)");

  std::printf("device onboarded: %s\n",
              uuid_to_string(auth.onboarded_uuid()).c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// device run
// ---------------------------------------------------------------------------

struct DeviceArgs {
  std::string listen = "127.0.0.1:0";
  std::string seed_hex;
  std::string ck_hex;
  std::string state_path;
  std::string port_file;
  std::string backend = "toy";
  std::string keydir;
  uint64_t time_base = 0;
  int timeout_ms = 30000;
};

int run_device(const DeviceArgs& a) {
  auto ep = net::Endpoint::parse(a.listen);
  if (!ep) return fail(ep.error(), "(--listen)");
  auto ck = parse_key32(a.ck_hex);
  if (!ck) return fail(ck.error(), "(--ck wants 64 hex chars)");
  std::array<uint8_t, 32> seed =
      a.seed_hex.empty() ? random_key32() : std::array<uint8_t, 32>{};
  if (!a.seed_hex.empty()) {
    auto parsed = parse_key32(a.seed_hex);
    if (!parsed) return fail(parsed.error(), "(--seed wants 64 hex chars)");
    seed = parsed.value();
  }

  Err berr = Err::Ok;
  auto backend = open_backend(a.backend, a.keydir, berr);
  if (!backend) return fail(berr, "(--backend)");

  auto listener = net::Listener::bind(ep.value().host, ep.value().port);
  if (!listener) return fail(listener.error(), "(--listen)");
  std::printf("device listening on %s:%u\n", ep.value().host.c_str(),
              listener.value().port());
  std::fflush(stdout);
  if (!a.port_file.empty()) {
    std::string line = std::to_string(listener.value().port()) + "\n";
    if (write_file(a.port_file, as_span(line)) != Err::Ok)
      return fail(Err::IoError, "(--port-file)");
  }

  auto conn = listener.value().accept(a.timeout_ms);
  if (!conn) return fail(conn.error(), "(waiting for provision)");
  auto frame = net::read_frame(conn.value().fd(), a.timeout_ms);
  if (!frame) return fail(frame.error(), "(waiting for provision)");
  auto provision = wire::decode(frame.value());
  if (!provision) return fail(provision.error(), "(provision)");

  const uint64_t now = wall_or(a.time_base);
  proto::Device dev(backend, NetworkSessionKey{ck.value()}, seed);
  auto registration = dev.process_provision(provision.value(), now);
  if (!registration) return fail(registration.error(), "(provision)");

  const auto& api = dev.server_api();
  auto server_sock = net::tcp_connect(api.host, api.port);
  if (!server_sock) return fail(server_sock.error(), "(connect server)");
  auto accept = expect_reply(server_sock.value(), registration.value(),
                             wire::MsgType::DeviceAccept, a.timeout_ms);
  if (!accept) return fail(accept.error(), "(register)");
  if (Err e = dev.process_accept(accept.value()); e != Err::Ok)
    return fail(e, "(accept)");

  if (!a.state_path.empty()) {
    Bytes state = dev.save_state();
    if (write_file(a.state_path, state) != Err::Ok)
      return fail(Err::IoError, "(--state)");
  }

  std::printf("onboarded: %s\n", uuid_to_string(dev.device_uuid()).c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// registry maintenance: revoke / store list / store advance
// ---------------------------------------------------------------------------

struct StoreArgs {
  std::string store;
  std::string uuid;
};

int run_revoke(const StoreArgs& a) {
  auto uuid = uuid_from_string(a.uuid);
  if (!uuid) return fail_msg("malformed uuid: " + a.uuid);
  auto store = store::Store::load(a.store);
  if (!store) return fail(store.error(), "(--store)");
  if (Err e = store.value().revoke(*uuid); e != Err::Ok) return fail(e);
  if (Err e = store.value().persist(a.store); e != Err::Ok)
    return fail(e, "(--store)");
  std::printf("revoked: %s\n", a.uuid.c_str());
  return 0;
}

int run_store_list(const StoreArgs& a) {
  auto store = store::Store::load(a.store);
  if (!store) return fail(store.error(), "(--store)");
  for (const auto& [uuid, rec] : store.value().records()) {
    std::printf("%s %s onboarded_at=%llu token_counter=%llu\n",
                uuid_to_string(uuid).c_str(),
                rec.status == store::DeviceStatus::Active ? "active"
                                                          : "revoked",
                static_cast<unsigned long long>(rec.onboarded_at),
                static_cast<unsigned long long>(rec.t_d_head.counter));
  }
  std::printf("records: %zu\n", store.value().size());
  return 0;
}

int run_store_advance(const StoreArgs& a) {
  auto uuid = uuid_from_string(a.uuid);
  if (!uuid) return fail_msg("malformed uuid: " + a.uuid);
  auto store = store::Store::load(a.store);
  if (!store) return fail(store.error(), "(--store)");
  auto token = store.value().advance_token(*uuid);
  if (!token) return fail(token.error());
  if (Err e = store.value().persist(a.store); e != Err::Ok)
    return fail(e, "(--store)");
  std::printf("token advanced: counter=%llu value=%s\n",
              static_cast<unsigned long long>(token.value().counter),
              to_hex(token.value().value).c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string transcript;
  uint64_t rng = 0;
  bool mutate = false;
  bool list = false;
};

int write_transcript(const std::string& path, const sim::Transcript& t) {
  if (path.empty()) return 0;
  std::string jsonl = t.to_jsonl();
  if (write_file(path, as_span(jsonl)) != Err::Ok)
    return fail(Err::IoError, "(--transcript)");
  return 0;
}

int run_simulate(const SimulateArgs& a) {
  if (a.list) {
    std::printf("happy_path\n");
    for (const auto& name : sim::scenario_names())
      std::printf("%s\n", name.c_str());
    return 0;
  }
  if (a.scenario.empty()) return fail_msg("missing scenario (try --list)");

  sim::SimConfig cfg = sim::default_config();
  cfg.scenario_rng = a.rng;

  if (a.scenario == "happy_path") {
    sim::World world(cfg);
    Err e = world.run_happy_path();
    for (const auto& entry : world.transcript().entries)
      std::printf("t=%llu %s -> %s %.*s %.*s\n",
                  static_cast<unsigned long long>(entry.t), entry.from.c_str(),
                  entry.to.c_str(),
                  static_cast<int>(wire::msg_type_name(entry.type).size()),
                  wire::msg_type_name(entry.type).data(),
                  static_cast<int>(err_name(entry.outcome).size()),
                  err_name(entry.outcome).data());
    if (int rc = write_transcript(a.transcript, world.transcript()); rc != 0)
      return rc;
    if (e != Err::Ok) return fail(e, "(happy path)");
    std::printf("happy path complete: %s\n",
                uuid_to_string(world.device().device_uuid()).c_str());
    return 0;
  }

  if (a.mutate) {
    auto twin = sim::mutation_twin(cfg, a.scenario);
    if (!twin) return fail(twin.error(), "(--mutate)");
    cfg = std::move(twin).value();
  }
  auto result = sim::run_scenario(a.scenario, cfg);
  if (!result) return fail(result.error(), "(scenario)");

  std::printf("scenario %s%s: %.*s (%s)\n", a.scenario.c_str(),
              a.mutate ? " [mutated]" : "",
              static_cast<int>(
                  sim::verdict_name(result.value().verdict).size()),
              sim::verdict_name(result.value().verdict).data(),
              result.value().note.c_str());
  if (int rc = write_transcript(a.transcript, result.value().transcript);
      rc != 0)
    return rc;
  return result.value().verdict == sim::Verdict::DefenseHeld ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asop: sovereign device onboarding"};
  app.require_subcommand(1);

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the onboarding server");
  serve->add_option("--bind", serve_args.bind, "host:port (port 0 picks one)");
  serve->add_option("--store", serve_args.store, "Device registry file")
      ->envname("ASOP_STORE");
  serve->add_option("--backend", serve_args.backend, "Crypto backend name")
      ->envname("ASOP_BACKEND");
  serve->add_option("--seed", serve_args.seed_hex,
                    "Deterministic seed, 64 hex chars (default: random)");
  serve->add_option("--time-base", serve_args.time_base,
                    "Freeze the server clock at this unix time (0: wall)");
  serve->add_option("--port-file", serve_args.port_file,
                    "Write the bound port here once listening");
  serve->add_option("--toy-keydir", serve_args.keydir,
                    "Shared signature key file for the toy backend")
      ->envname("ASOP_TOY_KEYDIR");

  RegisterArgs register_args;
  auto* reg = app.add_subcommand("register", "Register an account session");
  reg->add_option("--server", register_args.server, "Server host:port")
      ->required();
  reg->add_option("--account", register_args.account, "Account id")
      ->required();
  reg->add_option("--ck", register_args.ck_hex,
                  "Authenticator/device shared key, 64 hex chars")
      ->required();
  reg->add_option("--seed", register_args.seed_hex,
                  "Deterministic seed, 64 hex chars (default: random)");
  reg->add_option("--auth-state", register_args.state_path,
                  "Where to save the authenticator state")
      ->required();
  reg->add_option("--backend", register_args.backend, "Crypto backend name")
      ->envname("ASOP_BACKEND");
  reg->add_option("--toy-keydir", register_args.keydir,
                  "Shared signature key file for the toy backend")
      ->envname("ASOP_TOY_KEYDIR");
  reg->add_option("--time-base", register_args.time_base,
                  "Use this unix time instead of the wall clock");
  reg->add_option("--timeout-ms", register_args.timeout_ms, "Reply timeout");

  AddDeviceArgs add_args;
  auto* add = app.add_subcommand("add-device",
                                 "Onboard the device waiting at --device");
  add->add_option("--server", add_args.server, "Server host:port")->required();
  add->add_option("--device", add_args.device,
                  "Device provisioning listener host:port")
      ->required();
  add->add_option("--auth-state", add_args.state_path,
                  "Authenticator state saved by `register`")
      ->required();
  add->add_option("--backend", add_args.backend, "Crypto backend name")
      ->envname("ASOP_BACKEND");
  add->add_option("--toy-keydir", add_args.keydir,
                  "Shared signature key file for the toy backend")
      ->envname("ASOP_TOY_KEYDIR");
  add->add_option("--time-base", add_args.time_base,
                  "Use this unix time instead of the wall clock");
  add->add_option("--timeout-ms", add_args.timeout_ms,
                  "How long to wait for the onboarding notification");

  DeviceArgs device_args;
  auto* device = app.add_subcommand("device", "Device-side commands");
  device->require_subcommand(1);
  auto* device_run = device->add_subcommand(
      "run", "Wait for one provisioning frame, register, then exit");
  device_run->add_option("--listen", device_args.listen,
                         "host:port to wait on (port 0 picks one)");
  device_run->add_option("--ck", device_args.ck_hex,
                         "Authenticator/device shared key, 64 hex chars")
      ->required();
  device_run->add_option("--seed", device_args.seed_hex,
                         "Deterministic seed, 64 hex chars (default: random)");
  device_run->add_option("--state", device_args.state_path,
                         "Where to save the device state after onboarding");
  device_run->add_option("--port-file", device_args.port_file,
                         "Write the bound port here once listening");
  device_run->add_option("--backend", device_args.backend,
                         "Crypto backend name")
      ->envname("ASOP_BACKEND");
  device_run->add_option("--toy-keydir", device_args.keydir,
                         "Shared signature key file for the toy backend")
      ->envname("ASOP_TOY_KEYDIR");
  device_run->add_option("--time-base", device_args.time_base,
                         "Use this unix time instead of the wall clock");
  device_run->add_option("--timeout-ms", device_args.timeout_ms,
                         "How long to wait for provisioning");

  StoreArgs revoke_args;
  auto* revoke = app.add_subcommand("revoke", "Revoke a device (terminal)");
  revoke->add_option("--store", revoke_args.store, "Device registry file")
      ->envname("ASOP_STORE")
      ->required();
  revoke->add_option("--uuid", revoke_args.uuid, "Device uuid")->required();

  StoreArgs list_args;
  StoreArgs advance_args;
  auto* store_cmd = app.add_subcommand("store", "Registry file tools");
  store_cmd->require_subcommand(1);
  auto* store_list = store_cmd->add_subcommand("list", "List device records");
  store_list->add_option("--store", list_args.store, "Device registry file")
      ->envname("ASOP_STORE")
      ->required();
  auto* store_advance = store_cmd->add_subcommand(
      "advance", "Ratchet a device's long-lived token once");
  store_advance
      ->add_option("--store", advance_args.store, "Device registry file")
      ->envname("ASOP_STORE")
      ->required();
  store_advance->add_option("--uuid", advance_args.uuid, "Device uuid")
      ->required();

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand(
      "simulate", "Run an adversarial scenario (exit 0 iff the defense held)");
  simulate->add_option("scenario", sim_args.scenario,
                       "Scenario name, or happy_path");
  simulate->add_option("--transcript", sim_args.transcript,
                       "Write the transcript as JSON lines");
  simulate->add_option("--rng", sim_args.rng, "Adversary interleaving seed");
  simulate->add_flag("--mutate", sim_args.mutate,
                     "Apply the scenario's defense regression first");
  simulate->add_flag("--list", sim_args.list, "List scenario names");

  CLI11_PARSE(app, argc, argv);

  if (serve->parsed()) return run_serve(serve_args);
  if (reg->parsed()) return run_register(register_args);
  if (add->parsed()) return run_add_device(add_args);
  if (device_run->parsed()) return run_device(device_args);
  if (revoke->parsed()) return run_revoke(revoke_args);
  if (store_list->parsed()) return run_store_list(list_args);
  if (store_advance->parsed()) return run_store_advance(advance_args);
  if (simulate->parsed()) return run_simulate(sim_args);
  return fail_msg("no subcommand");
}
