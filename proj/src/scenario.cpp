#include "anonlab/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "anonlab/adversary.hpp"
#include "anonlab/onion.hpp"

namespace anonlab::scenario {

namespace fs = std::filesystem;
using nlohmann::json;
using simnet::EventRecord;
using simnet::NodeId;

namespace {

// ---------------------------------------------------------------------------
// Parsing

const std::set<std::string> kProtocols = {"onion-routing", "dcnet-full",
                                          "dcnet-client-server"};
const std::set<std::string> kAttackKinds = {
    "traffic-confirmation", "stain",      "congestion-probe",
    "intersection",         "statistical-disclosure", "dcnet-owner-guess"};

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
    throw ConfigError("scenario field '" + field + "': " + why);
}

template <typename T>
T get_or(const json& j, const std::string& field, T fallback) {
    if (!j.contains(field)) return fallback;
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        bad_field(field, "wrong type");
    }
}

metrics::AnonymityPolicy parse_policy(const json& j) {
    metrics::AnonymityPolicy p;
    std::string metric = get_or<std::string>(j, "metric", "possinymity");
    if (metric == "possinymity")
        p.metric = metrics::MetricKind::Possinymity;
    else if (metric == "indinymity")
        p.metric = metrics::MetricKind::Indinymity;
    else
        bad_field("policy.metric", "expected 'possinymity' or 'indinymity'");
    p.floor = get_or<size_t>(j, "floor", 1);
    p.max_loss_rate = get_or<size_t>(j, "max_loss_rate", 0);
    p.window = get_or<size_t>(j, "window", 1);
    p.delay_rounds = get_or<bool>(j, "delay_rounds", false);
    if (p.window == 0) bad_field("policy.window", "must be >= 1");
    return p;
}

} // namespace

Scenario parse_scenario(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario must be a JSON object");

    static const std::set<std::string> known = {
        "name", "protocol", "master_seed", "rounds", "clients", "servers",
        "relays", "circuit_length", "slot_size", "accountability",
        "default_latency_ms", "round_interval_ms", "epoch_ms", "horizon_ms",
        "relay_service_ms", "max_cells_per_epoch", "online_probability",
        "active_clients", "transmissions", "disruptions", "policy", "attacks",
        "keep_ciphertexts", "force_metrics"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) bad_field(it.key(), "unknown field");

    Scenario s;
    s.name = get_or<std::string>(j, "name", "unnamed");
    if (!j.contains("protocol")) bad_field("protocol", "required");
    s.protocol = j.at("protocol").get<std::string>();
    if (!kProtocols.count(s.protocol))
        bad_field("protocol",
                  "expected onion-routing, dcnet-full, or dcnet-client-server");

    s.master_seed = get_or<uint64_t>(j, "master_seed", 1);
    s.rounds = get_or<uint64_t>(j, "rounds", 10);
    s.clients = get_or<size_t>(j, "clients", 3);
    s.servers = get_or<size_t>(j, "servers", 3);
    s.relays = get_or<size_t>(j, "relays", 6);
    s.circuit_length = get_or<size_t>(j, "circuit_length", 3);
    s.slot_size = get_or<size_t>(j, "slot_size", 64);
    s.accountability = get_or<bool>(j, "accountability", false);
    s.default_latency_ms = get_or<int64_t>(j, "default_latency_ms", 10);
    s.round_interval_ms = get_or<int64_t>(j, "round_interval_ms", 100);
    s.epoch_ms = get_or<int64_t>(j, "epoch_ms", 100);
    s.horizon_ms = get_or<int64_t>(j, "horizon_ms", 5000);
    s.relay_service_ms = get_or<int64_t>(j, "relay_service_ms", 1);
    s.max_cells_per_epoch = get_or<int>(j, "max_cells_per_epoch", 5);
    s.online_probability = get_or<double>(j, "online_probability", 1.0);
    s.active_clients = get_or<std::vector<size_t>>(j, "active_clients", {});
    s.keep_ciphertexts = get_or<bool>(j, "keep_ciphertexts", true);
    s.force_metrics = get_or<bool>(j, "force_metrics", false);

    if (s.rounds == 0) bad_field("rounds", "must be >= 1");
    if (s.clients < 2 && s.protocol != "onion-routing")
        bad_field("clients", "DC-net needs at least 2 clients");
    if (s.clients < 1) bad_field("clients", "must be >= 1");
    if (s.protocol == "dcnet-client-server" && s.servers < 1)
        bad_field("servers", "client-server DC-net needs at least 1 server");
    if (s.protocol == "onion-routing") {
        if (s.circuit_length < 1) bad_field("circuit_length", "must be >= 1");
        if (s.relays < s.circuit_length)
            bad_field("relays", "need at least circuit_length relays");
    }
    if (s.slot_size == 0) bad_field("slot_size", "must be >= 1");
    if (s.default_latency_ms <= 0) bad_field("default_latency_ms", "must be > 0");
    if (s.round_interval_ms <= 0) bad_field("round_interval_ms", "must be > 0");
    if (s.epoch_ms <= 0) bad_field("epoch_ms", "must be > 0");
    if (s.horizon_ms <= 0) bad_field("horizon_ms", "must be > 0");
    if (s.relay_service_ms < 0) bad_field("relay_service_ms", "must be >= 0");
    if (s.max_cells_per_epoch < 0) bad_field("max_cells_per_epoch", "must be >= 0");
    if (s.online_probability < 0.0 || s.online_probability > 1.0)
        bad_field("online_probability", "must be in [0, 1]");
    for (size_t c : s.active_clients)
        if (c >= s.clients) bad_field("active_clients", "client index out of range");

    if (j.contains("transmissions")) {
        for (const json& t : j.at("transmissions")) {
            dcnet::Transmission tx;
            tx.round = get_or<uint64_t>(t, "round", 0);
            tx.client_index = get_or<size_t>(t, "client", 0);
            tx.message = to_bytes(get_or<std::string>(t, "message", ""));
            if (tx.client_index >= s.clients)
                bad_field("transmissions.client", "client index out of range");
            if (tx.message.size() > s.slot_size)
                bad_field("transmissions.message", "longer than slot_size");
            s.transmissions.push_back(std::move(tx));
        }
    }
    if (j.contains("disruptions")) {
        for (const json& d : j.at("disruptions")) {
            dcnet::Disruption dis;
            dis.round = get_or<uint64_t>(d, "round", 0);
            dis.client_index = get_or<size_t>(d, "client", 0);
            dis.slot_index = get_or<size_t>(d, "slot", 0);
            dis.seed = get_or<uint64_t>(d, "seed", 1);
            if (dis.client_index >= s.clients)
                bad_field("disruptions.client", "client index out of range");
            if (dis.slot_index >= s.clients)
                bad_field("disruptions.slot", "slot index out of range");
            s.disruptions.push_back(dis);
        }
    }
    if (j.contains("policy") && !j.at("policy").is_null())
        s.policy = parse_policy(j.at("policy"));
    if (j.contains("attacks")) {
        for (const json& a : j.at("attacks")) {
            AttackSpec spec;
            spec.kind = get_or<std::string>(a, "kind", "");
            if (!kAttackKinds.count(spec.kind))
                bad_field("attacks.kind", "unknown attack '" + spec.kind + "'");
            spec.params = a.contains("params") ? a.at("params") : json::object();
            s.attacks.push_back(std::move(spec));
        }
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("scenario is not valid JSON: " + std::string(e.what()));
    }
    return parse_scenario(j);
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["protocol"] = s.protocol;
    j["master_seed"] = s.master_seed;
    j["rounds"] = s.rounds;
    j["clients"] = s.clients;
    j["servers"] = s.servers;
    j["relays"] = s.relays;
    j["circuit_length"] = s.circuit_length;
    j["slot_size"] = s.slot_size;
    j["accountability"] = s.accountability;
    j["default_latency_ms"] = s.default_latency_ms;
    j["round_interval_ms"] = s.round_interval_ms;
    j["epoch_ms"] = s.epoch_ms;
    j["horizon_ms"] = s.horizon_ms;
    j["relay_service_ms"] = s.relay_service_ms;
    j["max_cells_per_epoch"] = s.max_cells_per_epoch;
    j["online_probability"] = s.online_probability;
    j["active_clients"] = s.active_clients;
    j["keep_ciphertexts"] = s.keep_ciphertexts;
    j["force_metrics"] = s.force_metrics;
    json txs = json::array();
    for (const auto& t : s.transmissions)
        txs.push_back({{"round", t.round},
                       {"client", t.client_index},
                       {"message", to_string(t.message)}});
    j["transmissions"] = txs;
    json dis = json::array();
    for (const auto& d : s.disruptions)
        dis.push_back({{"round", d.round},
                       {"client", d.client_index},
                       {"slot", d.slot_index},
                       {"seed", d.seed}});
    j["disruptions"] = dis;
    if (s.policy) {
        json p;
        p["metric"] = s.policy->metric == metrics::MetricKind::Possinymity
                          ? "possinymity"
                          : "indinymity";
        p["floor"] = s.policy->floor;
        p["max_loss_rate"] = s.policy->max_loss_rate;
        p["window"] = s.policy->window;
        p["delay_rounds"] = s.policy->delay_rounds;
        j["policy"] = p;
    }
    json attacks = json::array();
    for (const auto& a : s.attacks)
        attacks.push_back({{"kind", a.kind}, {"params", a.params}});
    j["attacks"] = attacks;
    return j;
}

namespace {

// ---------------------------------------------------------------------------
// Node naming

std::string client_name(size_t i) { return "client-" + std::to_string(i); }
std::string relay_name(size_t i) { return "relay-" + std::to_string(i); }
std::string server_name(size_t i) { return "server-" + std::to_string(i); }
std::string dest_name(size_t i) { return "dst-" + std::to_string(i); }
std::string flow_name(size_t i) { return "flow-" + std::to_string(i); }

std::string home_server(const Scenario& s, size_t client_index) {
    return server_name(client_index % s.servers);
}

// ---------------------------------------------------------------------------
// Onion-routing execution

struct OnionArtifacts {
    std::vector<EventRecord> trace;
    std::map<std::string, onion::Circuit> circuits; // flow -> circuit
};

// One deterministic onion run.  `congested` raises the service scale of one
// relay (congestion probing); everything else is a pure function of the
// scenario, so probe runs differ from the baseline only through that relay.
OnionArtifacts simulate_onion(const Scenario& s,
                              const std::optional<NodeId>& congested,
                              double congestion_scale) {
    simnet::NetworkTopology topo;
    topo.default_latency_ms = s.default_latency_ms;
    for (size_t i = 0; i < s.clients; ++i) {
        topo.add_node(client_name(i));
        topo.add_node(dest_name(i));
    }
    for (size_t i = 0; i < s.relays; ++i) topo.add_node(relay_name(i));

    simnet::Simulator sim(std::move(topo));
    CipherSuite suite(SuiteKind::TestDeterministic);
    onion::RelayDirectory directory;
    for (size_t i = 0; i < s.relays; ++i) {
        KeyPair kp = suite.generate_keypair(relay_name(i));
        directory.add(kp.id, kp.public_part);
        sim.set_service_interval(relay_name(i), s.relay_service_ms);
    }
    if (congested) sim.set_service_scale(*congested, congestion_scale);

    onion::FlowEngine engine(sim);
    Rng root(s.master_seed);
    OnionArtifacts art;
    for (size_t i = 0; i < s.clients; ++i) {
        Rng circuit_rng = root.fork(1000 + i);
        onion::Circuit c = onion::build_circuit(directory, client_name(i),
                                                dest_name(i), s.circuit_length,
                                                circuit_rng);
        engine.register_circuit(flow_name(i), c);
        art.circuits[flow_name(i)] = std::move(c);
    }

    // Stains before traffic starts: an active tap on the flow's entry link.
    for (const AttackSpec& a : s.attacks) {
        if (a.kind != "stain") continue;
        size_t target = a.params.value("client", 0);
        if (target >= s.clients) bad_field("attacks.params.client", "out of range");
        std::vector<int64_t> pattern =
            a.params.value("pattern", std::vector<int64_t>{40, 0, 0, 40, 0});
        const onion::Circuit& c = art.circuits.at(flow_name(target));
        simnet::Tap tap;
        tap.links = {simnet::make_link(c.source, c.relays.front())};
        tap.owner = "adversary";
        tap.active = true;
        simnet::TapId id = sim.add_tap(tap);
        adversary::stain(sim, id, c.source, c.relays.front(), std::move(pattern));
    }

    for (size_t i = 0; i < s.clients; ++i) {
        Rng pattern_rng = root.fork(2000 + i);
        std::vector<std::pair<int64_t, int>> pattern;
        for (int64_t t = 0; t < s.horizon_ms; t += s.epoch_ms) {
            int cells = int(pattern_rng.uniform(uint64_t(s.max_cells_per_epoch) + 1));
            if (cells > 0) pattern.emplace_back(t, cells);
        }
        engine.start_flow(flow_name(i), pattern);
    }
    sim.run();
    art.trace = sim.log();
    return art;
}

std::set<simnet::LinkId> entry_links(const std::map<std::string, onion::Circuit>& cs) {
    std::set<simnet::LinkId> links;
    for (const auto& [flow, c] : cs)
        links.insert(simnet::make_link(c.source, c.relays.front()));
    return links;
}

std::set<simnet::LinkId> exit_links(const std::map<std::string, onion::Circuit>& cs) {
    std::set<simnet::LinkId> links;
    for (const auto& [flow, c] : cs)
        links.insert(simnet::make_link(c.relays.back(), c.destination));
    return links;
}

// ---------------------------------------------------------------------------
// DC-net execution

struct DcnetArtifacts {
    dcnet::SessionResult session;
    std::vector<EventRecord> trace;
    std::vector<json> rounds; // one object per completed round
};

dcnet::SessionConfig dcnet_config(const Scenario& s) {
    CipherSuite suite(SuiteKind::TestDeterministic);
    dcnet::SessionConfig cfg;
    cfg.descriptor.topology = s.protocol == "dcnet-full"
                                  ? dcnet::Topology::FullPairwise
                                  : dcnet::Topology::ClientServer;
    for (size_t i = 0; i < s.clients; ++i)
        cfg.descriptor.clients.push_back(suite.generate_keypair(client_name(i)));
    if (cfg.descriptor.topology == dcnet::Topology::ClientServer)
        for (size_t i = 0; i < s.servers; ++i)
            cfg.descriptor.servers.push_back(suite.generate_keypair(server_name(i)));
    cfg.descriptor.slot_size = s.slot_size;
    cfg.descriptor.accountability = s.accountability;
    cfg.rounds = s.rounds;
    cfg.master_seed = s.master_seed;
    cfg.online_probability = s.online_probability;
    cfg.policy = s.policy;
    cfg.keep_ciphertexts = s.keep_ciphertexts;
    cfg.force_metrics = s.force_metrics;
    cfg.disruptions = s.disruptions;
    cfg.transmissions = s.transmissions;

    // Recurring traffic: the active set (default: everyone) transmits a short
    // deterministic message whenever its slot is live.
    std::vector<size_t> active = s.active_clients;
    if (active.empty())
        for (size_t i = 0; i < s.clients; ++i) active.push_back(i);
    for (uint64_t r = 0; r < s.rounds; ++r)
        for (size_t c : active) {
            std::string m = "m:" + std::to_string(c) + ":" + std::to_string(r);
            Bytes msg = to_bytes(m);
            if (msg.size() > s.slot_size) msg.resize(s.slot_size);
            cfg.transmissions.push_back({r, c, std::move(msg)});
        }
    return cfg;
}

// Replays the session's traffic shape on the simulated network: uplink
// ciphertexts to each client's home server (or to every peer in the
// full-pairwise group), then the servers' broadcast at the round deadline.
// The broadcast fires at a fixed time — servers proceed at the deadline
// regardless of uplink jitter.
std::vector<EventRecord> simulate_dcnet_wire(const Scenario& s,
                                             const DcnetArtifacts& art) {
    simnet::NetworkTopology topo;
    topo.default_latency_ms = s.default_latency_ms;
    for (size_t i = 0; i < s.clients; ++i) topo.add_node(client_name(i));
    const bool client_server = s.protocol == "dcnet-client-server";
    if (client_server)
        for (size_t i = 0; i < s.servers; ++i) topo.add_node(server_name(i));
    simnet::Simulator sim(std::move(topo));

    for (const AttackSpec& a : s.attacks) {
        if (a.kind != "stain" || !client_server) continue;
        size_t target = a.params.value("client", 0);
        if (target >= s.clients) bad_field("attacks.params.client", "out of range");
        std::vector<int64_t> pattern =
            a.params.value("pattern", std::vector<int64_t>{40, 0, 0, 40, 0});
        simnet::Tap tap;
        tap.links = {simnet::make_link(client_name(target), home_server(s, target))};
        tap.owner = "adversary";
        tap.active = true;
        simnet::TapId id = sim.add_tap(tap);
        adversary::stain(sim, id, client_name(target), home_server(s, target),
                         std::move(pattern));
    }

    std::map<std::string, size_t> client_index;
    for (size_t i = 0; i < s.clients; ++i) client_index[client_name(i)] = i;

    for (const dcnet::RoundTranscript& t : art.session.transcripts) {
        if (t.status == dcnet::RoundStatus::Incomplete) continue;
        int64_t t0 = int64_t(t.round) * s.round_interval_ms;
        size_t wire = t.schedule.wire_length();
        std::set<std::string> online = t.online_clients;
        sim.schedule(t0, [online, wire, client_server, &client_index,
                          &s](simnet::Simulator& sv) {
            for (const std::string& c : online) {
                std::string flow = "up:" + c;
                if (client_server) {
                    sv.send(c, home_server(s, client_index.at(c)), Bytes(wire, 0),
                            flow);
                } else {
                    for (const std::string& peer : online)
                        if (peer != c) sv.send(c, peer, Bytes(wire, 0), flow);
                }
            }
        });
        if (client_server) {
            int64_t deadline = t0 + s.round_interval_ms / 2;
            sim.schedule(deadline, [online, wire, &s](simnet::Simulator& sv) {
                for (size_t j = 0; j < s.servers; ++j) {
                    std::string flow = "down:" + server_name(j);
                    for (const std::string& c : online)
                        sv.send(server_name(j), c, Bytes(wire, 0), flow);
                }
            });
        }
    }
    sim.run();
    return sim.log();
}

DcnetArtifacts run_dcnet(const Scenario& s) {
    CipherSuite suite(SuiteKind::TestDeterministic);
    DcnetArtifacts art;
    try {
        art.session = dcnet::run_session(suite, dcnet_config(s));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ProtocolError(std::string("DC-net session aborted: ") + e.what());
    }

    // Per-round activity by pseudonym, read off the presence logs.
    std::map<uint64_t, std::vector<std::string>> active_by_round;
    for (const auto& [label, log] : art.session.presence)
        for (int64_t t : log.activity_times)
            active_by_round[uint64_t(t)].push_back(label);

    for (const dcnet::RoundTranscript& t : art.session.transcripts) {
        json line;
        line["round"] = t.round;
        line["online"] = std::vector<std::string>(t.online_clients.begin(),
                                                  t.online_clients.end());
        line["status"] = dcnet::to_string(t.status);
        line["output_digest"] = to_hex(CipherSuite::hash(t.combined));
        auto it = active_by_round.find(t.round);
        std::vector<std::string> active =
            it == active_by_round.end() ? std::vector<std::string>{} : it->second;
        std::sort(active.begin(), active.end());
        line["active_nyms"] = active;
        json decoded = json::array();
        auto dec = art.session.decoded.find(t.round);
        if (dec != art.session.decoded.end())
            for (const Bytes& slot : dec->second) decoded.push_back(to_hex(slot));
        line["decoded"] = decoded;
        art.rounds.push_back(std::move(line));
    }

    art.trace = simulate_dcnet_wire(s, art);
    return art;
}

// ---------------------------------------------------------------------------
// Shared report plumbing

std::string exit_digest(const Scenario& s, const std::vector<EventRecord>& trace,
                        const json& truth) {
    std::string blob;
    if (s.protocol == "onion-routing") {
        std::set<simnet::LinkId> exits;
        for (const auto& [flow, j] : truth.at("circuits").items()) {
            std::vector<std::string> relays = j.get<std::vector<std::string>>();
            exits.insert(simnet::make_link(
                relays.back(), truth.at("destinations").at(flow).get<std::string>()));
        }
        for (const EventRecord& e : trace)
            if (e.kind == simnet::EventKind::Send &&
                exits.count(simnet::make_link(e.src, e.dst)))
                blob += simnet::trace_line(e) + "\n";
    } else {
        for (const EventRecord& e : trace)
            if (e.kind == simnet::EventKind::Send && e.flow_id.rfind("down:", 0) == 0)
                blob += simnet::trace_line(e) + "\n";
    }
    return to_hex(CipherSuite::hash(to_bytes(blob)));
}

PresenceLog presence_from_rounds(const Scenario& s, const std::vector<json>& rounds,
                                 const std::string& label) {
    PresenceLog log;
    for (size_t i = 0; i < s.clients; ++i) log.members.insert(client_name(i));
    for (const json& line : rounds) {
        int64_t r = line.at("round").get<int64_t>();
        std::set<std::string> online;
        for (const json& m : line.at("online")) online.insert(m.get<std::string>());
        auto active = line.at("active_nyms").get<std::vector<std::string>>();
        bool act = std::find(active.begin(), active.end(), label) != active.end();
        log.record_time(r, online, act);
    }
    return log;
}

// Pseudonym with the most recorded activity (lexicographic tie-break).
std::string default_target_nym(const std::vector<json>& rounds) {
    std::map<std::string, size_t> counts;
    for (const json& line : rounds)
        for (const json& n : line.at("active_nyms"))
            ++counts[n.get<std::string>()];
    std::string best;
    size_t best_count = 0;
    for (const auto& [label, c] : counts)
        if (c > best_count) {
            best = label;
            best_count = c;
        }
    if (best.empty()) throw ConfigError("no pseudonym activity in this run");
    return best;
}

std::string target_nym(const AttackSpec& spec, const std::vector<json>& rounds) {
    std::string label = spec.params.value("pseudonym", std::string());
    return label.empty() ? default_target_nym(rounds) : label;
}

// ---------------------------------------------------------------------------
// Attack evaluation (from persisted artifacts)

json attack_traffic_confirmation(const Scenario& s, const AttackSpec& spec,
                                 const std::vector<EventRecord>& trace,
                                 const json& truth) {
    if (s.protocol != "onion-routing")
        throw ConfigError("traffic-confirmation runs on onion-routing scenarios");
    std::map<std::string, onion::Circuit> circuits;
    for (const auto& [flow, j] : truth.at("circuits").items()) {
        onion::Circuit c;
        c.relays = j.get<std::vector<std::string>>();
        c.source = truth.at("sources").at(flow).get<std::string>();
        c.destination = truth.at("destinations").at(flow).get<std::string>();
        circuits[flow] = std::move(c);
    }
    adversary::CorrelateParams params;
    params.threshold = spec.params.value("threshold", 0.7);
    params.max_lag = spec.params.value("max_lag", 5);

    auto entry = adversary::build_series(trace, entry_links(circuits), s.epoch_ms,
                                         s.horizon_ms);
    auto exit = adversary::build_series(trace, exit_links(circuits), s.epoch_ms,
                                        s.horizon_ms);
    auto matches = adversary::fingerprint_correlate(entry, exit, params);

    size_t correct = 0;
    json claimed = json::array();
    for (const adversary::Match& m : matches) {
        bool hit = entry[m.entry_index].flow_id == exit[m.exit_index].flow_id;
        if (hit) ++correct;
        claimed.push_back({{"entry", entry[m.entry_index].flow_id},
                           {"exit", exit[m.exit_index].flow_id},
                           {"score", m.score},
                           {"correct", hit}});
    }
    json r;
    r["kind"] = spec.kind;
    r["parameters"] = {{"threshold", params.threshold}, {"max_lag", params.max_lag}};
    r["claimed"] = claimed;
    r["truth"] = "entry flow equals exit flow";
    r["precision"] = matches.empty() ? 0.0 : double(correct) / double(matches.size());
    r["recall"] = circuits.empty() ? 0.0 : double(correct) / double(circuits.size());
    return r;
}

// Stain recovery: correlate the stained flow's entry-side series against the
// exit-side series of every flow.  On onion routing the delays propagate; in
// a DC-net the deadline-driven broadcast erases them.
json attack_stain(const Scenario& s, const AttackSpec& spec,
                  const std::vector<EventRecord>& trace, const json& truth) {
    size_t target = spec.params.value("client", 0);
    double threshold = spec.params.value("threshold", 0.7);
    int max_lag = spec.params.value("max_lag", 5);
    int64_t horizon = s.protocol == "onion-routing"
                          ? s.horizon_ms
                          : int64_t(s.rounds) * s.round_interval_ms;

    std::set<simnet::LinkId> entry, exits;
    std::string entry_flow;
    if (s.protocol == "onion-routing") {
        const json& relays = truth.at("circuits").at(flow_name(target));
        std::string first = relays.front().get<std::string>();
        entry.insert(simnet::make_link(client_name(target), first));
        entry_flow = flow_name(target);
        std::map<std::string, onion::Circuit> circuits;
        for (const auto& [flow, j] : truth.at("circuits").items()) {
            onion::Circuit c;
            c.relays = j.get<std::vector<std::string>>();
            c.destination = truth.at("destinations").at(flow).get<std::string>();
            c.source = truth.at("sources").at(flow).get<std::string>();
            circuits[flow] = std::move(c);
        }
        exits = exit_links(circuits);
    } else {
        entry.insert(
            simnet::make_link(client_name(target), home_server(s, target)));
        entry_flow = "up:" + client_name(target);
        for (size_t jx = 0; jx < s.servers; ++jx)
            for (size_t c = 0; c < s.clients; ++c)
                exits.insert(simnet::make_link(server_name(jx), client_name(c)));
    }

    auto entry_series = adversary::build_series(trace, entry, s.epoch_ms, horizon);
    auto exit_series = adversary::build_series(trace, exits, s.epoch_ms, horizon);

    const adversary::FlowSeries* stained = nullptr;
    for (const auto& fs : entry_series)
        if (fs.flow_id == entry_flow) stained = &fs;

    double best = 0.0;
    std::string best_flow;
    if (stained) {
        for (const auto& fs : exit_series) {
            auto r = adversary::best_lag_correlation(*stained, fs, max_lag);
            if (r && *r > best) {
                best = *r;
                best_flow = fs.flow_id;
            }
        }
    }
    json r;
    r["kind"] = spec.kind;
    r["parameters"] = {{"client", target},
                       {"threshold", threshold},
                       {"max_lag", max_lag}};
    r["claimed"] = {{"matched", best > threshold},
                    {"score", best},
                    {"exit_flow", best_flow}};
    r["truth"] = {{"stained_flow", entry_flow}};
    bool hit = best > threshold &&
               (s.protocol == "onion-routing" ? best_flow == entry_flow : true);
    r["precision"] = best > threshold ? (hit ? 1.0 : 0.0) : 0.0;
    r["recall"] = s.protocol == "onion-routing" ? (hit ? 1.0 : 0.0) : 0.0;
    return r;
}

json attack_congestion_probe(const Scenario& s, const AttackSpec& spec) {
    if (s.protocol != "onion-routing")
        throw ConfigError("congestion-probe runs on onion-routing scenarios");
    size_t victim = spec.params.value("client", 0);
    double delta = spec.params.value("delta", 0.3);
    double scale = spec.params.value("congestion_scale", 50.0);
    std::string flow = flow_name(victim);

    auto throughput = [&](const std::optional<NodeId>& congested) {
        OnionArtifacts art = simulate_onion(s, congested, scale);
        const onion::Circuit& c = art.circuits.at(flow);
        size_t delivered = 0;
        for (const EventRecord& e : art.trace)
            if (e.kind == simnet::EventKind::Deliver && e.flow_id == flow &&
                e.dst == c.destination && e.time_ms <= s.horizon_ms)
                ++delivered;
        return double(delivered);
    };

    std::vector<NodeId> relays;
    for (size_t i = 0; i < s.relays; ++i) relays.push_back(relay_name(i));
    std::set<NodeId> claimed = adversary::probe_all_relays(throughput, relays, delta);

    OnionArtifacts base = simulate_onion(s, std::nullopt, 1.0);
    const onion::Circuit& c = base.circuits.at(flow);
    std::set<NodeId> actual(c.relays.begin(), c.relays.end());

    auto rpt = adversary::score_set_attack(
        spec.kind,
        {{"client", victim}, {"delta", delta}, {"congestion_scale", scale}}, claimed,
        actual);
    return rpt.to_json();
}

json attack_intersection(const Scenario& s, const AttackSpec& spec,
                         const std::vector<json>& rounds, const json& truth) {
    std::string label = target_nym(spec, rounds);
    PresenceLog log = presence_from_rounds(s, rounds, label);
    std::set<std::string> claimed = log.activity_times.empty()
                                        ? log.members
                                        : adversary::intersect(log);
    std::string owner = truth.at("nym_owner").at(label).get<std::string>();
    auto rpt = adversary::score_set_attack(spec.kind, {{"pseudonym", label}},
                                           claimed, {owner});
    return rpt.to_json();
}

json attack_statistical_disclosure(const Scenario& s, const AttackSpec& spec,
                                   const std::vector<json>& rounds,
                                   const json& truth) {
    std::string label = target_nym(spec, rounds);
    PresenceLog log = presence_from_rounds(s, rounds, label);
    auto scores = adversary::statistical_disclosure(log);
    std::set<std::string> top;
    if (!scores.empty()) {
        double max = scores.front().second;
        for (const auto& [m, v] : scores)
            if (v == max) top.insert(m);
    }
    std::string owner = truth.at("nym_owner").at(label).get<std::string>();
    auto rpt = adversary::score_set_attack(spec.kind, {{"pseudonym", label}}, top,
                                           {owner});
    json j = rpt.to_json();
    json ranked = json::array();
    for (const auto& [m, v] : scores) ranked.push_back({{"member", m}, {"score", v}});
    j["ranking"] = ranked;
    return j;
}

// Guess the slot owner by correlating each client's uplink volume with the
// slot's per-round activity.  Cover traffic makes every online client's
// uplink identical, so the scores tie and the guess degrades to chance.
json attack_owner_guess(const Scenario& s, const AttackSpec& spec,
                        const std::vector<EventRecord>& trace,
                        const std::vector<json>& rounds, const json& truth) {
    if (s.protocol == "onion-routing")
        throw ConfigError("dcnet-owner-guess runs on DC-net scenarios");
    std::string label = target_nym(spec, rounds);

    size_t n_rounds = rounds.size();
    std::map<uint64_t, size_t> round_pos;
    adversary::FlowSeries activity;
    activity.flow_id = label;
    activity.counts.assign(n_rounds, 0.0);
    for (size_t i = 0; i < n_rounds; ++i) {
        uint64_t r = rounds[i].at("round").get<uint64_t>();
        round_pos[r] = i;
        auto active = rounds[i].at("active_nyms").get<std::vector<std::string>>();
        if (std::find(active.begin(), active.end(), label) != active.end())
            activity.counts[i] = 1.0;
    }

    std::map<std::string, adversary::FlowSeries> uplink;
    for (size_t i = 0; i < s.clients; ++i) {
        adversary::FlowSeries fs;
        fs.flow_id = client_name(i);
        fs.counts.assign(n_rounds, 0.0);
        uplink[client_name(i)] = std::move(fs);
    }
    for (const EventRecord& e : trace) {
        if (e.kind != simnet::EventKind::Send || e.flow_id.rfind("up:", 0) != 0)
            continue;
        auto it = round_pos.find(uint64_t(e.time_ms / s.round_interval_ms));
        if (it == round_pos.end()) continue;
        uplink[e.flow_id.substr(3)].counts[it->second] += double(e.size_bytes);
    }

    double best = -2.0;
    std::vector<std::string> tied;
    for (const auto& [client, fs] : uplink) {
        auto r = adversary::best_lag_correlation(activity, fs, 0);
        double score = r ? *r : 0.0; // undefined correlation carries no signal
        if (score > best) {
            best = score;
            tied = {client};
        } else if (score == best) {
            tied.push_back(client);
        }
    }
    Rng pick(Rng(s.master_seed).fork(0xa77ac4).next_u64());
    std::string guess = tied.at(pick.uniform(tied.size()));
    std::string owner = truth.at("nym_owner").at(label).get<std::string>();
    auto rpt = adversary::score_set_attack(
        spec.kind, {{"pseudonym", label}, {"tie_size", tied.size()}}, {guess},
        {owner});
    json j = rpt.to_json();
    j["correct"] = guess == owner;
    return j;
}

json evaluate_attack(const Scenario& s, const AttackSpec& spec,
                     const std::vector<EventRecord>& trace,
                     const std::vector<json>& rounds, const json& truth) {
    if (spec.kind == "traffic-confirmation")
        return attack_traffic_confirmation(s, spec, trace, truth);
    if (spec.kind == "stain") return attack_stain(s, spec, trace, truth);
    if (spec.kind == "congestion-probe") return attack_congestion_probe(s, spec);
    if (spec.kind == "intersection")
        return attack_intersection(s, spec, rounds, truth);
    if (spec.kind == "statistical-disclosure")
        return attack_statistical_disclosure(s, spec, rounds, truth);
    if (spec.kind == "dcnet-owner-guess")
        return attack_owner_guess(s, spec, trace, rounds, truth);
    throw ConfigError("unknown attack kind: " + spec.kind);
}

// ---------------------------------------------------------------------------
// Report

json build_report(const Scenario& s, const std::vector<EventRecord>& trace,
                  const std::vector<json>& rounds, const std::string& metrics_csv,
                  const json& truth) {
    json report;
    report["name"] = s.name;
    report["protocol"] = s.protocol;
    report["seed"] = s.master_seed;
    report["rounds"] = s.rounds;
    report["trace_events"] = trace.size();
    int64_t simulated = 0;
    for (const EventRecord& e : trace) simulated = std::max(simulated, e.time_ms);
    report["simulated_ms"] = simulated;
    report["exit_digest"] = exit_digest(s, trace, truth);

    std::map<std::string, size_t> status_counts;
    for (const json& line : rounds)
        ++status_counts[line.at("status").get<std::string>()];
    report["round_status_counts"] = status_counts;

    // Metric summary recomputed from the CSV text.
    size_t min_poss = SIZE_MAX, min_ind = SIZE_MAX, suppressed = 0, points = 0;
    std::istringstream csv(metrics_csv);
    std::string row;
    std::getline(csv, row); // header
    while (std::getline(csv, row)) {
        std::istringstream cells(row);
        std::string round, nym, poss, ind, decision;
        std::getline(cells, round, ',');
        std::getline(cells, nym, ',');
        std::getline(cells, poss, ',');
        std::getline(cells, ind, ',');
        std::getline(cells, decision, ',');
        min_poss = std::min(min_poss, size_t(std::stoull(poss)));
        min_ind = std::min(min_ind, size_t(std::stoull(ind)));
        if (decision != "transmit") ++suppressed;
        ++points;
    }
    json msum;
    msum["points"] = points;
    if (points > 0) {
        msum["min_possinymity"] = min_poss;
        msum["min_indinymity"] = min_ind;
        msum["suppressed_points"] = suppressed;
    }
    report["metrics"] = msum;
    if (truth.contains("expelled")) report["expelled"] = truth.at("expelled");

    json attacks = json::array();
    for (const AttackSpec& a : s.attacks)
        attacks.push_back(evaluate_attack(s, a, trace, rounds, truth));
    report["attacks"] = attacks;
    return report;
}

// ---------------------------------------------------------------------------
// Persistence

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("missing run artifact: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct LoadedRun {
    Scenario scenario;
    std::vector<EventRecord> trace;
    std::vector<json> rounds;
    std::string metrics_csv;
    json truth;
};

LoadedRun load_run(const std::string& dir) {
    LoadedRun run;
    run.scenario = parse_scenario(json::parse(read_file(fs::path(dir) / "scenario.json")));
    std::istringstream trace_in(read_file(fs::path(dir) / "trace.jsonl"));
    run.trace = simnet::read_trace(trace_in);
    fs::path rounds_path = fs::path(dir) / "rounds.jsonl";
    if (fs::exists(rounds_path)) {
        std::istringstream in(read_file(rounds_path));
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) run.rounds.push_back(json::parse(line));
    }
    fs::path metrics_path = fs::path(dir) / "metrics.csv";
    if (fs::exists(metrics_path)) run.metrics_csv = read_file(metrics_path);
    run.truth = json::parse(read_file(fs::path(dir) / "truth.json"));
    return run;
}

} // namespace

json run_scenario(const Scenario& s, const std::string& out_dir) {
    fs::create_directories(out_dir);

    std::vector<EventRecord> trace;
    std::vector<json> rounds;
    std::string metrics_csv;
    json truth = json::object();

    if (s.protocol == "onion-routing") {
        OnionArtifacts art = simulate_onion(s, std::nullopt, 1.0);
        trace = std::move(art.trace);
        json circuits = json::object(), dests = json::object(),
             sources = json::object();
        for (const auto& [flow, c] : art.circuits) {
            circuits[flow] = c.relays;
            dests[flow] = c.destination;
            sources[flow] = c.source;
        }
        truth["circuits"] = circuits;
        truth["destinations"] = dests;
        truth["sources"] = sources;
        metrics_csv = metrics::to_csv({});
    } else {
        DcnetArtifacts art = run_dcnet(s);
        trace = std::move(art.trace);
        rounds = std::move(art.rounds);
        metrics_csv = metrics::to_csv(art.session.series);
        // The harness knows owners for scoring; the protocol never emits them.
        truth["nym_owner"] = art.session.nym_owner;
        truth["expelled"] = art.session.expelled;
    }

    std::ostringstream trace_out;
    simnet::write_trace(trace_out, trace);
    write_file(fs::path(out_dir) / "trace.jsonl", trace_out.str());

    std::string rounds_text;
    for (const json& line : rounds) rounds_text += line.dump() + "\n";
    write_file(fs::path(out_dir) / "rounds.jsonl", rounds_text);
    write_file(fs::path(out_dir) / "metrics.csv", metrics_csv);
    write_file(fs::path(out_dir) / "scenario.json", scenario_to_json(s).dump(2) + "\n");
    write_file(fs::path(out_dir) / "truth.json", truth.dump(2) + "\n");

    json report = build_report(s, trace, rounds, metrics_csv, truth);
    write_file(fs::path(out_dir) / "report.json", report.dump(2) + "\n");
    return report;
}

json run_attack_on_dir(const std::string& dir, const std::string& kind) {
    if (!kAttackKinds.count(kind)) throw ConfigError("unknown attack kind: " + kind);
    LoadedRun run = load_run(dir);
    AttackSpec spec;
    spec.kind = kind;
    for (const AttackSpec& a : run.scenario.attacks)
        if (a.kind == kind) spec = a; // reuse persisted parameters
    spec.params = spec.params.is_null() ? json::object() : spec.params;
    return evaluate_attack(run.scenario, spec, run.trace, run.rounds, run.truth);
}

json regenerate_report(const std::string& dir) {
    LoadedRun run = load_run(dir);
    json report = build_report(run.scenario, run.trace, run.rounds, run.metrics_csv,
                               run.truth);
    write_file(fs::path(dir) / "report.json", report.dump(2) + "\n");
    return report;
}

json compare_runs(const std::string& dir_a, const std::string& dir_b) {
    json a = json::parse(read_file(fs::path(dir_a) / "report.json"));
    json b = json::parse(read_file(fs::path(dir_b) / "report.json"));

    auto kinds = [](const json& r) {
        std::set<std::string> k;
        for (const json& atk : r.at("attacks")) k.insert(atk.at("kind"));
        return k;
    };
    if (kinds(a) != kinds(b))
        throw ConfigError("mismatched attack sets between runs");

    json out;
    out["runs"] = {{{"dir", dir_a}, {"name", a.at("name")}, {"protocol", a.at("protocol")}},
                   {{"dir", dir_b}, {"name", b.at("name")}, {"protocol", b.at("protocol")}}};
    json attacks = json::object();
    for (const json& atk : a.at("attacks")) {
        std::string kind = atk.at("kind");
        json other;
        for (const json& batk : b.at("attacks"))
            if (batk.at("kind") == kind) other = batk;
        attacks[kind] = {
            {"a", {{"precision", atk.value("precision", 0.0)},
                   {"recall", atk.value("recall", 0.0)},
                   {"claimed", atk.at("claimed")}}},
            {"b", {{"precision", other.value("precision", 0.0)},
                   {"recall", other.value("recall", 0.0)},
                   {"claimed", other.at("claimed")}}}};
    }
    out["attacks"] = attacks;
    out["metric_floor"] = {
        {"a", a.at("metrics").value("min_possinymity", 0)},
        {"b", b.at("metrics").value("min_possinymity", 0)}};
    out["exit_digest"] = {{"a", a.at("exit_digest")}, {"b", b.at("exit_digest")}};
    out["exit_identical"] = a.at("exit_digest") == b.at("exit_digest");
    return out;
}

} // namespace anonlab::scenario
