#ifndef ANONLAB_SCENARIO_HPP
#define ANONLAB_SCENARIO_HPP

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "anonlab/dcnet.hpp"
#include "anonlab/metrics.hpp"

namespace anonlab::scenario {

// Malformed or inconsistent configuration.  The CLI maps this to its own
// exit code, distinct from protocol aborts.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// The protocol itself failed mid-run (shuffle abort, jammed session the
// policy could not recover, ...).
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

struct AttackSpec {
    std::string kind;
    nlohmann::json params; // kind-specific knobs, may be empty
};

// A self-contained run description: scenario + seed determines every output
// byte.  Field names here are exactly the JSON field names.
struct Scenario {
    std::string name = "unnamed";
    std::string protocol; // onion-routing | dcnet-full | dcnet-client-server
    uint64_t master_seed = 1;
    uint64_t rounds = 10;

    // Group parameters.
    size_t clients = 3;       // N
    size_t servers = 3;       // M (client-server DC-net)
    size_t relays = 6;        // relay pool (onion routing)
    size_t circuit_length = 3;
    size_t slot_size = 64;
    bool accountability = false;

    // Timing.
    int64_t default_latency_ms = 10;
    int64_t round_interval_ms = 100; // DC-net round cadence on the wire
    int64_t epoch_ms = 100;          // adversary bucketing
    int64_t horizon_ms = 5000;       // onion traffic duration
    int64_t relay_service_ms = 1;    // per-cell relay service time
    int max_cells_per_epoch = 5;     // onion flow pattern amplitude

    // Churn: per-round online probability (DC-net rounds).
    double online_probability = 1.0;

    // Clients that transmit in every round where their slot is live; empty
    // means all of them (uniform cover traffic).
    std::vector<size_t> active_clients;
    std::vector<dcnet::Transmission> transmissions; // explicit extra payloads
    std::vector<dcnet::Disruption> disruptions;

    std::optional<metrics::AnonymityPolicy> policy;
    std::vector<AttackSpec> attacks;

    // Resource controls for large runs.
    bool keep_ciphertexts = true;
    bool force_metrics = false;
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& s);

// Executes the scenario and writes trace.jsonl, rounds.jsonl, metrics.csv,
// scenario.json, truth.json, and report.json into out_dir.  Returns the
// report.  All outputs are a pure function of (scenario, seed).
nlohmann::json run_scenario(const Scenario& s, const std::string& out_dir);

// Re-runs one attack against the persisted outputs of a completed run.
nlohmann::json run_attack_on_dir(const std::string& dir, const std::string& kind);

// Rebuilds report.json from the persisted outputs alone and rewrites it.
nlohmann::json regenerate_report(const std::string& dir);

// Side-by-side table of two completed runs: attack success, metric floors,
// exit-side traffic digests.  Throws ConfigError when the attack sets differ
// or a run is missing.
nlohmann::json compare_runs(const std::string& dir_a, const std::string& dir_b);

} // namespace anonlab::scenario

#endif
