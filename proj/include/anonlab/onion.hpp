#ifndef ANONLAB_ONION_HPP
#define ANONLAB_ONION_HPP

#include <map>
#include <string>
#include <vector>

#include "anonlab/rng.hpp"
#include "anonlab/simnet.hpp"
#include "anonlab/suite.hpp"

namespace anonlab::onion {

using simnet::NodeId;

constexpr size_t kCellSize = 512;
constexpr size_t kDefaultCircuitLength = 3;

// Relays and their public keys, known to all nodes.
struct RelayDirectory {
    std::map<NodeId, Bytes> relays;

    void add(const NodeId& relay, Bytes public_key);
    const Bytes& key_of(const NodeId& relay) const;
    std::vector<NodeId> relay_ids() const;
};

struct Circuit {
    NodeId source;
    std::vector<NodeId> relays; // r_1 .. r_n, distinct
    NodeId destination;

    size_t length() const { return relays.size(); }
};

// One onion: the hop that should receive `body`, and the ciphertext that only
// that hop can peel.
struct Onion {
    NodeId hop;
    Bytes body;
};

// n distinct relays chosen uniformly without replacement.
Circuit build_circuit(const RelayDirectory& directory, const NodeId& source,
                      const NodeId& destination, size_t n, Rng& rng);

// Layer i is the encryption, under relay i's key, of either the next layer or
// the core (destination, message).
Onion wrap(const CipherSuite& suite, const RelayDirectory& directory,
           const Circuit& circuit, const Bytes& message);

struct Peeled {
    bool is_core;
    NodeId next; // next relay, or the destination when is_core
    Bytes body;  // inner ciphertext, or the message when is_core
};

// Throws DecryptError when the body was not encrypted to this relay.
Peeled peel(const CipherSuite& suite, const KeyPair& relay_key, const Bytes& body);

// Fixed-size wire framing: [u16 length][body][zero padding] totalling
// kCellSize, so onion size does not reveal layer depth on the wire.
Bytes to_cell(const Bytes& body);
Bytes from_cell(const Bytes& cell);

// Runs traffic over circuits on the simulator.  Cells are fixed-size and
// forwarded hop by hop through each relay's service queue; all cells of a
// circuit share one flow id for ground truth.
class FlowEngine {
public:
    explicit FlowEngine(simnet::Simulator& sim) : sim_(sim) {}

    void register_circuit(const std::string& flow_id, Circuit circuit);

    // pattern: (time_ms, cell_count) pairs, scheduled relative to t=0.
    void start_flow(const std::string& flow_id,
                    const std::vector<std::pair<int64_t, int>>& pattern);

    // Sends a real wrapped onion end to end, peeling at each relay.  The
    // decrypted messages arriving at each destination are collected here.
    void send_onion(const CipherSuite& suite, const RelayDirectory& directory,
                    const std::map<NodeId, KeyPair>& relay_keys,
                    const std::string& flow_id, const Bytes& message);

    const std::vector<std::pair<NodeId, Bytes>>& delivered_messages() const {
        return delivered_;
    }

private:
    void install_handler(const NodeId& node);
    const Circuit& circuit_of(const std::string& flow_id) const;

    simnet::Simulator& sim_;
    std::map<std::string, Circuit> circuits_;
    std::map<NodeId, bool> handled_;
    const std::map<NodeId, KeyPair>* relay_keys_ = nullptr;
    const CipherSuite* suite_ = nullptr;
    std::vector<std::pair<NodeId, Bytes>> delivered_;
};

} // namespace anonlab::onion

#endif
