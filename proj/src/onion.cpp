#include "anonlab/onion.hpp"

#include <algorithm>
#include <memory>

namespace anonlab::onion {

namespace {

constexpr uint8_t kMarkerRelay = 0x00;
constexpr uint8_t kMarkerCore = 0x01;

// marker(1) || u16 id length || id || body
Bytes encode_layer(uint8_t marker, const NodeId& id, const Bytes& body) {
    if (id.size() > 0xffff) throw std::invalid_argument("node id too long");
    Bytes out;
    out.reserve(3 + id.size() + body.size());
    out.push_back(marker);
    out.push_back(uint8_t(id.size() & 0xff));
    out.push_back(uint8_t(id.size() >> 8));
    out.insert(out.end(), id.begin(), id.end());
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

} // namespace

void RelayDirectory::add(const NodeId& relay, Bytes public_key) {
    if (relays.count(relay)) throw std::invalid_argument("duplicate relay: " + relay);
    relays[relay] = std::move(public_key);
}

const Bytes& RelayDirectory::key_of(const NodeId& relay) const {
    auto it = relays.find(relay);
    if (it == relays.end()) throw std::invalid_argument("unknown relay: " + relay);
    return it->second;
}

std::vector<NodeId> RelayDirectory::relay_ids() const {
    std::vector<NodeId> ids;
    ids.reserve(relays.size());
    for (const auto& [id, key] : relays) ids.push_back(id);
    return ids;
}

Circuit build_circuit(const RelayDirectory& directory, const NodeId& source,
                      const NodeId& destination, size_t n, Rng& rng) {
    std::vector<NodeId> pool = directory.relay_ids();
    if (pool.size() < n)
        throw std::invalid_argument("not enough relays for circuit length");
    if (n < 1) throw std::invalid_argument("circuit length must be >= 1");
    Circuit c;
    c.source = source;
    c.destination = destination;
    for (size_t i = 0; i < n; ++i) {
        size_t pick = rng.uniform(pool.size());
        c.relays.push_back(pool[pick]);
        pool.erase(pool.begin() + ptrdiff_t(pick));
    }
    return c;
}

Onion wrap(const CipherSuite& suite, const RelayDirectory& directory,
           const Circuit& circuit, const Bytes& message) {
    if (message.empty()) throw std::invalid_argument("wrap: empty message");
    if (circuit.relays.empty()) throw std::invalid_argument("wrap: empty circuit");

    // Innermost layer: core (d, M) under the last relay's key.
    Bytes body = suite.encrypt(directory.key_of(circuit.relays.back()),
                               encode_layer(kMarkerCore, circuit.destination, message));
    // Then wrap outward: layer i carries (r_{i+1}, ciphertext for r_{i+1}).
    for (size_t i = circuit.relays.size() - 1; i-- > 0;) {
        body = suite.encrypt(directory.key_of(circuit.relays[i]),
                             encode_layer(kMarkerRelay, circuit.relays[i + 1], body));
    }
    return Onion{circuit.relays.front(), std::move(body)};
}

Peeled peel(const CipherSuite& suite, const KeyPair& relay_key, const Bytes& body) {
    Bytes plain = suite.decrypt(relay_key.private_part, body);
    if (plain.size() < 3) throw DecryptError("peel: malformed layer");
    uint8_t marker = plain[0];
    if (marker != kMarkerRelay && marker != kMarkerCore)
        throw DecryptError("peel: unknown layer marker");
    size_t id_len = size_t(plain[1]) | size_t(plain[2]) << 8;
    if (plain.size() < 3 + id_len) throw DecryptError("peel: malformed layer");
    Peeled out;
    out.is_core = marker == kMarkerCore;
    out.next.assign(plain.begin() + 3, plain.begin() + 3 + ptrdiff_t(id_len));
    out.body.assign(plain.begin() + 3 + ptrdiff_t(id_len), plain.end());
    return out;
}

Bytes to_cell(const Bytes& body) {
    if (body.size() > kCellSize - 2)
        throw std::invalid_argument("onion body exceeds cell capacity");
    Bytes cell(kCellSize, 0);
    cell[0] = uint8_t(body.size() & 0xff);
    cell[1] = uint8_t(body.size() >> 8);
    std::copy(body.begin(), body.end(), cell.begin() + 2);
    return cell;
}

Bytes from_cell(const Bytes& cell) {
    if (cell.size() != kCellSize) throw std::invalid_argument("bad cell size");
    size_t len = size_t(cell[0]) | size_t(cell[1]) << 8;
    if (len > kCellSize - 2) throw std::invalid_argument("bad cell length field");
    return Bytes(cell.begin() + 2, cell.begin() + 2 + ptrdiff_t(len));
}

void FlowEngine::register_circuit(const std::string& flow_id, Circuit circuit) {
    for (const NodeId& r : circuit.relays) install_handler(r);
    install_handler(circuit.destination);
    circuits_[flow_id] = std::move(circuit);
}

const Circuit& FlowEngine::circuit_of(const std::string& flow_id) const {
    auto it = circuits_.find(flow_id);
    if (it == circuits_.end())
        throw std::invalid_argument("unregistered flow: " + flow_id);
    return it->second;
}

void FlowEngine::install_handler(const NodeId& node) {
    if (handled_[node]) return;
    handled_[node] = true;
    sim_.set_handler(node, [this](simnet::Simulator& sim, const simnet::Message& m) {
        auto it = circuits_.find(m.flow_id);
        if (it == circuits_.end()) return;
        const Circuit& c = it->second;
        if (m.dst == c.destination) {
            Bytes body = from_cell(m.payload);
            if (!body.empty()) delivered_.emplace_back(m.dst, body);
            return;
        }
        auto pos = std::find(c.relays.begin(), c.relays.end(), m.dst);
        if (pos == c.relays.end()) return;

        Bytes body = from_cell(m.payload);
        NodeId next;
        Bytes out_body;
        if (body.empty()) {
            // Synthetic traffic cell: forward along the circuit.
            next = (pos + 1 == c.relays.end()) ? c.destination : *(pos + 1);
        } else {
            if (!relay_keys_ || !suite_)
                throw std::logic_error("onion cell without relay keys");
            Peeled p = peel(*suite_, relay_keys_->at(m.dst), body);
            next = p.next;
            out_body = std::move(p.body);
        }
        int64_t dep = sim.next_departure(m.dst, sim.now());
        NodeId self = m.dst;
        std::string flow = m.flow_id;
        auto cell = std::make_shared<Bytes>(to_cell(out_body));
        sim.schedule(dep, [self, next, flow, cell](simnet::Simulator& s) {
            s.send(self, next, *cell, flow);
        });
    });
}

void FlowEngine::start_flow(const std::string& flow_id,
                            const std::vector<std::pair<int64_t, int>>& pattern) {
    const Circuit& c = circuit_of(flow_id);
    for (const auto& [t, count] : pattern) {
        for (int i = 0; i < count; ++i) {
            NodeId src = c.source;
            NodeId first = c.relays.front();
            std::string flow = flow_id;
            sim_.schedule(t, [src, first, flow](simnet::Simulator& s) {
                s.send(src, first, to_cell({}), flow);
            });
        }
    }
}

void FlowEngine::send_onion(const CipherSuite& suite, const RelayDirectory& directory,
                            const std::map<NodeId, KeyPair>& relay_keys,
                            const std::string& flow_id, const Bytes& message) {
    suite_ = &suite;
    relay_keys_ = &relay_keys;
    const Circuit& c = circuit_of(flow_id);
    Onion o = wrap(suite, directory, c, message);
    auto cell = std::make_shared<Bytes>(to_cell(o.body));
    NodeId src = c.source;
    NodeId first = o.hop;
    std::string flow = flow_id;
    sim_.schedule(sim_.now(), [src, first, flow, cell](simnet::Simulator& s) {
        s.send(src, first, *cell, flow);
    });
}

} // namespace anonlab::onion
