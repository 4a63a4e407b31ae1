#ifndef ANONLAB_SIMNET_HPP
#define ANONLAB_SIMNET_HPP

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "anonlab/bytes.hpp"
#include "anonlab/rng.hpp"

namespace anonlab::simnet {

using NodeId = std::string;
// Canonical (smaller, larger) node pair.
using LinkId = std::pair<NodeId, NodeId>;

inline LinkId make_link(const NodeId& a, const NodeId& b) {
    return a <= b ? LinkId{a, b} : LinkId{b, a};
}

struct NetworkTopology {
    std::set<NodeId> nodes;
    std::map<LinkId, int64_t> links; // latency in ms, > 0
    // When > 0, any node pair without an explicit link is connected at this
    // latency (full mesh).
    int64_t default_latency_ms = 0;

    void add_node(const NodeId& n) { nodes.insert(n); }
    void add_link(const NodeId& a, const NodeId& b, int64_t latency_ms);
    int64_t latency(const NodeId& a, const NodeId& b) const;
    bool has_node(const NodeId& n) const { return nodes.count(n) > 0; }
    bool connected() const;
};

struct Interval {
    int64_t start_ms;
    int64_t end_ms; // half-open: [start, end)
};

// Per-node online intervals.  Nodes without an entry are treated as always
// online by the simulator; a node with an entry but no intervals is always
// offline.
class ChurnSchedule {
public:
    void set(const NodeId& n, std::vector<Interval> intervals);
    bool has(const NodeId& n) const { return intervals_.count(n) > 0; }
    bool online(const NodeId& n, int64_t t_ms) const;
    const std::vector<Interval>& intervals(const NodeId& n) const;

private:
    std::map<NodeId, std::vector<Interval>> intervals_;
};

struct GeometricChurnSpec {
    double mean_online_ms = 10000;
    double mean_offline_ms = 2000;
    double start_online_prob = 1.0;
};

// Alternating online/offline durations, 1 + geometric(1/mean) each.
ChurnSchedule generate_churn(const std::vector<NodeId>& nodes, int64_t horizon_ms,
                             const GeometricChurnSpec& spec, Rng& rng);

enum class EventKind { Send, Deliver, Drop };

const char* to_string(EventKind k);

struct EventRecord {
    int64_t time_ms;
    EventKind kind;
    NodeId src;
    NodeId dst;
    std::string flow_id;
    uint64_t size_bytes;
};

struct Message {
    NodeId src;
    NodeId dst;
    std::string flow_id;
    Bytes payload;
};

struct Tap {
    std::set<LinkId> links;
    std::string owner;
    bool active = false; // active taps may inject stains
};

using TapId = size_t;

// Deterministic discrete-event network.  Single-threaded; events are ordered
// by (time, insertion sequence) so replays with the same inputs produce
// byte-identical logs.
class Simulator {
public:
    explicit Simulator(NetworkTopology topology, ChurnSchedule churn = {});

    int64_t now() const { return now_ms_; }
    const NetworkTopology& topology() const { return topology_; }
    const ChurnSchedule& churn() const { return churn_; }

    bool presence(const NodeId& n, int64_t t_ms) const;

    using DeliverHandler = std::function<void(Simulator&, const Message&)>;
    void set_handler(const NodeId& n, DeliverHandler h);

    // Schedules delivery at now + latency (+ any stain delay on the link).
    // Emits a Send record; the delivery emits Deliver, or Drop if the
    // destination is offline then.  An offline source drops immediately.
    void send(const NodeId& src, const NodeId& dst, Bytes payload,
              const std::string& flow_id);

    void schedule(int64_t time_ms, std::function<void(Simulator&)> fn);

    // Processes all events with time <= until_ms; clock ends at until_ms.
    void advance(int64_t until_ms);
    // Processes everything outstanding.
    void run();

    const std::vector<EventRecord>& log() const { return log_; }

    TapId add_tap(Tap tap);
    const Tap& tap(TapId id) const { return taps_.at(id); }
    // Records on tapped links, in log order.  Read-only: never perturbs the
    // event queue.
    std::vector<EventRecord> observe(TapId id) const;

    // Stain: send-delay pattern on one direction of a link, cycled per
    // packet.  Requires an active tap owning the link.
    void set_stain(TapId id, const NodeId& src, const NodeId& dst,
                   std::vector<int64_t> delays_ms);
    void clear_stain(const NodeId& src, const NodeId& dst);

    // Per-node store-and-forward serialization.  Effective per-cell interval
    // is service_interval * scale; scale models congestion load.
    void set_service_interval(const NodeId& n, int64_t ms);
    void set_service_scale(const NodeId& n, double scale);
    double service_scale(const NodeId& n) const;
    // Reserves and returns the node's next departure slot at or after
    // earliest_ms.
    int64_t next_departure(const NodeId& n, int64_t earliest_ms);

private:
    struct Pending {
        int64_t time_ms;
        uint64_t seq;
        std::optional<Message> delivery;
        std::function<void(Simulator&)> fn;
    };
    struct Later {
        bool operator()(const Pending& a, const Pending& b) const {
            return a.time_ms != b.time_ms ? a.time_ms > b.time_ms : a.seq > b.seq;
        }
    };
    struct StainState {
        std::vector<int64_t> delays_ms;
        size_t next = 0;
    };

    void require_node(const NodeId& n) const;
    void process(Pending& p);

    NetworkTopology topology_;
    ChurnSchedule churn_;
    int64_t now_ms_ = 0;
    uint64_t seq_ = 0;
    std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
    std::vector<EventRecord> log_;
    std::map<NodeId, DeliverHandler> handlers_;
    std::vector<Tap> taps_;
    std::map<std::pair<NodeId, NodeId>, StainState> stains_; // directed (src, dst)
    std::map<NodeId, int64_t> service_interval_;
    std::map<NodeId, double> service_scale_;
    std::map<NodeId, int64_t> last_departure_;
};

// JSON-lines, one EventRecord per line, fields exactly
// (time_ms, kind, src, dst, flow_id, size_bytes).
std::string trace_line(const EventRecord& e);
void write_trace(std::ostream& out, const std::vector<EventRecord>& log);
std::vector<EventRecord> read_trace(std::istream& in);

} // namespace anonlab::simnet

#endif
