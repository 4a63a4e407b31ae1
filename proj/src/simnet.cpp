#include "anonlab/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <memory>
#include <ostream>

#include <json.hpp>

namespace anonlab::simnet {

using nlohmann::json;

void NetworkTopology::add_link(const NodeId& a, const NodeId& b, int64_t latency_ms) {
    if (latency_ms <= 0) throw std::invalid_argument("link latency must be > 0");
    if (a == b) throw std::invalid_argument("self-link");
    nodes.insert(a);
    nodes.insert(b);
    links[make_link(a, b)] = latency_ms;
}

int64_t NetworkTopology::latency(const NodeId& a, const NodeId& b) const {
    auto it = links.find(make_link(a, b));
    if (it != links.end()) return it->second;
    if (default_latency_ms > 0) return default_latency_ms;
    throw std::invalid_argument("no link between " + a + " and " + b);
}

bool NetworkTopology::connected() const {
    if (nodes.empty()) return true;
    if (default_latency_ms > 0) return true;
    std::set<NodeId> seen{*nodes.begin()};
    std::vector<NodeId> frontier{*nodes.begin()};
    while (!frontier.empty()) {
        NodeId n = frontier.back();
        frontier.pop_back();
        for (const auto& [link, lat] : links) {
            NodeId other;
            if (link.first == n) other = link.second;
            else if (link.second == n) other = link.first;
            else continue;
            if (seen.insert(other).second) frontier.push_back(other);
        }
    }
    return seen.size() == nodes.size();
}

void ChurnSchedule::set(const NodeId& n, std::vector<Interval> intervals) {
    std::sort(intervals.begin(), intervals.end(),
              [](const Interval& a, const Interval& b) { return a.start_ms < b.start_ms; });
    for (size_t i = 0; i < intervals.size(); ++i) {
        if (intervals[i].end_ms <= intervals[i].start_ms)
            throw std::invalid_argument("empty churn interval");
        if (i > 0 && intervals[i].start_ms < intervals[i - 1].end_ms)
            throw std::invalid_argument("overlapping churn intervals");
    }
    intervals_[n] = std::move(intervals);
}

bool ChurnSchedule::online(const NodeId& n, int64_t t_ms) const {
    auto it = intervals_.find(n);
    if (it == intervals_.end()) return false;
    for (const Interval& iv : it->second) {
        if (t_ms < iv.start_ms) return false;
        if (t_ms < iv.end_ms) return true;
    }
    return false;
}

const std::vector<Interval>& ChurnSchedule::intervals(const NodeId& n) const {
    static const std::vector<Interval> empty;
    auto it = intervals_.find(n);
    return it == intervals_.end() ? empty : it->second;
}

ChurnSchedule generate_churn(const std::vector<NodeId>& nodes, int64_t horizon_ms,
                             const GeometricChurnSpec& spec, Rng& rng) {
    ChurnSchedule out;
    for (const NodeId& n : nodes) {
        std::vector<Interval> ivs;
        bool online = rng.bernoulli(spec.start_online_prob);
        int64_t t = 0;
        while (t < horizon_ms) {
            double mean = online ? spec.mean_online_ms : spec.mean_offline_ms;
            int64_t dur = 1 + int64_t(rng.geometric(1.0 / std::max(1.0, mean)));
            int64_t end = std::min(horizon_ms, t + dur);
            if (online) ivs.push_back({t, end});
            t = end;
            online = !online;
        }
        out.set(n, std::move(ivs));
    }
    return out;
}

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::Send: return "send";
        case EventKind::Deliver: return "deliver";
        case EventKind::Drop: return "drop";
    }
    return "?";
}

Simulator::Simulator(NetworkTopology topology, ChurnSchedule churn)
    : topology_(std::move(topology)), churn_(std::move(churn)) {
    if (!topology_.connected())
        throw std::invalid_argument("topology is not connected");
}

bool Simulator::presence(const NodeId& n, int64_t t_ms) const {
    require_node(n);
    if (!churn_.has(n)) return true;
    return churn_.online(n, t_ms);
}

void Simulator::set_handler(const NodeId& n, DeliverHandler h) {
    require_node(n);
    handlers_[n] = std::move(h);
}

void Simulator::require_node(const NodeId& n) const {
    if (!topology_.has_node(n)) throw std::invalid_argument("unknown node: " + n);
}

void Simulator::send(const NodeId& src, const NodeId& dst, Bytes payload,
                     const std::string& flow_id) {
    require_node(src);
    require_node(dst);
    const uint64_t size = payload.size();
    if (!presence(src, now_ms_)) {
        log_.push_back({now_ms_, EventKind::Drop, src, dst, flow_id, size});
        return;
    }
    int64_t t_send = now_ms_;
    auto st = stains_.find({src, dst});
    if (st != stains_.end() && !st->second.delays_ms.empty()) {
        t_send += st->second.delays_ms[st->second.next % st->second.delays_ms.size()];
        ++st->second.next;
    }
    // The Send record is emitted as an event of its own so the log stays
    // monotone even when a stain pushes t_send into the future.
    auto shared = std::make_shared<Bytes>(std::move(payload));
    auto do_send = [src, dst, flow_id, size, shared](Simulator& sim) {
        sim.log_.push_back({sim.now_ms_, EventKind::Send, src, dst, flow_id, size});
        int64_t t_deliver = sim.now_ms_ + sim.topology_.latency(src, dst);
        sim.queue_.push(Pending{t_deliver, sim.seq_++,
                                Message{src, dst, flow_id, std::move(*shared)}, nullptr});
    };
    queue_.push(Pending{t_send, seq_++, std::nullopt, std::move(do_send)});
}

void Simulator::schedule(int64_t time_ms, std::function<void(Simulator&)> fn) {
    if (time_ms < now_ms_) throw std::invalid_argument("schedule in the past");
    queue_.push(Pending{time_ms, seq_++, std::nullopt, std::move(fn)});
}

void Simulator::process(Pending& p) {
    now_ms_ = p.time_ms;
    if (p.delivery) {
        Message& m = *p.delivery;
        if (presence(m.dst, now_ms_)) {
            log_.push_back({now_ms_, EventKind::Deliver, m.src, m.dst, m.flow_id,
                            m.payload.size()});
            auto h = handlers_.find(m.dst);
            if (h != handlers_.end()) h->second(*this, m);
        } else {
            log_.push_back({now_ms_, EventKind::Drop, m.src, m.dst, m.flow_id,
                            m.payload.size()});
        }
    } else if (p.fn) {
        p.fn(*this);
    }
}

void Simulator::advance(int64_t until_ms) {
    if (until_ms < now_ms_) throw std::invalid_argument("advance: time regression");
    while (!queue_.empty() && queue_.top().time_ms <= until_ms) {
        Pending p = queue_.top();
        queue_.pop();
        process(p);
    }
    now_ms_ = until_ms;
}

void Simulator::run() {
    while (!queue_.empty()) {
        Pending p = queue_.top();
        queue_.pop();
        process(p);
    }
}

TapId Simulator::add_tap(Tap tap) {
    taps_.push_back(std::move(tap));
    return taps_.size() - 1;
}

std::vector<EventRecord> Simulator::observe(TapId id) const {
    const Tap& t = taps_.at(id);
    std::vector<EventRecord> out;
    for (const EventRecord& e : log_)
        if (t.links.count(make_link(e.src, e.dst))) out.push_back(e);
    std::stable_sort(out.begin(), out.end(),
                     [](const EventRecord& a, const EventRecord& b) {
                         return a.time_ms < b.time_ms;
                     });
    return out;
}

void Simulator::set_stain(TapId id, const NodeId& src, const NodeId& dst,
                          std::vector<int64_t> delays_ms) {
    const Tap& t = taps_.at(id);
    if (!t.active) throw std::invalid_argument("stain requires an active tap");
    if (!t.links.count(make_link(src, dst)))
        throw std::invalid_argument("stain on untapped link");
    stains_[{src, dst}] = StainState{std::move(delays_ms), 0};
}

void Simulator::clear_stain(const NodeId& src, const NodeId& dst) {
    stains_.erase({src, dst});
}

void Simulator::set_service_interval(const NodeId& n, int64_t ms) {
    require_node(n);
    service_interval_[n] = ms;
}

void Simulator::set_service_scale(const NodeId& n, double scale) {
    require_node(n);
    service_scale_[n] = scale;
}

double Simulator::service_scale(const NodeId& n) const {
    auto it = service_scale_.find(n);
    return it == service_scale_.end() ? 1.0 : it->second;
}

int64_t Simulator::next_departure(const NodeId& n, int64_t earliest_ms) {
    auto iv = service_interval_.find(n);
    int64_t interval = iv == service_interval_.end() ? 0 : iv->second;
    interval = int64_t(std::llround(double(interval) * service_scale(n)));
    auto last = last_departure_.find(n);
    int64_t dep = earliest_ms;
    if (last != last_departure_.end()) dep = std::max(dep, last->second + interval);
    last_departure_[n] = dep;
    return dep;
}

std::string trace_line(const EventRecord& e) {
    json j;
    j["time_ms"] = e.time_ms;
    j["kind"] = to_string(e.kind);
    j["src"] = e.src;
    j["dst"] = e.dst;
    j["flow_id"] = e.flow_id;
    j["size_bytes"] = e.size_bytes;
    return j.dump();
}

void write_trace(std::ostream& out, const std::vector<EventRecord>& log) {
    for (const EventRecord& e : log) out << trace_line(e) << '\n';
}

std::vector<EventRecord> read_trace(std::istream& in) {
    std::vector<EventRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        EventRecord e;
        e.time_ms = j.at("time_ms").get<int64_t>();
        std::string k = j.at("kind").get<std::string>();
        e.kind = k == "send" ? EventKind::Send
               : k == "deliver" ? EventKind::Deliver
                                : EventKind::Drop;
        e.src = j.at("src").get<std::string>();
        e.dst = j.at("dst").get<std::string>();
        e.flow_id = j.at("flow_id").get<std::string>();
        e.size_bytes = j.at("size_bytes").get<uint64_t>();
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace anonlab::simnet
