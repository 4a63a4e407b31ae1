#include "anonlab/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace anonlab::adversary {

std::vector<FlowSeries> build_series(const std::vector<EventRecord>& records,
                                     const std::set<simnet::LinkId>& links,
                                     int64_t epoch_ms, int64_t horizon_ms) {
    if (epoch_ms <= 0) throw std::invalid_argument("epoch_ms must be > 0");
    size_t epochs = size_t((horizon_ms + epoch_ms - 1) / epoch_ms);
    std::map<std::string, FlowSeries> by_flow;
    for (const EventRecord& e : records) {
        if (e.kind != simnet::EventKind::Send) continue;
        if (!links.count(simnet::make_link(e.src, e.dst))) continue;
        if (e.time_ms < 0 || e.time_ms >= horizon_ms) continue;
        FlowSeries& s = by_flow[e.flow_id];
        if (s.counts.empty()) {
            s.flow_id = e.flow_id;
            s.epoch_ms = epoch_ms;
            s.counts.assign(epochs, 0.0);
        }
        s.counts[size_t(e.time_ms / epoch_ms)] += 1.0;
    }
    std::vector<FlowSeries> out;
    out.reserve(by_flow.size());
    for (auto& [id, s] : by_flow) out.push_back(std::move(s));
    return out;
}

namespace {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    size_t n = std::min(x.size(), y.size());
    if (n < 2) return std::nullopt;
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

std::optional<double> best_lag_correlation(const FlowSeries& a, const FlowSeries& b,
                                           int max_lag) {
    std::optional<double> best;
    int n = int(std::min(a.counts.size(), b.counts.size()));
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        // Align a[i] with b[i + lag].
        int start_a = std::max(0, -lag);
        int start_b = std::max(0, lag);
        int len = n - std::max(start_a, start_b);
        if (len < 2) continue;
        auto r = pearson({a.counts.data() + start_a, size_t(len)},
                         {b.counts.data() + start_b, size_t(len)});
        if (r && (!best || *r > *best)) best = r;
    }
    return best;
}

std::vector<Match> fingerprint_correlate(const std::vector<FlowSeries>& entry,
                                         const std::vector<FlowSeries>& exit,
                                         const CorrelateParams& params) {
    struct Candidate {
        double score;
        size_t i, j;
    };
    std::vector<Candidate> cands;
    for (size_t i = 0; i < entry.size(); ++i)
        for (size_t j = 0; j < exit.size(); ++j) {
            auto r = best_lag_correlation(entry[i], exit[j], params.max_lag);
            if (r && *r >= params.threshold) cands.push_back({*r, i, j});
        }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    std::vector<bool> used_entry(entry.size()), used_exit(exit.size());
    std::vector<Match> out;
    for (const Candidate& c : cands) {
        if (used_entry[c.i] || used_exit[c.j]) continue;
        used_entry[c.i] = used_exit[c.j] = true;
        out.push_back({c.i, c.j, c.score});
    }
    return out;
}

void stain(simnet::Simulator& sim, simnet::TapId tap, const NodeId& src,
           const NodeId& dst, std::vector<int64_t> delay_pattern_ms) {
    sim.set_stain(tap, src, dst, std::move(delay_pattern_ms));
}

bool congestion_probe(const ThroughputProbe& measure, const NodeId& target,
                      double delta) {
    double baseline = measure(std::nullopt);
    double probed = measure(target);
    return probed < (1.0 - delta) * baseline;
}

std::set<NodeId> probe_all_relays(const ThroughputProbe& measure,
                                  const std::vector<NodeId>& relays, double delta) {
    std::set<NodeId> members;
    for (const NodeId& r : relays)
        if (congestion_probe(measure, r, delta)) members.insert(r);
    return members;
}

std::set<std::string> intersect(const PresenceLog& log) {
    if (log.activity_times.empty())
        throw std::invalid_argument("intersect: no activity times");
    std::set<std::string> cands = log.members;
    for (int64_t t : log.activity_times) {
        std::set<std::string> next;
        auto it = log.online_at.find(t);
        if (it != log.online_at.end())
            std::set_intersection(cands.begin(), cands.end(), it->second.begin(),
                                  it->second.end(), std::inserter(next, next.begin()));
        cands = std::move(next);
    }
    return cands;
}

std::vector<std::pair<std::string, double>> statistical_disclosure(
    const PresenceLog& log) {
    if (log.activity_times.empty())
        throw std::invalid_argument("statistical_disclosure: no activity times");
    std::vector<std::pair<std::string, double>> scores;
    for (const std::string& m : log.members) {
        size_t online = 0;
        for (int64_t t : log.activity_times)
            if (log.is_online(m, t)) ++online;
        scores.emplace_back(m, double(online) / double(log.activity_times.size()));
    }
    std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
        return a.second > b.second;
    });
    return scores;
}

nlohmann::json AttackReport::to_json() const {
    nlohmann::json j;
    j["kind"] = kind;
    j["parameters"] = parameters;
    j["claimed"] = claimed;
    j["truth"] = truth;
    j["precision"] = precision;
    j["recall"] = recall;
    return j;
}

AttackReport score_set_attack(const std::string& kind, nlohmann::json parameters,
                              const std::set<std::string>& claimed,
                              const std::set<std::string>& truth) {
    AttackReport r;
    r.kind = kind;
    r.parameters = std::move(parameters);
    r.claimed = claimed;
    r.truth = truth;
    size_t hits = 0;
    for (const std::string& c : claimed)
        if (truth.count(c)) ++hits;
    r.precision = claimed.empty() ? 0.0 : double(hits) / double(claimed.size());
    r.recall = truth.empty() ? 0.0 : double(hits) / double(truth.size());
    return r;
}

} // namespace anonlab::adversary
