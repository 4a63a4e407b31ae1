#include "anonlab/metrics.hpp"

#include <algorithm>
#include <sstream>

namespace anonlab::metrics {

std::set<std::string> candidate_set(const PresenceLog& log) {
    std::set<std::string> cands = log.members;
    for (int64_t t : log.activity_times) {
        auto it = log.online_at.find(t);
        if (it == log.online_at.end()) {
            cands.clear();
            break;
        }
        std::set<std::string> next;
        std::set_intersection(cands.begin(), cands.end(), it->second.begin(),
                              it->second.end(), std::inserter(next, next.begin()));
        cands = std::move(next);
    }
    return cands;
}

size_t possinymity(const PresenceLog& log) { return candidate_set(log).size(); }

std::set<std::string> buddy_set(const PresenceLog& log, const std::string& owner) {
    std::set<std::string> buddies;
    for (const std::string& m : log.members) {
        bool match = true;
        for (int64_t t : log.scheduled_times) {
            if (log.is_online(m, t) != log.is_online(owner, t)) {
                match = false;
                break;
            }
        }
        if (match) buddies.insert(m);
    }
    return buddies;
}

size_t indinymity(const PresenceLog& log, const std::string& owner) {
    return buddy_set(log, owner).size();
}

namespace {

bool violates_loss_rate(const AnonymityPolicy& policy,
                        const std::vector<size_t>& past_values, size_t next) {
    if (policy.max_loss_rate == 0 || past_values.empty()) return false;
    size_t lookback = std::min(past_values.size(), policy.window);
    size_t reference = past_values[past_values.size() - lookback];
    return reference > next && reference - next > policy.max_loss_rate;
}

} // namespace

GateDecision gate_round(const AnonymityPolicy& policy, const PresenceLog& history,
                        const std::set<std::string>& online_now,
                        const std::vector<size_t>& past_values) {
    std::set<std::string> cands = candidate_set(history);
    std::set<std::string> still;
    std::set_intersection(cands.begin(), cands.end(), online_now.begin(),
                          online_now.end(), std::inserter(still, still.begin()));

    size_t next = 0;
    if (policy.metric == MetricKind::Possinymity) {
        next = still.size();
    } else {
        // Worst case over every hypothetical owner that could transmit now.
        PresenceLog hypothetical = history;
        int64_t t = hypothetical.scheduled_times.empty()
                        ? 0
                        : hypothetical.scheduled_times.back() + 1;
        hypothetical.record_time(t, online_now, true);
        size_t worst = history.members.size();
        if (still.empty()) worst = 0;
        for (const std::string& h : still)
            worst = std::min(worst, indinymity(hypothetical, h));
        next = worst;
    }

    if (next < policy.floor || violates_loss_rate(policy, past_values, next))
        return policy.delay_rounds ? GateDecision::Delay : GateDecision::Suppress;
    return GateDecision::Transmit;
}

std::string to_csv(const MetricSeries& series) {
    std::ostringstream out;
    out << "round,pseudonym,possinymity,indinymity,decision\n";
    // Gather and sort by (round, pseudonym) for a stable file.
    std::vector<std::pair<std::string, MetricPoint>> rows;
    for (const auto& [pseudonym, points] : series.per_pseudonym)
        for (const MetricPoint& p : points) rows.emplace_back(pseudonym, p);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.second.round != b.second.round) return a.second.round < b.second.round;
        return a.first < b.first;
    });
    for (const auto& [pseudonym, p] : rows) {
        const char* d = p.decision == GateDecision::Transmit ? "transmit"
                      : p.decision == GateDecision::Suppress ? "suppress"
                                                             : "delay";
        out << p.round << ',' << pseudonym << ',' << p.possinymity << ','
            << p.indinymity << ',' << d << '\n';
    }
    return out.str();
}

} // namespace anonlab::metrics
