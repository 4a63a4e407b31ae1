#ifndef ANONLAB_METRICS_HPP
#define ANONLAB_METRICS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "anonlab/presence.hpp"

namespace anonlab::metrics {

enum class MetricKind { Possinymity, Indinymity };
enum class GateDecision { Transmit, Suppress, Delay };

struct AnonymityPolicy {
    MetricKind metric = MetricKind::Possinymity;
    size_t floor = 1;
    // Maximum metric decrease allowed per window of `window` rounds; 0 means
    // no rate limit.
    size_t max_loss_rate = 0;
    size_t window = 1;
    // Delay the whole round instead of suppressing just this pseudonym.
    bool delay_rounds = false;
};

// Members online at every one of the pseudonym's active times; the exact
// candidate set an intersecting attacker ends up with.  With no activity yet,
// everyone qualifies.
std::set<std::string> candidate_set(const PresenceLog& log);
size_t possinymity(const PresenceLog& log);

// Members whose online/offline pattern matches the owner's at every scheduled
// time (suppressed rounds included).  Always a subset of the candidate set
// when the owner was online at all its active times.
std::set<std::string> buddy_set(const PresenceLog& log, const std::string& owner);
size_t indinymity(const PresenceLog& log, const std::string& owner);

struct MetricPoint {
    uint64_t round;
    size_t possinymity;
    size_t indinymity;
    GateDecision decision;
};

struct MetricSeries {
    std::map<std::string, std::vector<MetricPoint>> per_pseudonym;
};

// Owner-blind gating: evaluates the hypothetical post-round metric assuming
// the pseudonym transmits while `online_now` are present, worst case over
// every hypothetical owner consistent with history, and suppresses when the
// policy floor or loss rate would be violated.
GateDecision gate_round(const AnonymityPolicy& policy, const PresenceLog& history,
                        const std::set<std::string>& online_now,
                        const std::vector<size_t>& past_values);

// CSV with columns (round, pseudonym, possinymity, indinymity, decision).
std::string to_csv(const MetricSeries& series);

} // namespace anonlab::metrics

#endif
