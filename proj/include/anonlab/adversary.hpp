#ifndef ANONLAB_ADVERSARY_HPP
#define ANONLAB_ADVERSARY_HPP

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "anonlab/presence.hpp"
#include "anonlab/simnet.hpp"

namespace anonlab::adversary {

using simnet::EventRecord;
using simnet::NodeId;

// Per-epoch cell counts of one observed flow.  Built purely from tap-visible
// records: sizes, times, endpoints.  Never payloads.
struct FlowSeries {
    std::string flow_id;
    int64_t epoch_ms = 100;
    std::vector<double> counts;
};

// Buckets send records of each flow crossing `links` into epochs over
// [0, horizon_ms).
std::vector<FlowSeries> build_series(const std::vector<EventRecord>& records,
                                     const std::set<simnet::LinkId>& links,
                                     int64_t epoch_ms, int64_t horizon_ms);

// Pearson correlation maximized over epoch lags in [-max_lag, max_lag].
// Returns nothing for zero-variance series (undefined correlation).
std::optional<double> best_lag_correlation(const FlowSeries& a, const FlowSeries& b,
                                           int max_lag);

struct Match {
    size_t entry_index;
    size_t exit_index;
    double score;
};

struct CorrelateParams {
    double threshold = 0.7;
    int max_lag = 5;
};

// Greedy maximum-correlation matching between entry-side and exit-side
// series; pairs below threshold stay unmatched.
std::vector<Match> fingerprint_correlate(const std::vector<FlowSeries>& entry,
                                         const std::vector<FlowSeries>& exit,
                                         const CorrelateParams& params = {});

// Applies a staining delay pattern on one direction of a tapped link.
// Requires the tap to be active-capable; the simulator enforces that.
void stain(simnet::Simulator& sim, simnet::TapId tap, const NodeId& src,
           const NodeId& dst, std::vector<int64_t> delay_pattern_ms);

// One congestion measurement: runs the victim scenario with the given relay
// congested (or none for baseline) and reports mean victim throughput.
using ThroughputProbe = std::function<double(const std::optional<NodeId>& congested)>;

// True iff throughput during the probe drops below (1 - delta) * baseline.
bool congestion_probe(const ThroughputProbe& measure, const NodeId& target,
                      double delta);

// Probes every relay and returns those the victim circuit appears to use.
std::set<NodeId> probe_all_relays(const ThroughputProbe& measure,
                                  const std::vector<NodeId>& relays, double delta);

// Members online at every activity time.  Always contains the true owner.
std::set<std::string> intersect(const PresenceLog& log);

// score(member) = fraction of activity times the member was online,
// descending.  Ties keep member-id order.
std::vector<std::pair<std::string, double>> statistical_disclosure(
    const PresenceLog& log);

struct AttackReport {
    std::string kind;
    nlohmann::json parameters;
    nlohmann::json claimed;
    nlohmann::json truth;
    double precision = 0.0;
    double recall = 0.0;

    nlohmann::json to_json() const;
};

AttackReport score_set_attack(const std::string& kind, nlohmann::json parameters,
                              const std::set<std::string>& claimed,
                              const std::set<std::string>& truth);

} // namespace anonlab::adversary

#endif
