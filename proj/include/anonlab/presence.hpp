#ifndef ANONLAB_PRESENCE_HPP
#define ANONLAB_PRESENCE_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace anonlab {

// The intersection attacker's view of one pseudonym: the times it acted, and
// who was online when.  Times are milliseconds or round ids, as long as both
// sides use the same scale.  Contains no owner identities.
struct PresenceLog {
    std::set<std::string> members;
    // Times the pseudonym visibly acted (e.g. its slot carried a message).
    // Strictly increasing.
    std::vector<int64_t> activity_times;
    // Times the pseudonym was scheduled, whether or not it transmitted
    // (suppressed rounds included).  Superset of activity_times.
    std::vector<int64_t> scheduled_times;
    std::map<int64_t, std::set<std::string>> online_at;

    bool is_online(const std::string& member, int64_t t) const {
        auto it = online_at.find(t);
        return it != online_at.end() && it->second.count(member) > 0;
    }

    void record_time(int64_t t, const std::set<std::string>& online, bool active) {
        online_at[t] = online;
        scheduled_times.push_back(t);
        if (active) activity_times.push_back(t);
    }
};

} // namespace anonlab

#endif
