#ifndef ANONLAB_DCNET_HPP
#define ANONLAB_DCNET_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "anonlab/metrics.hpp"
#include "anonlab/presence.hpp"
#include "anonlab/rng.hpp"
#include "anonlab/shuffle.hpp"
#include "anonlab/suite.hpp"

namespace anonlab::dcnet {

enum class Topology { FullPairwise, ClientServer };

struct GroupDescriptor {
    Topology topology = Topology::ClientServer;
    std::vector<KeyPair> clients; // admission list, closed at creation
    std::vector<KeyPair> servers; // empty for full-pairwise
    size_t slot_size = 64;        // payload bytes per transmitting slot
    // Register per-slot pad commitments at submit time so blame can audit
    // rounds retroactively.
    bool accountability = true;
};

struct SeedTable {
    std::map<std::pair<std::string, std::string>, SharedSeed> seeds;

    const SharedSeed& seed(const std::string& a, const std::string& b) const;
    size_t size() const { return seeds.size(); }
};

// Derives all pairwise seeds: N(N-1)/2 for full-pairwise, N*M for
// client-server.  Throws on duplicate ids or duplicate public keys.
SeedTable setup_group(const CipherSuite& suite, const GroupDescriptor& descriptor);

// One transmission slot.  payload_length is 0 for pseudonyms that did not
// request bandwidth; every slot additionally carries one trailing request
// byte, so its wire length is payload_length + 1.
struct Slot {
    Bytes pseudonym_key;
    size_t payload_length = 0;
};

struct SlotSchedule {
    uint64_t round = 0;
    std::vector<Slot> slots;

    size_t wire_length() const;
    size_t wire_offset(size_t slot_index) const;
    // Index of the slot owned by this pseudonym key.
    std::optional<size_t> slot_of(const Bytes& pseudonym_key) const;
};

// Runs the pseudonym keys through the shuffle cascade (shufflers = the
// group's servers, or the clients themselves for full-pairwise) and lays out
// slots in shuffle output order.  Throws if the shuffle aborts.
SlotSchedule assign_slots(const CipherSuite& suite, const GroupDescriptor& group,
                          const std::vector<Bytes>& pseudonym_keys, Rng& rng);

// Recomputes slot lengths for the next round from this round's request flags.
SlotSchedule next_schedule(const SlotSchedule& prev, const Bytes& combined,
                           size_t slot_size);

struct PadCommitments {
    // commitment[counterpart][slot] = H(pad segment over the slot's wire
    // range).  Binding is what blame needs; the segments themselves are
    // pseudorandom and stay secret until revealed.
    std::vector<std::vector<Bytes>> commitments;
};

struct PartyCiphertext {
    std::string party_id;
    Bytes bytes; // wire_length() bytes
    PadCommitments pads; // empty unless accountability
};

struct Payload {
    size_t slot_index;
    Bytes message;          // <= slot payload_length
    bool request_next = true;
};

// The DC-net pad engine.  All computations are pure given the seed table;
// prg_calls() counts pad expansions for scaling measurements.
class Group {
public:
    Group(const CipherSuite& suite, GroupDescriptor descriptor);

    const GroupDescriptor& descriptor() const { return descriptor_; }
    const SeedTable& seeds() const { return seeds_; }
    const CipherSuite& suite() const { return *suite_; }

    std::vector<std::string> client_ids() const;
    std::vector<std::string> server_ids() const;

    // Pad counterparts of a client in a round with this agreed online set:
    // all servers (client-server) or the other online clients (full-pairwise).
    std::vector<std::string> counterparts_of(const std::string& client_id,
                                             const std::set<std::string>& online) const;

    // ciphertext = XOR of prg(seed, round, L) over counterparts, with the
    // payload XORed into the client's own slot range.  Cover clients pass no
    // payload.  Every online client's ciphertext has identical length.
    PartyCiphertext client_submit(const std::string& client_id, uint64_t round,
                                  const SlotSchedule& schedule,
                                  const std::set<std::string>& online,
                                  const std::optional<Payload>& payload) const;

    // Server-side ciphertext over the agreed online client set.
    PartyCiphertext server_commit(const std::string& server_id, uint64_t round,
                                  const SlotSchedule& schedule,
                                  const std::set<std::string>& online) const;

    // XOR of all ciphertexts; equals the concatenated slot plaintexts when
    // everyone is honest and the online sets agree.
    Bytes combine(const SlotSchedule& schedule,
                  const std::vector<PartyCiphertext>& client_cts,
                  const std::vector<PartyCiphertext>& server_cts) const;

    uint64_t prg_calls() const { return prg_calls_; }
    void reset_prg_calls() { prg_calls_ = 0; }

    // Pad expansion for one counterpart pair (blame-time recomputation).
    Bytes pad(const std::string& a, const std::string& b, uint64_t round,
              size_t length) const;

private:
    const CipherSuite* suite_;
    GroupDescriptor descriptor_;
    SeedTable seeds_;
    mutable uint64_t prg_calls_ = 0;
};

enum class RoundStatus { Clean, Jammed, Suppressed, Corrupted, Incomplete };
const char* to_string(RoundStatus s);

struct RoundTranscript {
    uint64_t round = 0;
    std::set<std::string> online_clients;
    std::vector<PartyCiphertext> client_ciphertexts;
    std::vector<PartyCiphertext> server_ciphertexts;
    SlotSchedule schedule;
    Bytes combined;
    RoundStatus status = RoundStatus::Clean;
};

// JSON line: round id, online set, status, output digest.
std::string transcript_line(const RoundTranscript& t, const CipherSuite& suite);

// Agreed online set: the intersection of the client lists the servers saw by
// the deadline.  Throws if the server set is empty in client-server mode.
std::set<std::string> finalize_online_set(
    const std::vector<std::set<std::string>>& per_server_views);

struct Accusation {
    uint64_t round = 0;
    size_t slot_index = 0;
    std::vector<size_t> disrupted_bits; // bit offsets within the slot wire range
    Bytes expected;                     // true slot wire bytes (payload + flag)
};

// Compares the decoded slot with what the owner submitted.
std::optional<Accusation> detect_disruption(const RoundTranscript& transcript,
                                            size_t slot_index, const Bytes& payload,
                                            bool request_next);

struct BlameOptions {
    std::set<std::string> refuse_reveal; // parties refusing to open commitments
    std::set<std::string> lie_in_reveal; // parties revealing fake pads
};

struct BlameResult {
    std::vector<std::string> culprits;
    bool conclusive = false;
    std::string detail;
};

// Retroactive blame: every party's pads over the accused slot are revealed
// (recomputed from shared seeds), checked against submit-time commitments and
// the counterpart's own expansion, and compared with the transmitted
// ciphertext.  The party whose ciphertext does not match its pads, other than
// the one matching the accuser's claimed payload, is the culprit.
BlameResult blame(const Group& group, const RoundTranscript& transcript,
                  const Accusation& accusation, const BlameOptions& options = {});

// ---------------------------------------------------------------------------
// Session orchestration

struct Disruption {
    uint64_t round;
    size_t client_index; // disruptor
    size_t slot_index;   // victim slot
    uint64_t seed;       // randomness for the flipped bits
};

struct Transmission {
    uint64_t round;
    size_t client_index; // owner; must own a scheduled slot
    Bytes message;
};

struct SessionConfig {
    GroupDescriptor descriptor;
    uint64_t rounds = 1;
    uint64_t master_seed = 1;
    // Per-round probability that a client is online/meets the deadline.
    double online_probability = 1.0;
    std::vector<Transmission> transmissions;
    std::vector<Disruption> disruptions;
    std::optional<metrics::AnonymityPolicy> policy;
    size_t spurious_accusation_limit = 3;
    // Drop per-party ciphertexts from stored transcripts (large-N runs).
    bool keep_ciphertexts = true;
    // Compute the metric series even without a policy (skipped automatically
    // for very large groups).
    bool force_metrics = false;
};

struct SessionResult {
    std::vector<RoundTranscript> transcripts;
    std::map<uint64_t, std::vector<Bytes>> decoded; // round -> slot payloads
    std::vector<std::string> expelled;
    metrics::MetricSeries series;
    // One log per pseudonym (keyed by slot pseudonym key in hex).
    std::map<std::string, PresenceLog> presence;
    SlotSchedule initial_schedule;
    // Ground truth for attack scoring: pseudonym label -> owning client.
    // Never part of any protocol message or transcript.
    std::map<std::string, std::string> nym_owner;
};

// Full lock-step session: finalize online set, gate via policy, collect
// ciphertexts, combine, detect disruption and blame, expel culprits.
SessionResult run_session(const CipherSuite& suite, const SessionConfig& config);

} // namespace anonlab::dcnet

#endif
