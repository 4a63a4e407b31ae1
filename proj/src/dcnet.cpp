#include "anonlab/dcnet.hpp"

#include <algorithm>

#include <json.hpp>

namespace anonlab::dcnet {

using nlohmann::json;

namespace {

std::pair<std::string, std::string> canonical(const std::string& a,
                                              const std::string& b) {
    return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
}

} // namespace

const SharedSeed& SeedTable::seed(const std::string& a, const std::string& b) const {
    auto it = seeds.find(canonical(a, b));
    if (it == seeds.end())
        throw std::invalid_argument("no shared seed for " + a + "/" + b);
    return it->second;
}

SeedTable setup_group(const CipherSuite& suite, const GroupDescriptor& descriptor) {
    if (descriptor.clients.size() < 2)
        throw std::invalid_argument("group needs at least 2 clients");
    if (descriptor.topology == Topology::ClientServer && descriptor.servers.empty())
        throw std::invalid_argument("client-server group needs servers");

    std::set<std::string> ids;
    std::set<Bytes> pubs;
    auto check = [&](const KeyPair& kp) {
        if (!ids.insert(kp.id).second)
            throw std::invalid_argument("duplicate key id: " + kp.id);
        if (!pubs.insert(kp.public_part).second)
            throw std::invalid_argument("duplicate public key for: " + kp.id);
    };
    for (const KeyPair& kp : descriptor.clients) check(kp);
    for (const KeyPair& kp : descriptor.servers) check(kp);

    SeedTable table;
    if (descriptor.topology == Topology::FullPairwise) {
        for (size_t i = 0; i < descriptor.clients.size(); ++i)
            for (size_t j = i + 1; j < descriptor.clients.size(); ++j) {
                const KeyPair& a = descriptor.clients[i];
                const KeyPair& b = descriptor.clients[j];
                table.seeds[canonical(a.id, b.id)] =
                    suite.derive_seed(a, b.id, b.public_part);
            }
    } else {
        for (const KeyPair& c : descriptor.clients)
            for (const KeyPair& s : descriptor.servers)
                table.seeds[canonical(c.id, s.id)] =
                    suite.derive_seed(c, s.id, s.public_part);
    }
    return table;
}

size_t SlotSchedule::wire_length() const {
    size_t n = 0;
    for (const Slot& s : slots) n += s.payload_length + 1;
    return n;
}

size_t SlotSchedule::wire_offset(size_t slot_index) const {
    if (slot_index >= slots.size()) throw std::out_of_range("slot index");
    size_t off = 0;
    for (size_t i = 0; i < slot_index; ++i) off += slots[i].payload_length + 1;
    return off;
}

std::optional<size_t> SlotSchedule::slot_of(const Bytes& pseudonym_key) const {
    for (size_t i = 0; i < slots.size(); ++i)
        if (slots[i].pseudonym_key == pseudonym_key) return i;
    return std::nullopt;
}

SlotSchedule assign_slots(const CipherSuite& suite, const GroupDescriptor& group,
                          const std::vector<Bytes>& pseudonym_keys, Rng& rng) {
    shuffle::ShuffleConfig config;
    if (group.topology == Topology::ClientServer)
        config.shufflers = group.servers;
    else
        config.shufflers = group.clients;
    config.client_count = pseudonym_keys.size();
    size_t max_key = 0;
    for (const Bytes& k : pseudonym_keys) max_key = std::max(max_key, k.size());
    config.slot_size = max_key;

    std::vector<shuffle::Submission> subs;
    for (size_t i = 0; i < pseudonym_keys.size(); ++i) {
        Rng client_rng = rng.fork(i);
        subs.push_back(shuffle::submit(suite, config, pseudonym_keys[i], client_rng));
    }
    Rng cascade_rng = rng.fork(pseudonym_keys.size());
    shuffle::CascadeResult res =
        shuffle::run_cascade(suite, config, subs, cascade_rng);
    if (res.status != shuffle::CascadeStatus::Released)
        throw std::runtime_error("slot assignment shuffle aborted");

    SlotSchedule schedule;
    for (const Bytes& key : res.released)
        schedule.slots.push_back(Slot{key, group.slot_size});
    return schedule;
}

SlotSchedule next_schedule(const SlotSchedule& prev, const Bytes& combined,
                           size_t slot_size) {
    if (combined.size() != prev.wire_length())
        throw std::invalid_argument("combined length does not match schedule");
    SlotSchedule next;
    next.round = prev.round + 1;
    size_t off = 0;
    for (const Slot& s : prev.slots) {
        uint8_t flag = combined[off + s.payload_length];
        next.slots.push_back(Slot{s.pseudonym_key, (flag & 1) ? slot_size : 0});
        off += s.payload_length + 1;
    }
    return next;
}

Group::Group(const CipherSuite& suite, GroupDescriptor descriptor)
    : suite_(&suite), descriptor_(std::move(descriptor)) {
    seeds_ = setup_group(suite, descriptor_);
}

std::vector<std::string> Group::client_ids() const {
    std::vector<std::string> ids;
    for (const KeyPair& kp : descriptor_.clients) ids.push_back(kp.id);
    return ids;
}

std::vector<std::string> Group::server_ids() const {
    std::vector<std::string> ids;
    for (const KeyPair& kp : descriptor_.servers) ids.push_back(kp.id);
    return ids;
}

std::vector<std::string> Group::counterparts_of(
    const std::string& client_id, const std::set<std::string>& online) const {
    std::vector<std::string> out;
    if (descriptor_.topology == Topology::ClientServer) {
        for (const KeyPair& s : descriptor_.servers) out.push_back(s.id);
    } else {
        for (const std::string& c : online)
            if (c != client_id) out.push_back(c);
    }
    return out;
}

Bytes Group::pad(const std::string& a, const std::string& b, uint64_t round,
                 size_t length) const {
    ++prg_calls_;
    return suite_->prg(seeds_.seed(a, b), round, length);
}

namespace {

PadCommitments commit_pads(const Bytes& pad_bytes, const SlotSchedule& schedule,
                           PadCommitments& acc, size_t counterpart_index) {
    auto& row = acc.commitments[counterpart_index];
    size_t off = 0;
    for (const Slot& s : schedule.slots) {
        size_t len = s.payload_length + 1;
        row.push_back(CipherSuite::hash({pad_bytes.data() + off, len}));
        off += len;
    }
    return acc;
}

} // namespace

PartyCiphertext Group::client_submit(const std::string& client_id, uint64_t round,
                                     const SlotSchedule& schedule,
                                     const std::set<std::string>& online,
                                     const std::optional<Payload>& payload) const {
    if (!online.count(client_id))
        throw std::invalid_argument("client not in agreed online set: " + client_id);
    const size_t length = schedule.wire_length();
    PartyCiphertext ct;
    ct.party_id = client_id;
    ct.bytes.assign(length, 0);

    std::vector<std::string> parts = counterparts_of(client_id, online);
    if (descriptor_.accountability)
        ct.pads.commitments.resize(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) {
        Bytes p = pad(client_id, parts[i], round, length);
        xor_into(ct.bytes, p);
        if (descriptor_.accountability) commit_pads(p, schedule, ct.pads, i);
    }

    if (payload) {
        const Slot& slot = schedule.slots.at(payload->slot_index);
        if (payload->message.size() > slot.payload_length)
            throw std::invalid_argument("payload exceeds slot length");
        size_t off = schedule.wire_offset(payload->slot_index);
        for (size_t i = 0; i < payload->message.size(); ++i)
            ct.bytes[off + i] ^= payload->message[i];
        if (payload->request_next) ct.bytes[off + slot.payload_length] ^= 1;
    }
    return ct;
}

PartyCiphertext Group::server_commit(const std::string& server_id, uint64_t round,
                                     const SlotSchedule& schedule,
                                     const std::set<std::string>& online) const {
    if (descriptor_.topology != Topology::ClientServer)
        throw std::logic_error("server_commit in full-pairwise group");
    const size_t length = schedule.wire_length();
    PartyCiphertext ct;
    ct.party_id = server_id;
    ct.bytes.assign(length, 0);
    std::vector<std::string> parts(online.begin(), online.end());
    if (descriptor_.accountability)
        ct.pads.commitments.resize(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) {
        Bytes p = pad(server_id, parts[i], round, length);
        xor_into(ct.bytes, p);
        if (descriptor_.accountability) commit_pads(p, schedule, ct.pads, i);
    }
    return ct;
}

Bytes Group::combine(const SlotSchedule& schedule,
                     const std::vector<PartyCiphertext>& client_cts,
                     const std::vector<PartyCiphertext>& server_cts) const {
    const size_t length = schedule.wire_length();
    Bytes out(length, 0);
    for (const PartyCiphertext& ct : client_cts) {
        if (ct.bytes.size() != length)
            throw std::invalid_argument("ciphertext length mismatch: " + ct.party_id);
        xor_into(out, ct.bytes);
    }
    for (const PartyCiphertext& ct : server_cts) {
        if (ct.bytes.size() != length)
            throw std::invalid_argument("ciphertext length mismatch: " + ct.party_id);
        xor_into(out, ct.bytes);
    }
    return out;
}

const char* to_string(RoundStatus s) {
    switch (s) {
        case RoundStatus::Clean: return "clean";
        case RoundStatus::Jammed: return "jammed";
        case RoundStatus::Suppressed: return "suppressed";
        case RoundStatus::Corrupted: return "corrupted";
        case RoundStatus::Incomplete: return "incomplete";
    }
    return "?";
}

std::string transcript_line(const RoundTranscript& t, const CipherSuite& suite) {
    json j;
    j["round"] = t.round;
    j["online"] = std::vector<std::string>(t.online_clients.begin(),
                                           t.online_clients.end());
    j["status"] = to_string(t.status);
    j["output_digest"] = to_hex(suite.hash(t.combined));
    return j.dump();
}

std::set<std::string> finalize_online_set(
    const std::vector<std::set<std::string>>& per_server_views) {
    if (per_server_views.empty())
        throw std::invalid_argument("finalize_online_set: no views");
    std::set<std::string> agreed = per_server_views.front();
    for (size_t i = 1; i < per_server_views.size(); ++i) {
        std::set<std::string> next;
        std::set_intersection(agreed.begin(), agreed.end(),
                              per_server_views[i].begin(), per_server_views[i].end(),
                              std::inserter(next, next.begin()));
        agreed = std::move(next);
    }
    return agreed;
}

std::optional<Accusation> detect_disruption(const RoundTranscript& transcript,
                                            size_t slot_index, const Bytes& payload,
                                            bool request_next) {
    const Slot& slot = transcript.schedule.slots.at(slot_index);
    size_t off = transcript.schedule.wire_offset(slot_index);
    size_t len = slot.payload_length + 1;

    Bytes expected(len, 0);
    std::copy(payload.begin(), payload.end(), expected.begin());
    if (request_next) expected[len - 1] ^= 1;

    std::vector<size_t> bits;
    for (size_t i = 0; i < len; ++i) {
        uint8_t diff = transcript.combined[off + i] ^ expected[i];
        for (int b = 0; b < 8; ++b)
            if (diff & (1 << b)) bits.push_back(i * 8 + size_t(b));
    }
    if (bits.empty()) return std::nullopt;
    Accusation a;
    a.round = transcript.round;
    a.slot_index = slot_index;
    a.disrupted_bits = std::move(bits);
    a.expected = std::move(expected);
    return a;
}

BlameResult blame(const Group& group, const RoundTranscript& transcript,
                  const Accusation& accusation, const BlameOptions& options) {
    BlameResult result;
    const SlotSchedule& schedule = transcript.schedule;
    const Slot& slot = schedule.slots.at(accusation.slot_index);
    const size_t off = schedule.wire_offset(accusation.slot_index);
    const size_t len = slot.payload_length + 1;
    const size_t total = schedule.wire_length();

    // First verify the accusation against the public transcript.
    Bytes decoded(transcript.combined.begin() + ptrdiff_t(off),
                  transcript.combined.begin() + ptrdiff_t(off + len));
    if (decoded == accusation.expected) {
        result.conclusive = false;
        result.detail = "spurious: decoded slot matches claimed payload";
        return result;
    }

    auto audit_party = [&](const PartyCiphertext& ct, bool is_server) {
        if (options.refuse_reveal.count(ct.party_id)) {
            result.culprits.push_back(ct.party_id);
            result.detail = "refused to open commitments";
            return;
        }
        std::vector<std::string> parts =
            is_server ? std::vector<std::string>(transcript.online_clients.begin(),
                                                 transcript.online_clients.end())
                      : group.counterparts_of(ct.party_id, transcript.online_clients);
        Bytes pads_xor(len, 0);
        bool reveal_bad = false;
        for (size_t i = 0; i < parts.size(); ++i) {
            Bytes full = group.pad(ct.party_id, parts[i], transcript.round, total);
            Bytes segment(full.begin() + ptrdiff_t(off),
                          full.begin() + ptrdiff_t(off + len));
            if (options.lie_in_reveal.count(ct.party_id)) {
                // A lying reveal cannot match both the commitment and the
                // counterpart's own expansion of the shared seed.
                reveal_bad = true;
                break;
            }
            if (group.descriptor().accountability && !ct.pads.commitments.empty()) {
                const Bytes& registered =
                    ct.pads.commitments.at(i).at(accusation.slot_index);
                if (CipherSuite::hash(segment) != registered) {
                    reveal_bad = true;
                    break;
                }
            }
            xor_into(pads_xor, segment);
        }
        if (reveal_bad) {
            result.culprits.push_back(ct.party_id);
            result.detail = "revealed pads failed verification";
            return;
        }
        Bytes delta(len, 0);
        for (size_t i = 0; i < len; ++i) delta[i] = ct.bytes[off + i] ^ pads_xor[i];

        static const auto zero = [](const Bytes& b) {
            return std::all_of(b.begin(), b.end(), [](uint8_t v) { return v == 0; });
        };
        if (zero(delta)) return;                 // honest cover contribution
        if (delta == accusation.expected) return; // the anonymous slot owner
        result.culprits.push_back(ct.party_id);
    };

    for (const PartyCiphertext& ct : transcript.client_ciphertexts)
        audit_party(ct, false);
    for (const PartyCiphertext& ct : transcript.server_ciphertexts)
        audit_party(ct, true);

    if (!result.culprits.empty()) {
        result.conclusive = true;
        if (result.detail.empty()) result.detail = "ciphertext does not match pads";
    } else {
        result.detail = "no party deviates from its pads";
    }
    return result;
}

// ---------------------------------------------------------------------------
// Session

namespace {

struct OwnerState {
    size_t client_index;
    size_t slot_index;
    std::string nym_label;
};

std::string nym_label(const Bytes& key) {
    return "nym-" + to_hex({key.data(), std::min<size_t>(key.size(), 8)});
}

} // namespace

SessionResult run_session(const CipherSuite& suite, const SessionConfig& config) {
    Rng rng(config.master_seed);
    Group group(suite, config.descriptor);
    const auto clients = group.client_ids();
    const size_t n = clients.size();

    // Each member mints a pseudonym key and submits it through the shuffle.
    std::vector<Bytes> nym_keys;
    Rng nym_rng = rng.fork(0x6e796d);
    for (size_t i = 0; i < n; ++i) {
        Bytes key(32);
        for (auto& b : key) b = uint8_t(nym_rng.next_u64() & 0xff);
        nym_keys.push_back(std::move(key));
    }
    Rng shuffle_rng = rng.fork(0x73687566);
    SlotSchedule schedule =
        assign_slots(suite, config.descriptor, nym_keys, shuffle_rng);

    SessionResult result;
    result.initial_schedule = schedule;

    // Owner mapping lives only here (members' private state).
    std::vector<OwnerState> owners(n);
    std::set<std::string> member_set(clients.begin(), clients.end());
    for (size_t i = 0; i < n; ++i) {
        size_t slot = *schedule.slot_of(nym_keys[i]);
        owners[i] = OwnerState{i, slot, nym_label(nym_keys[i])};
        result.nym_owner[owners[i].nym_label] = clients[i];
        PresenceLog log;
        log.members = member_set;
        result.presence[owners[i].nym_label] = std::move(log);
    }
    std::vector<size_t> slot_to_owner(n);
    for (size_t i = 0; i < n; ++i) slot_to_owner[owners[i].slot_index] = i;

    const bool track_metrics =
        config.policy.has_value() || config.force_metrics || n <= 64;
    std::map<std::string, std::vector<size_t>> possinymity_history;
    std::map<std::string, size_t> spurious_counts;
    std::set<std::string> expelled;

    Rng churn_rng = rng.fork(0x636875);

    for (uint64_t round = 0; round < config.rounds; ++round) {
        schedule.round = round;

        // Who made the deadline this round.
        std::set<std::string> online;
        for (size_t i = 0; i < n; ++i) {
            if (expelled.count(clients[i])) continue;
            if (churn_rng.bernoulli(config.online_probability))
                online.insert(clients[i]);
        }
        if (config.descriptor.topology == Topology::ClientServer) {
            std::vector<std::set<std::string>> views(
                config.descriptor.servers.size(), online);
            online = finalize_online_set(views);
        }

        RoundTranscript t;
        t.round = round;
        t.online_clients = online;
        t.schedule = schedule;

        if (online.size() < 2) {
            t.status = RoundStatus::Incomplete;
            result.transcripts.push_back(std::move(t));
            continue;
        }

        // Gate pending transmissions through the anonymity policy.
        struct Pending {
            size_t owner;
            Bytes message;
        };
        std::vector<Pending> pending;
        for (const Transmission& tx : config.transmissions)
            if (tx.round == round) pending.push_back({tx.client_index, tx.message});

        std::set<size_t> suppressed_owners;
        bool any_suppressed = false;
        for (const Pending& p : pending) {
            const OwnerState& o = owners[p.owner];
            if (!config.policy) break;
            PresenceLog& log = result.presence[o.nym_label];
            auto decision = metrics::gate_round(*config.policy, log, online,
                                                possinymity_history[o.nym_label]);
            if (decision != metrics::GateDecision::Transmit) {
                suppressed_owners.insert(p.owner);
                any_suppressed = true;
            }
        }

        // Collect client ciphertexts.  Everyone online contributes the same
        // byte count; owners of live slots fold in payload and request flag.
        std::map<size_t, Bytes> messages; // owner index -> message this round
        for (const Pending& p : pending) {
            const std::string& id = clients[p.owner];
            if (!online.count(id)) continue;
            if (suppressed_owners.count(p.owner)) continue;
            if (schedule.slots[owners[p.owner].slot_index].payload_length == 0)
                continue;
            messages[p.owner] = p.message;
        }

        auto wants_next = [&](size_t owner_index) {
            for (const Transmission& tx : config.transmissions)
                if (tx.round == round + 1 && tx.client_index == owner_index)
                    return true;
            return false;
        };

        for (size_t i = 0; i < n; ++i) {
            const std::string& id = clients[i];
            if (!online.count(id)) continue;
            Payload p;
            p.slot_index = owners[i].slot_index;
            auto m = messages.find(i);
            if (m != messages.end()) p.message = m->second;
            p.request_next = wants_next(i);
            t.client_ciphertexts.push_back(
                group.client_submit(id, round, schedule, online, p));
        }

        // Injected disruption: the culprit XORs noise into the victim slot.
        for (const Disruption& d : config.disruptions) {
            if (d.round != round) continue;
            const std::string& culprit = clients.at(d.client_index);
            if (expelled.count(culprit) || !online.count(culprit)) continue;
            for (PartyCiphertext& ct : t.client_ciphertexts) {
                if (ct.party_id != culprit) continue;
                Rng noise(d.seed);
                const Slot& slot = schedule.slots.at(d.slot_index);
                size_t off = schedule.wire_offset(d.slot_index);
                bool flipped = false;
                for (size_t b = 0; b < slot.payload_length + 1; ++b) {
                    uint8_t mask = uint8_t(noise.next_u64() & 0xff);
                    if (mask) flipped = true;
                    ct.bytes[off + b] ^= mask;
                }
                if (!flipped) ct.bytes[off] ^= 1;
            }
        }

        if (config.descriptor.topology == Topology::ClientServer)
            for (const std::string& sid : group.server_ids())
                t.server_ciphertexts.push_back(
                    group.server_commit(sid, round, schedule, online));

        t.combined = group.combine(schedule, t.client_ciphertexts,
                                   t.server_ciphertexts);
        t.status = any_suppressed ? RoundStatus::Suppressed : RoundStatus::Clean;

        // Owners inspect their slots; verified accusations trigger blame.
        for (const auto& [owner_index, message] : messages) {
            const OwnerState& o = owners[owner_index];
            auto accusation = detect_disruption(t, o.slot_index, message,
                                                wants_next(owner_index));
            if (!accusation) continue;
            const std::string& label = o.nym_label;
            if (spurious_counts[label] >= config.spurious_accusation_limit)
                continue;
            BlameResult b = blame(group, t, *accusation);
            if (b.conclusive) {
                t.status = RoundStatus::Jammed;
                for (const std::string& culprit : b.culprits) {
                    if (!expelled.count(culprit)) {
                        expelled.insert(culprit);
                        result.expelled.push_back(culprit);
                    }
                }
            } else {
                ++spurious_counts[label];
            }
        }

        // Decode slots.
        std::vector<Bytes> decoded;
        for (size_t s = 0; s < schedule.slots.size(); ++s) {
            size_t off = schedule.wire_offset(s);
            decoded.emplace_back(
                t.combined.begin() + ptrdiff_t(off),
                t.combined.begin() + ptrdiff_t(off + schedule.slots[s].payload_length));
        }
        result.decoded[round] = std::move(decoded);

        // Presence logs and metric series.
        for (size_t i = 0; i < n; ++i) {
            const OwnerState& o = owners[i];
            bool active = messages.count(i) > 0 && t.status != RoundStatus::Jammed;
            PresenceLog& log = result.presence[o.nym_label];
            log.record_time(int64_t(round), online, active);
            if (track_metrics) {
                metrics::MetricPoint point;
                point.round = round;
                point.possinymity = metrics::possinymity(log);
                point.indinymity = metrics::indinymity(log, clients[i]);
                point.decision = suppressed_owners.count(i)
                                     ? metrics::GateDecision::Suppress
                                     : metrics::GateDecision::Transmit;
                result.series.per_pseudonym[o.nym_label].push_back(point);
                possinymity_history[o.nym_label].push_back(point.possinymity);
            }
        }

        if (!config.keep_ciphertexts) {
            t.client_ciphertexts.clear();
            t.server_ciphertexts.clear();
        }

        SlotSchedule upcoming =
            next_schedule(schedule, t.combined, config.descriptor.slot_size);
        result.transcripts.push_back(std::move(t));
        schedule = std::move(upcoming);
    }
    return result;
}

} // namespace anonlab::dcnet
