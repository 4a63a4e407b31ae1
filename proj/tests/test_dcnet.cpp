#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "anonlab/dcnet.hpp"
#include "oracles.hpp"

using namespace anonlab;
using namespace anonlab::dcnet;

namespace {

GroupDescriptor make_descriptor(size_t n_clients, size_t n_servers,
                                size_t slot_size = 16,
                                bool accountability = true) {
    CipherSuite suite(SuiteKind::TestDeterministic);
    GroupDescriptor d;
    d.topology = n_servers ? Topology::ClientServer : Topology::FullPairwise;
    for (size_t i = 0; i < n_clients; ++i)
        d.clients.push_back(suite.generate_keypair("c" + std::to_string(i)));
    for (size_t i = 0; i < n_servers; ++i)
        d.servers.push_back(suite.generate_keypair("s" + std::to_string(i)));
    d.slot_size = slot_size;
    d.accountability = accountability;
    return d;
}

SlotSchedule trivial_schedule(size_t n_slots, size_t payload_length,
                              uint64_t round = 0) {
    SlotSchedule s;
    s.round = round;
    for (size_t i = 0; i < n_slots; ++i)
        s.slots.push_back(Slot{Bytes{uint8_t(i)}, payload_length});
    return s;
}

std::set<std::string> all_clients(const GroupDescriptor& d) {
    std::set<std::string> out;
    for (const KeyPair& kp : d.clients) out.insert(kp.id);
    return out;
}

bool all_zero(const Bytes& b) {
    return std::all_of(b.begin(), b.end(), [](uint8_t v) { return v == 0; });
}

} // namespace

TEST_CASE("setup_group: pair counts and duplicate detection") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    CHECK(setup_group(suite, make_descriptor(3, 0)).size() == 3);     // 3*2/2
    CHECK(setup_group(suite, make_descriptor(100, 5)).size() == 500); // N*M
    CHECK(setup_group(suite, make_descriptor(100, 0)).size() == 4950);

    GroupDescriptor dup = make_descriptor(3, 1);
    dup.clients[2].id = dup.clients[1].id;
    CHECK_THROWS(setup_group(suite, dup));
    GroupDescriptor dup_pk = make_descriptor(3, 1);
    dup_pk.clients[2].public_part = dup_pk.clients[1].public_part;
    CHECK_THROWS(setup_group(suite, dup_pk));
    CHECK_THROWS(setup_group(suite, make_descriptor(1, 1))); // lonely client
    GroupDescriptor no_servers = make_descriptor(3, 1);
    no_servers.servers.clear();
    CHECK_THROWS(setup_group(suite, no_servers));
}

TEST_CASE("seed table matches direct two-sided key agreement") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    GroupDescriptor d = make_descriptor(4, 2);
    SeedTable table = setup_group(suite, d);
    for (const KeyPair& c : d.clients)
        for (const KeyPair& s : d.servers) {
            // Oracle: derive the seed from the server's side.
            SharedSeed server_side = suite.derive_seed(s, c.id, c.public_part);
            CHECK(table.seed(c.id, s.id).bytes == server_side.bytes);
            CHECK(table.seed(s.id, c.id).bytes == server_side.bytes); // symmetric lookup
        }
    CHECK_THROWS(table.seed("c0", "c1")); // no client-client seed in this topology
}

TEST_CASE("wire layout: lengths, offsets, slot lookup") {
    SlotSchedule s;
    s.slots = {Slot{Bytes{1}, 4}, Slot{Bytes{2}, 0}, Slot{Bytes{3}, 7}};
    CHECK(s.wire_length() == 5 + 1 + 8); // each slot carries one request byte
    CHECK(s.wire_offset(0) == 0);
    CHECK(s.wire_offset(1) == 5);
    CHECK(s.wire_offset(2) == 6);
    CHECK_THROWS(s.wire_offset(3));
    CHECK(s.slot_of(Bytes{2}) == size_t(1));
    CHECK(!s.slot_of(Bytes{9}).has_value());
}

TEST_CASE("assign_slots permutes the pseudonym keys and replays under a seed") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    for (size_t n_servers : {size_t(0), size_t(3)}) {
        GroupDescriptor d = make_descriptor(4, n_servers, 8);
        std::vector<Bytes> keys;
        for (uint8_t i = 0; i < 4; ++i) keys.push_back(Bytes{uint8_t(0x10 + i)});
        Rng r1(77), r2(77);
        SlotSchedule a = assign_slots(suite, d, keys, r1);
        SlotSchedule b = assign_slots(suite, d, keys, r2);
        REQUIRE(a.slots.size() == 4);
        std::multiset<Bytes> got, want(keys.begin(), keys.end());
        for (size_t i = 0; i < 4; ++i) {
            got.insert(a.slots[i].pseudonym_key);
            CHECK(a.slots[i].payload_length == 8);
            CHECK(a.slots[i].pseudonym_key == b.slots[i].pseudonym_key);
        }
        CHECK(got == want);
    }
}

TEST_CASE("next_schedule honors the trailing request byte of each slot") {
    SlotSchedule prev = trivial_schedule(3, 4, 9);
    Bytes combined(prev.wire_length(), 0);
    combined[prev.wire_offset(0) + 4] = 1; // slot 0 requests
    combined[prev.wire_offset(1) + 4] = 0; // slot 1 does not
    combined[prev.wire_offset(2) + 4] = 3; // only the low bit counts
    SlotSchedule next = next_schedule(prev, combined, 32);
    CHECK(next.round == 10);
    CHECK(next.slots[0].payload_length == 32);
    CHECK(next.slots[1].payload_length == 0);
    CHECK(next.slots[2].payload_length == 32);
    for (size_t i = 0; i < 3; ++i)
        CHECK(next.slots[i].pseudonym_key == prev.slots[i].pseudonym_key);
    CHECK_THROWS(next_schedule(prev, Bytes(3, 0), 32));
}

TEST_CASE("three members, one slot, one bit: pads cancel and the bit survives") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    Group g(suite, make_descriptor(3, 0, 1, false));
    SlotSchedule sched = trivial_schedule(1, 1);
    std::set<std::string> online = all_clients(g.descriptor());

    std::vector<PartyCiphertext> cts;
    cts.push_back(g.client_submit("c0", 0, sched, online,
                                  Payload{0, Bytes{0x01}, false}));
    cts.push_back(g.client_submit("c1", 0, sched, online, std::nullopt));
    cts.push_back(g.client_submit("c2", 0, sched, online, std::nullopt));
    Bytes combined = g.combine(sched, cts, {});
    REQUIRE(combined.size() == 2);
    CHECK(combined[0] == 0x01); // the message bit
    CHECK(combined[1] == 0x00); // no request for more bandwidth
}

TEST_CASE("all-cover round combines to zeros in both topologies") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    for (size_t n_servers : {size_t(0), size_t(3)}) {
        Group g(suite, make_descriptor(5, n_servers, 8, false));
        SlotSchedule sched = trivial_schedule(5, 8);
        std::set<std::string> online = all_clients(g.descriptor());
        std::vector<PartyCiphertext> ccts, scts;
        for (const std::string& c : g.client_ids())
            ccts.push_back(g.client_submit(c, 2, sched, online, std::nullopt));
        for (const std::string& s : g.server_ids())
            scts.push_back(g.server_commit(s, 2, sched, online));
        Bytes combined = g.combine(sched, ccts, scts);
        CHECK(all_zero(combined));
        // Every online party transmits exactly the same number of bytes.
        for (const auto& ct : ccts) CHECK(ct.bytes.size() == sched.wire_length());
        for (const auto& ct : scts) CHECK(ct.bytes.size() == sched.wire_length());
    }
}

TEST_CASE("frozen client-server fixture with an independent pad oracle") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    GroupDescriptor d = make_descriptor(5, 3, 16, false);
    Group g(suite, d);
    SlotSchedule sched = trivial_schedule(5, 16);
    std::set<std::string> online = all_clients(d);
    const uint64_t round = 3;
    Bytes msg = to_bytes("attack at dawn");

    PartyCiphertext ct0 =
        g.client_submit("c0", round, sched, online, Payload{0, msg, false});
    CHECK(to_hex(ct0.bytes) ==
          "1971b97bfddf66c4d162f05fb2210e6561c3cdd9363d9055a5e383699508e1fc"
          "19214baba7ff5a7c0ad523cd3d412ba488d91f29a5565445b0c644e98bcbada4"
          "dfefd5cd9c2b81ce2ebf99c9a83a4e517cf2f9f62b");

    // Oracle: XOR of the raw pad streams toward each server, payload folded
    // into slot 0, computed without the Group machinery.
    Bytes oracle(sched.wire_length(), 0);
    for (const KeyPair& s : d.servers) {
        SharedSeed seed = suite.derive_seed(s, "c0", d.clients[0].public_part);
        oracle = oracles::xor_bytes(oracle, suite.prg(seed, round, oracle.size()));
    }
    for (size_t i = 0; i < msg.size(); ++i) oracle[i] ^= msg[i];
    CHECK(ct0.bytes == oracle);

    // Full round: servers cancel every pad, leaving only the payload.
    std::vector<PartyCiphertext> ccts{ct0}, scts;
    for (size_t i = 1; i < 5; ++i)
        ccts.push_back(g.client_submit("c" + std::to_string(i), round, sched,
                                       online, std::nullopt));
    for (const std::string& s : g.server_ids())
        scts.push_back(g.server_commit(s, round, sched, online));
    Bytes combined = g.combine(sched, ccts, scts);
    Bytes expected(sched.wire_length(), 0);
    std::copy(msg.begin(), msg.end(), expected.begin());
    CHECK(combined == expected);
    CHECK(to_hex(Bytes(combined.begin(), combined.begin() + 14)) ==
          "61747461636b206174206461776e");
}

TEST_CASE("a stale online set turns the round into garbage (full-pairwise)") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    Group g(suite, make_descriptor(3, 0, 8, false));
    SlotSchedule sched = trivial_schedule(3, 8);
    std::set<std::string> agreed{"c0", "c1", "c2"};
    std::set<std::string> stale{"c0", "c2"}; // c2 never saw c1

    std::vector<PartyCiphertext> cts;
    cts.push_back(g.client_submit("c0", 0, sched, agreed, std::nullopt));
    cts.push_back(g.client_submit("c1", 0, sched, agreed, std::nullopt));
    cts.push_back(g.client_submit("c2", 0, sched, stale, std::nullopt));
    CHECK(!all_zero(g.combine(sched, cts, {})));
}

TEST_CASE("client-server pads are independent of which peers are online") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    Group g(suite, make_descriptor(4, 2, 8, false));
    SlotSchedule sched = trivial_schedule(4, 8);
    PartyCiphertext with_all = g.client_submit(
        "c0", 1, sched, {"c0", "c1", "c2", "c3"}, std::nullopt);
    PartyCiphertext with_two =
        g.client_submit("c0", 1, sched, {"c0", "c3"}, std::nullopt);
    CHECK(with_all.bytes == with_two.bytes); // churn cannot desync pads
}

TEST_CASE("prg workload per submission: counterpart count") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    SlotSchedule sched = trivial_schedule(5, 8);

    Group full(suite, make_descriptor(5, 0, 8, false));
    full.reset_prg_calls();
    (void)full.client_submit("c0", 0, sched, all_clients(full.descriptor()),
                             std::nullopt);
    CHECK(full.prg_calls() == 4); // one pad per other online client

    Group cs(suite, make_descriptor(5, 3, 8, false));
    cs.reset_prg_calls();
    (void)cs.client_submit("c0", 0, sched, all_clients(cs.descriptor()),
                           std::nullopt);
    CHECK(cs.prg_calls() == 3); // one pad per server, regardless of N
}

TEST_CASE("finalize_online_set intersects server views") {
    CHECK(finalize_online_set({{"a", "b", "c"}, {"a", "c"}, {"a", "c", "d"}}) ==
          std::set<std::string>{"a", "c"});
    CHECK(finalize_online_set({{"a"}, {"b"}}).empty());
    CHECK_THROWS(finalize_online_set({}));
}

TEST_CASE("detect_disruption reports exact bit offsets") {
    RoundTranscript t;
    t.round = 4;
    t.schedule = trivial_schedule(2, 4, 4);
    Bytes payload = to_bytes("hi");
    Bytes wire(t.schedule.wire_length(), 0);
    size_t off = t.schedule.wire_offset(1);
    std::copy(payload.begin(), payload.end(), wire.begin() + ptrdiff_t(off));
    wire[off + 4] = 1; // request flag
    t.combined = wire;

    // Undisturbed slot: no accusation.
    CHECK(!detect_disruption(t, 1, payload, true).has_value());

    // Flip bit 1 of byte 0 and bit 7 of byte 4 within the slot.
    t.combined[off + 0] ^= 0x02;
    t.combined[off + 4] ^= 0x80;
    auto acc = detect_disruption(t, 1, payload, true);
    REQUIRE(acc.has_value());
    CHECK(acc->round == 4);
    CHECK(acc->slot_index == 1);
    CHECK(acc->disrupted_bits == std::vector<size_t>{1, 39});
    Bytes expected{uint8_t('h'), uint8_t('i'), 0, 0, 1};
    CHECK(acc->expected == expected);
}

namespace {

struct BlameScene {
    CipherSuite suite{SuiteKind::TestDeterministic};
    GroupDescriptor d = make_descriptor(3, 2, 8, true);
    Group g{suite, d};
    SlotSchedule sched = trivial_schedule(3, 8);
    std::set<std::string> online = all_clients(d);
    Bytes msg = to_bytes("hi");
    RoundTranscript t;

    explicit BlameScene(bool disrupt) {
        t.round = 0;
        t.schedule = sched;
        t.online_clients = online;
        t.client_ciphertexts.push_back(
            g.client_submit("c0", 0, sched, online, Payload{0, msg, false}));
        t.client_ciphertexts.push_back(
            g.client_submit("c1", 0, sched, online, std::nullopt));
        t.client_ciphertexts.push_back(
            g.client_submit("c2", 0, sched, online, std::nullopt));
        for (const std::string& s : g.server_ids())
            t.server_ciphertexts.push_back(g.server_commit(s, 0, sched, online));
        if (disrupt) t.client_ciphertexts[1].bytes[0] ^= 0xff; // c1 jams slot 0
        t.combined = g.combine(sched, t.client_ciphertexts, t.server_ciphertexts);
    }
};

} // namespace

TEST_CASE("blame pins the disruptor without exposing the slot owner") {
    BlameScene scene(true);
    auto acc = detect_disruption(scene.t, 0, scene.msg, false);
    REQUIRE(acc.has_value());
    BlameResult b = blame(scene.g, scene.t, *acc);
    CHECK(b.conclusive);
    CHECK(b.culprits == std::vector<std::string>{"c1"});
    // c0 (the anonymous owner) is never accused even though its delta is
    // nonzero: its delta equals the claimed payload.
}

TEST_CASE("a spurious accusation is rejected without blame") {
    BlameScene scene(false);
    Accusation acc;
    acc.round = 0;
    acc.slot_index = 0;
    acc.disrupted_bits = {0};
    acc.expected.assign(scene.sched.slots[0].payload_length + 1, 0);
    std::copy(scene.msg.begin(), scene.msg.end(), acc.expected.begin());
    // The claimed payload is exactly what the round decoded: nothing to blame.
    BlameResult b = blame(scene.g, scene.t, acc);
    CHECK(!b.conclusive);
    CHECK(b.culprits.empty());
    CHECK(b.detail.find("spurious") != std::string::npos);
}

TEST_CASE("refusing to reveal or lying during reveal is itself blamable") {
    BlameScene scene(true);
    auto acc = detect_disruption(scene.t, 0, scene.msg, false);
    REQUIRE(acc.has_value());

    BlameOptions refuse;
    refuse.refuse_reveal = {"c1"};
    BlameResult b1 = blame(scene.g, scene.t, *acc, refuse);
    CHECK(b1.conclusive);
    CHECK(std::count(b1.culprits.begin(), b1.culprits.end(), "c1") == 1);

    BlameOptions lie;
    lie.lie_in_reveal = {"c2"}; // an otherwise-honest party fakes its pads
    BlameResult b2 = blame(scene.g, scene.t, *acc, lie);
    CHECK(b2.conclusive);
    CHECK(std::count(b2.culprits.begin(), b2.culprits.end(), "c2") == 1);
    CHECK(std::count(b2.culprits.begin(), b2.culprits.end(), "c1") == 1);
}

namespace {

// Slot index owned by a given client, recovered through the ground-truth map.
size_t slot_of_client(const SessionResult& r, const std::string& client) {
    for (size_t s = 0; s < r.initial_schedule.slots.size(); ++s) {
        const Bytes& key = r.initial_schedule.slots[s].pseudonym_key;
        std::string label = "nym-" + to_hex({key.data(), 8});
        auto it = r.nym_owner.find(label);
        if (it != r.nym_owner.end() && it->second == client) return s;
    }
    throw std::logic_error("client owns no slot");
}

} // namespace

TEST_CASE("two-round session decodes both messages through request flags") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    SessionConfig cfg;
    cfg.descriptor = make_descriptor(4, 2, 16, true);
    cfg.rounds = 2;
    cfg.master_seed = 5;
    cfg.transmissions = {Transmission{0, 0, to_bytes("round zero")},
                         Transmission{1, 0, to_bytes("round one")}};
    SessionResult r = run_session(suite, cfg);

    REQUIRE(r.transcripts.size() == 2);
    CHECK(r.transcripts[0].status == RoundStatus::Clean);
    CHECK(r.transcripts[1].status == RoundStatus::Clean);
    CHECK(r.expelled.empty());

    size_t slot = slot_of_client(r, "c0");
    Bytes d0 = r.decoded.at(0).at(slot);
    CHECK(Bytes(d0.begin(), d0.begin() + 10) == to_bytes("round zero"));
    CHECK(all_zero(Bytes(d0.begin() + 10, d0.end())));
    // Round 1: only c0 requested bandwidth, so only its slot is live.
    for (size_t s = 0; s < 4; ++s)
        CHECK(r.decoded.at(1).at(s).size() == (s == slot ? 16 : 0));
    Bytes d1 = r.decoded.at(1).at(slot);
    CHECK(Bytes(d1.begin(), d1.begin() + 9) == to_bytes("round one"));

    // Uniform ciphertext sizes within each round.
    for (const RoundTranscript& t : r.transcripts)
        for (const PartyCiphertext& ct : t.client_ciphertexts)
            CHECK(ct.bytes.size() == t.schedule.wire_length());

    // The ground-truth map covers every pseudonym exactly once.
    std::set<std::string> owners;
    for (const auto& [label, owner] : r.nym_owner) owners.insert(owner);
    CHECK(owners == all_clients(cfg.descriptor));
}

TEST_CASE("a disruptor is blamed and expelled; later rounds run without it") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    SessionConfig cfg;
    cfg.descriptor = make_descriptor(4, 2, 16, true);
    cfg.rounds = 2;
    cfg.master_seed = 6;
    cfg.transmissions = {Transmission{0, 0, to_bytes("victim message")}};

    // First find which slot c0 owns, then aim the disruption at it.
    SessionResult probe = run_session(suite, cfg);
    size_t victim_slot = slot_of_client(probe, "c0");
    cfg.disruptions = {Disruption{0, 2, victim_slot, 99}};

    SessionResult r = run_session(suite, cfg);
    CHECK(r.transcripts[0].status == RoundStatus::Jammed);
    CHECK(r.expelled == std::vector<std::string>{"c2"});
    CHECK(r.transcripts[1].online_clients.count("c2") == 0);
    CHECK(r.transcripts[1].status == RoundStatus::Clean);
}

TEST_CASE("sessions replay byte-for-byte under the same master seed") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    SessionConfig cfg;
    cfg.descriptor = make_descriptor(5, 0, 8, false);
    cfg.rounds = 3;
    cfg.master_seed = 31337;
    cfg.online_probability = 0.8;
    cfg.transmissions = {Transmission{0, 1, to_bytes("hello")}};
    SessionResult a = run_session(suite, cfg);
    SessionResult b = run_session(suite, cfg);
    REQUIRE(a.transcripts.size() == b.transcripts.size());
    for (size_t i = 0; i < a.transcripts.size(); ++i) {
        CHECK(a.transcripts[i].combined == b.transcripts[i].combined);
        CHECK(a.transcripts[i].online_clients == b.transcripts[i].online_clients);
        CHECK(a.transcripts[i].status == b.transcripts[i].status);
    }
    CHECK(a.nym_owner == b.nym_owner);
}

TEST_CASE("transcript lines are valid JSON with the expected fields") {
    CipherSuite suite(SuiteKind::TestDeterministic);
    RoundTranscript t;
    t.round = 7;
    t.online_clients = {"a", "b"};
    t.status = RoundStatus::Clean;
    t.combined = to_bytes("xyz");
    std::string line = transcript_line(t, suite);
    CHECK(line.find("\"round\":7") != std::string::npos);
    CHECK(line.find("clean") != std::string::npos);
    CHECK(line.find(to_hex(suite.hash(t.combined))) != std::string::npos);
}
