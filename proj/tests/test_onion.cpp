#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "anonlab/onion.hpp"

using namespace anonlab;
using namespace anonlab::onion;

namespace {

struct World {
    CipherSuite suite{SuiteKind::TestDeterministic};
    RelayDirectory directory;
    std::map<NodeId, KeyPair> keys;

    explicit World(size_t relays) {
        for (size_t i = 0; i < relays; ++i) {
            std::string id = "r" + std::to_string(i + 1);
            KeyPair kp = suite.generate_keypair(id);
            directory.add(id, kp.public_part);
            keys[id] = kp;
        }
    }
};

} // namespace

TEST_CASE("build_circuit: distinct relays, uniform without replacement") {
    World w(5);
    Rng rng(1);
    Circuit c = build_circuit(w.directory, "src", "dst", 3, rng);
    CHECK(c.length() == 3);
    std::set<NodeId> distinct(c.relays.begin(), c.relays.end());
    CHECK(distinct.size() == 3);
    CHECK(c.source == "src");
    CHECK(c.destination == "dst");

    Rng r1(9), r2(9);
    CHECK(build_circuit(w.directory, "s", "d", 3, r1).relays ==
          build_circuit(w.directory, "s", "d", 3, r2).relays);

    Rng r3(1);
    Circuit single = build_circuit(w.directory, "s", "d", 1, r3);
    CHECK(single.length() == 1);

    Rng r4(1);
    CHECK_THROWS(build_circuit(w.directory, "s", "d", 6, r4));
}

TEST_CASE("wrap then peel-all returns the core for lengths 1..8") {
    World w(8);
    Bytes m = to_bytes("message body");
    for (size_t n = 1; n <= 8; ++n) {
        Rng rng{uint64_t(n)};
        Circuit c = build_circuit(w.directory, "s", "d", n, rng);
        Onion o = wrap(w.suite, w.directory, c, m);
        CHECK(o.hop == c.relays.front());
        Bytes body = o.body;
        for (size_t i = 0; i < n; ++i) {
            Peeled p = peel(w.suite, w.keys.at(c.relays[i]), body);
            if (i + 1 < n) {
                REQUIRE(!p.is_core);
                // Structural neighbor check: the peeled layer at relay i
                // names only relay i+1, no later hop.
                CHECK(p.next == c.relays[i + 1]);
            } else {
                REQUIRE(p.is_core);
                CHECK(p.next == "d");
                CHECK(p.body == m);
            }
            body = p.body;
        }
    }
}

TEST_CASE("layer count equals circuit length, visible as size growth") {
    World w(8);
    Bytes m = to_bytes("x");
    size_t prev = 0;
    for (size_t n = 1; n <= 8; ++n) {
        Circuit c;
        c.source = "s";
        c.destination = "d";
        for (size_t i = 0; i < n; ++i) c.relays.push_back("r" + std::to_string(i + 1));
        Onion o = wrap(w.suite, w.directory, c, m);
        if (n > 1) {
            size_t header = 3 + c.relays[1].size(); // marker + u16 len + id
            CHECK(o.body.size() == prev + header + kPkeOverhead);
        }
        prev = o.body.size();
    }
}

TEST_CASE("wrong relay key fails to peel; out-of-order peel fails") {
    World w(4);
    Circuit c{"s", {"r1", "r2", "r3"}, "d"};
    Onion o = wrap(w.suite, w.directory, c, to_bytes("m"));
    CHECK_THROWS_AS((void)peel(w.suite, w.keys.at("r4"), o.body), DecryptError);
    CHECK_THROWS_AS((void)peel(w.suite, w.keys.at("r2"), o.body), DecryptError);
}

TEST_CASE("frozen layer-by-layer fixture for a 3-hop onion carrying 'x'") {
    World w(0);
    CipherSuite s(SuiteKind::TestDeterministic);
    std::map<NodeId, KeyPair> keys;
    RelayDirectory dir;
    for (const char* id : {"r1", "r2", "r3"}) {
        KeyPair kp = s.generate_keypair(id);
        dir.add(id, kp.public_part);
        keys[id] = kp;
    }
    Circuit c{"s", {"r1", "r2", "r3"}, "d"};
    Onion o = wrap(s, dir, c, to_bytes("x"));
    CHECK(o.hop == "r1");
    CHECK(to_hex(o.body) ==
          "7f5133f41605c8b1577facc851d28e18fb09d36691ba7dde43b057ca46819027"
          "121205fb6d7bcbb565ad416b8b38bf9538ff1f2046779178e8a810d6614b7b0c"
          "2999ffb9304b77b9341c16c46de0e39df513f82311b119e3416445f7590f6d87"
          "62cbd56553a257c5a5d769ef3e6697b4d2c2dd7ca9559344810b358dfdd5fb9d"
          "456134b25c095151b499183584f0d72912971dfdf13380d3769c5563b59e74");
    Peeled p1 = peel(s, keys["r1"], o.body);
    CHECK(p1.next == "r2");
    CHECK(to_hex(p1.body) ==
          "58151bf48c29689538377732f563750ace81d4a7850f0a151090173c2e414e7d"
          "d74d0de95f9f223437ffba61e6258bb284a8e5f3b07a611d3172d85a54e8f0a1"
          "9a91c0776eb469ce3f7c15e195e19e2160bf7bb4e5376c62182a1166a1c8ade4"
          "79378ba60448a271fe19");
    Peeled p2 = peel(s, keys["r2"], p1.body);
    CHECK(p2.next == "r3");
    CHECK(to_hex(p2.body) ==
          "47f352f98982834eb673888aefb94acb92884960b43192a0f5c65872721ca743"
          "db75cbb2638c9d29796e81b182db42032c06a9de3a");
    Peeled p3 = peel(s, keys["r3"], p2.body);
    CHECK(p3.is_core);
    CHECK(p3.next == "d");
    CHECK(to_string(p3.body) == "x");
}

TEST_CASE("fixed-size cells hide layer depth and round-trip") {
    Bytes small = to_bytes("tiny");
    Bytes cell = to_cell(small);
    CHECK(cell.size() == kCellSize);
    CHECK(from_cell(cell) == small);
    CHECK(to_cell(Bytes(300, 7)).size() == kCellSize);
    CHECK_THROWS(to_cell(Bytes(kCellSize, 1))); // too large to frame
}

namespace {

struct FlowWorld {
    World w{5};
    simnet::Simulator sim;
    FlowEngine engine;

    FlowWorld() : sim(topo()), engine(sim) {}

    static simnet::NetworkTopology topo() {
        simnet::NetworkTopology t;
        t.default_latency_ms = 10;
        for (const char* n : {"s", "d", "r1", "r2", "r3", "r4", "r5"}) t.add_node(n);
        return t;
    }
};

} // namespace

TEST_CASE("pattern [(0,5)] over 3 hops of 10ms exits at t=40") {
    FlowWorld fw;
    Circuit c{"s", {"r1", "r2", "r3"}, "d"};
    fw.engine.register_circuit("f", c);
    fw.engine.start_flow("f", {{0, 5}});
    fw.sim.run();
    size_t at_exit = 0;
    for (const auto& e : fw.sim.log())
        if (e.kind == simnet::EventKind::Deliver && e.dst == "d") {
            CHECK(e.time_ms == 40); // 4 links x 10 ms
            ++at_exit;
        }
    CHECK(at_exit == 5); // cell conservation end to end
}

TEST_CASE("empty pattern produces no events") {
    FlowWorld fw;
    fw.engine.register_circuit("f", Circuit{"s", {"r1"}, "d"});
    fw.engine.start_flow("f", {});
    fw.sim.run();
    CHECK(fw.sim.log().empty());
}

TEST_CASE("halving a middle relay's service rate doubles exit gaps") {
    auto exit_times = [](double scale) {
        FlowWorld fw;
        Circuit c{"s", {"r1", "r2", "r3"}, "d"};
        fw.sim.set_service_interval("r2", 2);
        fw.sim.set_service_scale("r2", scale);
        fw.engine.register_circuit("f", c);
        fw.engine.start_flow("f", {{0, 4}});
        fw.sim.run();
        std::vector<int64_t> times;
        for (const auto& e : fw.sim.log())
            if (e.kind == simnet::EventKind::Deliver && e.dst == "d")
                times.push_back(e.time_ms);
        return times;
    };
    auto base = exit_times(1.0), congested = exit_times(2.0);
    REQUIRE(base.size() == 4);
    REQUIRE(congested.size() == 4);
    for (size_t i = 1; i < 4; ++i) {
        int64_t g0 = base[i] - base[i - 1];
        int64_t g1 = congested[i] - congested[i - 1];
        CHECK(g1 == 2 * g0);
    }
}

TEST_CASE("real onions traverse the circuit and decrypt at the destination") {
    FlowWorld fw;
    Circuit c{"s", {"r1", "r2", "r3"}, "d"};
    fw.engine.register_circuit("f", c);
    fw.engine.send_onion(fw.w.suite, fw.w.directory, fw.w.keys, "f",
                         to_bytes("secret"));
    fw.sim.run();
    REQUIRE(fw.engine.delivered_messages().size() == 1);
    CHECK(fw.engine.delivered_messages()[0].first == "d");
    CHECK(to_string(fw.engine.delivered_messages()[0].second) == "secret");
}

TEST_CASE("offline hop drops the cells at that hop") {
    simnet::ChurnSchedule churn;
    churn.set("r2", {}); // always offline
    simnet::NetworkTopology t = FlowWorld::topo();
    simnet::Simulator sim(t, churn);
    FlowEngine engine(sim);
    engine.register_circuit("f", Circuit{"s", {"r1", "r2", "r3"}, "d"});
    engine.start_flow("f", {{0, 3}});
    sim.run();
    size_t drops = 0, exit_delivers = 0;
    for (const auto& e : sim.log()) {
        if (e.kind == simnet::EventKind::Drop && e.dst == "r2") ++drops;
        if (e.kind == simnet::EventKind::Deliver && e.dst == "d") ++exit_delivers;
    }
    CHECK(drops == 3);
    CHECK(exit_delivers == 0);
}
