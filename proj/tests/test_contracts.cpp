#include <gtest/gtest.h>

#include <random>

#include "edgechain/contracts.hpp"
#include "edgechain/registry.hpp"

using namespace edgechain;
using namespace edgechain::contracts;
using edgechain::registry::ActivityEvent;
using edgechain::registry::Registry;
using edgechain::registry::Violation;
using nlohmann::json;

namespace {

struct World {
    ledger::Chain chain;
    Engine engine;

    explicit World(Coins reserve = Coins::from_cents(100000))
        : chain(make_chain(reserve)), engine(chain, chain.genesis().miner) {}

    static ledger::Chain make_chain(Coins reserve) {
        ledger::GenesisConfig g;
        g.difficulty_bits = 0;
        g.chain_id = "contracts-test";
        g.initial_accounts = {{g.miner, reserve}, {derive_address("proxy"), Coins{}}};
        return ledger::Chain::init_genesis(g);
    }

    const Address& edge() const { return chain.genesis().miner; }
    void mine() { chain.mine_pending(edge()); }

    std::size_t count(ledger::TxKind kind) const {
        std::size_t n = 0;
        for (const auto& b : chain.blocks()) {
            for (const auto& tx : b.txs) n += tx.kind == kind;
        }
        for (const auto& tx : chain.pending()) n += tx.kind == kind;
        return n;
    }
};

DeviceAttributes attrs(const std::string& name, bool legacy = false) {
    DeviceAttributes a;
    a.account_address = derive_address(name);
    a.network_port = 8080;
    a.io_data_types = {"text"};
    a.cpu_request = {1, 5};
    a.memory_request = {1, 5};
    a.storage_request = {1, 5};
    a.bandwidth_request = {1, 5};
    a.mac_address = "02:00:00:00:00:01";
    a.legacy = legacy;
    a.allowed_destinations = {"edge"};
    return a;
}

ContractCall call(const Address& caller, const Address& contract, std::string fn, json args,
                  Authority auth) {
    return {caller, contract, std::move(fn), std::move(args), auth, 0};
}

}  // namespace

TEST(Deploy, NewContractHasEmptyStorage) {
    World w;
    const Address a = w.engine.deploy(CodeId::RegistrationContract, Authority::EdgeServer, w.edge());
    ASSERT_NE(w.engine.contract(a), nullptr);
    EXPECT_TRUE(w.engine.contract(a)->storage().empty());
    EXPECT_EQ(w.count(ledger::TxKind::Deploy), 1u);
}

TEST(Deploy, RedeployGivesFreshAddressAndStorage) {
    World w;
    const Address a = w.engine.deploy(CodeId::RegistrationContract, Authority::EdgeServer, w.edge());
    const auto dev = attrs("d1");
    ASSERT_TRUE(w.engine
                    .invoke(call(dev.account_address, a, "register", {{"attributes", dev.to_json()}},
                                 Authority::Device))
                    .ok());
    const Address b = w.engine.deploy(CodeId::RegistrationContract, Authority::EdgeServer, w.edge());
    EXPECT_NE(a, b);
    EXPECT_EQ(w.engine.registration()->address(), b);
    EXPECT_TRUE(w.engine.registration()->records().empty());
    ASSERT_EQ(w.engine.retired().size(), 1u);
    EXPECT_EQ(w.engine.retired()[0], a);
}

TEST(Deploy, DeviceAuthorityRejected) {
    World w;
    try {
        w.engine.deploy(CodeId::AllocationContract, Authority::Device, w.edge());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Authorization);
    }
}

TEST(Invoke, RegisterStoresRecordAndEmitsEventOnMining) {
    World w;
    const Address a = w.engine.deploy(CodeId::RegistrationContract, Authority::EdgeServer, w.edge());
    const auto dev = attrs("d1");
    auto r = w.engine.invoke(call(dev.account_address, a, "register", {{"attributes", dev.to_json()}},
                                  Authority::Device));
    ASSERT_TRUE(r.ok());
    EXPECT_NE(w.engine.registration()->find(dev.account_address), nullptr);
    EXPECT_TRUE(w.engine.events({{}, "RegistrationEvent"}).empty()) << "event released before mining";
    w.mine();
    EXPECT_EQ(w.engine.events({{}, "RegistrationEvent"}).size(), 1u);
}

TEST(Invoke, EdgeOnlyFunctionsRejectOtherAuthorities) {
    World w;
    const Address a = w.engine.deploy(CodeId::RegistrationContract, Authority::EdgeServer, w.edge());
    const auto dev = attrs("d1");
    w.engine.invoke(call(dev.account_address, a, "register", {{"attributes", dev.to_json()}}, Authority::Device));
    const json args = {{"address", dev.account_address}, {"priority", 1}, {"credit", 5}, {"blocked", true},
                       {"destinations", json::array()}};
    for (std::string fn : {"activate", "set_priority", "set_credit", "set_blocked", "set_allowed_destinations"}) {
        for (auto auth : {Authority::Device, Authority::Proxy}) {
            try {
                w.engine.invoke(call(dev.account_address, a, fn, args, auth));
                FAIL() << fn;
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::Authorization) << fn;
            }
        }
        EXPECT_TRUE(w.engine.invoke(call(w.edge(), a, fn, args, Authority::EdgeServer)).ok()) << fn;
    }
}

TEST(Invoke, UnknownFunctionAndContract) {
    World w;
    const Address a = w.engine.deploy(CodeId::RegistrationContract, Authority::EdgeServer, w.edge());
    try {
        w.engine.invoke(call(w.edge(), a, "selfdestruct", json::object(), Authority::EdgeServer));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownFunction);
    }
    try {
        w.engine.invoke(call(w.edge(), "0xnowhere", "register", json::object(), Authority::EdgeServer));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownContract);
    }
}

TEST(Invoke, RejectedCallLeavesStorageUnchanged) {
    World w;
    const Address a = w.engine.deploy(CodeId::RegistrationContract, Authority::EdgeServer, w.edge());
    const auto dev = attrs("d1");
    w.engine.invoke(call(dev.account_address, a, "register", {{"attributes", dev.to_json()}}, Authority::Device));
    const json before = w.engine.snapshot()["contracts"];
    auto r = w.engine.invoke(
        call(w.edge(), a, "set_priority", {{"address", dev.account_address}, {"priority", 9}}, Authority::EdgeServer));
    EXPECT_FALSE(r.ok());
    EXPECT_EQ(w.engine.snapshot()["contracts"], before);
}

TEST(Coins, MintChargeRefund) {
    World w;
    const Address d = derive_address("dev");
    EXPECT_EQ(w.engine.mint(d, Coins::parse("200.00"), Authority::EdgeServer).ok(), true);
    EXPECT_EQ(w.engine.balance(d).to_string(), "200.00");
    EXPECT_TRUE(w.engine.charge(d, Coins::parse("10.00"), Authority::EdgeServer).ok());
    EXPECT_EQ(w.engine.balance(d).to_string(), "190.00");
    EXPECT_TRUE(w.engine.charge(d, Coins::parse("29.49"), Authority::EdgeServer).ok());
    EXPECT_EQ(w.engine.balance(d).to_string(), "160.51");
    EXPECT_TRUE(w.engine.refund(d, Coins::parse("0.49"), Authority::EdgeServer).ok());
    EXPECT_EQ(w.engine.balance(d).to_string(), "161.00");
}

TEST(Coins, ChargeFromFreshBalance) {
    World w;
    const Address d = derive_address("dev");
    w.engine.mint(d, Coins::parse("200.00"), Authority::EdgeServer);
    w.engine.charge(d, Coins::parse("29.49"), Authority::EdgeServer);
    EXPECT_EQ(w.engine.balance(d).to_string(), "170.51");
}

TEST(Coins, OverdraftRejectedAndRecorded) {
    World w;
    const Address d = derive_address("dev");
    w.engine.mint(d, Coins::parse("200.00"), Authority::EdgeServer);
    auto r = w.engine.charge(d, Coins::parse("300.00"), Authority::EdgeServer);
    EXPECT_FALSE(r.ok());
    EXPECT_EQ(w.engine.balance(d).to_string(), "200.00");
    EXPECT_EQ(w.count(ledger::TxKind::CoinTransfer), 2u);
}

TEST(Coins, DeviceCannotMoveCoins) {
    World w;
    EXPECT_THROW(w.engine.mint(derive_address("dev"), Coins::from_cents(1), Authority::Device), Error);
    EXPECT_THROW(w.engine.charge(derive_address("dev"), Coins::from_cents(1), Authority::Proxy), Error);
}

TEST(Coins, RoundingIsHalfEven) {
    EXPECT_EQ(Coins::from_double(0.125).cents(), 12);
    EXPECT_EQ(Coins::from_double(0.135).cents(), 14);
    EXPECT_EQ(Coins::from_double(29.492165817611536689).to_string(), "29.49");
}

TEST(Events, WatchersSeeEventsInOrderAndFanOut) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    const Address alloc = w.engine.deploy(CodeId::AllocationContract, Authority::EdgeServer, w.edge());
    const auto dev = attrs("d1");
    reg.register_device(dev, Authority::Device, dev.account_address, 2);
    std::vector<std::string> a, b;
    w.engine.watch({alloc, "AllocationAccepted"}, [&](const Event& e) { a.push_back(e.payload["request_id"]); });
    w.engine.watch({{}, "AllocationAccepted"}, [&](const Event& e) { b.push_back(e.payload["request_id"]); });
    for (std::string id : {"r1", "r2", "r3"}) {
        json req = {{"request_id", id},        {"device", dev.account_address},
                    {"demand", {"1", "1", "1", "1"}}, {"priority", 2},
                    {"lifetime", 1},           {"arrival", 0}};
        ASSERT_TRUE(w.engine.invoke(call(dev.account_address, alloc, "submit_request", req, Authority::Device)).ok());
        ASSERT_TRUE(w.engine
                        .invoke(call(w.edge(), alloc, "decide",
                                     {{"request_id", id}, {"verdict", "Accept"}, {"price", "1.00"}, {"reason", "None"}},
                                     Authority::EdgeServer))
                        .ok());
        if (id == "r2") w.mine();
    }
    w.mine();
    EXPECT_EQ(a, (std::vector<std::string>{"r1", "r2", "r3"}));
    EXPECT_EQ(b, a);
    EXPECT_EQ(w.engine.events({{}, "AllocationAccepted"}).size(), 3u);
}

TEST(Events, EmptyChainHasNone) {
    World w;
    EXPECT_TRUE(w.engine.events().empty());
}

TEST(Allocation, SecondDecisionRejected) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    const Address alloc = w.engine.deploy(CodeId::AllocationContract, Authority::EdgeServer, w.edge());
    const auto dev = attrs("d1");
    reg.register_device(dev, Authority::Device, dev.account_address);
    json req = {{"request_id", "r"}, {"device", dev.account_address}, {"demand", {"1", "1", "1", "1"}},
                {"priority", 4}, {"lifetime", 1}, {"arrival", 0}};
    w.engine.invoke(call(dev.account_address, alloc, "submit_request", req, Authority::Device));
    json d = {{"request_id", "r"}, {"verdict", "Deny"}, {"price", ""}, {"reason", "Infeasible"}};
    EXPECT_TRUE(w.engine.invoke(call(w.edge(), alloc, "decide", d, Authority::EdgeServer)).ok());
    EXPECT_FALSE(w.engine.invoke(call(w.edge(), alloc, "decide", d, Authority::EdgeServer)).ok());
    EXPECT_FALSE(w.engine
                     .invoke(call(w.edge(), alloc, "release", {{"request_id", "r"}, {"refund", "0.00"}},
                                  Authority::EdgeServer))
                     .ok());
    EXPECT_FALSE(w.engine.invoke(call(dev.account_address, alloc, "submit_request", req, Authority::Device)).ok());
}

// -------------------------------------------------------------- registry

TEST(Registry, NonLegacyRegistrationDefaults) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    const auto dev = attrs("d1");
    const auto rec = reg.register_device(dev, Authority::Device, dev.account_address);
    EXPECT_EQ(rec.credit, 100);
    EXPECT_EQ(rec.coin_balance.to_string(), "200.00");
    EXPECT_EQ(rec.priority, 4);
    EXPECT_TRUE(rec.is_registered);
    EXPECT_FALSE(rec.is_blocked);
    EXPECT_EQ(w.count(ledger::TxKind::Register), 1u);
}

TEST(Registry, DuplicateAndMalformed) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    const auto dev = attrs("d1");
    reg.register_device(dev, Authority::Device, dev.account_address);
    try {
        reg.register_device(dev, Authority::Device, dev.account_address);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Duplicate);
    }
    auto bad = attrs("d2");
    bad.cpu_request = {5, 1};
    try {
        reg.register_device(bad, Authority::Device, bad.account_address);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
    }
}

TEST(Registry, LegacyViaProxyHasSameShape) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    auto plain = attrs("twin");
    const auto a = reg.register_device(plain, Authority::Device, plain.account_address, 3);
    auto legacy = attrs("twin-legacy", true);
    const auto b = reg.register_device(legacy, Authority::Proxy, reg.proxy(), 3);
    auto ja = a.to_json(), jb = b.to_json();
    ja["attributes"].erase("legacy");
    jb["attributes"].erase("legacy");
    ja["attributes"].erase("account_address");
    jb["attributes"].erase("account_address");
    EXPECT_EQ(ja, jb);
    EXPECT_TRUE(b.attributes.legacy);
    EXPECT_THROW(reg.register_device(attrs("x", true), Authority::Device, derive_address("x")), Error);
}

TEST(Registry, ProxyRegistersUnknownDeviceAndLogsEvents) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    std::vector<ActivityEvent> evs;
    for (int i = 0; i < 5; ++i) evs.push_back({derive_address("cam"), 554, "edge", 100, i});
    auto rep = reg.proxy_observe(evs);
    EXPECT_EQ(rep.registrations, 1u);
    EXPECT_EQ(rep.activity_logs, 5u);
    EXPECT_EQ(w.count(ledger::TxKind::ActivityLog), 5u);
    EXPECT_TRUE(reg.get(derive_address("cam")).attributes.legacy);
}

TEST(Registry, BlockedDeviceEventsDropped) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    const Address cam = derive_address("cam");
    reg.proxy_observe(std::vector<ActivityEvent>{{cam, 554, "edge", 1, 0}});
    reg.set_blocked(cam, true, Authority::EdgeServer);
    const auto before = w.count(ledger::TxKind::ActivityLog);
    std::vector<ActivityEvent> evs(4, ActivityEvent{cam, 554, "edge", 1, 1});
    auto rep = reg.proxy_observe(evs);
    EXPECT_EQ(rep.blocked_drops, 4u);
    EXPECT_EQ(rep.activity_logs, 0u);
    EXPECT_EQ(w.count(ledger::TxKind::ActivityLog), before);
}

TEST(Registry, EmptyStreamWritesNothing) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    const auto pending = w.chain.pending().size();
    auto rep = reg.proxy_observe({});
    EXPECT_EQ(rep.registrations + rep.activity_logs + rep.malformed, 0u);
    EXPECT_EQ(w.chain.pending().size(), pending);
}

TEST(Registry, MalformedActivityCountedAndSkipped) {
    EXPECT_FALSE(registry::parse_activity_line("a,b,c").has_value());
    EXPECT_FALSE(registry::parse_activity_line("dev,notaport,edge,1,0").has_value());
    auto ok = registry::parse_activity_line("dev,80,edge,10,3");
    ASSERT_TRUE(ok.has_value());
    EXPECT_EQ(registry::format_activity_line(*ok), "dev,80,edge,10,3");

    World w;
    Registry reg(w.engine, derive_address("proxy"));
    std::vector<ActivityEvent> evs{{"", 1, "edge", 1, 0}, {derive_address("cam"), 80, "edge", 1, 5},
                                   {derive_address("cam"), 80, "edge", 1, 4}};
    auto rep = reg.proxy_observe(evs);
    EXPECT_EQ(rep.malformed, 2u);
    EXPECT_EQ(rep.activity_logs, 1u);
}

TEST(Registry, MatchSpec) {
    World w;
    Registry reg(w.engine, derive_address("proxy"), {.learning_window = 0});
    const auto dev = attrs("d1");
    reg.register_device(dev, Authority::Device, dev.account_address);
    const Address a = dev.account_address;
    EXPECT_TRUE(reg.match_spec(a, {a, 8080, "edge", 1, 1}).empty());
    EXPECT_EQ(reg.match_spec(a, {a, 23, "edge", 1, 1}), std::vector<Violation>{Violation::WrongPort});
    EXPECT_EQ(reg.match_spec(a, {a, 8080, "10.6.6.6", 1, 1}), std::vector<Violation>{Violation::UnknownDestination});
    EXPECT_EQ(reg.match_spec(a, {a, 23, "10.6.6.6", 1, 1}),
              (std::vector<Violation>{Violation::WrongPort, Violation::UnknownDestination}));
    try {
        reg.match_spec(derive_address("ghost"), {a, 1, "edge", 1, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownDevice);
    }
}

TEST(Registry, LearningWindowAddsDestinations) {
    World w;
    Registry reg(w.engine, derive_address("proxy"), {.learning_window = 5});
    const Address cam = derive_address("cam");
    std::vector<ActivityEvent> evs{{cam, 554, "cloud", 1, 0}, {cam, 554, "cloud", 1, 6}, {cam, 554, "evil", 1, 7}};
    std::vector<std::size_t> counts;
    reg.proxy_observe(evs, [&](const registry::ObservedActivity& o) { counts.push_back(o.violations.size()); });
    EXPECT_EQ(counts, (std::vector<std::size_t>{0, 0, 1}));
}

TEST(Registry, BlockUnblockAuthority) {
    World w;
    Registry reg(w.engine, derive_address("proxy"));
    const auto dev = attrs("d1");
    reg.register_device(dev, Authority::Device, dev.account_address);
    EXPECT_TRUE(reg.set_blocked(dev.account_address, true, Authority::EdgeServer).is_blocked);
    EXPECT_FALSE(reg.set_blocked(dev.account_address, false, Authority::EdgeServer).is_blocked);
    EXPECT_THROW(reg.set_blocked(dev.account_address, true, Authority::Device), Error);
}

TEST(RegistryProperty, StarredFieldsImmuneToDeviceAuthority) {
    std::mt19937_64 rng(21);
    const char* fns[] = {"activate", "set_priority", "set_credit", "set_blocked", "set_allowed_destinations",
                         "register"};
    for (int trial = 0; trial < 100; ++trial) {
        World w;
        Registry reg(w.engine, derive_address("proxy"));
        const auto dev = attrs("d" + std::to_string(trial));
        reg.register_device(dev, Authority::Device, dev.account_address, 2);
        const auto before = reg.get(dev.account_address);
        for (int k = 0; k < 100; ++k) {
            const char* fn = fns[rng() % std::size(fns)];
            json args = {{"address", dev.account_address},
                         {"priority", int(rng() % 6)},
                         {"credit", int(rng() % 200)},
                         {"blocked", bool(rng() % 2)},
                         {"destinations", {"x"}},
                         {"attributes", attrs("d" + std::to_string(trial)).to_json()}};
            try {
                w.engine.invoke(call(dev.account_address, reg.contract_address(), fn, args, Authority::Device));
            } catch (const Error&) {
            }
            if (rng() % 3 == 0) {
                try {
                    w.engine.mint(dev.account_address, Coins::from_cents(1), Authority::Device);
                } catch (const Error&) {
                }
            }
        }
        ASSERT_EQ(reg.get(dev.account_address), before);
    }
}

TEST(EngineProperty, ReplayReproducesState) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        World w(Coins::from_cents(1000000));
        Registry reg(w.engine, derive_address("proxy"));
        w.engine.deploy(CodeId::AllocationContract, Authority::EdgeServer, w.edge());
        std::vector<Address> devs;
        for (int i = 0; i < 5; ++i) {
            const auto a = attrs("t" + std::to_string(trial) + "d" + std::to_string(i));
            reg.register_device(a, Authority::Device, a.account_address, 1 + i % 4);
            devs.push_back(a.account_address);
        }
        for (int k = 0; k < 200; ++k) {
            const Address& d = devs[rng() % devs.size()];
            const Coins amt = Coins::from_cents(static_cast<std::int64_t>(rng() % 5000));
            switch (rng() % 4) {
                case 0: w.engine.charge(d, amt, Authority::EdgeServer, k); break;
                case 1: w.engine.refund(d, amt, Authority::EdgeServer, k); break;
                case 2: reg.set_credit(d, int(rng() % 101), Authority::EdgeServer, k); break;
                default: reg.proxy_observe(std::vector<ActivityEvent>{{derive_address("leg" + std::to_string(rng() % 3)), 80, "edge", 1, k}});
            }
            if (rng() % 10 == 0) w.mine();
        }
        w.mine();
        ASSERT_TRUE(w.chain.validate().valid);
        auto replayed = Engine::replay(w.chain);
        ASSERT_EQ(replayed->snapshot(), w.engine.snapshot());
        ASSERT_EQ(w.engine.total_coins(), w.engine.total_minted());
    }
}
