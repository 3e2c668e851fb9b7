#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <sstream>

#include "edgechain/ledger.hpp"

using namespace edgechain;
using namespace edgechain::ledger;
using nlohmann::json;

namespace {

GenesisConfig cfg(int bits = 8) {
    GenesisConfig g;
    g.difficulty_bits = bits;
    g.chain_id = "test-chain";
    g.initial_accounts = {{derive_address("proxy"), Coins{}}};
    return g;
}

Transaction reg_tx(const std::string& name, Timeslot t = 0) {
    return Transaction::make(derive_address(name), TxKind::Register, {{"device", name}}, t);
}

Chain chain_with_blocks(int blocks, int bits = 4) {
    Chain c = Chain::init_genesis(cfg(bits));
    for (int b = 0; b < blocks; ++b) {
        c.submit(reg_tx("dev" + std::to_string(b), b));
        c.submit(Transaction::make(c.genesis().miner, TxKind::Invoke, {{"n", b}}, b));
        c.mine_pending(c.genesis().miner);
    }
    return c;
}

}  // namespace

TEST(Genesis, ZeroDifficultyAcceptsFirstNonce) {
    Chain c = Chain::init_genesis(cfg(0));
    EXPECT_EQ(c.length(), 1u);
    EXPECT_EQ(c.tip().nonce, 0u);
    EXPECT_TRUE(c.tip().prev_hash.is_zero());
}

TEST(Genesis, IdenticalConfigsGiveIdenticalGenesis) {
    Chain a = Chain::init_genesis(cfg());
    Chain b = Chain::init_genesis(cfg());
    EXPECT_EQ(a.tip().block_hash, b.tip().block_hash);
    EXPECT_GE(a.tip().block_hash.leading_zero_bits(), 8);
}

TEST(Genesis, DefaultDifficultyMinesQuickly) {
    GenesisConfig g;  // 12 bits
    EXPECT_EQ(g.difficulty_bits, 12);
    auto start = std::chrono::steady_clock::now();
    Chain c = Chain::init_genesis(g);
    for (int i = 0; i < 5; ++i) {
        c.submit(Transaction::make(g.miner, TxKind::Invoke, {{"i", i}}, i));
        c.mine_pending(g.miner);
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(secs / 6, 1.0);
    EXPECT_TRUE(c.validate().valid);
}

TEST(Genesis, RejectsInvalidConfig) {
    auto g = cfg();
    g.difficulty_bits = 33;
    EXPECT_THROW(Chain::init_genesis(g), Error);
    g.difficulty_bits = -1;
    try {
        Chain::init_genesis(g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
    g = cfg();
    g.chain_id.clear();
    EXPECT_THROW(Chain::init_genesis(g), Error);
}

TEST(Submit, RegisterGrowsPool) {
    Chain c = Chain::init_genesis(cfg());
    auto r = c.submit(reg_tx("a"));
    EXPECT_EQ(r.pool_size, 1u);
}

TEST(Submit, DuplicateIsRejectedOnce) {
    Chain c = Chain::init_genesis(cfg());
    auto tx = reg_tx("a");
    c.submit(tx);
    try {
        c.submit(tx);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DuplicateTransaction);
    }
    EXPECT_EQ(c.pending().size(), 1u);
    c.mine_pending(c.genesis().miner);
    EXPECT_THROW(c.submit(tx), Error);  // already confirmed
}

TEST(Submit, UnknownSenderOnlyMayRegister) {
    const TxKind kinds[] = {TxKind::Genesis, TxKind::Register, TxKind::ResourceRequest,
                            TxKind::AdmissionDecision, TxKind::CoinTransfer, TxKind::CreditUpdate,
                            TxKind::ActivityLog, TxKind::BlockDevice, TxKind::Deploy,
                            TxKind::Invoke};
    for (TxKind k : kinds) {
        Chain c = Chain::init_genesis(cfg(0));
        auto tx = Transaction::make(derive_address("stranger"), k, {{"x", 1}}, 0);
        if (k == TxKind::Register) {
            EXPECT_NO_THROW(c.submit(tx));
        } else {
            try {
                c.submit(tx);
                ADD_FAILURE() << to_string(k);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::UnknownSender);
            }
            EXPECT_TRUE(c.pending().empty());
        }
    }
}

TEST(Submit, RegisteredSenderMayRequest) {
    Chain c = Chain::init_genesis(cfg(0));
    c.submit(reg_tx("a"));
    EXPECT_NO_THROW(c.submit(Transaction::make(derive_address("a"), TxKind::ResourceRequest, {{"r", 1}}, 1)));
}

TEST(Mine, EmptyPoolIsNoop) {
    Chain c = Chain::init_genesis(cfg());
    EXPECT_FALSE(c.mine_pending(c.genesis().miner).has_value());
    EXPECT_EQ(c.length(), 1u);
}

TEST(Mine, PacksAllPending) {
    Chain c = Chain::init_genesis(cfg());
    for (int i = 0; i < 3; ++i) c.submit(reg_tx("d" + std::to_string(i)));
    auto b = c.mine_pending(c.genesis().miner);
    ASSERT_TRUE(b);
    EXPECT_EQ(b->txs.size(), 3u);
    EXPECT_TRUE(c.pending().empty());
}

TEST(Mine, RespectsBlockCap) {
    Chain c = Chain::init_genesis(cfg(0));
    for (int i = 0; i < 500; ++i) c.submit(reg_tx("d" + std::to_string(i)));
    std::vector<std::size_t> sizes;
    while (auto b = c.mine_pending(c.genesis().miner)) sizes.push_back(b->txs.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{208, 208, 84}));
    EXPECT_TRUE(c.validate().valid);
}

TEST(Mine, OnlyMinerMayMine) {
    Chain c = Chain::init_genesis(cfg());
    c.submit(reg_tx("a"));
    try {
        c.mine_pending(derive_address("a"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Authorization);
    }
    EXPECT_EQ(c.pending().size(), 1u);
}

TEST(Validate, FreshChainAndGenesisOnly) {
    EXPECT_TRUE(chain_with_blocks(10).validate().valid);
    EXPECT_TRUE(chain_with_blocks(0).validate().valid);
}

TEST(Validate, TamperedPayloadIsLocated) {
    Chain c = chain_with_blocks(10);
    std::stringstream ss;
    c.write(ss);
    std::vector<Block> blocks;
    std::string line;
    while (std::getline(ss, line)) blocks.push_back(Block::from_json(json::parse(line)));
    blocks[4].txs[0].payload = R"({"device":"evil"})";
    auto v = Chain::from_blocks(blocks).validate();
    EXPECT_FALSE(v.valid);
    ASSERT_TRUE(v.first_bad_height);
    EXPECT_EQ(*v.first_bad_height, 4u);
}

TEST(Validate, BrokenLinkIsLocated) {
    Chain c = chain_with_blocks(6);
    auto blocks = c.blocks();
    blocks[3].prev_hash.bytes[0] ^= 1;
    auto v = Chain::from_blocks(blocks).validate();
    EXPECT_FALSE(v.valid);
    EXPECT_EQ(*v.first_bad_height, 3u);
}

TEST(Persist, WriteReadRoundTrip) {
    Chain c = chain_with_blocks(5);
    std::stringstream ss;
    c.write(ss);
    const std::string first = ss.str();
    Chain back = Chain::read(ss);
    EXPECT_TRUE(back.validate().valid);
    std::stringstream again;
    back.write(again);
    EXPECT_EQ(first, again.str());
}

TEST(Persist, EmptyFileIsAnError) {
    std::stringstream ss;
    EXPECT_THROW(Chain::read(ss), Error);
}

TEST(Determinism, IdenticalInputsGiveIdenticalChains) {
    std::stringstream a, b;
    chain_with_blocks(8, 8).write(a);
    chain_with_blocks(8, 8).write(b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Sync, TransfersMissingBlocks) {
    Chain full = chain_with_blocks(5);
    const auto miner = full.genesis().miner;
    Node server(miner, NodeRole::FullMiner, full);
    Node light(derive_address("pi"), NodeRole::LightClient, Chain::init_genesis(cfg(4)),
               {{miner, "10.0.0.1:30303"}});
    EXPECT_EQ(sync_node(light, server), 5u);
    EXPECT_EQ(sync_node(light, server), 0u);
    std::stringstream a, b;
    light.chain().write(a);
    server.chain().write(b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Sync, RefusesUnlistedPeer) {
    Chain full = chain_with_blocks(2);
    Node server(full.genesis().miner, NodeRole::FullMiner, full);
    Node light(derive_address("pi"), NodeRole::LightClient, Chain::init_genesis(cfg(4)));
    try {
        sync_node(light, server);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotWhitelisted);
    }
    EXPECT_EQ(light.chain().length(), 1u);
}

TEST(Sync, RefusesForeignGenesis) {
    Chain full = chain_with_blocks(2);
    Node server(full.genesis().miner, NodeRole::FullMiner, full);
    auto other = cfg(4);
    other.chain_id = "other";
    Node light(derive_address("pi"), NodeRole::LightClient, Chain::init_genesis(other),
               {{server.address(), ""}});
    EXPECT_THROW(sync_node(light, server), Error);
}

TEST(Roles, LightClientCannotMine) {
    Node light(derive_address("pi"), NodeRole::LightClient, Chain::init_genesis(cfg(0)));
    EXPECT_THROW(light.mine_pending(), Error);
    EXPECT_THROW(Node(derive_address("pi"), NodeRole::FullMiner, Chain::init_genesis(cfg(0))), Error);
}

TEST(TamperProperty, StructuralMutationsAreLocated) {
    const Chain base = chain_with_blocks(12, 2);
    std::mt19937_64 rng(41);
    for (int i = 0; i < 10000; ++i) {
        auto blocks = base.blocks();
        const std::size_t h = 1 + rng() % (blocks.size() - 1);
        Block& b = blocks[h];
        Transaction& tx = b.txs[rng() % b.txs.size()];
        switch (rng() % 9) {
            case 0: tx.payload += " "; break;
            case 1: tx.timestamp += 1 + static_cast<Timeslot>(rng() % 5); break;
            case 2: tx.sender = derive_address("mallory"); break;
            case 3: tx.tx_id.bytes[rng() % 32] ^= static_cast<std::uint8_t>(1 + rng() % 255); break;
            case 4: tx.signature.bytes[rng() % 32] ^= static_cast<std::uint8_t>(1 + rng() % 255); break;
            case 5: b.nonce ^= 1ull << (rng() % 20); break;
            case 6: b.prev_hash.bytes[rng() % 32] ^= static_cast<std::uint8_t>(1 + rng() % 255); break;
            case 7: b.block_hash.bytes[rng() % 32] ^= static_cast<std::uint8_t>(1 + rng() % 255); break;
            default: std::swap(b.txs.front(), b.txs.back()); break;
        }
        const auto v = Chain::from_blocks(blocks).validate();
        ASSERT_FALSE(v.valid) << "case " << i;
        ASSERT_TRUE(v.first_bad_height);
        ASSERT_EQ(*v.first_bad_height, h) << "case " << i << ": " << v.reason;
    }
}

TEST(TamperProperty, SerializedByteFlipsAreDetected) {
    std::stringstream ss;
    chain_with_blocks(6, 2).write(ss);
    const std::string text = ss.str();
    std::mt19937_64 rng(42);
    for (int i = 0; i < 10000; ++i) {
        std::string bad = text;
        std::size_t pos = rng() % bad.size();
        while (bad[pos] == '\n') pos = rng() % bad.size();
        bad[pos] = static_cast<char>(bad[pos] ^ (1 << (rng() % 7)));
        std::stringstream in(bad);
        bool detected = false;
        try {
            detected = !Chain::read(in).validate().valid;
        } catch (const std::exception&) {
            detected = true;
        }
        ASSERT_TRUE(detected) << "flip at " << pos << " ('" << text[pos] << "' -> '" << bad[pos] << "')";
    }
}
