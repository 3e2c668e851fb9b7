#include "edgechain/ledger.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace edgechain::ledger {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<TxKind, const char*>, 10> kKindNames = {{
    {TxKind::Genesis, "Genesis"},
    {TxKind::Register, "Register"},
    {TxKind::ResourceRequest, "ResourceRequest"},
    {TxKind::AdmissionDecision, "AdmissionDecision"},
    {TxKind::CoinTransfer, "CoinTransfer"},
    {TxKind::CreditUpdate, "CreditUpdate"},
    {TxKind::ActivityLog, "ActivityLog"},
    {TxKind::BlockDevice, "BlockDevice"},
    {TxKind::Deploy, "Deploy"},
    {TxKind::Invoke, "Invoke"},
}};

void put_u64(std::array<std::uint8_t, 8>& out, std::uint64_t v) {
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v & 0xff);
        v >>= 8;
    }
}

std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Digest of the fixed header fields; the nonce is hashed on top of it so
// every nonce trial is a single compression.
Hash256 header_digest(const Block& b) {
    std::array<std::uint8_t, 8> h{};
    put_u64(h, b.height);
    Sha256 ctx;
    ctx.update(h).update(b.prev_hash.bytes).update(b.tx_root().bytes).update(as_bytes(b.miner));
    return ctx.finish();
}

Hash256 header_hash(const Hash256& digest, std::uint64_t nonce) {
    std::array<std::uint8_t, 40> buf{};
    std::copy(digest.bytes.begin(), digest.bytes.end(), buf.begin());
    std::array<std::uint8_t, 8> n{};
    put_u64(n, nonce);
    std::copy(n.begin(), n.end(), buf.begin() + 32);
    return sha256(std::span<const std::uint8_t>(buf));
}

json parse_line(const std::string& line, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord,
                    "chain record " + std::to_string(lineno) + ": " + e.what());
    }
}

}  // namespace

const char* to_string(TxKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "?";
}

TxKind tx_kind_from_string(std::string_view s) {
    for (const auto& [k, name] : kKindNames) {
        if (s == name) return k;
    }
    throw Error(ErrorCode::MalformedRecord, "unknown transaction kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- Transaction

Transaction Transaction::make(Address sender, TxKind kind, const json& payload, Timeslot timestamp) {
    Transaction tx;
    tx.sender = std::move(sender);
    tx.kind = kind;
    tx.payload = payload.dump();
    tx.timestamp = timestamp;
    tx.signature = tx.expected_signature();
    tx.tx_id = tx.compute_id();
    return tx;
}

Hash256 Transaction::expected_signature() const {
    Sha256 ctx;
    ctx.update(sender).update(std::string_view("\x1f", 1)).update(payload);
    return ctx.finish();
}

Hash256 Transaction::compute_id() const {
    // Length-prefixed fields, so no two field tuples share an encoding.
    Sha256 ctx;
    auto field = [&ctx](std::string_view bytes) {
        std::uint8_t len[8];
        for (int i = 0; i < 8; ++i) len[i] = static_cast<std::uint8_t>(bytes.size() >> (56 - 8 * i));
        ctx.update(std::span<const std::uint8_t>(len, 8)).update(bytes);
    };
    field(to_string(kind));
    field(payload);
    field(sender);
    field(std::string_view(reinterpret_cast<const char*>(signature.bytes.data()), signature.bytes.size()));
    field(std::to_string(timestamp));
    return ctx.finish();
}

bool Transaction::verifies() const {
    return signature == expected_signature() && tx_id == compute_id();
}

json Transaction::to_json() const {
    return {{"kind", to_string(kind)},
            {"payload", json::parse(payload)},
            {"sender", sender},
            {"signature", signature.hex()},
            {"timestamp", timestamp},
            {"tx_id", tx_id.hex()}};
}

Transaction Transaction::from_json(const json& j) {
    try {
        Transaction tx;
        tx.kind = tx_kind_from_string(j.at("kind").get<std::string>());
        const auto& payload = j.at("payload");
        if (!payload.is_object()) {
            throw Error(ErrorCode::MalformedRecord, "transaction payload must be an object");
        }
        tx.payload = payload.dump();
        tx.sender = j.at("sender").get<std::string>();
        tx.signature = Hash256::from_hex(j.at("signature").get<std::string>());
        tx.timestamp = j.at("timestamp").get<Timeslot>();
        tx.tx_id = Hash256::from_hex(j.at("tx_id").get<std::string>());
        if (j.size() != 6) throw Error(ErrorCode::MalformedRecord, "unexpected transaction fields");
        return tx;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, std::string("transaction: ") + e.what());
    }
}

// -------------------------------------------------------------- GenesisConfig

void GenesisConfig::validate() const {
    if (difficulty_bits < 0 || difficulty_bits > 32) {
        throw Error(ErrorCode::Config,
                    "difficulty_bits must be within [0, 32], got " + std::to_string(difficulty_bits));
    }
    if (chain_id.empty()) throw Error(ErrorCode::Config, "chain_id must not be empty");
    if (miner.empty()) throw Error(ErrorCode::Config, "miner address must not be empty");
    if (max_block_txs == 0) throw Error(ErrorCode::Config, "max_block_txs must be positive");
    for (const auto& [addr, coins] : initial_accounts) {
        if (coins < Coins{}) {
            throw Error(ErrorCode::Config, "initial balance of " + addr + " is negative");
        }
    }
}

json GenesisConfig::to_json() const {
    json accounts = json::array();
    for (const auto& [addr, coins] : initial_accounts) {
        accounts.push_back({{"address", addr}, {"balance", coins.to_string()}});
    }
    return {{"chain_id", chain_id},
            {"difficulty_bits", difficulty_bits},
            {"initial_accounts", accounts},
            {"max_block_txs", max_block_txs},
            {"miner", miner},
            {"timestamp", timestamp}};
}

GenesisConfig GenesisConfig::from_json(const json& j) {
    try {
        GenesisConfig g;
        g.chain_id = j.at("chain_id").get<std::string>();
        g.difficulty_bits = j.at("difficulty_bits").get<int>();
        g.max_block_txs = j.at("max_block_txs").get<std::size_t>();
        g.miner = j.at("miner").get<std::string>();
        g.timestamp = j.at("timestamp").get<Timeslot>();
        for (const auto& a : j.at("initial_accounts")) {
            g.initial_accounts.emplace_back(a.at("address").get<std::string>(),
                                            Coins::parse(a.at("balance").get<std::string>()));
        }
        return g;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, std::string("genesis config: ") + e.what());
    }
}

// ---------------------------------------------------------------------- Block

Hash256 Block::tx_root() const {
    Sha256 ctx;
    for (const auto& tx : txs) ctx.update(tx.tx_id.bytes);
    return ctx.finish();
}

Hash256 Block::compute_hash() const { return header_hash(header_digest(*this), nonce); }

json Block::to_json() const {
    json txs_json = json::array();
    for (const auto& tx : txs) txs_json.push_back(tx.to_json());
    return {{"block_hash", block_hash.hex()},
            {"height", height},
            {"miner", miner},
            {"nonce", nonce},
            {"prev_hash", prev_hash.hex()},
            {"txs", std::move(txs_json)}};
}

Block Block::from_json(const json& j) {
    try {
        Block b;
        b.block_hash = Hash256::from_hex(j.at("block_hash").get<std::string>());
        b.height = j.at("height").get<std::uint64_t>();
        b.miner = j.at("miner").get<std::string>();
        b.nonce = j.at("nonce").get<std::uint64_t>();
        b.prev_hash = Hash256::from_hex(j.at("prev_hash").get<std::string>());
        for (const auto& t : j.at("txs")) b.txs.push_back(Transaction::from_json(t));
        if (j.size() != 6) throw Error(ErrorCode::MalformedRecord, "unexpected block fields");
        return b;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, std::string("block: ") + e.what());
    }
}

std::string Block::serialize() const { return to_json().dump(); }

void mine_block(Block& block, int difficulty_bits) {
    const Hash256 digest = header_digest(block);
    for (std::uint64_t nonce = 0;; ++nonce) {
        Hash256 h = header_hash(digest, nonce);
        if (h.leading_zero_bits() >= difficulty_bits) {
            block.nonce = nonce;
            block.block_hash = h;
            return;
        }
    }
}

std::string check_block(const Block& block, const Block* prev, const GenesisConfig& genesis) {
    const std::uint64_t expected_height = prev ? prev->height + 1 : 0;
    if (block.height != expected_height) return "unexpected height";
    if (prev == nullptr) {
        if (!block.prev_hash.is_zero()) return "genesis prev_hash must be zero";
    } else {
        if (block.prev_hash.is_zero()) return "non-genesis block with zero prev_hash";
        if (block.prev_hash != prev->block_hash) return "prev_hash does not link to predecessor";
    }
    if (block.miner != genesis.miner) return "block mined by unauthorized address";
    if (block.txs.size() > genesis.max_block_txs) return "block exceeds transaction cap";
    for (const auto& tx : block.txs) {
        if (!tx.verifies()) return "transaction " + tx.tx_id.hex() + " does not verify";
    }
    if (block.compute_hash() != block.block_hash) return "block hash mismatch";
    if (block.block_hash.leading_zero_bits() < genesis.difficulty_bits) {
        return "insufficient proof of work";
    }
    return {};
}

// ---------------------------------------------------------------------- Chain

Chain Chain::init_genesis(const GenesisConfig& config) {
    config.validate();
    Chain chain(config);
    Block genesis;
    genesis.height = 0;
    genesis.miner = config.miner;
    genesis.txs.push_back(
        Transaction::make(config.miner, TxKind::Genesis, config.to_json(), config.timestamp));
    mine_block(genesis, config.difficulty_bits);
    chain.blocks_.push_back(genesis);
    chain.index_block(chain.blocks_.back());
    return chain;
}

Chain Chain::from_blocks(std::vector<Block> blocks) {
    if (blocks.empty()) throw Error(ErrorCode::MalformedRecord, "chain has no genesis block");
    const Block& g = blocks.front();
    if (g.txs.empty() || g.txs.front().kind != TxKind::Genesis) {
        throw Error(ErrorCode::MalformedRecord, "first block does not carry a genesis record");
    }
    Chain chain(GenesisConfig::from_json(g.txs.front().payload_json()));
    chain.blocks_ = std::move(blocks);
    for (const auto& b : chain.blocks_) chain.index_block(b);
    return chain;
}

void Chain::index_block(const Block& block) {
    if (block.height == 0) {
        known_senders_.insert(genesis_.miner);
        for (const auto& [addr, coins] : genesis_.initial_accounts) known_senders_.insert(addr);
    }
    for (const auto& tx : block.txs) {
        confirmed_ids_.insert(tx.tx_id.hex());
        if (tx.kind == TxKind::Register) known_senders_.insert(tx.sender);
    }
}

std::size_t Chain::total_transactions() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.txs.size();
    return n;
}

void Chain::check_submittable(const Transaction& tx) const {
    if (tx.kind != TxKind::Register && !known_senders_.contains(tx.sender)) {
        throw Error(ErrorCode::UnknownSender,
                    std::string(to_string(tx.kind)) + " from unregistered sender " + tx.sender);
    }
    const std::string id = tx.tx_id.hex();
    if (pending_ids_.contains(id) || confirmed_ids_.contains(id)) {
        throw Error(ErrorCode::DuplicateTransaction, "duplicate transaction " + id);
    }
    if (!tx.verifies()) {
        throw Error(ErrorCode::MalformedRecord, "transaction " + id + " does not verify");
    }
}

SubmitReceipt Chain::submit(Transaction tx) {
    check_submittable(tx);
    if (tx.kind == TxKind::Register) known_senders_.insert(tx.sender);
    pending_ids_.insert(tx.tx_id.hex());
    SubmitReceipt receipt{tx.tx_id, 0};
    pending_.push_back(std::move(tx));
    receipt.pool_size = pending_.size();
    return receipt;
}

std::optional<Block> Chain::mine_pending(const Address& caller) {
    if (caller != genesis_.miner) {
        throw Error(ErrorCode::Authorization, "only the edge server may mine, not " + caller);
    }
    if (pending_.empty()) return std::nullopt;

    const std::size_t take = std::min(pending_.size(), genesis_.max_block_txs);
    Block block;
    block.height = blocks_.back().height + 1;
    block.prev_hash = blocks_.back().block_hash;
    block.miner = genesis_.miner;
    block.txs.assign(std::make_move_iterator(pending_.begin()),
                     std::make_move_iterator(pending_.begin() + static_cast<std::ptrdiff_t>(take)));
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(take));
    for (const auto& tx : block.txs) pending_ids_.erase(tx.tx_id.hex());
    mine_block(block, genesis_.difficulty_bits);

    blocks_.push_back(std::move(block));
    index_block(blocks_.back());
    for (const auto& [id, listener] : listeners_) listener(blocks_.back());
    return blocks_.back();
}

ValidationResult Chain::validate() const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        std::string why = check_block(blocks_[i], i == 0 ? nullptr : &blocks_[i - 1], genesis_);
        if (why.empty() && i == 0) {
            const auto& txs = blocks_[0].txs;
            if (txs.size() != 1 || txs[0].kind != TxKind::Genesis ||
                GenesisConfig::from_json(txs[0].payload_json()).to_json() != genesis_.to_json()) {
                why = "genesis record does not match chain configuration";
            }
        }
        if (!why.empty()) return {false, blocks_[i].height, why};
    }
    return {};
}

void Chain::append_verified(const Block& block) {
    std::string why = check_block(block, &blocks_.back(), genesis_);
    if (!why.empty()) {
        throw Error(ErrorCode::Consistency,
                    "rejecting block " + std::to_string(block.height) + ": " + why);
    }
    blocks_.push_back(block);
    index_block(blocks_.back());
    for (const auto& [id, listener] : listeners_) listener(blocks_.back());
}

std::size_t Chain::add_listener(BlockListener listener) {
    listeners_.emplace_back(next_listener_, std::move(listener));
    return next_listener_++;
}

void Chain::remove_listener(std::size_t id) {
    std::erase_if(listeners_, [id](const auto& l) { return l.first == id; });
}

void Chain::write(std::ostream& out) const {
    for (const auto& b : blocks_) out << b.serialize() << '\n';
}

Chain Chain::read(std::istream& in) {
    std::vector<Block> blocks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) throw Error(ErrorCode::MalformedRecord, "empty chain record at line " + std::to_string(lineno));
        blocks.push_back(Block::from_json(parse_line(line, lineno)));
    }
    if (blocks.empty()) throw Error(ErrorCode::MalformedRecord, "chain file is empty");
    return from_blocks(std::move(blocks));
}

// ----------------------------------------------------------------------- Node

Node::Node(Address address, NodeRole role, Chain chain, std::vector<Peer> whitelist)
    : address_(std::move(address)), role_(role), chain_(std::move(chain)),
      whitelist_(std::move(whitelist)) {
    if (role_ == NodeRole::FullMiner && address_ != chain_.genesis().miner) {
        throw Error(ErrorCode::Authorization,
                    "full miner role is reserved for the genesis miner " + chain_.genesis().miner);
    }
}

bool Node::trusts(const Address& peer) const {
    return std::any_of(whitelist_.begin(), whitelist_.end(),
                       [&](const Peer& p) { return p.address == peer; });
}

std::optional<Block> Node::mine_pending() {
    if (role_ != NodeRole::FullMiner) {
        throw Error(ErrorCode::Authorization, "node " + address_ + " is not the miner");
    }
    return chain_.mine_pending(address_);
}

std::size_t sync_node(Node& light, const Node& full) {
    if (!light.trusts(full.address())) {
        throw Error(ErrorCode::NotWhitelisted,
                    "peer " + full.address() + " is not in the enode whitelist");
    }
    const auto& src = full.chain().blocks();
    auto& dst = light.chain();
    if (src.front().block_hash != dst.blocks().front().block_hash) {
        throw Error(ErrorCode::GenesisMismatch, "peer runs a different genesis block");
    }
    std::size_t transferred = 0;
    for (std::size_t i = dst.length(); i < src.size(); ++i) {
        dst.append_verified(src[i]);
        ++transferred;
    }
    return transferred;
}

}  // namespace edgechain::ledger
