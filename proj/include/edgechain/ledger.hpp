#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgechain/common.hpp"
#include "edgechain/hash.hpp"

namespace edgechain::ledger {

enum class TxKind {
    Genesis,
    Register,
    ResourceRequest,
    AdmissionDecision,
    CoinTransfer,
    CreditUpdate,
    ActivityLog,
    BlockDevice,
    Deploy,
    Invoke,
};

const char* to_string(TxKind kind);
TxKind tx_kind_from_string(std::string_view s);

/// A signed ledger entry. The payload is canonical JSON text (sorted keys,
/// no floating point numbers) so its bytes are stable under reload.
struct Transaction {
    Hash256 tx_id;
    Address sender;
    TxKind kind = TxKind::Invoke;
    std::string payload;
    Timeslot timestamp = 0;
    Hash256 signature;

    /// Stamps the simulated signature and the id.
    static Transaction make(Address sender, TxKind kind, const nlohmann::json& payload,
                            Timeslot timestamp);

    /// hash(sender || payload); stands in for a real key signature.
    Hash256 expected_signature() const;
    Hash256 compute_id() const;
    bool verifies() const;

    nlohmann::json payload_json() const { return nlohmann::json::parse(payload); }
    nlohmann::json to_json() const;
    static Transaction from_json(const nlohmann::json& j);
};

struct GenesisConfig {
    int difficulty_bits = 12;
    Timeslot timestamp = 0;
    std::string chain_id = "edgechain";
    /// The single authorized miner, i.e. the edge server.
    Address miner = derive_address("edge-server");
    std::vector<std::pair<Address, Coins>> initial_accounts;
    std::size_t max_block_txs = 208;

    /// Throws Error(Config).
    void validate() const;
    nlohmann::json to_json() const;
    static GenesisConfig from_json(const nlohmann::json& j);
};

struct Block {
    std::uint64_t height = 0;
    Hash256 prev_hash;
    std::vector<Transaction> txs;
    std::uint64_t nonce = 0;
    Address miner;
    Hash256 block_hash;

    /// sha256 over the concatenated raw tx ids.
    Hash256 tx_root() const;
    /// hash(hash(height || prev_hash || tx_root || miner) || nonce), integers big-endian.
    Hash256 compute_hash() const;

    nlohmann::json to_json() const;
    static Block from_json(const nlohmann::json& j);
    /// One canonical line, no trailing newline.
    std::string serialize() const;
};

/// Searches nonces upward from 0 until the header hash has `difficulty_bits`
/// leading zero bits. Sets block.nonce and block.block_hash.
void mine_block(Block& block, int difficulty_bits);

struct SubmitReceipt {
    Hash256 tx_id;
    std::size_t pool_size = 0;
};

struct ValidationResult {
    bool valid = true;
    std::optional<std::uint64_t> first_bad_height;
    std::string reason;
};

/// Append-only hash-chained ledger with a pending pool. Only the genesis
/// miner may append blocks.
class Chain {
public:
    using BlockListener = std::function<void(const Block&)>;

    /// Throws Error(Config) on an invalid configuration.
    static Chain init_genesis(const GenesisConfig& config);
    /// Wraps loaded blocks; the genesis configuration is recovered from
    /// block 0. Does not validate hashes, call validate() for that.
    static Chain from_blocks(std::vector<Block> blocks);

    const GenesisConfig& genesis() const { return genesis_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t length() const { return blocks_.size(); }
    const Block& tip() const { return blocks_.back(); }
    std::size_t total_transactions() const;

    /// Throws Error(UnknownSender) or Error(DuplicateTransaction); the pool is
    /// unchanged on error.
    void check_submittable(const Transaction& tx) const;
    SubmitReceipt submit(Transaction tx);
    const std::vector<Transaction>& pending() const { return pending_; }
    bool is_known_sender(const Address& a) const { return known_senders_.contains(a); }

    /// Packs up to max_block_txs pending transactions into a new block.
    /// Returns nullopt without touching the chain when the pool is empty.
    /// Throws Error(Authorization) unless caller is the genesis miner.
    std::optional<Block> mine_pending(const Address& caller);

    ValidationResult validate() const;

    /// Appends a block received from a peer after checking linkage and work.
    void append_verified(const Block& block);

    std::size_t add_listener(BlockListener listener);
    void remove_listener(std::size_t id);

    void write(std::ostream& out) const;
    /// Reads one block per line. Throws Error(MalformedRecord) on bad input.
    static Chain read(std::istream& in);

private:
    explicit Chain(GenesisConfig config) : genesis_(std::move(config)) {}
    void index_block(const Block& block);

    GenesisConfig genesis_;
    std::vector<Block> blocks_;
    std::vector<Transaction> pending_;
    std::unordered_set<std::string> pending_ids_;
    std::unordered_set<std::string> confirmed_ids_;
    std::unordered_set<Address> known_senders_;
    std::vector<std::pair<std::size_t, BlockListener>> listeners_;
    std::size_t next_listener_ = 0;
};

/// Verifies a block against its predecessor: linkage, tx ids, cap, work.
/// Returns an empty string when valid, else a reason.
std::string check_block(const Block& block, const Block* prev, const GenesisConfig& genesis);

enum class NodeRole { FullMiner, LightClient, Proxy };

struct Peer {
    Address address;
    std::string endpoint;
};

/// A chain replica plus its identity. Nodes run with discovery disabled and
/// only exchange blocks with peers on their enode whitelist.
class Node {
public:
    /// Throws Error(Authorization) if role is FullMiner but address is not
    /// the genesis miner.
    Node(Address address, NodeRole role, Chain chain, std::vector<Peer> whitelist = {});

    const Address& address() const { return address_; }
    NodeRole role() const { return role_; }
    Chain& chain() { return chain_; }
    const Chain& chain() const { return chain_; }
    const std::vector<Peer>& whitelist() const { return whitelist_; }
    bool trusts(const Address& peer) const;
    void add_peer(Peer peer) { whitelist_.push_back(std::move(peer)); }

    /// Throws Error(Authorization) for non-miner roles.
    std::optional<Block> mine_pending();

private:
    Address address_;
    NodeRole role_;
    Chain chain_;
    std::vector<Peer> whitelist_;
};

/// Copies the blocks `light` is missing from `full`. Returns the number of
/// blocks transferred. Throws Error(NotWhitelisted) or Error(GenesisMismatch).
std::size_t sync_node(Node& light, const Node& full);

}  // namespace edgechain::ledger
