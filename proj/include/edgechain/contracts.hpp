#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "edgechain/common.hpp"
#include "edgechain/device.hpp"
#include "edgechain/ledger.hpp"

namespace edgechain::contracts {

enum class CodeId { RegistrationContract, AllocationContract };

const char* to_string(CodeId c);
CodeId code_id_from_string(std::string_view s);

struct Event {
    Address contract;
    std::string name;
    nlohmann::json payload;
    std::uint64_t block_height = 0;
};

struct EventFilter {
    std::optional<Address> contract;
    std::optional<std::string> name;

    bool matches(const Event& e) const;
};

enum class CallStatus { Ok, Rejected };

/// Outcome of a contract call. A Rejected status is a policy decision of
/// the contract and is recorded on chain like any other result.
struct CallResult {
    CallStatus status = CallStatus::Ok;
    std::string reason;
    nlohmann::json value;
    std::vector<Event> events;
    Hash256 tx_id;

    bool ok() const { return status == CallStatus::Ok; }
};

struct ContractCall {
    Address caller;
    Address contract;
    std::string function;
    nlohmann::json args = nlohmann::json::object();
    Authority authority = Authority::Device;
    Timeslot timeslot = 0;
};

struct FunctionSpec {
    std::string_view name;
    ledger::TxKind kind;
    bool edge_only;
    bool device_allowed;
    bool proxy_allowed;

    bool permits(Authority a) const;
};

/// A validated call whose state transition has not been applied yet.
struct Prepared {
    CallResult result;
    std::function<void()> commit;
};

class Engine;

class Contract {
public:
    Contract(Address address, CodeId code) : address_(std::move(address)), code_(code) {}
    virtual ~Contract() = default;
    Contract(const Contract&) = delete;
    Contract& operator=(const Contract&) = delete;

    const Address& address() const { return address_; }
    CodeId code_id() const { return code_; }

    virtual std::span<const FunctionSpec> functions() const = 0;
    const FunctionSpec* find_function(std::string_view name) const;

    /// Validates the call against current storage. Must not mutate state;
    /// all mutation lives in the returned commit.
    virtual Prepared prepare(const ContractCall& call, Engine& engine) = 0;
    virtual nlohmann::json storage() const = 0;

private:
    Address address_;
    CodeId code_;
};

/// Device registry storage. Starred attributes (priority, credit, flags,
/// last request id) are only writable through edge-only functions.
class RegistrationContract final : public Contract {
public:
    using Contract::Contract;

    std::span<const FunctionSpec> functions() const override;
    Prepared prepare(const ContractCall& call, Engine& engine) override;
    nlohmann::json storage() const override;

    const DeviceRecord* find(const Address& device) const;
    const std::map<Address, DeviceRecord>& records() const { return records_; }

    void set_last_request(const Address& device, const std::string& request_id);

private:
    std::map<Address, DeviceRecord> records_;
};

/// Request and decision log of the edge resource allocation.
class AllocationContract final : public Contract {
public:
    using Contract::Contract;

    struct Entry {
        Address device;
        std::array<std::string, kResourceTypes> demand;
        int priority = 0;
        Timeslot lifetime = 0;
        Timeslot arrival = 0;
        std::string status = "pending";
        std::string price;
        std::string reason;
        std::string refund;
    };

    std::span<const FunctionSpec> functions() const override;
    Prepared prepare(const ContractCall& call, Engine& engine) override;
    nlohmann::json storage() const override;

    const Entry* find(const std::string& request_id) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, Entry> entries_;
};

/// Sequential, deterministic contract executor bound to a chain. Every
/// committed call and coin transfer becomes a transaction; events are
/// released to watchers once their transaction is mined.
class Engine {
public:
    /// Live engine: records everything on `chain`, whose miner must be the
    /// edge server.
    Engine(ledger::Chain& chain, Address edge_server);
    /// Detached engine used to fold an existing chain.
    explicit Engine(Address edge_server);
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const Address& edge_server() const { return edge_server_; }

    /// Throws Error(Authorization) unless authority is EdgeServer and the
    /// caller is the edge server.
    Address deploy(CodeId code, Authority authority, const Address& caller, Timeslot t = 0);
    /// Throws Error(UnknownContract), Error(UnknownFunction) or
    /// Error(Authorization). Contract rule violations come back as Rejected.
    CallResult invoke(const ContractCall& call);

    CallResult mint(const Address& account, Coins amount, Authority authority, Timeslot t = 0);
    CallResult charge(const Address& account, Coins amount, Authority authority, Timeslot t = 0);
    CallResult refund(const Address& account, Coins amount, Authority authority, Timeslot t = 0);
    Coins balance(const Address& account) const;
    Coins total_coins() const;
    Coins total_minted() const { return minted_; }
    const std::map<Address, Coins>& balances() const { return balances_; }

    Contract* contract(const Address& address);
    const Contract* contract(const Address& address) const;
    /// Latest deployment of `code`, or nullptr.
    RegistrationContract* registration();
    const RegistrationContract* registration() const;
    AllocationContract* allocation();
    const AllocationContract* allocation() const;
    const std::vector<Address>& retired() const { return retired_; }

    using Watcher = std::function<void(const Event&)>;
    std::size_t watch(EventFilter filter, Watcher watcher);
    void unwatch(std::size_t id);
    /// Committed events matching `filter`, in block order.
    std::vector<Event> events(const EventFilter& filter = {}) const;
    void write_events(std::ostream& out) const;

    /// Applies one committed transaction (detached engines only).
    /// Throws Error(Consistency) if re-execution disagrees with the record.
    void apply(const ledger::Transaction& tx, std::uint64_t block_height);
    /// Rebuilds engine state by folding every transaction of `chain`.
    static std::unique_ptr<Engine> replay(const ledger::Chain& chain);

    /// Balances, contracts and their storage; equal snapshots mean equal state.
    nlohmann::json snapshot() const;

private:
    Contract& install(CodeId code, const Address& address);
    Address next_contract_address() const;
    CallResult coin_op(std::string_view op, const Address& account, Coins amount,
                       Authority authority, Timeslot t);
    Prepared prepare_coin_op(std::string_view op, const Address& account, Coins amount);
    void record(ledger::TxKind kind, const Address& sender, nlohmann::json payload,
                Timeslot t, CallResult& result);
    void on_block(const ledger::Block& block);
    void publish(Event event);

    ledger::Chain* chain_ = nullptr;
    std::size_t listener_id_ = 0;
    Address edge_server_;
    std::map<Address, std::unique_ptr<Contract>> contracts_;
    std::map<CodeId, Address> active_;
    std::vector<Address> retired_;
    std::size_t deployments_ = 0;
    std::map<Address, Coins> balances_;
    Coins minted_;
    std::map<Address, std::uint64_t> nonces_;
    std::unordered_map<std::string, std::vector<Event>> unconfirmed_events_;
    std::vector<Event> log_;
    std::vector<std::pair<std::size_t, std::pair<EventFilter, Watcher>>> watchers_;
    std::size_t next_watcher_ = 0;
};

}  // namespace edgechain::contracts
