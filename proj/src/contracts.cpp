#include "edgechain/contracts.hpp"

#include <algorithm>
#include <ostream>

namespace edgechain::contracts {

using ledger::TxKind;
using nlohmann::json;

namespace {

Prepared rejected(std::string reason) {
    Prepared p;
    p.result.status = CallStatus::Rejected;
    p.result.reason = std::move(reason);
    p.commit = [] {};
    return p;
}

Prepared ok(std::function<void()> commit, std::vector<Event> events = {}, json value = {}) {
    Prepared p;
    p.result.events = std::move(events);
    p.result.value = std::move(value);
    p.commit = std::move(commit);
    return p;
}

const char* status_text(CallStatus s) { return s == CallStatus::Ok ? "ok" : "rejected"; }

// name, kind, edge_only, device_allowed, proxy_allowed
constexpr FunctionSpec kRegistrationFns[] = {
    {"register", TxKind::Register, false, true, true},
    {"activate", TxKind::Invoke, true, false, false},
    {"set_priority", TxKind::Invoke, true, false, false},
    {"set_credit", TxKind::CreditUpdate, true, false, false},
    {"set_blocked", TxKind::BlockDevice, true, false, false},
    {"set_allowed_destinations", TxKind::Invoke, true, false, false},
    {"log_activity", TxKind::ActivityLog, false, false, true},
};

constexpr FunctionSpec kAllocationFns[] = {
    {"submit_request", TxKind::ResourceRequest, false, true, true},
    {"decide", TxKind::AdmissionDecision, true, false, false},
    {"release", TxKind::Invoke, true, false, false},
};

}  // namespace

const char* to_string(CodeId c) {
    return c == CodeId::RegistrationContract ? "RegistrationContract" : "AllocationContract";
}

CodeId code_id_from_string(std::string_view s) {
    if (s == "RegistrationContract") return CodeId::RegistrationContract;
    if (s == "AllocationContract") return CodeId::AllocationContract;
    throw Error(ErrorCode::MalformedRecord, "unknown contract code '" + std::string(s) + "'");
}

bool EventFilter::matches(const Event& e) const {
    return (!contract || *contract == e.contract) && (!name || *name == e.name);
}

bool FunctionSpec::permits(Authority a) const {
    switch (a) {
        case Authority::EdgeServer: return true;
        case Authority::Device: return !edge_only && device_allowed;
        case Authority::Proxy: return !edge_only && proxy_allowed;
    }
    return false;
}

const FunctionSpec* Contract::find_function(std::string_view name) const {
    for (const auto& f : functions()) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

// ------------------------------------------------------- RegistrationContract

std::span<const FunctionSpec> RegistrationContract::functions() const { return kRegistrationFns; }

const DeviceRecord* RegistrationContract::find(const Address& device) const {
    auto it = records_.find(device);
    return it == records_.end() ? nullptr : &it->second;
}

void RegistrationContract::set_last_request(const Address& device, const std::string& request_id) {
    records_.at(device).last_request_id = request_id;
}

json RegistrationContract::storage() const {
    json out = json::object();
    for (const auto& [addr, rec] : records_) out[addr] = rec.to_json();
    return out;
}

Prepared RegistrationContract::prepare(const ContractCall& call, Engine&) {
    const auto& args = call.args;
    const std::string& fn = call.function;

    if (fn == "register") {
        DeviceAttributes attrs;
        try {
            attrs = DeviceAttributes::from_json(args.at("attributes"));
        } catch (const Error& e) {
            return rejected(e.what());
        }
        if (auto why = attrs.problem(); !why.empty()) return rejected("malformed attributes: " + why);
        if (records_.contains(attrs.account_address)) return rejected("device already registered");
        if (call.authority == Authority::Device) {
            if (call.caller != attrs.account_address) return rejected("devices may only register themselves");
            if (attrs.legacy) return rejected("legacy devices register through the proxy");
        }
        if (call.authority == Authority::Proxy && !attrs.legacy) {
            return rejected("the proxy only registers legacy devices");
        }
        DeviceRecord rec;
        rec.attributes = attrs;
        rec.registered_at = call.timeslot;
        Event ev{address(), "RegistrationEvent",
                 {{"address", attrs.account_address}, {"legacy", attrs.legacy}}, 0};
        return ok([this, rec] { records_.emplace(rec.address(), rec); }, {ev});
    }

    if (fn == "log_activity") {
        const Address device = args.at("device").get<std::string>();
        const auto* rec = find(device);
        if (!rec) return rejected("unregistered device");
        std::vector<Event> events;
        if (!args.at("violations").empty()) {
            events.push_back({address(), "ViolationDetected",
                              {{"device", device}, {"violations", args.at("violations")}}, 0});
        }
        return ok([] {}, std::move(events));
    }

    // Everything below is an edge-only update of an existing record.
    const Address device = args.at("address").get<std::string>();
    if (!find(device)) return rejected("unregistered device");

    if (fn == "activate") {
        const int priority = args.at("priority").get<int>();
        const int credit = args.at("credit").get<int>();
        if (priority < 1 || priority > 4) return rejected("priority must be within 1..4");
        if (credit < 0) return rejected("credit must be nonnegative");
        return ok([this, device, priority, credit] {
            auto& r = records_.at(device);
            r.priority = priority;
            r.credit = credit;
            r.is_registered = true;
        }, {{address(), "DeviceActivated", {{"address", device}, {"priority", priority}}, 0}});
    }
    if (fn == "set_priority") {
        const int priority = args.at("priority").get<int>();
        if (priority < 1 || priority > 4) return rejected("priority must be within 1..4");
        return ok([this, device, priority] { records_.at(device).priority = priority; });
    }
    if (fn == "set_credit") {
        const int credit = args.at("credit").get<int>();
        if (credit < 0) return rejected("credit must be nonnegative");
        return ok([this, device, credit] { records_.at(device).credit = credit; },
                  {{address(), "CreditUpdated", {{"address", device}, {"credit", credit}}, 0}});
    }
    if (fn == "set_blocked") {
        const bool blocked = args.at("blocked").get<bool>();
        return ok([this, device, blocked] { records_.at(device).is_blocked = blocked; },
                  {{address(), blocked ? "DeviceBlocked" : "DeviceUnblocked", {{"address", device}}, 0}});
    }
    if (fn == "set_allowed_destinations") {
        auto dest = args.at("destinations").get<std::set<std::string>>();
        return ok([this, device, dest] { records_.at(device).attributes.allowed_destinations = dest; });
    }
    return rejected("unhandled function " + fn);
}

// --------------------------------------------------------- AllocationContract

std::span<const FunctionSpec> AllocationContract::functions() const { return kAllocationFns; }

const AllocationContract::Entry* AllocationContract::find(const std::string& request_id) const {
    auto it = entries_.find(request_id);
    return it == entries_.end() ? nullptr : &it->second;
}

json AllocationContract::storage() const {
    json out = json::object();
    for (const auto& [id, e] : entries_) {
        out[id] = {{"arrival", e.arrival},     {"demand", e.demand}, {"device", e.device},
                   {"lifetime", e.lifetime},   {"price", e.price},   {"priority", e.priority},
                   {"reason", e.reason},       {"refund", e.refund}, {"status", e.status}};
    }
    return out;
}

Prepared AllocationContract::prepare(const ContractCall& call, Engine& engine) {
    const auto& args = call.args;
    const std::string id = args.at("request_id").get<std::string>();

    if (call.function == "submit_request") {
        Entry e;
        e.device = args.at("device").get<std::string>();
        e.demand = args.at("demand").get<std::array<std::string, kResourceTypes>>();
        e.priority = args.at("priority").get<int>();
        e.lifetime = args.at("lifetime").get<Timeslot>();
        e.arrival = args.at("arrival").get<Timeslot>();
        if (call.authority == Authority::Device && call.caller != e.device) {
            return rejected("devices may only request for themselves");
        }
        auto* reg = engine.registration();
        if (!reg || !reg->find(e.device)) return rejected("unregistered device");
        if (entries_.contains(id)) return rejected("duplicate request id");
        if (e.lifetime < 1) return rejected("lifetime must be at least 1");
        for (const auto& d : e.demand) {
            try {
                if (parse_decimal(d) < 0) return rejected("negative demand");
            } catch (const Error& err) {
                return rejected(err.what());
            }
        }
        return ok([this, reg, id, e] {
            entries_.emplace(id, e);
            reg->set_last_request(e.device, id);
        });
    }

    auto it = entries_.find(id);
    if (it == entries_.end()) return rejected("unknown request");
    const Entry& entry = it->second;

    if (call.function == "decide") {
        if (entry.status != "pending") return rejected("request already decided");
        const std::string verdict = args.at("verdict").get<std::string>();
        if (verdict != "Accept" && verdict != "Deny") return rejected("bad verdict");
        const std::string price = args.at("price").get<std::string>();
        const std::string reason = args.at("reason").get<std::string>();
        const bool accepted = verdict == "Accept";
        Event ev{address(), accepted ? "AllocationAccepted" : "AllocationDenied",
                 {{"device", entry.device}, {"price", price}, {"reason", reason}, {"request_id", id}},
                 0};
        return ok([this, id, accepted, price, reason] {
            auto& e = entries_.at(id);
            e.status = accepted ? "accepted" : "denied";
            e.price = price;
            e.reason = reason;
        }, {ev});
    }
    if (call.function == "release") {
        if (entry.status != "accepted") return rejected("request holds no allocation");
        const std::string refund = args.at("refund").get<std::string>();
        Event ev{address(), "AllocationReleased",
                 {{"device", entry.device}, {"refund", refund}, {"request_id", id}}, 0};
        return ok([this, id, refund] {
            auto& e = entries_.at(id);
            e.status = "released";
            e.refund = refund;
        }, {ev});
    }
    return rejected("unhandled function " + call.function);
}

// --------------------------------------------------------------------- Engine

Engine::Engine(ledger::Chain& chain, Address edge_server)
    : chain_(&chain), edge_server_(std::move(edge_server)) {
    if (chain.genesis().miner != edge_server_) {
        throw Error(ErrorCode::Config, "edge server must be the chain's miner");
    }
    for (const auto& block : chain.blocks()) {
        for (const auto& tx : block.txs) apply(tx, block.height);
    }
    listener_id_ = chain.add_listener([this](const ledger::Block& b) { on_block(b); });
}

Engine::Engine(Address edge_server) : edge_server_(std::move(edge_server)) {}

Engine::~Engine() {
    if (chain_) chain_->remove_listener(listener_id_);
}

Address Engine::next_contract_address() const {
    return derive_address(edge_server_ + "/contract/" + std::to_string(deployments_));
}

Contract& Engine::install(CodeId code, const Address& address) {
    if (auto it = active_.find(code); it != active_.end()) {
        // A redeployment starts from empty storage; the old instance is
        // unreachable from now on.
        retired_.push_back(it->second);
        contracts_.erase(it->second);
    }
    std::unique_ptr<Contract> c;
    if (code == CodeId::RegistrationContract) {
        c = std::make_unique<RegistrationContract>(address, code);
    } else {
        c = std::make_unique<AllocationContract>(address, code);
    }
    active_[code] = address;
    ++deployments_;
    return *contracts_.emplace(address, std::move(c)).first->second;
}

Address Engine::deploy(CodeId code, Authority authority, const Address& caller, Timeslot t) {
    if (authority != Authority::EdgeServer || caller != edge_server_) {
        throw Error(ErrorCode::Authorization, "only the edge server deploys contracts");
    }
    const Address address = next_contract_address();
    CallResult r;
    record(TxKind::Deploy, caller, {{"address", address}, {"code_id", to_string(code)}}, t, r);
    install(code, address);
    return address;
}

Contract* Engine::contract(const Address& address) {
    auto it = contracts_.find(address);
    return it == contracts_.end() ? nullptr : it->second.get();
}

const Contract* Engine::contract(const Address& address) const {
    auto it = contracts_.find(address);
    return it == contracts_.end() ? nullptr : it->second.get();
}

RegistrationContract* Engine::registration() {
    auto it = active_.find(CodeId::RegistrationContract);
    return it == active_.end() ? nullptr : static_cast<RegistrationContract*>(contract(it->second));
}

const RegistrationContract* Engine::registration() const {
    return const_cast<Engine*>(this)->registration();
}

AllocationContract* Engine::allocation() {
    auto it = active_.find(CodeId::AllocationContract);
    return it == active_.end() ? nullptr : static_cast<AllocationContract*>(contract(it->second));
}

const AllocationContract* Engine::allocation() const {
    return const_cast<Engine*>(this)->allocation();
}

void Engine::record(TxKind kind, const Address& sender, json payload, Timeslot t,
                    CallResult& result) {
    if (!chain_) return;
    // The per-sender nonce keeps two otherwise identical records distinct.
    std::uint64_t& nonce = nonces_[sender];
    payload["nonce"] = nonce;
    auto tx = ledger::Transaction::make(sender, kind, payload, t);
    const Hash256 id = tx.tx_id;
    chain_->submit(std::move(tx));  // throws before any state is touched
    ++nonce;
    result.tx_id = id;
    if (!result.events.empty()) unconfirmed_events_[id.hex()] = result.events;
}

CallResult Engine::invoke(const ContractCall& call) {
    Contract* c = contract(call.contract);
    if (!c) {
        const bool old = std::find(retired_.begin(), retired_.end(), call.contract) != retired_.end();
        throw Error(ErrorCode::UnknownContract,
                    (old ? "contract was redeployed: " : "no contract at ") + call.contract);
    }
    const FunctionSpec* fn = c->find_function(call.function);
    if (!fn) throw Error(ErrorCode::UnknownFunction, "no function '" + call.function + "'");
    if (!fn->permits(call.authority) ||
        (call.authority == Authority::EdgeServer && call.caller != edge_server_)) {
        throw Error(ErrorCode::Authorization, std::string(to_string(call.authority)) +
                                                  " may not call " + call.function);
    }
    Prepared p;
    try {
        p = c->prepare(call, *this);
    } catch (const json::exception& e) {
        p = rejected(std::string("malformed arguments: ") + e.what());
    }
    json payload = {{"args", call.args},
                    {"authority", to_string(call.authority)},
                    {"contract", call.contract},
                    {"function", call.function},
                    {"reason", p.result.reason},
                    {"status", status_text(p.result.status)}};
    record(fn->kind, call.caller, std::move(payload), call.timeslot, p.result);
    if (p.result.ok()) p.commit();
    return p.result;
}

Prepared Engine::prepare_coin_op(std::string_view op, const Address& account, Coins amount) {
    if (amount < Coins{}) return rejected("negative amount");
    if (op == "mint") {
        return ok([this, account, amount] {
            balances_[account] += amount;
            minted_ += amount;
        }, {}, {{"balance", (balance(account) + amount).to_string()}});
    }
    if (op == "charge") {
        if (balance(account) < amount) return rejected("insufficient balance");
        return ok([this, account, amount] {
            balances_[account] -= amount;
            balances_[edge_server_] += amount;
        }, {}, {{"balance", (balance(account) - amount).to_string()}});
    }
    if (op == "refund") {
        if (balance(edge_server_) < amount) return rejected("insufficient revenue");
        return ok([this, account, amount] {
            balances_[edge_server_] -= amount;
            balances_[account] += amount;
        }, {}, {{"balance", (balance(account) + amount).to_string()}});
    }
    return rejected("unknown coin operation");
}

CallResult Engine::coin_op(std::string_view op, const Address& account, Coins amount,
                           Authority authority, Timeslot t) {
    if (authority != Authority::EdgeServer) {
        throw Error(ErrorCode::Authorization, "coin operations are reserved to the edge server");
    }
    Prepared p = prepare_coin_op(op, account, amount);
    json payload = {{"address", account},
                    {"amount", amount.to_string()},
                    {"op", op},
                    {"reason", p.result.reason},
                    {"status", status_text(p.result.status)}};
    record(TxKind::CoinTransfer, edge_server_, std::move(payload), t, p.result);
    if (p.result.ok()) p.commit();
    return p.result;
}

CallResult Engine::mint(const Address& a, Coins amount, Authority auth, Timeslot t) {
    return coin_op("mint", a, amount, auth, t);
}
CallResult Engine::charge(const Address& a, Coins amount, Authority auth, Timeslot t) {
    return coin_op("charge", a, amount, auth, t);
}
CallResult Engine::refund(const Address& a, Coins amount, Authority auth, Timeslot t) {
    return coin_op("refund", a, amount, auth, t);
}

Coins Engine::balance(const Address& account) const {
    auto it = balances_.find(account);
    return it == balances_.end() ? Coins{} : it->second;
}

Coins Engine::total_coins() const {
    Coins sum;
    for (const auto& [a, c] : balances_) sum += c;
    return sum;
}

std::size_t Engine::watch(EventFilter filter, Watcher watcher) {
    watchers_.push_back({next_watcher_, {std::move(filter), std::move(watcher)}});
    return next_watcher_++;
}

void Engine::unwatch(std::size_t id) {
    std::erase_if(watchers_, [id](const auto& w) { return w.first == id; });
}

std::vector<Event> Engine::events(const EventFilter& filter) const {
    std::vector<Event> out;
    for (const auto& e : log_) {
        if (filter.matches(e)) out.push_back(e);
    }
    return out;
}

void Engine::write_events(std::ostream& out) const {
    for (const auto& e : log_) {
        out << json{{"contract", e.contract}, {"height", e.block_height}, {"name", e.name},
                    {"payload", e.payload}}.dump()
            << '\n';
    }
}

void Engine::publish(Event event) {
    log_.push_back(std::move(event));
    const Event& e = log_.back();
    for (const auto& [id, w] : watchers_) {
        if (w.first.matches(e)) w.second(e);
    }
}

void Engine::on_block(const ledger::Block& block) {
    for (const auto& tx : block.txs) {
        auto it = unconfirmed_events_.find(tx.tx_id.hex());
        if (it == unconfirmed_events_.end()) continue;
        for (auto& ev : it->second) {
            ev.block_height = block.height;
            publish(std::move(ev));
        }
        unconfirmed_events_.erase(it);
    }
}

void Engine::apply(const ledger::Transaction& tx, std::uint64_t block_height) {
    auto mismatch = [&](const std::string& what) {
        return Error(ErrorCode::Consistency, "replay of " + tx.tx_id.hex() + ": " + what);
    };
    const json payload = tx.payload_json();
    try {
        if (tx.kind != TxKind::Genesis) {
            std::uint64_t& nonce = nonces_[tx.sender];
            if (payload.at("nonce").get<std::uint64_t>() != nonce) throw mismatch("unexpected sender nonce");
            ++nonce;
        }
        switch (tx.kind) {
            case TxKind::Genesis: {
                auto g = ledger::GenesisConfig::from_json(payload);
                if (g.miner != edge_server_) throw mismatch("genesis miner is not the edge server");
                for (const auto& [addr, coins] : g.initial_accounts) {
                    balances_[addr] += coins;
                    minted_ += coins;
                }
                return;
            }
            case TxKind::Deploy: {
                const Address addr = payload.at("address").get<std::string>();
                if (addr != next_contract_address()) throw mismatch("unexpected contract address");
                install(code_id_from_string(payload.at("code_id").get<std::string>()), addr);
                return;
            }
            case TxKind::CoinTransfer: {
                Prepared p = prepare_coin_op(payload.at("op").get<std::string>(),
                                             payload.at("address").get<std::string>(),
                                             Coins::parse(payload.at("amount").get<std::string>()));
                if (payload.at("status").get<std::string>() != status_text(p.result.status)) {
                    throw mismatch("coin transfer outcome differs");
                }
                p.commit();
                return;
            }
            default: break;
        }
        ContractCall call;
        call.caller = tx.sender;
        call.contract = payload.at("contract").get<std::string>();
        call.function = payload.at("function").get<std::string>();
        call.args = payload.at("args");
        call.authority = authority_from_string(payload.at("authority").get<std::string>());
        call.timeslot = tx.timestamp;
        Contract* c = contract(call.contract);
        if (!c) throw mismatch("call to unknown contract");
        const FunctionSpec* fn = c->find_function(call.function);
        if (!fn || fn->kind != tx.kind || !fn->permits(call.authority)) {
            throw mismatch("call does not match the contract interface");
        }
        Prepared p = c->prepare(call, *this);
        if (payload.at("status").get<std::string>() != status_text(p.result.status) ||
            payload.at("reason").get<std::string>() != p.result.reason) {
            throw mismatch("call outcome differs from the recorded one");
        }
        p.commit();
        for (auto& ev : p.result.events) {
            ev.block_height = block_height;
            publish(std::move(ev));
        }
    } catch (const json::exception& e) {
        throw mismatch(std::string("malformed payload: ") + e.what());
    }
}

std::unique_ptr<Engine> Engine::replay(const ledger::Chain& chain) {
    auto engine = std::make_unique<Engine>(chain.genesis().miner);
    for (const auto& block : chain.blocks()) {
        for (const auto& tx : block.txs) engine->apply(tx, block.height);
    }
    return engine;
}

json Engine::snapshot() const {
    json balances = json::object();
    for (const auto& [a, c] : balances_) balances[a] = c.to_string();
    json contracts = json::object();
    for (const auto& [a, c] : contracts_) {
        contracts[a] = {{"code_id", to_string(c->code_id())}, {"storage", c->storage()}};
    }
    return {{"balances", balances},
            {"contracts", contracts},
            {"minted", minted_.to_string()},
            {"nonces", nonces_},
            {"retired", retired_}};
}

}  // namespace edgechain::contracts
