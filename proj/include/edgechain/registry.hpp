#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgechain/contracts.hpp"
#include "edgechain/device.hpp"

namespace edgechain::registry {

enum class Violation { WrongPort, UnknownDestination, PriceExceeded, FrequencyExceeded };

const char* to_string(Violation v);

/// One observed communication of a device.
struct ActivityEvent {
    Address device;
    int port = 0;
    std::string destination;
    std::int64_t bytes = 0;
    Timeslot timeslot = 0;
};

/// Activity streams are CSV lines "device,port,destination,bytes,timeslot".
/// Returns nullopt for a malformed line.
std::optional<ActivityEvent> parse_activity_line(std::string_view line);
std::string format_activity_line(const ActivityEvent& e);

struct RegistrationPolicy {
    int default_priority = 4;
    int initial_credit = 100;
    Coins initial_coins = Coins::from_cents(20000);
    /// Destinations seen during the first slots after registration are
    /// learned as allowed rather than flagged.
    Timeslot learning_window = 20;
};

struct ObservedActivity {
    ActivityEvent event;
    std::vector<Violation> violations;
};

struct ProxyReport {
    std::size_t registrations = 0;
    std::size_t activity_logs = 0;
    std::size_t blocked_drops = 0;
    std::size_t malformed = 0;
    std::vector<ObservedActivity> observed;
};

/// Port and destination check of one event against a device record.
std::vector<Violation> match_spec(const DeviceRecord& record, const ActivityEvent& event,
                                  Timeslot learning_window);

/// Device registration and legacy-device proxy on top of the registration
/// contract.
class Registry {
public:
    /// Deploys a registration contract if the engine has none.
    Registry(contracts::Engine& engine, Address proxy, RegistrationPolicy policy = {});

    const Address& proxy() const { return proxy_; }
    const RegistrationPolicy& policy() const { return policy_; }
    Address contract_address() const;

    /// Non-legacy devices register themselves (Device authority, caller is
    /// the device); legacy devices go through the proxy. The edge server
    /// then assigns priority and credit and mints the initial coins.
    /// Throws Error(Duplicate), Error(MalformedRecord) or Error(Authorization).
    DeviceRecord register_device(const DeviceAttributes& attrs, Authority authority,
                                 const Address& caller, std::optional<int> priority = {},
                                 Timeslot t = 0);

    /// Attributes the proxy uses when it first sees a known legacy device.
    void add_legacy_profile(DeviceAttributes attrs, int priority = 4);

    /// Processes an ordered activity stream: registers unseen devices, logs
    /// every event of an unblocked device and drops events of blocked ones.
    /// `on_event` runs after each logged event, so a device blocked there
    /// has its later events dropped.
    ProxyReport proxy_observe(std::span<const ActivityEvent> events,
                              const std::function<void(const ObservedActivity&)>& on_event = {});

    /// Throws Error(UnknownDevice).
    std::vector<Violation> match_spec(const Address& device, const ActivityEvent& event) const;

    /// Throws Error(Authorization) for non-edge authority.
    DeviceRecord set_blocked(const Address& device, bool blocked, Authority authority, Timeslot t = 0);
    DeviceRecord set_credit(const Address& device, int credit, Authority authority, Timeslot t = 0);

    /// Record with coin_balance filled in from the coin ledger.
    std::optional<DeviceRecord> find(const Address& device) const;
    /// Throws Error(UnknownDevice).
    DeviceRecord get(const Address& device) const;
    const DeviceRecord* stored(const Address& device) const;
    std::size_t size() const;

private:
    contracts::CallResult edge_call(const std::string& fn, nlohmann::json args, Timeslot t);

    contracts::Engine& engine_;
    Address proxy_;
    RegistrationPolicy policy_;
    std::map<Address, std::pair<DeviceAttributes, int>> legacy_profiles_;
    std::map<Address, Timeslot> last_seen_;
    std::uint64_t activity_seq_ = 0;
};

}  // namespace edgechain::registry
