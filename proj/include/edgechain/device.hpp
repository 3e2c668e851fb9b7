#pragma once

#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "edgechain/common.hpp"

namespace edgechain {

/// Attributes a device (or the proxy on its behalf) supplies at registration.
struct DeviceAttributes {
    Address account_address;
    int network_port = 0;
    std::set<std::string> io_data_types;
    Range cpu_request;
    Range memory_request;
    Range storage_request;
    Range bandwidth_request;
    std::string mac_address;
    bool legacy = false;
    std::set<std::string> allowed_destinations;
    /// Descriptive application profile; no effect on admission.
    std::string app_profile;

    /// Upper ends of the requested ranges, ordered like ResourceVector.
    ResourceVector max_demand() const;
    /// Empty string when valid, else the reason.
    std::string problem() const;

    nlohmann::json to_json() const;
    static DeviceAttributes from_json(const nlohmann::json& j);
    bool operator==(const DeviceAttributes&) const = default;
};

/// A registered device. Fields after `attributes` are only writable by the
/// edge server.
struct DeviceRecord {
    DeviceAttributes attributes;
    int priority = 4;
    Coins coin_balance;
    int credit = 0;
    bool is_blocked = false;
    bool is_registered = false;
    std::string last_request_id;
    Timeslot registered_at = 0;

    const Address& address() const { return attributes.account_address; }

    /// coin_balance is held by the coin ledger and is not part of the stored form.
    nlohmann::json to_json() const;
    static DeviceRecord from_json(const nlohmann::json& j);
    bool operator==(const DeviceRecord&) const = default;
};

}  // namespace edgechain
