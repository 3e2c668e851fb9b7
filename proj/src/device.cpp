#include "edgechain/device.hpp"

namespace edgechain {

using nlohmann::json;

namespace {

json range_json(const Range& r) { return json::array({decimal_text(r.min), decimal_text(r.max)}); }

Range range_from(const json& j) {
    if (!j.is_array() || j.size() != 2) {
        throw Error(ErrorCode::MalformedRecord, "range must be [min, max]");
    }
    auto get = [](const json& v) {
        return v.is_string() ? parse_decimal(v.get<std::string>()) : v.get<double>();
    };
    return {get(j[0]), get(j[1])};
}

}  // namespace

ResourceVector DeviceAttributes::max_demand() const {
    return {{cpu_request.max, memory_request.max, storage_request.max, bandwidth_request.max}};
}

std::string DeviceAttributes::problem() const {
    if (account_address.empty()) return "missing account address";
    if (network_port < 0 || network_port > 65535) return "network port out of range";
    const std::pair<const char*, const Range*> ranges[] = {{"cpu_request", &cpu_request},
                                                           {"memory_request", &memory_request},
                                                           {"storage_request", &storage_request},
                                                           {"bandwidth_request", &bandwidth_request}};
    for (const auto& [name, r] : ranges) {
        if (!r->valid()) return std::string(name) + " must satisfy 0 <= min <= max";
    }
    return {};
}

json DeviceAttributes::to_json() const {
    return {{"account_address", account_address},
            {"allowed_destinations", allowed_destinations},
            {"app_profile", app_profile},
            {"bandwidth_request", range_json(bandwidth_request)},
            {"cpu_request", range_json(cpu_request)},
            {"io_data_types", io_data_types},
            {"legacy", legacy},
            {"mac_address", mac_address},
            {"memory_request", range_json(memory_request)},
            {"network_port", network_port},
            {"storage_request", range_json(storage_request)}};
}

DeviceAttributes DeviceAttributes::from_json(const json& j) {
    try {
        DeviceAttributes a;
        a.account_address = j.at("account_address").get<std::string>();
        a.network_port = j.at("network_port").get<int>();
        a.io_data_types = j.value("io_data_types", std::set<std::string>{});
        a.cpu_request = range_from(j.at("cpu_request"));
        a.memory_request = range_from(j.at("memory_request"));
        a.storage_request = range_from(j.at("storage_request"));
        a.bandwidth_request = range_from(j.at("bandwidth_request"));
        a.mac_address = j.value("mac_address", std::string{});
        a.legacy = j.value("legacy", false);
        a.allowed_destinations = j.value("allowed_destinations", std::set<std::string>{});
        a.app_profile = j.value("app_profile", std::string{});
        return a;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, std::string("device attributes: ") + e.what());
    }
}

json DeviceRecord::to_json() const {
    return {{"attributes", attributes.to_json()},
            {"credit", credit},
            {"is_blocked", is_blocked},
            {"is_registered", is_registered},
            {"last_request_id", last_request_id},
            {"priority", priority},
            {"registered_at", registered_at}};
}

DeviceRecord DeviceRecord::from_json(const json& j) {
    DeviceRecord r;
    r.attributes = DeviceAttributes::from_json(j.at("attributes"));
    r.credit = j.at("credit").get<int>();
    r.is_blocked = j.at("is_blocked").get<bool>();
    r.is_registered = j.at("is_registered").get<bool>();
    r.last_request_id = j.at("last_request_id").get<std::string>();
    r.priority = j.at("priority").get<int>();
    r.registered_at = j.at("registered_at").get<Timeslot>();
    return r;
}

}  // namespace edgechain
