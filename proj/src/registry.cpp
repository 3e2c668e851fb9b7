#include "edgechain/registry.hpp"

#include <charconv>

namespace edgechain::registry {

using nlohmann::json;

const char* to_string(Violation v) {
    switch (v) {
        case Violation::WrongPort: return "WrongPort";
        case Violation::UnknownDestination: return "UnknownDestination";
        case Violation::PriceExceeded: return "PriceExceeded";
        case Violation::FrequencyExceeded: return "FrequencyExceeded";
    }
    return "?";
}

namespace {

template <typename T>
bool parse_int(std::string_view s, T& out) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace

std::optional<ActivityEvent> parse_activity_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                             : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (fields.size() != 5 || fields[0].empty() || fields[2].empty()) return std::nullopt;
    ActivityEvent e;
    e.device = std::string(fields[0]);
    e.destination = std::string(fields[2]);
    if (!parse_int(fields[1], e.port) || !parse_int(fields[3], e.bytes) ||
        !parse_int(fields[4], e.timeslot)) {
        return std::nullopt;
    }
    return e;
}

std::string format_activity_line(const ActivityEvent& e) {
    return e.device + "," + std::to_string(e.port) + "," + e.destination + "," +
           std::to_string(e.bytes) + "," + std::to_string(e.timeslot);
}

std::vector<Violation> match_spec(const DeviceRecord& record, const ActivityEvent& event,
                                  Timeslot learning_window) {
    std::vector<Violation> out;
    if (event.port != record.attributes.network_port) out.push_back(Violation::WrongPort);
    const bool learning = event.timeslot < record.registered_at + learning_window;
    if (!learning && !record.attributes.allowed_destinations.contains(event.destination)) {
        out.push_back(Violation::UnknownDestination);
    }
    return out;
}

Registry::Registry(contracts::Engine& engine, Address proxy, RegistrationPolicy policy)
    : engine_(engine), proxy_(std::move(proxy)), policy_(policy) {
    if (!engine_.registration()) {
        engine_.deploy(contracts::CodeId::RegistrationContract, Authority::EdgeServer,
                       engine_.edge_server());
    }
}

Address Registry::contract_address() const { return engine_.registration()->address(); }

contracts::CallResult Registry::edge_call(const std::string& fn, json args, Timeslot t) {
    return engine_.invoke({engine_.edge_server(), contract_address(), fn, std::move(args),
                           Authority::EdgeServer, t});
}

DeviceRecord Registry::register_device(const DeviceAttributes& attrs, Authority authority,
                                       const Address& caller, std::optional<int> priority,
                                       Timeslot t) {
    if (stored(attrs.account_address)) {
        throw Error(ErrorCode::Duplicate, "device " + attrs.account_address + " already registered");
    }
    if (auto why = attrs.problem(); !why.empty()) throw Error(ErrorCode::MalformedRecord, why);
    if ((authority == Authority::Device && (attrs.legacy || caller != attrs.account_address)) ||
        (authority == Authority::Proxy && !attrs.legacy)) {
        throw Error(ErrorCode::Authorization,
                    attrs.legacy ? "legacy devices register through the proxy"
                                 : "non-legacy devices register themselves");
    }
    auto r = engine_.invoke({caller, contract_address(), "register",
                             {{"attributes", attrs.to_json()}}, authority, t});
    if (!r.ok()) throw Error(ErrorCode::MalformedRecord, r.reason);

    const int level = priority.value_or(policy_.default_priority);
    r = edge_call("activate",
                  {{"address", attrs.account_address}, {"credit", policy_.initial_credit}, {"priority", level}},
                  t);
    if (!r.ok()) throw Error(ErrorCode::MalformedRecord, r.reason);
    engine_.mint(attrs.account_address, policy_.initial_coins, Authority::EdgeServer, t);
    return get(attrs.account_address);
}

void Registry::add_legacy_profile(DeviceAttributes attrs, int priority) {
    attrs.legacy = true;
    legacy_profiles_[attrs.account_address] = {std::move(attrs), priority};
}

ProxyReport Registry::proxy_observe(std::span<const ActivityEvent> events,
                                    const std::function<void(const ObservedActivity&)>& on_event) {
    ProxyReport report;
    for (const auto& ev : events) {
        auto last = last_seen_.find(ev.device);
        if (ev.device.empty() || ev.destination.empty() || ev.port < 0 || ev.port > 65535 ||
            ev.bytes < 0 || (last != last_seen_.end() && ev.timeslot < last->second)) {
            ++report.malformed;
            continue;
        }
        last_seen_[ev.device] = ev.timeslot;

        if (!stored(ev.device)) {
            DeviceAttributes attrs;
            int level = policy_.default_priority;
            if (auto it = legacy_profiles_.find(ev.device); it != legacy_profiles_.end()) {
                attrs = it->second.first;
                level = it->second.second;
            } else {
                attrs.account_address = ev.device;
                attrs.network_port = ev.port;
                attrs.legacy = true;
            }
            register_device(attrs, Authority::Proxy, proxy_, level, ev.timeslot);
            ++report.registrations;
        }

        const DeviceRecord& rec = *stored(ev.device);
        if (rec.is_blocked) {
            ++report.blocked_drops;
            continue;
        }
        ObservedActivity obs{ev, registry::match_spec(rec, ev, policy_.learning_window)};
        const bool learning = ev.timeslot < rec.registered_at + policy_.learning_window;
        if (learning && !rec.attributes.allowed_destinations.contains(ev.destination)) {
            auto dest = rec.attributes.allowed_destinations;
            dest.insert(ev.destination);
            edge_call("set_allowed_destinations", {{"address", ev.device}, {"destinations", dest}},
                      ev.timeslot);
        }
        json violations = json::array();
        for (auto v : obs.violations) violations.push_back(to_string(v));
        engine_.invoke({proxy_, contract_address(), "log_activity",
                        {{"bytes", ev.bytes},
                         {"destination", ev.destination},
                         {"device", ev.device},
                         {"port", ev.port},
                         {"seq", activity_seq_++},
                         {"timeslot", ev.timeslot},
                         {"violations", violations}},
                        Authority::Proxy, ev.timeslot});
        ++report.activity_logs;
        if (on_event) on_event(obs);
        report.observed.push_back(std::move(obs));
    }
    return report;
}

std::vector<Violation> Registry::match_spec(const Address& device, const ActivityEvent& event) const {
    const DeviceRecord* rec = stored(device);
    if (!rec) throw Error(ErrorCode::UnknownDevice, "device " + device + " is not registered");
    return registry::match_spec(*rec, event, policy_.learning_window);
}

DeviceRecord Registry::set_blocked(const Address& device, bool blocked, Authority authority, Timeslot t) {
    if (authority != Authority::EdgeServer) {
        throw Error(ErrorCode::Authorization, "only the edge server may block devices");
    }
    auto r = edge_call("set_blocked", {{"address", device}, {"blocked", blocked}}, t);
    if (!r.ok()) throw Error(ErrorCode::UnknownDevice, r.reason);
    return get(device);
}

DeviceRecord Registry::set_credit(const Address& device, int credit, Authority authority, Timeslot t) {
    if (authority != Authority::EdgeServer) {
        throw Error(ErrorCode::Authorization, "only the edge server may change credit");
    }
    auto r = edge_call("set_credit", {{"address", device}, {"credit", credit}}, t);
    if (!r.ok()) throw Error(ErrorCode::UnknownDevice, r.reason);
    return get(device);
}

const DeviceRecord* Registry::stored(const Address& device) const {
    return engine_.registration()->find(device);
}

std::optional<DeviceRecord> Registry::find(const Address& device) const {
    const DeviceRecord* rec = stored(device);
    if (!rec) return std::nullopt;
    DeviceRecord out = *rec;
    out.coin_balance = engine_.balance(device);
    return out;
}

DeviceRecord Registry::get(const Address& device) const {
    auto rec = find(device);
    if (!rec) throw Error(ErrorCode::UnknownDevice, "device " + device + " is not registered");
    return *rec;
}

std::size_t Registry::size() const { return engine_.registration()->records().size(); }

}  // namespace edgechain::registry
