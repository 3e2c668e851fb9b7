#include <set>

#include "edgechain/harness.hpp"

namespace edgechain::harness {

using nlohmann::json;

namespace {

json range_json(const IntRange& r) { return json::array({r.min, r.max}); }

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw Error(ErrorCode::Config, key + ": " + why);
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items()) {
        if (!allowed.contains(k)) bad(where.empty() ? k : where + "." + k, "unknown key");
    }
}

const json& object_at(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) bad(path, "missing");
    const json& v = j.at(key);
    if (!v.is_object()) bad(path, "must be an object");
    return v;
}

template <typename T>
void read(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        bad(path, "has the wrong type");
    }
}

IntRange read_range(const json& v, const std::string& path) {
    if (v.is_number_integer()) return {v.get<std::int64_t>(), v.get<std::int64_t>()};
    if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
        return {v[0].get<std::int64_t>(), v[1].get<std::int64_t>()};
    }
    if (v.is_object() && v.contains("min") && v.contains("max")) {
        return read_range(json::array({v.at("min"), v.at("max")}), path);
    }
    bad(path, "expected [min, max] integers");
}

Coins read_coins(const json& v, const std::string& path) {
    try {
        if (v.is_string()) return Coins::parse(v.get<std::string>());
        if (v.is_number()) return Coins::from_double(v.get<double>());
    } catch (const Error&) {
    }
    bad(path, "expected a coin amount such as \"200.00\"");
}

}  // namespace

json to_json(const ExperimentConfig& c) {
    json levels = json::array();
    for (const auto& l : c.levels) {
        json demand = json::array();
        for (const auto& r : l.demand) demand.push_back(range_json(r));
        levels.push_back({{"demand", demand}, {"lifetime", range_json(l.lifetime)}});
    }
    const auto& cp = c.credit;
    return {
        {"seeds", c.seeds},
        {"timeslots", c.timeslots},
        {"requests_per_slot", range_json(c.requests_per_slot)},
        {"system",
         {{"alpha", c.pricing.alpha},
          {"beta", c.pricing.beta},
          {"capacity", c.capacity.v},
          {"resource_scale", c.resource_scale}}},
        {"scheduler", admission::to_string(c.scheduler)},
        {"beta_values", c.beta_values},
        {"scale_values", c.scale_values},
        {"levels", levels},
        {"level_weights", c.level_weights},
        {"fleet",
         {{"devices_per_level", c.devices_per_level},
          {"greedy_devices", c.greedy_devices},
          {"greedy_burst", c.greedy_burst},
          {"legacy_devices", c.legacy_devices},
          {"compromised_legacy", c.compromised_legacy},
          {"compromise_onset", c.compromise_onset},
          {"legacy_activity_rate", c.legacy_activity_rate},
          {"fleet_file", c.fleet_file},
          {"activity_file", c.activity_file}}},
        {"app_profiles", c.app_rates},
        {"credit",
         {{"initial_credit", cp.initial_credit},
          {"max_credit", cp.max_credit},
          {"eta", cp.eta},
          {"price_threshold_factor", cp.price_threshold_factor},
          {"freq_limit", cp.freq_limit},
          {"freq_window", cp.freq_window},
          {"delta_good", cp.delta_good},
          {"delta_bad", cp.delta_bad},
          {"return_cap_multiple", cp.return_cap_multiple}}},
        {"registration",
         {{"default_priority", c.registration.default_priority},
          {"initial_coins", c.registration.initial_coins.to_string()},
          {"learning_window", c.registration.learning_window}}},
        {"ledger",
         {{"difficulty_bits", c.difficulty_bits},
          {"max_block_txs", c.max_block_txs},
          {"edge_reserve", c.edge_reserve.to_string()}}},
        {"carry_over_slots", c.carry_over_slots},
        {"record_trace", c.record_trace},
    };
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) bad("config", "must be a JSON object");
    reject_unknown(j, "",
                   {"seeds", "timeslots", "requests_per_slot", "system", "scheduler", "beta_values",
                    "scale_values", "levels", "level_weights", "fleet", "app_profiles", "credit",
                    "registration", "ledger", "carry_over_slots", "record_trace"});
    ExperimentConfig c;

    const json& sys = object_at(j, "system", "system");
    reject_unknown(sys, "system", {"alpha", "beta", "capacity", "resource_scale"});
    if (!sys.contains("alpha")) bad("system.alpha", "missing");
    if (!sys.contains("capacity")) bad("system.capacity", "missing");
    read(sys, "alpha", "system.alpha", c.pricing.alpha);
    read(sys, "beta", "system.beta", c.pricing.beta);
    read(sys, "capacity", "system.capacity", c.capacity.v);
    read(sys, "resource_scale", "system.resource_scale", c.resource_scale);

    read(j, "seeds", "seeds", c.seeds);
    read(j, "timeslots", "timeslots", c.timeslots);
    if (j.contains("requests_per_slot")) c.requests_per_slot = read_range(j["requests_per_slot"], "requests_per_slot");
    if (j.contains("scheduler")) {
        std::string s;
        read(j, "scheduler", "scheduler", s);
        try {
            c.scheduler = admission::scheduler_from_string(s);
        } catch (const Error& e) {
            bad("scheduler", e.what());
        }
    }
    read(j, "beta_values", "beta_values", c.beta_values);
    read(j, "scale_values", "scale_values", c.scale_values);
    read(j, "level_weights", "level_weights", c.level_weights);

    if (j.contains("levels")) {
        const json& lv = j["levels"];
        if (!lv.is_array() || lv.size() != 4) bad("levels", "expected 4 level profiles");
        for (std::size_t l = 0; l < 4; ++l) {
            const std::string key = "levels[" + std::to_string(l) + "]";
            if (!lv[l].is_object()) bad(key, "must be an object");
            reject_unknown(lv[l], key, {"demand", "lifetime"});
            if (lv[l].contains("demand")) {
                const json& d = lv[l]["demand"];
                if (!d.is_array() || d.size() != kResourceTypes) bad(key + ".demand", "expected 4 ranges");
                for (std::size_t r = 0; r < kResourceTypes; ++r) {
                    c.levels[l].demand[r] = read_range(d[r], key + ".demand[" + std::to_string(r) + "]");
                }
            }
            if (lv[l].contains("lifetime")) c.levels[l].lifetime = read_range(lv[l]["lifetime"], key + ".lifetime");
        }
    }

    if (j.contains("fleet")) {
        const json& f = object_at(j, "fleet", "fleet");
        reject_unknown(f, "fleet",
                       {"devices_per_level", "greedy_devices", "greedy_burst", "legacy_devices",
                        "compromised_legacy", "compromise_onset", "legacy_activity_rate", "fleet_file",
                        "activity_file"});
        read(f, "devices_per_level", "fleet.devices_per_level", c.devices_per_level);
        read(f, "greedy_devices", "fleet.greedy_devices", c.greedy_devices);
        read(f, "greedy_burst", "fleet.greedy_burst", c.greedy_burst);
        read(f, "legacy_devices", "fleet.legacy_devices", c.legacy_devices);
        read(f, "compromised_legacy", "fleet.compromised_legacy", c.compromised_legacy);
        read(f, "compromise_onset", "fleet.compromise_onset", c.compromise_onset);
        read(f, "legacy_activity_rate", "fleet.legacy_activity_rate", c.legacy_activity_rate);
        read(f, "fleet_file", "fleet.fleet_file", c.fleet_file);
        read(f, "activity_file", "fleet.activity_file", c.activity_file);
    }
    read(j, "app_profiles", "app_profiles", c.app_rates);

    if (j.contains("credit")) {
        const json& cr = object_at(j, "credit", "credit");
        reject_unknown(cr, "credit",
                       {"initial_credit", "max_credit", "eta", "price_threshold_factor", "freq_limit",
                        "freq_window", "delta_good", "delta_bad", "return_cap_multiple"});
        auto& p = c.credit;
        read(cr, "initial_credit", "credit.initial_credit", p.initial_credit);
        read(cr, "max_credit", "credit.max_credit", p.max_credit);
        read(cr, "eta", "credit.eta", p.eta);
        read(cr, "price_threshold_factor", "credit.price_threshold_factor", p.price_threshold_factor);
        read(cr, "freq_limit", "credit.freq_limit", p.freq_limit);
        read(cr, "freq_window", "credit.freq_window", p.freq_window);
        read(cr, "delta_good", "credit.delta_good", p.delta_good);
        read(cr, "delta_bad", "credit.delta_bad", p.delta_bad);
        read(cr, "return_cap_multiple", "credit.return_cap_multiple", p.return_cap_multiple);
    }
    if (j.contains("registration")) {
        const json& r = object_at(j, "registration", "registration");
        reject_unknown(r, "registration", {"default_priority", "initial_coins", "learning_window"});
        read(r, "default_priority", "registration.default_priority", c.registration.default_priority);
        if (r.contains("initial_coins")) {
            c.registration.initial_coins = read_coins(r["initial_coins"], "registration.initial_coins");
        }
        read(r, "learning_window", "registration.learning_window", c.registration.learning_window);
    }
    if (j.contains("ledger")) {
        const json& l = object_at(j, "ledger", "ledger");
        reject_unknown(l, "ledger", {"difficulty_bits", "max_block_txs", "edge_reserve"});
        read(l, "difficulty_bits", "ledger.difficulty_bits", c.difficulty_bits);
        read(l, "max_block_txs", "ledger.max_block_txs", c.max_block_txs);
        if (l.contains("edge_reserve")) c.edge_reserve = read_coins(l["edge_reserve"], "ledger.edge_reserve");
    }
    read(j, "carry_over_slots", "carry_over_slots", c.carry_over_slots);
    read(j, "record_trace", "record_trace", c.record_trace);

    c.validate();
    return c;
}

}  // namespace edgechain::harness
